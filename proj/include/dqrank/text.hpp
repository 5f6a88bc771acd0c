#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dqrank {

/// Lowercases ASCII letters and splits on every non-alphanumeric byte.
std::vector<std::string> tokenize(std::string_view text);

std::string trim(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace dqrank
