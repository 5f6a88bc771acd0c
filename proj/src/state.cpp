#include "dqrank/state.hpp"

#include <set>

#include "dqrank/error.hpp"

namespace dqrank {

std::vector<std::string> State::texts() const {
    std::vector<std::string> out;
    out.reserve(feedback.size() + 1);
    out.push_back(query.text);
    out.insert(out.end(), feedback.begin(), feedback.end());
    return out;
}

void check_unique(const SlateAction& slate) {
    std::set<std::string> seen;
    for (const auto& id : slate.doc_ids) {
        if (!seen.insert(id).second) throw InvalidArgument("slate repeats document " + id);
    }
}

}  // namespace dqrank
