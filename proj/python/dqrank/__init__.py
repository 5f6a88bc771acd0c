"""Slate re-ranking with deep Q-learning over sentence-level feedback."""

import json

from ._dqrank import (
    ENCODER_DIM,
    Dataset,
    Error,
    InvalidArgument,
    Model,
    dcg,
    encode_pair,
    encode_single,
    kfold_split,
    load_model,
    mrr,
    ndcg_at_k,
    write_synthetic,
)
from . import _dqrank


def default_config():
    return json.loads(_dqrank.default_config())


def _config_text(config):
    merged = default_config()
    merged.update(config or {})
    return json.dumps(merged)


def train(dataset, config=None, query_ids=None):
    return _dqrank.train(_config_text(config), dataset, query_ids)


def evaluate(model, dataset, mode="dqrank", config=None, query_ids=None):
    return json.loads(_dqrank.evaluate(_config_text(config), model, dataset, mode, query_ids))


class Service:
    """In-process session service; methods return (status, body dict)."""

    def __init__(self, model, dataset, config=None, eval_query_ids=None):
        self._service = _dqrank.Service(_config_text(config), model, dataset, eval_query_ids)

    @staticmethod
    def _unpack(result):
        status, body = result
        return status, json.loads(body)

    def create_session(self, query):
        return self._unpack(self._service.create_session(json.dumps({"query": query})))

    def feedback(self, session_id, doc_id, sentence_idx):
        body = json.dumps({"doc_id": doc_id, "sentence_idx": sentence_idx})
        return self._unpack(self._service.feedback(session_id, body))

    def end_session(self, session_id):
        return self._unpack(self._service.end_session(session_id))

    def metrics(self):
        return self._unpack(self._service.metrics())

    def health(self):
        return self._unpack(self._service.health())


__all__ = [
    "ENCODER_DIM",
    "Dataset",
    "Error",
    "InvalidArgument",
    "Model",
    "Service",
    "dcg",
    "default_config",
    "encode_pair",
    "encode_single",
    "evaluate",
    "kfold_split",
    "load_model",
    "mrr",
    "ndcg_at_k",
    "train",
    "write_synthetic",
]
