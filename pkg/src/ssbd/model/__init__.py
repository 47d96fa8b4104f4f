from .base import LanguageModel
from .io import load_model, model_from_json, model_to_json, save_model
from .ledger import CacheLedger, StepCounts, cache_truncate, reuse_prefix
from .ngram import NgramModel, ngram_train
from .remote import RemoteModel
from .table import TableModel

__all__ = [
    "CacheLedger",
    "LanguageModel",
    "NgramModel",
    "RemoteModel",
    "StepCounts",
    "TableModel",
    "cache_truncate",
    "load_model",
    "model_from_json",
    "model_to_json",
    "ngram_train",
    "reuse_prefix",
    "save_model",
]
