"""JSON model files.

Table model::

    {"kind": "table", "vocab": {"size": V, "eos_id": e, "tokens": [...]},
     "fallback": [p0, ..., pV-1],
     "entries": [{"context": [ids], "probs": [p0, ..., pV-1]}, ...]}

N-gram model::

    {"kind": "ngram", "vocab": {...}, "order": n, "alpha": a,
     "counts": [{"context": [ids], "counts": {"id": count, ...}}, ...]}

``vocab.tokens`` and ``fallback`` are optional.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from ..core import ProbDist, Vocab
from ..errors import ConfigError
from .ngram import NgramModel
from .table import TableModel

LocalModel = Union[TableModel, NgramModel]


def model_to_json(model: LocalModel) -> dict:
    if isinstance(model, TableModel):
        return {
            "kind": "table",
            "vocab": model.vocab().to_json(),
            "fallback": model.fallback.tolist(),
            "entries": [
                {"context": list(ctx), "probs": dist.tolist()}
                for ctx, dist in sorted(model.entries.items())
            ],
        }
    if isinstance(model, NgramModel):
        return {
            "kind": "ngram",
            "vocab": model.vocab().to_json(),
            "order": model.order,
            "alpha": model.alpha,
            "counts": [
                {"context": list(ctx), "counts": {str(k): v for k, v in sorted(row.items())}}
                for ctx, row in sorted(model.count_rows().items())
            ],
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_json(doc: dict) -> LocalModel:
    try:
        kind = doc["kind"]
        vocab = Vocab.from_json(doc["vocab"])
        if kind == "table":
            fallback = doc.get("fallback")
            return TableModel(
                vocab,
                {tuple(e["context"]): ProbDist(e["probs"]) for e in doc["entries"]},
                ProbDist(fallback) if fallback is not None else None,
            )
        if kind == "ngram":
            counts = {
                tuple(e["context"]): {int(k): int(v) for k, v in e["counts"].items()}
                for e in doc["counts"]
            }
            return NgramModel(vocab, int(doc["order"]), float(doc["alpha"]), counts)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed model document: {exc!r}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model(model: LocalModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)) + "\n", encoding="utf-8")


def load_model(path) -> LocalModel:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    return model_from_json(doc)
