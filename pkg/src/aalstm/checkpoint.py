"""Model persistence: one npz archive per checkpoint.

The archive maps parameter name to float64 array (round-trips bit-exactly)
plus a `__meta__` JSON string carrying everything that is not a weight:
format version, task/cell/head switches, the vocabulary in row order, which
rows were randomly initialized, and the category list. Word embeddings and
the category table are always stored, even when frozen during training,
because inference needs them.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import fields

import numpy as np

from .cells import AALstmParams, ClassicLstmParams
from .data import AspectEmbeddingTable, EmbeddingTable
from .heads import AttentionParams, ClassifierParams
from .model import SentimentModel

FORMAT_NAME = "aalstm-checkpoint"
FORMAT_VERSION = 1
_META_KEY = "__meta__"


class CheckpointError(ValueError):
    """Unreadable, unversioned, or internally inconsistent checkpoint file."""


def _vocab_rows(vocab: dict[str, int]) -> list[str]:
    rows: list[str | None] = [None] * len(vocab)
    for token, i in vocab.items():
        if not 0 <= i < len(rows) or rows[i] is not None:
            raise CheckpointError(f"vocabulary indices are not a permutation at {token!r}")
        rows[i] = token
    return rows  # type: ignore[return-value]


def save_checkpoint(model: SentimentModel, path) -> None:
    """Write the model's switches, vocabulary, and all weights to `path`."""
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "task": model.task,
        "cell": model.cell_kind,
        "head": model.head_kind,
        "train_embeddings": model.train_embeddings,
        "vocab": _vocab_rows(model.embeddings.vocab),
        "oov_tokens": sorted(model.embeddings.oov_tokens),
        "categories": (list(model.aspect_embeddings.categories)
                       if model.aspect_embeddings is not None else None),
    }
    arrays: dict[str, np.ndarray] = {"emb.words": model.embeddings.matrix}
    if model.aspect_embeddings is not None:
        arrays["emb.aspects"] = model.aspect_embeddings.matrix
    for name, arr in model.cell.to_arrays().items():
        arrays[f"cell.{name}"] = arr
    if model.attn is not None:
        for name, arr in model.attn.to_arrays().items():
            arrays[f"attn.{name}"] = arr
    for name, arr in model.clf.to_arrays().items():
        arrays[f"clf.{name}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **{_META_KEY: np.array(json.dumps(meta))}, **arrays)


def _take(arrays: dict[str, np.ndarray], cls, prefix: str):
    kwargs = {}
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint is missing array {key!r}")
        kwargs[f.name] = arrays[key]
    return cls(**kwargs)


def load_checkpoint(path) -> SentimentModel:
    """Rebuild a model from `save_checkpoint` output, bit-exactly."""
    try:
        with np.load(path, allow_pickle=False) as archive:
            loaded = {key: archive[key] for key in archive.files}
    except FileNotFoundError:
        raise CheckpointError(f"no such checkpoint: {path}") from None
    except (zipfile.BadZipFile, OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None

    if _META_KEY not in loaded:
        raise CheckpointError(f"{path} has no {_META_KEY} entry; not a checkpoint")
    try:
        meta = json.loads(str(loaded.pop(_META_KEY)[()]))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint metadata in {path}: {exc}") from None
    if meta.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path} is not an {FORMAT_NAME} file")
    if meta.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {meta.get('version')!r} "
            f"(this build reads version {FORMAT_VERSION})")

    try:
        vocab = {token: i for i, token in enumerate(meta["vocab"])}
        embeddings = EmbeddingTable(vocab, loaded["emb.words"],
                                    frozenset(meta["oov_tokens"]))
        cell_cls = AALstmParams if meta["cell"] == "aa" else ClassicLstmParams
        cell = _take(loaded, cell_cls, "cell")
        attn = (_take(loaded, AttentionParams, "attn")
                if meta["head"] == "attention" else None)
        clf = _take(loaded, ClassifierParams, "clf")
        aspect_embeddings = None
        if meta["categories"] is not None:
            if "emb.aspects" not in loaded:
                raise CheckpointError("checkpoint is missing array 'emb.aspects'")
            aspect_embeddings = AspectEmbeddingTable(tuple(meta["categories"]),
                                                     loaded["emb.aspects"])
        return SentimentModel(meta["task"], meta["cell"], meta["head"],
                              embeddings, cell, clf, attn=attn,
                              aspect_embeddings=aspect_embeddings,
                              train_embeddings=bool(meta["train_embeddings"]))
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"inconsistent checkpoint {path}: {exc}") from None
