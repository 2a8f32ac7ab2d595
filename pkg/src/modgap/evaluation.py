"""Zero-shot classification and cross-modal retrieval metrics.

Ranks are computed with a deterministic tie-break: among equal similarities
the lower class id (or row index) ranks first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DimensionMismatch, EmbeddingMatrix, PairedConfig

_BLOCK = 2048


class LabelMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LabeledEmbeddings:
    embeddings: EmbeddingMatrix
    labels: np.ndarray

    def __post_init__(self):
        emb = self.embeddings if isinstance(self.embeddings, EmbeddingMatrix) else EmbeddingMatrix(self.embeddings)
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size != emb.n:
            raise LabelMismatch(f"{labels.size} labels for {emb.n} embeddings")
        if labels.size and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0):
            raise LabelMismatch("labels must be non-negative integers")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", labels.astype(np.int64))


@dataclass
class EvalResult:
    r_at: dict
    direction: str
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "r_at": {str(k): v for k, v in sorted(self.r_at.items())},
            "notes": list(self.notes),
        }


def target_ranks(queries: np.ndarray, keys: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """0-based rank of ``keys[targets[i]]`` among all keys for query ``i``.

    A key outranks the target if its similarity is larger, or equal with a
    lower index.
    """
    n_keys = keys.shape[0]
    ranks = np.empty(queries.shape[0], dtype=np.int64)
    cols = np.arange(n_keys)
    for lo in range(0, queries.shape[0], _BLOCK):
        hi = min(lo + _BLOCK, queries.shape[0])
        s = queries[lo:hi] @ keys.T
        t = targets[lo:hi]
        ts = s[np.arange(hi - lo), t][:, None]
        ahead = (s > ts) | ((s == ts) & (cols[None, :] < t[:, None]))
        ranks[lo:hi] = ahead.sum(axis=1)
    return ranks


def _recall(ranks: np.ndarray, cutoffs) -> dict:
    return {int(k): float(np.mean(ranks < k)) for k in sorted(cutoffs)}


def zero_shot_classify(images: LabeledEmbeddings, class_embs, cutoffs=(1, 5)) -> EvalResult:
    """Top-k accuracy of nearest-class-embedding classification."""
    classes = class_embs if isinstance(class_embs, EmbeddingMatrix) else EmbeddingMatrix(class_embs)
    if classes.h != images.embeddings.h:
        raise DimensionMismatch(f"image dimension {images.embeddings.h} != class dimension {classes.h}")
    if images.labels.size and images.labels.max() >= classes.n:
        raise LabelMismatch(f"label {images.labels.max()} but only {classes.n} classes")
    ranks = target_ranks(images.embeddings.data, classes.data, images.labels)
    return EvalResult(_recall(ranks, cutoffs), "classify")


def cross_modal_retrieve(cfg: PairedConfig, cutoffs=(1, 5, 10)):
    """Recall@k for image-to-text and text-to-image retrieval with 1:1 pairs.

    Cutoffs above ``N`` are dropped and noted in both results.
    """
    n = cfg.n
    kept = [k for k in cutoffs if k <= n]
    notes = [f"cutoff {k} omitted: only {n} pairs" for k in cutoffs if k > n]
    idx = np.arange(n)
    i2t = _recall(target_ranks(cfg.x.data, cfg.y.data, idx), kept)
    t2i = _recall(target_ranks(cfg.y.data, cfg.x.data, idx), kept)
    return EvalResult(i2t, "img2txt", list(notes)), EvalResult(t2i, "txt2img", list(notes))


__all__ = [
    "EvalResult",
    "LabelMismatch",
    "LabeledEmbeddings",
    "cross_modal_retrieve",
    "target_ranks",
    "zero_shot_classify",
]
