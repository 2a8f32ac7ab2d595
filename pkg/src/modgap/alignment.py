"""Post-hoc alignment: shared space projection (SSP), the translation and
dimension-removal baselines, and checkers for perfect alignment and
intra-modal isometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .gap_analysis import GapReport, SharedSpaceEstimate, estimate_shared_space, modality_gap
from .geometry import CENTER_EPS, HyperplanePair, PairedConfig, make_hyperplane_pair, orthonormalize
from .vmf import VmfParams, sample_in_subspace

_BLOCK = 2048


class AlignmentError(ValueError):
    pass


class EmptyOverlap(AlignmentError):
    pass


class _ZeroRowError(AlignmentError):
    def __init__(self, row: int, side: str, what: str):
        super().__init__(f"{side} row {row} vanishes after {what}")
        self.row = row
        self.side = side


class ZeroAfterProjection(_ZeroRowError):
    def __init__(self, row: int, side: str):
        super().__init__(row, side, "projection")


class ZeroAfterTranslation(_ZeroRowError):
    def __init__(self, row: int, side: str = "x"):
        super().__init__(row, side, "translation")


class ZeroAfterRemoval(_ZeroRowError):
    def __init__(self, row: int, side: str):
        super().__init__(row, side, "removal")


def _renormalize(m: np.ndarray, side: str, exc, unchanged=None) -> np.ndarray:
    """Scale rows to unit norm; rows flagged in ``unchanged`` are returned as is."""
    norms = np.linalg.norm(m, axis=1)
    bad = np.flatnonzero(~(norms >= CENTER_EPS))
    if bad.size:
        raise exc(int(bad[0]), side)
    out = m / norms[:, None]
    if unchanged is not None:
        out[unchanged] = m[unchanged]
    return out


# ---------------------------------------------------------------------------
# Shared space projection


@dataclass(frozen=True)
class SspConfig:
    var_threshold: float = 0.99
    eps: float = 1e-3
    k: Optional[int] = None

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1 when given")
        if not (0.0 < self.var_threshold <= 1.0):
            raise ValueError("var_threshold must lie in (0, 1]")
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")


@dataclass
class SspReport:
    d_overlap: int
    k: int
    kept: np.ndarray
    scores: Optional[np.ndarray]
    gap_before: GapReport
    gap_after: GapReport
    estimate: Optional[SharedSpaceEstimate] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "d_overlap": self.d_overlap,
            "k": self.k,
            "kept_columns": self.kept.tolist(),
            "scores": None if self.scores is None else self.scores.tolist(),
            "gap_before": self.gap_before.to_dict(),
            "gap_after": self.gap_after.to_dict(),
        }
        if self.estimate is not None:
            out["shared_space"] = self.estimate.to_dict()
        return out


def rank_shared_dims(cfg: PairedConfig, b_s: np.ndarray):
    """Score each column of ``b_s`` by how much of the data it carries.

    Every row of ``X`` and ``Y`` is projected onto ``span(b_s)``, its
    coordinates ``p`` are rescaled to unit norm, and the per-column
    contribution ``p_k b_k`` is formed. A column's score is the mean square of
    those contributions over all rows and ambient coordinates, i.e.
    ``mean(p_k^2) / h``. Rows with no component in the span are skipped.

    Returns
    -------
    scores : ndarray
        One score per column, in column order.
    order : ndarray
        Column indices by descending score, ties by ascending index.
    """
    b_s = np.asarray(b_s, dtype=np.float64)
    if b_s.ndim != 2 or b_s.shape[1] == 0:
        raise EmptyOverlap("shared basis is empty")
    rows = np.vstack([cfg.x.data, cfg.y.data])
    p = rows @ b_s
    norms = np.linalg.norm(p, axis=1)
    keep = norms >= CENTER_EPS
    p = p[keep] / norms[keep, None]
    # contributions[k, n, :] = p[n, k] * b_s[:, k]; their squared entries sum
    # over the ambient axis to p[n, k]^2 because the columns are unit length.
    contributions = np.einsum("hk,nk->knh", b_s, p)
    scores = np.mean(contributions**2, axis=(1, 2))
    order = np.argsort(-scores, kind="stable")
    return scores, order


def project_onto(cfg: PairedConfig, basis: np.ndarray) -> PairedConfig:
    """Project both sides onto ``span(basis)`` and renormalize every row."""
    basis = np.asarray(basis, dtype=np.float64)
    xs = _renormalize((cfg.x.data @ basis) @ basis.T, "x", ZeroAfterProjection)
    ys = _renormalize((cfg.y.data @ basis) @ basis.T, "y", ZeroAfterProjection)
    return PairedConfig.from_arrays(xs, ys)


def ssp(cfg: PairedConfig, conf: SspConfig = SspConfig(), shared_basis: Optional[np.ndarray] = None):
    """Shared space projection.

    Estimates the shared subspace (unless ``shared_basis`` is supplied),
    optionally keeps the ``conf.k`` best-scoring columns, projects both
    modalities onto the kept span and renormalizes.

    Returns
    -------
    PairedConfig, SspReport
    """
    estimate = None
    if shared_basis is None:
        estimate = estimate_shared_space(cfg, conf.var_threshold, conf.eps)
        b_s = estimate.b_s
    else:
        b_s = orthonormalize(shared_basis)
    d = b_s.shape[1]
    if d == 0:
        raise EmptyOverlap("estimated shared space is empty")
    scores = None
    kept = np.arange(d)
    if conf.k is not None:
        if conf.k > d:
            raise ValueError(f"k={conf.k} exceeds the shared dimension {d}")
        scores, order = rank_shared_dims(cfg, b_s)
        kept = order[: conf.k]
    out = project_onto(cfg, b_s[:, kept])
    report = SspReport(
        d_overlap=d,
        k=int(kept.size),
        kept=kept,
        scores=scores,
        gap_before=modality_gap(cfg),
        gap_after=modality_gap(out),
        estimate=estimate,
    )
    return out, report


# ---------------------------------------------------------------------------
# Baselines


def translate_baseline(cfg: PairedConfig, lam: float) -> PairedConfig:
    """Shift every image row by ``lam * (mu_y - mu_x)`` and renormalize; texts are unchanged."""
    if float(lam) == 0.0:
        return PairedConfig.from_arrays(cfg.x.data, cfg.y.data)
    shifted = cfg.x.data + float(lam) * (cfg.mu_y - cfg.mu_x)
    return PairedConfig.from_arrays(_renormalize(shifted, "x", ZeroAfterTranslation), cfg.y.data)


def gap_basis(cfg: PairedConfig) -> np.ndarray:
    """Orthonormal basis whose first column is the gap direction ``mu_x - mu_y``.

    The remaining columns complete it by Gram-Schmidt against the standard
    basis. Without a gap the standard basis itself is returned.
    """
    h = cfg.h
    g = cfg.mu_x - cfg.mu_y
    norm = np.linalg.norm(g)
    if norm < CENTER_EPS:
        return np.eye(h)
    q = orthonormalize(np.column_stack([g / norm, np.eye(h)]))[:, :h]
    if q[:, 0] @ g < 0:
        q[:, 0] = -q[:, 0]
    return q


def remove_dims_baseline(cfg: PairedConfig, k: int) -> PairedConfig:
    """Zero the ``k`` coordinates (in :func:`gap_basis`) that load most on the gap.

    Loadings are ``|q_j . (mu_x - mu_y)|``; ties go to the lower index.
    """
    h = cfg.h
    if not (1 <= k < h):
        raise ValueError(f"k must satisfy 1 <= k < h={h}, got {k}")
    q = gap_basis(cfg)
    loadings = np.abs(q.T @ (cfg.mu_x - cfg.mu_y))
    drop = np.argsort(-loadings, kind="stable")[:k]
    qd = q[:, drop]
    out = []
    for m, side in ((cfg.x.data, "x"), (cfg.y.data, "y")):
        coef = m @ qd
        # Rows with nothing along the removed directions pass through untouched.
        out.append(_renormalize(m - coef @ qd.T, side, ZeroAfterRemoval, unchanged=~coef.any(axis=1)))
    xs, ys = out
    return PairedConfig.from_arrays(xs, ys)


def smallest_lambda_beating(cfg: PairedConfig, target_theta: float, lambdas=None):
    """Smallest ``lam`` on a sweep whose translated gap falls below ``target_theta`` (radians).

    Returns ``(lam, gap)`` or ``(None, None)`` if no value qualifies.
    """
    if lambdas is None:
        lambdas = np.linspace(0.0, 1.0, 101)
    for lam in lambdas:
        gap = modality_gap(translate_baseline(cfg, lam))
        if gap.defined and gap.delta_theta < target_theta:
            return float(lam), gap
    return None, None


# ---------------------------------------------------------------------------
# Checkers


@dataclass(frozen=True)
class AlignmentCheck:
    perfectly_aligned: bool
    violation_count: int
    worst_margin: float
    ims_max_deviation: float = math.nan

    def to_dict(self) -> dict:
        return {
            "perfectly_aligned": self.perfectly_aligned,
            "violation_count": self.violation_count,
            "worst_margin": self.worst_margin,
            "ims_max_deviation": self.ims_max_deviation,
        }


def alignment_violations(x: np.ndarray, y: np.ndarray):
    """Count comparisons where a pair is not its own strict nearest neighbour.

    For every ``i`` and ``j != i`` both ``x_i . y_j`` and ``x_j . y_i`` are
    compared with ``x_i . y_i``; ties count as violations.

    Returns
    -------
    count : int
    worst_margin : float
        ``min(x_i . y_i - offending term)`` over all comparisons.
    """
    n = x.shape[0]
    count = 0
    worst = math.inf
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        idx = np.arange(lo, hi)
        # rows: x_i . y_j; cols: x_j . y_i, both for i in the block.
        for s in (x[lo:hi] @ y.T, y[lo:hi] @ x.T):
            # The diagonal comes from the same product so exact ties stay ties.
            margin = s[idx - lo, idx][:, None] - s
            margin[idx - lo, idx] = math.inf
            count += int(np.count_nonzero(margin <= 0))
            worst = min(worst, float(margin.min()))
    return count, worst


def check_perfect_alignment(cfg: PairedConfig) -> AlignmentCheck:
    """Strict mutual nearest-neighbour test on every pair."""
    if cfg.n < 2:
        raise ValueError("need at least two pairs")
    count, worst = alignment_violations(cfg.x.data, cfg.y.data)
    return AlignmentCheck(count == 0, count, worst)


@dataclass(frozen=True)
class IsometryCheck:
    ims_max_deviation: float
    passed: bool
    tol: float


def check_intra_modal_isometry(cfg: PairedConfig, tol: float = 1e-6) -> IsometryCheck:
    """Largest ``|x_i . x_j - y_i . y_j|`` over ``i < j``."""
    if cfg.n < 2:
        raise ValueError("need at least two pairs")
    x, y = cfg.x.data, cfg.y.data
    worst = 0.0
    for lo in range(0, cfg.n, _BLOCK):
        hi = min(lo + _BLOCK, cfg.n)
        d = np.abs(x[lo:hi] @ x.T - y[lo:hi] @ y.T)
        d[np.arange(hi - lo), np.arange(lo, hi)] = 0.0
        worst = max(worst, float(d.max()))
    return IsometryCheck(worst, worst <= tol, float(tol))


def check_alignment(cfg: PairedConfig, tol: float = 1e-6) -> AlignmentCheck:
    pa = check_perfect_alignment(cfg)
    iso = check_intra_modal_isometry(cfg, tol)
    return AlignmentCheck(pa.perfectly_aligned, pa.violation_count, pa.worst_margin, iso.ims_max_deviation)


# ---------------------------------------------------------------------------
# Synthetic fixture


def make_aligned_fixture(h: int, phi: float, n: int, kappa: float = 2.0, seed: int = 0, pair: Optional[HyperplanePair] = None):
    """Paired embeddings on two hyperplanes with centers orthogonal to the
    shared space and identical shared components.

    ``x_i`` is drawn from a vMF law on the sphere of hyperplane A centred at
    ``e_a``; ``y_i = (x_i . e_a) e_b + P_C x_i``. The pair is therefore
    intra-modal isometric with ``P_C x_i = P_C y_i``.

    Returns
    -------
    PairedConfig, HyperplanePair
    """
    hp = make_hyperplane_pair(h, phi, seed=seed) if pair is None else pair
    x = sample_in_subspace(VmfParams(hp.e_a, kappa), hp.basis_a, n, seed=seed).data
    shared = (x @ hp.shared_basis) @ hp.shared_basis.T
    y = np.outer(x @ hp.e_a, hp.e_b) + shared
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    return PairedConfig.from_arrays(x, y), hp


__all__ = [
    "AlignmentCheck",
    "AlignmentError",
    "EmptyOverlap",
    "IsometryCheck",
    "SspConfig",
    "SspReport",
    "ZeroAfterProjection",
    "ZeroAfterRemoval",
    "ZeroAfterTranslation",
    "alignment_violations",
    "check_alignment",
    "check_intra_modal_isometry",
    "check_perfect_alignment",
    "gap_basis",
    "make_aligned_fixture",
    "project_onto",
    "rank_shared_dims",
    "remove_dims_baseline",
    "smallest_lambda_beating",
    "ssp",
    "translate_baseline",
]
