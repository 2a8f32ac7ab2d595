"""Diagnostics of a paired configuration: gap size, similarity populations,
singular-value spectra and the estimated shared subspace."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import EmbeddingMatrix, PairedConfig, mean_and_center, principal_angles
from .vmf import make_rng

N_BINS = 64
DEFAULT_NEGATIVE_CAP = 10**6


def _data(m) -> np.ndarray:
    return m.data if isinstance(m, EmbeddingMatrix) else np.asarray(m, dtype=np.float64)


@dataclass(frozen=True)
class GapReport:
    """``delta_mu = ||mu_x - mu_y||`` and ``delta_theta = arccos(c_x . c_y)`` (radians, NaN if undefined)."""

    delta_mu: float
    delta_theta: float
    defined: bool
    n: int
    h: int

    @property
    def delta_theta_deg(self) -> float:
        return math.degrees(self.delta_theta)

    def to_dict(self) -> dict:
        return {
            "delta_mu": self.delta_mu,
            "delta_theta_rad": self.delta_theta,
            "delta_theta_deg": self.delta_theta_deg,
            "delta_theta_defined": self.defined,
            "n": self.n,
            "h": self.h,
        }


def modality_gap(cfg: PairedConfig) -> GapReport:
    delta_mu = float(np.linalg.norm(cfg.mu_x - cfg.mu_y))
    if cfg.centers_defined:
        theta = float(np.arccos(np.clip(cfg.c_x @ cfg.c_y, -1.0, 1.0)))
    else:
        theta = math.nan
    return GapReport(delta_mu, theta, cfg.centers_defined, cfg.n, cfg.h)


# ---------------------------------------------------------------------------
# Cosine-similarity populations


@dataclass(frozen=True)
class PopulationStats:
    count: int
    mean: float
    std: float
    hist: np.ndarray
    edges: np.ndarray
    subsampled: bool = False

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "subsampled": self.subsampled,
            "hist": self.hist.tolist(),
            "bin_edges": self.edges.tolist(),
        }


def _population(values: np.ndarray, subsampled: bool) -> PopulationStats:
    edges = np.linspace(-1.0, 1.0, N_BINS + 1)
    hist, _ = np.histogram(np.clip(values, -1.0, 1.0), bins=edges)
    if values.size == 0:
        return PopulationStats(0, math.nan, math.nan, hist, edges, subsampled)
    return PopulationStats(int(values.size), float(values.mean()), float(values.std()), hist, edges, subsampled)


def _off_diagonal(a: np.ndarray, b: np.ndarray, cap: int, rng, unordered: bool):
    """Cosines ``a_i . b_j`` for ``i != j`` (``i < j`` if ``unordered``), or a random subsample."""
    n = a.shape[0]
    total = n * (n - 1) // 2 if unordered else n * (n - 1)
    if total <= cap:
        s = a @ b.T
        if unordered:
            iu = np.triu_indices(n, k=1)
            return s[iu], False
        return s[~np.eye(n, dtype=bool)], False
    i = rng.integers(0, n, size=cap)
    j = rng.integers(0, n - 1, size=cap)
    j = j + (j >= i)
    return np.einsum("ij,ij->i", a[i], b[j]), True


def similarity_stats(cfg: PairedConfig, max_negative_samples: int = DEFAULT_NEGATIVE_CAP, seed: int = 0) -> dict:
    """Summaries of the I2I, T2T, P-I2T and NP-I2T cosine populations.

    Off-diagonal populations larger than ``max_negative_samples`` are replaced
    by that many index pairs drawn uniformly (with replacement) from a seeded
    generator.
    """
    if cfg.n < 2:
        raise ValueError("need at least two pairs")
    x, y = cfg.x.data, cfg.y.data
    rng = make_rng(seed)
    i2i, s1 = _off_diagonal(x, x, max_negative_samples, rng, unordered=True)
    t2t, s2 = _off_diagonal(y, y, max_negative_samples, rng, unordered=True)
    np_i2t, s3 = _off_diagonal(x, y, max_negative_samples, rng, unordered=False)
    return {
        "I2I": _population(i2i, s1),
        "T2T": _population(t2t, s2),
        "P-I2T": _population(np.einsum("ij,ij->i", x, y), False),
        "NP-I2T": _population(np_i2t, s3),
    }


# ---------------------------------------------------------------------------
# Dimension collapse


@dataclass(frozen=True)
class CollapseReport:
    singular_values: np.ndarray
    explained_variance_ratio: np.ndarray
    effective_rank: int
    threshold: float
    centered: bool

    def to_dict(self) -> dict:
        return {
            "singular_values": self.singular_values.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "effective_rank": self.effective_rank,
            "threshold": self.threshold,
            "centered": self.centered,
        }


def _rank_at(ratio: np.ndarray, threshold: float) -> int:
    if ratio.size == 0 or ratio.sum() == 0:
        return 0
    cum = np.cumsum(ratio)
    # Guard the comparison against the last partial sum rounding below 1.
    return int(min(np.searchsorted(cum, threshold - 1e-12) + 1, ratio.size))


def detect_collapse(m, centered: bool = False, threshold: float = 0.99) -> CollapseReport:
    """Singular-value spectrum of an embedding matrix.

    ``effective_rank`` is the smallest ``d`` whose leading explained-variance
    ratios sum to at least ``threshold``. A spectrum that is identically zero
    (e.g. a centered point mass) reports all-zero ratios and rank 0.
    """
    a = _data(m)
    if a.shape[0] < 2:
        raise ValueError("need at least two rows")
    if centered:
        a = a - a.mean(axis=0)
    sv = np.linalg.svd(a, compute_uv=False)
    energy = sv**2
    total = energy.sum()
    ratio = energy / total if total > 0 else np.zeros_like(energy)
    return CollapseReport(sv, ratio, _rank_at(ratio, threshold), float(threshold), centered)


def top_right_singular_basis(m, var_threshold: float = 0.99, centered: bool = False) -> np.ndarray:
    """Leading right singular vectors reaching ``var_threshold`` of the energy, as columns."""
    a = _data(m)
    if centered:
        a = a - a.mean(axis=0)
    _, sv, vt = np.linalg.svd(a, full_matrices=False)
    energy = sv**2
    d = _rank_at(energy / energy.sum(), var_threshold) if energy.sum() > 0 else 0
    return vt[:d].T.copy()


# ---------------------------------------------------------------------------
# Shared subspace


@dataclass(frozen=True)
class SharedSpaceEstimate:
    """Estimated modality subspaces and their intersection.

    ``b_s`` is built from the X side and ``b_s_alt`` from the Y side; with
    noise they differ, and ``deviation[k]`` is the norm of the difference of
    their ``k``-th columns.
    """

    b_x: np.ndarray
    b_y: np.ndarray
    principal_cosines: np.ndarray
    gammas: np.ndarray
    d_overlap: int
    b_s: np.ndarray
    b_s_alt: np.ndarray
    deviation: np.ndarray
    eps: float
    var_threshold: float

    @property
    def empty(self) -> bool:
        return self.d_overlap == 0

    @property
    def d_x(self) -> int:
        return self.b_x.shape[1]

    @property
    def d_y(self) -> int:
        return self.b_y.shape[1]

    def to_dict(self) -> dict:
        return {
            "d_x": self.d_x,
            "d_y": self.d_y,
            "d_overlap": self.d_overlap,
            "empty_overlap": self.empty,
            "principal_cosines": self.principal_cosines.tolist(),
            "gammas_rad": self.gammas.tolist(),
            "gammas_deg": np.degrees(self.gammas).tolist(),
            "basis_deviation": self.deviation.tolist(),
            "eps": self.eps,
            "var_threshold": self.var_threshold,
        }


def estimate_shared_space(cfg: PairedConfig, var_threshold: float = 0.99, eps: float = 1e-3) -> SharedSpaceEstimate:
    """Estimate the subspace shared by both modalities.

    Bases ``B_X`` and ``B_Y`` come from the uncentered embeddings. With
    ``G = B_X^T B_Y = U S V^T`` the shared dimension counts singular values
    above ``1 - eps`` and ``B_S = B_X U[:, :d]``.
    """
    if cfg.n < 2:
        raise ValueError("need at least two pairs")
    b_x = top_right_singular_basis(cfg.x, var_threshold)
    b_y = top_right_singular_basis(cfg.y, var_threshold)
    g = b_x.T @ b_y
    u, s, vt = np.linalg.svd(g)
    d = int(np.count_nonzero(s > 1.0 - eps))
    b_s = b_x @ u[:, :d]
    b_s_alt = b_y @ vt[:d].T
    gammas = principal_angles(b_x, b_y) if min(g.shape) else np.zeros(0)
    return SharedSpaceEstimate(
        b_x=b_x,
        b_y=b_y,
        principal_cosines=s,
        gammas=gammas,
        d_overlap=d,
        b_s=b_s,
        b_s_alt=b_s_alt,
        deviation=np.linalg.norm(b_s - b_s_alt, axis=0),
        eps=float(eps),
        var_threshold=float(var_threshold),
    )


# ---------------------------------------------------------------------------
# Angle to the center


@dataclass(frozen=True)
class ThetaCHistogram:
    counts: np.ndarray
    edges: np.ndarray
    fraction_acute: float
    defined: bool

    def to_dict(self) -> dict:
        return {
            "counts": self.counts.tolist(),
            "bin_edges_rad": self.edges.tolist(),
            "fraction_acute": self.fraction_acute,
            "center_defined": self.defined,
        }


def theta_c_histogram(m) -> ThetaCHistogram:
    """Histogram of ``arccos(x_i . c_x)`` over ``[0, pi]`` and the share inside ``(0, pi/2)``."""
    a = _data(m)
    edges = np.linspace(0.0, math.pi, N_BINS + 1)
    _, c, ok = mean_and_center(a)
    if not ok:
        return ThetaCHistogram(np.zeros(N_BINS, dtype=np.int64), edges, math.nan, False)
    theta = np.arccos(np.clip(a @ c, -1.0, 1.0))
    counts, _ = np.histogram(theta, bins=edges)
    acute = float(np.mean((theta > 0.0) & (theta < math.pi / 2)))
    return ThetaCHistogram(counts, edges, acute, True)


__all__ = [
    "CollapseReport",
    "GapReport",
    "N_BINS",
    "PopulationStats",
    "SharedSpaceEstimate",
    "ThetaCHistogram",
    "detect_collapse",
    "estimate_shared_space",
    "modality_gap",
    "similarity_stats",
    "theta_c_histogram",
    "top_right_singular_basis",
]
