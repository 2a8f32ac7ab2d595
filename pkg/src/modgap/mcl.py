"""Full-batch multimodal contrastive loss and its per-pair decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .geometry import PairedConfig


# exp(-600) is far from the double underflow threshold near exp(-708).
_SHARED_SHIFT_RANGE = 600.0


class UndefinedCenter(ValueError):
    pass


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not math.isfinite(tau) or tau <= 0:
        raise ValueError(f"tau must be finite and > 0, got {tau!r}")
    return tau


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    per_pair: np.ndarray
    x_to_y: np.ndarray
    y_to_x: np.ndarray
    tau: float


def _as_arrays(cfg):
    if isinstance(cfg, PairedConfig):
        return cfg.x.data, cfg.y.data
    x, y = cfg
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)


def mcl_terms(x: np.ndarray, y: np.ndarray, tau: float):
    """Return ``(x_to_y, y_to_x)`` per-pair losses for raw arrays."""
    sims = (x @ y.T) / tau
    diag = np.diagonal(sims)
    top, bottom = sims.max(), sims.min()
    if top - bottom < _SHARED_SHIFT_RANGE:
        # One global shift keeps every exponent representable, so a single
        # exp pass serves both the row and the column reductions.
        e = np.exp(sims - top)
        x_to_y = np.log(e.sum(axis=1)) + top - diag
        y_to_x = np.log(e.sum(axis=0)) + top - diag
    else:
        x_to_y = logsumexp(sims, axis=1) - diag
        y_to_x = logsumexp(sims, axis=0) - diag
    # A softmax probability never exceeds one; clip rounding below zero.
    return np.maximum(x_to_y, 0.0), np.maximum(y_to_x, 0.0)


def mcl_loss(cfg, tau: float) -> LossBreakdown:
    """Evaluate the symmetric contrastive loss over the whole batch.

    ``x_to_y[i]`` is ``-log softmax_j(x_i . y_j / tau)`` at ``j = i`` and
    ``y_to_x[i]`` its transpose; ``total`` is the mean of their sum.
    Log-sum-exp keeps this finite for ``tau`` down to ``1e-3`` and below.
    """
    tau = _check_tau(tau)
    x, y = _as_arrays(cfg)
    x_to_y, y_to_x = mcl_terms(x, y, tau)
    per_pair = x_to_y + y_to_x
    return LossBreakdown(
        total=float(per_pair.mean()),
        per_pair=per_pair,
        x_to_y=x_to_y,
        y_to_x=y_to_x,
        tau=tau,
    )


def loss_minus_2logn(cfg, tau: float) -> float:
    x, _ = _as_arrays(cfg)
    return mcl_loss(cfg, tau).total - 2.0 * math.log(x.shape[0])


def pair_loss_with(x_i, y_i, x_others, y_others, tau: float) -> float:
    """Loss of one extra pair ``(x_i, y_i)`` appended to a batch.

    The softmax denominators run over the appended pair plus all rows of
    ``y_others`` (resp. ``x_others``), which may be empty.
    """
    tau = _check_tau(tau)
    x_i = np.asarray(x_i, dtype=np.float64)
    y_i = np.asarray(y_i, dtype=np.float64)
    x_others = np.asarray(x_others, dtype=np.float64).reshape(-1, x_i.size)
    y_others = np.asarray(y_others, dtype=np.float64).reshape(-1, y_i.size)
    pos = float(x_i @ y_i) / tau
    fwd = np.concatenate([[pos], (y_others @ x_i) / tau])
    bwd = np.concatenate([[pos], (x_others @ y_i) / tau])
    return float(logsumexp(fwd) - pos + logsumexp(bwd) - pos)


def center_loss(cfg: PairedConfig, tau: float) -> float:
    """Loss of the center pair ``(c_x, c_y)`` inserted as an extra sample.

    Denominators range over the ``N`` data rows plus the center itself.
    """
    if not cfg.centers_defined:
        raise UndefinedCenter("a modality mean vanishes; its center is undefined")
    return pair_loss_with(cfg.c_x, cfg.c_y, cfg.x.data, cfg.y.data, tau)


def mcl_loss_and_gradients(x: np.ndarray, y: np.ndarray, tau: float):
    """Mean loss together with its Euclidean gradients ``(loss, dx, dy)``.

    With ``P`` the row softmax and ``Q`` the column softmax of ``X Y^T / tau``,
    ``G = (P + Q - 2 I) / N`` gives ``dX = G Y / tau`` and ``dY = G^T X / tau``.
    """
    n = x.shape[0]
    sims = (x @ y.T) / tau
    row_lse = logsumexp(sims, axis=1, keepdims=True)
    col_lse = logsumexp(sims, axis=0, keepdims=True)
    diag = np.diagonal(sims)
    loss = float((row_lse[:, 0] + col_lse[0] - 2.0 * diag).mean())
    g = (np.exp(sims - row_lse) + np.exp(sims - col_lse)) / n
    g[np.diag_indices(n)] -= 2.0 / n
    return loss, (g @ y) / tau, (g.T @ x) / tau


def mcl_gradients(x: np.ndarray, y: np.ndarray, tau: float):
    """Euclidean gradient of the mean loss with respect to every ``x_i`` and ``y_i``."""
    _, dx, dy = mcl_loss_and_gradients(x, y, tau)
    return dx, dy
