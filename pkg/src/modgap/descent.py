"""Projected gradient descent of a full batch of pairs on the contrastive loss.

Each step takes the exact Euclidean gradient, removes its components along
``x_i`` (sphere tangent) and along the hyperplane normal when constrained,
moves by ``-learning_rate * grad``, projects back onto the hyperplane and
renormalizes the row.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .alignment import alignment_violations
from .geometry import HyperplanePair, random_rotation
from .mcl import _check_tau, mcl_loss, mcl_loss_and_gradients
from .vmf import DegenerateSample, VmfParams, estimate_params, make_rng, sample, sample_in_subspace

CSV_HEADER = ("step", "loss", "delta_theta", "kappa_x", "kappa_y", "mean_pair_cos", "violations")
DIVERGENCE_PATIENCE = 50


class DivergenceDetected(RuntimeError):
    def __init__(self, step: int, trajectory: "Trajectory"):
        super().__init__(f"loss increased for {DIVERGENCE_PATIENCE} consecutive steps (at step {step})")
        self.step = step
        self.trajectory = trajectory


@dataclass(frozen=True)
class DescentConfig:
    """Descent setup.

    ``constraint`` is ``"ambient"`` or a :class:`HyperplanePair`. The initial
    rows are vMF cones with concentrations ``kappa_x`` / ``kappa_y`` whose
    centers are ``delta0`` radians apart (see :func:`initial_centers`).
    """

    h: int = 8
    n: int = 256
    tau: float = 0.5
    steps: int = 4000
    learning_rate: float = 0.5
    seed: int = 0
    constraint: Union[str, HyperplanePair] = "ambient"
    kappa_x: float = 10.0
    kappa_y: float = 10.0
    delta0: float = math.radians(60.0)
    log_every: int = 100

    def __post_init__(self):
        _check_tau(self.tau)
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be finite and >= 0")
        if self.steps < 1 or self.log_every < 1 or self.n < 1:
            raise ValueError("steps, log_every and n must be >= 1")
        if isinstance(self.constraint, str):
            if self.constraint != "ambient":
                raise ValueError("constraint must be 'ambient' or a HyperplanePair")
        elif self.constraint.h != self.h:
            raise ValueError("hyperplane pair lives in a different dimension")
        if not (0.0 <= self.delta0 < math.pi):
            raise ValueError("delta0 must lie in [0, pi)")

    @property
    def pair(self) -> Optional[HyperplanePair]:
        return None if isinstance(self.constraint, str) else self.constraint


@dataclass(frozen=True)
class TrajectoryRow:
    step: int
    loss: float
    delta_theta: float
    kappa_x: float
    kappa_y: float
    mean_pair_cos: float
    violations: int


@dataclass
class Trajectory:
    """Logged rows plus the final configuration. ``delta_theta`` is in radians."""

    rows: list = field(default_factory=list)
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    pair: Optional[HyperplanePair] = None

    @property
    def final(self) -> TrajectoryRow:
        return self.rows[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def max_shared_deviation(self) -> float:
        """``max_i ||P_C x_i - P_C y_i||`` for the final rows (needs a hyperplane pair)."""
        if self.pair is None:
            raise ValueError("no hyperplane pair attached")
        return float(np.linalg.norm((self.x - self.y) @ self.pair.shared_basis, axis=1).max())

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.step, repr(r.loss), repr(r.delta_theta), repr(r.kappa_x), repr(r.kappa_y), repr(r.mean_pair_cos), r.violations])
        return buf.getvalue() if fh is None else ""


def initial_centers(cfg: DescentConfig, rng: np.random.Generator):
    """Unit centers ``(c_x, c_y)`` with ``c_x . c_y = cos(delta0)``.

    Ambient: a random direction and its rotation by ``delta0`` in a random
    plane. Hyperplane pair: ``c_x = cos b e_a + sin b v`` and
    ``c_y = cos b e_b -/+ sin b v`` for a random unit ``v`` of the shared
    space, with ``b`` solving for the requested angle (minus sign when
    ``delta0 >= phi``).
    """
    hp = cfg.pair
    if hp is None:
        q = random_rotation(cfg.h, rng)
        return q[:, 0], math.cos(cfg.delta0) * q[:, 0] + math.sin(cfg.delta0) * q[:, 1]
    v = hp.shared_basis @ rng.standard_normal(hp.shared_basis.shape[1])
    v /= np.linalg.norm(v)
    cd, cp = math.cos(cfg.delta0), math.cos(hp.phi)
    if cfg.delta0 >= hp.phi:
        sign, cos2 = -1.0, (1.0 + cd) / (1.0 + cp)
    else:
        sign, cos2 = 1.0, (1.0 - cd) / (1.0 - cp)
    cb, sb = math.sqrt(cos2), math.sqrt(max(0.0, 1.0 - cos2))
    return cb * hp.e_a + sb * v, cb * hp.e_b + sign * sb * v


def initial_configuration(cfg: DescentConfig):
    ss = np.random.SeedSequence(int(cfg.seed))
    s_centers, s_x, s_y = ss.spawn(3)
    c_x, c_y = initial_centers(cfg, make_rng(s_centers))
    hp = cfg.pair
    if hp is None:
        x = sample(VmfParams(c_x, cfg.kappa_x), cfg.n, seed=s_x).data
        y = sample(VmfParams(c_y, cfg.kappa_y), cfg.n, seed=s_y).data
    else:
        x = sample_in_subspace(VmfParams(c_x, cfg.kappa_x), hp.basis_a, cfg.n, seed=s_x).data
        y = sample_in_subspace(VmfParams(c_y, cfg.kappa_y), hp.basis_b, cfg.n, seed=s_y).data
    return x.copy(), y.copy()


def _kappa_hat(m: np.ndarray, basis: Optional[np.ndarray]) -> float:
    coords = m if basis is None else m @ basis
    try:
        return float(estimate_params(coords).kappa)
    except DegenerateSample:
        return math.nan


def _angle(x, y) -> float:
    a, b = x.mean(axis=0), y.mean(axis=0)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return math.nan
    return float(np.arccos(np.clip(a @ b / (na * nb), -1.0, 1.0)))


def _row(step, loss, x, y, hp) -> TrajectoryRow:
    count, _ = alignment_violations(x, y) if x.shape[0] > 1 else (0, 0.0)
    return TrajectoryRow(
        step=step,
        loss=loss,
        delta_theta=_angle(x, y),
        kappa_x=_kappa_hat(x, None if hp is None else hp.basis_a),
        kappa_y=_kappa_hat(y, None if hp is None else hp.basis_b),
        mean_pair_cos=float(np.einsum("ij,ij->i", x, y).mean()),
        violations=count,
    )


def tangent_projection(m: np.ndarray, g: np.ndarray, normal: Optional[np.ndarray] = None) -> np.ndarray:
    """Remove from each row of ``g`` its component along the matching row of ``m`` and along ``normal``.

    ``normal`` is orthogonal to every row of ``m`` on a hyperplane, so the two
    removals commute.
    """
    g = g - np.einsum("ij,ij->i", g, m)[:, None] * m
    if normal is not None:
        g = g - np.outer(g @ normal, normal)
    return g


def _retract(m: np.ndarray, normal: Optional[np.ndarray]) -> np.ndarray:
    if normal is not None:
        m = m - np.outer(m @ normal, normal)
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def run_descent(cfg: DescentConfig, x0=None, y0=None) -> Trajectory:
    """Minimize the contrastive loss by projected gradient descent.

    Logs a :class:`TrajectoryRow` every ``log_every`` steps and after the last
    one. Raises :class:`DivergenceDetected` if the loss rises for
    ``DIVERGENCE_PATIENCE`` consecutive steps.
    """
    hp = cfg.pair
    if x0 is None or y0 is None:
        x, y = initial_configuration(cfg)
    else:
        x = np.array(x0, dtype=np.float64)
        y = np.array(y0, dtype=np.float64)
    n_a = None if hp is None else hp.n_a
    n_b = None if hp is None else hp.n_b
    traj = Trajectory(pair=hp)
    prev = math.inf
    rising = 0
    for step in range(cfg.steps + 1):
        loss, gx, gy = mcl_loss_and_gradients(x, y, cfg.tau)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at step {step}")
        rising = rising + 1 if loss > prev else 0
        prev = loss
        if step % cfg.log_every == 0 or step == cfg.steps:
            traj.rows.append(_row(step, loss, x, y, hp))
        if rising >= DIVERGENCE_PATIENCE:
            traj.x, traj.y = x, y
            raise DivergenceDetected(step, traj)
        if step == cfg.steps:
            break
        gx = tangent_projection(x, gx, n_a)
        gy = tangent_projection(y, gy, n_b)
        x = _retract(x - cfg.learning_rate * gx, n_a)
        y = _retract(y - cfg.learning_rate * gy, n_b)
    traj.x, traj.y = x, y
    return traj


def gradient_check(cfg: DescentConfig, probe_count: int = 16, step: float = 1e-5, floor: float = 1e-3) -> float:
    """Largest relative error between the analytic gradient and central differences.

    Probes ``probe_count`` random coordinates of the initial configuration,
    treating the loss as a function on all of ``R^{N x h}``. The error at a
    coordinate is ``|a - f| / max(|a|, |f|, floor)``, so gradients smaller
    than ``floor`` are compared in absolute terms.
    """
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    x, y = initial_configuration(cfg)
    _, gx, gy = mcl_loss_and_gradients(x, y, cfg.tau)
    rng = make_rng(np.random.SeedSequence([int(cfg.seed), 7]))
    worst = 0.0
    for _ in range(probe_count):
        side = int(rng.integers(2))
        i = int(rng.integers(cfg.n))
        k = int(rng.integers(cfg.h))
        analytic = (gx if side == 0 else gy)[i, k]
        vals = []
        for sgn in (1.0, -1.0):
            xs, ys = x.copy(), y.copy()
            (xs if side == 0 else ys)[i, k] += sgn * step
            vals.append(mcl_loss((xs, ys), cfg.tau).total)
        fd = (vals[0] - vals[1]) / (2.0 * step)
        worst = max(worst, abs(analytic - fd) / max(abs(analytic), abs(fd), floor))
    return worst


__all__ = [
    "CSV_HEADER",
    "DIVERGENCE_PATIENCE",
    "DescentConfig",
    "DivergenceDetected",
    "Trajectory",
    "TrajectoryRow",
    "gradient_check",
    "initial_centers",
    "initial_configuration",
    "run_descent",
    "tangent_projection",
]
