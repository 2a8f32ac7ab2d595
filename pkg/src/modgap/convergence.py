r"""Limit functions of the shifted contrastive loss and their Monte-Carlo checks.

With ``nu`` the Bessel order of the sphere the samples live on,

.. math::
    \tilde M(w, t) = \sqrt{\kappa^2 + 2\kappa w/\tau + t^2/\tau^2}, \qquad
    \tilde J(w_1, w_2, t) = -\frac{w_1}{\tau}
        + \log\frac{I_\nu(\tilde M)}{\tilde M^\nu}
        - \log\frac{I_\nu(\kappa)}{\kappa^\nu}.

``J(w) = J~(w, w, 1)`` and ``J^(w, t) = J~(w, w, t)``. One side of a pair
``(a, b)`` against ``N`` draws from ``vMF(c, kappa)`` contributes
``-a.b/tau + log N + log E exp(a.Y/tau)``; the MGF of the vMF law turns the
last term into the Bessel difference above with ``w_2 = a.c`` and
``t = ||a||`` restricted to the sphere that carries ``Y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import HyperplanePair, make_hyperplane_pair
from .mcl import _check_tau, loss_minus_2logn, pair_loss_with
from .specfun import (
    DomainError,
    bessel_ratio,
    log_bessel_i_scaled,
    log_bessel_norm,
    log_uniform_partition_z,
)
from .vmf import VmfParams, make_rng, sample, sample_in_subspace

# Finite-N bias allowance added to the 3-SE band.
BIAS_ALLOWANCE = 0.02


def nu_ambient(h: int) -> float:
    return h / 2.0 - 1.0


def nu_subspace(h: int) -> float:
    """Order for a hyperplane sphere, which has one dimension fewer."""
    return (h - 1) / 2.0 - 1.0


def _check_unit_interval(name, w, lo=-1.0):
    w = np.asarray(w, dtype=np.float64)
    if np.any(~np.isfinite(w)) or np.any(w < lo - 1e-12) or np.any(w > 1.0 + 1e-12):
        raise DomainError(f"{name} must lie in [{lo:g}, 1]")
    return np.clip(w, lo, 1.0)


def _check_kappa(kappa) -> float:
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa <= 0:
        raise DomainError(f"kappa must be finite and > 0, got {kappa!r}")
    return kappa


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def m_tilde(w, t, kappa, tau):
    r"""Return :math:`\sqrt{\kappa^2 + 2\kappa w/\tau + t^2/\tau^2}`."""
    w = _check_unit_interval("w", w)
    t = _check_unit_interval("t", t, lo=0.0)
    kappa = _check_kappa(kappa)
    tau = _check_tau(tau)
    sq = kappa * kappa + 2.0 * kappa * w / tau + (t / tau) ** 2
    # (kappa + w/tau)^2 + (t^2 - w^2)/tau^2 >= 0 whenever |w| <= t.
    return _out(np.sqrt(np.maximum(sq, 0.0)))


def m_fun(w, kappa, tau):
    return m_tilde(w, 1.0, kappa, tau)


def j_tilde(w1, w2, t, kappa, nu, tau):
    """Limit of one side of the shifted per-pair loss.

    Parameters
    ----------
    w1 : float or array_like
        Cosine between the two members of the pair.
    w2 : float or array_like
        Cosine between the query and the center of the opposite modality.
    t : float or array_like
        Norm of the query after projection onto the span of the opposite
        modality's sphere.
    kappa, nu, tau : float
        Concentration of the opposite modality, its Bessel order and the
        temperature.
    """
    w1 = _check_unit_interval("w1", w1)
    m = m_tilde(w2, t, kappa, tau)
    tau = float(tau)
    val = -w1 / tau + log_bessel_norm(nu, m) - log_bessel_norm(nu, float(kappa))
    return _out(val)


def j_fun(w, kappa, nu, tau):
    return j_tilde(w, w, 1.0, kappa, nu, tau)


def j_hat(w, t, kappa, nu, tau):
    return j_tilde(w, w, t, kappa, nu, tau)


def h_fun(m, nu):
    r"""``I_{nu+1}(m) / (m I_nu(m))``, which decreases strictly in ``m > 0``."""
    return _out(np.asarray(bessel_ratio(nu, m)) / np.asarray(m, dtype=np.float64))


def thm1_bound(h: int, tau: float) -> float:
    r"""Limit of ``L - 2 log N`` for paired uniform embeddings.

    ``-2/tau + 2 log(Gamma(nu+1) (2 tau)^nu I_nu(1/tau))`` with ``nu = h/2 - 1``.
    """
    tau = _check_tau(tau)
    nu = nu_ambient(h)
    # The -2/tau cancels the exponential growth of I_nu(1/tau) exactly.
    return 2.0 * (math.lgamma(nu + 1.0) + nu * math.log(2.0 * tau) + float(log_bessel_i_scaled(nu, 1.0 / tau)))


def thm1_bound_via_z(h: int, tau: float) -> float:
    """Same value as :func:`thm1_bound`, through the partition function."""
    return -2.0 / tau + 2.0 * log_uniform_partition_z(h, tau)


def thm2_curve(delta_grid, kappa_x, kappa_y, h, tau) -> np.ndarray:
    """``J(cos d; kappa_y) + J(cos d; kappa_x)`` on the ambient sphere for each ``d``."""
    d = np.asarray(delta_grid, dtype=np.float64)
    if np.any(d < 0) or np.any(d > math.pi + 1e-12):
        raise DomainError("angles must lie in [0, pi]")
    w = np.cos(d)
    nu = nu_ambient(h)
    return np.asarray(j_fun(w, kappa_y, nu, tau) + j_fun(w, kappa_x, nu, tau), dtype=np.float64)


def _check_acute(name, a):
    a = float(a)
    if not (0.0 < a < math.pi / 2):
        raise DomainError(f"{name} must lie in (0, pi/2), got {a!r}")
    return a


def thm3_bound(phi, kappa, h, tau) -> float:
    """One modality's center term ``J~(cos phi, cos phi, cos phi)`` on a hyperplane pair.

    Sum the term for both modalities to get the limit of the center loss.
    """
    c = math.cos(_check_acute("phi", phi))
    return j_tilde(c, c, c, kappa, nu_subspace(h), tau)


def thm4_bound(theta_c, phi_min, kappa, h, tau) -> float:
    """Closed-form lower bound on a non-center pair under intra-modal isometry.

    Evaluated exactly as stated,
    ``2 J~(cos^2 th cos phi + sin^2 th, cos th, sqrt(cos^2 th cos^2 phi + sin^2 th))``.
    Its middle argument is ``x_i . c_x``; the pair's actual limit uses
    ``x_i . c_y``, see :func:`thm4_pair_limit`.
    """
    th = _check_acute("theta_c", theta_c)
    phi = float(phi_min)
    ct, st, cp = math.cos(th), math.sin(th), math.cos(phi)
    w1 = ct * ct * cp + st * st
    t = math.sqrt(ct * ct * cp * cp + st * st)
    return 2.0 * j_tilde(w1, ct, t, kappa, nu_subspace(h), tau)


def thm4_pair_limit(theta_c, delta_theta, kappa, h, tau, shared_dot: Optional[float] = None) -> float:
    """Limit of the shifted loss of a non-center pair on a hyperplane pair.

    The pair sits at angle ``theta_c`` from its own centers (which are
    orthogonal to the shared space and ``delta_theta`` apart). ``shared_dot``
    is ``P_C x_i . P_C y_i``; it defaults to ``sin^2 theta_c``, the aligned case
    ``P_C x_i = P_C y_i``. Each side contributes
    ``J~(x_i . y_i, cos th cos d, sqrt(cos^2 th cos^2 d + sin^2 th))``.
    """
    th = float(theta_c)
    ct, st, cd = math.cos(th), math.sin(th), math.cos(float(delta_theta))
    sd = st * st if shared_dot is None else float(shared_dot)
    w1 = ct * ct * cd + sd
    w2 = ct * cd
    t = math.sqrt(ct * ct * cd * cd + st * st)
    return 2.0 * j_tilde(w1, w2, t, kappa, nu_subspace(h), tau)


# ---------------------------------------------------------------------------
# Monte-Carlo harness


@dataclass(frozen=True)
class ConvergenceScenario:
    """Sampling setup for one theorem check.

    ``constraint`` is ``"ambient"`` or ``"subspace"``. Subspace checks build a
    :class:`HyperplanePair` per grid point (T3) or use ``pair`` / ``phi`` (T4),
    rotated by ``pair_seed``.
    """

    h: int
    tau: float
    kappa_x: float
    kappa_y: float
    constraint: str = "ambient"
    n: int = 8192
    replicates: int = 32
    seed: int = 0
    phi: Optional[float] = None
    pair: Optional[HyperplanePair] = None
    pair_seed: int = 0

    def __post_init__(self):
        if self.constraint not in ("ambient", "subspace"):
            raise ValueError(f"constraint must be 'ambient' or 'subspace', got {self.constraint!r}")
        _check_tau(self.tau)
        if self.n < 1 or self.replicates < 2:
            raise ValueError("need n >= 1 and replicates >= 2")

    @property
    def nu(self) -> float:
        return nu_subspace(self.h) if self.constraint == "subspace" else nu_ambient(self.h)

    def hyperplanes(self, phi: Optional[float] = None) -> HyperplanePair:
        if phi is None:
            if self.pair is not None:
                return self.pair
            phi = self.phi
        if phi is None:
            raise ValueError("subspace scenario needs phi or pair")
        return make_hyperplane_pair(self.h, phi, seed=self.pair_seed)


@dataclass
class GridPoint:
    x: float
    mc_mean: float
    mc_stderr: float
    analytic: float
    tolerance: float
    reference: Optional[float] = None

    @property
    def ok(self) -> bool:
        return abs(self.mc_mean - self.analytic) <= self.tolerance


@dataclass
class VerificationReport:
    which: str
    grid: list = field(default_factory=list)
    argmin_empirical: float = math.nan
    argmin_analytic: float = math.nan
    passed: bool = False

    def finalize(self) -> "VerificationReport":
        xs = np.array([g.x for g in self.grid])
        mc = np.array([g.mc_mean for g in self.grid])
        an = np.array([g.analytic for g in self.grid])
        i_mc, i_an = int(np.argmin(mc)), int(np.argmin(an))
        self.argmin_empirical = float(xs[i_mc])
        self.argmin_analytic = float(xs[i_an])
        self.passed = all(g.ok for g in self.grid) and abs(i_mc - i_an) <= 1
        return self

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "grid": [
                {
                    "x_rad": g.x,
                    "x_deg": math.degrees(g.x),
                    "mc_mean": g.mc_mean,
                    "mc_stderr": g.mc_stderr,
                    "analytic": g.analytic,
                    "tolerance": g.tolerance,
                    "reference": g.reference,
                    "ok": g.ok,
                }
                for g in self.grid
            ],
            "argmin_empirical_rad": self.argmin_empirical,
            "argmin_analytic_rad": self.argmin_analytic,
            "argmin_empirical_deg": math.degrees(self.argmin_empirical),
            "argmin_analytic_deg": math.degrees(self.argmin_analytic),
            "pass": self.passed,
        }


def _seed(scn: ConvergenceScenario, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(scn.seed), *map(int, path)])


def mc_summary(values) -> tuple:
    """Mean and standard error of replicate values."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _tolerance(se: float) -> float:
    return max(3.0 * se, BIAS_ALLOWANCE)


def _shift(n: int) -> float:
    # The inserted pair makes every softmax run over n + 1 terms.
    return 2.0 * math.log(n + 1)


def _t1_values(scn: ConvergenceScenario, gi: int, permute: bool = False) -> list:
    c = np.zeros(scn.h)
    c[0] = 1.0
    out = []
    for r in range(scn.replicates):
        x = sample(VmfParams(c, 0.0), scn.n, seed=_seed(scn, 1, gi, r)).data
        y = x
        if permute:
            perm = make_rng(_seed(scn, 11, gi, r)).permutation(scn.n)
            y = x[perm]
        out.append(loss_minus_2logn((x, y), scn.tau))
    return out


def _rotation_plane(h, delta):
    c = np.zeros(h)
    c[0] = 1.0
    d = np.zeros(h)
    d[0], d[1] = math.cos(delta), math.sin(delta)
    return c, d


def _t2_values(scn, gi, delta):
    c_x, c_y = _rotation_plane(scn.h, delta)
    out = []
    for r in range(scn.replicates):
        x = sample(VmfParams(c_x, scn.kappa_x), scn.n, seed=_seed(scn, 2, gi, r, 0)).data
        y = sample(VmfParams(c_y, scn.kappa_y), scn.n, seed=_seed(scn, 2, gi, r, 1)).data
        out.append(pair_loss_with(c_x, c_y, x, y, scn.tau) - _shift(scn.n))
    return out


def _draw_pair_sides(scn, hp, tag, gi, r):
    x = sample_in_subspace(VmfParams(hp.e_a, scn.kappa_x), hp.basis_a, scn.n, seed=_seed(scn, tag, gi, r, 0))
    y = sample_in_subspace(VmfParams(hp.e_b, scn.kappa_y), hp.basis_b, scn.n, seed=_seed(scn, tag, gi, r, 1))
    return x.data, y.data


def _t3_values(scn, gi, phi):
    hp = scn.hyperplanes(phi)
    out = []
    for r in range(scn.replicates):
        x, y = _draw_pair_sides(scn, hp, 3, gi, r)
        out.append(pair_loss_with(hp.e_a, hp.e_b, x, y, scn.tau) - _shift(scn.n))
    return out


def _shared_unit(hp: HyperplanePair, rng) -> np.ndarray:
    v = hp.shared_basis @ rng.standard_normal(hp.shared_basis.shape[1])
    return v / np.linalg.norm(v)


def thm4_pair(hp: HyperplanePair, theta_c: float, u, u_y=None):
    """Pair at angle ``theta_c`` from the centers ``e_a`` / ``e_b``.

    ``x = cos th e_a + sin th u`` and ``y = cos th e_b + sin th u_y`` with
    ``u, u_y`` unit vectors of the shared space; ``u_y = u`` (the default)
    gives ``P_C x = P_C y``.
    """
    u_y = u if u_y is None else u_y
    ct, st = math.cos(theta_c), math.sin(theta_c)
    return ct * hp.e_a + st * np.asarray(u), ct * hp.e_b + st * np.asarray(u_y)


def _t4_values(scn, gi, theta_c, hp, violators: int = 0) -> np.ndarray:
    """Replicate losses, shape ``(replicates, 1 + violators)``.

    Column 0 is the aligned pair; column ``k`` moves ``y_i``'s shared part to
    an independent direction. All columns see the same draws.
    """
    u = _shared_unit(hp, make_rng(_seed(scn, 40, gi)))
    pairs = [thm4_pair(hp, theta_c, u)]
    for k in range(violators):
        u_y = _shared_unit(hp, make_rng(_seed(scn, 41, gi, k)))
        pairs.append(thm4_pair(hp, theta_c, u, u_y))
    out = np.empty((scn.replicates, len(pairs)))
    for r in range(scn.replicates):
        x, y = _draw_pair_sides(scn, hp, 4, gi, r)
        for k, (xi, yi) in enumerate(pairs):
            out[r, k] = pair_loss_with(xi, yi, x, y, scn.tau) - _shift(scn.n)
    return out


def verify_theorem_mc(scn: ConvergenceScenario, which: str, grid: Optional[Sequence[float]] = None) -> VerificationReport:
    """Compare replicate-averaged shifted losses with the analytic limits.

    Parameters
    ----------
    scn : ConvergenceScenario
    which : {"T1", "T2", "T3", "T4"}
        ``T1`` paired uniform draws (grid ignored); ``T2`` ambient centers
        ``d`` apart; ``T3`` hyperplane pairs at angle ``phi`` with centers
        orthogonal to the shared space; ``T4`` a non-center pair at angle
        ``theta_c`` with aligned shared components.
    grid : sequence of float, optional
        Radians. Defaults to 13 points on ``[0, pi/2]`` (open interval for
        T3/T4).

    Notes
    -----
    A grid point passes when ``|mc - analytic| <= max(3 SE, 0.02)``; the
    report passes when every point does and the two argmins are at most one
    grid step apart. For T4 the analytic column is :func:`thm4_pair_limit`
    and ``reference`` carries :func:`thm4_bound` at ``phi_min = phi``.
    """
    which = which.upper()
    if which not in ("T1", "T2", "T3", "T4"):
        raise ValueError(f"unknown theorem {which!r}")
    if grid is None:
        grid = np.linspace(0.0, math.pi / 2, 13)
        if which in ("T3", "T4"):
            grid = grid[1:-1]
    grid = [float(g) for g in grid]
    rep = VerificationReport(which=which)

    if which == "T1":
        m, se = mc_summary(_t1_values(scn, 0))
        rep.grid.append(GridPoint(0.0, m, se, thm1_bound(scn.h, scn.tau), _tolerance(se)))
        return rep.finalize()

    if which in ("T3", "T4") and scn.constraint != "subspace":
        raise ValueError(f"{which} needs a subspace scenario")
    nu = nu_subspace(scn.h)
    hp = scn.hyperplanes() if which == "T4" else None
    for gi, g in enumerate(grid):
        ref = None
        if which == "T2":
            vals = _t2_values(scn, gi, g)
            an = float(thm2_curve([g], scn.kappa_x, scn.kappa_y, scn.h, scn.tau)[0])
        elif which == "T3":
            vals = _t3_values(scn, gi, g)
            c = math.cos(g)
            an = j_tilde(c, c, c, scn.kappa_x, nu, scn.tau) + j_tilde(c, c, c, scn.kappa_y, nu, scn.tau)
        else:
            if scn.kappa_x != scn.kappa_y:
                raise ValueError("T4 assumes equal concentrations")
            vals = _t4_values(scn, gi, g, hp)[:, 0]
            an = thm4_pair_limit(g, hp.phi, scn.kappa_x, scn.h, scn.tau)
            ref = thm4_bound(g, hp.phi, scn.kappa_x, scn.h, scn.tau)
        m, se = mc_summary(vals)
        rep.grid.append(GridPoint(g, m, se, float(an), _tolerance(se), ref))
    return rep.finalize()


def t1_permuted_mc(scn: ConvergenceScenario) -> tuple:
    """Shifted loss of paired uniform draws after shuffling one side."""
    return mc_summary(_t1_values(scn, 0, permute=True))


@dataclass
class SharedPartComparison:
    theta_c: float
    aligned: float
    aligned_stderr: float
    violators: list

    @property
    def aligned_is_lowest(self) -> bool:
        return all(self.aligned < v for v in self.violators)


def shared_part_comparison(scn: ConvergenceScenario, theta_c: float, n_violators: int = 16, grid_index: int = 0) -> SharedPartComparison:
    """Aligned pair versus pairs at the same ``theta_c`` whose shared parts differ.

    Every violator keeps ``x_i`` and moves ``y_i``'s shared component to an
    independent random direction, so ``P_C x_i != P_C y_i``. Samples are
    shared across all candidates, making the comparison paired.
    """
    hp = scn.hyperplanes()
    vals = _t4_values(scn, grid_index, theta_c, hp, violators=n_violators)
    m, se = mc_summary(vals[:, 0])
    return SharedPartComparison(theta_c, m, se, [float(v) for v in vals[:, 1:].mean(axis=0)])


__all__ = [
    "SharedPartComparison",
    "BIAS_ALLOWANCE",
    "ConvergenceScenario",
    "GridPoint",
    "VerificationReport",
    "shared_part_comparison",
    "h_fun",
    "j_fun",
    "j_hat",
    "j_tilde",
    "m_fun",
    "m_tilde",
    "mc_summary",
    "nu_ambient",
    "nu_subspace",
    "t1_permuted_mc",
    "thm1_bound",
    "thm1_bound_via_z",
    "thm2_curve",
    "thm3_bound",
    "thm4_bound",
    "thm4_pair",
    "thm4_pair_limit",
    "verify_theorem_mc",
]
