r"""Log-domain modified Bessel and Struve functions.

Everything here is evaluated from the defining power series

.. math::
    I_\nu(x) = \sum_k \frac{(x/2)^{2k+\nu}}{k!\,\Gamma(\nu+k+1)}, \qquad
    L_\nu(x) = \sum_k \frac{(x/2)^{2k+\nu+1}}{\Gamma(k+3/2)\,\Gamma(k+\nu+3/2)}

summed in log space over a window centred on the largest term, so orders in
the thousands and arguments up to ``1e4`` neither overflow nor underflow.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln, ive, logsumexp

LOG_2 = math.log(2.0)
LOG_PI = math.log(math.pi)

# Terms below exp(-45) of the peak cannot move a double-precision sum.
_TAIL_DROP = 45.0
# Above this argument the series window grows like sqrt(x); I_nu switches to
# the exponentially scaled scipy routine and L_nu is not supported.
SERIES_MAX = 1e4


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _check_order(nu: float) -> float:
    nu = float(nu)
    if not math.isfinite(nu) or nu < 0:
        raise DomainError(f"order must be finite and >= 0, got {nu!r}")
    return nu


def _check_arg(x: float, strict: bool = False) -> float:
    x = float(x)
    if not math.isfinite(x) or x < 0 or (strict and x == 0):
        bound = "> 0" if strict else ">= 0"
        raise DomainError(f"argument must be finite and {bound}, got {x!r}")
    return x


def _peak_index(q: float, shift: float) -> int:
    # Largest term of sum_k q^k / (Gamma(k+a) Gamma(k+a+shift)) sits where
    # q = (k + a)(k + a + shift); solving the quadratic gives a good centre.
    k = 0.5 * (-(shift + 2.0) + math.sqrt(shift * shift + 4.0 * q))
    return max(0, int(math.ceil(k)))


def _windowed_log_sum(log_term, k_peak: int) -> float:
    width = int(12.0 * math.sqrt(k_peak + 1.0)) + 60
    while True:
        lo = max(0, k_peak - width)
        ks = np.arange(lo, k_peak + width + 1, dtype=np.float64)
        terms = log_term(ks)
        top = terms.max()
        left_ok = lo == 0 or terms[0] < top - _TAIL_DROP
        if left_ok and terms[-1] < top - _TAIL_DROP:
            return float(logsumexp(terms))
        width *= 2


def _log_bessel_scaled_large(nu: float, x: float):
    """``log I_nu(x) - x`` beyond the series range, or ``None`` if unavailable."""
    if nu > x:
        return None
    scaled = float(ive(nu, x))
    if scaled > 0.0 and math.isfinite(scaled):
        return math.log(scaled)
    mu = 4.0 * nu * nu
    if x >= 1e8 * (mu + 1.0):
        # Hankel expansion; the next term is below double precision here.
        return -0.5 * (math.log(2.0 * math.pi) + math.log(x)) + math.log1p(-(mu - 1.0) / (8.0 * x))
    return None


def _log_bessel_norm(nu: float, x: float) -> float:
    # log(I_nu(x) / x^nu); the series in (x/2)^2 has no singularity at x=0.
    if x == 0.0:
        return -nu * LOG_2 - math.lgamma(nu + 1.0)
    if x > SERIES_MAX:
        scaled = _log_bessel_scaled_large(nu, x)
        if scaled is not None:
            return scaled + x - nu * math.log(x)
    if not math.isfinite(0.25 * x * x):
        raise DomainError(f"argument {x!r} too large for order {nu!r}")
    log_q = 2.0 * math.log(0.5 * x)
    k_peak = _peak_index(0.25 * x * x, nu)

    def log_term(k):
        return k * log_q - gammaln(k + 1.0) - gammaln(k + nu + 1.0)

    return _windowed_log_sum(log_term, k_peak) - nu * LOG_2


def _log_struve_l(nu: float, x: float) -> float:
    if x == 0.0:
        return -math.inf
    if x > SERIES_MAX:
        raise DomainError(f"Struve argument must be <= {SERIES_MAX:g}, got {x!r}")
    log_half = math.log(0.5 * x)
    k_peak = _peak_index(0.25 * x * x, nu)

    def log_term(k):
        return 2.0 * k * log_half - gammaln(k + 1.5) - gammaln(k + nu + 1.5)

    return _windowed_log_sum(log_term, k_peak) + (nu + 1.0) * log_half


def _maybe_scalar(fn, *args):
    arrays = np.broadcast_arrays(*[np.asarray(a, dtype=np.float64) for a in args])
    if arrays[0].ndim == 0:
        return fn(*[float(a) for a in arrays])
    out = np.empty(arrays[0].shape)
    for idx in np.ndindex(out.shape):
        out[idx] = fn(*[float(a[idx]) for a in arrays])
    return out


def log_bessel_norm(nu, x):
    r"""Return :math:`\log(I_\nu(x) / x^\nu)`.

    Continuous at ``x = 0`` where it equals :math:`-\nu\log 2 - \log\Gamma(\nu+1)`.
    Accepts scalars or broadcastable arrays.
    """

    def scalar(n, v):
        return _log_bessel_norm(_check_order(n), _check_arg(v))

    return _maybe_scalar(scalar, nu, x)


def log_bessel_i(nu, x):
    r"""Return :math:`\log I_\nu(x)`.

    ``I_nu(0) = 0`` for ``nu > 0`` is reported as ``-inf``.

    Parameters
    ----------
    nu : float or array_like
        Order, finite and non-negative.
    x : float or array_like
        Argument, finite and non-negative.
    """

    def scalar(n, v):
        n = _check_order(n)
        v = _check_arg(v)
        if v == 0.0:
            return 0.0 if n == 0.0 else -math.inf
        return _log_bessel_norm(n, v) + n * math.log(v)

    return _maybe_scalar(scalar, nu, x)


def log_bessel_i_scaled(nu, x):
    r"""Return :math:`\log I_\nu(x) - x` without forming :math:`\log I_\nu(x)` for large ``x``."""

    def scalar(n, v):
        n = _check_order(n)
        v = _check_arg(v)
        if v == 0.0:
            return 0.0 if n == 0.0 else -math.inf
        if v > SERIES_MAX:
            scaled = _log_bessel_scaled_large(n, v)
            if scaled is not None:
                return scaled
        return _log_bessel_norm(n, v) + n * math.log(v) - v

    return _maybe_scalar(scalar, nu, x)


def bessel_ratio(nu, x):
    r"""Return :math:`I_{\nu+1}(x) / I_\nu(x)` for ``x > 0``."""

    def scalar(n, v):
        n = _check_order(n)
        v = _check_arg(v, strict=True)
        return math.exp(
            _log_bessel_norm(n + 1.0, v) - _log_bessel_norm(n, v) + math.log(v)
        )

    return _maybe_scalar(scalar, nu, x)


def log_struve_l(nu, x):
    r"""Return :math:`\log L_\nu(x)` for the modified Struve function."""

    def scalar(n, v):
        return _log_struve_l(_check_order(n), _check_arg(v))

    return _maybe_scalar(scalar, nu, x)


def _check_dim(h) -> int:
    if int(h) != h or h < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {h!r}")
    return int(h)


def log_dot_marginal_density(t, h: int):
    """Log density of ``x . y`` for ``y`` uniform on the sphere in R^h."""
    h = _check_dim(h)
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(np.abs(t) > 1.0):
        raise DomainError("t must lie in [-1, 1]")
    log_norm = math.lgamma(h / 2.0) - math.lgamma((h - 1) / 2.0) - 0.5 * LOG_PI
    expo = (h - 3) / 2.0
    with np.errstate(divide="ignore"):
        body = expo * np.log1p(-t * t) if expo != 0 else np.zeros_like(t)
    out = log_norm + body
    return float(out) if out.ndim == 0 else out


def dot_marginal_density(t, h: int):
    r"""Density :math:`p_h(t) \propto (1-t^2)^{(h-3)/2}` of a coordinate of a
    uniform point on :math:`\mathbb{S}^{h-1}`.

    For ``h = 2`` the density diverges at ``t = +-1`` (returned as ``inf``).
    """
    out = np.exp(log_dot_marginal_density(t, h))
    return float(out) if np.ndim(out) == 0 else out


def log_uniform_partition_z(h: int, tau: float) -> float:
    r"""Return :math:`\log Z_\tau` with
    :math:`Z_\tau = \Gamma(h/2)(2\tau)^{h/2-1} I_{h/2-1}(1/\tau)`."""
    h = _check_dim(h)
    tau = float(tau)
    if not math.isfinite(tau) or tau <= 0:
        raise DomainError(f"tau must be finite and > 0, got {tau!r}")
    nu = h / 2.0 - 1.0
    # Z = Gamma(nu+1) 2^nu * (I_nu(1/tau) / (1/tau)^nu), written via the
    # normalised Bessel so large tau stays exact (Z -> 1).
    return math.lgamma(nu + 1.0) + nu * LOG_2 + _log_bessel_norm(nu, 1.0 / tau)


def uniform_partition_z(h: int, tau: float) -> float:
    """Expectation of ``exp(x . y / tau)`` for ``y`` uniform on the sphere in R^h."""
    return math.exp(log_uniform_partition_z(h, tau))
