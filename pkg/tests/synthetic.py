"""Synthetic paired embeddings with a known shared subspace."""

import math

import numpy as np

from modgap.geometry import PairedConfig, random_rotation


def overlap_pair(h, d_overlap, d_private=3, gamma=math.radians(20), n=2000, seed=0):
    """Rows of X span ``S + A`` and rows of Y span ``S + B`` with ``dim S = d_overlap``.

    ``A`` and ``B`` both have dimension ``d_private``; the ``k``-th column of
    ``B`` is the ``k``-th column of ``A`` tilted by ``gamma`` towards a fresh
    direction, so every non-shared principal angle equals ``gamma``.
    Coefficients are isotropic Gaussians and rows are normalized.

    Returns
    -------
    PairedConfig, shared basis (h x d_overlap)
    """
    if d_overlap + 2 * d_private > h:
        raise ValueError("not enough room in R^h")
    rng = np.random.default_rng(seed)
    q = random_rotation(h, rng)
    s = q[:, :d_overlap]
    a = q[:, d_overlap : d_overlap + d_private]
    fresh = q[:, d_overlap + d_private : d_overlap + 2 * d_private]
    b = math.cos(gamma) * a + math.sin(gamma) * fresh
    bx = np.column_stack([s, a])
    by = np.column_stack([s, b])
    x = rng.standard_normal((n, bx.shape[1])) @ bx.T
    y = rng.standard_normal((n, by.shape[1])) @ by.T
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    return PairedConfig.from_arrays(x, y), s


def fibonacci_sphere(n):
    """``n`` nearly evenly spaced unit vectors on the 2-sphere."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(1.0 - z * z)
    lon = math.pi * (3.0 - math.sqrt(5.0)) * k
    return np.column_stack([r * np.cos(lon), r * np.sin(lon), z])


def projection_extremum_errors(draws=20, net_size=10**6, seed=0):
    """Brute-force check that ``max_{y in S_B} x . y`` is ``||P_B x||``, attained at ``P_B x / ||P_B x||``.

    Works at ``h = 4`` where each hyperplane sphere is a 2-sphere. Every draw
    uses a fresh hyperplane pair and a uniform ``x`` on the sphere of ``A``.

    Returns
    -------
    list of (angle error in degrees, value error)
    """
    from modgap.geometry import make_hyperplane_pair
    from modgap.vmf import VmfParams, sample_in_subspace

    net = fibonacci_sphere(net_size)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(draws):
        phi = rng.uniform(math.radians(5), math.radians(85))
        hp = make_hyperplane_pair(4, phi, seed=int(rng.integers(2**31)))
        x = sample_in_subspace(VmfParams(hp.e_a, 0.0), hp.basis_a, 1, seed=int(rng.integers(2**31))).data[0]
        # The net lives in the intrinsic coordinates of B.
        vals = net @ (hp.basis_b.T @ x)
        best = hp.basis_b @ net[int(np.argmax(vals))]
        pbx = hp.p_b(x)
        norm = float(np.linalg.norm(pbx))
        angle = math.degrees(math.acos(min(1.0, float(best @ pbx) / norm)))
        out.append((angle, abs(float(vals.max()) - norm)))
    return out
