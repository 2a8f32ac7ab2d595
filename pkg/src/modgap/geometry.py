"""Unit-sphere and hyperplane primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-6
ORTHO_TOL = 1e-8
CENTER_EPS = 1e-12


class GeometryError(ValueError):
    pass


class ZeroRow(GeometryError):
    def __init__(self, row: int):
        super().__init__(f"row {row} has (near) zero norm")
        self.row = row


class DimensionMismatch(GeometryError):
    pass


class NotOrthonormal(GeometryError):
    pass


class NotUnit(GeometryError):
    pass


@dataclass(frozen=True)
class EmbeddingMatrix:
    """``N x h`` matrix whose rows lie on the unit sphere."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D matrix, got shape {data.shape}")
        n, h = data.shape
        if n < 1 or h < 2:
            raise DimensionMismatch(f"need N >= 1 and h >= 2, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise GeometryError("embedding matrix contains non-finite values")
        dev = np.abs(np.linalg.norm(data, axis=1) - 1.0)
        if dev.max() > UNIT_TOL:
            bad = int(dev.argmax())
            raise NotUnit(f"row {bad} has norm deviation {dev[bad]:.3g}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n


def mean_and_center(m: np.ndarray):
    """Return ``(mean, center, defined)``; center is NaN when the mean vanishes."""
    mu = np.asarray(m, dtype=np.float64).mean(axis=0)
    norm = np.linalg.norm(mu)
    if norm < CENTER_EPS:
        return mu, np.full_like(mu, np.nan), False
    return mu, mu / norm, True


@dataclass(frozen=True)
class PairedConfig:
    """Paired image/text embeddings ``(X, Y)`` with their means and centers."""

    x: EmbeddingMatrix
    y: EmbeddingMatrix
    mu_x: np.ndarray = field(init=False, repr=False)
    mu_y: np.ndarray = field(init=False, repr=False)
    c_x: np.ndarray = field(init=False, repr=False)
    c_y: np.ndarray = field(init=False, repr=False)
    center_x_defined: bool = field(init=False)
    center_y_defined: bool = field(init=False)

    def __post_init__(self):
        x = self.x if isinstance(self.x, EmbeddingMatrix) else EmbeddingMatrix(self.x)
        y = self.y if isinstance(self.y, EmbeddingMatrix) else EmbeddingMatrix(self.y)
        if x.data.shape != y.data.shape:
            raise DimensionMismatch(
                f"X is {x.data.shape} but Y is {y.data.shape}; pairs must match"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        for side, m in (("x", x), ("y", y)):
            mu, c, ok = mean_and_center(m.data)
            object.__setattr__(self, f"mu_{side}", mu)
            object.__setattr__(self, f"c_{side}", c)
            object.__setattr__(self, f"center_{side}_defined", ok)

    @property
    def n(self) -> int:
        return self.x.n

    @property
    def h(self) -> int:
        return self.x.h

    @property
    def centers_defined(self) -> bool:
        return self.center_x_defined and self.center_y_defined

    @classmethod
    def from_arrays(cls, x, y, normalize: bool = False) -> "PairedConfig":
        if normalize:
            return cls(normalize_rows(x), normalize_rows(y))
        return cls(EmbeddingMatrix(x), EmbeddingMatrix(y))


def normalize_rows(m) -> EmbeddingMatrix:
    """Scale every row of ``m`` to unit Euclidean norm.

    Raises
    ------
    ZeroRow
        If some row has norm below ``1e-12``; the first such index is reported.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    norms = np.linalg.norm(m, axis=1)
    small = np.flatnonzero(~(norms >= CENTER_EPS))
    if small.size:
        raise ZeroRow(int(small[0]))
    return EmbeddingMatrix(m / norms[:, None])


def _ortho_error(basis: np.ndarray) -> float:
    d = basis.shape[1]
    return float(np.abs(basis.T @ basis - np.eye(d)).max()) if d else 0.0


def orthonormalize(basis) -> np.ndarray:
    """Orthonormal basis for the column space, via QR with one re-orthogonalisation pass."""
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim == 1:
        basis = basis[:, None]
    q, r = np.linalg.qr(basis)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    if _ortho_error(q) > 1e-10:
        q, _ = np.linalg.qr(q)
    return q


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector onto the column space of an orthonormal basis."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=np.float64)
        if b.ndim == 1:
            b = b[:, None]
        err = _ortho_error(b)
        if err > 1e-10:
            if err > ORTHO_TOL:
                raise NotOrthonormal(f"basis deviates from orthonormal by {err:.3g}")
            b = orthonormalize(b)
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def h(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def __call__(self, v):
        return project(self, v)


def project(p: Projector, v) -> np.ndarray:
    """Apply ``p`` to a vector, or row-wise to an ``(N, h)`` array."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != p.h:
        raise DimensionMismatch(f"vector dimension {v.shape[-1]} != projector dimension {p.h}")
    return (v @ p.basis) @ p.basis.T


def _check_orthonormal(b, name):
    b = np.asarray(b, dtype=np.float64)
    if b.ndim == 1:
        b = b[:, None]
    err = _ortho_error(b)
    if err > ORTHO_TOL:
        raise NotOrthonormal(f"{name} is not orthonormal (error {err:.3g})")
    return b


def principal_angles(b1, b2) -> np.ndarray:
    """Principal angles (radians, ascending) between two column spaces.

    Mathematically ``arccos`` of the singular values of ``b1.T @ b2``. Angles
    whose cosine is close to one are recovered from the sines of the residual
    ``b2 - b1 b1^T b2`` instead, since ``arccos`` near 1 loses half the digits.
    """
    b1 = _check_orthonormal(b1, "b1")
    b2 = _check_orthonormal(b2, "b2")
    if b1.shape[0] != b2.shape[0]:
        raise DimensionMismatch("bases live in different ambient dimensions")
    if b1.shape[1] < b2.shape[1]:
        b1, b2 = b2, b1
    k = b2.shape[1]
    if k == 0:
        return np.zeros(0)
    cosines = np.clip(np.linalg.svd(b1.T @ b2, compute_uv=False)[:k], 0.0, 1.0)
    resid = b2 - b1 @ (b1.T @ b2)
    sines = np.clip(np.linalg.svd(resid, compute_uv=False)[:k], 0.0, 1.0)
    # cosines descend, sines descend; pair smallest sines with largest cosines.
    sines = sines[::-1]
    angles = np.where(cosines**2 < 0.5, np.arccos(cosines), np.arcsin(sines))
    return np.sort(angles)


def angle_between(u, v) -> float:
    """Angle in ``[0, pi]`` between two unit vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch("vectors differ in dimension")
    for name, w in (("u", u), ("v", v)):
        if abs(np.linalg.norm(w) - 1.0) > UNIT_TOL:
            raise NotUnit(f"{name} is not a unit vector")
    return float(np.arccos(np.clip(u @ v, -1.0, 1.0)))


def random_rotation(h: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix."""
    q, r = np.linalg.qr(rng.standard_normal((h, h)))
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class HyperplanePair:
    """Two hyperplanes through the origin meeting at angle ``phi``.

    ``e_a`` and ``e_b`` are the unit directions inside each hyperplane that are
    orthogonal to the shared space, oriented so that ``e_a . e_b = cos(phi)``.
    """

    n_a: np.ndarray
    n_b: np.ndarray
    phi: float
    e_a: np.ndarray
    e_b: np.ndarray
    shared_basis: np.ndarray

    @property
    def h(self) -> int:
        return self.n_a.shape[0]

    @property
    def basis_a(self) -> np.ndarray:
        return np.column_stack([self.e_a, self.shared_basis])

    @property
    def basis_b(self) -> np.ndarray:
        return np.column_stack([self.e_b, self.shared_basis])

    @property
    def p_a(self) -> Projector:
        return Projector(self.basis_a)

    @property
    def p_b(self) -> Projector:
        return Projector(self.basis_b)

    @property
    def p_c(self) -> Projector:
        return Projector(self.shared_basis)

    def rotation_a_to_b(self) -> np.ndarray:
        """Rotation in the ``(e_a, e_b)`` plane carrying hyperplane A onto B.

        Fixes the shared space pointwise and maps ``e_a`` to ``e_b``.
        """
        u = self.e_a
        w = self.e_b - (self.e_b @ u) * u
        w /= np.linalg.norm(w)
        c, s = math.cos(self.phi), math.sin(self.phi)
        eye = np.eye(self.h)
        return (
            eye
            + (c - 1.0) * (np.outer(u, u) + np.outer(w, w))
            + s * (np.outer(w, u) - np.outer(u, w))
        )


def make_hyperplane_pair(h: int, phi: float, seed: int = 0, rotate: bool = True) -> HyperplanePair:
    """Construct a :class:`HyperplanePair` with angle ``phi`` in ``R^h``.

    The canonical coordinates put the two distinguished directions in the
    first coordinate plane, symmetric about ``e_1``, and the shared space on
    ``e_3 .. e_h``. A seeded Haar rotation is then applied to everything so
    nothing downstream can rely on axis alignment.
    """
    if int(h) != h or h < 3:
        raise GeometryError(f"h must be an integer >= 3, got {h!r}")
    phi = float(phi)
    if not (0.0 < phi < math.pi / 2):
        raise GeometryError(f"phi must lie in (0, pi/2), got {phi!r}")
    h = int(h)
    s, c = math.sin(phi / 2), math.cos(phi / 2)
    eye = np.eye(h)
    n_a = s * eye[0] - c * eye[1]
    n_b = -s * eye[0] - c * eye[1]
    e_a = c * eye[0] + s * eye[1]
    e_b = c * eye[0] - s * eye[1]
    shared = eye[:, 2:]
    if rotate:
        q = random_rotation(h, np.random.default_rng(seed))
        n_a, n_b, e_a, e_b = (q @ v for v in (n_a, n_b, e_a, e_b))
        shared = q @ shared
    return HyperplanePair(n_a=n_a, n_b=n_b, phi=phi, e_a=e_a, e_b=e_b, shared_basis=shared)
