import math

import numpy as np
import pytest

from modgap.geometry import (
    DimensionMismatch,
    EmbeddingMatrix,
    GeometryError,
    NotOrthonormal,
    NotUnit,
    PairedConfig,
    Projector,
    ZeroRow,
    angle_between,
    make_hyperplane_pair,
    normalize_rows,
    orthonormalize,
    principal_angles,
    project,
    random_rotation,
)


def brute_force_principal_cosine(b1, b2, n=200_000, seed=0):
    """Largest u.v over unit u in span(b1), v in span(b2), by random search."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, b1.shape[1]))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    u = a @ b1.T
    # Best v for a given u is the normalized projection of u onto span(b2).
    pu = (u @ b2) @ b2.T
    return float(np.max(np.linalg.norm(pu, axis=1)))


class TestEmbeddingMatrix:
    def test_rejects_non_unit(self):
        with pytest.raises(NotUnit):
            EmbeddingMatrix(np.array([[1.0, 1.0]]))

    def test_shape_checks(self):
        with pytest.raises(DimensionMismatch):
            EmbeddingMatrix(np.array([[1.0]]))
        with pytest.raises(DimensionMismatch):
            EmbeddingMatrix(np.array([1.0, 0.0]))

    def test_read_only(self):
        m = EmbeddingMatrix(np.eye(3))
        with pytest.raises(ValueError):
            m.data[0, 0] = 2.0
        assert (m.n, m.h) == (3, 3)


class TestNormalizeRows:
    def test_basic(self):
        np.testing.assert_allclose(normalize_rows([[3.0, 4.0]]).data, [[0.6, 0.8]], atol=1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        m = normalize_rows(rng.standard_normal((20, 5))).data
        np.testing.assert_allclose(normalize_rows(m).data, m, atol=1e-12)

    def test_zero_row(self):
        with pytest.raises(ZeroRow) as info:
            normalize_rows([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        assert "1" in str(info.value)


class TestPairedConfig:
    def test_centers(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        cfg = PairedConfig.from_arrays(x, x[::-1])
        np.testing.assert_allclose(cfg.mu_x, [0.5, 0.5])
        np.testing.assert_allclose(cfg.c_x, [1 / math.sqrt(2)] * 2)
        assert cfg.centers_defined

    def test_undefined_center(self):
        x = np.array([[1.0, 0.0], [-1.0, 0.0]])
        cfg = PairedConfig.from_arrays(x, x)
        assert not cfg.centers_defined
        assert np.all(np.isnan(cfg.c_x))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            PairedConfig.from_arrays(np.eye(3), np.eye(3)[:2])


class TestProject:
    def test_plane_in_r3(self):
        p = Projector(np.eye(3)[:, :2])
        np.testing.assert_allclose(project(p, [1.0, 2.0, 3.0]), [1.0, 2.0, 0.0])

    def test_in_span_and_orthogonal(self):
        p = Projector(np.eye(3)[:, :2])
        np.testing.assert_allclose(p([1.0, -2.0, 0.0]), [1.0, -2.0, 0.0])
        np.testing.assert_allclose(p([0.0, 0.0, 5.0]), [0.0, 0.0, 0.0])

    def test_idempotent_symmetric_contractive(self):
        rng = np.random.default_rng(1)
        for d in [1, 3, 6]:
            p = Projector(orthonormalize(rng.standard_normal((9, d))))
            m = p.matrix
            np.testing.assert_allclose(m @ m, m, atol=1e-10)
            np.testing.assert_allclose(m, m.T, atol=1e-10)
            v = rng.standard_normal(9)
            assert np.linalg.norm(p(v)) <= np.linalg.norm(v) + 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            project(Projector(np.eye(3)[:, :2]), [1.0, 2.0])

    def test_rejects_non_orthonormal(self):
        with pytest.raises(NotOrthonormal):
            Projector(np.array([[1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]))


class TestPrincipalAngles:
    def test_identical(self):
        b = orthonormalize(np.random.default_rng(2).standard_normal((6, 3)))
        np.testing.assert_allclose(principal_angles(b, b), 0.0, atol=1e-12)

    def test_orthogonal_planes(self):
        e = np.eye(4)
        np.testing.assert_allclose(principal_angles(e[:, :2], e[:, 2:]), [math.pi / 2] * 2, atol=1e-12)

    def test_tilted_plane(self):
        a = 0.7
        e = np.eye(3)
        b1 = e[:, :2]
        b2 = np.column_stack([e[:, 0], math.cos(a) * e[:, 1] + math.sin(a) * e[:, 2]])
        got = principal_angles(b1, b2)
        np.testing.assert_allclose(got, [0.0, a], atol=1e-9)
        # The largest cosine over the two planes is the smallest angle.
        np.testing.assert_allclose(brute_force_principal_cosine(b1, b2), math.cos(got[0]), atol=1e-6)

    def test_small_angles_accurate(self):
        a = 1e-7
        e = np.eye(3)
        b2 = np.column_stack([e[:, 0], math.cos(a) * e[:, 1] + math.sin(a) * e[:, 2]])
        np.testing.assert_allclose(principal_angles(e[:, :2], b2), [0.0, a], rtol=1e-6, atol=1e-15)

    def test_symmetric_and_rotation_invariant(self):
        rng = np.random.default_rng(4)
        b1 = orthonormalize(rng.standard_normal((7, 3)))
        b2 = orthonormalize(rng.standard_normal((7, 4)))
        q = random_rotation(7, rng)
        g = principal_angles(b1, b2)
        np.testing.assert_allclose(principal_angles(b2, b1), g, atol=1e-9)
        np.testing.assert_allclose(principal_angles(q @ b1, q @ b2), g, atol=1e-9)
        assert g.size == 3
        assert np.all(np.diff(g) >= 0)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(NotOrthonormal):
            principal_angles(2 * np.eye(3)[:, :1], np.eye(3)[:, :1])


class TestAngleBetween:
    def test_cases(self):
        e = np.eye(3)
        assert angle_between(e[0], e[0]) == 0.0
        np.testing.assert_allclose(angle_between(e[0], e[1]), math.pi / 2)
        np.testing.assert_allclose(angle_between(e[0], -e[0]), math.pi)

    def test_non_unit(self):
        with pytest.raises(NotUnit):
            angle_between([2.0, 0.0], [1.0, 0.0])


class TestHyperplanePair:
    def test_principal_angles_h4(self):
        hp = make_hyperplane_pair(4, math.pi / 6, seed=0)
        np.testing.assert_allclose(principal_angles(hp.basis_a, hp.basis_b), [0.0, 0.0, math.pi / 6], atol=1e-9)

    def test_h3_has_one_shared_column(self):
        assert make_hyperplane_pair(3, 0.5).shared_basis.shape == (3, 1)

    def test_deterministic(self):
        a = make_hyperplane_pair(6, 0.4, seed=11)
        b = make_hyperplane_pair(6, 0.4, seed=11)
        for f in ("n_a", "n_b", "e_a", "e_b", "shared_basis"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    @pytest.mark.parametrize("h,phi", [(3, 0.2), (8, math.radians(30)), (16, 1.2)])
    def test_invariants(self, h, phi):
        hp = make_hyperplane_pair(h, phi, seed=3)
        c = math.cos(phi)
        np.testing.assert_allclose(hp.n_a @ hp.n_b, c, atol=1e-12)
        np.testing.assert_allclose(hp.e_a @ hp.e_b, c, atol=1e-12)
        np.testing.assert_allclose([hp.e_a @ hp.n_a, hp.e_b @ hp.n_b], 0.0, atol=1e-12)
        s = hp.shared_basis
        np.testing.assert_allclose(s.T @ s, np.eye(h - 2), atol=1e-12)
        np.testing.assert_allclose(s.T @ np.column_stack([hp.n_a, hp.n_b, hp.e_a, hp.e_b]), 0.0, atol=1e-12)
        np.testing.assert_allclose(hp.p_a(hp.e_b), c * hp.e_a, atol=1e-9)
        np.testing.assert_allclose(hp.p_b(hp.e_a), c * hp.e_b, atol=1e-9)

    def test_shared_projector_composition(self):
        hp = make_hyperplane_pair(6, 0.5, seed=2)
        pa, pb, pc = hp.p_a.matrix, hp.p_b.matrix, hp.p_c.matrix
        c = math.cos(hp.phi)
        np.testing.assert_allclose(pa @ pb, pc + c * np.outer(hp.e_a, hp.e_b), atol=1e-12)
        np.testing.assert_allclose(pb @ pa, pc + c * np.outer(hp.e_b, hp.e_a), atol=1e-12)
        v = hp.shared_basis @ np.random.default_rng(0).standard_normal(4)
        np.testing.assert_allclose(pa @ pb @ v, pc @ v, atol=1e-9)
        np.testing.assert_allclose(pb @ pa @ v, pc @ v, atol=1e-9)

    def test_rotation_a_to_b(self):
        hp = make_hyperplane_pair(7, 0.9, seed=5)
        r = hp.rotation_a_to_b()
        np.testing.assert_allclose(r @ r.T, np.eye(7), atol=1e-12)
        np.testing.assert_allclose(r @ hp.e_a, hp.e_b, atol=1e-12)
        np.testing.assert_allclose(r @ hp.shared_basis, hp.shared_basis, atol=1e-12)
        np.testing.assert_allclose(r @ hp.n_a, hp.n_b, atol=1e-12)

    @pytest.mark.parametrize("phi", [0.0, math.pi / 2, -0.1])
    def test_domain(self, phi):
        with pytest.raises(GeometryError):
            make_hyperplane_pair(5, phi)
