import math

import mpmath as mp
import numpy as np
import pytest

import lemma_grids
from modgap.convergence import (
    ConvergenceScenario,
    shared_part_comparison,
    j_fun,
    j_hat,
    j_tilde,
    m_fun,
    m_tilde,
    nu_subspace,
    thm1_bound,
    thm1_bound_via_z,
    thm2_curve,
    thm3_bound,
    thm4_bound,
    thm4_pair_limit,
    verify_theorem_mc,
)
from modgap.specfun import DomainError

mp.mp.dps = 40


def mp_j_tilde(w1, w2, t, kappa, nu, tau):
    """Independent composition in extended precision."""
    w1, w2, t, kappa, nu, tau = map(mp.mpf, (w1, w2, t, kappa, nu, tau))
    m = mp.sqrt(kappa**2 + 2 * kappa * w2 / tau + t**2 / tau**2)
    lbn = lambda x: mp.log(mp.besseli(nu, x)) - nu * mp.log(x)
    return float(-w1 / tau + lbn(m) - lbn(kappa))


class TestM:
    def test_values(self):
        assert m_fun(1.0, 1.0, 1.0) == pytest.approx(2.0, abs=1e-15)
        assert m_fun(0.0, 3.0, 0.5) == pytest.approx(math.sqrt(13), abs=1e-14)
        assert m_fun(-0.5, 1.0, 1.0) == pytest.approx(1.0, abs=1e-15)
        assert m_tilde(0.0, 0.0, 2.5, 0.7) == pytest.approx(2.5, abs=1e-15)
        assert m_tilde(0.0, 1.0, 2.0, 0.5) == pytest.approx(math.sqrt(8), abs=1e-14)

    def test_reduction(self):
        w = np.linspace(-1, 1, 41)
        np.testing.assert_array_equal(m_tilde(w, 1.0, 3.0, 0.4), m_fun(w, 3.0, 0.4))

    def test_domain(self):
        with pytest.raises(DomainError):
            m_fun(1.5, 1.0, 1.0)
        with pytest.raises(DomainError):
            m_tilde(0.0, -0.2, 1.0, 1.0)


class TestJ:
    def test_cancellation(self):
        assert j_tilde(0.3, -0.5, 1.0, 1.0, 2.0, 1.0) == pytest.approx(-0.3, abs=1e-13)
        assert j_fun(-0.5, 1.0, 2.0, 1.0) == pytest.approx(0.5, abs=1e-13)

    def test_extended_precision_oracle(self):
        got = j_tilde(0.8, 0.8, 0.9, 4.0, 3.0, 0.5)
        np.testing.assert_allclose(got, mp_j_tilde(0.8, 0.8, 0.9, 4.0, 3.0, 0.5), rtol=1e-9)

    def test_reductions(self):
        w = np.linspace(-1, 1, 33)
        np.testing.assert_allclose(j_tilde(w, w, 1.0, 2.0, 3.0, 0.5), j_fun(w, 2.0, 3.0, 0.5), atol=1e-12)
        np.testing.assert_allclose(j_hat(w * 0.5, 0.5, 2.0, 3.0, 0.5), j_tilde(w * 0.5, w * 0.5, 0.5, 2.0, 3.0, 0.5), atol=1e-12)

    def test_reflection_example(self):
        assert j_fun(-0.3, 2.0, 3.0, 1.0) > j_fun(0.3, 2.0, 3.0, 1.0)


class TestLemmaGrids:
    @pytest.mark.parametrize("name", sorted(lemma_grids.ALL))
    def test_property(self, name):
        assert lemma_grids.ALL[name]() == []


class TestThm1:
    def test_h2(self):
        np.testing.assert_allclose(thm1_bound(2, 1.0), -2 + 2 * math.log(float(mp.besseli(0, 1))), rtol=1e-13)
        np.testing.assert_allclose(thm1_bound(2, 1.0), -1.528171, atol=1e-6)

    def test_h3(self):
        np.testing.assert_allclose(thm1_bound(3, 1.0), -2 + 2 * math.log(math.sinh(1.0)), rtol=1e-13)
        np.testing.assert_allclose(thm1_bound(3, 1.0), -1.677121, atol=1e-6)

    @pytest.mark.parametrize("h", [2, 4, 9, 128, 1024])
    @pytest.mark.parametrize("tau", [0.05, 0.5, 1.0, 30.0])
    def test_two_paths(self, h, tau):
        assert abs(thm1_bound(h, tau) - thm1_bound_via_z(h, tau)) < 1e-10

    def test_large_tau(self):
        assert abs(thm1_bound(16, 1e7)) < 1e-6

    @pytest.mark.parametrize("h,tau", [(9, 1e-5), (128, 1e-3), (4, 1e-9)])
    def test_small_tau(self, h, tau):
        nu, t = mp.mpf(h) / 2 - 1, mp.mpf(tau)
        want = -2 / t + 2 * (mp.loggamma(nu + 1) + nu * mp.log(2 * t) + mp.log(mp.besseli(nu, 1 / t, maxterms=10**7)))
        np.testing.assert_allclose(thm1_bound(h, tau), float(want), rtol=1e-12)


class TestThm2:
    def test_zero_entry(self):
        val = thm2_curve([0.0], 3.0, 5.0, 10, 0.5)[0]
        np.testing.assert_allclose(val, j_fun(1.0, 5.0, 4.0, 0.5) + j_fun(1.0, 3.0, 4.0, 0.5), rtol=1e-14)

    def test_increasing_to_right_angle(self):
        v = thm2_curve(np.linspace(0, math.pi / 2, 91), 4.0, 4.0, 16, 0.5)
        assert np.all(np.diff(v) > 0)

    @pytest.mark.parametrize("kappa,h,tau", [(0.5, 4, 0.2), (4.0, 16, 0.5), (50.0, 128, 1.0), (2.0, 3, 2.0)])
    def test_argmin_at_zero(self, kappa, h, tau):
        v = thm2_curve(np.linspace(0, math.pi, 181), kappa, kappa * 1.5, h, tau)
        assert int(np.argmin(v)) == 0


class TestThm3:
    def test_ordering(self):
        assert thm3_bound(0.3, 4.0, 9, 0.5) < thm3_bound(0.6, 4.0, 9, 0.5)

    def test_limit(self):
        np.testing.assert_allclose(thm3_bound(1e-9, 4.0, 9, 0.5), j_tilde(1, 1, 1, 4.0, nu_subspace(9), 0.5), atol=1e-8)

    def test_m_identity(self):
        for phi in [0.1, 0.7, 1.3]:
            c = math.cos(phi)
            np.testing.assert_allclose(m_tilde(c, c, 4.0, 0.5), abs(4.0 + c / 0.5), rtol=1e-14)

    def test_domain(self):
        with pytest.raises(DomainError):
            thm3_bound(0.0, 4.0, 9, 0.5)


class TestThm4:
    def test_extended_precision_oracle(self):
        th, phi = 0.6, 0.4
        ct, st, cp = math.cos(th), math.sin(th), math.cos(phi)
        want = 2 * mp_j_tilde(ct * ct * cp + st * st, ct, math.sqrt(ct * ct * cp * cp + st * st), 4.0, 3.0, 0.5)
        np.testing.assert_allclose(thm4_bound(th, phi, 4.0, 9, 0.5), want, rtol=1e-9)

    def test_right_angle_limit(self):
        near = thm4_bound(math.pi / 2 - 1e-9, 0.5, 4.0, 9, 0.5)
        np.testing.assert_allclose(near, 2 * j_tilde(1.0, 0.0, 1.0, 4.0, 3.0, 0.5), atol=1e-7)

    def test_first_argument_at_least_cos_phi(self):
        for th in np.linspace(0.01, 1.56, 40):
            for phi in [0.1, 0.6, 1.2]:
                ct = math.cos(th)
                assert ct * ct * math.cos(phi) + math.sin(th) ** 2 >= math.cos(phi) - 1e-15

    def test_domain(self):
        with pytest.raises(DomainError):
            thm4_bound(math.pi / 2, 0.3, 4.0, 9, 0.5)

    def test_pair_limit_reduces_at_right_angle_gap(self):
        # At delta = phi the per-pair limit uses x_i . c_y = cos(theta) cos(phi).
        th, phi = 0.7, 0.5
        ct, st, cp = math.cos(th), math.sin(th), math.cos(phi)
        want = 2 * j_tilde(ct * ct * cp + st * st, ct * cp, math.sqrt(ct * ct * cp * cp + st * st), 4.0, 3.0, 0.5)
        np.testing.assert_allclose(thm4_pair_limit(th, phi, 4.0, 9, 0.5), want, rtol=1e-14)


class TestHarness:
    """Small-scale runs of the Monte-Carlo harness; full-size runs live in the acceptance suite."""

    def test_t1(self):
        scn = ConvergenceScenario(h=4, tau=1.0, kappa_x=1.0, kappa_y=1.0, n=2048, replicates=8)
        rep = verify_theorem_mc(scn, "T1")
        assert rep.passed, rep.to_dict()

    def test_t2_small(self):
        scn = ConvergenceScenario(h=8, tau=0.5, kappa_x=4.0, kappa_y=4.0, n=2048, replicates=8, seed=3)
        rep = verify_theorem_mc(scn, "T2", np.radians([0, 30, 60, 90]))
        assert rep.passed, rep.to_dict()
        assert rep.argmin_empirical == 0.0

    def test_t4_and_shared_part_small(self):
        scn = ConvergenceScenario(h=9, tau=0.5, kappa_x=4.0, kappa_y=4.0, constraint="subspace", n=2048, replicates=8, phi=math.radians(30))
        rep = verify_theorem_mc(scn, "T4", [math.radians(45)])
        assert rep.passed, rep.to_dict()
        cmp = shared_part_comparison(scn, math.radians(45), n_violators=4)
        assert cmp.aligned_is_lowest

    def test_report_serializes(self):
        scn = ConvergenceScenario(h=9, tau=0.5, kappa_x=4.0, kappa_y=4.0, constraint="subspace", n=1024, replicates=4)
        d = verify_theorem_mc(scn, "T3", np.radians([30, 60])).to_dict()
        assert [round(g["x_deg"]) for g in d["grid"]] == [30, 60]
        assert set(d) >= {"pass", "argmin_empirical_deg", "argmin_analytic_rad"}

    def test_validation(self):
        with pytest.raises(ValueError):
            ConvergenceScenario(h=4, tau=1.0, kappa_x=1.0, kappa_y=1.0, constraint="cone")
        scn = ConvergenceScenario(h=4, tau=1.0, kappa_x=1.0, kappa_y=1.0)
        with pytest.raises(ValueError):
            verify_theorem_mc(scn, "T3", [0.5])
        with pytest.raises(ValueError):
            verify_theorem_mc(scn, "T9")

    def test_deterministic(self):
        scn = ConvergenceScenario(h=6, tau=0.5, kappa_x=2.0, kappa_y=2.0, n=512, replicates=4, seed=9)
        a = verify_theorem_mc(scn, "T2", [0.2]).grid[0].mc_mean
        b = verify_theorem_mc(scn, "T2", [0.2]).grid[0].mc_mean
        assert a == b
