"""Reference-solution oracles: these must be right before anything that
leans on them is trusted, so the expected numbers here are produced by
independent in-test computations (bisection redone inline, closed forms)."""

import math

import numpy as np
import pytest

from dernet import oracles


def _solve_sinhx_eq_kx(k):
    """Root of sinh(x) = k*x for k > 1, by plain inline bisection."""
    lo, hi = 1e-8, 1.0
    while math.sinh(hi) < k * hi:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.sinh(mid) < k * mid:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestCatenary:
    def test_taut_cable_has_no_sag(self):
        assert oracles.catenary_sag(1.0, 0.0) == 0.0
        assert oracles.catenary_sag(1.0, -0.1) == 0.0
        assert oracles.catenary_sag(1.0, 1e-9) < 1e-3

    def test_half_shrink_matches_inline_bisection(self):
        # L/a = 2 -> sinh x = 2x, x ~ 2.1773; c = a/(2x); sag = c(cosh x - 1)
        x = _solve_sinhx_eq_kx(2.0)
        assert x == pytest.approx(2.1773, abs=2e-4)
        c = 0.5 / (2.0 * x)
        assert c == pytest.approx(0.11482, abs=2e-5)
        expected = c * (math.cosh(x) - 1.0)
        assert oracles.catenary_sag(1.0, 0.5) == pytest.approx(expected, rel=1e-10)
        assert expected == pytest.approx(0.398, abs=5e-4)

    def test_defining_relation_residual(self):
        for shrink in (0.1, 0.25, 0.5, 0.8):
            sag = oracles.catenary_sag(1.0, shrink)
            a = 1.0 - shrink
            # recover x from sag = c(cosh x - 1), c = a/(2x)
            x = _solve_sinhx_eq_kx(1.0 / a)
            c = a / (2.0 * x)
            assert abs(2.0 * c * math.sinh(a / (2.0 * c)) - 1.0) < 1e-12
            assert sag == pytest.approx(c * (math.cosh(x) - 1.0), rel=1e-10)

    def test_scale_invariance(self):
        base = oracles.catenary_sag(1.0, 0.37)
        assert oracles.catenary_sag(7.0, 7 * 0.37) == pytest.approx(7 * base, rel=1e-11)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            oracles.catenary_sag(1.0, 1.0)
        with pytest.raises(ValueError):
            oracles.catenary_sag(1.0, 1.5)

    def test_multi_span_scaling(self):
        single = oracles.catenary_sag(1.0, 0.5)
        assert oracles.catenary_multi(1.0, 0.5, 1) == single
        assert oracles.catenary_multi(1.0, 0.5, 2) == pytest.approx(single / 2, rel=1e-11)
        assert oracles.catenary_multi(1.0, 0.5, 4) == pytest.approx(single / 4, rel=1e-11)
        assert oracles.catenary_multi(1.0, 0.5, 4) == pytest.approx(0.0994, abs=2e-4)

    def test_fullspan_variant_differs(self):
        # kept for comparison only; it is not the physical sag, and its
        # defining relation has no solution at all for shrinks below L/2
        alt = oracles.catenary_sag_fullspan(1.0, 0.8)
        assert alt != pytest.approx(oracles.catenary_sag(1.0, 0.8), rel=0.05)
        with pytest.raises(ValueError):
            oracles.catenary_sag_fullspan(1.0, 0.3)


class TestBeamAndCable:
    def test_cantilever_tip_linear(self, params):
        assert oracles.cantilever_tip_linear(params, 1.0, 0.0) == 0.0
        # rho*A*g*L^3/EI = 0.4 at g = 0.1 for the reference material
        w_bar = params.density * params.area * 0.1 / params.bend_stiffness
        assert w_bar == pytest.approx(0.4, rel=1e-12)
        assert oracles.cantilever_tip_linear(params, 1.0, 0.1) == pytest.approx(0.05, rel=1e-12)
        assert oracles.cantilever_tip_linear(params, 1.0, 0.2) == \
            pytest.approx(2 * oracles.cantilever_tip_linear(params, 1.0, 0.1), rel=1e-12)

    def test_beam_midpoint_linear(self):
        assert oracles.beam_midpoint_linear(0.0, 1.0, 7.85) == 0.0
        ei = 1e9 * math.pi / 4 * 0.01**4
        assert oracles.beam_midpoint_linear(0.01, 1.0, ei) == \
            pytest.approx(2.6525823848649226e-05, rel=1e-12)
        assert oracles.beam_midpoint_linear(0.02, 1.0, ei) == \
            pytest.approx(2 * 2.6525823848649226e-05, rel=1e-12)

    def test_cable_midpoint_roundtrip(self):
        ea = 3141.5926535897934
        assert oracles.cable_midpoint(0.0, 1.0, ea) == 0.0
        for force in (1e-5, 1e-3, 0.1):
            sag = oracles.cable_midpoint(force, 1.0, ea)
            assert oracles.cable_midpoint_force(sag, 1.0, ea) == \
                pytest.approx(force, rel=1e-10)

    def test_cable_midpoint_cube_root_asymptote(self):
        ea = 1.0
        f1, f2 = 1e-9, 1e-8
        d1 = oracles.cable_midpoint(f1, 1.0, ea)
        d2 = oracles.cable_midpoint(f2, 1.0, ea)
        slope = (math.log(d2) - math.log(d1)) / (math.log(f2) - math.log(f1))
        assert slope == pytest.approx(1.0 / 3.0, abs=1e-3)


class TestCurvaturePair:
    def test_zero_angle(self):
        assert oracles.curvature_pair(0.0) == (0.0, 0.0)

    def test_right_angle(self):
        kappa, kappa_hat = oracles.curvature_pair(math.pi / 2)
        assert kappa == pytest.approx(math.sqrt(2.0), rel=1e-14)
        assert kappa_hat == pytest.approx(2.0, rel=1e-14)

    def test_agreement_boundary(self):
        kappa, kappa_hat = oracles.curvature_pair(math.radians(40.0))
        assert kappa_hat / kappa == pytest.approx(1.0 / math.cos(math.radians(20.0)),
                                                  rel=1e-12)
        assert kappa_hat / kappa == pytest.approx(1.064, abs=5e-4)


class TestFiniteDifferences:
    def test_norm_squared_gradient_at_origin(self):
        grad = oracles.fd_gradient(lambda x: float(np.dot(x, x)), np.zeros(4))
        assert np.abs(grad).max() < 1e-9

    def test_linear_function_is_exact(self):
        coeffs = np.array([1.5, -2.0, 0.25])
        grad = oracles.fd_gradient(lambda x: float(np.dot(coeffs, x)), np.array([1.0, 2.0, 3.0]))
        assert np.allclose(grad, coeffs, rtol=1e-9, atol=1e-12)

    def test_quadratic_jacobian(self):
        mat = np.array([[2.0, 1.0], [0.5, -3.0]])
        jac = oracles.fd_jacobian(lambda x: mat @ x, np.array([0.3, -0.7]))
        assert np.allclose(jac, mat, rtol=1e-9, atol=1e-12)
