import math

import numpy as np
import pytest

from dernet import (ElasticAssembler, NumericalError, assemble, bend_curvature_exact,
                    bend_curvature_modified, bend_energy, bend_gradient, bend_hessian,
                    edge_geometry, generate_hexagonal_web, generate_rod, oracles,
                    stretch_energy, stretch_gradient, stretch_hessian)
from dernet.elastic import bend_nodal_blocks

from conftest import perturbed_positions

EA = 3141.5926535897934
EI = 7.853981633974483e-4


class TestStretchElement:
    def test_unstrained(self, params):
        edge = edge_geometry([0, 0, 0], [1, 0, 0])
        assert stretch_energy(edge, 1.0, params) == 0.0
        assert np.all(stretch_gradient(edge, 1.0, params) == 0.0)

    def test_ten_percent_strain_energy(self, params):
        edge = edge_geometry([0, 0, 0], [1.1, 0, 0])
        assert stretch_energy(edge, 1.0, params) == pytest.approx(15.707963267948966,
                                                                  rel=1e-12)

    def test_symmetric_in_strain_sign(self, params):
        shorter = edge_geometry([0, 0, 0], [0.9, 0, 0])
        longer = edge_geometry([0, 0, 0], [1.1, 0, 0])
        assert stretch_energy(shorter, 1.0, params) == \
            pytest.approx(stretch_energy(longer, 1.0, params), rel=1e-12)

    def test_gradient_magnitude(self, params):
        edge = edge_geometry([0, 0, 0], [1.1, 0, 0])
        grad = stretch_gradient(edge, 1.0, params)
        assert np.linalg.norm(grad) == pytest.approx(314.15926535897936, rel=1e-12)
        assert grad[0] > 0.0

    def test_gradient_matches_fd(self, params, rng):
        for _ in range(5):
            xj = rng.normal(0, 1, 3)
            grad = stretch_gradient(edge_geometry(np.zeros(3), xj), 0.8, params)
            fd = oracles.fd_gradient(
                lambda e: stretch_energy(edge_geometry(np.zeros(3), e), 0.8, params), xj)
            assert oracles.relative_error(grad, fd) < 1e-6

    def test_hessian_unstrained_along_x(self, params):
        edge = edge_geometry([0, 0, 0], [1, 0, 0])
        hess = stretch_hessian(edge, 1.0, params)
        assert np.allclose(hess, np.diag([EA, 0.0, 0.0]), rtol=1e-12, atol=1e-9)

    def test_hessian_matches_fd(self, params, rng):
        for _ in range(5):
            xj = rng.normal(0, 1, 3)
            hess = stretch_hessian(edge_geometry(np.zeros(3), xj), 0.8, params)
            assert np.allclose(hess, hess.T)
            fd = oracles.fd_jacobian(
                lambda e: stretch_gradient(edge_geometry(np.zeros(3), e), 0.8, params), xj)
            assert oracles.relative_error(hess, fd) < 1e-5


class TestCurvatures:
    def test_collinear(self):
        assert bend_curvature_modified([1, 0, 0], [1, 0, 0]) == 0.0
        assert bend_curvature_exact([1, 0, 0], [1, 0, 0]) == 0.0

    def test_right_angle(self):
        assert bend_curvature_modified([1, 0, 0], [0, 1, 0]) == \
            pytest.approx(math.sqrt(2.0), rel=1e-14)
        assert bend_curvature_exact([1, 0, 0], [0, 1, 0]) == pytest.approx(2.0, rel=1e-14)

    def test_fully_folded(self):
        assert bend_curvature_modified([1, 0, 0], [-1, 0, 0]) == pytest.approx(2.0)
        with pytest.raises(NumericalError):
            bend_curvature_exact([1, 0, 0], [-1, 0, 0])

    def test_bounds_and_agreement(self):
        for phi_deg in np.linspace(0.1, 179.5, 120):
            phi = math.radians(phi_deg)
            t1 = np.array([1.0, 0.0, 0.0])
            t2 = np.array([math.cos(phi), math.sin(phi), 0.0])
            kappa = bend_curvature_modified(t1, t2)
            assert 0.0 <= kappa <= 2.0
            # the two measures agree at 1% only for small turning angles
            # (ratio is 1/cos(phi/2): 1.5% at 20 deg, 6.4% at 40 deg)
            if phi_deg < 16.0:
                assert bend_curvature_exact(t1, t2) == pytest.approx(kappa, rel=0.01)
        k40 = bend_curvature_modified([1, 0, 0],
                                      [math.cos(math.radians(40)), math.sin(math.radians(40)), 0])
        k40_exact = bend_curvature_exact([1, 0, 0],
                                         [math.cos(math.radians(40)), math.sin(math.radians(40)), 0])
        assert k40_exact / k40 == pytest.approx(1.064, abs=5e-4)


class TestBendElement:
    def test_straight_triple(self, params):
        assert bend_energy([0, 0, 0], [1, 0, 0], [2, 0, 0], 1.0, params) == 0.0
        g1, g2 = bend_gradient([0, 0, 0], [1, 0, 0], [2, 0, 0], 1.0, params)
        assert np.all(g1 == 0.0) and np.all(g2 == 0.0)

    def test_right_angle_energy(self, params):
        energy = bend_energy([0, 0, 0], [1, 0, 0], [1, 1, 0], 1.0, params)
        assert energy == pytest.approx(EI, rel=1e-12)

    def test_fully_folded_energy_is_finite(self, params):
        energy = bend_energy([0, 0, 0], [1, 0, 0], [0.0, 1e-14, 0], 1.0, params)
        assert energy == pytest.approx(2.0 * EI, rel=1e-6)

    @pytest.mark.parametrize("curvature", ["modified", "exact"])
    def test_gradient_matches_fd(self, params, rng, curvature):
        for _ in range(5):
            xi = rng.normal(0, 1, 3)
            xj = xi + rng.normal(0, 1, 3)
            xk = xj + rng.normal(0, 1, 3)
            g1, g2 = bend_gradient(xi, xj, xk, 0.7, params, curvature)

            def energy_of(x):
                return bend_energy(x[:3], x[3:6], x[6:], 0.7, params, curvature)

            fd = oracles.fd_gradient(energy_of, np.concatenate([xi, xj, xk]))
            nodal = np.concatenate([-g1, g1 - g2, g2])
            assert oracles.relative_error(nodal, fd) < 1e-6

    def test_rigid_rotation_invariance(self, params, rng):
        xi, xj, xk = rng.normal(0, 1, (3, 3))
        energy = bend_energy(xi, xj, xk, 0.7, params)
        g1, g2 = bend_gradient(xi, xj, xk, 0.7, params)
        angle = 0.83
        rot = np.array([[math.cos(angle), -math.sin(angle), 0],
                        [math.sin(angle), math.cos(angle), 0],
                        [0, 0, 1.0]])
        energy_r = bend_energy(rot @ xi, rot @ xj, rot @ xk, 0.7, params)
        g1r, g2r = bend_gradient(rot @ xi, rot @ xj, rot @ xk, 0.7, params)
        assert energy_r == pytest.approx(energy, rel=1e-12)
        assert np.allclose(g1r, rot @ g1, rtol=1e-10, atol=1e-12)
        assert np.allclose(g2r, rot @ g2, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("curvature", ["modified", "exact"])
    def test_hessian_matches_fd(self, params, rng, curvature):
        configs = [np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]),        # straight
                   np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0]])]        # right angle
        configs += [rng.normal(0, 1, (3, 3)) for _ in range(3)]
        for pts in configs:
            h11, h22, h12 = bend_hessian(pts[0], pts[1], pts[2], 0.7, params, curvature)
            blocks = bend_nodal_blocks(h11, h22, h12)
            full = np.zeros((9, 9))
            for (a, b), block in blocks.items():
                full[3 * a:3 * a + 3, 3 * b:3 * b + 3] = block

            def grad_of(x):
                g1, g2 = bend_gradient(x[:3], x[3:6], x[6:], 0.7, params, curvature)
                return np.concatenate([-g1, g1 - g2, g2])

            fd = oracles.fd_jacobian(grad_of, pts.ravel())
            assert oracles.relative_error(full, fd) < 1e-5

    def test_cross_block_transpose_identity(self, params, rng):
        xi, xj, xk = rng.normal(0, 1, (3, 3))
        h11, h22, h12 = bend_hessian(xi, xj, xk, 0.7, params)
        blocks = bend_nodal_blocks(h11, h22, h12)
        assert np.array_equal(blocks[(0, 2)], -h12)
        assert np.array_equal(blocks[(2, 0)], -h12.T)


class TestAssembly:
    def test_undeformed_rod_is_stress_free(self, small_rod, params):
        energy, force, hess = assemble(small_rod.node_positions.ravel(),
                                       small_rod, params)
        assert energy == 0.0
        assert np.abs(force).max() == 0.0
        assert hess.shape == (3 * small_rod.n_nodes,) * 2

    def test_undeformed_hexagon_carries_only_corner_bending(self, small_hexagon, params):
        # ring threads turn 60 deg at the six ring-polygon corners, and the
        # bending energy has no rest-curvature offset, so the flat net is
        # pre-stressed exactly there: kappa = 2 sin(30 deg) = 1 per corner
        # triple, energy EI/(2*voronoi)*kappa^2 = EI for voronoi = 0.5
        energy, force, _ = assemble(small_hexagon.node_positions.ravel(),
                                    small_hexagon, params)
        assert energy == pytest.approx(12 * EI, rel=1e-12)
        assert np.abs(force).max() > 0.0

    def test_translation_invariance(self, small_hexagon, params, rng):
        q = perturbed_positions(small_hexagon, rng)
        e0, f0, h0 = assemble(q, small_hexagon, params)
        shift = np.tile([0.3, -1.2, 2.5], small_hexagon.n_nodes)
        e1, f1, h1 = assemble(q + shift, small_hexagon, params)
        assert e1 == pytest.approx(e0, rel=1e-12)
        assert np.allclose(f0, f1, rtol=1e-9, atol=1e-9 * np.abs(f0).max())
        assert abs(h0 - h1).max() < 1e-6 * np.abs(h0.data).max()

    def test_rotation_invariance_and_equilibrium_sums(self, small_rod, params, rng):
        q = perturbed_positions(small_rod, rng).reshape(-1, 3)
        energy, force, _ = assemble(q.ravel(), small_rod, params)
        angle = 1.1
        rot = np.array([[1, 0, 0],
                        [0, math.cos(angle), -math.sin(angle)],
                        [0, math.sin(angle), math.cos(angle)]])
        energy_r, _, _ = assemble((q @ rot.T).ravel(), small_rod, params)
        assert energy_r == pytest.approx(energy, rel=1e-10)

        blocks = force.reshape(-1, 3)
        scale = np.abs(force).sum()
        assert np.abs(blocks.sum(axis=0)).max() < 1e-8 * scale
        torque = np.cross(q, blocks).sum(axis=0)
        assert np.abs(torque).max() < 1e-8 * scale

    @pytest.mark.parametrize("curvature", ["modified", "exact"])
    def test_force_and_hessian_match_fd(self, params, rng, curvature):
        for mesh in (generate_rod(1.0, 5), generate_hexagonal_web(2.0, 1.0, 1)):
            assembler = ElasticAssembler(mesh, params, curvature)
            q = perturbed_positions(mesh, rng)
            _, force = assembler.energy_force(q)
            fd_grad = oracles.fd_gradient(assembler.energy, q)
            assert oracles.relative_error(force, -fd_grad) < 1e-6
            hess = assembler.hessian(q).toarray()
            fd_hess = oracles.fd_jacobian(lambda x: -assembler.energy_force(x)[1], q)
            assert oracles.relative_error(hess, fd_hess) < 1e-5
            sym = np.abs(hess - hess.T).max()
            assert sym < 1e-10 * np.abs(hess).max()

    def test_assembler_matches_per_element_reference(self, params, rng):
        mesh = generate_rod(1.0, 6)
        assembler = ElasticAssembler(mesh, params)
        q = perturbed_positions(mesh, rng)
        q3 = q.reshape(-1, 3)
        energy_ref = 0.0
        force_ref = np.zeros_like(q3)
        for (i, j), rest in zip(mesh.stretch_nodes, mesh.stretch_rest):
            edge = edge_geometry(q3[i], q3[j])
            energy_ref += stretch_energy(edge, rest, params)
            grad = stretch_gradient(edge, rest, params)
            force_ref[i] += grad
            force_ref[j] -= grad
        for (i, j, k), vor in zip(mesh.bend_nodes, mesh.bend_voronoi):
            energy_ref += bend_energy(q3[i], q3[j], q3[k], vor, params)
            g1, g2 = bend_gradient(q3[i], q3[j], q3[k], vor, params)
            force_ref[i] += g1
            force_ref[j] += g2 - g1
            force_ref[k] += -g2
        energy, force = assembler.energy_force(q)
        assert energy == pytest.approx(energy_ref, rel=1e-12)
        assert np.allclose(force, force_ref.ravel(), rtol=1e-10,
                           atol=1e-12 * np.abs(force_ref).max())

    def test_inactive_bend_elements_contribute_nothing(self, params, rng):
        mesh = generate_rod(1.0, 6)
        q = perturbed_positions(mesh, rng)
        assembler = ElasticAssembler(mesh, params)
        full_energy, _ = assembler.energy_force(q)
        mask = mesh.bend_active.copy()
        mask[:] = False
        assembler.set_bend_active(mask)
        energy, force = assembler.energy_force(q)
        stretch_only = sum(
            stretch_energy(edge_geometry(q.reshape(-1, 3)[i], q.reshape(-1, 3)[j]),
                           rest, params)
            for (i, j), rest in zip(mesh.stretch_nodes, mesh.stretch_rest))
        assert energy == pytest.approx(stretch_only, rel=1e-12)
        assert energy < full_energy

    def test_non_finite_positions_name_the_element(self, small_rod, params):
        q = small_rod.node_positions.ravel().copy()
        q[4] = np.nan
        assembler = ElasticAssembler(small_rod, params)
        with pytest.raises(NumericalError) as err:
            assembler.energy_force(q)
        assert "element" in str(err.value)

    def test_exact_mode_rejects_folded_triple(self, params):
        mesh = generate_rod(1.0, 3)
        assembler = ElasticAssembler(mesh, params, "exact")
        q3 = mesh.node_positions.copy()
        q3[2] = q3[0]  # fold the second edge exactly back over the first
        with pytest.raises(NumericalError) as err:
            assembler.energy_force(q3.ravel())
        assert "bend element 0" in str(err.value)
