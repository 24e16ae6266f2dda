import math
import os
import sys
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from amr_grid import Domain, Forest, locate_point  # noqa: E402
from errors import ConfigError, ContractViolation, EmptyBandError, LostInterfaceError  # noqa: E402
from sl_solver import (FrontSet, SolverParams, _displacements, compute_energy, cut, cutoff,  # noqa: E402
                       detect_front_set, effective_velocity, neighbor_average, select_band,
                       sl_step, tangent_frame)

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


def circle_setup(level=5, radius=0.8, cloud_radius=0.5):
    forest = Forest.uniform(Domain(2, 1.2, level), level)
    r = np.linalg.norm(forest.centers, axis=1)
    phi = r - radius
    distance = np.abs(r - cloud_radius)
    grad_d = np.sign(r - cloud_radius)[:, None] * forest.centers / r[:, None]
    return forest, phi, distance, grad_d


class TestParamsAndCutoff(unittest.TestCase):
    def test_band_constants(self):
        params = SolverParams(p=1, mu=0.05, dt=0.225, dx_min=0.15)
        self.assertAlmostEqual(params.courant, 1.5)
        self.assertAlmostEqual(params.beta, 0.45)
        self.assertAlmostEqual(params.gamma, 0.9)
        self.assertAlmostEqual(params.gradient_floor, 1e-3 * 0.225)

    def test_invalid_params(self):
        with self.assertRaises(ConfigError):
            SolverParams(p=1, mu=0.05, dt=0.0, dx_min=0.1)
        with self.assertRaises(ConfigError):
            SolverParams(p=0.5, mu=0.05, dt=0.1, dx_min=0.1)
        with self.assertRaises(ConfigError):
            SolverParams(p=1, mu=-1.0, dt=0.1, dx_min=0.1)

    def test_cutoff_values(self):
        self.assertEqual(cutoff(0.0, 1.0, 2.0), 1.0)
        self.assertEqual(cutoff(1.0, 1.0, 2.0), 1.0)
        self.assertEqual(cutoff(-2.0, 1.0, 2.0), 0.0)
        self.assertAlmostEqual(cutoff(1.5, 1.0, 2.0), 0.5)
        with self.assertRaises(ContractViolation):
            cutoff(0.0, 2.0, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(finite, st.floats(min_value=0.01, max_value=1.0), st.floats(min_value=0.01, max_value=1.0))
    def test_cutoff_is_bounded_and_even(self, phi, beta, width):
        gamma = beta + width
        value = cutoff(phi, beta, gamma)
        self.assertGreaterEqual(value, 0.0)
        self.assertLessEqual(value, 1.0)
        self.assertEqual(value, cutoff(-phi, beta, gamma))
        self.assertGreaterEqual(cutoff(abs(phi) * 0.5, beta, gamma), value - 1e-12)

    def test_cut(self):
        np.testing.assert_array_equal(cut([-3.0, 0.1, 2.0], 1.0), [-1.0, 0.1, 1.0])


class TestBandAndEnergy(unittest.TestCase):
    def test_select_band(self):
        forest, phi, _, _ = circle_setup(level=4)
        params = SolverParams(p=1, mu=0.05, dt=1.5 * 0.15, dx_min=0.15)
        band = select_band(phi, forest, params)
        self.assertTrue(np.all(np.abs(phi[band.active]) < params.gamma))
        self.assertEqual(band.size, int(np.sum(np.abs(phi) < params.gamma)))
        self.assertTrue(np.all(band.reinit[band.active]))
        self.assertGreaterEqual(band.reinit.sum(), band.size)
        with self.assertRaises(EmptyBandError):
            select_band(np.full(len(forest), 5.0), forest, params)

    def test_front_detection(self):
        forest, phi, _, _ = circle_setup(level=4)
        front = detect_front_set(phi, forest)
        self.assertGreater(len(front), 0)
        for j in front.leaves:
            nbs = forest.neighbors_of(j)
            self.assertTrue(np.any(phi[j] * phi[nbs] <= 0.0))
        self.assertEqual(len(detect_front_set(np.ones(len(forest)), forest)), 0)

    def test_energy_values(self):
        forest = Forest.uniform(Domain(2, 1.2, 3), 3)
        dx = forest.domain.dx_min
        front = FrontSet(np.arange(10))
        d = np.full(len(forest), 0.2)
        self.assertAlmostEqual(compute_energy(None, d, forest, 1, front), 10 * 0.2 * dx)
        self.assertAlmostEqual(compute_energy(None, d, forest, 2, front), math.sqrt(10 * 0.04 * dx))

    def test_energy_without_front(self):
        forest = Forest.uniform(Domain(2, 1.2, 3), 3)
        with self.assertRaises(LostInterfaceError):
            compute_energy(np.ones(len(forest)), np.ones(len(forest)), forest, 2)


class TestFrameAndVelocity(unittest.TestCase):
    def test_tangent_2d(self):
        np.testing.assert_allclose(tangent_frame(np.array([3.0, 4.0])), [0.8, -0.6])
        with self.assertRaises(ContractViolation):
            tangent_frame(np.zeros(2))

    @settings(max_examples=50, deadline=None)
    @given(st.tuples(finite, finite, finite))
    def test_tangent_3d_orthonormal(self, g):
        g = np.array(g)
        if np.linalg.norm(g) < 1e-6:
            return
        s1, s2 = tangent_frame(g)
        unit = g / np.linalg.norm(g)
        self.assertAlmostEqual(np.linalg.norm(s1), 1.0)
        self.assertAlmostEqual(np.linalg.norm(s2), 1.0)
        self.assertAlmostEqual(float(s1 @ s2), 0.0, places=9)
        self.assertAlmostEqual(float(s1 @ unit), 0.0, places=9)
        self.assertAlmostEqual(float(s2 @ unit), 0.0, places=9)

    def test_cavity_switch(self):
        params = SolverParams(p=1, mu=0.05, dt=0.15, dx_min=0.1, cavity_mode=True)
        grad_d = np.array([[0.5, 0.0], [1.0, 0.0], [0.5, 0.0]])
        grad_phi = np.array([[0.0, 1.0]] * 3)
        d = np.array([0.5, 0.5, 0.3])
        v, switched = effective_velocity(d, grad_d, grad_phi, params)
        np.testing.assert_array_equal(switched, [True, False, False])
        np.testing.assert_allclose(v[0], [0.0, 1.0])
        np.testing.assert_allclose(v[1:], grad_d[1:])
        params.cavity_mode = False
        v, switched = effective_velocity(d, grad_d, grad_phi, params)
        self.assertFalse(switched.any())
        np.testing.assert_allclose(v, grad_d)

    def test_neighbor_average(self):
        forest = Forest.uniform(Domain(2, 1.2, 3), 3)
        phi = forest.centers[:, 0] + 2.0 * forest.centers[:, 1]
        leaf = locate_point(forest, (0.1, 0.1))
        self.assertAlmostEqual(float(neighbor_average(phi, forest, [leaf])[0]), phi[leaf])


class TestStep(unittest.TestCase):
    def test_front_moves_toward_cloud(self):
        forest, phi, distance, grad_d = circle_setup()
        dx = forest.domain.dx_min
        params = SolverParams(p=1, mu=0.0, dt=1.5 * dx, dx_min=dx)
        band = select_band(phi, forest, params)
        energy = compute_energy(phi, distance, forest, 1)
        phi_next, stats = sl_step(phi, distance, grad_d, params, band, energy, forest)
        self.assertEqual(stats.updated, band.size)
        inner = np.abs(phi) <= params.beta
        np.testing.assert_allclose(phi_next[inner] - phi[inner], params.dt, atol=0.03)
        outside = np.ones(len(forest), dtype=bool)
        outside[band.active] = False
        np.testing.assert_array_equal(phi_next[outside], phi[outside])

    def test_curvature_term_and_cweno(self):
        forest, phi, distance, grad_d = circle_setup(radius=0.5)
        dx = forest.domain.dx_min
        params = SolverParams(p=2, mu=1.0, dt=1.5 * dx, dx_min=dx)
        band = select_band(phi, forest, params)
        energy = compute_energy(phi, distance, forest, 2)
        for operator in ("p1", "cweno"):
            phi_next, stats = sl_step(phi, distance, grad_d, params, band, energy, forest, operator)
            self.assertTrue(np.all(np.isfinite(phi_next)))
            # a circle already on the cloud stays put up to the curvature smoothing
            front = detect_front_set(phi, forest).leaves
            self.assertLess(np.max(np.abs(phi_next[front] - phi[front])), 2.0 * dx)

    def test_flat_field_uses_neighbor_average(self):
        forest, _, distance, grad_d = circle_setup(level=4)
        dx = forest.domain.dx_min
        params = SolverParams(p=1, mu=0.05, dt=1.5 * dx, dx_min=dx)
        phi = np.full(len(forest), 0.01)
        band = select_band(phi, forest, params)
        phi_next, stats = sl_step(phi, distance, grad_d, params, band, 1.0, forest)
        self.assertEqual(stats.fallback, band.size)
        np.testing.assert_allclose(phi_next, phi)

    def test_curvature_flow_shrinks_circle(self):
        # constant distance, no transport: the front follows R^2 = R0^2 - 2 mu d0 t
        for level in (4, 5, 6):
            forest = Forest.uniform(Domain(2, 1.2, level), level)
            dx = forest.domain.dx_min
            r = np.linalg.norm(forest.centers, axis=1)
            phi = r - 0.6
            d = np.full(len(forest), 0.1)
            grad_d = np.zeros((len(forest), 2))
            params = SolverParams(p=1, mu=1.0, dt=1.5 * dx, dx_min=dx)
            steps = int(round(0.45 / params.dt))
            for _ in range(steps):
                band = select_band(phi, forest, params)
                phi, _ = sl_step(phi, d, grad_d, params, band, 1.0, forest)
            near = np.abs(phi) < dx
            radius = float(np.mean(r[near] - phi[near]))
            expected = math.sqrt(0.36 - 2.0 * 0.1 * steps * params.dt)
            self.assertLess(abs(radius - expected), 2.0 * dx)
            if level > 4:
                self.assertLess(radius, 0.58)


class TestSpatialStep(unittest.TestCase):
    def sphere_setup(self, level=5, radius=0.6):
        forest = Forest.uniform(Domain(3, 1.2, level), level)
        r = np.linalg.norm(forest.centers, axis=1)
        return forest, r, r - radius

    @settings(max_examples=40, deadline=None)
    @given(st.lists(finite, min_size=6, max_size=6), st.tuples(finite, finite, finite),
           st.floats(min_value=0.01, max_value=0.5))
    def test_tangential_stencil_on_quadratics(self, entries, g, h):
        # the four-point average minus the center value is h^2/2 times the tangential Laplacian
        g = np.array(g)
        if np.linalg.norm(g) < 1e-3:
            return
        a, b, c, e, f, k = entries
        H = np.array([[a, b, c], [b, e, f], [c, f, k]])
        s1, s2 = tangent_frame(g)
        x0 = np.array([0.1, -0.2, 0.3])
        pts = x0 + _displacements((s1[None, :], s2[None, :]), np.array([h]))[0]
        quad = 0.5 * np.einsum("ki,ij,kj->k", pts - x0, H, pts - x0) + (pts - x0) @ g + 1.0
        lap = float(s1 @ H @ s1 + s2 @ H @ s2)
        self.assertAlmostEqual(float(quad.mean()) - 1.0, 0.5 * h * h * lap, places=9)

    def test_step_matches_tangential_laplacian(self):
        forest, r, phi = self.sphere_setup()
        dx = forest.domain.dx_min
        d0 = 0.1
        params = SolverParams(p=1, mu=1.0, dt=1.5 * dx, dx_min=dx)
        band = select_band(phi, forest, params)
        d = np.full(len(forest), d0)
        grad_d = np.zeros((len(forest), 3))
        near = np.abs(phi) <= 0.5 * params.beta
        expected = 2.0 * params.mu * d0 * params.dt / r[near]
        for operator in ("p1", "cweno"):
            phi_next, stats = sl_step(phi, d, grad_d, params, band, 1.0, forest, operator)
            self.assertEqual(stats.fallback, 0)
            ratio = (phi_next[near] - phi[near]) / expected
            self.assertAlmostEqual(float(np.mean(ratio)), 1.0, delta=0.1, msg=operator)
            self.assertLess(float(np.max(np.abs(ratio - 1.0))), 0.3, operator)

    def test_curvature_flow_shrinks_sphere(self):
        # constant distance, no transport: the front follows R^2 = R0^2 - 4 mu d0 t
        forest, r, phi = self.sphere_setup()
        dx = forest.domain.dx_min
        d0 = 0.05
        d = np.full(len(forest), d0)
        grad_d = np.zeros((len(forest), 3))
        params = SolverParams(p=1, mu=1.0, dt=1.5 * dx, dx_min=dx)
        steps = 4
        for _ in range(steps):
            band = select_band(phi, forest, params)
            phi, _ = sl_step(phi, d, grad_d, params, band, 1.0, forest)
        near = np.abs(phi) < dx
        radius = float(np.mean(r[near] - phi[near]))
        expected = math.sqrt(0.36 - 4.0 * d0 * steps * params.dt)
        self.assertLess(abs(radius - expected), 2.0 * dx)
        self.assertLess(radius, 0.58)



if __name__ == '__main__':
    unittest.main()
