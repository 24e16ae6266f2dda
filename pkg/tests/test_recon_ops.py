import os
import sys
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from amr_grid import Domain, Forest, locate_point, refine_leaves  # noqa: E402
from errors import ConfigError  # noqa: E402
from recon_ops import (CwenoParams, Reconstructor, basis, constrained_fit, evaluate,  # noqa: E402
                       fit_cweno, fit_lateral, fit_p1, lateral_directions, oscillation_indicator)


def graded_forest(dimension=2):
    forest = Forest.uniform(Domain(dimension, 1.2, 5), 2)
    origin = np.zeros(dimension)
    forest, _, _, _ = refine_leaves(forest, [locate_point(forest, origin + 0.1)])
    forest, _, _, _ = refine_leaves(forest, [locate_point(forest, origin + 0.05)])
    return forest


def random_points_in(forest, leaves, rng):
    u = rng.uniform(-0.5, 0.5, size=(len(leaves), forest.dimension))
    return forest.centers[leaves] + u * forest.edges[leaves][:, None]


class TestP1(unittest.TestCase):
    def assert_reproduces(self, poly, forest, f, rng):
        leaves = np.arange(len(forest))
        pts = random_points_in(forest, leaves, rng)
        np.testing.assert_allclose(poly.evaluate_at(pts, leaves), f(pts), atol=1e-10)

    def test_linear_field_is_exact(self):
        rng = np.random.default_rng(1)
        for dimension in (2, 3):
            forest = graded_forest(dimension)
            a = np.arange(1, dimension + 1) * 0.7
            f = lambda x: x @ a - 0.3  # noqa: E731
            poly = fit_p1(None, f(forest.centers), forest)
            self.assertFalse(poly.flags.degenerate.any())
            np.testing.assert_allclose(poly.center_gradient(), np.tile(a, (len(forest), 1)), atol=1e-10)
            self.assert_reproduces(poly, forest, f, rng)

    def test_interpolates_center(self):
        forest = graded_forest()
        phi = np.sin(3.0 * forest.centers[:, 0]) * forest.centers[:, 1]
        poly = fit_p1(None, phi, forest)
        np.testing.assert_allclose(poly.evaluate_at(forest.centers, np.arange(len(forest))), phi)
        self.assertAlmostEqual(evaluate(poly.subset([4]), forest.centers[4]), phi[4])

    def test_collinear_stencil_is_degenerate(self):
        centers = np.zeros((1, 2))
        edges = np.ones(1)
        values = np.zeros(1)
        points = np.array([[[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0]]])
        mask = np.ones((1, 3), dtype=bool)
        coeffs, degenerate = constrained_fit(centers, edges, values, points, np.array([[1.0, 2.0, -1.0]]), mask, 1)
        self.assertTrue(degenerate[0])
        self.assertAlmostEqual(coeffs[0, 1], 1.0)
        self.assertAlmostEqual(coeffs[0, 2], 0.0)


class TestLateral(unittest.TestCase):
    def test_direction_names(self):
        self.assertEqual(lateral_directions(2), ["sw", "se", "nw", "ne"])
        self.assertEqual(len(set(lateral_directions(3))), 8)

    def test_unknown_direction(self):
        forest = Forest.uniform(Domain(2, 1.2, 3), 2)
        with self.assertRaises(ConfigError):
            fit_lateral([0], np.zeros(len(forest)), forest, "up")

    def test_corner_leaf_falls_back(self):
        forest = Forest.uniform(Domain(2, 1.2, 3), 3)
        corner = locate_point(forest, (1.1, 1.1))
        phi = forest.centers[:, 0] ** 2 + forest.centers[:, 1]
        ne = fit_lateral([corner], phi, forest, "ne")
        full = fit_p1([corner], phi, forest)
        self.assertTrue(ne.flags.fallback[0])
        np.testing.assert_allclose(ne.coeffs, full.coeffs)
        sw = fit_lateral([corner], phi, forest, "sw")
        self.assertFalse(sw.flags.fallback[0])

    def test_lateral_uses_one_side(self):
        forest = Forest.uniform(Domain(2, 1.2, 4), 4)
        phi = np.abs(forest.centers[:, 0])
        leaf = locate_point(forest, (0.2, 0.2))
        east = fit_lateral([leaf], phi, forest, "ne")
        np.testing.assert_allclose(east.center_gradient()[0], [1.0, 0.0], atol=1e-10)


class TestCweno(unittest.TestCase):
    def test_linear_weights(self):
        d = CwenoParams().linear_weights(4)
        np.testing.assert_allclose(d, [0.75, 0.0625, 0.0625, 0.0625, 0.0625])
        with self.assertRaises(ConfigError):
            CwenoParams(d0=1.0)

    def test_indicator_diagonal(self):
        self.assertAlmostEqual(float(oscillation_indicator(np.array([5.0, 1.0, 2.0]))), 5.0)
        self.assertAlmostEqual(float(oscillation_indicator(np.array([0, 0, 0, 1.0, 0, 0]))), 13.0 / 3.0)
        self.assertAlmostEqual(float(oscillation_indicator(np.array([0, 0, 0, 0, 1.0, 0]))), 7.0 / 6.0)
        self.assertAlmostEqual(float(oscillation_indicator(np.array([0, 0, 0, 0, 0, 0, 0, 0, 0, 1.0]))), 7.0 / 6.0)

    def test_linear_field_is_exact(self):
        rng = np.random.default_rng(2)
        for dimension in (2, 3):
            forest = graded_forest(dimension)
            a = np.linspace(0.5, -0.5, dimension)
            f = lambda x: x @ a + 0.1  # noqa: E731
            # boundary leaves have one-sided stencils that leave the lateral fits underdetermined
            inner = np.all(np.abs(forest.centers) + forest.edges[:, None] / 2 < 1.2 - 1e-9, axis=1)
            leaves = np.nonzero(inner)[0]
            poly = fit_cweno(leaves, f(forest.centers), forest)
            pts = random_points_in(forest, leaves, rng)
            np.testing.assert_allclose(poly.evaluate_at(pts, np.arange(len(leaves))), f(pts), atol=1e-9)

    def test_quadratic_field_on_uniform_grid(self):
        forest = Forest.uniform(Domain(2, 1.2, 4), 4)
        f = lambda x: 0.5 * x[:, 0] ** 2 + x[:, 0] * x[:, 1] - 0.25 * x[:, 1] ** 2  # noqa: E731
        leaf = locate_point(forest, (0.1, -0.2))
        poly = fit_cweno([leaf], f(forest.centers), forest)
        pts = forest.centers[leaf] + np.array([[0.02, 0.03], [-0.04, 0.01]])
        err = np.abs(poly.evaluate_at(pts, np.zeros(2, dtype=np.int64)) - f(pts))
        self.assertLess(err.max(), forest.edges[leaf] ** 2)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_weights_are_convex(self, seed):
        forest = graded_forest()
        phi = np.random.default_rng(seed).normal(size=len(forest))
        poly, weights = fit_cweno(None, phi, forest, return_weights=True)
        self.assertTrue(np.all(weights.omega >= 0.0))
        np.testing.assert_allclose(weights.omega.sum(axis=1), 1.0)
        np.testing.assert_allclose(poly.coeffs[:, 0], phi)
        np.testing.assert_allclose(weights.eps, forest.edges ** 2)

    def test_step_data_suppresses_polluted_laterals(self):
        forest = Forest.uniform(Domain(2, 1.2, 8), 8)
        self.assertLessEqual(forest.domain.dx_min, 1.0 / 64)
        phi = (forest.centers[:, 0] > 0.0).astype(float)
        leaf = locate_point(forest, (-0.5 * forest.domain.dx_min, 0.3))
        _, weights = fit_cweno([leaf], phi, forest, return_weights=True)
        omega = weights.omega[0]
        names = lateral_directions(2)
        # the east-facing laterals straddle the jump
        polluted = [1 + names.index("se"), 1 + names.index("ne")]
        self.assertLess(omega[polluted].max(), 1e-2 * omega.max())

    def test_reconstructor_facade(self):
        forest = graded_forest()
        phi = np.hypot(forest.centers[:, 0], forest.centers[:, 1]) - 0.5
        for operator in ("p1", "cweno"):
            rec = Reconstructor(forest, phi, operator)
            np.testing.assert_allclose(rec.evaluate_points(forest.centers), phi, atol=1e-12)
            self.assertEqual(rec.gradient().shape, (len(forest), 2))
            if operator == "p1":
                self.assertFalse(rec.degenerate(np.arange(len(forest))).any())
            batch = rec.polys([3, 1])
            np.testing.assert_array_equal(batch.owners, [3, 1])
        with self.assertRaises(ConfigError):
            Reconstructor(forest, phi, "weno5")

    def test_basis_layout(self):
        u = np.array([[2.0, 3.0]])
        np.testing.assert_allclose(basis(u, 2, 2), [[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]])
        v = np.array([[2.0, 3.0, 5.0]])
        np.testing.assert_allclose(basis(v, 3, 2), [[1, 2, 3, 5, 4, 6, 9, 25, 10, 15]])


class TestAccuracy(unittest.TestCase):
    @staticmethod
    def smooth(x):
        return np.sin(2.0 * x[:, 0] + 1.0) * np.cos(3.0 * x[:, 1]) + 0.5 * x[:, 0] ** 2

    def observed_order(self, operator, levels=(5, 6, 7, 8)):
        pts = np.random.default_rng(8).uniform(-0.4, 0.4, size=(300, 2))
        errors = []
        for level in levels:
            forest = Forest.uniform(Domain(2, 1.2, level), level)
            rec = Reconstructor(forest, self.smooth(forest.centers), operator)
            errors.append(float(np.mean(np.abs(rec.evaluate_points(pts) - self.smooth(pts)))))
        return np.log2(errors[0] / errors[-1]) / (len(levels) - 1)

    def test_p1_is_second_order(self):
        self.assertGreaterEqual(self.observed_order("p1"), 1.7)

    def test_cweno_is_third_order(self):
        self.assertGreaterEqual(self.observed_order("cweno"), 2.5)

    def test_scaling_the_field(self):
        forest = Forest.uniform(Domain(2, 1.2, 5), 5)
        phi = np.random.default_rng(6).normal(size=len(forest))
        base = fit_p1(None, phi, forest)
        _, weights = fit_cweno(None, phi, forest, return_weights=True)
        for s in (0.25, 4.0):
            scaled = fit_p1(None, s * phi, forest)
            np.testing.assert_allclose(scaled.coeffs, s * base.coeffs, rtol=1e-10, atol=1e-12)
            lateral = fit_lateral(None, s * phi, forest, "ne")
            np.testing.assert_allclose(lateral.coeffs, s * fit_lateral(None, phi, forest, "ne").coeffs,
                                       rtol=1e-10, atol=1e-12)
            _, w = fit_cweno(None, s * phi, forest, return_weights=True)
            top = np.sort(weights.omega, axis=1)
            clear = top[:, -1] > 1.2 * top[:, -2]
            self.assertGreater(int(clear.sum()), len(forest) // 4)
            np.testing.assert_array_equal(np.argmax(w.omega[clear], axis=1),
                                          np.argmax(weights.omega[clear], axis=1))



if __name__ == '__main__':
    unittest.main()
