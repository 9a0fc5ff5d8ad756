#!/usr/bin/env python3

import sys
sys.dont_write_bytecode = True
import pathlib
import tempfile
import unittest

import numpy as np

import patch_path
from curvlab.alg4 import IDENTITY, STAR, inner
from curvlab.chartgeom import (
    ball_rule, biaxial_chart, box_boundary_rule, box_rule, christoffel,
    circle_rule, conformal_curvature, conformal_identities, conformal_phi,
    disk_rule, dump_csv, flat_chart, gauss2d, integrate, interval_rule,
    make_chart, map_chunks, p_divergence, p_operator, prop11_residual,
    random_poly_chart, riemann_frame, scalar_calc, sphere3_rule,
    stereographic_chart, user_chart, volume_density)
from curvlab.curvops import euler_form
from curvlab.errors import WorkbenchError, WorkbenchErrorCode
from curvlab.exprfield import eval_value, parse

try:
    import pandas as pd
except ImportError:
    pd = None


def _points(chart, n, seed=0, shrink=0.8):
    rng = np.random.default_rng(seed)
    box = chart.box * shrink
    return rng.uniform(box[:, 0], box[:, 1], size=(n, chart.dim))


class TestCharts(unittest.TestCase):
    def test_builtin_names(self):
        self.assertEqual(flat_chart(4).name, 'flat4')
        self.assertEqual(stereographic_chart(2).name, 'stereoS2')
        self.assertEqual(make_chart('stereoS4', half=1.0).box.tolist(),
                         [[-1.0, 1.0]] * 4)
        self.assertEqual(make_chart('biaxial4').name, 'biaxial4')

    def test_unknown_chart(self):
        with self.assertRaisesRegex(WorkbenchError, 'Unknown chart "nope"') as cm:
            make_chart('nope')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.UnknownName)

    def test_bad_parameters(self):
        with self.assertRaises(WorkbenchError) as cm:
            make_chart('flat4', bogus=1)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_bad_dimension(self):
        with self.assertRaisesRegex(WorkbenchError, 'is not 2 or 4'):
            flat_chart(3)

    def test_contains(self):
        chart = flat_chart(4)
        np.testing.assert_array_equal(
            chart.contains([[0.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]]),
            [True, False])

    def test_user_chart_lambda2(self):
        chart = user_chart({'lambda2': '4/(1 + r2)^2'})
        r = riemann_frame(chart, [0.1, -0.2, 0.3, 0.0])
        self.assertTrue(r.allclose(IDENTITY, 1e-8))

    def test_user_chart_bad_keys(self):
        with self.assertRaisesRegex(WorkbenchError, 'excludes'):
            user_chart({'lambda2': '1', 'g11': '1'})
        with self.assertRaisesRegex(
                WorkbenchError, 'diagonal entry "g44" missing'):
            user_chart({'g11': '1', 'g22': '1', 'g33': '1'})
        with self.assertRaisesRegex(WorkbenchError, 'Bad metric keys'):
            user_chart({'g21': '0', 'g11': '1', 'g22': '1'}, dim=2)

    def test_user_chart_bad_expression(self):
        with self.assertRaises(WorkbenchError) as cm:
            user_chart({'g11': 'x5', 'g22': '1', 'g33': '1', 'g44': '1'})
        self.assertEqual(
            cm.exception.code, WorkbenchErrorCode.UnknownIdentifier)

    def test_biaxial_degenerate_box(self):
        with self.assertRaisesRegex(WorkbenchError, 'degenerates'):
            biaxial_chart(k1=1.0, k2=-3.0, half=0.5)


class TestCurvature(unittest.TestCase):
    def test_flat(self):
        x = _points(flat_chart(4), 5)
        r = riemann_frame(flat_chart(4), x)
        self.assertEqual(r.shape, (5,))
        self.assertTrue(r.allclose(0.0 * IDENTITY))
        fp = christoffel(flat_chart(4), x[0])
        np.testing.assert_allclose(fp.christoffel, np.zeros((4, 4, 4)))
        self.assertAlmostEqual(fp.sqrt_det, 1.0)

    def test_round_sphere(self):
        chart = stereographic_chart(4)
        r = riemann_frame(chart, _points(chart, 10, seed=1))
        self.assertTrue(r.allclose(IDENTITY, 1e-8))
        fp = christoffel(chart, [0.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(fp.frame, 0.5 * np.eye(4))
        self.assertAlmostEqual(fp.sqrt_det, 16.0)

    def test_rescaled_sphere(self):
        chart = stereographic_chart(4).rescaled(4.0)
        r = riemann_frame(chart, [0.3, 0.1, -0.4, 0.2])
        self.assertTrue(r.allclose(0.25 * IDENTITY, 1e-8))

    def test_biaxial(self):
        chart = biaxial_chart(k1=1.0, k2=-1.0)
        expected = np.diag([1.0, 0.0, 0.0, 0.0, 0.0, -1.0])
        for x in ([0.0] * 4, [0.2, -0.1, 0.3, 0.1]):
            r = riemann_frame(chart, x)
            np.testing.assert_allclose(r.entries, expected, atol=1e-9)

    def test_random_chart_symmetries(self):
        chart = random_poly_chart(seed=3)
        r = riemann_frame(chart, _points(chart, 4, seed=2))
        np.testing.assert_allclose(
            r.entries, np.swapaxes(r.entries, -1, -2), atol=1e-10)
        np.testing.assert_allclose(inner(r, STAR), 0.0, atol=1e-10)

    def test_surfaces(self):
        chart = stereographic_chart(2)
        self.assertAlmostEqual(riemann_frame(chart, [0.3, -0.5]), 1.0, places=9)
        self.assertAlmostEqual(gauss2d(chart, [0.3, -0.5]), 1.0, places=9)
        self.assertAlmostEqual(gauss2d(flat_chart(2), [0.1, 0.2]), 0.0)

    def test_gauss2d_needs_conformal_metric(self):
        chart = user_chart({'g11': '1', 'g22': '1 + x1^2'}, dim=2)
        with self.assertRaisesRegex(WorkbenchError, 'not conformal'):
            gauss2d(chart, [0.5, 0.0])
        with self.assertRaisesRegex(WorkbenchError, 'needs dimension 2'):
            gauss2d(flat_chart(4), [0.0] * 4)

    def test_not_positive_definite(self):
        chart = user_chart({'g11': '-1', 'g22': '1', 'g33': '1', 'g44': '1'})
        with self.assertRaisesRegex(WorkbenchError, 'not positive definite') as cm:
            riemann_frame(chart, [0.0] * 4)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.DomainError)
        with self.assertRaises(WorkbenchError):
            volume_density(chart, [0.0] * 4)

    def test_bad_points(self):
        with self.assertRaisesRegex(WorkbenchError, 'Bad points of shape'):
            riemann_frame(flat_chart(4), [0.0, 0.0])


class TestScalarCalculus(unittest.TestCase):
    def test_flat(self):
        calc = scalar_calc(flat_chart(4), 'x1^2 + x2*x3', [1.0, 1.0, 1.0, 0.0])
        np.testing.assert_allclose(calc.grad, [2.0, 1.0, 1.0, 0.0])
        expected = np.zeros((4, 4))
        expected[0, 0] = 2.0
        expected[1, 2] = expected[2, 1] = 1.0
        np.testing.assert_allclose(calc.hess, expected, atol=1e-12)
        self.assertAlmostEqual(calc.lap, 2.0)
        self.assertAlmostEqual(calc.div_of(['x1', 'x2', 'x3', 'x4']), 4.0)

    def test_constant_on_sphere(self):
        calc = scalar_calc(stereographic_chart(4), '3', [0.2, 0.1, 0.0, 0.4])
        self.assertAlmostEqual(calc.lap, 0.0)
        np.testing.assert_allclose(calc.grad, np.zeros(4))

    def test_div_of_needs_all_components(self):
        calc = scalar_calc(flat_chart(4), 'x1', [0.0] * 4)
        with self.assertRaisesRegex(WorkbenchError, '2 components'):
            calc.div_of(['x1', 'x2'])


class TestConformalChange(unittest.TestCase):
    def test_phi_and_p_on_flat(self):
        chart = flat_chart(4)
        x = [0.1, 0.2, 0.3, 0.4]
        np.testing.assert_allclose(
            conformal_phi(chart, 'x1', x),
            np.diag([0.125, -0.125, -0.125, -0.125]), atol=1e-12)
        np.testing.assert_allclose(
            p_operator(chart, 'x1', x), [1.0, 0.0, 0.0, 0.0], atol=1e-12)
        self.assertAlmostEqual(p_divergence(chart, 'x1', x), 0.0)

    def test_flat_to_round(self):
        chart = flat_chart(4)
        f = parse('log(4/(1 + r2)^2)', 4)
        x = _points(chart, 6, seed=4)
        q = conformal_curvature(chart, f, x)
        scaled = q * np.exp(-eval_value(f, x))
        self.assertTrue(scaled.allclose(IDENTITY, 1e-8))

    def test_residuals(self):
        chart = stereographic_chart(4, half=1.0)
        x = _points(chart, 5, seed=5)
        res = prop11_residual(chart, 'x1*x2 + 0.3*x3^2 - 0.2*x4', x)
        self.assertLess(float(np.max(res['euler'])), 1e-6)
        self.assertLess(float(np.max(res['p1'])), 1e-6)

    def test_conformal_identities(self):
        chart = random_poly_chart(seed=6)
        x = _points(chart, 3, seed=6)
        checks = conformal_identities(chart, '0.2*x1*x3 - 0.1*x2^2 + 0.3*x4', x)
        self.assertEqual(
            sorted(checks),
            ['bochner', 'div_norm', 'laplace_norm', 'phi_square',
             'phi_trace', 'ricci_hess'])
        for key, values in checks.items():
            self.assertLess(float(np.max(values)), 1e-6, key)

    def test_needs_dimension_four(self):
        with self.assertRaisesRegex(WorkbenchError, 'need dimension 4'):
            conformal_phi(flat_chart(2), 'x1', [0.0, 0.0])


class TestQuadrature(unittest.TestCase):
    def test_chunks_in_threads(self):
        chart = stereographic_chart(4, half=1.0)
        x = np.random.default_rng(3).uniform(-0.5, 0.5, (50, 4))

        def density(nodes):
            return euler_form(riemann_frame(chart, nodes))

        serial = map_chunks(density, x, 7)
        threaded = map_chunks(density, x, 7, workers=4)
        np.testing.assert_array_equal(serial, threaded)
        np.testing.assert_allclose(serial, density(x), rtol=1e-12)
        self.assertEqual(len(map_chunks(density, x[:3], 7, workers=4)), 3)
        with self.assertRaisesRegex(WorkbenchError, 'Bad worker count 0') as cm:
            map_chunks(density, x, 7, workers=0)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_interval(self):
        self.assertAlmostEqual(
            integrate(interval_rule(0.0, np.pi), lambda x: np.sin(x[:, 0])),
            2.0, places=10)

    def test_box(self):
        rule = box_rule([[0.0, 1.0], [0.0, 2.0]], 4)
        self.assertEqual(len(rule), 16)
        self.assertAlmostEqual(
            integrate(rule, lambda x: x[:, 0] * x[:, 1]), 1.0)

    def test_box_boundary_flux(self):
        rule = box_boundary_rule([[-1.0, 1.0]] * 4, 4)
        flux = integrate(rule, rule.nodes[:, 0] * rule.normals[:, 0])
        self.assertAlmostEqual(flux, 16.0)

    def test_circle_and_disk(self):
        rule = circle_rule(64)
        self.assertAlmostEqual(integrate(rule, lambda x: x[:, 0] ** 2), np.pi)
        self.assertAlmostEqual(integrate(disk_rule(), 1.0), np.pi)

    def test_sphere_and_ball(self):
        self.assertAlmostEqual(
            integrate(sphere3_rule(radius=2.0), 1.0), 16.0 * np.pi ** 2)
        self.assertAlmostEqual(integrate(ball_rule(), 1.0), 0.5 * np.pi ** 2)
        shell = ball_rule(radius=1.0, inner=0.5)
        self.assertAlmostEqual(
            integrate(shell, 1.0), 0.5 * np.pi ** 2 * (1.0 - 0.5 ** 4))

    def test_volume_with_chart(self):
        vol = integrate(ball_rule(radial=24), 1.0, stereographic_chart(4))
        self.assertAlmostEqual(vol, 4.0 * np.pi ** 2 / 3.0, delta=1e-8)

    def test_bad_rules(self):
        with self.assertRaises(WorkbenchError) as cm:
            interval_rule(0.0, 1.0, 0)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)
        with self.assertRaisesRegex(WorkbenchError, 'Bad ball radii'):
            ball_rule(radius=1.0, inner=1.0)

    def test_non_finite_integrand(self):
        with self.assertRaisesRegex(WorkbenchError, 'non-finite') as cm:
            integrate(interval_rule(0.0, 1.0, 4), np.full(4, np.nan))
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.DomainError)

    @unittest.skipIf(pd is None, 'pandas not installed')
    def test_dump_csv(self):
        rule = interval_rule(0.0, 1.0, 3)
        with tempfile.TemporaryDirectory() as tmp:
            path = pathlib.Path(tmp) / 'nodes.csv'
            dump_csv(rule, lambda x: 2.0 * x[:, 0], path)
            df = pd.read_csv(path)
        self.assertEqual(list(df.columns), ['x1', 'weight', 'integrand'])
        np.testing.assert_allclose(df['integrand'], 2.0 * df['x1'])
        self.assertAlmostEqual(df['weight'].sum(), 1.0)


if __name__ == '__main__':
    unittest.main()
