#!/usr/bin/env python3

import sys
sys.dont_write_bytecode = True
import unittest

import numpy as np

import patch_path
from curvlab.alg4 import CurvOp
from curvlab.chartgeom import (
    box_boundary_rule, box_rule, conformal_curvature, flat_chart, geometry,
    integrate, interval_rule, random_poly_chart, riemann_frame,
    stereographic_chart)
from curvlab.errors import WorkbenchError, WorkbenchErrorCode
from curvlab.transgression import (
    ThreeForm, boundary_integral, bundle_map_residual, cal_s_and_squares,
    closed_branch_residual, conformal_delta, d_threeform, gauge_delta,
    make_bundle, make_delta, modified_curvature, random_delta, rank_one_delta,
    rotation_map, scalar_map, singular_sprime, t_integral_defect,
    torsion_of, transgression_forms, verify_prop71, zero_delta, zeta_wedge)


H = '1 + 0.2*x1^2 + 0.1*x3^2'
E = np.eye(4)


def _points(chart, n, seed=0):
    rng = np.random.default_rng(seed)
    box = chart.box * 0.8
    return rng.uniform(box[:, 0], box[:, 1], size=(n, chart.dim))


class TestThreeForm(unittest.TestCase):
    def test_components(self):
        t = ThreeForm([1.0, 0.0, 0.0, 0.0])
        self.assertEqual(float(t(E[1], E[2], E[3])), 1.0)
        self.assertEqual(float(t(E[2], E[1], E[3])), -1.0)
        self.assertEqual(float(t(E[0], E[2], E[3])), 0.0)
        u = ThreeForm([0.0, 0.0, 0.0, 2.0])
        self.assertEqual(float(u(E[0], E[1], E[2])), 2.0)

    def test_arithmetic(self):
        a = ThreeForm([1.0, 2.0, 3.0, 4.0])
        self.assertEqual((a - a).max_abs(), 0.0)
        self.assertEqual((2.0 * a + (-a)).max_abs(), 4.0)

    def test_bad_shape(self):
        with self.assertRaisesRegex(WorkbenchError, 'must have length 4'):
            ThreeForm(np.zeros(3))

    def test_zeta_wedge_bad_shape(self):
        with self.assertRaisesRegex(WorkbenchError, r'expected \(\.\.\., 4, 6\)'):
            zeta_wedge(np.zeros((4, 4)), CurvOp(np.eye(6)))


class TestExteriorDerivative(unittest.TestCase):
    def test_d_threeform(self):
        chart = flat_chart(4)
        x = [0.1, 0.2, 0.3, 0.4]
        self.assertAlmostEqual(d_threeform(chart, ['x1', 0, 0, 0], x), 1.0)
        self.assertAlmostEqual(d_threeform(chart, [0, 'x2', 0, 0], x), -1.0)
        self.assertAlmostEqual(
            d_threeform(chart, [0, 0, 'x3^2', 0], x), 0.6)

    def test_d_threeform_bad_input(self):
        with self.assertRaisesRegex(WorkbenchError, 'need dimension 4'):
            d_threeform(flat_chart(2), ['x1'] * 4, [0.0, 0.0])
        with self.assertRaisesRegex(WorkbenchError, '3 components'):
            d_threeform(flat_chart(4), ['x1', 0, 0], [0.0] * 4)

    def test_stokes_on_box(self):
        box = [[-1.0, 1.0]] * 4
        rule = box_boundary_rule(box, 4)
        flux = boundary_integral(
            rule, lambda x: np.stack(
                [x[:, 0], np.zeros(len(x)), np.zeros(len(x)),
                 np.zeros(len(x))], axis=-1))
        self.assertAlmostEqual(flux, 16.0)
        inside = integrate(
            box_rule(box, 2),
            lambda x: d_threeform(flat_chart(4), ['x1', 0, 0, 0], x))
        self.assertAlmostEqual(inside, flux)
        flux2 = boundary_integral(
            rule, lambda x: np.stack(
                [np.zeros(len(x)), x[:, 1], np.zeros(len(x)),
                 np.zeros(len(x))], axis=-1))
        self.assertAlmostEqual(flux2, -16.0)

    def test_boundary_needs_normals(self):
        with self.assertRaisesRegex(WorkbenchError, 'need normals'):
            boundary_integral(interval_rule(0.0, 1.0, 2), np.zeros((2, 4)))


class TestDeltas(unittest.TestCase):
    def test_zero_delta(self):
        chart = stereographic_chart(4, half=1.0)
        x = _points(chart, 3)
        self.assertTrue(
            modified_curvature(chart, zero_delta(), x).allclose(
                riemann_frame(chart, x), 1e-10))
        np.testing.assert_allclose(
            torsion_of(chart, zero_delta(), x), np.zeros((3, 4, 4, 4)))

    def test_conformal_delta_is_symmetric_not_metric(self):
        chart = flat_chart(4)
        x = _points(chart, 2)
        delta = conformal_delta('x1*x2 + x3')
        self.assertFalse(delta.metric_compatible)
        np.testing.assert_allclose(
            torsion_of(chart, delta, x), 0.0, atol=1e-14)
        with self.assertRaisesRegex(
                WorkbenchError, 'metric compatibility violated'):
            cal_s_and_squares(chart, delta, x)

    def test_gauge_delta_curvature(self):
        chart = random_poly_chart(seed=2)
        f = '0.3*x1*x2 - 0.2*x3 + 0.1*x4^2'
        x = _points(chart, 3, seed=1)
        delta = gauge_delta(f)
        self.assertTrue(delta.metric_compatible)
        self.assertTrue(
            modified_curvature(chart, delta, x).allclose(
                conformal_curvature(chart, f, x), 1e-8))

    def test_gauge_delta_values(self):
        # K(X, Y) = 1/2 (df(Y) X - g(X, Y) grad f) with f = x1
        s = gauge_delta('x1').values(flat_chart(4), [0.0] * 4)
        self.assertAlmostEqual(s[1, 0, 1], 0.5)
        self.assertAlmostEqual(s[1, 1, 0], -0.5)
        self.assertAlmostEqual(s[0, 0, 0], 0.0)

    def test_rank_one(self):
        skew = np.zeros((4, 4))
        skew[0, 1], skew[1, 0] = 1.0, -1.0
        self.assertTrue(rank_one_delta(['x1', 0, 0, 0], skew).metric_compatible)
        self.assertFalse(rank_one_delta(['x1', 0, 0, 0], E).metric_compatible)
        with self.assertRaisesRegex(WorkbenchError, r'expected \(4, 4\)'):
            rank_one_delta(['x1', 0, 0, 0], np.eye(3))
        with self.assertRaisesRegex(WorkbenchError, '2 components'):
            rank_one_delta(['x1', 0], skew)

    def test_cal_s_shapes(self):
        chart = flat_chart(4)
        cal = cal_s_and_squares(chart, random_delta(seed=4), _points(chart, 2))
        self.assertEqual(cal.cal_s.shape, (2, 4, 6))
        self.assertEqual(cal.cal_s2.shape, (2,))
        self.assertEqual(cal.d_s.shape, (2,))

    def test_catalog(self):
        self.assertEqual(make_delta('random', seed=3).name, 'random(3)')
        with self.assertRaisesRegex(
                WorkbenchError, 'Unknown connection delta "nope"') as cm:
            make_delta('nope')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.UnknownName)
        with self.assertRaises(WorkbenchError) as cm:
            make_delta('zero', bogus=1)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)


class TestTransgression(unittest.TestCase):
    def test_euler_and_p1_change(self):
        for chart in (flat_chart(4), stereographic_chart(4, half=1.0),
                      random_poly_chart(seed=5)):
            res = verify_prop71(chart, random_delta(seed=6, scale=0.3),
                                _points(chart, 2, seed=7))
            self.assertLess(float(np.max(res['euler'])), 1e-6, chart.name)
            self.assertLess(float(np.max(res['p1'])), 1e-6, chart.name)

    def test_closed_forms_and_t_integral_agree(self):
        chart = stereographic_chart(4, half=1.0)
        gap = t_integral_defect(chart, random_delta(seed=8, scale=0.3),
                                _points(chart, 1, seed=9))
        self.assertLess(gap, 1e-10)

    def test_zero_delta_has_zero_forms(self):
        chart = flat_chart(4)
        forms = transgression_forms(chart, zero_delta(), [0.1, 0.2, 0.3, 0.4])
        self.assertEqual(forms.euler.max_abs(), 0.0)
        self.assertEqual(forms.p1.max_abs(), 0.0)

    def test_forms_need_metric_delta(self):
        with self.assertRaisesRegex(
                WorkbenchError, 'metric compatibility violated'):
            transgression_forms(flat_chart(4), conformal_delta('x1'),
                                [0.0] * 4)


class TestBundleMaps(unittest.TestCase):
    def test_rotation_is_conformal(self):
        chart = stereographic_chart(4, half=1.0)
        bundle = make_bundle('rotation', h=H, angle12='0.3*x1')
        geo = geometry(chart, _points(chart, 3))
        self.assertLess(bundle.check(geo), 1e-10)

    def test_bundle_map(self):
        bundle = rotation_map(H, '0.3*x1 + 0.2*x4', '0.1*x2')
        chart = flat_chart(4)
        res = bundle_map_residual(chart, bundle, _points(chart, 3, seed=10))
        for key in ('euler', 'p1', 'consistency'):
            self.assertLess(float(np.max(res[key])), 1e-5, key)

    def test_closed_branch(self):
        chart = stereographic_chart(4, half=1.0)
        res = closed_branch_residual(chart, H, _points(chart, 3, seed=11))
        self.assertLess(float(np.max(res['torsion'])), 1e-9)
        self.assertLess(float(np.max(res['s_prime'])), 1e-9)
        self.assertLess(float(np.max(res['euler'])), 1e-5)
        self.assertLess(float(np.max(res['p1'])), 1e-5)

    def test_singular_set(self):
        bundle = scalar_map('x1^2 + x2^2')
        with self.assertRaisesRegex(WorkbenchError, 'singular set') as cm:
            singular_sprime(flat_chart(4), bundle, [0.0, 0.0, 0.5, 0.5])
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.SingularSet)

    def test_unknown_bundle(self):
        with self.assertRaises(WorkbenchError) as cm:
            make_bundle('twist')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.UnknownName)


if __name__ == '__main__':
    unittest.main()
