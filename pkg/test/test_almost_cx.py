#!/usr/bin/env python3

import sys
sys.dont_write_bytecode = True
import unittest

import numpy as np

import patch_path
from curvlab.alg4 import J1, J2, inner
from curvlab.almost_cx import (
    angle_and_h, chern_difference_residual, chern_product_density,
    constant_acs, ec1_fd, eta_and_c1, hermitian_delta, homotopy_jt,
    kahler_identities, make_acs, standard_acs, thm12_densities, ttilde_g,
    validate_acs)
from curvlab.chartgeom import biaxial_chart, flat_chart, stereographic_chart
from curvlab.errors import WorkbenchError, WorkbenchErrorCode


def _points(chart, n, seed=0):
    rng = np.random.default_rng(seed)
    box = chart.box * 0.8
    return rng.uniform(box[:, 0], box[:, 1], size=(n, chart.dim))


def _conjugated():
    return make_acs('conjugated', angle='0.4*x1 + 0.3*x2*x3')


def _quaternion():
    return make_acs('quaternion', a='0.3*x1 + 0.2*x3', b='-0.3*x2 - 0.2*x4')


class TestStructures(unittest.TestCase):
    def test_presets(self):
        self.assertEqual(standard_acs(2).name, 'J2')
        np.testing.assert_allclose(
            make_acs('J1').values(flat_chart(4), [0.0] * 4), J1)
        with self.assertRaisesRegex(WorkbenchError, 'must be 1, 2 or 3'):
            standard_acs(4)

    def test_catalog_errors(self):
        with self.assertRaises(WorkbenchError) as cm:
            make_acs('nope')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.UnknownName)
        with self.assertRaises(WorkbenchError) as cm:
            make_acs('J1', bogus=1)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_bad_matrix(self):
        with self.assertRaisesRegex(WorkbenchError, r'expected \(4, 4\)'):
            constant_acs(np.eye(3))

    def test_validate_standard(self):
        d = validate_acs(flat_chart(4), standard_acs(1), [0.1, 0.2, 0.3, 0.4])
        self.assertEqual(d.square, 0.0)
        self.assertEqual(d.orthogonality, 0.0)
        self.assertEqual(d.anti_self_dual, 0.0)
        self.assertEqual(d.orientation, 1)

    def test_validate_fields(self):
        chart = stereographic_chart(4, half=1.0)
        x = _points(chart, 4)
        for acs in (_conjugated(), _quaternion()):
            d = validate_acs(chart, acs, x)
            self.assertLess(float(np.max(d.square)), 1e-12)
            self.assertLess(float(np.max(d.orthogonality)), 1e-12)
            self.assertLess(float(np.max(d.anti_self_dual)), 1e-12)
            np.testing.assert_array_equal(d.orientation, 1)

    def test_validate_negative(self):
        neg = J1.copy()
        neg[2:, 2:] = -neg[2:, 2:]
        d = validate_acs(flat_chart(4), constant_acs(neg), [0.0] * 4)
        self.assertEqual(d.square, 0.0)
        self.assertEqual(d.orientation, -1)
        self.assertGreater(d.anti_self_dual, 0.5)

    def test_rejects_non_structure(self):
        with self.assertRaisesRegex(
                WorkbenchError, 'Bad almost complex structure') as cm:
            angle_and_h(flat_chart(4), standard_acs(1),
                        constant_acs(np.eye(4)), [0.0] * 4)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.InvalidInput)


class TestAngles(unittest.TestCase):
    def test_orthogonal_structures(self):
        pair = angle_and_h(flat_chart(4), standard_acs(1), standard_acs(2),
                           [0.1, 0.0, 0.0, 0.0])
        self.assertAlmostEqual(pair.cos_theta, 0.0)
        self.assertAlmostEqual(float(inner(pair.h_tilde, pair.h_tilde)), 2.0)

    def test_equal_structures(self):
        chart = stereographic_chart(4, half=1.0)
        pair = angle_and_h(chart, _conjugated(), _conjugated(), _points(chart, 3))
        np.testing.assert_allclose(pair.cos_theta, 1.0)
        np.testing.assert_allclose(pair.h_tilde, 0.0, atol=1e-12)

    def test_homotopy_end_points(self):
        chart = flat_chart(4)
        x = [0.1, 0.2, 0.3, 0.4]
        j0, j1 = standard_acs(1), standard_acs(2)
        np.testing.assert_allclose(homotopy_jt(chart, j0, j1, x, 0.0), J1)
        np.testing.assert_allclose(
            homotopy_jt(chart, j0, j1, x, 1.0), J2, atol=1e-15)
        jt = homotopy_jt(chart, j0, j1, x, 0.5)
        np.testing.assert_allclose(jt @ jt, -np.eye(4), atol=1e-12)

    def test_homotopy_parameter(self):
        with self.assertRaisesRegex(WorkbenchError, r'must lie in \[0, 1\]'):
            homotopy_jt(flat_chart(4), standard_acs(1), standard_acs(2),
                        [0.0] * 4, 1.5)

    def test_anti_complex_is_singular(self):
        with self.assertRaisesRegex(WorkbenchError, 'anti-complex') as cm:
            homotopy_jt(flat_chart(4), standard_acs(1), constant_acs(-J1),
                        [0.0] * 4, 0.5)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.SingularSet)


class TestHermitianConnection(unittest.TestCase):
    def test_constant_structure_on_flat(self):
        h = hermitian_delta(flat_chart(4), standard_acs(1), [0.2, 0.1, 0.0, 0.3])
        np.testing.assert_allclose(h.s, 0.0, atol=1e-15)
        np.testing.assert_allclose(h.torsion, 0.0, atol=1e-15)

    def test_parallel_and_torsion(self):
        chart = stereographic_chart(4, half=1.0)
        h = hermitian_delta(chart, _conjugated(), _points(chart, 4, seed=1))
        self.assertLess(float(np.max(h.parallel_defect)), 1e-8)
        self.assertLess(float(np.max(h.torsion_defect)), 1e-8)


class TestChernForms(unittest.TestCase):
    def test_flat_constant_structure(self):
        e = eta_and_c1(flat_chart(4), standard_acs(1), [0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(e.c1, 0.0, atol=1e-14)
        np.testing.assert_allclose(e.eta, 0.0, atol=1e-14)

    def test_c1_representations(self):
        chart = stereographic_chart(4, half=1.0)
        acs = _conjugated()
        x = _points(chart, 3, seed=2)
        e = eta_and_c1(chart, acs, x)
        np.testing.assert_allclose(e.c1, e.c1_bundle, atol=1e-7)
        np.testing.assert_allclose(e.eta, e.eta_vol, atol=1e-8)
        np.testing.assert_allclose(ec1_fd(chart, acs, x), e.c1_bundle, atol=1e-5)


class TestTransgressionOneForms(unittest.TestCase):
    def test_constant_pair(self):
        out = ttilde_g(flat_chart(4), standard_acs(1), standard_acs(2),
                       [0.0, 0.1, 0.2, 0.3])
        np.testing.assert_allclose(out.ttilde, 0.0, atol=1e-15)
        np.testing.assert_allclose(out.g, 0.0, atol=1e-15)
        self.assertAlmostEqual(out.cos_theta, 0.0)

    def test_unknown_pairing(self):
        with self.assertRaisesRegex(WorkbenchError, 'Unknown pairing') as cm:
            ttilde_g(flat_chart(4), standard_acs(1), standard_acs(2),
                     [0.0] * 4, pairing='frobenius')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_chern_difference(self):
        chart = stereographic_chart(4, half=1.0)
        res = chern_difference_residual(
            chart, standard_acs(1), _conjugated(), _points(chart, 3, seed=3))
        self.assertLess(float(np.max(res)), 1e-5)
        flat = flat_chart(4, half=0.5)
        res = chern_difference_residual(
            flat, standard_acs(1), _quaternion(), _points(flat, 3, seed=4))
        self.assertLess(float(np.max(res)), 1e-5)

    def test_angle_densities(self):
        flat = flat_chart(4, half=0.5)
        dens = thm12_densities(flat, standard_acs(1), _quaternion(),
                               _points(flat, 3, seed=5))
        self.assertLess(float(np.max(dens['anti_complex_defect'])), 1e-8)
        self.assertLess(float(np.max(dens['chain_residual'])), 1e-6)

    def test_chern_product(self):
        chart = stereographic_chart(4, half=1.0)
        cor = chern_product_density(
            chart, standard_acs(1), _conjugated(), _points(chart, 3, seed=6))
        self.assertLess(float(np.max(cor['residual'])), 1e-6)


class TestKahler(unittest.TestCase):
    def test_biaxial(self):
        chart = biaxial_chart()
        x = _points(chart, 4, seed=7)
        for key, values in kahler_identities(chart, standard_acs(1), x).items():
            self.assertLess(float(np.max(values)), 1e-8, key)
        kah = chern_product_density(chart, standard_acs(1), standard_acs(1), x)
        np.testing.assert_allclose(kah['p1_plus'], kah['c1_squared_0'],
                                   atol=1e-8)


if __name__ == '__main__':
    unittest.main()
