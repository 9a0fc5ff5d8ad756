#!/usr/bin/env python3

import sys
sys.dont_write_bytecode = True
import unittest

import numpy as np

import patch_path
from curvlab.errors import WorkbenchError, WorkbenchErrorCode
from curvlab.quat8 import (
    OMEGA_NORM2, QUADS, HKTriple, angle8, check_curvature8,
    constant_curvature8, frame_construction, fundamental_form, hk_from_split,
    hodge8, homotopy_omega, in_T, random_curvature8, reconstruct_triple,
    rotate_form, standard_triple, symmetrize_curvature8, to_tensor, wedge22,
    weitzenbock4, weitzenbock4_matrix)


def _rotation(seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def _unit(a, b):
    w = np.zeros((8, 8))
    w[a, b], w[b, a] = 1.0, -1.0
    return w


class TestForms(unittest.TestCase):
    def test_hodge(self):
        first = np.zeros(70)
        first[0] = 1.0
        star = hodge8(first)
        self.assertEqual(star[QUADS.index((4, 5, 6, 7))], 1.0)
        self.assertEqual(float(np.sum(np.abs(star))), 1.0)
        w = np.random.default_rng(1).standard_normal(70)
        np.testing.assert_allclose(hodge8(hodge8(w)), w)

    def test_bad_form(self):
        with self.assertRaisesRegex(WorkbenchError, r'expected \(70,\)') as cm:
            hodge8(np.zeros(6))
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.InvalidInput)

    def test_tensor_is_alternating(self):
        w = np.zeros(70)
        w[0] = 2.0
        t = to_tensor(w)
        self.assertEqual(t[0, 1, 2, 3], 2.0)
        self.assertEqual(t[1, 0, 2, 3], -2.0)
        self.assertEqual(t[3, 0, 1, 2], -2.0)
        self.assertEqual(t[0, 0, 2, 3], 0.0)

    def test_wedge(self):
        out = wedge22(_unit(0, 1), _unit(2, 3))
        self.assertEqual(out[0], 1.0)
        self.assertEqual(float(np.sum(np.abs(out))), 1.0)
        np.testing.assert_array_equal(
            wedge22(_unit(0, 1), _unit(0, 1)), np.zeros(70))
        np.testing.assert_array_equal(
            wedge22(_unit(2, 3), _unit(0, 1)), out)


class TestTriples(unittest.TestCase):
    def test_fundamental_form(self):
        omega = fundamental_form(standard_triple())
        self.assertAlmostEqual(float(omega @ omega), OMEGA_NORM2)
        np.testing.assert_allclose(hodge8(omega), omega, atol=1e-15)
        report = in_T(omega)
        self.assertTrue(report['member'])
        self.assertTrue(report['reconstructed'])

    def test_scaled_form_is_outside(self):
        omega = fundamental_form(standard_triple())
        report = in_T(2.0 * omega)
        self.assertFalse(report['member'])
        self.assertFalse(report['reconstructed'])

    def test_reconstruct(self):
        omega = rotate_form(fundamental_form(standard_triple()), _rotation(2))
        triple = reconstruct_triple(omega)
        self.assertIsNotNone(triple)
        np.testing.assert_allclose(fundamental_form(triple), omega, atol=1e-8)

    def test_rotated_and_split(self):
        q = _rotation(3)
        omega = fundamental_form(standard_triple())
        self.assertTrue(in_T(rotate_form(omega, q))['member'])
        self.assertTrue(in_T(fundamental_form(hk_from_split(q[:4])))['member'])

    def test_bad_triples(self):
        with self.assertRaisesRegex(WorkbenchError, r'expected \(8, 8\)'):
            HKTriple(np.eye(4), np.eye(4), np.eye(4))
        with self.assertRaisesRegex(
                WorkbenchError, 'not an orthogonal complex structure'):
            HKTriple(np.eye(8), np.eye(8), np.eye(8))
        t = standard_triple()
        with self.assertRaisesRegex(WorkbenchError, 'Bad triple'):
            HKTriple(t.j1, t.j2, -t.j3)

    def test_bad_split(self):
        with self.assertRaisesRegex(WorkbenchError, 'not orthonormal'):
            hk_from_split(2.0 * np.eye(8)[:4])
        with self.assertRaisesRegex(WorkbenchError, 'negatively oriented'):
            q = np.eye(8)[4:].copy()
            q[0] = -q[0]
            hk_from_split(np.eye(8)[:4], q)


class TestAngles(unittest.TestCase):
    def test_equal_forms(self):
        omega = fundamental_form(standard_triple())
        ang = angle8(omega, omega)
        self.assertAlmostEqual(ang.cos_theta, 1.0)
        self.assertAlmostEqual(ang.h_norm2, 0.0)

    def test_rejects_non_member(self):
        omega = fundamental_form(standard_triple())
        with self.assertRaisesRegex(WorkbenchError, 'Omega1'):
            angle8(omega, 0.5 * omega)

    def test_frame_construction(self):
        for zeta in (0.0, np.pi / 6, np.pi / 4, np.pi / 2):
            fc = frame_construction(zeta=zeta)
            c = np.cos(zeta)
            self.assertAlmostEqual(
                fc.checks['cos_theta'], (7.0 + 8.0 * c * c) / 15.0, places=12)
            for key, value in fc.checks.items():
                if key not in ('cos_theta', 'cos_theta_expected'):
                    self.assertLess(value, 1e-10, key)

    def test_h_tilde_normalization(self):
        fc = frame_construction(zeta=np.pi / 4)
        ang = angle8(fc.omega0, fc.omega1)
        self.assertEqual(ang.normalization, '10/3')
        self.assertAlmostEqual(ang.h_norm2, ang.norm_10_3, places=9)

    def test_bad_angle(self):
        with self.assertRaisesRegex(WorkbenchError, r'must lie in \[0, pi/2\]'):
            frame_construction(zeta=2.0)

    def test_homotopy(self):
        omega0 = fundamental_form(standard_triple())
        np.testing.assert_allclose(
            homotopy_omega(zeta=np.pi / 3, t=0.0), omega0, atol=1e-12)
        for t in (0.25, 0.5, 1.0):
            self.assertTrue(in_T(homotopy_omega(zeta=np.pi / 3, t=t))['member'])
        with self.assertRaisesRegex(WorkbenchError, 'homotopy parameter'):
            homotopy_omega(t=1.5)


class TestWeitzenbock(unittest.TestCase):
    def test_symmetrized_draws(self):
        r = random_curvature8(np.random.default_rng(4))
        check_curvature8(r)
        np.testing.assert_allclose(symmetrize_curvature8(r), r, atol=1e-12)

    def test_bad_curvature(self):
        with self.assertRaisesRegex(WorkbenchError, 'symmetry defect'):
            check_curvature8(np.random.default_rng(5).standard_normal((8,) * 4))
        with self.assertRaisesRegex(WorkbenchError, r'expected \(8, 8, 8, 8\)'):
            check_curvature8(np.zeros((4, 4, 4, 4)))

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        r = random_curvature8(rng)
        a, b = rng.standard_normal((2, 70))
        self.assertAlmostEqual(
            float(weitzenbock4(r, a) @ b), float(a @ weitzenbock4(r, b)))

    def test_matrix(self):
        mat = weitzenbock4_matrix(random_curvature8(np.random.default_rng(7)))
        np.testing.assert_allclose(mat, mat.T, atol=1e-10)
        for i, p in enumerate(QUADS):
            for j, q in enumerate(QUADS):
                if len(set(p) & set(q)) <= 1:
                    self.assertAlmostEqual(mat[j, i], 0.0, places=10)

    def test_constant_curvature(self):
        for k in (1.0, -0.5):
            with self.subTest(k=k):
                mat = weitzenbock4_matrix(constant_curvature8(k))
                np.testing.assert_allclose(mat, -16.0 * k * np.eye(70),
                                           atol=1e-10)


if __name__ == '__main__':
    unittest.main()
