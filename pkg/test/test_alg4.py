#!/usr/bin/env python3

import sys
sys.dont_write_bytecode = True
import unittest

import numpy as np

import patch_path
from curvlab.alg4 import (
    IDENTITY, OMEGA1, OMEGA2, OMEGA3, STAR, J1, J2, CurvOp, bivector_to_endo,
    check_symmetric, endo_to_bivector, frame_orientation, hodge_star, inner,
    j_from_omega, j_to_omega, kulkarni_nomizu, random_bianchi, random_frame,
    random_symmetric, sd_split, wedge2, wedge_density)
from curvlab.errors import WorkbenchError, WorkbenchErrorCode


E = np.eye(4)


class TestBivectors(unittest.TestCase):
    def test_wedge_basis(self):
        np.testing.assert_array_equal(wedge2(E[0], E[1]), [1, 0, 0, 0, 0, 0])
        np.testing.assert_array_equal(wedge2(E[1], E[0]), [-1, 0, 0, 0, 0, 0])
        np.testing.assert_array_equal(wedge2(E[2], E[3]), [0, 0, 0, 0, 0, 1])

    def test_hodge_star_on_basis(self):
        # *e12 = e34, *e13 = -e24, *e14 = e23
        np.testing.assert_array_equal(
            hodge_star(wedge2(E[0], E[1])), wedge2(E[2], E[3]))
        np.testing.assert_array_equal(
            hodge_star(wedge2(E[0], E[2])), -wedge2(E[1], E[3]))
        np.testing.assert_array_equal(
            hodge_star(wedge2(E[0], E[3])), wedge2(E[1], E[2]))

    def test_star_is_an_involution(self):
        self.assertTrue((STAR @ STAR).allclose(IDENTITY))
        self.assertEqual(STAR.symmetry_tag, 'symmetric')
        self.assertEqual(float(STAR.trace()), 0.0)

    def test_volume_coefficient(self):
        e12 = wedge2(E[0], E[1])
        e34 = wedge2(E[2], E[3])
        self.assertEqual(float(wedge_density(e12, e34)), 1.0)
        self.assertEqual(float(wedge_density(e12, e12)), 0.0)

    def test_sd_split(self):
        b = np.arange(1.0, 7.0)
        plus, minus = sd_split(b)
        np.testing.assert_allclose(plus + minus, b)
        np.testing.assert_allclose(hodge_star(plus), plus)
        np.testing.assert_allclose(hodge_star(minus), -minus)


class TestCurvOp(unittest.TestCase):
    def test_rejects_bad_shape(self):
        with self.assertRaisesRegex(WorkbenchError, r'expected \(\.\.\., 6, 6\)'):
            CurvOp(np.zeros((4, 4)))

    def test_rejects_non_finite(self):
        m = np.eye(6)
        m[2, 3] = np.nan
        with self.assertRaisesRegex(WorkbenchError, 'non-finite'):
            CurvOp(m)

    def test_symmetry_tags(self):
        self.assertEqual(IDENTITY.symmetry_tag, 'symmetric')
        skew = np.zeros((6, 6))
        skew[0, 1], skew[1, 0] = 1.0, -1.0
        self.assertEqual(CurvOp(skew).symmetry_tag, 'skew')
        skew[2, 2] = 1.0
        self.assertEqual(CurvOp(skew).symmetry_tag, 'general')

    def test_batched_arithmetic(self):
        rng = np.random.default_rng(3)
        r = random_symmetric(rng, 5)
        self.assertEqual(r.shape, (5,))
        scaled = r * np.arange(5.0)
        self.assertTrue(scaled[0].allclose(CurvOp(np.zeros((6, 6)))))
        self.assertTrue(scaled[2].allclose(r[2] + r[2]))
        self.assertTrue((r.sym() + r.skew()).allclose(r))

    def test_apply_to_bivector(self):
        b = np.arange(6.0)
        np.testing.assert_allclose(STAR @ b, hodge_star(b))

    def test_tensor4_antisymmetry(self):
        rng = np.random.default_rng(4)
        t = random_symmetric(rng).to_tensor4()
        np.testing.assert_allclose(t, -np.einsum('abcd->bacd', t))
        np.testing.assert_allclose(t, -np.einsum('abcd->abdc', t))
        np.testing.assert_allclose(t, np.einsum('abcd->cdab', t))

    def test_inner(self):
        self.assertEqual(float(inner(IDENTITY, IDENTITY)), 6.0)
        self.assertEqual(float(inner(STAR, STAR)), 6.0)
        self.assertEqual(float(inner(IDENTITY, STAR)), 0.0)
        self.assertEqual(float(inner(OMEGA1, OMEGA1)), 2.0)

    def test_inner_kind_mismatch(self):
        with self.assertRaisesRegex(WorkbenchError, 'kind mismatch') as cm:
            inner(IDENTITY, np.zeros(6))
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.InvalidInput)

    def test_inner_needs_bivectors(self):
        with self.assertRaisesRegex(WorkbenchError, 'expected bivectors'):
            inner(np.zeros(4), np.zeros(4))


class TestKulkarniNomizu(unittest.TestCase):
    def test_g_dot_g_is_twice_identity(self):
        self.assertTrue(kulkarni_nomizu(E, E).allclose(2.0 * IDENTITY))

    def test_symmetric_in_its_arguments(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(-1, 1, (4, 4))
        b = rng.uniform(-1, 1, (4, 4))
        a, b = a + a.T, b + b.T
        self.assertTrue(
            kulkarni_nomizu(a, b).allclose(kulkarni_nomizu(b, a), 1e-12))

    def test_rejects_non_symmetric(self):
        m = np.eye(4)
        m[0, 1] = 1.0
        with self.assertRaisesRegex(WorkbenchError, 'Bad xi: not symmetric'):
            kulkarni_nomizu(m, E)
        with self.assertRaisesRegex(WorkbenchError, r'expected \(\.\.\., 4, 4\)'):
            check_symmetric(np.eye(3))


class TestComplexStructures(unittest.TestCase):
    def test_kahler_forms(self):
        np.testing.assert_array_equal(OMEGA1, [1, 0, 0, 0, 0, 1])
        np.testing.assert_array_equal(OMEGA2, [0, 1, 0, 0, -1, 0])
        for omega in (OMEGA1, OMEGA2, OMEGA3):
            np.testing.assert_allclose(hodge_star(omega), omega)

    def test_omega_round_trip(self):
        np.testing.assert_allclose(j_to_omega(J1), OMEGA1)
        np.testing.assert_allclose(j_from_omega(OMEGA2), J2)

    def test_rejects_non_complex(self):
        with self.assertRaisesRegex(WorkbenchError, r'\|J\^2 \+ I\|'):
            j_to_omega(np.eye(4))

    def test_rejects_negative_structure(self):
        neg = J1.copy()
        neg[2:, 2:] = -neg[2:, 2:]
        self.assertTrue(np.allclose(neg @ neg, -np.eye(4)))
        with self.assertRaisesRegex(WorkbenchError, 'not positive'):
            j_to_omega(neg)

    def test_rejects_bad_kahler_norm(self):
        with self.assertRaisesRegex(WorkbenchError, 'norm squared'):
            j_from_omega(2.0 * OMEGA1)

    def test_endo_bivector_inverse(self):
        b = np.arange(1.0, 7.0)
        a = bivector_to_endo(b)
        np.testing.assert_allclose(a, -a.T)
        np.testing.assert_allclose(endo_to_bivector(a), b)


class TestRandomDraws(unittest.TestCase):
    def test_bianchi_kernel(self):
        rng = np.random.default_rng(6)
        r = random_bianchi(rng, 20)
        np.testing.assert_allclose(inner(r, STAR), 0.0, atol=1e-12)
        self.assertEqual(r.symmetry_tag, 'symmetric')

    def test_seeded(self):
        a = random_symmetric(np.random.default_rng(7), 3)
        b = random_symmetric(np.random.default_rng(7), 3)
        self.assertTrue(a.allclose(b, 0.0))

    def test_frames(self):
        rng = np.random.default_rng(8)
        for orientation in (1, -1):
            frame = random_frame(rng, orientation)
            np.testing.assert_allclose(frame @ frame.T, E, atol=1e-12)
            self.assertEqual(frame_orientation(frame), orientation)


if __name__ == '__main__':
    unittest.main()
