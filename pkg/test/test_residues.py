#!/usr/bin/env python3

import sys
sys.dont_write_bytecode = True
import unittest

import numpy as np

import patch_path
from curvlab.chartgeom import box_rule, flat_chart, sphere3_rule, stereographic_chart
from curvlab.errors import WorkbenchError, WorkbenchErrorCode
from curvlab.residues import (
    PoleSpec, annulus_stokes, controlled_check, kappa_estimate,
    pole_residue_4d, pole_sum_4d, pole_sum_numeric, pole_sweep, richardson,
    semicontinuity_probe, shell_flux, surface_residue_2d, tube_residue)


THIRTY_TWO_PI2 = 32.0 * np.pi ** 2


class TestPoleSpec(unittest.TestCase):
    def test_closed_form(self):
        self.assertEqual(PoleSpec(k=1).closed_form, -2.0)
        self.assertEqual(PoleSpec(k=2).closed_form, -10.0)
        self.assertEqual(PoleSpec(k=1, kind='pole').closed_form, -1.0)
        self.assertEqual(PoleSpec(k=3, kind='pole').closed_form, 0.0)

    def test_validation(self):
        with self.assertRaisesRegex(WorkbenchError, 'positive integer'):
            PoleSpec(k=0)
        with self.assertRaisesRegex(WorkbenchError, 'must be "zero" or "pole"'):
            PoleSpec(kind='branch')

    def test_sums(self):
        self.assertEqual(pole_sum_4d(zeros=(1,)), -2.0)
        self.assertEqual(pole_sum_4d(poles=(1,)), -1.0)
        self.assertEqual(pole_sum_4d(poles=(3,)), 0.0)
        self.assertEqual(pole_sum_4d(zeros=(1, 2), poles=(2,)), -14.0)
        with self.assertRaises(WorkbenchError):
            pole_sum_4d(zeros=(1.5,))


class TestShellResidues(unittest.TestCase):
    def test_unit_factor_is_exact(self):
        for spec in (PoleSpec(k=1), PoleSpec(k=2), PoleSpec(k=1, kind='pole'),
                     PoleSpec(center=(0.2, 0.0, -0.1, 0.0), k=1)):
            self.assertAlmostEqual(
                pole_residue_4d(spec, 0.3), spec.closed_form, places=9)

    def test_numeric_sum(self):
        self.assertAlmostEqual(
            pole_sum_numeric(zeros=(1,), poles=(1,)), -3.0, places=9)

    def test_sweep_with_smooth_factor(self):
        spec = PoleSpec(k=1, psi='1 + 0.3*x1 + 0.2*x2*x3')
        sweep = pole_sweep(spec)
        self.assertEqual(len(sweep.radii), 6)
        self.assertAlmostEqual(sweep.extrapolated, -2.0, delta=1e-2)

    def test_sweep_levels(self):
        with self.assertRaises(WorkbenchError) as cm:
            pole_sweep(PoleSpec(), levels=1)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_bad_radius(self):
        with self.assertRaisesRegex(WorkbenchError, 'must be positive'):
            pole_residue_4d(PoleSpec(), 0.0)

    def test_annulus(self):
        out = annulus_stokes(PoleSpec(k=2), inner=0.1, outer=0.5)
        self.assertLess(out['residual'] / abs(out['flux_outer']), 1e-8)
        self.assertAlmostEqual(out['flux_outer'] / THIRTY_TWO_PI2, 10.0,
                               places=8)
        with self.assertRaisesRegex(WorkbenchError, 'Bad annulus radii'):
            annulus_stokes(PoleSpec(), inner=0.5, outer=0.1)

    def test_shell_flux_checks(self):
        with self.assertRaisesRegex(WorkbenchError, 'need a flat chart'):
            shell_flux(stereographic_chart(4), 'x1', sphere3_rule(4, 0.5))
        with self.assertRaisesRegex(WorkbenchError, 'no normals'):
            shell_flux(flat_chart(4), 'x1', box_rule([[0.0, 0.1]] * 4, 2))
        with self.assertRaisesRegex(WorkbenchError, 'outside chart'):
            shell_flux(flat_chart(4, 0.2), 'x1', sphere3_rule(4, 0.5))


class TestRichardson(unittest.TestCase):
    def test_linear_model(self):
        radii = np.array([1.0, 0.5, 0.25])
        limit, error = richardson(radii, 3.0 + 2.0 * radii)
        self.assertAlmostEqual(limit, 3.0)
        self.assertAlmostEqual(error, 0.0)

    def test_bad_sweeps(self):
        with self.assertRaisesRegex(WorkbenchError, 'at least two radii'):
            richardson([1.0], [1.0])
        with self.assertRaisesRegex(WorkbenchError, 'decrease strictly'):
            richardson([0.5, 1.0], [1.0, 2.0])


class TestSurfaces(unittest.TestCase):
    def test_zero_and_infinity(self):
        self.assertAlmostEqual(
            surface_residue_2d('x1^2 + x2^2', zeros=[((0.0, 0.0), 2)]), 1.0)
        self.assertAlmostEqual(
            surface_residue_2d('1/(x1^2 + x2^2)',
                               infinities=[((0.0, 0.0), 2)]), -1.0)
        h = '((x1 - 0.5)^2 + x2^2) * ((x1 + 0.5)^2 + x2^2)^2'
        self.assertAlmostEqual(
            surface_residue_2d(h, zeros=[((0.5, 0.0), 2), ((-0.5, 0.0), 4)]),
            3.0, places=6)

    def test_orders_must_match_the_shells(self):
        with self.assertRaisesRegex(
                WorkbenchError, 'Bad residue orders.*orders give 2') as cm:
            surface_residue_2d('x1^2 + x2^2', zeros=[((0.0, 0.0), 4)])
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.InvalidInput)
        # the zero at (-0.5, 0) has order 4
        h = '((x1 - 0.5)^2 + x2^2) * ((x1 + 0.5)^2 + x2^2)^2'
        with self.assertRaisesRegex(WorkbenchError, 'Bad residue orders'):
            surface_residue_2d(h, zeros=[((0.5, 0.0), 2), ((-0.5, 0.0), 2)])
        self.assertAlmostEqual(
            surface_residue_2d('x1^2 + x2^2', zeros=[((0.0, 0.0), 4)],
                               tol=None), 1.0)

    def test_overlapping_shells(self):
        with self.assertRaisesRegex(WorkbenchError, 'overlap'):
            surface_residue_2d('x1^2 + x2^2',
                               zeros=[((0.0, 0.0), 2), ((0.001, 0.0), 2)])
        with self.assertRaisesRegex(WorkbenchError, 'two coordinates'):
            surface_residue_2d('x1', zeros=[((0.0, 0.0, 0.0), 2)])

    def test_tube(self):
        sweep = tube_residue('x3^2 + x4^2 - 1')
        np.testing.assert_allclose(sweep.values, 1.0, atol=1e-9)
        self.assertAlmostEqual(sweep.extrapolated, 1.0, places=9)

    def test_bad_patch(self):
        with self.assertRaisesRegex(WorkbenchError, 'Bad patch'):
            tube_residue('x3', patch=((1.0, 0.0), (0.0, 1.0)))


class TestZeroOrders(unittest.TestCase):
    def test_kappa(self):
        est = kappa_estimate(lambda r: r ** 3 * (2.0 + r))
        self.assertEqual(est.kappa, 3)
        self.assertAlmostEqual(est.A, 2.0, places=6)

    def test_semicontinuity(self):
        self.assertEqual(semicontinuity_probe(lambda r: r ** 3), (3, 2))

    def test_no_zero(self):
        with self.assertRaises(WorkbenchError) as cm:
            kappa_estimate(lambda r: np.ones_like(r))
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.NoLimit)

    def test_non_positive_profile(self):
        with self.assertRaises(WorkbenchError) as cm:
            kappa_estimate(lambda r: -r)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.DomainError)

    def test_controlled(self):
        rep = controlled_check(
            lambda u: [0.0, 1.0 + u[0] ** 2, 3.0], [[-1.0, 1.0]], kappa=1,
            derivative_bounds=lambda u: (0.5, 0.2))
        self.assertAlmostEqual(rep.inf_abs_a, 1.0)
        self.assertTrue(rep.controlled)
        self.assertTrue(rep.condition1)
        self.assertGreater(rep.h_over_d, 0.0)

    def test_uncontrolled(self):
        rep = controlled_check(lambda u: [0.0, u[0], 1.0], [[-1.0, 1.0]])
        self.assertAlmostEqual(rep.inf_abs_a, 0.0)
        self.assertFalse(rep.controlled)
        self.assertIsNone(rep.condition1)


if __name__ == '__main__':
    unittest.main()
