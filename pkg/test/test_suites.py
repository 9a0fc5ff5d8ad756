#!/usr/bin/env python3

import sys
sys.dont_write_bytecode = True
import json
import unittest

import numpy as np

import patch_path
from curvlab.conf import ExperimentConfig
from curvlab.errors import WorkbenchError, WorkbenchErrorCode
from curvlab.experiments import EXPERIMENTS, config_chart, run_experiment
from curvlab.suites import SUITES, _Suite, run_suite


def _verify(name, **values):
    values.setdefault('draws', 3)
    return ExperimentConfig(kind='verify', name=name, seed=11, values=values)


def _run(name, **values):
    return ExperimentConfig(kind='run', name=name, seed=11, values=values)


def _failed(report):
    return ', '.join(f'{c.name} ({c.abs_error:.3g})' for c in report.failures)


class TestSuites(unittest.TestCase):
    def test_names(self):
        self.assertEqual(
            sorted(SUITES),
            ['algebra', 'almostcx', 'conformal', 'quat8', 'transgression'])

    def test_small_runs_pass(self):
        for name in sorted(SUITES):
            with self.subTest(suite=name):
                report = run_suite(name, _verify(name))
                self.assertEqual(report.kind, 'verify')
                self.assertEqual(report.name, name)
                self.assertGreater(len(report.checks), 0)
                self.assertTrue(report.passed, _failed(report))
                self.assertEqual(report.environment['seed'], 11)
                self.assertEqual(report.environment['draws'], 3)
                unreferenced = [c.name for c in report.checks
                                if not c.paper_ref]
                self.assertEqual(unreferenced, [])

    def test_seeded(self):
        first = run_suite('algebra', _verify('algebra'))
        second = run_suite('algebra', _verify('algebra'))
        self.assertEqual([c.computed for c in first.checks],
                         [c.computed for c in second.checks])

    def test_references(self):
        report = run_suite('algebra', _verify('algebra'))
        refs = {c.name: c.paper_ref for c in report.checks}
        self.assertEqual(refs['ricci(*R*)'], 'Prop 2.1')
        self.assertEqual(refs['k_isot(Id)'], 'Eq (2.1)')
        self.assertEqual(refs['euler shift'], 'Prop 4.3')
        self.assertEqual(refs['euler norms'], 'Remark 3')
        self.assertEqual(refs['zero euler'], 'Cor 4.1')
        report = run_suite('quat8', _verify('quat8'))
        self.assertEqual(
            {c.name: c.paper_ref for c in report.checks}['A symmetric'],
            'Lemma 11.1')

    def test_streams_do_not_depend_on_draw_order(self):
        first = _Suite('a', _verify('algebra'), draws=3)
        second = _Suite('a', _verify('algebra'), draws=3)
        second.stream('other').random(1000)
        [g.random(7) for g in second.streams('more', 4)]
        np.testing.assert_array_equal(first.stream('phi').random(5),
                                      second.stream('phi').random(5))
        short = [g.random() for g in first.streams('frames', 3)]
        long = [g.random() for g in second.streams('frames', 8)]
        self.assertEqual(short, long[:3])
        self.assertEqual(len(set(long)), 8)
        self.assertFalse(np.array_equal(first.stream('phi').random(5),
                                        first.stream('xi').random(5)))
        reseeded = _Suite(
            'a', ExperimentConfig(kind='verify', seed=12, values={'draws': 3}),
            draws=3)
        self.assertFalse(np.array_equal(first.stream('phi').random(5),
                                        reseeded.stream('phi').random(5)))

    def test_tolerance_override(self):
        report = run_suite('quat8', _verify('quat8', abs=0.5))
        self.assertTrue(all(c.tolerance == 0.5 for c in report.checks))

    def test_unknown_suite(self):
        with self.assertRaisesRegex(WorkbenchError, 'Unknown suite "nope"') as cm:
            run_suite('nope')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.UnknownName)


class TestExperiments(unittest.TestCase):
    def _passes(self, cfg):
        report = run_experiment(cfg)
        self.assertEqual(report.kind, 'run')
        self.assertTrue(report.passed, _failed(report))
        return report

    def test_pole_residue(self):
        report = self._passes(_run('pole-residue', k=1, levels=3))
        self.assertEqual(len(report.checks), 2)
        self.assertAlmostEqual(report.checks[0].computed, -2.0, places=8)
        self.assertEqual([c.paper_ref for c in report.checks],
                         ['Eq (10.4)', 'Eq (10.4)'])
        sweep = report.sweeps['residue k=1']
        self.assertEqual(sweep.radii, [0.4, 0.2, 0.1])
        self.assertEqual(len(sweep.values), 3)
        np.testing.assert_allclose(sweep.values, -2.0, atol=1e-8)
        self.assertEqual(sweep.extrapolated, report.checks[1].computed)
        self.assertGreaterEqual(sweep.error, 0.0)
        doc = json.loads(report.to_json())
        self.assertEqual(doc['sweeps']['residue k=1']['radii'],
                         [0.4, 0.2, 0.1])
        self.assertEqual(len(doc['sweeps']['residue k=1']['values']), 3)
        self.assertIn('error', doc['sweeps']['residue k=1'])

    def test_tube_residue(self):
        report = self._passes(_run('tube-residue', levels=3))
        sweep = report.sweeps['tube residue']
        self.assertEqual(len(sweep.radii), 3)
        np.testing.assert_allclose(sweep.values, 1.0, atol=1e-9)
        self.assertIn('tube residue', json.loads(report.to_json())['sweeps'])

    def test_workers_do_not_change_results(self):
        for name in ('pole-residue', 'stokes-box'):
            with self.subTest(experiment=name):
                serial = run_experiment(_run(name, k=1, levels=3))
                threaded = run_experiment(
                    _run(name, k=1, levels=3, workers=3))
                self.assertEqual([c.computed for c in serial.checks],
                                 [c.computed for c in threaded.checks])
                self.assertEqual(serial.sweeps, threaded.sweeps)

    def test_stokes_box(self):
        self._passes(_run('stokes-box'))

    def test_euler_s2(self):
        self._passes(_run('euler-s2'))

    def test_pointwise(self):
        self._passes(_run('prop11-pointwise', points=3))
        self._passes(_run('thm11-pointwise', points=2))
        self._passes(_run('chern-pointwise', points=2))

    def test_prop71_pointwise(self):
        cfg = ExperimentConfig.from_conf(
            'run::name=prop71-pointwise;points=2;chart=flat4;S=random(4, 0.3);')
        self._passes(cfg)

    def test_wrong_dimension(self):
        with self.assertRaisesRegex(WorkbenchError, 'need dimension 4') as cm:
            run_experiment(_run('prop11-pointwise', chart='flat2', points=1))
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_unknown_preset(self):
        cfg = ExperimentConfig.from_conf(
            'run::name=prop71-pointwise;points=1;S=twisted;')
        with self.assertRaises(WorkbenchError) as cm:
            run_experiment(cfg)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.UnknownName)

    def test_unknown_experiment(self):
        with self.assertRaises(WorkbenchError) as cm:
            run_experiment(_run('euler-s6'))
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.UnknownName)
        self.assertIn('euler-s4', EXPERIMENTS)

    def test_config_chart(self):
        chart = config_chart(_run('x', chart='flat4', box=2.0), 'stereoS4')
        np.testing.assert_array_equal(chart.box, [[-2.0, 2.0]] * 4)
        cfg = ExperimentConfig.from_text(
            '[chart]\nchart = userExpr\ndim = 2\nlambda2 = 4/(1 + r2)^2\n')
        chart = config_chart(cfg, 'flat4')
        self.assertEqual(chart.dim, 2)
        self.assertEqual(config_chart(_run('x'), 'random_poly').name,
                         'random_poly')


if __name__ == '__main__':
    unittest.main()
