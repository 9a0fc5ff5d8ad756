#!/usr/bin/env python3

import sys
sys.dont_write_bytecode = True
import os
import pathlib
import tempfile
import unittest
from unittest import mock

import patch_path
from curvlab.conf import (
    DEFAULT_SEED, ENV_VAR, ExperimentConfig, Preset, parse_preset)
from curvlab.errors import ParseError, WorkbenchError, WorkbenchErrorCode


SAMPLE = '''\
# conformal run on the round sphere
[run]
kind = verify
name = conformal
seed = 7

[chart]
chart = stereo
box = 1.5

[fields]
f = 0.3*x1*x2 - 0.2*x3
S = random(3, 0.5)
zeros = 0,0@2 1,0.5@1

[quadrature]
nodes = 12

[tolerance]
abs = 1e-8
'''


class TestConfString(unittest.TestCase):
    def test_basic(self):
        cfg = ExperimentConfig.from_conf('verify::name=algebra;draws=5;')
        self.assertEqual(cfg.kind, 'verify')
        self.assertEqual(cfg.name, 'algebra')
        self.assertEqual(cfg.seed, DEFAULT_SEED)
        self.assertEqual(cfg.get('draws'), 5)
        self.assertIsNone(cfg.get('nodes'))
        self.assertEqual(cfg.get('nodes', 16), 16)

    def test_escaped_semicolon(self):
        cfg = ExperimentConfig.from_conf('run::name=a;;b;seed=-3;')
        self.assertEqual(cfg.name, 'a;b')
        self.assertEqual(cfg.seed, -3)

    def test_overrides(self):
        cfg = ExperimentConfig.from_conf('run::name=x;', draws='9', dim='2')
        self.assertEqual(cfg.get('draws'), 9)
        self.assertEqual(cfg.get('dim'), 2)
        self.assertEqual(cfg.with_values(name='y').name, 'y')

    def test_missing_kind_separator(self):
        with self.assertRaisesRegex(ParseError, 'missing "::"') as cm:
            ExperimentConfig.from_conf('name=x;')
        self.assertEqual(cm.exception.offset, 7)
        self.assertEqual(cm.exception.expected, ('::',))

    def test_bad_kind(self):
        with self.assertRaises(WorkbenchError) as cm:
            ExperimentConfig.from_conf('check::name=x;')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_syntax_errors(self):
        with self.assertRaisesRegex(ParseError, 'missing trailing ";"') as cm:
            ExperimentConfig.from_conf('run::name=x')
        self.assertEqual(cm.exception.offset, 11)
        with self.assertRaisesRegex(ParseError, 'missing "="') as cm:
            ExperimentConfig.from_conf('run::draws;')
        self.assertEqual(cm.exception.offset, 5)

    def test_unknown_key(self):
        with self.assertRaisesRegex(
                WorkbenchError,
                'Unknown config key "bogus" at position 11') as cm:
            ExperimentConfig.from_conf('run::bogus=1;')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)
        cfg = ExperimentConfig.from_conf('run::name=x;')
        with self.assertRaises(WorkbenchError) as cm:
            cfg.get('bogus')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_workers(self):
        self.assertEqual(ExperimentConfig.from_conf('run::name=a;').workers, 1)
        cfg = ExperimentConfig.from_conf('run::name=a;workers=4;')
        self.assertEqual(cfg.workers, 4)
        with self.assertRaisesRegex(WorkbenchError, 'positive integer'):
            ExperimentConfig.from_conf('run::workers=0;')

    def test_bad_values(self):
        with self.assertRaisesRegex(WorkbenchError, 'positive integer') as cm:
            ExperimentConfig.from_conf('run::draws=0;')
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)
        with self.assertRaisesRegex(WorkbenchError, 'must be 2 or 4'):
            ExperimentConfig.from_conf('run::dim=3;')
        with self.assertRaisesRegex(WorkbenchError, 'must be one of json, csv'):
            ExperimentConfig.from_conf('run::format=xml;')
        with self.assertRaisesRegex(WorkbenchError, 'lacks "@order"'):
            ExperimentConfig.from_conf('run::zeros=0,0;')

    def test_bad_expression_offset(self):
        with self.assertRaises(ParseError) as cm:
            ExperimentConfig.from_conf('run::f=x1 +;')
        self.assertEqual(cm.exception.offset, 11)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ParseError)

    def test_env(self):
        with mock.patch.dict(os.environ, {ENV_VAR: 'run::name=env;'}):
            self.assertEqual(ExperimentConfig.from_env().name, 'env')
        with mock.patch.dict(os.environ, {}, clear=True):
            with self.assertRaisesRegex(WorkbenchError, 'is not set'):
                ExperimentConfig.from_env()


class TestConfFile(unittest.TestCase):
    def test_sections(self):
        cfg = ExperimentConfig.from_text(SAMPLE)
        self.assertEqual(cfg.kind, 'verify')
        self.assertEqual(cfg.name, 'conformal')
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.get('box'), 1.5)
        self.assertEqual(cfg.get('S'), Preset('random', (3, 0.5)))
        self.assertEqual(
            cfg.get('zeros'), (((0.0, 0.0), 2), ((1.0, 0.5), 1)))
        self.assertEqual(cfg.tolerance, 1e-8)
        self.assertEqual(cfg.section('quadrature'), {'nodes': 12})
        self.assertEqual(cfg.metric, {})

    def test_metric_keys(self):
        cfg = ExperimentConfig.from_text(
            '[chart]\ng11 = 1\ng22 = 1 + x1^2\nlambda2 = 1\n')
        self.assertEqual(cfg.metric,
                         {'lambda2': '1', 'g11': '1', 'g22': '1 + x1^2'})

    def test_header_errors(self):
        with self.assertRaisesRegex(ParseError, 'missing "]"') as cm:
            ExperimentConfig.from_text('[run\n')
        self.assertEqual(cm.exception.line, 1)
        with self.assertRaises(ParseError) as cm:
            ExperimentConfig.from_text('\n[plots]\n')
        self.assertEqual(cm.exception.line, 2)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_line_errors(self):
        with self.assertRaisesRegex(ParseError, 'key before any section'):
            ExperimentConfig.from_text('name = x\n')
        with self.assertRaisesRegex(ParseError, 'expected "key = value"'):
            ExperimentConfig.from_text('[run]\nname\n')
        with self.assertRaisesRegex(ParseError, 'Unknown key "f"') as cm:
            ExperimentConfig.from_text('[run]\nf = x1\n')
        self.assertEqual(cm.exception.line, 2)
        self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)

    def test_value_position(self):
        with self.assertRaises(ParseError) as cm:
            ExperimentConfig.from_text('[fields]\nf = x1 +\n')
        self.assertEqual(cm.exception.line, 2)
        self.assertEqual(cm.exception.offset, 9)
        with self.assertRaisesRegex(
                WorkbenchError, '"draws" at line 3, column 9'):
            ExperimentConfig.from_text('[run]\nname = x\ndraws = -1\n')

    def test_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = pathlib.Path(tmp) / 'run.conf'
            path.write_text(SAMPLE, encoding='utf-8')
            cfg = ExperimentConfig.from_file(path, draws='3')
            self.assertEqual(cfg.name, 'conformal')
            self.assertEqual(cfg.get('draws'), 3)
            with self.assertRaisesRegex(WorkbenchError, 'Could not read') as cm:
                ExperimentConfig.from_file(pathlib.Path(tmp) / 'missing.conf')
            self.assertEqual(cm.exception.code, WorkbenchErrorCode.ConfigError)


class TestPresets(unittest.TestCase):
    def test_parse(self):
        self.assertEqual(parse_preset('zero'), Preset('zero'))
        self.assertEqual(parse_preset('zero()'), Preset('zero'))
        p = parse_preset('random(3, 0.5)')
        self.assertEqual(p.args, (3, 0.5))
        self.assertEqual(str(p), 'random(3, 0.5)')
        self.assertEqual(parse_preset('conformal(x1*x2)').args, ('x1*x2',))

    def test_errors(self):
        with self.assertRaisesRegex(ParseError, 'expected name'):
            parse_preset('(3)')
        with self.assertRaises(ParseError) as cm:
            parse_preset('f(x1 +)')
        self.assertEqual(cm.exception.offset, 6)


if __name__ == '__main__':
    unittest.main()
