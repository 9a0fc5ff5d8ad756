"""
Check records and reports.

A :class:`Report` collects :class:`Check` rows, each comparing a computed
number against its expected value under an absolute tolerance, and the
:class:`Sweep` tables behind extrapolated checks. Reports serialize to
JSON (standard library) and CSV (``pandas``, from the ``dataframe``
extra). The field order of a row is fixed by :data:`FIELDS`.
"""

from __future__ import annotations

import json
import logging
import math
import platform
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import WorkbenchError, WorkbenchErrorCode

__all__ = ['FIELDS', 'Check', 'Sweep', 'Report', 'environment', 'emit']

_LOG = logging.getLogger(__name__)

FIELDS = ('name', 'paper_ref', 'identity', 'computed', 'expected',
          'abs_error', 'tolerance', 'pass')


def _number(value: float):
    """JSON-safe float: non-finite values become strings."""
    value = float(value)
    if math.isfinite(value):
        return value
    return repr(value)


@dataclass(frozen=True)
class Check:
    """
    ``pass`` holds exactly when ``abs_error <= tolerance``.

    ``paper_ref`` names the statement being checked (``'Prop 2.1'``,
    ``'Eq (10.4)'``); ``identity`` spells it out.
    """
    name: str
    paper_ref: str
    identity: str
    computed: float
    expected: float
    tolerance: float

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Bad tolerance {self.tolerance!r} for check "{self.name}": '
                'must be positive.')
        object.__setattr__(self, 'computed', float(self.computed))
        object.__setattr__(self, 'expected', float(self.expected))
        object.__setattr__(self, 'tolerance', float(self.tolerance))

    @property
    def abs_error(self) -> float:
        return abs(self.computed - self.expected)

    @property
    def passed(self) -> bool:
        return bool(self.abs_error <= self.tolerance)

    def record(self) -> Dict[str, object]:
        return {
            'name': self.name,
            'paper_ref': self.paper_ref,
            'identity': self.identity,
            'computed': _number(self.computed),
            'expected': _number(self.expected),
            'abs_error': _number(self.abs_error),
            'tolerance': _number(self.tolerance),
            'pass': self.passed,
        }


@dataclass(frozen=True)
class Sweep:
    """Values of a shell quantity over shrinking radii and their limit."""
    radii: List[float]
    values: List[float]
    extrapolated: float
    error: float

    def record(self) -> Dict[str, object]:
        return {
            'radii': [_number(r) for r in self.radii],
            'values': [_number(v) for v in self.values],
            'extrapolated': _number(self.extrapolated),
            'error': _number(self.error),
        }


def environment(seed: Optional[int] = None, **counts) -> Dict[str, object]:
    """Run metadata: seed, node counts and library versions."""
    env = {'seed': seed}
    env.update(sorted(counts.items()))
    env['curvlab'] = __version__
    env['python'] = platform.python_version()
    env['numpy'] = np.__version__
    return env


@dataclass
class Report:
    kind: str
    name: str
    checks: List[Check] = field(default_factory=list)
    environment: Dict[str, object] = field(default_factory=dict)
    sweeps: Dict[str, Sweep] = field(default_factory=dict)

    def add(self, name: str, paper_ref: str, identity: str, computed,
            expected, tolerance: float) -> Check:
        check = Check(name, paper_ref, identity, computed, expected, tolerance)
        self.checks.append(check)
        _LOG.debug('%s %s: computed %.17g, expected %.17g, error %.3g (%s)',
                   self.name, name, check.computed, check.expected,
                   check.abs_error, 'pass' if check.passed else 'FAIL')
        return check

    def add_sweep(self, name: str, radii, values, extrapolated: float,
                  error: float) -> Sweep:
        """Record the per-radius values behind an extrapolated check."""
        if name in self.sweeps:
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Bad sweep "{name}": already recorded in "{self.name}".')
        sweep = Sweep([float(r) for r in radii], [float(v) for v in values],
                      float(extrapolated), float(error))
        self.sweeps[name] = sweep
        _LOG.debug('%s sweep %s: %d radii, limit %.17g +- %.3g', self.name,
                   name, len(sweep.radii), sweep.extrapolated, sweep.error)
        return sweep

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> Dict[str, object]:
        failed = len(self.failures)
        return {'checks': len(self.checks),
                'passed': len(self.checks) - failed,
                'failed': failed}

    def records(self) -> List[Dict[str, object]]:
        return [c.record() for c in self.checks]

    def to_json(self) -> str:
        doc = {
            'kind': self.kind,
            'name': self.name,
            'summary': self.summary(),
            'environment': self.environment,
            'checks': self.records(),
        }
        if self.sweeps:
            doc['sweeps'] = {k: s.record() for k, s in self.sweeps.items()}
        return json.dumps(doc, indent=2, allow_nan=False) + '\n'

    @classmethod
    def from_json(cls, text: str) -> 'Report':
        try:
            doc = json.loads(text)
            checks = [
                Check(r['name'], r['paper_ref'], r['identity'],
                      float(r['computed']), float(r['expected']),
                      float(r['tolerance']))
                for r in doc['checks']]
            sweeps = {
                k: Sweep([float(r) for r in s['radii']],
                         [float(v) for v in s['values']],
                         float(s['extrapolated']), float(s['error']))
                for k, s in doc.get('sweeps', {}).items()}
            return cls(doc['kind'], doc['name'], checks,
                       dict(doc['environment']), sweeps)
        except (ValueError, KeyError, TypeError) as e:
            raise WorkbenchError(
                WorkbenchErrorCode.ParseError,
                f'Bad report JSON: {e}.') from e

    def to_csv(self) -> str:
        """
        One row per check in :data:`FIELDS` order; needs pandas. Sweeps
        are only part of the JSON form.
        """
        try:
            import pandas as pd
        except ImportError as ie:
            raise WorkbenchError(
                WorkbenchErrorCode.OutputError,
                'CSV reports need pandas: pip install "curvlab[dataframe]".'
            ) from ie
        rows = [(c.name, c.paper_ref, c.identity, c.computed, c.expected,
                 c.abs_error, c.tolerance, c.passed) for c in self.checks]
        df = pd.DataFrame(rows, columns=list(FIELDS))
        return df.to_csv(index=False, float_format='%.17g')


def emit(report: Report, fmt: str = 'json', out=None) -> str:
    """
    Serialize ``report`` as ``fmt`` (``'json'`` or ``'csv'``). Writes to
    the path ``out`` when given and returns the text either way.
    """
    if fmt == 'json':
        text = report.to_json()
    elif fmt == 'csv':
        text = report.to_csv()
    else:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad report format "{fmt}": must be "json" or "csv".')
    if out is not None and str(out) != '-':
        try:
            with open(out, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
        except OSError as oe:
            raise WorkbenchError(
                WorkbenchErrorCode.OutputError,
                f'Could not write report to "{out}": {oe}.') from oe
        _LOG.info('wrote %s report to %s', fmt, out)
    return text
