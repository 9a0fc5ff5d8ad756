"""
Experiment configuration.

An :class:`ExperimentConfig` comes from one of three sources:

* a conf string, ``<kind>::key=value;key=value;``, where ``kind`` is
  ``verify`` or ``run`` (:meth:`ExperimentConfig.from_conf`);
* the ``CURVLAB_CONF`` environment variable holding such a string
  (:meth:`ExperimentConfig.from_env`);
* a sectioned file of ``key = value`` lines under ``[run]``, ``[chart]``,
  ``[fields]``, ``[quadrature]``, ``[tolerance]`` and ``[output]``
  headers (:meth:`ExperimentConfig.from_file`).

Keys are case-sensitive and unknown keys are rejected. A semicolon inside
a conf string value is written ``;;``.
"""

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Mapping, Optional, Tuple

from .errors import ParseError, WorkbenchError, WorkbenchErrorCode
from .exprfield import MAX_VARS, parse

__all__ = ['ExperimentConfig', 'Preset', 'parse_preset', 'DEFAULT_SEED',
           'ENV_VAR', 'SECTIONS']

_LOG = logging.getLogger(__name__)

DEFAULT_SEED = 20240117
ENV_VAR = 'CURVLAB_CONF'
KINDS = ('verify', 'run')


class _BadValue(Exception):
    pass


@dataclass(frozen=True)
class Preset:
    """A catalog name with positional arguments, ``name(arg, arg)``."""
    name: str
    args: Tuple[object, ...] = ()

    def __str__(self):
        if not self.args:
            return self.name
        return f'{self.name}({", ".join(str(a) for a in self.args)})'


_PRESET_RE = re.compile(r'\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$')
_INT_RE = re.compile(r'[+-]?\d+$')
_FLOAT_RE = re.compile(r'[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$')


def _preset_arg(text: str):
    text = text.strip()
    if _INT_RE.match(text):
        return int(text)
    if _FLOAT_RE.match(text):
        return float(text)
    parse(text, MAX_VARS)
    return text


def parse_preset(text: str) -> Preset:
    """
    Parse ``name`` or ``name(arg, ...)``. Integer and float literals
    become numbers, anything else must be a valid expression and stays a
    string.
    """
    m = _PRESET_RE.match(text)
    if m is None:
        raise ParseError(
            f'Bad preset "{text}": expected name or name(arg, ...).', 0,
            ('name',))
    name, args = m.group(1), m.group(2)
    if args is None:
        return Preset(name)
    if not args.strip():
        return Preset(name)
    parts = args.split(',')
    out = []
    offset = m.start(2)
    for part in parts:
        try:
            out.append(_preset_arg(part))
        except ParseError as pe:
            raise ParseError(
                f'Bad preset "{text}": {pe}', offset + pe.offset,
                pe.expected, code=pe.code) from pe
        offset += len(part) + 1
    return Preset(name, tuple(out))


def _text(raw: str) -> str:
    if not raw:
        raise _BadValue('must not be empty')
    return raw


def _integer(raw: str) -> int:
    if not _INT_RE.match(raw):
        raise _BadValue('must be an integer')
    return int(raw)


def _positive_int(raw: str) -> int:
    value = _integer(raw)
    if value < 1:
        raise _BadValue('must be a positive integer')
    return value


def _positive_float(raw: str) -> float:
    if not _FLOAT_RE.match(raw) and not _INT_RE.match(raw):
        raise _BadValue('must be a number')
    value = float(raw)
    if not value > 0.0:
        raise _BadValue('must be positive')
    return value


def _choice(*options: str) -> Callable[[str], str]:
    def check(raw: str) -> str:
        if raw not in options:
            raise _BadValue(f'must be one of {", ".join(options)}')
        return raw
    return check


def _dimension(raw: str) -> int:
    value = _integer(raw)
    if value not in (2, 4):
        raise _BadValue('must be 2 or 4')
    return value


def _expression(raw: str) -> str:
    parse(raw, MAX_VARS)
    return raw


def _preset(raw: str) -> Preset:
    return parse_preset(raw)


def _points(raw: str) -> Tuple[Tuple[Tuple[float, ...], int], ...]:
    """``x,y@k`` entries separated by whitespace."""
    out = []
    for item in raw.split():
        coords, sep, order = item.partition('@')
        if not sep:
            raise _BadValue(f'entry "{item}" lacks "@order"')
        try:
            point = tuple(float(c) for c in coords.split(','))
        except ValueError:
            raise _BadValue(f'entry "{item}" has a bad coordinate') from None
        if not _INT_RE.match(order) or int(order) < 1:
            raise _BadValue(f'entry "{item}" has a bad order')
        out.append((point, int(order)))
    return tuple(out)


_METRIC_KEYS = ('lambda2',) + tuple(
    f'g{i}{j}' for i in range(1, 5) for j in range(i, 5))

SECTIONS: Mapping[str, Mapping[str, Callable[[str], object]]] = {
    'run': {
        'kind': _choice(*KINDS),
        'name': _text,
        'seed': _integer,
        'draws': _positive_int,
        'workers': _positive_int,
    },
    'chart': {
        'chart': _text,
        'dim': _dimension,
        'box': _positive_float,
        **{key: _expression for key in _METRIC_KEYS},
    },
    'fields': {
        'f': _expression,
        'h': _expression,
        'psi': _expression,
        'costheta': _expression,
        'k': _positive_int,
        'S': _preset,
        'phi': _preset,
        'J0': _preset,
        'J1': _preset,
        'zeros': _points,
        'infinities': _points,
    },
    'quadrature': {
        'nodes': _positive_int,
        'radial': _positive_int,
        'angular': _positive_int,
        'levels': _positive_int,
        'eps0': _positive_float,
        'points': _positive_int,
    },
    'tolerance': {
        'abs': _positive_float,
    },
    'output': {
        'format': _choice('json', 'csv'),
        'out': _text,
    },
}

_SECTION_OF = {key: section for section, keys in SECTIONS.items()
               for key in keys}


def _valid_keys() -> str:
    return ', '.join(sorted(_SECTION_OF))


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A validated configuration. ``values`` holds the parsed value of every
    key that was set; :meth:`get` falls back to a default.
    """
    kind: str = 'run'
    name: str = ''
    seed: int = DEFAULT_SEED
    values: Mapping[str, object] = field(default_factory=dict)

    def get(self, key: str, default=None):
        if key not in _SECTION_OF:
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Unknown config key "{key}": valid keys are '
                f'{_valid_keys()}.')
        return self.values.get(key, default)

    @property
    def tolerance(self) -> Optional[float]:
        return self.values.get('abs')

    @property
    def workers(self) -> int:
        """Threads for chunked per-point work; results do not depend on it."""
        return self.values.get('workers', 1)

    @property
    def metric(self) -> Dict[str, str]:
        return {k: self.values[k] for k in _METRIC_KEYS if k in self.values}

    def section(self, name: str) -> Dict[str, object]:
        return {k: v for k, v in self.values.items()
                if _SECTION_OF[k] == name}

    def with_values(self, **raw: str) -> 'ExperimentConfig':
        """A copy with ``raw`` string values parsed and applied."""
        return _build(self, raw.items())

    @classmethod
    def from_conf(cls, conf: str, **overrides: str) -> 'ExperimentConfig':
        """Parse ``<kind>::key=value;...;`` and apply ``overrides``."""
        kind, sep, rest = conf.partition('::')
        if not sep:
            raise ParseError(
                f'Bad conf string "{conf}": missing "::" after the kind.',
                len(conf), ('::',))
        if kind not in KINDS:
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Bad conf string kind "{kind}": must be one of '
                f'{", ".join(KINDS)}.')
        triples = list(_split_pairs(rest, len(kind) + 2, conf))
        offsets = {key: at for key, _, at in triples}
        cfg = _build(cls(kind=kind), [(k, v) for k, v, _ in triples],
                     lambda key: (None, offsets.get(key)))
        return cfg.with_values(**overrides) if overrides else cfg

    @classmethod
    def from_env(cls, **overrides: str) -> 'ExperimentConfig':
        conf = os.environ.get(ENV_VAR)
        if conf is None:
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Environment variable {ENV_VAR} is not set.')
        return cls.from_conf(conf, **overrides)

    @classmethod
    def from_file(cls, path, **overrides: str) -> 'ExperimentConfig':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except OSError as oe:
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Could not read config file "{path}": {oe}.') from oe
        cfg = cls.from_text(text, str(path))
        return cfg.with_values(**overrides) if overrides else cfg

    @classmethod
    def from_text(cls, text: str, source: str = '<string>'
                  ) -> 'ExperimentConfig':
        """Parse the sectioned file format."""
        section = None
        items = []
        lines = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith('#'):
                continue
            column = len(line) - len(line.lstrip()) + 1
            if stripped.startswith('['):
                if not stripped.endswith(']'):
                    raise ParseError(
                        f'Bad section header in {source} at line {lineno}, '
                        f'column {column}: missing "]".',
                        column + len(stripped), (']',), line=lineno)
                section = stripped[1:-1].strip()
                if section not in SECTIONS:
                    raise ParseError(
                        f'Bad section "[{section}]" in {source} at line '
                        f'{lineno}, column {column}: expected one of '
                        f'{", ".join(SECTIONS)}.',
                        column, tuple(SECTIONS), line=lineno,
                        code=WorkbenchErrorCode.ConfigError)
                continue
            key, sep, value = stripped.partition('=')
            if not sep:
                raise ParseError(
                    f'Bad line in {source} at line {lineno}, column '
                    f'{column}: expected "key = value".',
                    column + len(stripped), ('=',), line=lineno)
            if section is None:
                raise ParseError(
                    f'Bad line in {source} at line {lineno}, column '
                    f'{column}: key before any section header.',
                    column, ('[section]',), line=lineno)
            key = key.strip()
            if key not in SECTIONS[section]:
                raise ParseError(
                    f'Unknown key "{key}" in [{section}] of {source} at '
                    f'line {lineno}, column {column}: valid keys are '
                    f'{", ".join(SECTIONS[section])}.',
                    column, tuple(SECTIONS[section]), line=lineno,
                    code=WorkbenchErrorCode.ConfigError)
            value_col = column + line.lstrip().index('=') + 1
            value_col += len(value) - len(value.lstrip())
            items.append((key, value.strip()))
            lines[key] = (lineno, value_col)

        return _build(cls(), items, lambda key: lines.get(key, (None, None)))


def _split_pairs(rest: str, pos: int, conf: str):
    """Yield ``(key, value, offset)`` from ``k=v;k=v;`` with ``;;`` escapes."""
    i = 0
    while i < len(rest):
        eq = rest.find('=', i)
        if eq < 0:
            raise ParseError(
                f'Bad conf string "{conf}": missing "=" at position '
                f'{pos + i}.', pos + i, ('=',))
        key = rest[i:eq]
        j = eq + 1
        value = []
        while True:
            if j >= len(rest):
                raise ParseError(
                    f'Bad conf string "{conf}": missing trailing ";" at '
                    f'position {pos + j}.', pos + j, (';',))
            if rest[j] == ';':
                if j + 1 < len(rest) and rest[j + 1] == ';':
                    value.append(';')
                    j += 2
                    continue
                break
            value.append(rest[j])
            j += 1
        yield key, ''.join(value), pos + eq + 1
        i = j + 1


Where = Callable[[str], Tuple[Optional[int], Optional[int]]]


def _no_position(key: str):
    return None, None


def _describe(key: str, where: Where) -> str:
    line, col = where(key)
    if line is not None:
        return f'"{key}" at line {line}, column {col}'
    if col is not None:
        return f'"{key}" at position {col}'
    return f'"{key}"'


def _build(base: ExperimentConfig, items, where: Where = _no_position
           ) -> ExperimentConfig:
    values = dict(base.values)
    for key, raw in items:
        if key not in _SECTION_OF:
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Unknown config key {_describe(key, where)}: valid keys are '
                f'{_valid_keys()}.')
        raw = str(raw).strip()
        checker = SECTIONS[_SECTION_OF[key]][key]
        try:
            values[key] = checker(raw)
        except _BadValue as bv:
            raise WorkbenchError(
                WorkbenchErrorCode.ConfigError,
                f'Bad value "{raw}" for {_describe(key, where)}: {bv}.'
            ) from None
        except ParseError as pe:
            line, col = where(key)
            raise ParseError(
                f'Bad value for {_describe(key, where)}: {pe}',
                pe.offset + (col or 0), pe.expected, line=line,
                code=pe.code) from pe
    cfg = replace(
        base,
        kind=values.get('kind', base.kind),
        name=values.get('name', base.name),
        seed=values.get('seed', base.seed),
        values=values)
    _LOG.debug('config %s::%s with %s', cfg.kind, cfg.name, sorted(values))
    return cfg
