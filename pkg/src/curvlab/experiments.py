"""
Named experiments: Gauss-Bonnet integrals, residue sweeps and pointwise
identity checks on a configured chart.

Every experiment reads its inputs from an :class:`ExperimentConfig` and
returns a ``run`` :class:`Report`. Fields and presets not given in the
configuration fall back to the defaults listed in the experiment's
docstring.
"""

from __future__ import annotations

import logging
from typing import Callable, Mapping

import numpy as np

from .almost_cx import (
    ACS_PRESETS, chern_difference_residual, chern_product_density)
from .chartgeom import (
    MetricChart, ball_rule, disk_rule, integrate, make_chart, map_chunks,
    prop11_residual, riemann_frame, stereographic_chart)
from .conf import ExperimentConfig, Preset
from .curvops import euler_form
from .errors import WorkbenchError, WorkbenchErrorCode
from .exprfield import Num, parse
from .report import Report
from .residues import (
    PoleSpec, annulus_stokes, pole_residue_4d, pole_sweep, surface_residue_2d,
    tube_residue)
from .suites import _Suite
from .transgression import (
    BUNDLE_PRESETS, DELTA_PRESETS, bundle_map_residual, t_integral_defect,
    verify_prop71)

__all__ = ['EXPERIMENTS', 'run_experiment', 'config_chart']

_LOG = logging.getLogger(__name__)

CHUNK = 2048
_H = '1 + 0.2*x1^2 + 0.1*x3^2'


def config_chart(cfg: ExperimentConfig, default: str,
                 **defaults) -> MetricChart:
    """The chart named by ``chart`` (or ``default``) with ``box`` as its
    half-width and, for ``userExpr``, the metric entries of the config."""
    name = cfg.get('chart', default)
    params = dict(defaults)
    if cfg.get('box') is not None:
        params['half'] = cfg.get('box')
    if name == 'userExpr':
        params['metric'] = cfg.metric
        params['dim'] = cfg.get('dim', 4)
    elif name == 'random_poly':
        params.setdefault('seed', cfg.seed)
    return make_chart(name, **params)


def _from_preset(catalog: Mapping[str, Callable], what: str,
                 preset: Preset):
    try:
        factory = catalog[preset.name]
    except KeyError:
        raise WorkbenchError(
            WorkbenchErrorCode.UnknownName,
            f'Unknown {what} "{preset.name}": valid names are '
            f'{", ".join(sorted(catalog))}.') from None
    try:
        return factory(*preset.args)
    except TypeError as te:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad arguments for {what} "{preset}": {te}.') from te


def _chunked_euler(chart: MetricChart, workers: int = 1):
    def integrand(nodes):
        return map_chunks(
            lambda block: euler_form(riemann_frame(chart, block)), nodes,
            CHUNK, workers)
    return integrand


def _require_dim(chart: MetricChart, dim: int, experiment: str):
    if chart.dim != dim:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad chart "{chart.name}" for experiment "{experiment}": need '
            f'dimension {dim}.')


def euler_s4(cfg: ExperimentConfig) -> Report:
    """
    ``X(S^4) = 2`` from the Euler density of the round metric. The unit
    ball of the stereographic chart is one hemisphere; inversion maps it
    isometrically onto the other.
    """
    radial = cfg.get('radial', 16)
    angular = cfg.get('angular', 4)
    s = _Suite('euler-s4', cfg, 'run', radial=radial, angular=angular)
    chart = stereographic_chart(4, half=1.0)
    rule = ball_rule(1.0, radial, angular)
    volume = 2.0 * integrate(rule, 1.0, chart)
    euler = 2.0 * integrate(rule, _chunked_euler(chart, cfg.workers), chart)
    s.ref = 'Eq (10.1)'
    s.check('volume', 'Vol(S^4) = 8pi^2/3', volume, 8.0 * np.pi ** 2 / 3.0,
            1e-8)
    s.check('euler', 'int X(R) over S^4 = 2', euler, 2.0, 1e-6)
    return s.report


def euler_s2(cfg: ExperimentConfig) -> Report:
    """
    ``X(S^2) = 2`` twice: the Gauss curvature integral on the round
    stereographic chart, and the flat plane seen as the sphere with
    ``h = (1 + r2)^2/(4 r2^2)`` in the inverted coordinate, which has an
    infinity of order 4 at the origin.
    """
    radial = cfg.get('radial', 16)
    angular = cfg.get('angular', 64)
    nodes = cfg.get('nodes', 64)
    s = _Suite('euler-s2', cfg, 'run', radial=radial, angular=angular,
               nodes=nodes)
    chart = stereographic_chart(2, half=1.0)
    rule = disk_rule(1.0, radial, angular)
    s.ref = '§10.1'
    gauss = 2.0 * integrate(rule, lambda x: riemann_frame(chart, x), chart)
    s.check('curvature path', '1/2pi int K dA over S^2 = 2',
            gauss / (2.0 * np.pi), 2.0, 1e-4)
    h = parse('(1 + r2)^2/(4*r2^2)', 2)
    # the smooth factor adds 2 r^2 / (1 + r^2) on a shell of radius r
    residue = surface_residue_2d(h, infinities=[((0.0, 0.0), 4)],
                                 radius=1e-6, nodes=nodes)
    s.ref = 'Eq (10.2)'
    s.check('pole path', 'X(R^2) = X(S^2) - 1/2 (order of the infinity)',
            0.0 - residue, 2.0, 1e-8)
    return s.report


def _pole_spec(cfg: ExperimentConfig) -> PoleSpec:
    return PoleSpec(k=cfg.get('k', 2), psi=cfg.get('psi', '1'))


def pole_residue(cfg: ExperimentConfig) -> Report:
    """
    Shell residue of ``h = |x|^(2k) psi`` (defaults ``k = 2``,
    ``psi = 1``) against ``-1/2 k^2 (k + 3)``, at ``eps0`` and after
    extrapolation over ``levels`` dyadic radii.
    """
    spec = _pole_spec(cfg)
    eps0 = cfg.get('eps0', 0.4)
    levels = cfg.get('levels', 6)
    nodes = cfg.get('nodes', 16)
    s = _Suite('pole-residue', cfg, 'run', nodes=nodes, levels=levels)
    s.ref = 'Eq (10.4)'
    if spec.psi == Num(1.0):
        s.check(f'residue k={spec.k} at eps0',
                '-1/32pi^2 int P(grad log h)(nu) = -1/2 k^2 (k + 3)',
                pole_residue_4d(spec, eps0, nodes=nodes, workers=cfg.workers),
                spec.closed_form, 1e-8)
    sweep = pole_sweep(spec, eps0, levels, nodes=nodes, workers=cfg.workers)
    s.report.add_sweep(f'residue k={spec.k}', sweep.radii, sweep.values,
                       sweep.extrapolated, sweep.error)
    s.check(f'residue k={spec.k} extrapolated',
            'zero-radius limit of the shell residue = -1/2 k^2 (k + 3)',
            sweep.extrapolated, spec.closed_form, 1e-3)
    return s.report


def tube_residue_experiment(cfg: ExperimentConfig) -> Report:
    """
    Flat model ``1 + cos theta = (x3^2 + x4^2)^k`` over the unit patch
    (default ``k = 1``); the extrapolated tube flux equals ``k``.
    """
    k = cfg.get('k', 1)
    costheta = cfg.get('costheta', f'(x3^2 + x4^2)^{k} - 1')
    eps0 = cfg.get('eps0', 0.1)
    levels = cfg.get('levels', 6)
    s = _Suite('tube-residue', cfg, 'run', levels=levels)
    s.ref = 'Eq (1.5)'
    sweep = tube_residue(costheta, eps0=eps0, levels=levels)
    s.report.add_sweep('tube residue', sweep.radii, sweep.values,
                       sweep.extrapolated, sweep.error)
    s.check('tube residue', '1/4pi int d log(1 + cos theta)(nu) -> k',
            sweep.extrapolated, float(k), 1e-3)
    return s.report


def prop11_pointwise(cfg: ExperimentConfig) -> Report:
    """Conformal change of ``X`` and ``p1`` (default chart ``stereoS4``,
    ``f = 0.3*x1*x2 - 0.2*x3^2``)."""
    n = cfg.get('points', 100)
    s = _Suite('prop11-pointwise', cfg, 'run', points=n)
    s.ref = 'Prop 1.1'
    chart = config_chart(cfg, 'stereoS4')
    _require_dim(chart, 4, 'prop11-pointwise')
    f = cfg.get('f', '0.3*x1*x2 - 0.2*x3^2')
    res = prop11_residual(chart, f, s.points(chart, n))
    s.gap('euler', 'X(Q) = X(R) + div P(f)/32pi^2', res['euler'], 1e-6)
    s.gap('p1', 'p1(Q) = p1(R)', res['p1'], 1e-6)
    return s.report


def thm11_pointwise(cfg: ExperimentConfig) -> Report:
    """Conformal bundle map ``phi`` (default a rotation field times
    ``sqrt(h)``) into ``TM`` with the Levi-Civita connection."""
    n = cfg.get('points', 50)
    s = _Suite('thm11-pointwise', cfg, 'run', points=n)
    s.ref = 'Thm 1.1'
    chart = config_chart(cfg, 'flat4')
    _require_dim(chart, 4, 'thm11-pointwise')
    h = cfg.get('h', _H)
    preset = cfg.get('phi', Preset('rotation', (h, '0.3*x1 + 0.2*x4',
                                                '0.1*x2')))
    bundle = _from_preset(BUNDLE_PRESETS, 'bundle map', preset)
    res = bundle_map_residual(chart, bundle, s.points(chart, n))
    s.gap('euler', "X(R^E) = X(R) + div P(log h)/32pi^2 - dT'_euler",
          res['euler'], 1e-5)
    s.gap('p1', "p1(R^E) = p1(R) - dT'_p1", res['p1'], 1e-5)
    s.gap('consistency', "X(R^E) equals the Euler density of S' on h g",
          res['consistency'], 1e-5)
    return s.report


def prop71_pointwise(cfg: ExperimentConfig) -> Report:
    """Metric delta ``S`` (default ``random(seed)``) on the configured
    chart (default ``random_poly``)."""
    n = cfg.get('points', 20)
    s = _Suite('prop71-pointwise', cfg, 'run', points=n)
    s.ref = 'Prop 7.1'
    chart = config_chart(cfg, 'random_poly')
    _require_dim(chart, 4, 'prop71-pointwise')
    delta = _from_preset(DELTA_PRESETS, 'connection delta',
                         cfg.get('S', Preset('random', (cfg.seed,))))
    x = s.points(chart, n)
    res = verify_prop71(chart, delta, x)
    s.gap('euler', "X(R') - X(R) + dT_euler = 0", res['euler'], 1e-6)
    s.gap('p1', "p1(R') - p1(R) + dT_p1 = 0", res['p1'], 1e-6)
    s.check('t-integral', 'closed forms match the t-quadrature',
            t_integral_defect(chart, delta, x, cfg.get('nodes', 64)), 0.0,
            1e-12, ref='Remark 4')
    return s.report


def stokes_box(cfg: ExperimentConfig) -> Report:
    """
    ``int div P`` over the shell ``eps0 < r < 0.5`` in the flat box
    against the difference of the boundary fluxes, for
    ``h = |x|^(2k) psi``.
    """
    spec = _pole_spec(cfg)
    inner = cfg.get('eps0', 0.1)
    radial = cfg.get('radial', 16)
    angular = cfg.get('angular', 12)
    s = _Suite('stokes-box', cfg, 'run', radial=radial, angular=angular)
    s.ref = 'Prop 1.1'
    res = annulus_stokes(spec, inner, 0.5, radial=radial, angular=angular,
                         workers=cfg.workers)
    s.check('stokes', 'int div P = flux(outer) - flux(inner)',
            res['residual'], 0.0, 1e-6)
    return s.report


def chern_pointwise(cfg: ExperimentConfig) -> Report:
    """Two structures ``J0``, ``J1`` (defaults ``J1`` and a conjugated
    field) on the configured chart (default ``stereoS4``)."""
    n = cfg.get('points', 50)
    s = _Suite('chern-pointwise', cfg, 'run', points=n)
    s.ref = 'Prop 9.3'
    chart = config_chart(cfg, 'stereoS4', half=1.0)
    _require_dim(chart, 4, 'chern-pointwise')
    j0 = _from_preset(ACS_PRESETS, 'structure',
                      cfg.get('J0', Preset('J1')))
    j1 = _from_preset(ACS_PRESETS, 'structure',
                      cfg.get('J1', Preset('conjugated',
                                           ('0.4*x1 + 0.3*x2*x3',))))
    x = s.points(chart, n)
    s.gap('chern difference', '4pi (c1(J1) - c1(J0)) = d(T~ + G)',
          chern_difference_residual(chart, j0, j1, x), 1e-5)
    s.ref = 'Cor 9.1'
    s.gap('chern product',
          'c1(J1) ^ c1(J0) = 1/2 (c1(J1)^2 + c1(J0)^2) - dU ^ dU / 32pi^2',
          chern_product_density(chart, j0, j1, x)['residual'], 1e-6)
    return s.report


EXPERIMENTS: Mapping[str, Callable[[ExperimentConfig], Report]] = {
    'euler-s4': euler_s4,
    'euler-s2': euler_s2,
    'pole-residue': pole_residue,
    'tube-residue': tube_residue_experiment,
    'prop11-pointwise': prop11_pointwise,
    'thm11-pointwise': thm11_pointwise,
    'prop71-pointwise': prop71_pointwise,
    'stokes-box': stokes_box,
    'chern-pointwise': chern_pointwise,
}


def run_experiment(cfg: ExperimentConfig) -> Report:
    try:
        experiment = EXPERIMENTS[cfg.name]
    except KeyError:
        raise WorkbenchError(
            WorkbenchErrorCode.UnknownName,
            f'Unknown experiment "{cfg.name}": valid names are '
            f'{", ".join(sorted(EXPERIMENTS))}.') from None
    report = experiment(cfg)
    summary = report.summary()
    _LOG.info('experiment %s: %d checks, %d failed', cfg.name,
              summary['checks'], summary['failed'])
    return report
