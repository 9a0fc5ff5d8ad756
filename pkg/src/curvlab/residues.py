"""
Residues at the zeros and infinities of a conformal factor.

All shell integrals here are taken on flat charts: the area element and
the normal are Euclidean. Sweeps shrink the shell radius dyadically and
extrapolate to zero radius with a linear model in the radius.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .chartgeom import (
    THIRTY_TWO_PI2, MetricChart, QuadratureRule, _as_expr, _Conformal,
    ball_rule, box_rule, circle_rule, flat_chart, geometry, map_chunks,
    sphere3_rule)
from .errors import WorkbenchError, WorkbenchErrorCode
from .exprfield import Expr, Num, Var, coordinate_jets, eval_value, log

__all__ = [
    'PoleSpec', 'ShellSweep', 'ZeroOrderEstimate', 'ControlReport',
    'richardson', 'log_h', 'shell_flux', 'pole_residue_4d', 'pole_sweep',
    'pole_sum_4d', 'pole_sum_numeric', 'annulus_stokes',
    'surface_residue_2d', 'tube_residue', 'kappa_estimate',
    'semicontinuity_probe', 'controlled_check', 'LEVELS', 'KAPPA_TOL']

_LOG = logging.getLogger(__name__)

LEVELS = 6
KAPPA_TOL = 0.1
CONTROL_THRESHOLD = 1e-6
FLAT_TOL = 1e-12
CHUNK = 4096


def _invalid(msg: str) -> WorkbenchError:
    return WorkbenchError(WorkbenchErrorCode.InvalidInput, msg)


@dataclass(frozen=True)
class PoleSpec:
    """
    ``h = |x - center|^(2k) psi`` near a zero, ``|x - center|^(-2k) psi``
    near an infinity (``kind='pole'``).
    """
    center: Tuple[float, ...] = (0.0, 0.0, 0.0, 0.0)
    k: int = 1
    psi: Expr = field(default_factory=lambda: Num(1.0))
    kind: str = 'zero'

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise _invalid(
                f'Bad order k={self.k!r}: must be a positive integer.')
        if self.kind not in ('zero', 'pole'):
            raise _invalid(
                f'Bad kind "{self.kind}": must be "zero" or "pole".')
        object.__setattr__(self, 'center',
                           tuple(float(c) for c in self.center))
        object.__setattr__(self, 'k', int(self.k))
        object.__setattr__(self, 'psi', _as_expr(self.psi, len(self.center)))

    @property
    def exponent(self) -> int:
        """Signed half order: ``k`` for zeros, ``-k`` for poles."""
        return self.k if self.kind == 'zero' else -self.k

    @property
    def closed_form(self) -> float:
        """``-1/2 k^2 (k + 3)`` with ``k`` the signed half order."""
        e = self.exponent
        return -0.5 * e * e * (e + 3)


@dataclass(frozen=True)
class ShellSweep:
    radii: np.ndarray
    values: np.ndarray
    extrapolated: float
    error: float


def richardson(radii, values) -> Tuple[float, float]:
    """
    Zero-radius limit of ``values`` sampled on dyadic ``radii`` under the
    model ``v(r) = v0 + c r``. Returns the limit and the gap between the
    last two extrapolants.
    """
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(radii) != len(values) or len(radii) < 2:
        raise _invalid(
            f'Bad sweep: need at least two radii, got {len(radii)}.')
    if np.any(np.diff(radii) >= 0.0):
        raise _invalid('Bad sweep: radii must decrease strictly.')
    ratio = radii[:-1] / radii[1:]
    ext = (ratio * values[1:] - values[:-1]) / (ratio - 1.0)
    last = ext[-2] if len(ext) > 1 else values[-1]
    error = abs(ext[-1] - last)
    return float(ext[-1]), float(error)


def _dyadic(eps0: float, levels: int) -> np.ndarray:
    if eps0 <= 0.0:
        raise _invalid(f'Bad radius {eps0!r}: must be positive.')
    if int(levels) != levels or levels < 2:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad number of levels {levels!r}: must be an integer >= 2.')
    return eps0 * 2.0 ** -np.arange(levels)


def log_h(spec: PoleSpec) -> Expr:
    """Expression of ``log h`` for a pole specification."""
    r2 = None
    for i, c in enumerate(spec.center):
        d = Var(i + 1) - Num(c) if c else Var(i + 1)
        term = d * d
        r2 = term if r2 is None else r2 + term
    f = Num(float(spec.exponent)) * log(r2)
    if spec.psi != Num(1.0):
        f = f + log(spec.psi)
    return f


def _require_flat(chart: MetricChart, nodes: np.ndarray) -> None:
    inside = chart.contains(nodes)
    if not np.all(inside):
        bad = nodes[int(np.argmin(inside))]
        raise _invalid(
            f'Bad shell: node {bad.tolist()} lies outside chart '
            f'"{chart.name}".')
    g = chart.metric_value(nodes[:1])
    if float(np.max(np.abs(g - np.eye(chart.dim)))) > FLAT_TOL:
        raise _invalid(
            f'Bad chart "{chart.name}": shell residues need a flat chart.')


def _p_normal(chart: MetricChart, f: Expr, nodes, normals,
              workers: int = 1) -> np.ndarray:
    def block(idx):
        geo = geometry(chart, nodes[idx])
        p = _Conformal(geo, f).p_vector().value
        return np.einsum('...i,...i->...', p, normals[idx])
    index = np.arange(len(nodes))
    return map_chunks(block, index, CHUNK, workers)


def shell_flux(chart: MetricChart, f, rule: QuadratureRule,
               workers: int = 1) -> float:
    """
    ``sum w <P(grad f), nu>`` over a boundary rule, the nodes taken in
    chunks spread over ``workers`` threads.
    """
    if rule.normals is None:
        raise _invalid(f'Bad rule "{rule.kind}": no normals.')
    f = _as_expr(f, chart.dim)
    _require_flat(chart, rule.nodes)
    values = _p_normal(chart, f, rule.nodes, rule.normals, workers)
    return float(np.sum(rule.weights * values))


def _default_chart(spec: PoleSpec, radius: float) -> MetricChart:
    half = max(1.0, float(np.max(np.abs(spec.center))) + 2.0 * radius)
    return flat_chart(4, half)


def pole_residue_4d(spec: PoleSpec, epsilon: float,
                    chart: Optional[MetricChart] = None,
                    nodes: int = 16, workers: int = 1) -> float:
    """``-1/32pi^2`` times the flux of ``P(grad log h)`` through a shell."""
    if epsilon <= 0.0:
        raise _invalid(f'Bad radius {epsilon!r}: must be positive.')
    if len(spec.center) != 4:
        raise _invalid(
            f'Bad pole center {spec.center}: need four coordinates.')
    chart = chart if chart is not None else _default_chart(spec, epsilon)
    rule = sphere3_rule(nodes, epsilon, spec.center)
    return -shell_flux(chart, log_h(spec), rule, workers) / THIRTY_TWO_PI2


def pole_sweep(spec: PoleSpec, eps0: float = 0.4, levels: int = LEVELS,
               chart: Optional[MetricChart] = None,
               nodes: int = 16, workers: int = 1) -> ShellSweep:
    radii = _dyadic(eps0, levels)
    chart = chart if chart is not None else _default_chart(spec, eps0)
    values = []
    for eps in radii:
        v = pole_residue_4d(spec, float(eps), chart, nodes, workers)
        _LOG.debug('pole residue k=%d at radius %.4g: %.12g',
                   spec.exponent, eps, v)
        values.append(v)
    values = np.array(values)
    ext, err = richardson(radii, values)
    return ShellSweep(radii, values, ext, err)


def _check_orders(orders, what: str):
    for k in orders:
        if int(k) != k or k < 1:
            raise _invalid(
                f'Bad {what} order {k!r}: must be a positive integer.')


def pole_sum_4d(zeros: Sequence[int] = (), poles: Sequence[int] = ()) -> float:
    """``sum -1/2 k^2 (k + 3)`` over zeros plus ``-1/2 k^2 (3 - k)`` over poles."""
    _check_orders(zeros, 'zero')
    _check_orders(poles, 'pole')
    return float(sum(-0.5 * k * k * (k + 3) for k in zeros)
                 + sum(-0.5 * k * k * (3 - k) for k in poles))


def pole_sum_numeric(zeros: Sequence[int] = (), poles: Sequence[int] = (),
                     epsilon: float = 0.5, nodes: int = 16) -> float:
    """Sum of shell residues, one unit-factor shell per zero or pole."""
    _check_orders(zeros, 'zero')
    _check_orders(poles, 'pole')
    specs = ([PoleSpec(k=k) for k in zeros]
             + [PoleSpec(k=k, kind='pole') for k in poles])
    return float(sum(pole_residue_4d(s, epsilon, nodes=nodes)
                     for s in specs))


def annulus_stokes(spec: PoleSpec, inner: float = 0.1, outer: float = 0.5,
                   chart: Optional[MetricChart] = None, radial: int = 16,
                   angular: int = 12, workers: int = 1):
    """
    ``int div P`` over the shell ``inner < r < outer`` against
    ``flux(outer) - flux(inner)``.
    """
    if not 0.0 < inner < outer:
        raise _invalid(
            f'Bad annulus radii {inner!r}, {outer!r}: need 0 < inner < '
            'outer.')
    chart = chart if chart is not None else _default_chart(spec, outer)
    f = log_h(spec)
    rule = ball_rule(outer, radial, angular, spec.center, inner=inner)
    _require_flat(chart, rule.nodes)

    def div_block(idx):
        geo = geometry(chart, rule.nodes[idx])
        return geo.divergence(_Conformal(geo, f).p_vector()).value

    div_p = map_chunks(div_block, np.arange(len(rule.nodes)), CHUNK, workers)
    volume = float(np.sum(rule.weights * div_p))
    flux_out = shell_flux(
        chart, f, sphere3_rule(angular, outer, spec.center), workers)
    flux_in = shell_flux(
        chart, f, sphere3_rule(angular, inner, spec.center), workers)
    residual = abs(volume - (flux_out - flux_in))
    _LOG.debug('annulus %.3g < r < %.3g: volume %.12g, fluxes %.12g %.12g',
               inner, outer, volume, flux_out, flux_in)
    return {'volume': volume, 'flux_outer': flux_out, 'flux_inner': flux_in,
            'residual': residual}


# two dimensions

def _radial_log_derivative(h: Expr, nodes: np.ndarray,
                           normals: np.ndarray) -> np.ndarray:
    xs = coordinate_jets(nodes, 1)
    try:
        jet = h.jet_from(xs)
        grad = jet.log().grad().value
    except WorkbenchError as we:
        raise we.with_context(' (on a residue shell)') from we
    return np.einsum('...i,...i->...', grad, normals)


def surface_residue_2d(h, zeros: Sequence = (), infinities: Sequence = (),
                       chart: Optional[MetricChart] = None,
                       radius: float = 1e-3, nodes: int = 64,
                       tol: Optional[float] = 1e-4) -> float:
    """
    ``-1/2pi`` times the boundary integral of ``1/2 d log h`` over small
    circles around the listed points, the normal pointing into each
    excised disk. Points are ``(center, order)`` pairs; for ``h`` of the
    form ``|z|^k psi`` the result is ``1/2 (sum zero orders - sum
    infinity orders)``. The integrand is conformally invariant, so the
    chart only bounds the domain.

    The computed total must agree with the listed orders to within
    ``tol``; a disagreement means an order is wrong, and raises. Pass
    ``tol=None`` to skip the comparison.
    """
    points = [(np.asarray(c, dtype=float), k) for c, k in zeros]
    points += [(np.asarray(c, dtype=float), k) for c, k in infinities]
    for c, k in points:
        if c.shape != (2,):
            raise _invalid(f'Bad point {c.tolist()}: need two coordinates.')
        if int(k) != k or k < 1:
            raise _invalid(f'Bad order {k!r}: must be a positive integer.')
    for i, (a, _) in enumerate(points):
        for b, _ in points[i + 1:]:
            if np.linalg.norm(a - b) <= 2.0 * radius:
                raise _invalid(
                    f'Bad residue points {a.tolist()} and {b.tolist()}: '
                    f'shells of radius {radius:g} overlap.')
    h = _as_expr(h, 2)
    total = 0.0
    for c, _ in points:
        rule = circle_rule(nodes, radius, c)
        if chart is not None and not np.all(chart.contains(rule.nodes)):
            raise _invalid(
                f'Bad residue point {c.tolist()}: shell leaves chart '
                f'"{chart.name}".')
        d = _radial_log_derivative(h, rule.nodes, rule.normals)
        total += float(np.sum(rule.weights * d)) / (4.0 * np.pi)
    expected = 0.5 * (sum(k for _, k in zeros) - sum(k for _, k in infinities))
    _LOG.debug('surface residue %.12g, from the orders %.12g', total, expected)
    if tol is not None and abs(total - expected) > tol:
        raise _invalid(
            f'Bad residue orders: the shells give {total:.12g} but the '
            f'orders give {expected:g}.')
    return total


def tube_residue(costheta, patch=((0.0, 1.0), (0.0, 1.0)),
                 eps0: float = 0.1, levels: int = LEVELS,
                 patch_nodes: int = 8, angular: int = 32) -> ShellSweep:
    """
    Flux ``1/4pi int d log(1 + cos theta)(nu)`` through the tube of
    radius ``r`` around the flat patch ``{x3 = x4 = 0}`` over
    ``patch`` (a box in ``x1, x2``), swept over dyadic radii.
    """
    patch = np.asarray(patch, dtype=float)
    if patch.shape != (2, 2) or np.any(patch[:, 1] <= patch[:, 0]):
        raise _invalid(f'Bad patch {patch.tolist()}: need a box in x1, x2.')
    one_plus = Num(1.0) + _as_expr(costheta, 4)
    base = box_rule(patch, patch_nodes)
    radii = _dyadic(eps0, levels)
    values = []
    for eps in radii:
        circ = circle_rule(angular, float(eps))
        nodes = np.concatenate([
            np.repeat(base.nodes, len(circ), axis=0),
            np.tile(circ.nodes, (len(base), 1))], axis=1)
        normals = np.concatenate([
            np.zeros((len(nodes), 2)),
            np.tile(circ.normals, (len(base), 1))], axis=1)
        weights = np.outer(base.weights, circ.weights).ravel()
        if np.any(eval_value(one_plus, nodes) <= 0.0):
            raise _invalid(
                f'Bad tube of radius {eps:g}: 1 + cos theta vanishes off '
                'the patch.')
        d = _radial_log_derivative(one_plus, nodes, normals)
        v = float(np.sum(weights * d)) / (4.0 * np.pi)
        _LOG.debug('tube residue at radius %.4g: %.12g', eps, v)
        values.append(v)
    values = np.array(values)
    ext, err = richardson(radii, values)
    return ShellSweep(radii, values, ext, err)


# orders of zeros

@dataclass(frozen=True)
class ZeroOrderEstimate:
    """
    ``phi(r) = r^kappa (A + r B(r))``. ``log_derivative`` holds the
    discrete ``r dlog(phi)/dr`` on ``radii``; ``b_profile`` the samples of
    ``B``.
    """
    kappa: int
    A: float
    A_error: float
    limit: float
    radii: np.ndarray
    log_derivative: np.ndarray
    b_profile: np.ndarray


def kappa_estimate(phi: Callable, r0: float = 0.1,
                   levels: int = 14) -> ZeroOrderEstimate:
    """Order and leading coefficient of the zero of ``phi`` at ``r = 0``."""
    radii = _dyadic(r0, levels + 1)
    values = np.asarray(phi(radii), dtype=float)
    if values.shape != radii.shape:
        values = np.array([float(phi(r)) for r in radii])
    if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
        raise WorkbenchError(
            WorkbenchErrorCode.DomainError,
            'Bad profile: phi must be positive and finite off r = 0.')
    logs = np.log(values)
    # slope of log(phi) over [r/2, r], attributed to the left end
    slopes = (logs[:-1] - logs[1:]) / np.log(2.0)
    mids = radii[1:]
    limit, _ = richardson(mids, slopes)
    kappa = int(round(limit))
    if abs(limit - kappa) > KAPPA_TOL or abs(slopes[-1] - slopes[-2]) > KAPPA_TOL:
        raise WorkbenchError(
            WorkbenchErrorCode.NoLimit,
            f'Bad profile: r dlog(phi)/dr does not settle on an integer '
            f'(limit {limit:.4g}, last samples {slopes[-2]:.4g}, '
            f'{slopes[-1]:.4g}).')
    if kappa < 1:
        raise WorkbenchError(
            WorkbenchErrorCode.NoLimit,
            f'Bad profile: order {kappa} < 1, phi does not vanish at 0.')
    scaled = values / radii ** kappa
    a, a_err = richardson(radii, scaled)
    b_profile = (scaled - a) / radii
    _LOG.debug('kappa estimate: limit %.6g, kappa %d, A %.6g', limit, kappa, a)
    return ZeroOrderEstimate(
        kappa=kappa, A=a, A_error=a_err, limit=limit, radii=mids,
        log_derivative=slopes, b_profile=b_profile)


def semicontinuity_probe(phi: Callable, delta: float = 1e-2,
                         **kwargs) -> Tuple[int, int]:
    """Orders of ``phi`` and of ``phi + delta r^(kappa - 1)``."""
    est = kappa_estimate(phi, **kwargs)
    k = est.kappa

    def perturbed(r):
        return phi(r) + delta * np.asarray(r, dtype=float) ** (k - 1)

    return k, kappa_estimate(perturbed, **kwargs).kappa


@dataclass(frozen=True)
class ControlReport:
    """
    ``inf_abs_a`` and ``controlled`` answer the uniform lower bound on the
    leading coefficient. ``condition1`` is set when derivative bounds
    were supplied: ``|A| - b1 > 0`` everywhere sampled, with the sample
    mean of ``max(b1, b2) / (|A| - b1)`` in ``h_over_d``.
    """
    inf_abs_a: float
    argmin: np.ndarray
    controlled: bool
    condition1: Optional[bool] = None
    h_over_d: Optional[float] = None


def _leading(coefficients: Callable, kappa: Optional[int], u0):
    c = np.asarray(coefficients(u0), dtype=float)
    if kappa is not None:
        return kappa
    nz = np.flatnonzero(np.abs(c) > 0.0)
    if len(nz) == 0:
        raise _invalid('Bad family: all coefficients vanish.')
    return int(nz[0])


def controlled_check(coefficients: Callable, bounds, kappa: Optional[int] = None,
                     grid: int = 33, derivative_bounds: Optional[Callable] = None,
                     threshold: float = CONTROL_THRESHOLD) -> ControlReport:
    """
    Leading coefficient ``A(u) = coefficients(u)[kappa]`` of a polynomial
    family over the box ``bounds``: ``inf |A|`` from a grid search
    refined by L-BFGS-B.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if np.any(bounds[:, 1] < bounds[:, 0]):
        raise _invalid(f'Bad parameter box {bounds.tolist()}.')
    axes = [np.linspace(lo, hi, grid) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing='ij')
    samples = np.stack([m.ravel() for m in mesh], axis=-1)
    k = _leading(coefficients, kappa, samples[0])

    def lead(u):
        return float(np.asarray(coefficients(u), dtype=float)[k])

    abs_a = np.array([abs(lead(u)) for u in samples])
    best = samples[int(np.argmin(abs_a))]
    res = optimize.minimize(
        lambda u: lead(u) ** 2, best, method='L-BFGS-B',
        bounds=[tuple(b) for b in bounds])
    inf_abs = min(float(np.min(abs_a)), abs(lead(res.x)))
    argmin = res.x if abs(lead(res.x)) <= np.min(abs_a) else best
    report = dict(inf_abs_a=inf_abs, argmin=np.asarray(argmin),
                  controlled=inf_abs > threshold)
    if derivative_bounds is not None:
        b = np.array([derivative_bounds(u) for u in samples], dtype=float)
        d = abs_a - b[:, 0]
        h = np.max(b, axis=-1)
        ok = bool(np.all(d > 0.0))
        report['condition1'] = ok
        report['h_over_d'] = float(np.mean(h / d)) if ok else float('inf')
    _LOG.debug('controlled check: inf |A| = %.6g', inf_abs)
    return ControlReport(**report)
