"""
Metric connections with torsion, their curvature and transgression forms.

A connection delta ``S`` turns the Levi-Civita connection into
``nabla' = nabla + S``. It is stored as coordinate jets
``s[..., i, j, k] = S^k_ij``, i.e. ``S(d_i, d_j) = S^k_ij d_k``.
Endomorphism-valued 2-forms (curvatures, ``dS``, ``S^2``) are stored as
``e[..., l, n, j, k]``: the endomorphism ``d_n -> e^l_n d_l`` evaluated
on ``(d_j, d_k)``, with the sign of the round sphere positive.

3-forms are :class:`ThreeForm` objects holding the coefficients of
``e^234, e^134, e^124, e^123``: component ``k`` belongs to the basis
3-form omitting direction ``k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from scipy import special

from .alg4 import BIV_TENSOR, PAIRS, STAR, CurvOp, permutations_with_sign
from .chartgeom import (
    THIRTY_TWO_PI2, Geometry, MetricChart, QuadratureRule, _as_batch,
    _as_expr, _Conformal, _out, _trunc, geometry, jet_inverse)
from .curvops import FOUR_PI2, euler_form, pontrjagin_form
from .errors import WorkbenchError, WorkbenchErrorCode
from .exprfield import (
    Call, Expr, Jet, Num, Var, cos, einsum, sin, sqrt, stack)

__all__ = [
    'ConnectionDeltaField', 'ThreeForm', 'ConformalBundleMap', 'CalS',
    'Transgression', 'SingularDeltas', 'delta_from_exprs', 'zero_delta',
    'conformal_delta', 'gauge_delta', 'rank_one_delta', 'random_delta',
    'random_poly',
    'bundle_delta', 'identity_map', 'scalar_map', 'rotation_map',
    'torsion_of', 'cal_s_and_squares', 'modified_curvature', 'zeta_wedge',
    'transgression_forms', 'closed_forms', 't_integrand', 't_quadrature',
    't_integral_defect', 'd_threeform',
    'boundary_integral', 'verify_prop71', 'singular_sprime',
    'bundle_map_residual', 'closed_branch_residual', 'make_delta',
    'make_bundle',
    'DELTA_PRESETS', 'BUNDLE_PRESETS', 'H_MIN']

_LOG = logging.getLogger(__name__)

H_MIN = 1e-6
COMPAT_TOL = 1e-10
T_NODES = 64

_LEVI = np.zeros((4, 4, 4, 4))
for _perm, _sign in permutations_with_sign(4):
    _LEVI[_perm] = _sign

# basis 3-form index triples, component k omits direction k
_TRIPLES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


def _invalid(msg: str) -> WorkbenchError:
    return WorkbenchError(WorkbenchErrorCode.InvalidInput, msg)


@dataclass(frozen=True)
class ThreeForm:
    """A 3-form on a 4-space, batched over leading axes."""
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        if comps.shape[-1:] != (4,):
            raise _invalid(
                f'Bad 3-form components of shape {comps.shape}: last axis '
                'must have length 4.')
        object.__setattr__(self, 'components', comps)

    @classmethod
    def from_antisymmetric(cls, t) -> 'ThreeForm':
        t = np.asarray(t, dtype=float)
        return cls(np.stack([t[..., a, b, c] for a, b, c in _TRIPLES], -1))

    def to_antisymmetric(self) -> np.ndarray:
        c = self.components
        t = np.zeros(c.shape[:-1] + (4, 4, 4))
        for k, triple in enumerate(_TRIPLES):
            for perm, sign in permutations_with_sign(3):
                idx = tuple(triple[p] for p in perm)
                t[(Ellipsis,) + idx] = sign * c[..., k]
        return t

    def __call__(self, x, y, z):
        return np.einsum('...ijk,...i,...j,...k->...',
                         self.to_antisymmetric(), x, y, z)

    def __add__(self, other: 'ThreeForm') -> 'ThreeForm':
        return ThreeForm(self.components + other.components)

    def __sub__(self, other: 'ThreeForm') -> 'ThreeForm':
        return ThreeForm(self.components - other.components)

    def __neg__(self) -> 'ThreeForm':
        return ThreeForm(-self.components)

    def __mul__(self, scalar) -> 'ThreeForm':
        return ThreeForm(self.components * np.asarray(scalar)[..., None])

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.components), initial=0.0))


def _components_jet(t: Jet) -> Jet:
    return stack([t[..., a, b, c] for a, b, c in _TRIPLES], axis=-1)


def _cyclic(x: Jet) -> Jet:
    return (x + einsum('...jki->...ijk', x) + einsum('...kij->...ijk', x))


# connection deltas

@dataclass(frozen=True)
class ConnectionDeltaField:
    """
    A connection delta ``S`` given by a builder from a :class:`Geometry`
    to coordinate jets ``s[..., i, j, k] = S^k_ij`` of order 2 or more.
    """
    name: str
    builder: Callable[[Geometry], Jet]
    metric_compatible: bool = True

    def jet(self, geo: Geometry) -> Jet:
        s = self.builder(geo)
        if not isinstance(s, Jet) or s.shape[-3:] != (4, 4, 4):
            raise _invalid(
                f'Bad connection delta "{self.name}": builder must return '
                'jets of shape (..., 4, 4, 4).')
        if s.order < 2:
            raise _invalid(
                f'Bad connection delta "{self.name}": needs jets of order '
                f'>= 2, got {s.order}.')
        return s

    def values(self, chart: MetricChart, x) -> np.ndarray:
        x, single = _as_batch(x)
        return _out(self.jet(geometry(chart, x)).value, single)

    def __sub__(self, other: 'ConnectionDeltaField') -> 'ConnectionDeltaField':
        return ConnectionDeltaField(
            name=f'({self.name}) - ({other.name})',
            builder=lambda geo: (_trunc(self.jet(geo), 2)
                                 - _trunc(other.jet(geo), 2)),
            metric_compatible=(self.metric_compatible
                               and other.metric_compatible))


def _expr_grid(components, dim: int = 4):
    grid = np.empty((4, 4, 4), dtype=object)
    for i in range(4):
        for j in range(4):
            for k in range(4):
                grid[i, j, k] = _as_expr(components[i][j][k], dim)
    return grid


def _grid_jet(geo: Geometry, grid) -> Jet:
    return stack([
        stack([
            stack([geo.field(grid[i, j, k]) for k in range(4)], axis=-1)
            for j in range(4)], axis=-2)
        for i in range(4)], axis=-3)


def delta_from_exprs(components, lowered: bool = False,
                     name: str = 'exprs',
                     metric_compatible: bool = True) -> ConnectionDeltaField:
    """
    Delta from a ``4x4x4`` nested sequence of expressions.

    ``components[i][j][k]`` is ``S^k_ij``, or with ``lowered=True`` the
    lowered ``g(S(d_i, d_j), d_k)``; a lowered field skew in ``(j, k)`` is
    metric compatible on every chart.
    """
    grid = _expr_grid(components)

    def build(geo: Geometry) -> Jet:
        s = _grid_jet(geo, grid)
        if lowered:
            s = einsum('...kl,...ijl->...ijk', geo.inverse(s.order), s)
        return s

    return ConnectionDeltaField(name, build, metric_compatible)


def zero_delta() -> ConnectionDeltaField:
    def build(geo: Geometry) -> Jet:
        return Jet.constant(np.zeros(geo.x.shape[:1] + (4, 4, 4)), geo.basis)
    return ConnectionDeltaField('zero', build, True)


def _hat_jet(geo: Geometry, f: Expr) -> Jet:
    """Torsion-free delta of the conformal change ``e^f g``."""
    df = geo.field(f).grad()
    grad = geo.raise_index(df)
    eye = np.eye(4)
    return 0.5 * (einsum('...i,jk->...ijk', df, eye)
                  + einsum('...j,ik->...ijk', df, eye)
                  - einsum('...ij,...k->...ijk', geo.metric(df.order), grad))


def _gauge_jet(geo: Geometry, f: Expr) -> Jet:
    """Metric delta ``1/2 (df(Y) X - g(X, Y) grad f)``."""
    df = geo.field(f).grad()
    grad = geo.raise_index(df)
    eye = np.eye(4)
    return 0.5 * (einsum('...j,ik->...ijk', df, eye)
                  - einsum('...ij,...k->...ijk', geo.metric(df.order), grad))


def conformal_delta(f) -> ConnectionDeltaField:
    """
    ``S(X, Y) = 1/2 (df(X) Y + df(Y) X - g(X, Y) grad f)``: the
    Levi-Civita connection of ``e^f g`` minus that of ``g``. Symmetric,
    not metric for ``g``.
    """
    f = _as_expr(f, 4)
    return ConnectionDeltaField(
        f'hat({f})', lambda geo: _hat_jet(geo, f), metric_compatible=False)


def gauge_delta(f) -> ConnectionDeltaField:
    """
    ``K(X, Y) = 1/2 (df(Y) X - g(X, Y) grad f)``. Metric for ``g`` and
    gauge equivalent to :func:`conformal_delta`, so its curvature is the
    conformally changed curvature.
    """
    f = _as_expr(f, 4)
    return ConnectionDeltaField(
        f'gauge({f})', lambda geo: _gauge_jet(geo, f), metric_compatible=True)


def rank_one_delta(alpha: Sequence, a) -> ConnectionDeltaField:
    """``S(X, Y) = alpha(X) A Y`` with a constant matrix ``A``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (4, 4):
        raise _invalid(f'Bad matrix of shape {a.shape}: expected (4, 4).')
    alpha = [_as_expr(e, 4) for e in alpha]
    if len(alpha) != 4:
        raise _invalid(f'Bad 1-form: {len(alpha)} components, expected 4.')
    skew = bool(np.allclose(a, -a.T, atol=COMPAT_TOL))

    def build(geo: Geometry) -> Jet:
        al = stack([geo.field(e) for e in alpha], axis=-1)
        return einsum('...i,kj->...ijk', al, a)

    return ConnectionDeltaField('rank_one', build, metric_compatible=skew)


def random_poly(rng: np.random.Generator, scale: float, degree: int) -> Expr:
    """Degree <= ``degree`` polynomial, coefficients in [-scale, scale]."""
    xs = [Var(i + 1) for i in range(4)]
    e = Num(scale * rng.uniform(-1, 1))
    if degree >= 1:
        for k in range(4):
            e = e + Num(scale * rng.uniform(-1, 1)) * xs[k]
    if degree >= 2:
        for k in range(4):
            for m in range(k, 4):
                e = e + Num(scale * rng.uniform(-1, 1)) * xs[k] * xs[m]
    return e


def random_delta(seed: int = 20240117, scale: float = 0.5,
                 degree: int = 2) -> ConnectionDeltaField:
    """Random polynomial metric delta, built lowered and skew in (j, k)."""
    rng = np.random.default_rng(seed)
    zero = Num(0.0)
    comps = [[[zero] * 4 for _ in range(4)] for _ in range(4)]
    for i in range(4):
        for j, k in PAIRS:
            p = random_poly(rng, scale, degree)
            comps[i][j][k] = p
            comps[i][k][j] = -p
    return delta_from_exprs(comps, lowered=True, name=f'random({seed})')


DELTA_PRESETS: Mapping[str, Callable[..., ConnectionDeltaField]] = {
    'zero': zero_delta,
    'conformal': conformal_delta,
    'gauge': gauge_delta,
    'rank_one': rank_one_delta,
    'random': random_delta,
}


def _from_catalog(catalog: Mapping[str, Callable], what: str, name: str,
                  params):
    try:
        factory = catalog[name]
    except KeyError:
        raise WorkbenchError(
            WorkbenchErrorCode.UnknownName,
            f'Unknown {what} "{name}": valid names are '
            f'{", ".join(sorted(catalog))}.') from None
    try:
        return factory(**params)
    except TypeError as te:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad parameters {sorted(params)} for {what} "{name}": {te}.'
        ) from te


def make_delta(name: str, **params) -> ConnectionDeltaField:
    return _from_catalog(DELTA_PRESETS, 'connection delta', name, params)


# conformal bundle maps

@dataclass(frozen=True)
class ConformalBundleMap:
    """
    ``Phi: TM -> E`` with ``g(Phi X, Phi Y) = h g(X, Y)``, ``E = TM``.
    ``phi[p][j]`` is the coordinate matrix entry ``Phi^p_j``.
    """
    name: str
    phi: tuple
    h: Expr

    def jet(self, geo: Geometry) -> Jet:
        rows = [stack([geo.field(e) for e in row], axis=-1) for row in self.phi]
        return stack(rows, axis=-2)

    def check(self, geo: Geometry, tol: float = COMPAT_TOL) -> float:
        """Largest conformality defect where ``h > 1e-8``."""
        phi = self.jet(geo).value
        h = geo.field(self.h).value
        g = geo.g.value
        pull = np.einsum('...pi,...pq,...qj->...ij', phi, g, phi)
        defect = np.max(np.abs(pull - h[..., None, None] * g), axis=(-1, -2))
        defect = float(np.max(np.where(h > 1e-8, defect, 0.0)))
        if defect > tol:
            raise _invalid(
                f'Bad bundle map "{self.name}": not conformal (defect '
                f'{defect:.3g} > {tol:g}).')
        return defect


def identity_map() -> ConformalBundleMap:
    one, zero = Num(1.0), Num(0.0)
    phi = tuple(tuple(one if i == j else zero for j in range(4))
                for i in range(4))
    return ConformalBundleMap('identity', phi, one)


def scalar_map(h) -> ConformalBundleMap:
    """``Phi = sqrt(h) Id``."""
    h = _as_expr(h, 4)
    root, zero = sqrt(h), Num(0.0)
    phi = tuple(tuple(root if i == j else zero for j in range(4))
                for i in range(4))
    return ConformalBundleMap(f'sqrt({h}) Id', phi, h)


def rotation_map(h, angle12, angle34=0.0) -> ConformalBundleMap:
    """
    ``Phi = sqrt(h) A`` with ``A`` rotating the ``(x1, x2)`` plane by
    ``angle12`` and the ``(x3, x4)`` plane by ``angle34``. Conformal on
    conformally flat charts.
    """
    h = _as_expr(h, 4)
    a, b = _as_expr(angle12, 4), _as_expr(angle34, 4)
    root, zero = sqrt(h), Num(0.0)
    ca, sa, cb, sb = root * cos(a), root * sin(a), root * cos(b), root * sin(b)
    phi = ((ca, -sa, zero, zero),
           (sa, ca, zero, zero),
           (zero, zero, cb, -sb),
           (zero, zero, sb, cb))
    return ConformalBundleMap(f'rotation({a}, {b})', phi, h)


BUNDLE_PRESETS: Mapping[str, Callable[..., ConformalBundleMap]] = {
    'identity': identity_map,
    'scalar': scalar_map,
    'rotation': rotation_map,
}


def make_bundle(name: str, **params) -> ConformalBundleMap:
    return _from_catalog(BUNDLE_PRESETS, 'bundle map', name, params)


def _guard(geo: Geometry, h: Expr, h_min: float) -> Jet:
    hj = geo.field(h)
    low = hj.value
    if np.any(low <= h_min):
        bad = int(np.argmin(low))
        raise WorkbenchError(
            WorkbenchErrorCode.SingularSet,
            f'Bad point {geo.x[bad].tolist()}: h = {low[bad]:.3g} is inside '
            f'the singular set (h <= {h_min:g}).')
    return hj


def _bundle_jet(geo: Geometry, bundle: ConformalBundleMap,
                k: ConnectionDeltaField, h_min: float) -> Jet:
    """``S = Phi^-1 (nabla Phi + K Phi)`` on ``E = TM`` with ``nabla + K``."""
    _guard(geo, bundle.h, h_min)
    phi = bundle.jet(geo)
    phi_inv = _trunc(jet_inverse(phi), 2)
    nabla_phi = geo.covariant_endo(phi)
    kj = _trunc(k.jet(geo), 2)
    return (einsum('...kp,...pji->...ijk', phi_inv, nabla_phi)
            + einsum('...kp,...iqp,...qj->...ijk', phi_inv, kj,
                     _trunc(phi, 2)))


def bundle_delta(bundle: ConformalBundleMap,
                 k: Optional[ConnectionDeltaField] = None,
                 h_min: float = H_MIN) -> ConnectionDeltaField:
    k = k or zero_delta()
    return ConnectionDeltaField(
        f'bundle({bundle.name})',
        lambda geo: _bundle_jet(geo, bundle, k, h_min),
        metric_compatible=False)


# curvature calculus

def _check_metric(geo: Geometry, s: Jet, name: str) -> None:
    low = np.einsum('...kl,...ijl->...ijk', geo.g.value, s.value)
    defect = float(np.max(np.abs(low + np.swapaxes(low, -1, -2)),
                          initial=0.0))
    scale = max(1.0, float(np.max(np.abs(low), initial=0.0)))
    if defect > COMPAT_TOL * scale:
        raise _invalid(
            f'Bad connection delta "{name}": metric compatibility violated '
            f'(defect {defect:.3g}).')


class _EndoForms(NamedTuple):
    s: Jet
    curvature: Jet
    d_s: Jet
    square: Jet


def _endo_forms(geo: Geometry, s: Jet) -> _EndoForms:
    s = _trunc(s, 2)
    nab = geo.covariant_delta(s)
    d_s = (einsum('...knlj->...lnjk', nab)
           - einsum('...jnlk->...lnjk', nab))
    s1 = _trunc(s, 1)
    square = (einsum('...jpl,...knp->...lnjk', s1, s1)
              - einsum('...kpl,...jnp->...lnjk', s1, s1))
    return _EndoForms(s1, -geo.rstd, d_s, square)


def _operator(geo: Geometry, e) -> CurvOp:
    """Curvature-type operator of an endomorphism-valued 2-form."""
    e = e.value if isinstance(e, Jet) else e
    down = np.einsum('...lm,...mnjk->...jknl', geo.g.value, e)
    return CurvOp.from_tensor4(geo.frame_tensor4(down))


def _frame_cal_s(geo: Geometry, s: Jet) -> np.ndarray:
    low = np.einsum('...kl,...ijl->...ijk', geo.g.value, s.value)
    e = geo.frame
    t = np.einsum('...ai,...bj,...ck,...ijk->...abc', e, e, e, low)
    pa = np.array([p[0] for p in PAIRS])
    pb = np.array([p[1] for p in PAIRS])
    return t[..., pa, pb]


def torsion_of(chart: MetricChart, delta: ConnectionDeltaField, x):
    """Coordinate torsion ``T^k_ij = S^k_ij - S^k_ji``."""
    s = delta.values(chart, x)
    return s - np.swapaxes(s, -2, -3)


class CalS(NamedTuple):
    """
    ``cal_s[..., a, P] = g(S(e_a, e_p), e_q)`` for ``P = (p, q)``, and the
    operators of ``S^2`` and ``dS`` in the orthonormal frame.
    """
    cal_s: np.ndarray
    cal_s2: CurvOp
    d_s: CurvOp


def cal_s_and_squares(chart: MetricChart, delta: ConnectionDeltaField,
                      x) -> CalS:
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    s = delta.jet(geo)
    _check_metric(geo, s, delta.name)
    forms = _endo_forms(geo, s)
    return CalS(
        cal_s=_out(_frame_cal_s(geo, s), single),
        cal_s2=_out(_operator(geo, forms.square), single),
        d_s=_out(_operator(geo, forms.d_s), single))


def _modified(geo: Geometry, delta: ConnectionDeltaField) -> CurvOp:
    s = delta.jet(geo)
    forms = _endo_forms(geo, s)
    e = forms.curvature - forms.d_s - forms.square
    down = np.einsum('...lm,...mnjk->...jknl', geo.g.value, e.value)
    skew = float(np.max(np.abs(down + np.swapaxes(down, -1, -2)),
                        initial=0.0))
    if skew > 1e-8 * max(1.0, float(np.max(np.abs(down), initial=0.0))):
        raise _invalid(
            f'Bad connection delta "{delta.name}": curvature is not '
            f'skew (defect {skew:.3g}), metric compatibility violated.')
    return CurvOp.from_tensor4(geo.frame_tensor4(down))


def modified_curvature(chart: MetricChart, delta: ConnectionDeltaField,
                       x) -> CurvOp:
    """``R' = R - dS - S^2`` in the orthonormal frame, in general not symmetric."""
    x, single = _as_batch(x)
    return _out(_modified(geometry(chart, x), delta), single)


def zeta_wedge(zeta, r: CurvOp) -> ThreeForm:
    """
    ``<zeta(X), R(Y, Z)> + <zeta(Z), R(X, Y)> + <zeta(Y), R(Z, X)>`` for a
    bivector-valued 1-form ``zeta[..., a, P]``.
    """
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[-2:] != (4, 6):
        raise _invalid(
            f'Bad bivector-valued 1-form of shape {zeta.shape}: expected '
            '(..., 4, 6).')
    f = np.einsum('...aq,...qp,pbc->...abc', zeta, r.entries, BIV_TENSOR)
    t = (f + np.einsum('...bca->...abc', f) + np.einsum('...cab->...abc', f))
    return ThreeForm.from_antisymmetric(t)


class Transgression(NamedTuple):
    """
    Transgression 3-forms: coordinate components (``euler``, ``p1``) and
    their values in the orthonormal frame.
    """
    euler: ThreeForm
    p1: ThreeForm
    euler_frame: ThreeForm
    p1_frame: ThreeForm


def _sqrt_det_inv(geo: Geometry, order: int) -> Jet:
    g = geo.metric(order)
    det = einsum('ijkl,...i,...j,...k,...l->...', _LEVI,
                 g[..., 0, :], g[..., 1, :], g[..., 2, :], g[..., 3, :])
    return det.real_power(-0.5)


def _transgression_jets(geo: Geometry, s: Jet):
    """Coordinate component jets (order 1) of both transgression forms."""
    forms = _endo_forms(geo, s)
    g1 = geo.metric(1)
    b = forms.curvature - 0.5 * forms.d_s - forms.square * (1.0 / 3.0)
    alpha = einsum('...ml,...inl->...imn', g1, forms.s)
    beta = einsum('...pl,...lqjk->...jkpq', g1, b)
    x_e = einsum('mnpq,...imn,...jkpq->...ijk', _LEVI, alpha, beta)
    t_e = einsum('...ijk,...->...ijk', _cyclic(x_e), _sqrt_det_inv(geo, 1))
    ginv = geo.inverse(1)
    x_p = einsum('...mp,...nq,...imn,...jkpq->...ijk', ginv, ginv, alpha, beta)
    t_p = _cyclic(x_p)
    return (_components_jet(t_e) * (1.0 / (4.0 * FOUR_PI2)),
            _components_jet(t_p) * (1.0 / FOUR_PI2))


def _frame_threeform(geo: Geometry, comps: np.ndarray) -> ThreeForm:
    t = ThreeForm(comps).to_antisymmetric()
    e = geo.frame
    return ThreeForm.from_antisymmetric(
        np.einsum('...ai,...bj,...ck,...ijk->...abc', e, e, e, t))


def transgression_forms(chart: MetricChart, delta: ConnectionDeltaField,
                        x) -> Transgression:
    """
    ``T_euler = 1/4pi^2 <S ^ *(R - 1/2 dS - 1/3 S^2)>`` and
    ``T_p1 = 1/2pi^2 <S ^ (R - 1/2 dS - 1/3 S^2)>``, so that
    ``X(R') = X(R) - dT_euler`` and ``p1(R') = p1(R) - dT_p1``.
    """
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    s = delta.jet(geo)
    _check_metric(geo, s, delta.name)
    t_e, t_p = _transgression_jets(geo, s)
    result = Transgression(
        euler=ThreeForm(t_e.value),
        p1=ThreeForm(t_p.value),
        euler_frame=_frame_threeform(geo, t_e.value),
        p1_frame=_frame_threeform(geo, t_p.value))
    if single:
        result = Transgression(*[ThreeForm(f.components[0]) for f in result])
    return result


def closed_forms(zeta, r: CurvOp, d_s: CurvOp, s2: CurvOp):
    """Frame transgression forms from ``zeta``, ``R``, ``dS`` and ``S^2``."""
    b = r - 0.5 * d_s - s2 * (1.0 / 3.0)
    return (zeta_wedge(zeta, STAR @ b) * (1.0 / FOUR_PI2),
            zeta_wedge(zeta, b) * (2.0 / FOUR_PI2))


def _wedge22(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Wedge of two 2-forms given as antisymmetric arrays."""
    outer = np.einsum('...ij,...kl->...ijkl', a, b)
    out = np.zeros_like(outer)
    for perm, sign in permutations_with_sign(4):
        src = ''.join('abcd'[p] for p in perm)
        out += sign * np.einsum(f'...{src}->...abcd', outer)
    return out / 4.0


def t_integrand(zeta, r: CurvOp, d_s: CurvOp, s2: CurvOp, t: float):
    """
    ``-i_{d/dt}`` of the Euler and Pontrjagin forms of
    ``R_t - dt ^ S`` on the cylinder, ``R_t = R - t dS - t^2 S^2``.

    Built as 4-forms in five dimensions (``t`` first) by explicit
    wedge products.
    """
    zeta = np.asarray(zeta, dtype=float)
    rt = r - d_s * t - s2 * (t * t)
    batch = rt.entries.shape[:-2]
    w = np.zeros(batch + (6, 5, 5))
    w[..., 1:, 1:] = np.einsum('...qp,pbc->...qbc', rt.entries, BIV_TENSOR)
    w[..., :, 0, 1:] = -np.swapaxes(zeta, -1, -2)
    w[..., :, 1:, 0] = np.swapaxes(zeta, -1, -2)
    wedge = _wedge22(w[..., :, None, :, :], w[..., None, :, :, :])
    euler4 = np.einsum('ac,...acijkl->...ijkl', STAR.entries, wedge) / (
        2.0 * FOUR_PI2)
    p14 = np.einsum('...aaijkl->...ijkl', wedge) / FOUR_PI2
    euler3 = -euler4[..., 0, 1:, 1:, 1:]
    p13 = -p14[..., 0, 1:, 1:, 1:]
    return (ThreeForm.from_antisymmetric(euler3),
            ThreeForm.from_antisymmetric(p13))


def t_quadrature(zeta, r: CurvOp, d_s: CurvOp, s2: CurvOp,
                 nodes: int = T_NODES):
    """Gauss-Legendre integral of :func:`t_integrand` over ``[0, 1]``."""
    ts, ws = special.roots_legendre(nodes)
    ts, ws = 0.5 * (ts + 1.0), 0.5 * ws
    euler = p1 = None
    for t, w in zip(ts, ws):
        e, p = t_integrand(zeta, r, d_s, s2, float(t))
        euler = e * w if euler is None else euler + e * w
        p1 = p * w if p1 is None else p1 + p * w
    return euler, p1


def t_integral_defect(chart: MetricChart, delta: ConnectionDeltaField,
                      x, nodes: int = T_NODES) -> float:
    """
    Largest gap between the coordinate transgression forms (in the
    frame), the frame closed forms and the t-quadrature.
    """
    x, _ = _as_batch(x)
    geo = geometry(chart, x)
    s = delta.jet(geo)
    _check_metric(geo, s, delta.name)
    forms = _endo_forms(geo, s)
    zeta = _frame_cal_s(geo, s)
    r = geo.curvature_operator()
    d_s = _operator(geo, forms.d_s)
    s2 = _operator(geo, forms.square)
    t_e, t_p = _transgression_jets(geo, s)
    f_e = _frame_threeform(geo, t_e.value)
    f_p = _frame_threeform(geo, t_p.value)
    c_e, c_p = closed_forms(zeta, r, d_s, s2)
    q_e, q_p = t_quadrature(zeta, r, d_s, s2, nodes)
    gap = max((q_e - f_e).max_abs(), (q_p - f_p).max_abs(),
              (c_e - f_e).max_abs(), (c_p - f_p).max_abs())
    _LOG.debug('t-integral defect for %s on %s: %.3g', delta.name,
               chart.name, gap)
    return gap


def _d_jet(comps: Jet) -> Jet:
    total = None
    for k in range(4):
        term = comps[..., k].deriv(k) * (1.0 if k % 2 == 0 else -1.0)
        total = term if total is None else total + term
    return total


def d_threeform(chart: MetricChart, t_field, x):
    """
    Coefficient of ``dx1 ^ dx2 ^ dx3 ^ dx4`` in ``dT``.

    ``t_field`` is four component expressions, or a callable from a
    :class:`Geometry` to component jets of order >= 1.
    """
    if chart.dim != 4:
        raise _invalid(f'Bad chart "{chart.name}": 3-forms need dimension 4.')
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    if callable(t_field):
        comps = t_field(geo)
    else:
        exprs = [_as_expr(e, 4) for e in t_field]
        if len(exprs) != 4:
            raise _invalid(
                f'Bad 3-form: {len(exprs)} components, expected 4.')
        comps = stack([geo.field(e) for e in exprs], axis=-1)
    if not isinstance(comps, Jet) or comps.order < 1:
        raise _invalid('Bad 3-form: components are not differentiable jets.')
    return _out(_d_jet(comps).value, single)


def boundary_integral(rule: QuadratureRule, components) -> float:
    """
    ``\\int_{boundary} T`` over a box boundary rule; ``components`` maps
    nodes to the four coordinate components.
    """
    if rule.normals is None:
        raise _invalid(f'Bad {rule.kind} rule: boundary rules need normals.')
    values = np.asarray(
        components(rule.nodes) if callable(components) else components,
        dtype=float)
    signs = np.array([1.0, -1.0, 1.0, -1.0])
    flux = np.einsum('nk,nk,k->n', rule.normals, values, signs)
    return float(np.sum(rule.weights * flux))


def verify_prop71(chart: MetricChart, delta: ConnectionDeltaField, x):
    """
    Residuals ``|X(R') - X(R) + dT_euler|`` and ``|p1(R') - p1(R) + dT_p1|``
    as densities against the Riemannian volume.
    """
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    s = delta.jet(geo)
    _check_metric(geo, s, delta.name)
    r = geo.curvature_operator()
    r_mod = _modified(geo, delta)
    t_e, t_p = _transgression_jets(geo, s)
    vol = geo.sqrt_det
    res_e = np.abs(euler_form(r_mod) - euler_form(r)
                   + _d_jet(t_e).value / vol)
    res_p = np.abs(pontrjagin_form(r_mod) - pontrjagin_form(r)
                   + _d_jet(t_p).value / vol)
    _LOG.debug('delta residuals on %s with %s: euler %.3g, p1 %.3g', chart.name,
               delta.name, float(np.max(res_e)), float(np.max(res_p)))
    return {'euler': _out(res_e, single), 'p1': _out(res_p, single)}


# singular bundle maps

class SingularDeltas(NamedTuple):
    """
    ``s``: the pulled-back delta ``Phi^-1 nabla^E Phi`` against ``g``;
    ``s_hat``: Levi-Civita of ``h g`` minus that of ``g``;
    ``s_prime = s - s_hat``, metric for ``h g``.
    """
    s: ConnectionDeltaField
    s_prime: ConnectionDeltaField
    s_hat: ConnectionDeltaField


def _log_h(bundle: ConformalBundleMap) -> Expr:
    return Call('log', bundle.h)


def singular_sprime(chart: MetricChart, bundle: ConformalBundleMap, x,
                    k: Optional[ConnectionDeltaField] = None,
                    h_min: float = H_MIN) -> SingularDeltas:
    """
    The deltas of a conformal bundle map, checked at ``x``: ``h > h_min``,
    conformality of ``Phi`` and metric compatibility of ``S'`` for ``h g``.
    """
    x, _ = _as_batch(x)
    geo = geometry(chart, x)
    _guard(geo, bundle.h, h_min)
    bundle.check(geo)
    s = bundle_delta(bundle, k, h_min)
    s_hat = conformal_delta(_log_h(bundle))

    def prime(geo_any: Geometry) -> Jet:
        base = (geo_any if geo_any.chart == chart
                else Geometry(chart, geo_any.x))
        return _trunc(s.jet(base), 2) - _trunc(s_hat.jet(base), 2)

    s_prime = ConnectionDeltaField(f"({s.name})'", prime, True)
    geo_hat = geometry(chart.rescaled(bundle.h), x)
    _check_metric(geo_hat, s_prime.jet(geo_hat), s_prime.name)
    return SingularDeltas(s, s_prime, s_hat)


def bundle_map_residual(chart: MetricChart, bundle: ConformalBundleMap, x,
                        k: Optional[ConnectionDeltaField] = None,
                        h_min: float = H_MIN):
    """
    Residuals of the Euler and Pontrjagin identities for ``E = TM`` with
    ``nabla + K`` and a conformal bundle map ``Phi``:

    ``X(R^E) = X(R) + div P(grad log h)/32pi^2 - dT'_euler`` and
    ``p1(R^E) = p1(R) - dT'_p1``, where ``T'`` are the transgression
    forms of ``S'`` on ``(M, h g)``. ``consistency`` compares ``X(R^E)``
    with the Euler density of ``S'`` on ``h g``.
    """
    k = k or zero_delta()
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    deltas = singular_sprime(chart, bundle, x, k, h_min)
    vol = geo.sqrt_det

    r = geo.curvature_operator()
    r_e = _modified(geo, k)
    conf = _Conformal(geo, _log_h(bundle))
    div_p = geo.divergence(conf.p_vector()).value

    hat_chart = chart.rescaled(bundle.h)
    geo_hat = geometry(hat_chart, x)
    s_prime = deltas.s_prime.jet(geo_hat)
    _check_metric(geo_hat, s_prime, deltas.s_prime.name)
    t_e, t_p = _transgression_jets(geo_hat, s_prime)
    d_e = _d_jet(t_e).value
    d_p = _d_jet(t_p).value

    euler_e = euler_form(r_e) * vol
    res_e = np.abs(euler_e - (euler_form(r) + div_p / THIRTY_TWO_PI2) * vol
                   + d_e) / vol
    res_p = np.abs((pontrjagin_form(r_e) - pontrjagin_form(r)) * vol
                   + d_p) / vol
    r_prime = _modified(geo_hat, deltas.s_prime)
    consistency = np.abs(euler_form(r_prime) * geo_hat.sqrt_det
                         - euler_e) / vol
    _LOG.debug('bundle map on %s with %s: euler %.3g, p1 %.3g', chart.name,
               bundle.name, float(np.max(res_e)), float(np.max(res_p)))
    return {'euler': _out(res_e, single), 'p1': _out(res_p, single),
            'consistency': _out(consistency, single)}


def closed_branch_residual(chart: MetricChart, h, x, h_min: float = H_MIN):
    """
    The closed branch ``d Phi = 0``: ``Phi = sqrt(h) Id`` into ``E = TM``
    with the gauge connection of ``log h``. Reports the torsion of the
    pulled-back delta, ``|S'|`` and the residuals of
    ``X(R^E) = X(R) + div P/32pi^2`` and ``p1(R^E) = p1(R)``.
    """
    bundle = scalar_map(h)
    k = gauge_delta(_log_h(bundle))
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    deltas = singular_sprime(chart, bundle, x, k, h_min)
    s = deltas.s.jet(geo).value
    torsion = np.max(np.abs(s - np.swapaxes(s, -2, -3)), axis=(-1, -2, -3))
    s_prime = np.max(np.abs(deltas.s_prime.jet(geo).value), axis=(-1, -2, -3))

    r = geo.curvature_operator()
    r_e = _modified(geo, k)
    conf = _Conformal(geo, _log_h(bundle))
    div_p = geo.divergence(conf.p_vector()).value
    res_e = np.abs(euler_form(r_e) - euler_form(r) - div_p / THIRTY_TWO_PI2)
    res_p = np.abs(pontrjagin_form(r_e) - pontrjagin_form(r))
    return {'torsion': _out(torsion, single),
            's_prime': _out(s_prime, single),
            'euler': _out(res_e, single), 'p1': _out(res_p, single)}
