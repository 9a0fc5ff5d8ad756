"""
Riemannian geometry on a single coordinate chart.

A :class:`MetricChart` holds the metric components as expressions. All
derived quantities (Christoffel symbols, curvature, covariant calculus of
scalar fields, the conformal-change operators) are computed from exact
jets of those expressions by :class:`Geometry`, batched over points.

Index conventions for the coordinate arrays (batch axes in front):

* ``dg[a, b, c] = d_c g_ab``
* ``gamma[k, i, j] = Gamma^k_ij``
* ``dgamma[k, i, j, m] = d_m Gamma^k_ij``
* ``rstd[l, k, i, j]``: components of ``R(d_i, d_j) d_k`` with
  ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]``
* ``rdown[i, j, k, l] = g(R(d_i, d_j) d_k, d_l)`` with the opposite sign,
  so that the round sphere has curvature operator ``+Id``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .alg4 import CurvOp, kulkarni_nomizu
from .curvops import FOUR_PI2, euler_form, pontrjagin_form
from .errors import WorkbenchError, WorkbenchErrorCode
from .exprfield import (
    Expr, Jet, Num, Var, R2, coordinate_jets, einsum, parse, stack)

__all__ = [
    'MetricChart', 'FramedPoint', 'Geometry', 'ScalarCalc',
    'QuadratureRule', 'geometry', 'christoffel', 'riemann_frame',
    'scalar_calc', 'conformal_phi', 'conformal_curvature', 'p_operator',
    'p_divergence',
    'prop11_residual', 'conformal_identities', 'gauss2d', 'integrate',
    'volume_density', 'jet_inverse', 'make_chart', 'user_chart',
    'random_poly_chart', 'CHARTS', 'box_rule', 'interval_rule',
    'circle_rule', 'disk_rule', 'sphere3_rule', 'ball_rule',
    'box_boundary_rule', 'dump_csv', 'map_chunks', 'MIN_EIGENVALUE']

_LOG = logging.getLogger(__name__)

MIN_EIGENVALUE = 1e-8
JET_ORDER = 3
THIRTY_TWO_PI2 = 8.0 * FOUR_PI2


def _invalid(msg: str) -> WorkbenchError:
    return WorkbenchError(WorkbenchErrorCode.InvalidInput, msg)


@dataclass(frozen=True)
class MetricChart:
    """
    A coordinate box with metric components given as expressions.

    ``g_entries`` is a ``dim x dim`` tuple of tuples of :class:`Expr`.
    ``conformal_factor`` is set when ``g = lambda2 * delta`` and is then
    used by :func:`gauss2d`.
    """
    name: str
    dim: int
    domain: Tuple[Tuple[float, float], ...]
    g_entries: Tuple[Tuple[Expr, ...], ...]
    params: Tuple[Tuple[str, object], ...] = ()
    conformal_factor: Optional[Expr] = None

    def __post_init__(self):
        if self.dim not in (2, 4):
            raise _invalid(
                f'Bad chart "{self.name}": dimension {self.dim} is not '
                '2 or 4.')
        if len(self.domain) != self.dim:
            raise _invalid(
                f'Bad chart "{self.name}": domain has {len(self.domain)} '
                f'intervals, expected {self.dim}.')
        for lo, hi in self.domain:
            if not lo < hi:
                raise _invalid(
                    f'Bad chart "{self.name}": empty interval [{lo}, {hi}].')
        if (len(self.g_entries) != self.dim
                or any(len(row) != self.dim for row in self.g_entries)):
            raise _invalid(
                f'Bad chart "{self.name}": metric must be '
                f'{self.dim}x{self.dim}.')
        for i in range(self.dim):
            for j in range(i):
                if str(self.g_entries[i][j]) != str(self.g_entries[j][i]):
                    raise _invalid(
                        f'Bad chart "{self.name}": g{j + 1}{i + 1} and '
                        f'g{i + 1}{j + 1} differ.')
        for row in self.g_entries:
            for e in row:
                e._check_vars(self.dim)

    @property
    def box(self) -> np.ndarray:
        return np.array(self.domain, dtype=float)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        box = self.box
        return np.all((x >= box[:, 0]) & (x <= box[:, 1]), axis=-1)

    def metric_jet(self, xs: Sequence[Jet]) -> Jet:
        """Metric jets, shape ``(..., dim, dim)``, from coordinate jets."""
        rows = [stack([e.jet_from(xs) for e in row], axis=-1)
                for row in self.g_entries]
        return stack(rows, axis=-2)

    def metric_value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([
            np.stack([e.evaluate(x) for e in row], axis=-1)
            for row in self.g_entries], axis=-2)

    def rescaled(self, factor, name: Optional[str] = None) -> 'MetricChart':
        """The chart of ``factor * g``."""
        if isinstance(factor, str):
            factor = parse(factor, self.dim)
        elif not isinstance(factor, Expr):
            factor = Num(float(factor))
        entries = tuple(
            tuple(e if _is_zero(e) else factor * e for e in row)
            for row in self.g_entries)
        conformal = (None if self.conformal_factor is None
                     else factor * self.conformal_factor)
        return replace(
            self,
            name=name or f'{self.name}*({factor})',
            g_entries=entries,
            conformal_factor=conformal)


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 0.0


def _diag_entries(dim: int, diag: Sequence[Expr]):
    zero = Num(0.0)
    return tuple(
        tuple(diag[i] if i == j else zero for j in range(dim))
        for i in range(dim))


def _box(dim: int, half: float):
    return ((-half, half),) * dim


def flat_chart(dim: int, half: float = 1.0) -> MetricChart:
    one = Num(1.0)
    return MetricChart(
        name=f'flat{dim}', dim=dim, domain=_box(dim, half),
        g_entries=_diag_entries(dim, [one] * dim),
        params=(('half', half),), conformal_factor=one)


def stereographic_chart(dim: int, half: float = 2.0) -> MetricChart:
    """Round unit sphere, ``g = 4/(1 + r2)^2 delta``."""
    lam2 = Num(4.0) / (Num(1.0) + R2()) ** Num(2.0)
    return MetricChart(
        name=f'stereoS{dim}', dim=dim, domain=_box(dim, half),
        g_entries=_diag_entries(dim, [lam2] * dim),
        params=(('half', half),), conformal_factor=lam2)


def _constant_curvature_factor(k: float, a: int, b: int) -> Expr:
    r2 = Var(a) ** Num(2.0) + Var(b) ** Num(2.0)
    return Num(4.0) / (Num(1.0) + Num(k) * r2) ** Num(2.0)


def biaxial_chart(k1: float = 1.0, k2: float = -1.0,
                  half: float = 0.5) -> MetricChart:
    """
    Product of two conformally flat surfaces of constant curvature ``k1``
    (coordinates ``x1, x2``) and ``k2`` (``x3, x4``).
    """
    if min(k1, k2) * 2.0 * half * half <= -1.0:
        raise _invalid(
            f'Bad biaxial chart: curvature {min(k1, k2)} degenerates on the '
            f'box of half-width {half}.')
    lam1 = _constant_curvature_factor(k1, 1, 2)
    lam2 = _constant_curvature_factor(k2, 3, 4)
    return MetricChart(
        name='biaxial4', dim=4, domain=_box(4, half),
        g_entries=_diag_entries(4, [lam1, lam1, lam2, lam2]),
        params=(('k1', k1), ('k2', k2), ('half', half)))


def user_chart(metric: Mapping[str, str], dim: int = 4,
               half: float = 1.0, name: str = 'userExpr') -> MetricChart:
    """
    Chart from expression strings.

    ``metric`` either has a single ``lambda2`` key (conformally flat) or
    ``gij`` keys with ``i <= j``; missing off-diagonal entries are zero.
    """
    if 'lambda2' in metric:
        extra = set(metric) - {'lambda2'}
        if extra:
            raise _invalid(
                f'Bad metric keys {sorted(extra)}: "lambda2" excludes '
                'component entries.')
        lam2 = parse(metric['lambda2'], dim)
        return MetricChart(
            name=name, dim=dim, domain=_box(dim, half),
            g_entries=_diag_entries(dim, [lam2] * dim),
            params=(('lambda2', metric['lambda2']),),
            conformal_factor=lam2)
    known = {f'g{i + 1}{j + 1}' for i in range(dim) for j in range(i, dim)}
    unknown = set(metric) - known
    if unknown:
        raise _invalid(
            f'Bad metric keys {sorted(unknown)}: expected names among '
            f'{sorted(known)}.')
    entries = [[Num(0.0)] * dim for _ in range(dim)]
    for i in range(dim):
        key = f'g{i + 1}{i + 1}'
        if key not in metric:
            raise _invalid(f'Bad metric: diagonal entry "{key}" missing.')
    for key, src in metric.items():
        i, j = int(key[1]) - 1, int(key[2]) - 1
        e = parse(src, dim)
        entries[i][j] = e
        entries[j][i] = e
    return MetricChart(
        name=name, dim=dim, domain=_box(dim, half),
        g_entries=tuple(tuple(row) for row in entries),
        params=tuple(sorted(metric.items())))


def random_poly_chart(seed: int = 20240117, scale: float = 0.1,
                      half: float = 0.5) -> MetricChart:
    """
    ``delta`` plus a small random symmetric polynomial of degree 3 in x.
    """
    rng = np.random.default_rng(seed)
    dim = 4
    xs = [Var(i + 1) for i in range(dim)]
    entries = [[None] * dim for _ in range(dim)]
    for i in range(dim):
        for j in range(i, dim):
            e = Num(1.0 if i == j else 0.0)
            for k in range(dim):
                e = e + Num(scale * rng.uniform(-1, 1)) * xs[k]
                e = e + Num(scale * rng.uniform(-1, 1)) * xs[k] ** Num(3.0)
                for m in range(k, dim):
                    e = e + Num(scale * rng.uniform(-1, 1)) * xs[k] * xs[m]
            entries[i][j] = e
            entries[j][i] = e
    return MetricChart(
        name='random_poly', dim=dim, domain=_box(dim, half),
        g_entries=tuple(tuple(row) for row in entries),
        params=(('seed', seed), ('scale', scale), ('half', half)))


CHARTS: Mapping[str, Callable[..., MetricChart]] = {
    'flat2': lambda **kw: flat_chart(2, **kw),
    'flat4': lambda **kw: flat_chart(4, **kw),
    'stereoS2': lambda **kw: stereographic_chart(2, **kw),
    'stereoS4': lambda **kw: stereographic_chart(4, **kw),
    'biaxial4': biaxial_chart,
    'userExpr': user_chart,
    'random_poly': random_poly_chart,
}


def make_chart(name: str, **params) -> MetricChart:
    try:
        factory = CHARTS[name]
    except KeyError:
        raise WorkbenchError(
            WorkbenchErrorCode.UnknownName,
            f'Unknown chart "{name}": valid names are '
            f'{", ".join(sorted(CHARTS))}.') from None
    try:
        return factory(**params)
    except TypeError as te:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad parameters {sorted(params)} for chart "{name}": {te}.'
        ) from te


# jets of tensors

def jet_inverse(m: Jet) -> Jet:
    """Inverse of a batch of matrix jets by a Neumann series."""
    m0inv = np.linalg.inv(m.value)
    delta = m - m.value
    a = einsum('...ij,...jk->...ik', m0inv, delta)
    term = m0inv
    result = Jet.constant(m0inv, m.basis)
    for _ in range(m.order):
        term = -einsum('...ij,...jk->...ik', a, term)
        result = result + term
    return result


def _trunc(j: Jet, order: int) -> Jet:
    return j if j.order == order else j.truncate(order)


def _as_batch(x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _out(value, single: bool):
    if isinstance(value, CurvOp):
        return value[0] if single else value
    value = np.asarray(value)
    if single:
        value = value[0]
        return float(value) if value.ndim == 0 else value
    return value


class Geometry:
    """
    Metric, connection and curvature jets at a batch of points.

    Orders: metric and inverse 3, Christoffels 2, curvature and Ricci 1.
    Orthonormal frames (rows, ``frame[..., a, i]``) come from
    Gram-Schmidt of the coordinate frame, i.e. the inverse Cholesky
    factor; they are positively oriented by construction.
    """

    def __init__(self, chart: MetricChart, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != chart.dim:
            raise _invalid(
                f'Bad points of shape {x.shape} for chart "{chart.name}" '
                f'of dimension {chart.dim}.')
        self.chart = chart
        self.x = x
        self.dim = chart.dim
        self.xs = coordinate_jets(x, JET_ORDER)
        self.basis = self.xs[0].basis
        try:
            self.g = chart.metric_jet(self.xs)
        except WorkbenchError as we:
            raise self._with_context(we) from we
        g0 = self.g.value
        smallest = np.linalg.eigvalsh(g0)[:, 0]
        if np.any(smallest <= MIN_EIGENVALUE):
            bad = int(np.argmin(smallest))
            raise WorkbenchError(
                WorkbenchErrorCode.DomainError,
                f'Bad metric on chart "{chart.name}": not positive definite '
                f'at {x[bad].tolist()} (smallest eigenvalue '
                f'{smallest[bad]:.3g}).')
        chol = np.linalg.cholesky(g0)
        self.frame = np.linalg.inv(chol)
        self.sqrt_det = np.prod(np.diagonal(chol, axis1=-2, axis2=-1), axis=-1)
        self.ginv = jet_inverse(self.g)

        dg = self.g.grad()
        low = 0.5 * (einsum('...jli->...lij', dg)
                     + einsum('...ilj->...lij', dg)
                     - einsum('...ijl->...lij', dg))
        self.gamma = einsum('...kl,...lij->...kij', _trunc(self.ginv, 2), low)
        self.dgamma = self.gamma.grad()
        gam = _trunc(self.gamma, 1)
        self.rstd = (einsum('...ljki->...lkij', self.dgamma)
                     - einsum('...likj->...lkij', self.dgamma)
                     + einsum('...lim,...mjk->...lkij', gam, gam)
                     - einsum('...ljm,...mik->...lkij', gam, gam))
        g1 = _trunc(self.g, 1)
        self.rdown = -einsum('...lm,...mkij->...ijkl', g1, self.rstd)
        self.ricci = einsum('...ikij->...jk', self.rstd)
        self.scalar = einsum(
            '...jk,...jk->...', _trunc(self.ginv, 1), self.ricci)

    def metric(self, order: int) -> Jet:
        return _trunc(self.g, order)

    def inverse(self, order: int) -> Jet:
        return _trunc(self.ginv, order)

    def christoffels(self, order: int) -> Jet:
        return _trunc(self.gamma, order)

    # scalar fields and covariant calculus

    def field(self, e: Expr) -> Jet:
        e._check_vars(self.dim)
        try:
            return e.jet_from(self.xs)
        except WorkbenchError as we:
            raise self._with_context(we) from we

    def _with_context(self, err: WorkbenchError) -> WorkbenchError:
        return err.with_context(
            f' (chart "{self.chart.name}" at {self.x.tolist()})')

    def raise_index(self, w: Jet) -> Jet:
        return einsum('...ij,...j->...i', self.inverse(w.order), w)

    def lower_index(self, v: Jet) -> Jet:
        return einsum('...ij,...j->...i', self.metric(v.order), v)

    def hessian(self, u: Jet) -> Jet:
        """Covariant Hessian ``d_i d_j u - Gamma^k_ij d_k u``."""
        du = u.grad()
        ddu = du.grad()
        return ddu - einsum(
            '...kij,...k->...ij', self.christoffels(ddu.order),
            _trunc(du, ddu.order))

    def laplacian(self, u: Jet) -> Jet:
        hess = self.hessian(u)
        return einsum('...ij,...ij->...', self.inverse(hess.order), hess)

    def gradient(self, u: Jet) -> Jet:
        return self.raise_index(u.grad())

    def divergence(self, v: Jet) -> Jet:
        """``d_i V^i + Gamma^i_ik V^k`` for a coordinate vector jet."""
        dv = v.grad()
        trace = einsum('...ii->...', dv)
        return trace + einsum(
            '...iik,...k->...', self.christoffels(dv.order),
            _trunc(v, dv.order))

    def covariant_bilinear(self, h: Jet) -> Jet:
        """``nabla_m H_ij``, derivative index last."""
        dh = h.grad()
        gam = self.christoffels(dh.order)
        h0 = _trunc(h, dh.order)
        return (dh
                - einsum('...pmi,...pj->...ijm', gam, h0)
                - einsum('...pmj,...ip->...ijm', gam, h0))

    def covariant_endo(self, a: Jet) -> Jet:
        """``nabla_m A^i_j`` for ``a[..., i, j]``, derivative index last."""
        da = a.grad()
        gam = self.christoffels(da.order)
        a0 = _trunc(a, da.order)
        return (da
                + einsum('...imk,...kj->...ijm', gam, a0)
                - einsum('...kmj,...ik->...ijm', gam, a0))

    def covariant_delta(self, s: Jet) -> Jet:
        """``nabla_m S^k_ij`` for ``s[..., i, j, k]``, derivative last."""
        ds = s.grad()
        gam = self.christoffels(ds.order)
        s0 = _trunc(s, ds.order)
        return (ds
                - einsum('...pmi,...pjk->...ijkm', gam, s0)
                - einsum('...pmj,...ipk->...ijkm', gam, s0)
                + einsum('...kmp,...ijp->...ijkm', gam, s0))

    # frame conversions (values only)

    def frame_vector(self, v) -> np.ndarray:
        """Frame components ``g(V, e_a)`` of a coordinate vector."""
        v = v.value if isinstance(v, Jet) else v
        return np.einsum('...ai,...ij,...j->...a', self.frame, self.g.value, v)

    def frame_covector(self, w) -> np.ndarray:
        w = w.value if isinstance(w, Jet) else w
        return np.einsum('...ai,...i->...a', self.frame, w)

    def frame_bilinear(self, b) -> np.ndarray:
        b = b.value if isinstance(b, Jet) else b
        return np.einsum('...ai,...bj,...ij->...ab', self.frame, self.frame, b)

    def frame_tensor4(self, t) -> np.ndarray:
        t = t.value if isinstance(t, Jet) else t
        e = self.frame
        return np.einsum(
            '...ai,...bj,...ck,...dl,...ijkl->...abcd', e, e, e, e, t)

    def frame_endo(self, a) -> np.ndarray:
        """Frame matrix ``A[b, a] = g(A e_a, e_b)`` of an endomorphism."""
        a = a.value if isinstance(a, Jet) else a
        low = np.einsum('...ij,...jk->...ik', self.g.value, a)
        return np.einsum('...bi,...ak,...ik->...ba', self.frame, self.frame, low)

    def curvature_operator(self) -> CurvOp:
        return CurvOp.from_tensor4(self.frame_tensor4(self.rdown))


def geometry(chart: MetricChart, x) -> Geometry:
    x, _ = _as_batch(x)
    return Geometry(chart, x)


class FramedPoint(NamedTuple):
    x: np.ndarray
    frame: np.ndarray
    christoffel: np.ndarray
    christoffel_jet: np.ndarray
    sqrt_det: float


def christoffel(chart: MetricChart, x) -> FramedPoint:
    """Levi-Civita connection and orthonormal frame at ``x``."""
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    return FramedPoint(
        x=_out(x, single),
        frame=_out(geo.frame, single),
        christoffel=_out(geo.gamma.value, single),
        christoffel_jet=_out(geo.dgamma.value, single),
        sqrt_det=_out(geo.sqrt_det, single))


def riemann_frame(chart: MetricChart, x):
    """
    Curvature operator in the orthonormal frame (dimension 4), or the
    Gauss curvature (dimension 2).
    """
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    if chart.dim == 2:
        return _out(geo.frame_tensor4(geo.rdown)[..., 0, 1, 0, 1], single)
    return _out(geo.curvature_operator(), single)


class ScalarCalc(NamedTuple):
    """
    Covariant calculus of a scalar field in the orthonormal frame.

    ``div_of`` maps coordinate vector components (expressions) to their
    divergence at the same point(s).
    """
    grad: np.ndarray
    hess: np.ndarray
    lap: np.ndarray
    div_of: Callable


def scalar_calc(chart: MetricChart, f, x) -> ScalarCalc:
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    fj = geo.field(_as_expr(f, chart.dim))
    hess = geo.hessian(fj)

    def div_of(components):
        comps = [_as_expr(c, chart.dim) for c in components]
        if len(comps) != chart.dim:
            raise _invalid(
                f'Bad vector field: {len(comps)} components for a chart of '
                f'dimension {chart.dim}.')
        v = stack([geo.field(c) for c in comps], axis=-1)
        return _out(geo.divergence(v).value, single)

    return ScalarCalc(
        grad=_out(geo.frame_covector(fj.grad()), single),
        hess=_out(geo.frame_bilinear(hess), single),
        lap=_out(geo.laplacian(fj).value, single),
        div_of=div_of)


def _as_expr(e, dim: int) -> Expr:
    if isinstance(e, Expr):
        return e
    if isinstance(e, str):
        return parse(e, dim)
    return Num(float(e))


class _Conformal:
    """Jets of ``f`` and the derived fields entering the conformal change."""

    def __init__(self, geo: Geometry, f: Expr):
        if geo.dim != 4:
            raise _invalid(
                f'Bad chart "{geo.chart.name}": conformal operators need '
                'dimension 4.')
        self.geo = geo
        self.f = geo.field(f)
        self.df = self.f.grad()
        self.grad = geo.raise_index(self.df)
        self.norm2 = einsum('...i,...i->...', self.df, self.grad)
        self.hess = geo.hessian(self.f)
        self.lap = einsum('...ij,...ij->...', geo.inverse(1), self.hess)

    def phi(self) -> Jet:
        """``1/2 (-1/4 |df|^2 g + 1/2 df df - Hess f)``, order 1."""
        geo = self.geo
        df = _trunc(self.df, 1)
        return 0.5 * (
            -0.25 * einsum('...,...ij->...ij', _trunc(self.norm2, 1),
                           geo.metric(1))
            + 0.5 * einsum('...i,...j->...ij', df, df)
            - self.hess)

    def p_vector(self) -> Jet:
        """``P(grad f)`` in coordinates, order 1."""
        geo = self.geo
        grad = _trunc(self.grad, 1)
        coeff = 2.0 * self.lap + _trunc(self.norm2, 1) - 2.0 * geo.scalar
        ric_sharp = einsum('...ik,...kj,...j->...i', geo.inverse(1),
                           geo.ricci, grad)
        return (einsum('...,...i->...i', coeff, grad)
                + 4.0 * ric_sharp
                - geo.gradient(self.norm2))


def conformal_phi(chart: MetricChart, f, x) -> np.ndarray:
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    conf = _Conformal(geo, _as_expr(f, chart.dim))
    return _out(geo.frame_bilinear(conf.phi().value), single)


def _q_operator(geo: Geometry, conf: _Conformal) -> CurvOp:
    phi = geo.frame_bilinear(conf.phi().value)
    phi = 0.5 * (phi + np.swapaxes(phi, -1, -2))
    eye = np.broadcast_to(np.eye(4), phi.shape)
    return geo.curvature_operator() + kulkarni_nomizu(phi, eye)


def conformal_curvature(chart: MetricChart, f, x) -> CurvOp:
    """
    ``Q = R + phi . g`` in the g-orthonormal frame.

    The curvature operator of ``e^f g`` in its own orthonormal frame is
    ``e^{-f} Q``.
    """
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    conf = _Conformal(geo, _as_expr(f, chart.dim))
    return _out(_q_operator(geo, conf), single)


def p_operator(chart: MetricChart, f, x) -> np.ndarray:
    """
    ``(2 lap f + |grad f|^2 - 2 s) grad f + 4 Ric(grad f) - grad |grad f|^2``
    in the orthonormal frame.
    """
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    conf = _Conformal(geo, _as_expr(f, chart.dim))
    return _out(geo.frame_vector(conf.p_vector()), single)


def p_divergence(chart: MetricChart, f, x):
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    conf = _Conformal(geo, _as_expr(f, chart.dim))
    return _out(geo.divergence(conf.p_vector()).value, single)


def prop11_residual(chart: MetricChart, f, x):
    """
    Pointwise residuals of the conformal change of the Euler and first
    Pontrjagin densities: ``{'euler': ..., 'p1': ...}``.
    """
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    conf = _Conformal(geo, _as_expr(f, chart.dim))
    r = geo.curvature_operator()
    q = _q_operator(geo, conf)
    div_p = geo.divergence(conf.p_vector()).value
    euler = np.abs(euler_form(q) - euler_form(r) - div_p / THIRTY_TWO_PI2)
    p1 = np.abs(pontrjagin_form(q) - pontrjagin_form(r))
    _LOG.debug('conformal residuals on %s: euler %.3g, p1 %.3g',
               chart.name, float(np.max(euler)), float(np.max(p1)))
    return {'euler': _out(euler, single), 'p1': _out(p1, single)}


def conformal_identities(chart: MetricChart, f, x):
    """
    Residuals of the pointwise identities behind the conformal change:

    * ``bochner``: ``div Hess f - Ric(grad f) - d lap f``
    * ``laplace_norm``: ``1/2 lap|df|^2 - |Hess|^2 - <df, d lap f> - Ric(df, df)``
    * ``div_norm``: ``div(|df|^2 grad f) - |df|^2 lap f - 2 Hess(df, df)``
    * ``ricci_hess``: ``<Ric, Hess> - 1/2 s lap f - div(-1/2 s grad f + Ric(grad f))``
    * ``phi_square``: ``tr(phi)^2 - |phi|^2 - 1/8 div(...) - 1/4 Ric(df, df)``
    * ``phi_trace``: ``tr phi + 1/4 |df|^2 + 1/2 lap f``
    """
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    conf = _Conformal(geo, _as_expr(f, chart.dim))
    ginv0 = geo.ginv.value
    ric = geo.ricci.value
    s = geo.scalar
    grad0 = conf.grad.value

    nabla_hess = geo.covariant_bilinear(conf.hess).value
    div_hess = np.einsum('...jk,...ijk->...i', ginv0, nabla_hess)
    dlap = conf.lap.grad().value
    bochner = div_hess - np.einsum('...ij,...j->...i', ric, grad0) - dlap

    hess0 = conf.hess.value
    hess_norm2 = np.einsum(
        '...ia,...jb,...ij,...ab->...', ginv0, ginv0, hess0, hess0)
    ric_ff = np.einsum('...ij,...i,...j->...', ric, grad0, grad0)
    laplace_norm = (0.5 * geo.laplacian(conf.norm2).value - hess_norm2
                    - np.einsum('...i,...i->...', grad0, dlap) - ric_ff)

    norm2_1 = _trunc(conf.norm2, 1)
    grad1 = _trunc(conf.grad, 1)
    v = einsum('...,...i->...i', norm2_1, grad1)
    div_norm = (geo.divergence(v).value - conf.norm2.value * conf.lap.value
                - 2.0 * np.einsum('...ij,...i,...j->...', hess0, grad0, grad0))

    ric_hess = np.einsum(
        '...ia,...jb,...ij,...ab->...', ginv0, ginv0, ric, hess0)
    w = (einsum('...,...i->...i', -0.5 * geo.scalar, grad1)
         + einsum('...ik,...kj,...j->...i', geo.inverse(1), geo.ricci, grad1))
    ricci_hess = (ric_hess - 0.5 * s.value * conf.lap.value
                  - geo.divergence(w).value)

    phi = conf.phi().value
    phi_mixed = np.einsum('...ik,...kj->...ij', ginv0, phi)
    tr_phi = np.einsum('...ii->...', phi_mixed)
    phi_norm2 = np.einsum('...ij,...ji->...', phi_mixed, phi_mixed)
    u = (einsum('...,...i->...i', 2.0 * conf.lap + norm2_1, grad1)
         - geo.gradient(conf.norm2))
    phi_square = (tr_phi ** 2 - phi_norm2 - geo.divergence(u).value / 8.0
                  - 0.25 * ric_ff)
    phi_trace = tr_phi + 0.25 * conf.norm2.value + 0.5 * conf.lap.value

    checks = {
        'bochner': np.max(np.abs(bochner), axis=-1),
        'laplace_norm': np.abs(laplace_norm),
        'div_norm': np.abs(div_norm),
        'ricci_hess': np.abs(ricci_hess),
        'phi_square': np.abs(phi_square),
        'phi_trace': np.abs(phi_trace),
    }
    return {k: _out(v, single) for k, v in checks.items()}


def gauss2d(chart: MetricChart, x):
    """Gauss curvature ``-lap0 log(lambda2) / (2 lambda2)`` of ``lambda2 delta``."""
    if chart.dim != 2:
        raise _invalid(
            f'Bad chart "{chart.name}": gauss2d needs dimension 2.')
    x, single = _as_batch(x)
    lam2 = chart.conformal_factor
    if lam2 is None:
        g = chart.metric_value(x)
        defect = np.max(np.abs(g[..., 0, 0] - g[..., 1, 1])
                        + np.abs(g[..., 0, 1]))
        if defect > 1e-12:
            raise _invalid(
                f'Bad chart "{chart.name}": not conformal to the flat '
                f'metric (defect {defect:.3g}).')
        lam2 = chart.g_entries[0][0]
    xs = coordinate_jets(x, 2)
    try:
        lj = lam2.jet_from(xs)
        ddlog = lj.log().grad().grad().value
    except WorkbenchError as we:
        raise we.with_context(
            f' (chart "{chart.name}" at {x.tolist()})') from we
    lap0 = ddlog[..., 0, 0] + ddlog[..., 1, 1]
    return _out(-lap0 / (2.0 * lj.value), single)


# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """
    Nodes and positive weights. ``degree`` is the total polynomial
    degree integrated exactly; ``normals`` is set on boundary rules.
    """
    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    degree: int
    normals: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise _invalid(f'Bad {self.kind} rule: non-positive weight.')
        if len(self.nodes) != len(self.weights):
            raise _invalid(
                f'Bad {self.kind} rule: {len(self.nodes)} nodes and '
                f'{len(self.weights)} weights.')

    def __len__(self):
        return len(self.weights)


def _check_nodes(n: int, what: str = 'nodes'):
    if int(n) != n or n < 1:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad number of {what} {n!r}: must be a positive integer.')


def _gauss_legendre(a: float, b: float, n: int):
    _check_nodes(n)
    t, w = special.roots_legendre(n)
    return 0.5 * (b - a) * t + 0.5 * (b + a), 0.5 * (b - a) * w


def interval_rule(a: float, b: float, n: int = 16) -> QuadratureRule:
    t, w = _gauss_legendre(a, b, n)
    return QuadratureRule('interval', t[:, None], w, 2 * n - 1)


def box_rule(box, n: int = 16) -> QuadratureRule:
    """Tensor Gauss-Legendre rule, ``n`` nodes per axis."""
    box = np.asarray(box, dtype=float)
    axes = [_gauss_legendre(lo, hi, n) for lo, hi in box]
    grids = np.meshgrid(*[a[0] for a in axes], indexing='ij')
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing='ij')
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    return QuadratureRule('box', nodes, weights, 2 * n - 1)


def box_boundary_rule(box, n: int = 16) -> QuadratureRule:
    """Gauss-Legendre on each face of a box, outward normals."""
    box = np.asarray(box, dtype=float)
    dim = len(box)
    nodes, weights, normals = [], [], []
    for k in range(dim):
        rest = np.delete(box, k, axis=0)
        face = box_rule(rest, n)
        for side, sign in ((0, -1.0), (1, 1.0)):
            pts = np.insert(face.nodes, k, box[k, side], axis=1)
            nu = np.zeros((len(pts), dim))
            nu[:, k] = sign
            nodes.append(pts)
            weights.append(face.weights)
            normals.append(nu)
    return QuadratureRule(
        'box_boundary', np.concatenate(nodes), np.concatenate(weights),
        2 * n - 1, np.concatenate(normals))


def circle_rule(n: int = 64, radius: float = 1.0,
                center=(0.0, 0.0)) -> QuadratureRule:
    """Trapezoid rule on a circle; exact for trigonometric degree < n."""
    _check_nodes(n)
    theta = 2.0 * np.pi * np.arange(n) / n
    normals = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    nodes = np.asarray(center, dtype=float) + radius * normals
    weights = np.full(n, 2.0 * np.pi * radius / n)
    return QuadratureRule('circle', nodes, weights, n - 1, normals)


def disk_rule(radius: float = 1.0, radial: int = 16, angular: int = 64,
              center=(0.0, 0.0)) -> QuadratureRule:
    r, wr = _gauss_legendre(0.0, radius, radial)
    circ = circle_rule(angular)
    nodes = (np.asarray(center, dtype=float)
             + r[:, None, None] * circ.normals[None, :, :]).reshape(-1, 2)
    weights = (wr[:, None] * r[:, None] * (2.0 * np.pi / angular)
               * np.ones((1, angular))).ravel()
    return QuadratureRule(
        'disk', nodes, weights, min(2 * radial - 2, angular - 1))


def sphere3_rule(n: int = 16, radius: float = 1.0,
                 center=(0.0, 0.0, 0.0, 0.0)) -> QuadratureRule:
    """
    Product rule on the 3-sphere ``{|x - center| = radius}``.

    Points ``(sqrt(1-s) cos a, sqrt(1-s) sin a, sqrt(s) cos b, sqrt(s) sin b)``
    with Gauss-Legendre in ``s`` and the trapezoid rule in ``a`` and ``b``.
    """
    _check_nodes(n)
    s, ws = _gauss_legendre(0.0, 1.0, n)
    ang = 2.0 * np.pi * np.arange(n) / n
    S, A, B = np.meshgrid(s, ang, ang, indexing='ij')
    W = np.broadcast_to(ws[:, None, None], S.shape)
    c, d = np.sqrt(1.0 - S), np.sqrt(S)
    normals = np.stack(
        [c * np.cos(A), c * np.sin(A), d * np.cos(B), d * np.sin(B)],
        axis=-1).reshape(-1, 4)
    weights = (0.5 * W * (2.0 * np.pi / n) ** 2 * radius ** 3).ravel()
    nodes = np.asarray(center, dtype=float) + radius * normals
    return QuadratureRule('sphere3', nodes, weights, n - 1, normals)


def ball_rule(radius: float = 1.0, radial: int = 16, angular: int = 16,
              center=(0.0, 0.0, 0.0, 0.0), inner: float = 0.0
              ) -> QuadratureRule:
    """
    Radial Gauss-Legendre on ``[inner, radius]`` times the unit 3-sphere
    rule. With ``inner > 0`` this is a spherical shell.
    """
    if not 0.0 <= inner < radius:
        raise _invalid(
            f'Bad ball radii: need 0 <= inner < radius, got {inner} and '
            f'{radius}.')
    r, wr = _gauss_legendre(inner, radius, radial)
    unit = sphere3_rule(angular)
    nodes = (np.asarray(center, dtype=float)
             + r[:, None, None] * unit.normals[None, :, :]).reshape(-1, 4)
    weights = ((wr * r ** 3)[:, None] * unit.weights[None, :]).ravel()
    return QuadratureRule(
        'ball', nodes, weights, min(2 * radial - 4, angular - 1))


def volume_density(chart: MetricChart, nodes) -> np.ndarray:
    g = chart.metric_value(np.atleast_2d(nodes))
    eig = np.linalg.eigvalsh(g)
    if np.any(eig[:, 0] <= MIN_EIGENVALUE):
        bad = int(np.argmin(eig[:, 0]))
        raise WorkbenchError(
            WorkbenchErrorCode.DomainError,
            f'Bad metric on chart "{chart.name}": not positive definite at '
            f'{np.atleast_2d(nodes)[bad].tolist()}.')
    return np.sqrt(np.linalg.det(g))


def _sample(rule: QuadratureRule, integrand) -> np.ndarray:
    if callable(integrand):
        values = np.asarray(integrand(rule.nodes), dtype=float)
    else:
        values = np.asarray(integrand, dtype=float)
    values = np.broadcast_to(values, rule.weights.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise WorkbenchError(
            WorkbenchErrorCode.DomainError,
            f'Bad integrand: non-finite value {values[i]!r} at node '
            f'{rule.nodes[i].tolist()}.')
    return values


def map_chunks(fn: Callable[[np.ndarray], np.ndarray], items: np.ndarray,
               chunk: int, workers: int = 1) -> np.ndarray:
    """
    ``fn`` over consecutive slices of at most ``chunk`` rows of ``items``,
    concatenated in slice order.

    With ``workers > 1`` the slices run on a thread pool. The numpy
    kernels release the GIL, and the result is the same array whatever
    the number of workers, so sums taken over it stay bit-identical.
    """
    if workers < 1:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad worker count {workers!r}: must be at least 1.')
    slices = [items[i:i + chunk] for i in range(0, len(items), chunk)]
    if len(slices) <= 1:
        return fn(items)
    if workers == 1:
        parts = [fn(s) for s in slices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, slices))
    return np.concatenate(parts)


def integrate(rule: QuadratureRule, integrand,
              chart: Optional[MetricChart] = None) -> float:
    """
    ``sum w_i f(x_i)``. With a chart, volume rules (box, ball, disk,
    interval) include the density ``sqrt(det g)``.

    ``integrand`` is a vectorized callable of the node array, or the
    values at the nodes. The sum uses numpy's pairwise summation in node
    order.
    """
    values = _sample(rule, integrand)
    if chart is not None and rule.kind in ('box', 'ball', 'disk', 'interval'):
        values = values * volume_density(chart, rule.nodes)
    return float(np.sum(rule.weights * values))


def dump_csv(rule: QuadratureRule, integrand, path) -> None:
    """Write nodes, weights and integrand values as CSV (needs pandas)."""
    try:
        import pandas as pd
    except ImportError as ie:
        raise WorkbenchError(
            WorkbenchErrorCode.OutputError,
            'CSV quadrature dumps need pandas: '
            'pip install "curvlab[dataframe]".') from ie
    values = _sample(rule, integrand)
    columns = {f'x{i + 1}': rule.nodes[:, i]
               for i in range(rule.nodes.shape[1])}
    columns['weight'] = rule.weights
    columns['integrand'] = values
    try:
        pd.DataFrame(columns).to_csv(path, index=False, float_format='%.17g')
    except OSError as oe:
        raise WorkbenchError(
            WorkbenchErrorCode.OutputError,
            f'Could not write quadrature dump to "{path}": {oe}.') from oe
