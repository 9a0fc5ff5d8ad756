"""
Almost complex structures on a chart.

An :class:`ACSField` holds the coordinate matrix ``J^a_b`` of an almost
complex structure as expressions. Outputs are in the orthonormal frame
of the chart: 2-forms as bivectors, 1-forms as frame covectors.

Endomorphism pairings are named:

* ``'skew'``: ``tr(A^T B)``, the usual inner product of ``Skew(TM)``
* ``'lambda2'``: half of it, matching the inner product of 2-forms
* ``'unit'``: a quarter of it, so that ``<J, J> = 1``
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, NamedTuple, Sequence

import numpy as np

from .alg4 import (
    J1, J2, J3, PAIRS, CurvOp, endo_to_bivector, inner, sd_split,
    wedge_density)
from .chartgeom import (
    Geometry, MetricChart, _as_batch, _as_expr, _out, _trunc, geometry)
from .curvops import FOUR_PI2, euler_form, pontrjagin_form
from .errors import WorkbenchError, WorkbenchErrorCode
from .exprfield import BinOp, Expr, Jet, Num, cos, einsum, sin, sqrt, stack
from .transgression import ConnectionDeltaField, _modified

__all__ = [
    'ACSField', 'AcsDefects', 'AnglePair', 'HermitianDelta', 'EtaC1',
    'TransgressionOneForms', 'PAIRINGS', 'ACS_PRESETS', 'constant_acs',
    'standard_acs', 'conjugated_acs', 'quaternion_acs', 'make_acs',
    'validate_acs', 'angle_and_h', 'homotopy_jt', 'hermitian_connection',
    'hermitian_delta', 'eta_and_c1', 'ec1_fd', 'ttilde_g',
    'chern_difference_residual', 'thm12_densities', 'chern_product_density',
    'kahler_identities', 'ANTI_COMPLEX_GUARD']

_LOG = logging.getLogger(__name__)

ACS_TOL = 1e-9
ANTI_COMPLEX_GUARD = 1e-6
FRAME_GUARD = 1e-6
TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi

PAIRINGS: Mapping[str, float] = {'skew': 1.0, 'lambda2': 0.5, 'unit': 0.25}

_PA = np.array([p[0] for p in PAIRS])
_PB = np.array([p[1] for p in PAIRS])


def _invalid(msg: str) -> WorkbenchError:
    return WorkbenchError(WorkbenchErrorCode.InvalidInput, msg)


def _pairing(name: str) -> float:
    try:
        return PAIRINGS[name]
    except KeyError:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Unknown pairing "{name}": valid names are '
            f'{", ".join(sorted(PAIRINGS))}.') from None


@dataclass(frozen=True)
class ACSField:
    """Coordinate matrix ``components[a][b] = J^a_b`` as expressions."""
    name: str
    components: tuple
    parallel_claimed: bool = False

    def __post_init__(self):
        if (len(self.components) != 4
                or any(len(row) != 4 for row in self.components)):
            raise _invalid(f'Bad almost complex structure "{self.name}": '
                           'expected 4x4 components.')
        comps = tuple(tuple(_as_expr(e, 4) for e in row)
                      for row in self.components)
        object.__setattr__(self, 'components', comps)

    def jet(self, geo: Geometry) -> Jet:
        rows = [stack([geo.field(e) for e in row], axis=-1)
                for row in self.components]
        return stack(rows, axis=-2)

    def values(self, chart: MetricChart, x) -> np.ndarray:
        x, single = _as_batch(x)
        return _out(self.jet(geometry(chart, x)).value, single)


def constant_acs(matrix, name: str = 'constant',
                 parallel_claimed: bool = True) -> ACSField:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (4, 4):
        raise _invalid(f'Bad matrix of shape {m.shape}: expected (4, 4).')
    return ACSField(name, tuple(tuple(Num(float(v)) for v in row)
                                for row in m), parallel_claimed)


def standard_acs(index: int = 1) -> ACSField:
    """The constant structures ``J1``, ``J2``, ``J3`` in coordinates."""
    try:
        m = {1: J1, 2: J2, 3: J3}[index]
    except KeyError:
        raise _invalid(f'Bad structure index {index}: must be 1, 2 or 3.') \
            from None
    return constant_acs(m, f'J{index}')


def _matmul_exprs(a, b):
    return tuple(
        tuple(_sum_exprs([a[i][k] * b[k][j] for k in range(4)])
              for j in range(4))
        for i in range(4))


def _sum_exprs(terms: Sequence[Expr]) -> Expr:
    nonzero = [t for t in terms if not _is_zero(t)]
    if not nonzero:
        return Num(0.0)
    total = nonzero[0]
    for t in nonzero[1:]:
        total = total + t
    return total


def _is_zero(e: Expr) -> bool:
    if isinstance(e, Num):
        return e.value == 0.0
    if isinstance(e, BinOp) and e.op == '*':
        return _is_zero(e.left) or _is_zero(e.right)
    return False


def _const_exprs(m):
    return tuple(tuple(Num(float(v)) for v in row) for row in m)


def conjugated_acs(angle, plane=(0, 2), base: int = 1) -> ACSField:
    """
    ``Q J Q^T`` with ``Q(x)`` the rotation by ``angle(x)`` in a coordinate
    plane. Orthogonal on conformally flat charts.
    """
    a, b = plane
    if not (0 <= a < 4 and 0 <= b < 4 and a != b):
        raise _invalid(f'Bad rotation plane {plane}.')
    angle = _as_expr(angle, 4)
    zero, one = Num(0.0), Num(1.0)
    q = [[one if i == j else zero for j in range(4)] for i in range(4)]
    q[a][a] = cos(angle)
    q[b][b] = cos(angle)
    q[a][b] = -sin(angle)
    q[b][a] = sin(angle)
    qt = [[q[j][i] for j in range(4)] for i in range(4)]
    base_j = _const_exprs({1: J1, 2: J2, 3: J3}[base])
    comps = _matmul_exprs(_matmul_exprs(q, base_j), qt)
    return ACSField(f'conj({angle})', comps)


def quaternion_acs(a, b) -> ACSField:
    """
    ``sqrt(1 - a^2 - b^2) J1 + a J2 + b J3`` for expressions ``a``, ``b``
    with ``a^2 + b^2 < 1``; its Kahler form makes the angle
    ``cos = sqrt(1 - a^2 - b^2)`` with ``J1``.
    """
    a, b = _as_expr(a, 4), _as_expr(b, 4)
    c = sqrt(Num(1.0) - a * a - b * b)
    comps = tuple(
        tuple(_sum_exprs([c * Num(float(J1[i, j])) if J1[i, j] else Num(0.0),
                          a * Num(float(J2[i, j])) if J2[i, j] else Num(0.0),
                          b * Num(float(J3[i, j])) if J3[i, j] else Num(0.0)])
              for j in range(4))
        for i in range(4))
    return ACSField(f'quaternion({a}, {b})', comps)


ACS_PRESETS: Mapping[str, Callable[..., ACSField]] = {
    'J1': lambda: standard_acs(1),
    'J2': lambda: standard_acs(2),
    'J3': lambda: standard_acs(3),
    'conjugated': conjugated_acs,
    'quaternion': quaternion_acs,
}


def make_acs(name: str, **params) -> ACSField:
    try:
        factory = ACS_PRESETS[name]
    except KeyError:
        raise WorkbenchError(
            WorkbenchErrorCode.UnknownName,
            f'Unknown almost complex structure "{name}": valid names are '
            f'{", ".join(sorted(ACS_PRESETS))}.') from None
    try:
        return factory(**params)
    except TypeError as te:
        raise WorkbenchError(
            WorkbenchErrorCode.ConfigError,
            f'Bad parameters {sorted(params)} for structure "{name}": '
            f'{te}.') from te


# jets of a structure and its derived fields

def _frame_2form(geo: Geometry, f) -> np.ndarray:
    f = f.value if isinstance(f, Jet) else f
    return geo.frame_bilinear(f)[..., _PA, _PB]


def _hs(geo: Geometry, a: Jet, b: Jet, order: int, extra: str = '') -> Jet:
    """``g_ac g^bd A^a_b B^c_d`` with optional trailing derivative axes."""
    ea = 'abm' if 'm' in extra else 'ab'
    eb = 'cdn' if 'n' in extra else 'cd'
    out = ''.join(c for c in 'mn' if c in extra)
    return einsum(f'...ac,...bd,...{ea},...{eb}->...{out}',
                  geo.metric(order), geo.inverse(order),
                  _trunc(a, order), _trunc(b, order))


class _AcsJets:
    """Jets of ``J``, ``nabla J`` and ``omega_J`` at a batch of points."""

    def __init__(self, geo: Geometry, acs: ACSField):
        if geo.dim != 4:
            raise _invalid(
                f'Bad chart "{geo.chart.name}": almost complex structures '
                'need dimension 4.')
        self.geo = geo
        self.acs = acs
        self.j = acs.jet(geo)
        self.nabla = geo.covariant_endo(self.j)
        self.omega = einsum('...kj,...ki->...ij', geo.metric(3), self.j)
        self.nabla_omega = geo.covariant_bilinear(self.omega)

    def frame_j(self) -> np.ndarray:
        return self.geo.frame_endo(self.j)

    def frame_omega(self) -> np.ndarray:
        return _frame_2form(self.geo, self.omega)

    def eta(self) -> Jet:
        """``1/4 <J nabla_m J, nabla_n J>`` with the usual pairing, order 2."""
        j2 = _trunc(self.j, 2)
        jnab = einsum('...ap,...pbm->...abm', j2, self.nabla)
        return 0.25 * _hs(self.geo, jnab, self.nabla, 2, 'mn')

    def ricci_j(self) -> Jet:
        """``<R(d_m ^ d_n), omega_J>``, order 1."""
        geo = self.geo
        ginv = geo.inverse(1)
        up = einsum('...ka,...lb,...ab->...kl', ginv, ginv,
                    _trunc(self.omega, 1))
        return 0.5 * einsum('...mnkl,...kl->...mn', geo.rdown, up)

    def c1(self) -> Jet:
        return (self.ricci_j() + _trunc(self.eta(), 1)) * (1.0 / TWO_PI)

    def nabla_omega_norm2(self) -> np.ndarray:
        ginv = self.geo.ginv.value
        nab = self.nabla_omega.value
        return 0.5 * np.einsum('...im,...ac,...bd,...abi,...cdm->...',
                               ginv, ginv, ginv, nab, nab)


class AcsDefects(NamedTuple):
    square: float
    orthogonality: float
    anti_self_dual: float
    orientation: int


def validate_acs(chart: MetricChart, acs: ACSField, x):
    """``|J^2 + I|``, ``|J^T g J - g|``, the anti-self-dual part of
    ``omega_J`` and the orientation sign, per point."""
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    j = acs.jet(geo).value
    g = geo.g.value
    eye = np.eye(4)
    square = np.max(np.abs(j @ j + eye), axis=(-1, -2))
    orth = np.max(np.abs(np.swapaxes(j, -1, -2) @ g @ j - g), axis=(-1, -2))
    omega = endo_to_bivector(geo.frame_endo(j))
    plus, minus = sd_split(omega)
    anti = np.max(np.abs(minus), axis=-1)
    orientation = np.where(
        np.linalg.norm(plus, axis=-1) >= np.linalg.norm(minus, axis=-1), 1, -1)
    if single:
        return AcsDefects(float(square[0]), float(orth[0]), float(anti[0]),
                          int(orientation[0]))
    return AcsDefects(square, orth, anti, orientation)


def _require_acs(chart: MetricChart, acs: ACSField, x) -> None:
    d = validate_acs(chart, acs, np.atleast_2d(x))
    worst = max(float(np.max(d.square)), float(np.max(d.orthogonality)),
                float(np.max(d.anti_self_dual)))
    if worst > ACS_TOL:
        raise _invalid(
            f'Bad almost complex structure "{acs.name}" on chart '
            f'"{chart.name}": defect {worst:.3g} > {ACS_TOL:g} (needs '
            'J^2 = -I, g-orthogonal and positive).')


class AnglePair(NamedTuple):
    """``omega_1 = cos_theta omega_0 + h_tilde`` in the frame."""
    cos_theta: np.ndarray
    h_tilde: np.ndarray


def angle_and_h(chart: MetricChart, j0: ACSField, j1: ACSField, x):
    x, single = _as_batch(x)
    _require_acs(chart, j0, x)
    _require_acs(chart, j1, x)
    geo = geometry(chart, x)
    w0 = endo_to_bivector(geo.frame_endo(j0.jet(geo)))
    w1 = endo_to_bivector(geo.frame_endo(j1.jet(geo)))
    cos_t = np.clip(0.5 * inner(w0, w1), -1.0, 1.0)
    h = w1 - cos_t[..., None] * w0
    return AnglePair(_out(cos_t, single), _out(h, single))


def homotopy_jt(chart: MetricChart, j0: ACSField, j1: ACSField, x, t: float,
                guard: float = ANTI_COMPLEX_GUARD) -> np.ndarray:
    """
    ``J_t = cos(t) J0 + H(t)`` in coordinates with
    ``cos(t) = 1 - t (1 - cos)`` and
    ``H(t) = sqrt(t (2 - t (1 - cos)) / (1 + cos)) H``.
    """
    if not 0.0 <= t <= 1.0:
        raise _invalid(f'Bad homotopy parameter {t!r}: must lie in [0, 1].')
    x, single = _as_batch(x)
    _require_acs(chart, j0, x)
    _require_acs(chart, j1, x)
    geo = geometry(chart, x)
    a0 = j0.jet(geo).value
    a1 = j1.jet(geo).value
    cos_t = _cos_theta_values(geo, a0, a1)
    _guard_anti_complex(geo, cos_t, guard)
    h = a1 - cos_t[..., None, None] * a0
    c = 1.0 - t * (1.0 - cos_t)
    scale = np.sqrt(np.maximum(t * (2.0 - t * (1.0 - cos_t)), 0.0)
                    / (1.0 + cos_t))
    return _out(c[..., None, None] * a0 + scale[..., None, None] * h, single)


def _cos_theta_values(geo: Geometry, a0: np.ndarray, a1: np.ndarray):
    g = geo.g.value
    ginv = geo.ginv.value
    hs = np.einsum('...ac,...bd,...ab,...cd->...', g, ginv, a0, a1)
    return np.clip(0.25 * hs, -1.0, 1.0)


def _guard_anti_complex(geo: Geometry, cos_t, guard: float) -> None:
    cos_t = np.asarray(cos_t)
    if np.any(cos_t <= -1.0 + guard):
        bad = int(np.argmin(cos_t))
        raise WorkbenchError(
            WorkbenchErrorCode.SingularSet,
            f'Bad point {geo.x[bad].tolist()}: anti-complex within '
            f'{guard:g} (cos theta = {float(cos_t.flat[bad]):.6g}).')


# canonical Hermitian connection

def hermitian_connection(acs: ACSField) -> ConnectionDeltaField:
    """The delta ``S(X, Y) = -1/2 J (nabla_X J)(Y)``."""
    def build(geo: Geometry) -> Jet:
        jets = _AcsJets(geo, acs)
        return -0.5 * einsum('...kp,...pji->...ijk', _trunc(jets.j, 2),
                             jets.nabla)
    return ConnectionDeltaField(f'hermitian({acs.name})', build, True)


class HermitianDelta(NamedTuple):
    """
    ``s[..., i, j, k] = S^k_ij`` and torsion ``T^k_ij`` in coordinates,
    with the largest entries of ``nabla~ J``, of ``T + 1/2 J dJ`` and of
    the (1,1) part ``1/2 (T(X, Y) + T(JX, JY))``.
    """
    s: np.ndarray
    torsion: np.ndarray
    parallel_defect: np.ndarray
    torsion_defect: np.ndarray
    torsion_11: np.ndarray


def hermitian_delta(chart: MetricChart, acs: ACSField, x) -> HermitianDelta:
    x, single = _as_batch(x)
    geo = geometry(chart, x)
    jets = _AcsJets(geo, acs)
    j = jets.j.value
    nab = jets.nabla.value
    s = hermitian_connection(acs).jet(geo).value
    torsion = s - np.swapaxes(s, -2, -3)
    # nabla~_i J = nabla_i J + [S_i, J]
    s_i = np.einsum('...ijk->...ikj', s)
    comm = (np.einsum('...ikp,...pj->...kji', s_i, j)
            - np.einsum('...kp,...ipj->...kji', j, s_i))
    parallel = np.max(np.abs(nab + comm), axis=(-1, -2, -3))
    dj = (np.einsum('...kjm->...mjk', nab)
          - np.einsum('...kjm->...jmk', nab))
    expected = -0.5 * np.einsum('...kp,...ijp->...ijk', j, dj)
    torsion_defect = np.max(np.abs(torsion - expected), axis=(-1, -2, -3))
    t_jj = np.einsum('...ai,...bj,...abk->...ijk', j, j, torsion)
    t11 = np.max(np.abs(0.5 * (torsion + t_jj)), axis=(-1, -2, -3))
    return HermitianDelta(
        s=_out(s, single), torsion=_out(torsion, single),
        parallel_defect=_out(parallel, single),
        torsion_defect=_out(torsion_defect, single),
        torsion_11=_out(t11, single))


# first Chern form

def _vec_const(geo: Geometry, k: int) -> Jet:
    v = np.zeros(geo.x.shape[:1] + (4,))
    v[..., k] = 1.0
    return Jet.constant(v, geo.basis)


def _dot(geo: Geometry, v: Jet, w: Jet) -> Jet:
    return einsum('...ij,...i,...j->...', geo.metric(v.order), v, w)


def _unit(geo: Geometry, v: Jet) -> Jet:
    return einsum('...i,...->...i', v, _dot(geo, v, v).real_power(-0.5))


def _where(mask: np.ndarray, a: Jet, b: Jet) -> Jet:
    """Per point: ``b`` where ``mask`` is set, else ``a``."""
    m = mask.reshape(mask.shape + (1,) * (a.coef.ndim - mask.ndim))
    return Jet(np.where(m, b.coef, a.coef), a.basis)


def _ej_frame(geo: Geometry, j: Jet):
    """
    Unit frame ``(sigma2, sigma3)`` of ``E_J`` as coordinate 2-forms, from
    the adapted frame ``(u, Ju, v, Jv)`` with ``u`` along ``d_1`` and
    ``v`` from ``d_2`` (``d_3`` where ``d_2`` nearly lies in
    ``span(u, Ju)``).
    """
    e1 = _unit(geo, _vec_const(geo, 0))
    e2 = einsum('...ij,...j->...i', j, e1)

    def residual(k: int) -> Jet:
        d = _vec_const(geo, k)
        return (d - einsum('...,...i->...i', _dot(geo, d, e1), e1)
                - einsum('...,...i->...i', _dot(geo, d, e2), e2))

    cand, alt = residual(1), residual(2)
    degenerate = np.sqrt(np.abs(_dot(geo, cand, cand).value)) < FRAME_GUARD
    e3 = _unit(geo, _where(degenerate, cand, alt))
    e4 = einsum('...ij,...j->...i', j, e3)
    g = geo.metric(3)
    f1, f2, f3, f4 = [einsum('...ij,...j->...i', g, e)
                      for e in (e1, e2, e3, e4)]

    def wedge(a: Jet, b: Jet) -> Jet:
        return (einsum('...i,...j->...ij', a, b)
                - einsum('...j,...i->...ij', a, b))

    root = 1.0 / np.sqrt(2.0)
    sigma2 = (wedge(f1, f3) - wedge(f2, f4)) * root
    sigma3 = (wedge(f1, f4) + wedge(f2, f3)) * root
    return sigma2, sigma3


def _bundle_form(geo: Geometry, j: Jet) -> Jet:
    """Connection 1-form ``a_m = <nabla_m sigma2, sigma3>`` of ``E_J``."""
    sigma2, sigma3 = _ej_frame(geo, j)
    nab = geo.covariant_bilinear(sigma2)
    ginv = geo.inverse(2)
    return 0.5 * einsum('...ac,...bd,...abm,...cd->...m', ginv, ginv, nab,
                        _trunc(sigma3, 2))


def _exterior(a: Jet) -> Jet:
    """``(da)_mn = d_m a_n - d_n a_m``."""
    ga = a.grad()
    return einsum('...nm->...mn', ga) - ga


class EtaC1(NamedTuple):
    """
    Frame bivectors: ``eta``; ``eta_vol`` (``1/2 Vol_E(nabla omega,
    nabla omega)``); ``c1`` from ``Ricci_J + eta``; ``c1_bundle`` from
    the curvature of ``E_J``; ``c1_hermitian`` from the canonical
    Hermitian connection.
    """
    eta: np.ndarray
    eta_vol: np.ndarray
    c1: np.ndarray
    c1_bundle: np.ndarray
    c1_hermitian: np.ndarray


def eta_and_c1(chart: MetricChart, acs: ACSField, x) -> EtaC1:
    x, single = _as_batch(x)
    _require_acs(chart, acs, x)
    geo = geometry(chart, x)
    jets = _AcsJets(geo, acs)

    sigma2, sigma3 = _ej_frame(geo, jets.j)
    ginv = geo.ginv.value
    nab_w = jets.nabla_omega.value
    p2 = 0.5 * np.einsum('...ac,...bd,...abm,...cd->...m', ginv, ginv,
                         nab_w, sigma2.value)
    p3 = 0.5 * np.einsum('...ac,...bd,...abm,...cd->...m', ginv, ginv,
                         nab_w, sigma3.value)
    eta_vol = 0.5 * (np.einsum('...m,...n->...mn', p2, p3)
                     - np.einsum('...m,...n->...mn', p3, p2))

    bundle = -_exterior(_bundle_form(geo, jets.j)).value / TWO_PI

    omega = jets.frame_omega()
    r_h = _modified(geo, hermitian_connection(acs))
    c1_h = np.einsum('...qp,...q->...p', r_h.entries, omega) / TWO_PI

    return EtaC1(
        eta=_out(_frame_2form(geo, jets.eta()), single),
        eta_vol=_out(_frame_2form(geo, eta_vol), single),
        c1=_out(_frame_2form(geo, jets.c1()), single),
        c1_bundle=_out(_frame_2form(geo, bundle), single),
        c1_hermitian=_out(c1_h, single))


def ec1_fd(chart: MetricChart, acs: ACSField, x,
           step: float = 1e-4) -> np.ndarray:
    """
    ``c1(E_J)`` as a frame bivector from central differences of the
    ``E_J`` connection form.
    """
    x, single = _as_batch(x)
    _require_acs(chart, acs, x)
    n = len(x)
    shifts = np.concatenate([np.eye(4), -np.eye(4)]) * step
    pts = (x[:, None, :] + shifts[None, :, :]).reshape(-1, 4)
    geo = geometry(chart, pts)
    a = _bundle_form(geo, acs.jet(geo)).value.reshape(n, 8, 4)
    # grad[..., k, m] = d_m a_k
    grad = np.swapaxes((a[:, :4, :] - a[:, 4:, :]) / (2.0 * step), -1, -2)
    da = np.swapaxes(grad, -1, -2) - grad
    c1 = -da / TWO_PI
    return _out(_frame_2form(geometry(chart, x), c1), single)


# transgression 1-forms between two structures

class _PairJets:
    def __init__(self, geo: Geometry, j0: ACSField, j1: ACSField,
                 guard: float):
        self.geo = geo
        self.a = _AcsJets(geo, j0)
        self.b = _AcsJets(geo, j1)
        self.cos = 0.25 * _hs(geo, self.a.j, self.b.j, 3)
        _guard_anti_complex(geo, self.cos.value, guard)
        self.h = self.b.j - einsum('...,...ij->...ij', self.cos, self.a.j)
        self.nabla_h = geo.covariant_endo(self.h)
        self.j0h = einsum('...ip,...pj->...ij', self.a.j, self.h)

    def one_forms(self, pairing: str):
        c = _pairing(pairing)
        geo = self.geo
        inv = (1.0 + _trunc(self.cos, 2)).reciprocal()
        t = c * _hs(geo, self.nabla_h, self.j0h, 2, 'm')
        t = einsum('...m,...->...m', t, inv)
        g = c * _hs(geo, self.a.nabla, self.j0h, 2, 'm')
        return t, g


class TransgressionOneForms(NamedTuple):
    """``T~`` and ``G`` as frame covectors, with the angle."""
    ttilde: np.ndarray
    g: np.ndarray
    cos_theta: np.ndarray


def ttilde_g(chart: MetricChart, j0: ACSField, j1: ACSField, x,
             pairing: str = 'lambda2',
             guard: float = ANTI_COMPLEX_GUARD) -> TransgressionOneForms:
    """
    ``T~(X) = <nabla_X H, J0 H>/(1 + cos)`` and ``G(X) = <nabla_X J0, J0 H>``.
    """
    x, single = _as_batch(x)
    _require_acs(chart, j0, x)
    _require_acs(chart, j1, x)
    geo = geometry(chart, x)
    pj = _PairJets(geo, j0, j1, guard)
    t, g = pj.one_forms(pairing)
    return TransgressionOneForms(
        ttilde=_out(geo.frame_covector(t), single),
        g=_out(geo.frame_covector(g), single),
        cos_theta=_out(pj.cos.value, single))


def chern_difference_residual(chart: MetricChart, j0: ACSField, j1: ACSField,
                              x, pairing: str = 'lambda2',
                              guard: float = ANTI_COMPLEX_GUARD):
    """Largest entry of ``4 pi (c1(J1) - c1(J0)) - d(T~ + G)``."""
    x, single = _as_batch(x)
    _require_acs(chart, j0, x)
    _require_acs(chart, j1, x)
    geo = geometry(chart, x)
    pj = _PairJets(geo, j0, j1, guard)
    t, g = pj.one_forms(pairing)
    d_u = _exterior(t + g).value
    diff = FOUR_PI * (pj.b.c1().value - pj.a.c1().value)
    res = np.max(np.abs(_frame_2form(geo, diff - d_u)), axis=-1)
    _LOG.debug('chern difference on %s (%s): %.3g', chart.name, pairing,
               float(np.max(res)))
    return _out(res, single)


def thm12_densities(chart: MetricChart, j0: ACSField, j1: ACSField, x,
                    pairing: str = 'unit',
                    guard: float = ANTI_COMPLEX_GUARD) -> Dict[str, object]:
    """
    Integrand densities of the angle formula:

    * ``div_t``: ``div((T~ J0)^#)``, ``lhs_density = div_t / 4pi``
    * ``laplog``: ``-lap log(1 + cos) / 4pi``
    * ``chain_residual``: ``|div_t - lap(cos - log(1 + cos))|``, which
      vanishes when ``nabla^E H`` is anti-complex
    * ``anti_complex_defect``: largest entry of
      ``nabla^E_{J0 X} H + J0 nabla^E_X H``
    """
    x, single = _as_batch(x)
    _require_acs(chart, j0, x)
    _require_acs(chart, j1, x)
    geo = geometry(chart, x)
    pj = _PairJets(geo, j0, j1, guard)
    t, _ = pj.one_forms(pairing)
    v = einsum('...ij,...kj,...k->...i', geo.inverse(2), _trunc(pj.a.j, 2), t)
    div_t = geo.divergence(v).value
    lap_cos = geo.laplacian(pj.cos).value
    lap_log = geo.laplacian((1.0 + pj.cos).log()).value
    chain = np.abs(div_t - (lap_cos - lap_log))

    a0 = pj.a.j.value
    nab_h = pj.nabla_h.value
    g0 = geo.g.value
    ginv0 = geo.ginv.value
    along = 0.25 * np.einsum('...ac,...bd,...abm,...cd->...m', g0, ginv0,
                             nab_h, a0)
    proj = nab_h - np.einsum('...m,...ij->...ijm', along, a0)
    defect = (np.einsum('...km,...ijk->...ijm', a0, proj)
              + np.einsum('...ip,...pjm->...ijm', a0, proj))
    defect = np.max(np.abs(defect), axis=(-1, -2, -3))
    out = {
        'lhs_density': div_t / FOUR_PI,
        'div_t': div_t,
        'laplog': -lap_log / FOUR_PI,
        'lap_cos': lap_cos,
        'chain_residual': chain,
        'anti_complex_defect': defect,
    }
    return {k: _out(val, single) for k, val in out.items()}


def chern_product_density(chart: MetricChart, j0: ACSField, j1: ACSField,
                          x, pairing: str = 'lambda2',
                          guard: float = ANTI_COMPLEX_GUARD
                          ) -> Dict[str, object]:
    """
    Both sides of ``c1(J1) ^ c1(J0) = 1/2 (c1(J1)^2 + c1(J0)^2)
    - 1/32pi^2 d(U ^ dU)`` with ``U = T~ + G`` (so ``d(U ^ dU) =
    dU ^ dU``), as densities, together with ``p1(Lambda+) = p1 + 2 X``
    which equals ``c1^2`` for Kahler structures.
    """
    x, single = _as_batch(x)
    _require_acs(chart, j0, x)
    _require_acs(chart, j1, x)
    geo = geometry(chart, x)
    pj = _PairJets(geo, j0, j1, guard)
    t, g = pj.one_forms(pairing)
    du = _frame_2form(geo, _exterior(t + g))
    c0 = _frame_2form(geo, pj.a.c1())
    c1 = _frame_2form(geo, pj.b.c1())
    lhs = wedge_density(c1, c0)
    rhs = (0.5 * (wedge_density(c1, c1) + wedge_density(c0, c0))
           - wedge_density(du, du) / (8.0 * FOUR_PI2))
    r = geo.curvature_operator()
    p1_plus = pontrjagin_form(r) + 2.0 * euler_form(r)
    out = {'lhs': lhs, 'rhs': rhs, 'residual': np.abs(lhs - rhs),
           'p1_plus': p1_plus, 'c1_squared_0': wedge_density(c0, c0),
           'c1_squared_1': wedge_density(c1, c1)}
    return {k: _out(val, single) for k, val in out.items()}


def kahler_identities(chart: MetricChart, acs: ACSField, x
                      ) -> Dict[str, object]:
    """
    Gaps of the almost-Kahler identities ``s_J - s = |nabla omega|^2``,
    ``4 pi <c1, omega> = s + 1/2 |nabla omega|^2`` and
    ``<eta, omega> = -1/8 |nabla J|^2``, plus ``|d omega|`` (zero exactly
    when the structure is almost Kahler).
    """
    x, single = _as_batch(x)
    _require_acs(chart, acs, x)
    geo = geometry(chart, x)
    jets = _AcsJets(geo, acs)
    r: CurvOp = geo.curvature_operator()
    omega = jets.frame_omega()
    rho = np.einsum('...qp,...q->...p', r.entries, omega)
    s = 2.0 * r.trace()
    s_j = 2.0 * inner(rho, omega)
    norm_w = jets.nabla_omega_norm2()
    c1 = _frame_2form(geo, jets.c1())
    eta = _frame_2form(geo, jets.eta())
    nab = jets.nabla_omega.value
    d_omega = (nab + np.einsum('...abm->...bma', nab)
               + np.einsum('...abm->...mab', nab))
    out = {
        'scalar_gap': np.abs(s_j - s - norm_w),
        'c1_omega_gap': np.abs(FOUR_PI * inner(c1, omega) - s - 0.5 * norm_w),
        'eta_omega_gap': np.abs(inner(eta, omega) + 0.25 * norm_w),
        'd_omega': np.max(np.abs(d_omega), axis=(-1, -2, -3)),
    }
    return {k: _out(val, single) for k, val in out.items()}
