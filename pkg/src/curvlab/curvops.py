"""
Invariants, decomposition and characteristic forms of curvature operators.

All functions accept a :class:`~curvlab.alg4.CurvOp`, batched or not.
Characteristic forms are returned as the coefficient of ``Vol``
(already divided by ``4 pi^2``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .alg4 import (
    IDENTITY, PAIRS, STAR, TOL, CurvOp, bivector_to_endo, check_symmetric,
    frame_orientation, inner, j_to_omega, kulkarni_nomizu, wedge2,
    wedge_density)
from .errors import WorkbenchError, WorkbenchErrorCode

__all__ = [
    'BasicInvariants', 'Decomposition', 'IsotropicPlane', 'ChernForms',
    'ricci', 'scalar', 'bianchi', 'basic_invariants', 'conjugations',
    'sectional', 'isotropic_sectional', 'weitzenbock',
    'weitzenbock_definition', 'decompose', 'euler_form',
    'euler_basis_sum', 'pontrjagin_form', 'pontrjagin_basis_sum',
    'euler_shift', 'chern_forms', 'invariance_defect', 'c1_squared',
    'norm_formulas', 'FOUR_PI2']

_LOG = logging.getLogger(__name__)

FOUR_PI2 = 4.0 * np.pi ** 2
_G = np.eye(4)
_P_PLUS = 0.5 * (IDENTITY + STAR)
_P_MINUS = 0.5 * (IDENTITY - STAR)


class BasicInvariants(NamedTuple):
    ricci: np.ndarray
    s: np.ndarray
    bianchi: CurvOp
    t: np.ndarray


def ricci(r: CurvOp) -> np.ndarray:
    """``Ricci(X, Y) = tr(Z -> R(X, Z)Y)``."""
    t = r.to_tensor4()
    return np.einsum('...acbc->...ab', t)


def scalar(r: CurvOp):
    return 2.0 * r.trace()


def bianchi(r: CurvOp) -> CurvOp:
    """Cyclic sum, ``b(R) = 1/2 tr(*R) *`` on symmetric operators."""
    return STAR * (0.5 * inner(STAR, r))


def basic_invariants(r: CurvOp) -> BasicInvariants:
    b = bianchi(r)
    return BasicInvariants(
        ricci=ricci(r),
        s=scalar(r),
        bianchi=b,
        t=inner(b, STAR) / 6.0)


def conjugations(r: CurvOp):
    """``(*R*, *R - R*)``."""
    return STAR @ r @ STAR, STAR @ r - r @ STAR


def sectional(r: CurvOp, x, y) -> float:
    """Sectional curvature of the plane spanned by ``x`` and ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    area = np.linalg.norm(wedge2(x, y))
    if area < 1e-12:
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            f'Bad plane: span of {x.tolist()} and {y.tolist()} is degenerate.')
    u = x / np.linalg.norm(x)
    v = y - np.dot(y, u) * u
    v = v / np.linalg.norm(v)
    p = wedge2(u, v)
    return float(inner(r @ p, p))


@dataclass(frozen=True)
class IsotropicPlane:
    """
    Totally isotropic complex plane ``span{e1 + i e2, e3 + i e4}`` given by
    an orthonormal frame (rows ``e1..e4``).
    """
    frame: np.ndarray

    def __post_init__(self):
        frame = np.asarray(self.frame, dtype=float)
        if frame.shape != (4, 4):
            raise WorkbenchError(
                WorkbenchErrorCode.InvalidInput,
                f'Bad frame of shape {frame.shape}: expected (4, 4).')
        defect = float(np.max(np.abs(frame @ frame.T - _G)))
        if defect > TOL:
            raise WorkbenchError(
                WorkbenchErrorCode.InvalidInput,
                f'Bad frame: not orthonormal (defect {defect:.3g}).')
        object.__setattr__(self, 'frame', frame)

    @property
    def orientation(self) -> int:
        return frame_orientation(self.frame)


def isotropic_sectional(r: CurvOp, plane) -> float:
    """
    ``1/4 (R1313 + R1414 + R2323 + R2424 - 2 R1234)`` in the plane's frame.
    """
    if not isinstance(plane, IsotropicPlane):
        plane = IsotropicPlane(plane)
    e = plane.frame
    t = np.einsum('abcd,ia,jb,kc,ld->ijkl', r.to_tensor4(), e, e, e, e)
    return float(0.25 * (
        t[0, 2, 0, 2] + t[0, 3, 0, 3] + t[1, 2, 1, 2] + t[1, 3, 1, 3]
        - 2.0 * t[0, 1, 2, 3]))


def weitzenbock(r: CurvOp) -> CurvOp:
    """Closed form ``A(R) = Ricci . g - 2R + 2b(R)``."""
    ric = ricci(r)
    g = np.broadcast_to(_G, ric.shape)
    return kulkarni_nomizu(ric, g) - 2.0 * r + 2.0 * bianchi(r)


def weitzenbock_definition(r: CurvOp) -> CurvOp:
    """Weitzenbock operator from its four-argument definition."""
    t = r.to_tensor4()
    ric = np.einsum('...acbc->...ab', t)
    g = np.broadcast_to(_G, ric.shape)
    a = (kulkarni_nomizu(ric, g).to_tensor4()
         + 2.0 * np.einsum('...cabd->...abcd', t)
         - 2.0 * np.einsum('...dabc->...abcd', t))
    return CurvOp.from_tensor4(a)


@dataclass(frozen=True)
class Decomposition:
    """Orthogonal splitting ``R = r1 + r2 + r3p + r3m + r4``."""
    r1: CurvOp
    r2: CurvOp
    r3p: CurvOp
    r3m: CurvOp
    r4: CurvOp

    @property
    def r3(self) -> CurvOp:
        return self.r3p + self.r3m

    def parts(self):
        return (self.r1, self.r2, self.r3p, self.r3m, self.r4)

    def reconstruct(self) -> CurvOp:
        return self.r1 + self.r2 + self.r3p + self.r3m + self.r4


def decompose(r: CurvOp) -> Decomposition:
    r1 = STAR * (inner(STAR, r) / 6.0)
    r2 = IDENTITY * (r.trace() / 6.0)
    r_star = STAR @ r @ STAR
    r3 = 0.5 * (r + r_star) - r2 - r1
    return Decomposition(
        r1=r1,
        r2=r2,
        r3p=_P_PLUS @ r3 @ _P_PLUS,
        r3m=_P_MINUS @ r3 @ _P_MINUS,
        r4=0.5 * (r - r_star))


def euler_form(r: CurvOp):
    """``X(R) = 1/2 <R, *R*> / 4 pi^2``."""
    return 0.5 * inner(r, STAR @ r @ STAR) / FOUR_PI2


def euler_basis_sum(r: CurvOp):
    """Euler density summed over the basis planes ``e12, e13, e14``."""
    srs = STAR @ r @ STAR
    total = 0.0
    for p in range(3):
        total = total + np.einsum(
            '...q,...q->...', r.entries[..., :, p], srs.entries[..., :, p])
    return total / FOUR_PI2


def pontrjagin_form(r: CurvOp):
    """``p1(R) = <R, R*> / 4 pi^2``."""
    return inner(r, r @ STAR) / FOUR_PI2


def pontrjagin_basis_sum(r: CurvOp):
    rs = r @ STAR
    total = 0.0
    for p in range(6):
        total = total + np.einsum(
            '...q,...q->...', r.entries[..., :, p], rs.entries[..., :, p])
    return total / FOUR_PI2


def _check_bianchi(r: CurvOp, tol: float = TOL):
    defect = float(np.max(np.abs(bianchi(r).entries), initial=0.0))
    if defect > tol:
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            f'Bad curvature operator: Bianchi defect {defect:.3g} > {tol:g}.')


def euler_shift(r: CurvOp, phi):
    """
    ``s/2 tr(phi) - <Ricci, phi> + tr(phi)^2 - |phi|^2``, the change of
    ``4 pi^2 X`` when ``phi . g`` is added to ``R``.
    """
    _check_bianchi(r)
    phi = check_symmetric(phi, 'phi')
    tr = np.trace(phi, axis1=-2, axis2=-1)
    ric = ricci(r)
    return (0.5 * scalar(r) * tr
            - np.einsum('...ab,...ab->...', ric, phi)
            + tr ** 2
            - np.einsum('...ab,...ab->...', phi, phi))


class ChernForms(NamedTuple):
    c1: np.ndarray
    c2: Optional[float]
    star_ricci: np.ndarray
    psi: np.ndarray
    bJ: np.ndarray
    s_J: float


def invariance_defect(r: CurvOp, j) -> float:
    """Largest commutator ``[R(e_P), J]`` over the basis bivectors."""
    endos = bivector_to_endo(r.entries.T)
    comm = endos @ j - j @ endos
    return float(np.max(np.abs(comm)))


def chern_forms(r: CurvOp, j, with_c2: bool = True) -> ChernForms:
    """
    Chern forms of ``R`` for the complex structure ``J``.

    ``c1 = Ricci_J / 2 pi`` with ``Ricci_J(X, Y) = <R(X^Y), omega_J>``.
    ``c2`` needs ``R(X^Y)`` to commute with ``J``.
    """
    j = np.asarray(j, dtype=float)
    omega = j_to_omega(j)
    if r.entries.ndim != 2:
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            'Bad curvature operator: chern_forms takes a single operator.')
    rho = r.entries.T @ omega
    ric = ricci(r)
    ric_j = ric @ j
    psi_endo = -0.5 * ric_j + 0.5 * ric_j.T
    psi = np.array([psi_endo[a, b] for a, b in PAIRS])
    b_j = bianchi(r).entries.T @ omega
    c2 = None
    if with_c2:
        defect = invariance_defect(r, j)
        if defect > 1e-9:
            raise WorkbenchError(
                WorkbenchErrorCode.NotInvariant,
                f'Bad curvature operator for c2: not J-invariant '
                f'(commutator {defect:.3g} > 1e-09).')
        c2 = float(euler_form(r))
    return ChernForms(
        c1=rho / (2.0 * np.pi),
        c2=c2,
        star_ricci=rho,
        psi=psi,
        bJ=b_j,
        s_J=float(2.0 * inner(rho, omega)))


def c1_squared(forms: ChernForms) -> float:
    return float(wedge_density(forms.c1, forms.c1))


def norm_formulas(r: CurvOp):
    """
    Both sides of ``8 pi^2 X = |R2|^2 + |R3|^2 - |R4|^2`` and
    ``4 pi^2 p1 = |W+|^2 - |W-|^2`` for ``R`` in the Bianchi kernel.
    """
    d = decompose(r)
    return {
        'euler_lhs': 2.0 * FOUR_PI2 * euler_form(r),
        'euler_rhs': (inner(d.r2, d.r2) + inner(d.r3, d.r3)
                      - inner(d.r4, d.r4)),
        'p1_lhs': FOUR_PI2 * pontrjagin_form(r),
        'p1_rhs': inner(d.r3p, d.r3p) - inner(d.r3m, d.r3m),
    }
