"""
Quaternionic algebra on R^8.

4-forms are 70-vectors of coefficients on the lexicographic orthonormal
basis ``e^{ijkl}``, ``i < j < k < l``. 2-forms are skew 8x8 matrices
``W[a, b] = w(e_a, e_b)``; the Kahler form of ``J`` is ``W = J^T``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional

import numpy as np
from scipy import linalg

from .alg4 import J1, J2, J3, permutations_with_sign
from .errors import WorkbenchError, WorkbenchErrorCode

__all__ = [
    'QUADS', 'HKTriple', 'Angle8', 'FrameConstruction', 'standard_triple',
    'to_tensor', 'from_tensor', 'wedge22', 'kahler_form', 'hodge8',
    'rotate_form', 'hk_from_split', 'fundamental_form', 'in_T',
    'reconstruct_triple', 'angle8', 'frame_construction', 'homotopy_omega',
    'symmetrize_curvature8', 'check_curvature8', 'random_curvature8',
    'constant_curvature8', 'weitzenbock4', 'weitzenbock4_matrix',
    'OMEGA_NORM2']

_LOG = logging.getLogger(__name__)

TOL = 1e-10
OMEGA_NORM2 = 10.0 / 3.0
QUADS = tuple(itertools.combinations(range(8), 4))
_QUAD_POS = {q: i for i, q in enumerate(QUADS)}
_PERMS4 = tuple(permutations_with_sign(4))
_EYE8 = np.eye(8)


def _invalid(msg: str) -> WorkbenchError:
    return WorkbenchError(WorkbenchErrorCode.InvalidInput, msg)


def _check_form(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (70,):
        raise _invalid(f'Bad 4-form of shape {omega.shape}: expected (70,).')
    return omega


def _hodge_table():
    target = np.zeros(70, dtype=np.intp)
    sign = np.zeros(70)
    for i, q in enumerate(QUADS):
        rest = tuple(a for a in range(8) if a not in q)
        target[i] = _QUAD_POS[rest]
        perm = q + rest
        inversions = sum(1 for a in range(8) for b in range(a + 1, 8)
                         if perm[a] > perm[b])
        sign[i] = -1.0 if inversions % 2 else 1.0
    return target, sign


_HODGE_TARGET, _HODGE_SIGN = _hodge_table()


def hodge8(omega) -> np.ndarray:
    """Hodge star on 4-forms of R^8, an involution."""
    omega = _check_form(omega)
    out = np.zeros(70)
    out[_HODGE_TARGET] = _HODGE_SIGN * omega
    return out


def to_tensor(omega) -> np.ndarray:
    """Fully antisymmetric ``(8, 8, 8, 8)`` array of a 4-form."""
    omega = _check_form(omega)
    t = np.zeros((8,) * 4)
    for coef, q in zip(omega, QUADS):
        if coef == 0.0:
            continue
        for perm, sign in _PERMS4:
            t[tuple(q[p] for p in perm)] = sign * coef
    return t


def from_tensor(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.array([t[q] for q in QUADS])


def wedge22(a, b) -> np.ndarray:
    """``a ^ b`` of two 2-forms given as skew matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros(70)
    for n, (i, j, k, l) in enumerate(QUADS):
        out[n] = (a[i, j] * b[k, l] - a[i, k] * b[j, l] + a[i, l] * b[j, k]
                  + a[j, k] * b[i, l] - a[j, l] * b[i, k] + a[k, l] * b[i, j])
    return out


def kahler_form(j) -> np.ndarray:
    return np.asarray(j, dtype=float).T


def rotate_form(omega, q) -> np.ndarray:
    """Push a 4-form forward by the orthogonal map ``q``."""
    q = np.asarray(q, dtype=float)
    t = np.einsum('ai,bj,ck,dl,ijkl->abcd', q, q, q, q, to_tensor(omega))
    return from_tensor(t)


@dataclass(frozen=True)
class HKTriple:
    """
    Orthogonal complex structures with ``j1 j2 = j3``, pairwise
    anticommuting, whose fundamental form is self-dual.
    """
    j1: np.ndarray
    j2: np.ndarray
    j3: np.ndarray

    def __post_init__(self):
        js = [np.asarray(j, dtype=float) for j in (self.j1, self.j2, self.j3)]
        for n, j in enumerate(js, 1):
            if j.shape != (8, 8):
                raise _invalid(
                    f'Bad structure J{n} of shape {j.shape}: expected (8, 8).')
            square = float(np.max(np.abs(j @ j + _EYE8)))
            skew = float(np.max(np.abs(j + j.T)))
            if max(square, skew) > 1e-9:
                raise _invalid(
                    f'Bad structure J{n}: not an orthogonal complex structure '
                    f'(defects {square:.3g}, {skew:.3g}).')
        a, b, c = js
        product = float(np.max(np.abs(a @ b - c)))
        anti = max(float(np.max(np.abs(x @ y + y @ x)))
                   for x, y in ((a, b), (a, c), (b, c)))
        if max(product, anti) > 1e-9:
            raise _invalid(
                f'Bad triple: J1 J2 - J3 is {product:.3g} and the largest '
                f'anticommutator is {anti:.3g}.')
        object.__setattr__(self, 'j1', a)
        object.__setattr__(self, 'j2', b)
        object.__setattr__(self, 'j3', c)

    def structures(self):
        return (self.j1, self.j2, self.j3)

    def along(self, x) -> np.ndarray:
        """``x1 J1 + x2 J2 + x3 J3``."""
        x = np.asarray(x, dtype=float)
        return x[0] * self.j1 + x[1] * self.j2 + x[2] * self.j3


def _block(m4: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return basis.T @ m4 @ basis


def _check_orthonormal(basis: np.ndarray, what: str) -> np.ndarray:
    basis = np.asarray(basis, dtype=float)
    if basis.shape != (4, 8):
        raise _invalid(
            f'Bad {what} basis of shape {basis.shape}: expected (4, 8).')
    defect = float(np.max(np.abs(basis @ basis.T - np.eye(4))))
    if defect > TOL:
        raise _invalid(
            f'Bad {what} basis: not orthonormal (defect {defect:.3g}).')
    return basis


def hk_from_split(p_basis, q_basis=None) -> HKTriple:
    """
    Triple acting as the standard 4-dimensional one on the oriented
    basis rows of ``p_basis`` and on ``q_basis``, a basis of the
    orthogonal complement making ``(p, q)`` positive. Without
    ``q_basis`` a positive complement basis is chosen.
    """
    p = _check_orthonormal(p_basis, 'split')
    if q_basis is None:
        q = linalg.null_space(p).T
        if np.linalg.det(np.vstack([p, q])) < 0.0:
            q[-1] = -q[-1]
    else:
        q = _check_orthonormal(q_basis, 'complement')
        cross = float(np.max(np.abs(p @ q.T)))
        if cross > TOL:
            raise _invalid(
                f'Bad complement basis: not orthogonal to the split '
                f'({cross:.3g}).')
        if np.linalg.det(np.vstack([p, q])) < 0.0:
            raise _invalid(
                'Bad complement basis: (p, q) is negatively oriented.')
    js = [_block(m, p) + _block(m, q) for m in (J1, J2, J3)]
    return HKTriple(*js)


def standard_triple() -> HKTriple:
    return hk_from_split(_EYE8[:4], _EYE8[4:])


def fundamental_form(t: HKTriple) -> np.ndarray:
    """``1/6 (w1 ^ w1 + w2 ^ w2 + w3 ^ w3)``."""
    if not isinstance(t, HKTriple):
        t = HKTriple(*t)
    total = np.zeros(70)
    for j in t.structures():
        w = kahler_form(j)
        total += wedge22(w, w)
    return total / 6.0


# membership in the set of fundamental forms

_PAIRS8 = tuple(itertools.combinations(range(8), 2))


def _form_operator(omega: np.ndarray) -> np.ndarray:
    """``Omega`` as the symmetric operator ``w -> Omega(w, .)`` on 2-forms."""
    t = to_tensor(omega)
    m = np.zeros((28, 28))
    for a, (i, j) in enumerate(_PAIRS8):
        for b, (k, l) in enumerate(_PAIRS8):
            m[a, b] = t[i, j, k, l]
    return m


def _skew_from(v: np.ndarray) -> np.ndarray:
    w = np.zeros((8, 8))
    for c, (i, j) in zip(v, _PAIRS8):
        w[i, j] = c
        w[j, i] = -c
    return w


def reconstruct_triple(omega, tol: float = 1e-8) -> Optional[HKTriple]:
    """
    A triple whose fundamental form is ``omega``, read off the
    three-dimensional eigenspace of ``omega`` acting on 2-forms, or
    ``None``.
    """
    omega = _check_form(omega)
    vals, vecs = np.linalg.eigh(_form_operator(omega))
    start = 0
    while start < len(vals):
        stop = start + 1
        while stop < len(vals) and vals[stop] - vals[start] < tol * 10:
            stop += 1
        if stop - start == 3:
            space = vecs[:, start:stop]
            # Kahler forms have two units of coefficient norm
            w1 = _skew_from(space[:, 0] * 2.0)
            w2 = _skew_from(space[:, 1] * 2.0)
            a, b = w1.T, w2.T
            try:
                triple = HKTriple(a, b, a @ b)
            except WorkbenchError:
                triple = None
            if triple is not None:
                rebuilt = fundamental_form(triple)
                if float(np.max(np.abs(rebuilt - omega))) < 1e-8:
                    return triple
        start = stop
    return None


def in_T(omega, tol: float = 1e-9) -> Dict[str, object]:
    """
    Membership report: ``norm2`` against 10/3, the self-duality defect and
    whether a triple reproduces ``omega``. ``member`` combines the three.
    """
    omega = _check_form(omega)
    norm2 = float(omega @ omega)
    sd = float(np.max(np.abs(hodge8(omega) - omega)))
    ok = abs(norm2 - OMEGA_NORM2) < tol and sd < tol
    triple = reconstruct_triple(omega) if ok else None
    return {'norm2': norm2, 'self_dual_defect': sd,
            'reconstructed': triple is not None,
            'member': bool(ok and triple is not None)}


def _require_T(omega, name: str) -> np.ndarray:
    report = in_T(omega)
    if not report['member']:
        raise _invalid(
            f'Bad fundamental form "{name}": not in the set of quaternionic '
            f'forms (norm2 {report["norm2"]:.6g}, self-duality defect '
            f'{report["self_dual_defect"]:.3g}, reconstructed '
            f'{report["reconstructed"]}).')
    return _check_form(omega)


class Angle8(NamedTuple):
    """
    ``Omega1 = cos_theta Omega0 + h_tilde``. ``h_norm2`` is compared with
    both ``10/3 sin^2`` and ``3/10 sin^2``; ``normalization`` names the
    one it matches (``'10/3'``, ``'3/10'`` or ``'neither'``).
    """
    cos_theta: float
    h_tilde: np.ndarray
    h_norm2: float
    norm_10_3: float
    norm_3_10: float
    normalization: str


def angle8(omega0, omega1, tol: float = 1e-9) -> Angle8:
    omega0 = _require_T(omega0, 'Omega0')
    omega1 = _require_T(omega1, 'Omega1')
    cos_t = float(np.clip(0.3 * (omega0 @ omega1), -1.0, 1.0))
    h = omega1 - cos_t * omega0
    h_norm2 = float(h @ h)
    sin2 = 1.0 - cos_t * cos_t
    big, small = OMEGA_NORM2 * sin2, 0.3 * sin2
    if abs(h_norm2 - big) < tol:
        which = '10/3'
    elif abs(h_norm2 - small) < tol:
        which = '3/10'
    else:
        which = 'neither'
    return Angle8(cos_t, h, h_norm2, big, small, which)


# explicit frames for structures sharing J1

@dataclass(frozen=True)
class FrameConstruction:
    """
    Frame ``e1..e8`` adapted to ``E0``, the bases ``B`` and ``B_perp``
    (rows), the rotated triple ``E1`` and residuals of the identities the
    construction satisfies.
    """
    frame: np.ndarray
    b: np.ndarray
    b_perp: np.ndarray
    e1: HKTriple
    omega0: np.ndarray
    omega1: np.ndarray
    gram: np.ndarray
    anticommutators: np.ndarray
    checks: Dict[str, float]


def _frame_form(coef: Dict[tuple, float], frame: np.ndarray) -> np.ndarray:
    c = np.zeros((8, 8))
    for (a, b), v in coef.items():
        c[a - 1, b - 1] = v
        c[b - 1, a - 1] = -v
    return frame.T @ c @ frame


_OMEGA4 = {(1, 7): 1.0, (2, 8): -1.0, (3, 5): 1.0, (4, 6): -1.0}
_OMEGA5 = {(1, 8): 1.0, (2, 7): 1.0, (3, 6): 1.0, (4, 5): 1.0}


def _orthonormal_axes(axes) -> np.ndarray:
    if axes is None:
        return np.eye(3)
    x = np.asarray(axes, dtype=float)
    if x.shape == (2, 3):
        x = np.vstack([x, np.cross(x[0], x[1])])
    if x.shape != (3, 3):
        raise _invalid(f'Bad axes of shape {x.shape}: expected (2, 3).')
    defect = float(np.max(np.abs(x @ x.T - np.eye(3))))
    if defect > TOL or float(np.max(np.abs(np.cross(x[0], x[1]) - x[2]))) > TOL:
        raise _invalid(
            f'Bad axes: not a positive orthonormal basis (defect '
            f'{defect:.3g}).')
    return x


def frame_construction(e0: Optional[HKTriple] = None, zeta: float = np.pi / 4,
                       axes=None, x_vec=None,
                       y_vec=None) -> FrameConstruction:
    """
    Rotate the second and third structures of ``E0`` towards ``J4``, ``J5``
    by ``zeta``: ``E1 = (J_x1, c J_x2 + s J4, c J_x3 + s J5)``.

    ``x_vec`` and ``y_vec`` are unit vectors with orthogonal quaternionic
    lines (defaults ``e1`` and ``e5``); ``axes`` the rows ``x1, x2``
    (``x3 = x1 x x2``).
    """
    if not 0.0 <= zeta <= 0.5 * np.pi:
        raise _invalid(f'Bad angle zeta={zeta!r}: must lie in [0, pi/2].')
    e0 = e0 if e0 is not None else standard_triple()
    x_axes = _orthonormal_axes(axes)
    jx = [e0.along(a) for a in x_axes]
    x = _EYE8[0] if x_vec is None else np.asarray(x_vec, dtype=float)
    y = _EYE8[4] if y_vec is None else np.asarray(y_vec, dtype=float)
    frame = np.array([x, jx[0] @ x, jx[1] @ x, jx[2] @ x,
                      y, jx[0] @ y, jx[1] @ y, jx[2] @ y])
    defect = float(np.max(np.abs(frame @ frame.T - _EYE8)))
    if defect > 1e-9:
        raise _invalid(
            f'Bad vectors: their quaternionic lines are not orthogonal unit '
            f'spans (defect {defect:.3g}).')
    c, s = np.cos(zeta), np.sin(zeta)

    w = [kahler_form(j) for j in jx]
    w4 = _frame_form(_OMEGA4, frame)
    w5 = _frame_form(_OMEGA5, frame)
    j4, j5 = w4.T, w5.T
    e1 = HKTriple(jx[0], c * jx[1] + s * j4, c * jx[2] + s * j5)

    u, v = c * x + s * y, c * y - s * x
    b = np.array([x, jx[0] @ x, jx[1] @ u, jx[2] @ u])
    b_perp = np.array([y, jx[0] @ y, jx[1] @ v, jx[2] @ v])
    both = np.vstack([b, b_perp])

    five = [jx[0], jx[1], jx[2], j4, j5]
    gram = np.array([[np.trace(p.T @ q) for q in five] for p in five])
    anti = np.array([[float(np.max(np.abs(p @ q + q @ p))) for q in five]
                     for p in five])

    omega0 = fundamental_form(HKTriple(*jx))
    omega1 = fundamental_form(e1)
    w1w1 = wedge22(w[0], w[0])
    w24 = wedge22(w[1], w4)
    w35 = wedge22(w[2], w5)
    expansion = (c * c * omega0 + (s * c / 3.0) * (w24 + w35)
                 + (s * s / 6.0) * (w1w1 + wedge22(w4, w4) + wedge22(w5, w5)))
    cos_expected = (7.0 + 8.0 * c * c) / 15.0
    basic = (w1w1 + wedge22(w[1], w[1]) + wedge22(w[2], w[2]))
    h_expected = ((s * s / 6.0) * ((w1w1 + wedge22(w4, w4) + wedge22(w5, w5))
                                   - (7.0 / 15.0) * basic)
                  + (2.0 / 3.0) * s * c * w24)
    ang = angle8(omega0, omega1)
    checks = {
        'basis_orthonormal': float(np.max(np.abs(both @ both.T - _EYE8))),
        'gram': float(np.max(np.abs(gram - 8.0 * np.eye(5)))),
        'j3_product': float(np.max(np.abs(jx[0] @ jx[1] - jx[2]))),
        'j5_product': float(np.max(np.abs(jx[0] @ j4 - j5))),
        'omega1_expansion': float(np.max(np.abs(expansion - omega1))),
        'h_expansion': float(np.max(np.abs(h_expected - ang.h_tilde))),
        'w24_w35': float(np.max(np.abs(w24 - w35))),
        'cos_theta': ang.cos_theta,
        'cos_theta_expected': cos_expected,
    }
    _LOG.debug('frame construction at zeta %.6g: %s', zeta, checks)
    return FrameConstruction(
        frame=frame, b=b, b_perp=b_perp, e1=e1, omega0=omega0,
        omega1=omega1, gram=gram, anticommutators=anti, checks=checks)


def homotopy_omega(e0: Optional[HKTriple] = None, zeta: float = np.pi / 4,
                   t: float = 0.5, **kwargs) -> np.ndarray:
    """``Omega_t`` of the construction with ``zeta`` replaced by ``t zeta``."""
    if not 0.0 <= t <= 1.0:
        raise _invalid(f'Bad homotopy parameter {t!r}: must lie in [0, 1].')
    return frame_construction(e0, t * zeta, **kwargs).omega1


# curvature tensors and the Weitzenbock operator on 4-forms

def symmetrize_curvature8(t) -> np.ndarray:
    """
    Project onto tensors with ``R_abcd = -R_bacd = -R_abdc = R_cdab`` and
    the first Bianchi identity.
    """
    t = np.asarray(t, dtype=float)
    if t.shape != (8,) * 4:
        raise _invalid(
            f'Bad curvature tensor of shape {t.shape}: expected (8, 8, 8, 8).')
    r = 0.5 * (t - np.einsum('abcd->bacd', t))
    r = 0.5 * (r - np.einsum('abcd->abdc', r))
    r = 0.5 * (r + np.einsum('abcd->cdab', r))
    alt = np.zeros_like(r)
    for perm, sign in _PERMS4:
        alt += sign * np.transpose(r, perm)
    return r - alt / 24.0


def check_curvature8(r, tol: float = TOL) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (8,) * 4:
        raise _invalid(
            f'Bad curvature tensor of shape {r.shape}: expected (8, 8, 8, 8).')
    defect = max(
        float(np.max(np.abs(r + np.einsum('abcd->bacd', r)))),
        float(np.max(np.abs(r + np.einsum('abcd->abdc', r)))),
        float(np.max(np.abs(r - np.einsum('abcd->cdab', r)))))
    if defect > tol:
        raise _invalid(
            f'Bad curvature tensor: symmetry defect {defect:.3g} > {tol:g}.')
    return r


def random_curvature8(rng: np.random.Generator) -> np.ndarray:
    return symmetrize_curvature8(rng.standard_normal((8,) * 4))


def constant_curvature8(k: float = 1.0) -> np.ndarray:
    """``g(R(e_a, e_b) e_c, e_d) = k (d_bc d_ad - d_ac d_bd)``."""
    e = _EYE8
    return k * (np.einsum('bc,ad->abcd', e, e) - np.einsum('ac,bd->abcd', e, e))


def _weitzenbock_tensor(r: np.ndarray, t: np.ndarray) -> np.ndarray:
    # s[m, y2, y3, y4] = sum_a (Rbar(e_a, e_m) T)(e_a, y2, y3, y4)
    s = -(np.einsum('amad,dxyz->mxyz', r, t)
          + np.einsum('amxd,adyz->mxyz', r, t)
          + np.einsum('amyd,axdz->mxyz', r, t)
          + np.einsum('amzd,axyd->mxyz', r, t))
    return (-s
            + np.einsum('bacd->abcd', s)
            - np.einsum('cabd->abcd', s)
            + np.einsum('dabc->abcd', s))


def weitzenbock4(r8, omega) -> np.ndarray:
    """
    ``A(Omega)(X1..X4) = sum_a sum_k (-1)^k (Rbar(e_a, X_k) Omega)(e_a, X1..^Xk..X4)``
    for ``r8[a, b, c, d] = g(R(e_a, e_b) e_c, e_d)``.
    """
    r = check_curvature8(r8)
    return from_tensor(_weitzenbock_tensor(r, to_tensor(omega)))


def weitzenbock4_matrix(r8) -> np.ndarray:
    """Matrix ``M[J, I] = <A(e^I), e^J>`` on the lexicographic basis."""
    r = check_curvature8(r8)
    cols = []
    for i in range(70):
        unit = np.zeros(70)
        unit[i] = 1.0
        cols.append(from_tensor(_weitzenbock_tensor(r, to_tensor(unit))))
    return np.stack(cols, axis=-1)
