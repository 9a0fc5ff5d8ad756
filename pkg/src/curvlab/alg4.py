"""
Linear algebra of oriented Euclidean 4-space.

Convention sheet (every other module expresses operators in it):

* Vectors are arrays of shape ``(..., 4)`` in the oriented orthonormal
  basis ``e1..e4``.
* Bivectors are arrays of shape ``(..., 6)`` in the ordered basis
  ``e12, e13, e14, e23, e24, e34`` (see :data:`PAIRS`), which is
  orthonormal.
* A bivector ``b`` and the skew endomorphism ``A`` are identified by
  ``b_ab = g(A e_a, e_b) = A[b, a]``.
* :class:`CurvOp` stores a ``6x6`` matrix ``M`` acting on bivector
  components: ``<R(e_P), e_Q> = M[Q, P]``. The pairing of operators is
  the full trace pairing, so ``<Id, Id> = 6``.
* The Hodge star is fixed by ``e1^e2^e3^e4 = Vol``; ``a ^ *b = <a, b> Vol``.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import WorkbenchError, WorkbenchErrorCode

__all__ = [
    'PAIRS', 'TOL', 'STAR', 'IDENTITY', 'J1', 'J2', 'J3',
    'OMEGA1', 'OMEGA2', 'OMEGA3', 'CurvOp',
    'wedge2', 'hodge_star', 'sd_split', 'kulkarni_nomizu', 'inner',
    'wedge_density', 'j_to_omega', 'j_from_omega', 'endo_to_bivector',
    'bivector_to_endo', 'check_symmetric', 'random_symmetric',
    'random_bianchi', 'random_sym4', 'random_frame', 'frame_orientation']

TOL = 1e-10

PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_PA = np.array([p[0] for p in PAIRS])
_PB = np.array([p[1] for p in PAIRS])

# _PAIR_POS[a, b]: index of e_a ^ e_b (up to sign) among PAIRS
_PAIR_POS = np.zeros((4, 4), dtype=np.intp)
for _p, (_a, _b) in enumerate(PAIRS):
    _PAIR_POS[_a, _b] = _PAIR_POS[_b, _a] = _p

# BIV_TENSOR[P, a, b] = <e_P, e_a ^ e_b>
BIV_TENSOR = np.zeros((6, 4, 4))
for _p, (_a, _b) in enumerate(PAIRS):
    BIV_TENSOR[_p, _a, _b] = 1.0
    BIV_TENSOR[_p, _b, _a] = -1.0


def _perm_sign(perm) -> int:
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def _star_matrix() -> np.ndarray:
    star = np.zeros((6, 6))
    for p, (a, b) in enumerate(PAIRS):
        c, d = [i for i in range(4) if i not in (a, b)]
        star[_PAIR_POS[c, d], p] = _perm_sign((a, b, c, d))
    return star


def _invalid(msg: str) -> WorkbenchError:
    return WorkbenchError(WorkbenchErrorCode.InvalidInput, msg)


class CurvOp:
    """
    Linear operator on bivectors, stored as a ``(..., 6, 6)`` array.

    Leading axes batch several operators (for example one per quadrature
    node). Arithmetic follows matrix semantics: ``R @ S`` composes,
    ``R @ b`` applies to a bivector array.
    """

    __array_ufunc__ = None

    def __init__(self, entries):
        entries = np.asarray(entries, dtype=float)
        if entries.shape[-2:] != (6, 6):
            raise _invalid(
                f'Bad curvature operator of shape {entries.shape}: '
                'expected (..., 6, 6).')
        if not np.all(np.isfinite(entries)):
            raise _invalid('Bad curvature operator: non-finite entries.')
        self.entries = entries

    @classmethod
    def from_tensor4(cls, t) -> 'CurvOp':
        """From a 4-argument tensor ``T[a, b, c, d] = <R(e_a^e_b), e_c^e_d>``."""
        t = np.asarray(t, dtype=float)
        # M[Q, P] = T[P, Q]
        return cls(t[..., _PA, _PB, :, :][..., _PA, _PB].swapaxes(-1, -2))

    def to_tensor4(self) -> np.ndarray:
        """The antisymmetric 4-argument form ``T[a, b, c, d]``."""
        m = self.entries
        return np.einsum('...qp,pab,qcd->...abcd', m, BIV_TENSOR, BIV_TENSOR)

    @property
    def shape(self):
        return self.entries.shape[:-2]

    @property
    def symmetry_tag(self) -> str:
        m = self.entries
        scale = 1e-12 * max(1.0, float(np.max(np.abs(m), initial=0.0)))
        mt = np.swapaxes(m, -1, -2)
        if np.max(np.abs(m - mt), initial=0.0) <= scale:
            return 'symmetric'
        if np.max(np.abs(m + mt), initial=0.0) <= scale:
            return 'skew'
        return 'general'

    @property
    def T(self) -> 'CurvOp':
        return CurvOp(np.swapaxes(self.entries, -1, -2))

    def trace(self):
        return np.trace(self.entries, axis1=-2, axis2=-1)

    def norm(self):
        return np.sqrt(inner(self, self))

    def sym(self) -> 'CurvOp':
        return CurvOp(0.5 * (self.entries + np.swapaxes(self.entries, -1, -2)))

    def skew(self) -> 'CurvOp':
        return CurvOp(0.5 * (self.entries - np.swapaxes(self.entries, -1, -2)))

    def __getitem__(self, idx) -> 'CurvOp':
        if not isinstance(idx, tuple):
            idx = (idx,)
        return CurvOp(self.entries[idx + (slice(None), slice(None))])

    def __add__(self, other):
        return CurvOp(self.entries + _entries(other))

    def __sub__(self, other):
        return CurvOp(self.entries - _entries(other))

    def __neg__(self):
        return CurvOp(-self.entries)

    def __mul__(self, scalar):
        scalar = np.asarray(scalar, dtype=float)
        return CurvOp(self.entries * scalar[..., None, None])

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        scalar = np.asarray(scalar, dtype=float)
        return CurvOp(self.entries / scalar[..., None, None])

    def __matmul__(self, other):
        if isinstance(other, CurvOp):
            return CurvOp(self.entries @ other.entries)
        other = np.asarray(other, dtype=float)
        return np.einsum('...qp,...p->...q', self.entries, other)

    def __rmatmul__(self, other):
        if isinstance(other, CurvOp):
            return CurvOp(other.entries @ self.entries)
        return NotImplemented

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.entries, _entries(other), rtol=0, atol=atol))

    def __repr__(self):
        if self.entries.ndim == 2:
            return f'CurvOp({self.symmetry_tag}, {self.entries.tolist()!r})'
        return f'CurvOp(shape={self.shape})'


def _entries(other):
    if isinstance(other, CurvOp):
        return other.entries
    raise TypeError(f'Expected CurvOp, not {type(other)}')


STAR = CurvOp(_star_matrix())
IDENTITY = CurvOp(np.eye(6))

J1 = np.array([
    [0., -1., 0., 0.],
    [1., 0., 0., 0.],
    [0., 0., 0., -1.],
    [0., 0., 1., 0.]])
J2 = np.array([
    [0., 0., -1., 0.],
    [0., 0., 0., 1.],
    [1., 0., 0., 0.],
    [0., -1., 0., 0.]])
J3 = J1 @ J2


def wedge2(v, w) -> np.ndarray:
    """``v ^ w`` as bivector components."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return v[..., _PA] * w[..., _PB] - v[..., _PB] * w[..., _PA]


def hodge_star(b) -> np.ndarray:
    return np.asarray(b, dtype=float) @ STAR.entries.T


def sd_split(b):
    """Self-dual and anti-self-dual parts ``(b+, b-)``."""
    b = np.asarray(b, dtype=float)
    sb = hodge_star(b)
    return 0.5 * (b + sb), 0.5 * (b - sb)


def wedge_density(a, b):
    """Coefficient of ``Vol`` in ``a ^ b`` for bivectors ``a``, ``b``."""
    return np.einsum('...p,...p->...', np.asarray(a, dtype=float), hodge_star(b))


def check_symmetric(m, name: str = 'form', tol: float = TOL) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (4, 4):
        raise _invalid(f'Bad {name} of shape {m.shape}: expected (..., 4, 4).')
    defect = float(np.max(np.abs(m - np.swapaxes(m, -1, -2)), initial=0.0))
    if defect > tol:
        raise _invalid(
            f'Bad {name}: not symmetric (defect {defect:.3g} > {tol:g}).')
    return m


def kulkarni_nomizu(xi, phi) -> CurvOp:
    """
    Kulkarni-Nomizu product of two symmetric bilinear forms.

    ``<(xi . phi)(X^Y), Z^W> = xi(X,Z)phi(Y,W) + xi(Y,W)phi(X,Z)
    - xi(Y,Z)phi(X,W) - xi(X,W)phi(Y,Z)``.
    """
    xi = check_symmetric(xi, 'xi')
    phi = check_symmetric(phi, 'phi')
    t = (np.einsum('...ac,...bd->...abcd', xi, phi)
         + np.einsum('...bd,...ac->...abcd', xi, phi)
         - np.einsum('...bc,...ad->...abcd', xi, phi)
         - np.einsum('...ad,...bc->...abcd', xi, phi))
    return CurvOp.from_tensor4(t)


def inner(a, b):
    """
    Inner product of two bivectors (Euclidean dot) or two operators
    (full trace pairing ``sum M_a * M_b``).
    """
    if isinstance(a, CurvOp) and isinstance(b, CurvOp):
        return np.einsum('...qp,...qp->...', a.entries, b.entries)
    if isinstance(a, CurvOp) or isinstance(b, CurvOp):
        raise _invalid(
            f'Bad inner product: kind mismatch between '
            f'{type(a).__name__} and {type(b).__name__}.')
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1:] != (6,) or b.shape[-1:] != (6,):
        raise _invalid(
            f'Bad inner product: expected bivectors, got shapes '
            f'{a.shape} and {b.shape}.')
    return np.einsum('...p,...p->...', a, b)


def endo_to_bivector(a) -> np.ndarray:
    """Bivector of the skew part of an endomorphism: ``b_ab = A[b, a]``."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a[..., _PB, _PA] - a[..., _PA, _PB])


def bivector_to_endo(b) -> np.ndarray:
    """Skew endomorphism with ``g(A e_a, e_b) = b_ab``."""
    b = np.asarray(b, dtype=float)
    return np.einsum('...p,pab->...ba', b, BIV_TENSOR)


def _acs_defects(j):
    eye = np.eye(4)
    square = float(np.max(np.abs(j @ j + eye)))
    orth = float(np.max(np.abs(j.T @ j - eye)))
    omega = endo_to_bivector(j)
    anti = float(np.max(np.abs(sd_split(omega)[1])))
    return square, orth, anti


def j_to_omega(j, tol: float = TOL) -> np.ndarray:
    """Kahler form ``omega_J(X, Y) = g(JX, Y)`` of a positive structure."""
    j = np.asarray(j, dtype=float)
    if j.shape != (4, 4):
        raise _invalid(f'Bad complex structure of shape {j.shape}.')
    square, orth, anti = _acs_defects(j)
    if square > tol:
        raise _invalid(f'Bad complex structure: |J^2 + I| = {square:.3g}.')
    if orth > tol:
        raise _invalid(f'Bad complex structure: not orthogonal ({orth:.3g}).')
    if anti > tol:
        raise _invalid(
            'Bad complex structure: not positive, its Kahler form has an '
            f'anti-self-dual part of size {anti:.3g}.')
    return endo_to_bivector(j)


def j_from_omega(omega, tol: float = TOL) -> np.ndarray:
    """Inverse of :func:`j_to_omega`."""
    omega = np.asarray(omega, dtype=float)
    norm2 = float(inner(omega, omega))
    if abs(norm2 - 2.0) > tol:
        raise _invalid(f'Bad Kahler form: norm squared {norm2!r}, expected 2.')
    anti = float(np.max(np.abs(sd_split(omega)[1])))
    if anti > tol:
        raise _invalid(
            f'Bad Kahler form: anti-self-dual part of size {anti:.3g}.')
    return bivector_to_endo(omega)


OMEGA1 = endo_to_bivector(J1)
OMEGA2 = endo_to_bivector(J2)
OMEGA3 = endo_to_bivector(J3)


def _batch(size) -> tuple:
    if size is None or size == ():
        return ()
    if isinstance(size, int):
        return (size,)
    return tuple(size)


def random_symmetric(rng: np.random.Generator, size=()) -> CurvOp:
    """Symmetric operator with independent upper entries uniform in [-1, 1]."""
    m = rng.uniform(-1.0, 1.0, size=_batch(size) + (6, 6))
    upper = np.triu(m)
    return CurvOp(upper + np.swapaxes(np.triu(m, 1), -1, -2))


def random_bianchi(rng: np.random.Generator, size=()) -> CurvOp:
    """Random member of the kernel of the Bianchi map."""
    r = random_symmetric(rng, size)
    t = np.einsum('...qp,qp->...', r.entries, STAR.entries) / 6.0
    return r - STAR * t


def random_sym4(rng: np.random.Generator, size=()) -> np.ndarray:
    m = rng.uniform(-1.0, 1.0, size=_batch(size) + (4, 4))
    return np.triu(m) + np.swapaxes(np.triu(m, 1), -1, -2)


def frame_orientation(frame) -> int:
    """+1 for a positively oriented frame (rows ``e_i``), -1 otherwise."""
    return 1 if np.linalg.det(np.asarray(frame, dtype=float)) > 0 else -1


def random_frame(rng: np.random.Generator, orientation: int = 1) -> np.ndarray:
    """
    Orthonormal frame with the requested orientation, rows ``e1..e4``.

    Gaussian draws with Gram determinant below 1e-8 are redrawn.
    """
    while True:
        m = rng.standard_normal((4, 4))
        if abs(np.linalg.det(m @ m.T)) < 1e-8:
            continue
        q, r = np.linalg.qr(m.T)
        frame = (q * np.sign(np.diag(r))).T
        if frame_orientation(frame) != orientation:
            frame[3] = -frame[3]
        return frame


def permutations_with_sign(n: int):
    for perm in itertools.permutations(range(n)):
        yield perm, _perm_sign(perm)
