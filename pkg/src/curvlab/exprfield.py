"""
Expression language and forward-mode derivative engine.

Scalar fields (metric entries, conformal factors, connection components)
are written in a small grammar::

    x1^2 + x2^2
    log(r2)
    4/(1 + r2)^2

and differentiated exactly with truncated multivariate Taylor jets
(:class:`Jet`). The jet arrays keep the coefficient axis last, so a whole
batch of points (and any tensor indices) ride along as leading axes.

See ``docs/grammar.rst`` for the grammar.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
import re
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .errors import ParseError, WorkbenchError, WorkbenchErrorCode

__all__ = [
    'Jet', 'JetBasis', 'jet_basis', 'einsum', 'stack',
    'exp', 'log', 'sin', 'cos', 'sqrt',
    'Expr', 'Num', 'Var', 'R2', 'Neg', 'BinOp', 'Call',
    'parse', 'eval_jet', 'eval_value', 'ScalarJet', 'coordinate_jets',
    'MAX_VARS']

_LOG = logging.getLogger(__name__)

MAX_VARS = 8
DIVISION_GUARD = 1e-300


def _domain_error(msg: str) -> WorkbenchError:
    return WorkbenchError(WorkbenchErrorCode.DomainError, msg)


class JetBasis:
    """
    Graded monomial basis of truncated Taylor polynomials.

    Monomials are ordered by total degree, so the basis of a lower order
    is a prefix of this one and truncation is a slice.
    """

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        monos = []
        self.sizes = []
        for degree in range(order + 1):
            for combo in itertools.combinations_with_replacement(
                    range(nvars), degree):
                alpha = [0] * nvars
                for var in combo:
                    alpha[var] += 1
                monos.append(tuple(alpha))
            self.sizes.append(len(monos))
        self.monomials = monos
        self.ncoef = len(monos)
        self.index = {alpha: i for i, alpha in enumerate(monos)}
        self.degree = np.array([sum(a) for a in monos])

        pa, pb, target = [], [], []
        for i, a in enumerate(monos):
            for j, b in enumerate(monos):
                if sum(a) + sum(b) > order:
                    continue
                pa.append(i)
                pb.append(j)
                target.append(self.index[tuple(x + y for x, y in zip(a, b))])
        self.pa = np.array(pa, dtype=np.intp)
        self.pb = np.array(pb, dtype=np.intp)
        self.scatter = np.zeros((len(pa), self.ncoef))
        self.scatter[np.arange(len(pa)), target] = 1.0

        # deriv_src[i][m]: coefficient feeding monomial m of d/dx_i
        self.deriv_src = []
        self.deriv_fac = []
        lower = self.sizes[order - 1] if order > 0 else 0
        for var in range(nvars):
            src = np.zeros(lower, dtype=np.intp)
            fac = np.zeros(lower)
            for m in range(lower):
                alpha = list(monos[m])
                alpha[var] += 1
                src[m] = self.index[tuple(alpha)]
                fac[m] = alpha[var]
            self.deriv_src.append(src)
            self.deriv_fac.append(fac)

    def unit(self, var: int) -> int:
        alpha = [0] * self.nvars
        alpha[var] = 1
        return self.index[tuple(alpha)]

    @functools.lru_cache(maxsize=None)
    def tensor_index(self, degree: int):
        """
        Index and factorial arrays turning coefficients of one degree into
        the full symmetric derivative tensor of that degree.
        """
        shape = (self.nvars,) * degree
        idx = np.zeros(shape, dtype=np.intp)
        fac = np.zeros(shape)
        for pos in itertools.product(range(self.nvars), repeat=degree):
            alpha = [0] * self.nvars
            for var in pos:
                alpha[var] += 1
            idx[pos] = self.index[tuple(alpha)]
            fac[pos] = float(np.prod([math.factorial(a) for a in alpha]))
        return idx, fac

    def __repr__(self):
        return f'JetBasis(nvars={self.nvars}, order={self.order})'


@functools.lru_cache(maxsize=None)
def jet_basis(nvars: int, order: int) -> JetBasis:
    if not 1 <= nvars <= MAX_VARS:
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            f'Bad number of variables {nvars}: must be in 1..{MAX_VARS}.')
    if order < 0:
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            f'Bad jet order {order}: must be non-negative.')
    return JetBasis(nvars, order)


class Jet:
    """
    Array of truncated Taylor polynomials.

    ``coef`` has shape ``(*shape, ncoef)``: the trailing axis holds the
    coefficients in :class:`JetBasis` order, everything before it is a
    batch of points and/or tensor indices. Coefficients are Taylor
    coefficients (derivative divided by multi-index factorial).
    """

    __array_ufunc__ = None

    def __init__(self, coef: np.ndarray, basis: JetBasis):
        coef = np.asarray(coef, dtype=float)
        if coef.shape[-1:] != (basis.ncoef,):
            raise WorkbenchError(
                WorkbenchErrorCode.InvalidInput,
                f'Bad jet coefficients of shape {coef.shape}: last axis '
                f'must have length {basis.ncoef}.')
        self.coef = coef
        self.basis = basis

    # construction

    @classmethod
    def constant(cls, value, basis: JetBasis) -> 'Jet':
        value = np.asarray(value, dtype=float)
        coef = np.zeros(value.shape + (basis.ncoef,))
        coef[..., 0] = value
        return cls(coef, basis)

    @classmethod
    def variable(cls, var: int, x, basis: JetBasis) -> 'Jet':
        x = np.asarray(x, dtype=float)
        jet = cls.constant(x, basis)
        if basis.order > 0:
            jet.coef[..., basis.unit(var)] = 1.0
        return jet

    def _lift(self, other) -> 'Jet':
        if isinstance(other, Jet):
            if other.basis is not self.basis:
                raise WorkbenchError(
                    WorkbenchErrorCode.InvalidInput,
                    f'Mismatched jet bases {self.basis!r} and '
                    f'{other.basis!r}.')
            return other
        return Jet.constant(other, self.basis)

    # shape plumbing

    @property
    def shape(self):
        return self.coef.shape[:-1]

    @property
    def ndim(self):
        return self.coef.ndim - 1

    @property
    def order(self):
        return self.basis.order

    @property
    def value(self) -> np.ndarray:
        return self.coef[..., 0]

    def __getitem__(self, idx) -> 'Jet':
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.coef[idx + (slice(None),)], self.basis)

    def transpose(self, *axes) -> 'Jet':
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Jet(self.coef.transpose(*axes, self.ndim), self.basis)

    @property
    def T(self) -> 'Jet':
        return self.transpose()

    def swapaxes(self, a: int, b: int) -> 'Jet':
        a = a if a >= 0 else a - 1
        b = b if b >= 0 else b - 1
        return Jet(np.swapaxes(self.coef, a, b), self.basis)

    def reshape(self, *shape) -> 'Jet':
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coef.reshape(shape + (self.basis.ncoef,)), self.basis)

    def sum(self, axis=None) -> 'Jet':
        if axis is None:
            axis = tuple(range(self.ndim))
        elif isinstance(axis, int):
            axis = (axis,)
        axis = tuple(a if a >= 0 else a - 1 for a in axis)
        return Jet(self.coef.sum(axis=axis), self.basis)

    def broadcast_to(self, shape) -> 'Jet':
        return Jet(
            np.broadcast_to(self.coef, tuple(shape) + (self.basis.ncoef,)),
            self.basis)

    def truncate(self, order: int) -> 'Jet':
        if order > self.order:
            raise WorkbenchError(
                WorkbenchErrorCode.InvalidInput,
                f'Cannot truncate a jet of order {self.order} to {order}.')
        basis = jet_basis(self.basis.nvars, order)
        return Jet(self.coef[..., :basis.ncoef], basis)

    # arithmetic

    def __neg__(self):
        return Jet(-self.coef, self.basis)

    def __pos__(self):
        return self

    def __add__(self, other):
        other = self._lift(other)
        return Jet(self.coef + other.coef, self.basis)

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return Jet(self.coef - other.coef, self.basis)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.coef * other[..., None], self.basis)
        other = self._lift(other)
        b = self.basis
        return Jet((self.coef[..., b.pa] * other.coef[..., b.pb]) @ b.scatter, b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            if np.any(np.abs(other) < DIVISION_GUARD):
                raise _domain_error('Division by a value below 1e-300.')
            return Jet(self.coef / other[..., None], self.basis)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, power):
        if isinstance(power, Jet):
            return (power * self.log()).exp()
        if float(power).is_integer():
            n = int(power)
            if n < 0:
                return self.reciprocal() ** (-n)
            result = Jet.constant(np.ones(self.shape), self.basis)
            base = self
            # square and multiply
            while n:
                if n & 1:
                    result = result * base
                n >>= 1
                if n:
                    base = base * base
            return result
        return self.real_power(float(power))

    # elementary functions

    def _series(self, coeffs) -> 'Jet':
        """Compose with the Taylor series sum_k coeffs[k] * (u - u0)^k."""
        delta = Jet(self.coef.copy(), self.basis)
        delta.coef[..., 0] = 0.0
        result = Jet.constant(coeffs[-1], self.basis)
        for c in reversed(coeffs[:-1]):
            result = result * delta + c
        return result

    def exp(self) -> 'Jet':
        e0 = np.exp(self.value)
        return self._series(
            [e0 / math.factorial(k) for k in range(self.order + 1)])

    def log(self) -> 'Jet':
        u0 = self.value
        if np.any(u0 <= 0.0):
            raise _domain_error(
                f'Bad log argument {float(np.min(u0))!r}: must be positive.')
        coeffs = [np.log(u0)]
        for k in range(1, self.order + 1):
            coeffs.append((-1.0) ** (k + 1) / (k * u0 ** k))
        return self._series(coeffs)

    def sin(self) -> 'Jet':
        s, c = np.sin(self.value), np.cos(self.value)
        cycle = [s, c, -s, -c]
        return self._series([
            cycle[k % 4] / math.factorial(k) for k in range(self.order + 1)])

    def cos(self) -> 'Jet':
        s, c = np.sin(self.value), np.cos(self.value)
        cycle = [c, -s, -c, s]
        return self._series([
            cycle[k % 4] / math.factorial(k) for k in range(self.order + 1)])

    def reciprocal(self) -> 'Jet':
        u0 = self.value
        if np.any(np.abs(u0) < DIVISION_GUARD):
            raise _domain_error('Division by a value below 1e-300.')
        return self._series([
            (-1.0) ** k / u0 ** (k + 1) for k in range(self.order + 1)])

    def real_power(self, p: float) -> 'Jet':
        u0 = self.value
        if np.any(u0 <= 0.0):
            raise _domain_error(
                f'Bad base {float(np.min(u0))!r} for real power {p!r}: '
                'must be positive.')
        coeffs = []
        falling = 1.0
        for k in range(self.order + 1):
            coeffs.append(falling / math.factorial(k) * u0 ** (p - k))
            falling *= p - k
        return self._series(coeffs)

    def sqrt(self) -> 'Jet':
        u0 = self.value
        if np.any(u0 < 0.0):
            raise _domain_error(
                f'Bad sqrt argument {float(np.min(u0))!r}: must be '
                'non-negative.')
        if np.any(u0 == 0.0):
            if self.order > 0:
                raise _domain_error(
                    'Bad sqrt argument 0.0: not differentiable at zero.')
            return Jet(np.sqrt(self.coef), self.basis)
        return self.real_power(0.5)

    # derivatives

    def deriv(self, var: int) -> 'Jet':
        """Partial derivative along ``x_var``, one order lower."""
        if self.order == 0:
            raise WorkbenchError(
                WorkbenchErrorCode.InvalidInput,
                'Cannot differentiate a jet of order 0.')
        b = self.basis
        coef = self.coef[..., b.deriv_src[var]] * b.deriv_fac[var]
        return Jet(coef, jet_basis(b.nvars, self.order - 1))

    def grad(self) -> 'Jet':
        """All partials, with the derivative index appended as last axis."""
        return stack(
            [self.deriv(i) for i in range(self.basis.nvars)], axis=-1)

    def derivative_tensor(self, degree: int) -> np.ndarray:
        """Values of all partial derivatives of the given degree."""
        if degree == 0:
            return self.value
        if degree > self.order:
            raise WorkbenchError(
                WorkbenchErrorCode.InvalidInput,
                f'Derivatives of degree {degree} need a jet of order '
                f'>= {degree}, got {self.order}.')
        idx, fac = self.basis.tensor_index(degree)
        return self.coef[..., idx] * fac

    def __repr__(self):
        return f'Jet(shape={self.shape}, order={self.order})'


JetLike = Union[Jet, np.ndarray, float]


def _first_basis(operands):
    for op in operands:
        if isinstance(op, Jet):
            return op.basis
    return None


def stack(items: Sequence[JetLike], axis: int = 0) -> Jet:
    """``numpy.stack`` for jets. Plain arrays are lifted to constants."""
    basis = _first_basis(items)
    if basis is None:
        return np.stack(items, axis=axis)
    jets = [it if isinstance(it, Jet) else Jet.constant(it, basis)
            for it in items]
    coefs = np.broadcast_arrays(*[j.coef for j in jets])
    jaxis = axis if axis >= 0 else axis - 1
    return Jet(np.stack(coefs, axis=jaxis), basis)


def _split_subscripts(subscripts: str):
    subscripts = subscripts.replace(' ', '')
    if '->' not in subscripts:
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            f'Bad einsum subscripts {subscripts!r}: explicit output needed.')
    inputs, output = subscripts.split('->')
    return inputs.split(','), output


def einsum(subscripts: str, *operands: JetLike) -> JetLike:
    """
    ``numpy.einsum`` where any one or two operands may be jets.

    Subscripts must use lowercase letters and an explicit ``->`` output.
    """
    inputs, output = _split_subscripts(subscripts)
    if len(inputs) != len(operands):
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            f'Bad einsum call: {len(inputs)} subscripts for '
            f'{len(operands)} operands.')
    jets = [i for i, op in enumerate(operands) if isinstance(op, Jet)]
    if not jets:
        return np.einsum(subscripts, *operands)
    basis = operands[jets[0]].basis
    if len(jets) == 1:
        terms = [s + 'Z' if i == jets[0] else s for i, s in enumerate(inputs)]
        arrays = [op.coef if isinstance(op, Jet) else op for op in operands]
        coef = np.einsum(','.join(terms) + '->' + output + 'Z', *arrays)
        return Jet(coef, basis)
    if len(jets) == 2:
        a_pos, b_pos = jets
        terms = []
        arrays = []
        for i, (s, op) in enumerate(zip(inputs, operands)):
            if i == a_pos:
                terms.append(s + 'Z')
                arrays.append(op.coef[..., basis.pa])
            elif i == b_pos:
                if operands[b_pos].basis is not basis:
                    raise WorkbenchError(
                        WorkbenchErrorCode.InvalidInput,
                        'Mismatched jet bases in einsum.')
                terms.append(s + 'Z')
                arrays.append(op.coef[..., basis.pb])
            else:
                terms.append(s)
                arrays.append(op)
        pairs = np.einsum(','.join(terms) + '->' + output + 'Z', *arrays)
        return Jet(pairs @ basis.scatter, basis)
    # fold jets pairwise from the left
    first, second = inputs[0], inputs[1]
    rest_letters = set(''.join(inputs[2:]) + output)
    keep = ''.join(dict.fromkeys(
        c for c in first + second if c in rest_letters or c == '.'))
    if '...' in first or '...' in second:
        keep = '...' + keep.replace('.', '')
    partial = einsum(f'{first},{second}->{keep}', operands[0], operands[1])
    return einsum(
        ','.join([keep] + inputs[2:]) + '->' + output,
        partial, *operands[2:])


def _dispatch(name: str):
    def fn(u):
        if isinstance(u, Expr):
            return Call(name, u)
        if isinstance(u, Jet):
            return getattr(u, name)()
        return _NUMPY_FUNCS[name](np.asarray(u, dtype=float))
    fn.__name__ = name
    fn.__doc__ = f'``{name}`` of an expression, a jet or an array.'
    return fn


def _np_log(u):
    if np.any(u <= 0.0):
        raise _domain_error(
            f'Bad log argument {float(np.min(u))!r}: must be positive.')
    return np.log(u)


def _np_sqrt(u):
    if np.any(u < 0.0):
        raise _domain_error(
            f'Bad sqrt argument {float(np.min(u))!r}: must be non-negative.')
    return np.sqrt(u)


_NUMPY_FUNCS = {
    'exp': np.exp,
    'log': _np_log,
    'sin': np.sin,
    'cos': np.cos,
    'sqrt': _np_sqrt}

exp = _dispatch('exp')
log = _dispatch('log')
sin = _dispatch('sin')
cos = _dispatch('cos')
sqrt = _dispatch('sqrt')


# expressions

class Expr:
    """
    Immutable expression tree.

    Built by :func:`parse` or programmatically through Python operators,
    e.g. ``4 / (1 + R2()) ** 2``.
    """

    def _eval(self, xs, r2):
        raise NotImplementedError

    def max_var(self) -> int:
        """Largest coordinate index used (1-based), 0 if none."""
        return max((c.max_var() for c in self.children()), default=0)

    def uses_r2(self) -> bool:
        return any(c.uses_r2() for c in self.children())

    def children(self):
        return ()

    def evaluate(self, x):
        """Plain values at points ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        xs = [x[..., i] for i in range(x.shape[-1])]
        return np.broadcast_to(
            np.asarray(self._eval(xs, _LazyR2(xs)), dtype=float),
            x.shape[:-1]).copy()

    def jet(self, x, order: int) -> Jet:
        """Jet of the given order at points ``x`` of shape ``(..., n)``."""
        return self.jet_from(coordinate_jets(x, order))

    def jet_from(self, xs: Sequence[Jet]) -> Jet:
        """Jet given already-seeded coordinate jets."""
        result = self._eval(list(xs), _LazyR2(xs))
        if not isinstance(result, Jet):
            result = Jet.constant(
                np.broadcast_to(result, xs[0].shape), xs[0].basis)
        return result

    def _check_vars(self, nvars: int):
        if self.max_var() > nvars:
            raise WorkbenchError(
                WorkbenchErrorCode.InvalidInput,
                f'Bad expression "{self}": uses x{self.max_var()} but the '
                f'point has {nvars} coordinates.')

    # builders

    def __add__(self, other):
        return BinOp('+', self, _wrap(other))

    def __radd__(self, other):
        return BinOp('+', _wrap(other), self)

    def __sub__(self, other):
        return BinOp('-', self, _wrap(other))

    def __rsub__(self, other):
        return BinOp('-', _wrap(other), self)

    def __mul__(self, other):
        return BinOp('*', self, _wrap(other))

    def __rmul__(self, other):
        return BinOp('*', _wrap(other), self)

    def __truediv__(self, other):
        return BinOp('/', self, _wrap(other))

    def __rtruediv__(self, other):
        return BinOp('/', _wrap(other), self)

    def __pow__(self, other):
        return BinOp('^', self, _wrap(other))

    def __neg__(self):
        return Neg(self)


def _wrap(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Num(float(value))


class _LazyR2:
    """Sum of squared coordinates, computed on first use."""

    def __init__(self, xs):
        self._xs = xs
        self._value = None

    def get(self):
        if self._value is None:
            total = self._xs[0] * self._xs[0]
            for x in self._xs[1:]:
                total = total + x * x
            self._value = total
        return self._value


def _fmt_num(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float

    def _eval(self, xs, r2):
        return self.value

    def __str__(self):
        return _fmt_num(self.value)


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int   # 1-based

    def _eval(self, xs, r2):
        if self.index > len(xs):
            raise WorkbenchError(
                WorkbenchErrorCode.InvalidInput,
                f'Bad coordinate x{self.index}: the point has '
                f'{len(xs)} coordinates.')
        return xs[self.index - 1]

    def max_var(self):
        return self.index

    def __str__(self):
        return f'x{self.index}'


@dataclass(frozen=True, eq=True)
class R2(Expr):
    def _eval(self, xs, r2):
        return r2.get()

    def uses_r2(self):
        return True

    def __str__(self):
        return 'r2'


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def _eval(self, xs, r2):
        return -self.arg._eval(xs, r2)

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f'(-{self.arg})'


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def _eval(self, xs, r2):
        a = self.left._eval(xs, r2)
        if self.op == '^':
            return _power(a, self.right, xs, r2)
        b = self.right._eval(xs, r2)
        if self.op == '+':
            return a + b
        if self.op == '-':
            return a - b
        if self.op == '*':
            if isinstance(b, Jet) and not isinstance(a, Jet):
                return b * a
            return a * b
        if isinstance(b, Jet):
            return b.reciprocal() * a
        b = np.asarray(b, dtype=float)
        if np.any(np.abs(b) < DIVISION_GUARD):
            raise _domain_error('Division by a value below 1e-300.')
        return a / b

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f'({self.left} {self.op} {self.right})'


def _power(base, exponent: Expr, xs, r2):
    if isinstance(exponent, Num) or (
            isinstance(exponent, Neg) and isinstance(exponent.arg, Num)):
        p = float(exponent._eval(xs, r2))
        if isinstance(base, Jet):
            return base ** p
        base = np.asarray(base, dtype=float)
        if p.is_integer():
            if p < 0 and np.any(np.abs(base) < DIVISION_GUARD):
                raise _domain_error('Division by a value below 1e-300.')
            return base ** int(p)
        if np.any(base < 0.0):
            raise _domain_error(
                f'Bad base {float(np.min(base))!r} for real power {p!r}: '
                'must be non-negative.')
        return base ** p
    p = exponent._eval(xs, r2)
    if isinstance(base, Jet) or isinstance(p, Jet):
        if not isinstance(base, Jet):
            base = Jet.constant(np.broadcast_to(base, p.shape), p.basis)
        return (base.log() * p).exp()
    return np.exp(p * _np_log(np.asarray(base, dtype=float)))


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    arg: Expr

    def _eval(self, xs, r2):
        a = self.arg._eval(xs, r2)
        if isinstance(a, Jet):
            return getattr(a, self.func)()
        return _NUMPY_FUNCS[self.func](np.asarray(a, dtype=float))

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f'{self.func}({self.arg})'


# parser

_FUNCS = frozenset(_NUMPY_FUNCS)
_TOKEN_RE = re.compile(r'''
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^(),])
''', re.VERBOSE)

_ATOM_START = ('number', 'identifier', '(', '-')


class _Token(NamedTuple):
    kind: str      # 'num', 'ident', 'op', 'eof'
    text: str
    offset: int


def _tokenize(src: str):
    tokens = []
    pos = 0
    raw = src.encode('utf-8')
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            offset = len(src[:pos].encode('utf-8'))
            raise ParseError(
                f'Bad expression "{src}": unexpected character '
                f'{src[pos]!r} at position {offset}.',
                offset, _ATOM_START)
        kind = m.lastgroup
        if kind != 'ws':
            text = m.group(kind)
            if text == '**':
                text = '^'
            tokens.append(_Token(
                kind, text, len(src[:pos].encode('utf-8'))))
        pos = m.end()
    tokens.append(_Token('eof', '', len(raw)))
    return tokens


class _Parser:
    def __init__(self, src: str, nvars: int):
        self.src = src
        self.nvars = nvars
        self.tokens = _tokenize(src)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected):
        tok = self.peek()
        found = 'end of input' if tok.kind == 'eof' else repr(tok.text)
        exp = ', '.join(sorted(expected))
        raise ParseError(
            f'Bad expression "{self.src}": found {found} at position '
            f'{tok.offset}, expected one of: {exp}.',
            tok.offset, expected)

    def expect(self, text: str):
        tok = self.peek()
        if tok.kind == 'op' and tok.text == text:
            return self.next()
        extra = ('+', '-', '*', '/', '^') if text == ')' else ()
        self.fail((text,) + extra)

    def parse(self) -> Expr:
        expr = self.expr()
        if self.peek().kind != 'eof':
            self.fail(('+', '-', '*', '/', '^', 'end of input'))
        return expr

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind == 'op' and self.peek().text in '+-':
            op = self.next().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek().kind == 'op' and self.peek().text in ('*', '/'):
            op = self.next().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == 'op' and tok.text == '-':
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == 'op' and tok.text == '^':
            self.next()
            return BinOp('^', base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == 'num':
            self.next()
            value = float(tok.text)
            if not math.isfinite(value):
                raise ParseError(
                    f'Bad expression "{self.src}": number {tok.text!r} at '
                    f'position {tok.offset} is not finite.',
                    tok.offset)
            return Num(value)
        if tok.kind == 'op' and tok.text == '(':
            self.next()
            node = self.expr()
            self.expect(')')
            return node
        if tok.kind == 'ident':
            self.next()
            return self.identifier(tok)
        self.fail(_ATOM_START)

    def identifier(self, tok: _Token) -> Expr:
        name = tok.text
        if name in _FUNCS:
            self.expect('(')
            arg = self.expr()
            self.expect(')')
            return Call(name, arg)
        if name == 'r2':
            return R2()
        if name == 'pi':
            return Num(math.pi)
        m = re.fullmatch(r'x([1-9][0-9]*)', name)
        if m and int(m.group(1)) <= self.nvars:
            return Var(int(m.group(1)))
        known = [f'x1..x{self.nvars}', 'r2', 'pi'] + sorted(_FUNCS)
        raise ParseError(
            f'Bad expression "{self.src}": unknown identifier {name!r} at '
            f'position {tok.offset}. Known: {", ".join(known)}.',
            tok.offset, known,
            code=WorkbenchErrorCode.UnknownIdentifier)


def parse(src: str, nvars: int = MAX_VARS) -> Expr:
    """
    Parse an expression.

    Precedence from tightest: ``^`` (right associative), unary ``-``,
    ``*`` and ``/``, then ``+`` and ``-``. Coordinates are ``x1`` up to
    ``x<nvars>``.
    """
    if not isinstance(src, str):
        raise TypeError(f'Expression source must be str, not {type(src)}')
    return _Parser(src, nvars).parse()


def coordinate_jets(x, order: int):
    """Seeded coordinate jets ``x_i + dx_i`` at points ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    basis = jet_basis(n, order)
    return [Jet.variable(i, x[..., i], basis) for i in range(n)]


class ScalarJet(NamedTuple):
    """Value and raw coordinate derivatives of a scalar field."""
    value: float
    grad: Optional[np.ndarray]
    hess: Optional[np.ndarray]
    third: Optional[np.ndarray]


def eval_jet(e: Expr, x, order: int = 3) -> ScalarJet:
    """
    Derivatives of ``e`` at the point ``x`` up to ``order`` (0..3).

    Computed at order 3 and truncated, so lower orders are exact
    truncations of the full jet.
    """
    if order not in (0, 1, 2, 3):
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            f'Bad jet order {order}: must be 0, 1, 2 or 3.')
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise WorkbenchError(
            WorkbenchErrorCode.InvalidInput,
            f'Bad point of shape {x.shape}: expected a single point.')
    e._check_vars(len(x))
    jet = e.jet(x, 3)
    parts = [float(jet.value)]
    for degree in (1, 2, 3):
        parts.append(
            jet.derivative_tensor(degree) if degree <= order else None)
    return ScalarJet(*parts)


def eval_value(e: Expr, x) -> np.ndarray:
    """Plain evaluation at one point or a batch of points."""
    x = np.asarray(x, dtype=float)
    e._check_vars(x.shape[-1])
    return e.evaluate(x)
