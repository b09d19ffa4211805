"""Dense small-dimension linear algebra and second-order forward jets.

A ``Jet2`` carries a value together with its gradient and Hessian with
respect to a fixed set of active variables. Values may be scalars or whole
arrays of entries sharing those variables, so matrices of jets are stored as
three numpy arrays instead of object arrays. Derivative axes always trail the
value axes.

``Dual`` numbers (first order, generic parts) are nested over jets when one
more derivative is needed than a jet holds, e.g. tangent vectors of a
parameterization whose own 2-jets are required.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from core.errors import (
    AsymmetricMatrix,
    DimensionMismatch,
    JetFailure,
    NoConvergence,
    NonSPD,
    NotDegenerate,
    RankDeficient,
)

logger = logging.getLogger(__name__)

RANK_TOL = 1e-8
SYMMETRY_TOL = 1e-9
# Matrices with a larger condition number are treated as singular
SINGULAR_COND = 1e12


# ---------------------------------------------------------------------------
# Pointwise matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymMatrix:
    """Symmetric real matrix (stored symmetrized)"""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionMismatch(f"SymMatrix needs a square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a))))
        asym = float(np.max(np.abs(a - a.T)))
        if asym > SYMMETRY_TOL * scale:
            raise AsymmetricMatrix(f"Matrix is not symmetric (max |A - A^T| = {asym:.3e})")
        object.__setattr__(self, 'entries', 0.5 * (a + a.T))

    @property
    def dimension(self):
        return self.entries.shape[0]


def _as_sym(matrix):
    return matrix if isinstance(matrix, SymMatrix) else SymMatrix(matrix)


def apply_sign_convention(vectors):
    """Flip columns so the first non-negligible coordinate is positive"""
    out = np.array(vectors, dtype=float, copy=True)
    flat = out.ndim == 1
    if flat:
        out = out[:, None]
    for j in range(out.shape[1]):
        col = out[:, j]
        scale = np.max(np.abs(col))
        if scale == 0.0:
            continue
        first = np.flatnonzero(np.abs(col) > 1e-9 * scale)[0]
        if col[first] < 0.0:
            out[:, j] = -col
    return out[:, 0] if flat else out


def generalized_symmetric_eigen(A, G):
    """
    Solve A v = lambda G v for symmetric A and SPD G.

    Returns:
        (eigenvalues ascending, eigenvectors as G-orthonormal columns)
    """
    a = _as_sym(A).entries
    g = _as_sym(G).entries
    if a.shape != g.shape:
        raise DimensionMismatch(f"Shapes differ: A {a.shape}, G {g.shape}")

    try:
        scipy.linalg.cholesky(g, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NonSPD("Cholesky factorization of G failed", G=g) from exc

    try:
        values, vectors = scipy.linalg.eigh(a, g)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence("Symmetric eigensolver did not converge") from exc

    return values, apply_sign_convention(vectors)


def degenerate_null_direction(g, rank_tol=RANK_TOL):
    """
    Return the unit radical direction of a metric with exactly one
    degenerate direction.

    A singular value counts as zero when it is below rank_tol times the
    largest one.
    """
    m = _as_sym(g).entries
    _, singular, vt = np.linalg.svd(m)
    top = singular[0]
    if top == 0.0:
        if m.shape[0] == 1:
            return np.array([1.0])
        raise RankDeficient("Metric vanishes identically")

    small = int(np.sum(singular < rank_tol * top))
    if small == 0:
        raise NotDegenerate(
            f"No singular value below {rank_tol:g} relative (smallest {singular[-1] / top:.3e})",
            singular_values=singular,
        )
    if small > 1:
        raise RankDeficient(f"{small} singular values below {rank_tol:g} relative",
                            singular_values=singular)

    return apply_sign_convention(vt[-1])


# ---------------------------------------------------------------------------
# Jets
# ---------------------------------------------------------------------------

class Jet2:
    """
    Second-order forward jet.

    value has shape S, gradient S + (m,), hessian S + (m, m). A jet whose
    hessian is None is first order: its second derivatives are unknown and
    every result built from it is first order too.
    """

    __slots__ = ('value', 'gradient', 'hessian')
    # keep numpy from broadcasting jets into object arrays
    __array_ufunc__ = None

    def __init__(self, value, gradient, hessian=None):
        self.value = np.asarray(value, dtype=float)
        self.gradient = np.asarray(gradient, dtype=float)
        self.hessian = None if hessian is None else np.asarray(hessian, dtype=float)
        if self.gradient.shape[:-1] != self.value.shape:
            raise DimensionMismatch(
                f"Gradient shape {self.gradient.shape} does not extend value shape {self.value.shape}")
        if self.hessian is not None and self.hessian.shape != self.gradient.shape + self.gradient.shape[-1:]:
            raise DimensionMismatch(f"Hessian shape {self.hessian.shape} does not match gradient")

    # -- construction -----------------------------------------------------

    @classmethod
    def variable(cls, value, index, nvars):
        gradient = np.zeros(nvars)
        gradient[index] = 1.0
        return cls(float(value), gradient, np.zeros((nvars, nvars)))

    @classmethod
    def variables(cls, point):
        point = np.asarray(point, dtype=float).ravel()
        return [cls.variable(x, i, point.size) for i, x in enumerate(point)]

    @classmethod
    def constant(cls, value, nvars, order=2):
        value = np.asarray(value, dtype=float)
        hessian = np.zeros(value.shape + (nvars, nvars)) if order == 2 else None
        return cls(value, np.zeros(value.shape + (nvars,)), hessian)

    @staticmethod
    def _reference(items):
        for item in items:
            if isinstance(item, Jet2):
                return item
        raise DimensionMismatch("At least one jet is needed to fix the active variables")

    @classmethod
    def _lift_all(cls, items):
        ref = cls._reference(items)
        order = 2 if all(i.hessian is not None for i in items if isinstance(i, Jet2)) else 1
        lifted = []
        for item in items:
            if isinstance(item, Jet2):
                if item.nvars != ref.nvars:
                    raise DimensionMismatch("Jets depend on different numbers of variables")
                lifted.append(item if order == 2 else item.truncate())
            else:
                lifted.append(cls.constant(item, ref.nvars, order))
        return lifted, order

    @classmethod
    def stack(cls, items, axis=0):
        """Stack jets (or constants) along a new leading value axis"""
        lifted, order = cls._lift_all(list(items))
        return cls(
            np.stack([j.value for j in lifted], axis=axis),
            np.stack([j.gradient for j in lifted], axis=axis),
            np.stack([j.hessian for j in lifted], axis=axis) if order == 2 else None,
        )

    @classmethod
    def concatenate(cls, items, axis=0):
        lifted, order = cls._lift_all(list(items))
        return cls(
            np.concatenate([j.value for j in lifted], axis=axis),
            np.concatenate([j.gradient for j in lifted], axis=axis),
            np.concatenate([j.hessian for j in lifted], axis=axis) if order == 2 else None,
        )

    # -- shape ------------------------------------------------------------

    @property
    def nvars(self):
        return self.gradient.shape[-1]

    @property
    def shape(self):
        return self.value.shape

    @property
    def order(self):
        return 1 if self.hessian is None else 2

    def __getitem__(self, key):
        return Jet2(self.value[key], self.gradient[key],
                    None if self.hessian is None else self.hessian[key])

    def transpose(self, *axes):
        k = self.value.ndim
        axes = tuple(axes) if axes else tuple(reversed(range(k)))
        return Jet2(self.value.transpose(axes),
                    self.gradient.transpose(axes + (k,)),
                    None if self.hessian is None else self.hessian.transpose(axes + (k, k + 1)))

    def reshape(self, *shape):
        m = self.nvars
        return Jet2(self.value.reshape(shape),
                    self.gradient.reshape(shape + (m,)),
                    None if self.hessian is None else self.hessian.reshape(shape + (m, m)))

    def truncate(self):
        """Drop the second order"""
        return Jet2(self.value, self.gradient, None)

    # -- derivatives ------------------------------------------------------

    def derivative(self):
        """
        First-order jet of all first partials; the new last value axis
        indexes the differentiation variable.
        """
        if self.hessian is None:
            raise JetFailure("A first-order jet cannot be differentiated again")
        return Jet2(self.gradient, self.hessian, None)

    def partial(self, index):
        if self.hessian is None:
            raise JetFailure("A first-order jet cannot be differentiated again")
        return Jet2(self.gradient[..., index], self.hessian[..., index, :], None)

    def directional(self, direction):
        """Derivative along a constant vector of the active variables"""
        if self.hessian is None:
            raise JetFailure("A first-order jet cannot be differentiated again")
        direction = np.asarray(direction, dtype=float)
        return Jet2(self.gradient @ direction,
                    np.einsum('...ab,a->...b', self.hessian, direction), None)

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet2):
            if other.nvars != self.nvars:
                raise DimensionMismatch("Jets depend on different numbers of variables")
            return other
        if isinstance(other, Dual):
            return NotImplemented
        return Jet2.constant(other, self.nvars, self.order)

    def _apply(self, f0, d1, d2):
        """Elementwise composition with a scalar function of known derivatives"""
        d1 = np.asarray(d1, dtype=float)
        gradient = d1[..., None] * self.gradient
        hessian = None
        if self.hessian is not None:
            d2 = np.asarray(d2, dtype=float)
            hessian = (d1[..., None, None] * self.hessian
                       + d2[..., None, None] * self.gradient[..., :, None] * self.gradient[..., None, :])
        return Jet2(f0, gradient, hessian)

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        hessian = None
        if self.hessian is not None and other.hessian is not None:
            hessian = self.hessian + other.hessian
        return Jet2(self.value + other.value, self.gradient + other.gradient, hessian)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.value, -self.gradient, None if self.hessian is None else -self.hessian)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        a, b = self, other
        gradient = a.gradient * b.value[..., None] + a.value[..., None] * b.gradient
        hessian = None
        if a.hessian is not None and b.hessian is not None:
            hessian = (a.hessian * b.value[..., None, None]
                       + a.gradient[..., :, None] * b.gradient[..., None, :]
                       + b.gradient[..., :, None] * a.gradient[..., None, :]
                       + a.value[..., None, None] * b.hessian)
        return Jet2(a.value * b.value, gradient, hessian)

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        if np.any(v == 0.0):
            raise JetFailure("Division by a jet with zero value")
        return self._apply(1.0 / v, -1.0 / v ** 2, 2.0 / v ** 3)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, (Jet2, Dual)):
            return NotImplemented
        p = float(exponent)
        v = self.value
        zero = np.zeros_like(v)
        d1 = p * v ** (p - 1.0) if p != 0.0 else zero
        d2 = p * (p - 1.0) * v ** (p - 2.0) if p not in (0.0, 1.0) else zero
        return self._apply(v ** p, d1, d2)

    def __abs__(self):
        return self * np.sign(self.value)

    def __repr__(self):
        return f"Jet2(value={self.value!r}, order={self.order}, nvars={self.nvars})"


# A scalar jet is a zero-dimensional block
Jet2Scalar = Jet2


def jet_block(nested, nvars, order=2):
    """Jet2 from a (nested) list of scalar jets and plain numbers"""
    shape = []
    level = nested
    while isinstance(level, (list, tuple)):
        shape.append(len(level))
        level = level[0] if level else None
    lifted = []
    for item in _flatten(nested):
        if isinstance(item, Jet2):
            if item.nvars != nvars:
                raise DimensionMismatch(f"Jet has {item.nvars} variables, expected {nvars}")
            lifted.append(item if order == 2 or item.hessian is None else item.truncate())
        else:
            lifted.append(Jet2.constant(float(item), nvars, order))
    if any(j.hessian is None for j in lifted):
        lifted = [j.truncate() for j in lifted]
    return Jet2.stack(lifted).reshape(*shape)


def _flatten(nested):
    if isinstance(nested, (list, tuple)):
        for item in nested:
            yield from _flatten(item)
    else:
        yield nested


def jet_einsum(subscripts, a, b):
    """
    Bilinear einsum with the product rule; either operand may be a plain
    array (a constant).
    """
    if not isinstance(a, Jet2) and not isinstance(b, Jet2):
        return np.einsum(subscripts, a, b)
    inputs, out = subscripts.replace(' ', '').split('->')
    sa, sb = inputs.split(',')
    y, z = [c for c in 'yzwxYZWX' if c not in subscripts][:2]

    ref = a if isinstance(a, Jet2) else b
    if isinstance(a, Jet2) and isinstance(b, Jet2) and a.nvars != b.nvars:
        raise DimensionMismatch("Jets depend on different numbers of variables")
    a0 = a.value if isinstance(a, Jet2) else np.asarray(a, dtype=float)
    b0 = b.value if isinstance(b, Jet2) else np.asarray(b, dtype=float)

    value = np.einsum(f'{sa},{sb}->{out}', a0, b0)
    gradient = np.zeros(value.shape + (ref.nvars,))
    if isinstance(a, Jet2):
        gradient = gradient + np.einsum(f'{sa}{y},{sb}->{out}{y}', a.gradient, b0)
    if isinstance(b, Jet2):
        gradient = gradient + np.einsum(f'{sa},{sb}{y}->{out}{y}', a0, b.gradient)

    second = all(x.hessian is not None for x in (a, b) if isinstance(x, Jet2))
    if not second:
        return Jet2(value, gradient, None)

    hessian = np.zeros(value.shape + (ref.nvars, ref.nvars))
    if isinstance(a, Jet2):
        hessian = hessian + np.einsum(f'{sa}{y}{z},{sb}->{out}{y}{z}', a.hessian, b0)
    if isinstance(b, Jet2):
        hessian = hessian + np.einsum(f'{sa},{sb}{y}{z}->{out}{y}{z}', a0, b.hessian)
    if isinstance(a, Jet2) and isinstance(b, Jet2):
        cross = np.einsum(f'{sa}{y},{sb}{z}->{out}{y}{z}', a.gradient, b.gradient)
        hessian = hessian + cross + np.swapaxes(cross, -1, -2)
    return Jet2(value, gradient, hessian)


def jet_inverse(matrix):
    """Inverse of a square jet matrix, derivatives from d(A^-1) = -A^-1 dA A^-1"""
    a0 = matrix.value
    if a0.ndim != 2 or a0.shape[0] != a0.shape[1]:
        raise DimensionMismatch(f"Cannot invert a jet of shape {a0.shape}")
    cond = np.linalg.cond(a0)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise JetFailure(f"Jet matrix is numerically singular (cond {cond:.3e})")
    inv0 = np.linalg.inv(a0)
    gradient = -np.einsum('ij,jky,kl->ily', inv0, matrix.gradient, inv0, optimize=True)
    hessian = None
    if matrix.hessian is not None:
        twice = np.einsum('ij,jky,kl,lmz,mn->inyz',
                          inv0, matrix.gradient, inv0, matrix.gradient, inv0, optimize=True)
        hessian = (twice + np.swapaxes(twice, -1, -2)
                   - np.einsum('ij,jkyz,kl->ilyz', inv0, matrix.hessian, inv0, optimize=True))
    return Jet2(inv0, gradient, hessian)


def jet_solve(matrix, rhs):
    inverse = jet_inverse(matrix)
    rhs_ndim = rhs.value.ndim if isinstance(rhs, Jet2) else np.ndim(rhs)
    return jet_einsum('ij,j->i' if rhs_ndim == 1 else 'ij,jr->ir', inverse, rhs)


def jet2_compose(outer, inners):
    """
    Second-order chain rule.

    Args:
        outer: jet of f at the inner values, derivatives taken with respect
            to the k inner variables (any value shape)
        inners: k scalar jets in m variables, or one jet of shape (k,)

    Returns:
        Jet2 of f(inner(t)) in the m variables
    """
    inner = inners if isinstance(inners, Jet2) else Jet2.stack(list(inners))
    k = outer.nvars
    if inner.shape != (k,):
        raise DimensionMismatch(f"Outer jet has {k} variables but {inner.shape} inner jets were given")

    gradient = np.einsum('...i,im->...m', outer.gradient, inner.gradient)
    hessian = None
    if outer.hessian is not None and inner.hessian is not None:
        hessian = (np.einsum('...i,imn->...mn', outer.gradient, inner.hessian)
                   + np.einsum('...ij,im,jn->...mn', outer.hessian, inner.gradient, inner.gradient))
    return Jet2(outer.value, gradient, hessian)


# ---------------------------------------------------------------------------
# Dual numbers
# ---------------------------------------------------------------------------

class Dual:
    """Dual number real + eps·ε; parts may be floats, arrays or jets"""

    __slots__ = ('real', 'eps')
    __array_ufunc__ = None

    def __init__(self, real, eps=0.0):
        self.real = real
        self.eps = eps

    @staticmethod
    def _parts(other):
        if isinstance(other, Dual):
            return other.real, other.eps
        return other, 0.0

    def __add__(self, other):
        r, e = self._parts(other)
        return Dual(self.real + r, self.eps + e)

    __radd__ = __add__

    def __sub__(self, other):
        r, e = self._parts(other)
        return Dual(self.real - r, self.eps - e)

    def __rsub__(self, other):
        r, e = self._parts(other)
        return Dual(r - self.real, e - self.eps)

    def __neg__(self):
        return Dual(-self.real, -self.eps)

    def __mul__(self, other):
        r, e = self._parts(other)
        return Dual(self.real * r, self.real * e + self.eps * r)

    __rmul__ = __mul__

    def __truediv__(self, other):
        r, e = self._parts(other)
        return Dual(self.real / r, (self.eps * r - self.real * e) / (r * r))

    def __rtruediv__(self, other):
        r, e = self._parts(other)
        return Dual(r / self.real, (e * self.real - r * self.eps) / (self.real * self.real))

    def __pow__(self, exponent):
        if isinstance(exponent, (Dual, Jet2)):
            return NotImplemented
        p = float(exponent)
        if p == 0.0:
            return Dual(self.real ** 0.0, 0.0 * self.eps)
        return Dual(self.real ** p, p * self.real ** (p - 1.0) * self.eps)

    def __abs__(self):
        return self * np.sign(value_of(self.real))

    def __repr__(self):
        return f"{self.real!r} + {self.eps!r}ε"


def value_of(x):
    """Plain float (array) value under any nesting of duals and jets"""
    if isinstance(x, Dual):
        return value_of(x.real)
    if isinstance(x, Jet2):
        return x.value
    return np.asarray(x, dtype=float)


def eps_part(x):
    return x.eps if isinstance(x, Dual) else 0.0


def real_part(x):
    return x.real if isinstance(x, Dual) else x


# ---------------------------------------------------------------------------
# Elementary functions over floats, duals and jets
# ---------------------------------------------------------------------------

class _Elementary:
    """Scalar function applied elementwise to floats, arrays, duals or jets"""

    def __init__(self, name, base, derivative):
        self.name = name
        self.base = base
        self.derivative = derivative

    def __call__(self, x):
        if isinstance(x, Dual):
            return Dual(self(x.real), self.derivative(x.real) * x.eps)
        if isinstance(x, Jet2):
            v = x.value
            d1 = self.derivative(v)
            d2 = eps_part(self.derivative(Dual(v, np.ones_like(v))))
            return x._apply(self.base(v), d1, d2)
        return self.base(x)

    def __repr__(self):
        return f"<elementary {self.name}>"


sin = _Elementary('sin', np.sin, lambda x: cos(x))
cos = _Elementary('cos', np.cos, lambda x: -sin(x))
tan = _Elementary('tan', np.tan, lambda x: 1.0 + tan(x) ** 2)
exp = _Elementary('exp', np.exp, lambda x: exp(x))
log = _Elementary('log', np.log, lambda x: 1.0 / x)
sqrt = _Elementary('sqrt', np.sqrt, lambda x: 0.5 / sqrt(x))
sinh = _Elementary('sinh', np.sinh, lambda x: cosh(x))
cosh = _Elementary('cosh', np.cosh, lambda x: sinh(x))
tanh = _Elementary('tanh', np.tanh, lambda x: 1.0 - tanh(x) ** 2)
arctan = _Elementary('arctan', np.arctan, lambda x: 1.0 / (1.0 + x * x))
arcsinh = _Elementary('arcsinh', np.arcsinh, lambda x: 1.0 / sqrt(1.0 + x * x))

# Namespace handed to sympy.lambdify for user expressions
ELEMENTARY_FUNCTIONS = {
    'sin': sin, 'cos': cos, 'tan': tan, 'exp': exp, 'log': log, 'sqrt': sqrt,
    'sinh': sinh, 'cosh': cosh, 'tanh': tanh, 'atan': arctan, 'asinh': arcsinh,
    'pi': np.pi, 'e': np.e,
}
