"""Dense complex linear algebra and superoperator utilities.

All operators are dense complex128 numpy arrays.  Superoperators act on
column-stacked vectorizations, so the map X -> A X B has the matrix
B^T (x) A.  This is the most common convention in open-systems codes and
is assumed everywhere downstream.
"""

import numpy as np
import scipy.linalg

__all__ = [
    "DimensionMismatch",
    "NotHermitian",
    "NotPSD",
    "SuperOperator",
    "adjoint",
    "expm",
    "matrix_from_json",
    "matrix_to_json",
    "min_eig_hermitian",
    "superop_left",
    "superop_right",
    "trace_distance",
    "unvec",
    "vec",
]


class DimensionMismatch(ValueError):
    """Operand shapes are inconsistent."""


class NotHermitian(ValueError):
    """A matrix required to be (numerically) Hermitian is not."""


class NotPSD(ValueError):
    """A matrix required to be positive semidefinite is not."""


def _as_matrix(a):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array, got shape {a.shape}")
    return a


def adjoint(a):
    """Conjugate transpose."""
    return _as_matrix(a).conj().T


def min_eig_hermitian(a, herm_tol=1e-10):
    """Smallest eigenvalue of the Hermitian symmetrization (A + A^dag)/2.

    Raises :class:`NotHermitian` when the anti-Hermitian part exceeds
    ``herm_tol * max(1, ||A||_F)``; every positivity test in this package
    goes through here so that silently symmetrizing a wildly non-Hermitian
    matrix cannot mask a bug.
    """
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix is not square: {a.shape}")
    skew = np.linalg.norm(a - a.conj().T)
    if skew > herm_tol * max(1.0, np.linalg.norm(a)):
        raise NotHermitian(f"anti-Hermitian part has norm {skew:.3e}")
    sym = (a + a.conj().T) / 2.0
    return float(np.linalg.eigvalsh(sym)[0])


def expm(a):
    """Matrix exponential (scaling-and-squaring, via scipy)."""
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix is not square: {a.shape}")
    return scipy.linalg.expm(a)


def vec(a):
    """Column-stack a matrix into a 1-d vector: vec([[1,3],[2,4]]) = (1,2,3,4)."""
    return _as_matrix(a).T.reshape(-1)


def unvec(v, d):
    """Inverse of :func:`vec` for a d x d matrix."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size != d * d:
        raise DimensionMismatch(f"vector of size {v.size} is not {d}x{d}")
    return v.reshape(d, d).T


class SuperOperator:
    """A linear map on d x d matrices stored as a d^2 x d^2 matrix.

    The matrix acts on column-stacked vectorizations; ``S(B)`` applies the
    map to a matrix.  Instances are immutable value objects.
    """

    __slots__ = ("dim", "matrix")

    def __init__(self, dim, matrix):
        matrix = _as_matrix(matrix)
        if matrix.shape != (dim * dim, dim * dim):
            raise DimensionMismatch(
                f"superoperator for dim {dim} must be {dim * dim}x{dim * dim}, "
                f"got {matrix.shape}"
            )
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "matrix", matrix)

    def __setattr__(self, name, value):
        raise AttributeError("SuperOperator is immutable")

    def __call__(self, b):
        b = _as_matrix(b)
        if b.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"operand shape {b.shape} != ({self.dim},{self.dim})")
        return unvec(self.matrix @ vec(b), self.dim)

    def compose(self, other):
        """Composition self o other (other acts first)."""
        if other.dim != self.dim:
            raise DimensionMismatch("superoperator dims differ")
        return SuperOperator(self.dim, self.matrix @ other.matrix)

    def __matmul__(self, other):
        return self.compose(other)

    def __add__(self, other):
        if other.dim != self.dim:
            raise DimensionMismatch("superoperator dims differ")
        return SuperOperator(self.dim, self.matrix + other.matrix)

    def __sub__(self, other):
        if other.dim != self.dim:
            raise DimensionMismatch("superoperator dims differ")
        return SuperOperator(self.dim, self.matrix - other.matrix)

    def __mul__(self, scalar):
        return SuperOperator(self.dim, self.matrix * scalar)

    __rmul__ = __mul__

    @classmethod
    def identity(cls, d):
        return cls(d, np.eye(d * d, dtype=complex))

    @classmethod
    def zero(cls, d):
        return cls(d, np.zeros((d * d, d * d), dtype=complex))

    @classmethod
    def sandwich(cls, a, b):
        """The map X -> A X B, i.e. the matrix B^T (x) A."""
        a = _as_matrix(a)
        b = _as_matrix(b)
        if a.shape != b.shape or a.shape[0] != a.shape[1]:
            raise DimensionMismatch("sandwich factors must be square of equal size")
        return cls(a.shape[0], np.kron(b.T, a))

    def __repr__(self):
        return f"SuperOperator(dim={self.dim})"


def superop_left(a):
    """Superoperator of X -> A X."""
    a = _as_matrix(a)
    return SuperOperator.sandwich(a, np.eye(a.shape[0], dtype=complex))


def superop_right(a):
    """Superoperator of X -> X A."""
    a = _as_matrix(a)
    return SuperOperator.sandwich(np.eye(a.shape[0], dtype=complex), a)


def trace_distance(a, b):
    """Half the trace norm of the (Hermitian) difference a - b."""
    diff = _as_matrix(a) - _as_matrix(b)
    diff = (diff + diff.conj().T) / 2.0
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def matrix_to_json(a):
    """Encode a matrix (or vector, as d x 1) as nested [re, im] pairs, row-major."""
    a = _as_matrix(a)
    return [[[float(x.real), float(x.imag)] for x in row] for row in a]


def matrix_from_json(obj, shape=None):
    """Decode the nested [re, im] literal format; rejects non-finite entries."""
    try:
        a = np.array(
            [[complex(entry[0], entry[1]) for entry in row] for row in obj],
            dtype=complex,
        )
    except (TypeError, IndexError) as exc:
        raise ValueError(f"malformed matrix literal: {exc}") from exc
    if a.ndim != 2:
        raise ValueError("matrix literal must be a non-ragged 2-d array")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix literal contains non-finite entries")
    if shape is not None and a.shape != tuple(shape):
        raise DimensionMismatch(f"expected shape {shape}, got {a.shape}")
    return a


def complex_to_json(z):
    z = complex(z)
    return [float(z.real), float(z.imag)]


def complex_from_json(obj):
    if not (isinstance(obj, (list, tuple)) and len(obj) == 2):
        raise ValueError("complex literal must be a [re, im] pair")
    z = complex(float(obj[0]), float(obj[1]))
    if not (np.isfinite(z.real) and np.isfinite(z.imag)):
        raise ValueError("complex literal is not finite")
    return z
