"""The quadruple Ito *-algebra of quantum stochastic differentials.

An element is a quadruple of blocks (exchange, creation, annihilation,
time) over a noise space C^m.  The product contracts through the noise
index only, so e.g. the Wiener quadruple squares to a pure time element
(dQ^2 = dt) and the Poisson quadruple reproduces dP^2 = dP + dt.  The
equivalent picture is an (m+2)x(m+2) triangular matrix with zero first
column and last row, where the product is ordinary matrix multiplication
and the involution is conjugation by the Minkowski flip of the corner
indices; both pictures are implemented and cross-checked in the tests.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import complex_from_json, complex_to_json, matrix_from_json, matrix_to_json

__all__ = [
    "ExtendedMatrix",
    "ItoQuadruple",
    "MultiplicityMismatch",
    "StepFunction",
    "compose",
    "extend",
    "from_extended",
    "hp_commutator",
    "hp_product",
    "newton",
    "poisson",
    "pseudo_adjoint",
    "quad_close",
    "star",
    "star_product",
    "step_star",
    "wiener",
    "zero",
]


class MultiplicityMismatch(ValueError):
    """Operands live over noise spaces of different dimension."""


@dataclass(frozen=True)
class ItoQuadruple:
    """One stochastic differential: blocks (exchange, creation, annihilation, time).

    Shapes for multiplicity m: exchange m x m, creation m x 1,
    annihilation 1 x m, time a complex scalar.
    """

    exchange: np.ndarray
    creation: np.ndarray
    annihilation: np.ndarray
    time: complex

    def __post_init__(self):
        ex = np.asarray(self.exchange, dtype=complex)
        cr = np.asarray(self.creation, dtype=complex).reshape(-1, 1)
        an = np.asarray(self.annihilation, dtype=complex).reshape(1, -1)
        m = ex.shape[0]
        if ex.shape != (m, m) or cr.shape != (m, 1) or an.shape != (1, m):
            raise MultiplicityMismatch(
                f"inconsistent block shapes: {ex.shape}, {cr.shape}, {an.shape}"
            )
        object.__setattr__(self, "exchange", ex)
        object.__setattr__(self, "creation", cr)
        object.__setattr__(self, "annihilation", an)
        object.__setattr__(self, "time", complex(self.time))

    @property
    def multiplicity(self):
        return self.exchange.shape[0]

    def __add__(self, other):
        _check_mult(self, other)
        return ItoQuadruple(
            self.exchange + other.exchange,
            self.creation + other.creation,
            self.annihilation + other.annihilation,
            self.time + other.time,
        )

    def __sub__(self, other):
        _check_mult(self, other)
        return ItoQuadruple(
            self.exchange - other.exchange,
            self.creation - other.creation,
            self.annihilation - other.annihilation,
            self.time - other.time,
        )

    def __mul__(self, scalar):
        z = complex(scalar)
        return ItoQuadruple(
            self.exchange * z, self.creation * z, self.annihilation * z, self.time * z
        )

    __rmul__ = __mul__

    def norm(self):
        """Max of blockwise sup norms; used for closeness tests."""
        return max(
            np.max(np.abs(self.exchange)) if self.multiplicity else 0.0,
            np.max(np.abs(self.creation)) if self.multiplicity else 0.0,
            np.max(np.abs(self.annihilation)) if self.multiplicity else 0.0,
            abs(self.time),
        )

    def to_json(self):
        return {
            "m": self.multiplicity,
            "exchange": matrix_to_json(self.exchange),
            "creation": matrix_to_json(self.creation),
            "annihilation": matrix_to_json(self.annihilation),
            "time": complex_to_json(self.time),
        }

    @classmethod
    def from_json(cls, obj):
        m = int(obj["m"])
        return cls(
            matrix_from_json(obj["exchange"], (m, m)),
            matrix_from_json(obj["creation"], (m, 1)),
            matrix_from_json(obj["annihilation"], (1, m)),
            complex_from_json(obj["time"]),
        )


def _check_mult(a, b):
    if a.multiplicity != b.multiplicity:
        raise MultiplicityMismatch(
            f"multiplicities differ: {a.multiplicity} vs {b.multiplicity}"
        )


def zero(m):
    """The zero quadruple at multiplicity m."""
    return ItoQuadruple(
        np.zeros((m, m)), np.zeros((m, 1)), np.zeros((1, m)), 0.0
    )


def quad_close(a, b, tol=1e-13):
    """Blockwise absolute closeness within tol."""
    _check_mult(a, b)
    return (a - b).norm() <= tol


def hp_product(a, b):
    """The quadruple product a . b: all contractions run through the noise index."""
    _check_mult(a, b)
    return ItoQuadruple(
        a.exchange @ b.exchange,
        a.exchange @ b.creation,
        a.annihilation @ b.exchange,
        complex((a.annihilation @ b.creation)[0, 0]),
    )


def star(a):
    """The involution: swaps creation/annihilation with adjoints, conjugates time."""
    return ItoQuadruple(
        a.exchange.conj().T,
        a.annihilation.conj().T,
        a.creation.conj().T,
        np.conj(a.time),
    )


def compose(a, b):
    """The unital semigroup composition a + b + a . b.

    This is the law picked up by W(t,a) W(t,b); it is associative, in
    contrast to the sesquilinear star product below.
    """
    return a + b + hp_product(a, b)


def star_product(a, b):
    """The sesquilinear pairing a * b = b + a^star . b + a^star.

    This is the composition law picked up by W(t,a)^* W(t,b) on coherent
    vectors; its unit is the zero quadruple.  It is not associative as a
    binary operation (the left argument enters starred); the identity it
    obeys instead is star_product(compose(b, a), c) ==
    star_product(a, star_product(b, c)).
    """
    sa = star(a)
    return b + hp_product(sa, b) + sa


def hp_commutator(a, b):
    """a . b - b . a as a quadruple; zero iff a and b commute in the product sense."""
    return hp_product(a, b) - hp_product(b, a)


@dataclass(frozen=True)
class ExtendedMatrix:
    """Triangular (m+2)x(m+2) picture of a quadruple, block order (-, noise, +).

    The first block column and the last block row vanish identically.
    """

    multiplicity: int
    matrix: np.ndarray

    def __post_init__(self):
        m = self.multiplicity
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (m + 2, m + 2):
            raise MultiplicityMismatch(f"extended matrix must be {(m+2, m+2)}, got {mat.shape}")
        if np.any(mat[:, 0] != 0) or np.any(mat[-1, :] != 0):
            raise ValueError("extended matrix must have zero first column and last row")
        object.__setattr__(self, "matrix", mat)


def extend(a):
    """Embed a quadruple into its extended triangular matrix."""
    m = a.multiplicity
    mat = np.zeros((m + 2, m + 2), dtype=complex)
    mat[0, 1 : m + 1] = a.annihilation[0, :]
    mat[0, m + 1] = a.time
    mat[1 : m + 1, 1 : m + 1] = a.exchange
    mat[1 : m + 1, m + 1] = a.creation[:, 0]
    return ExtendedMatrix(m, mat)


def from_extended(ext):
    """Read the quadruple back off an extended matrix."""
    m = ext.multiplicity
    mat = ext.matrix
    return ItoQuadruple(
        mat[1 : m + 1, 1 : m + 1],
        mat[1 : m + 1, m + 1].reshape(m, 1),
        mat[0, 1 : m + 1].reshape(1, m),
        mat[0, m + 1],
    )


def _minkowski_flip(m):
    g = np.zeros((m + 2, m + 2), dtype=complex)
    g[0, m + 1] = 1.0
    g[m + 1, 0] = 1.0
    g[1 : m + 1, 1 : m + 1] = np.eye(m)
    return g


def pseudo_adjoint(ext):
    """Conjugation g M^dag g with g the metric flipping the corner indices.

    Satisfies pseudo_adjoint(extend(a)) == extend(star(a)).
    """
    g = _minkowski_flip(ext.multiplicity)
    return ExtendedMatrix(ext.multiplicity, g @ ext.matrix.conj().T @ g)


# ---------------------------------------------------------------------------
# Canonical two-dimensional algebra elements
# ---------------------------------------------------------------------------


def newton(alpha, m=1):
    """Pure time element alpha*dt; nilpotent, (dt)^2 = 0."""
    q = zero(m)
    return ItoQuadruple(q.exchange, q.creation, q.annihilation, alpha)


def wiener(alpha, xi, m=1, slot=0):
    """Wiener element: alpha*dt + xi*dQ in noise slot ``slot``; (dQ)^2 = dt."""
    cr = np.zeros((m, 1), dtype=complex)
    an = np.zeros((1, m), dtype=complex)
    cr[slot, 0] = xi
    an[0, slot] = xi
    return ItoQuadruple(np.zeros((m, m)), cr, an, alpha)


def poisson(alpha, zeta, m=1, slot=0, time_from_zeta=False):
    """Compensated-Poisson element: alpha*dt + zeta*dP in slot ``slot``.

    With this embedding (dP)^2 = dP + dt holds exactly.  ``time_from_zeta``
    selects the alternative convention where the time entry equals zeta
    instead of the drift alpha; it breaks the dP^2 identity and exists only
    for comparison.
    """
    ex = np.zeros((m, m), dtype=complex)
    cr = np.zeros((m, 1), dtype=complex)
    an = np.zeros((1, m), dtype=complex)
    ex[slot, slot] = zeta
    cr[slot, 0] = 1j * zeta
    an[0, slot] = -1j * zeta
    return ItoQuadruple(ex, cr, an, zeta if time_from_zeta else alpha)


# ---------------------------------------------------------------------------
# Step functions with values in the algebra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant algebra-valued function on [0, T), zero afterwards.

    ``breakpoints`` is the increasing grid 0 = t_0 < ... < t_K = T and
    ``values[k]`` holds on [t_{k-1}, t_k).
    """

    horizon: float
    breakpoints: np.ndarray
    values: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        values = tuple(self.values)
        if bp.ndim != 1 or bp.size != len(values) + 1:
            raise ValueError("need one more breakpoint than values")
        if bp[0] != 0.0 or abs(bp[-1] - self.horizon) > 0 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must increase from 0 to the horizon")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        mults = {v.multiplicity for v in values}
        if len(mults) > 1:
            raise MultiplicityMismatch(f"mixed multiplicities {mults}")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", values)

    @property
    def multiplicity(self):
        return self.values[0].multiplicity

    @classmethod
    def constant(cls, a, horizon):
        return cls(horizon, np.array([0.0, horizon]), (a,))

    def value_at(self, t):
        if t >= self.horizon or t < 0:
            return zero(self.multiplicity)
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.values[k]

    def to_json(self):
        return {
            "horizon": float(self.horizon),
            "breakpoints": [float(t) for t in self.breakpoints],
            "values": [v.to_json() for v in self.values],
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            float(obj["horizon"]),
            np.asarray(obj["breakpoints"], dtype=float),
            tuple(ItoQuadruple.from_json(v) for v in obj["values"]),
        )


def _merged_grid(g, h):
    top = max(g.horizon, h.horizon)
    pts = np.union1d(g.breakpoints, h.breakpoints)
    pts = pts[pts <= top]
    if pts[-1] != top:
        pts = np.append(pts, top)
    return pts


def step_star(g, h):
    """Pointwise star product of two step functions on the merged grid."""
    if g.multiplicity != h.multiplicity:
        raise MultiplicityMismatch(
            f"multiplicities differ: {g.multiplicity} vs {h.multiplicity}"
        )
    pts = _merged_grid(g, h)
    values = tuple(
        star_product(g.value_at(t), h.value_at(t)) for t in pts[:-1]
    )
    return StepFunction(float(pts[-1]), pts, values)
