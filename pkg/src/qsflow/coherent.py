"""Exact computations in the coherent sector of Fock space.

A piecewise-coherent vector is a scalar prefactor times the exponential
vector of a piecewise-constant C^m-valued amplitude supported on [0, T).
This family is closed under the normal-ordered exponentials of the Ito
integrators when the algebra element is constant per interval, and all
inner products reduce to exact finite sums, so the calculus here has no
quadrature error at all.
"""

from dataclasses import dataclass

import numpy as np

from .ito import ItoQuadruple, MultiplicityMismatch, star_product

__all__ = [
    "PiecewiseCoherent",
    "coherent_inner",
    "exchange_contraction_norm",
    "gram_matrix",
    "weyl_apply",
    "weyl_semigroup_check",
]


@dataclass(frozen=True)
class PiecewiseCoherent:
    """prefactor * exp-vector of a step amplitude f: [0, T) -> C^m.

    ``amplitudes`` has shape (K, m) with row k the value on
    [breakpoints[k], breakpoints[k+1]); the amplitude vanishes beyond T.
    """

    multiplicity: int
    horizon: float
    breakpoints: np.ndarray
    amplitudes: np.ndarray
    prefactor: complex = 1.0

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.ndim != 2 or amp.shape[1] != self.multiplicity:
            raise MultiplicityMismatch(
                f"amplitudes shape {amp.shape} inconsistent with m={self.multiplicity}"
            )
        if bp.ndim != 1 or bp.size != amp.shape[0] + 1:
            raise ValueError("need one more breakpoint than amplitude rows")
        if bp[0] != 0.0 or bp[-1] != self.horizon or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must increase from 0 to the horizon")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "prefactor", complex(self.prefactor))

    @classmethod
    def vacuum(cls, m, horizon=1.0, prefactor=1.0):
        return cls(m, horizon, np.array([0.0, horizon]), np.zeros((1, m)), prefactor)

    @classmethod
    def constant(cls, vector, horizon, prefactor=1.0):
        vector = np.atleast_1d(np.asarray(vector, dtype=complex))
        return cls(
            vector.size, horizon, np.array([0.0, horizon]), vector.reshape(1, -1), prefactor
        )

    def value_at(self, t):
        if t >= self.horizon or t < 0:
            return np.zeros(self.multiplicity, dtype=complex)
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.amplitudes[k]

    def to_json(self):
        return {
            "m": self.multiplicity,
            "horizon": float(self.horizon),
            "breakpoints": [float(t) for t in self.breakpoints],
            "amplitudes": [[[float(z.real), float(z.imag)] for z in row] for row in self.amplitudes],
            "prefactor": [float(self.prefactor.real), float(self.prefactor.imag)],
        }

    @classmethod
    def from_json(cls, obj):
        amp = np.array(
            [[complex(z[0], z[1]) for z in row] for row in obj["amplitudes"]], dtype=complex
        )
        if amp.size == 0:
            amp = amp.reshape(0, int(obj["m"]))
        return cls(
            int(obj["m"]),
            float(obj["horizon"]),
            np.asarray(obj["breakpoints"], dtype=float),
            amp,
            complex(obj["prefactor"][0], obj["prefactor"][1]),
        )


def _merged_breakpoints(u, v, extra=()):
    pts = np.union1d(u.breakpoints, v.breakpoints)
    for t in extra:
        pts = np.union1d(pts, [t])
    return pts


def coherent_inner(u, v):
    """<u, v> = conj(pref_u) pref_v exp(int <u(r), v(r)> dr), evaluated exactly."""
    if u.multiplicity != v.multiplicity:
        raise MultiplicityMismatch(
            f"multiplicities differ: {u.multiplicity} vs {v.multiplicity}"
        )
    pts = _merged_breakpoints(u, v)
    total = 0.0 + 0.0j
    for a, b in zip(pts[:-1], pts[1:]):
        uu = u.value_at(a)
        vv = v.value_at(a)
        total += np.vdot(uu, vv) * (b - a)
    return np.conj(u.prefactor) * v.prefactor * np.exp(total)


def weyl_apply(t, a, f):
    """Image of a piecewise-coherent vector under the exponential W(t, a).

    On r < t the amplitude maps to (I + exchange) f(r) + creation and the
    prefactor picks up exp(int_0^t (annihilation f(r) + time) dr); beyond t
    nothing changes, which is the adaptedness of the action.
    """
    if a.multiplicity != f.multiplicity:
        raise MultiplicityMismatch(
            f"multiplicities differ: {a.multiplicity} vs {f.multiplicity}"
        )
    m = f.multiplicity
    horizon = max(f.horizon, t) if t > 0 else f.horizon
    pts = np.union1d(f.breakpoints, [t, horizon])
    pts = pts[(pts >= 0.0) & (pts <= horizon)]
    ahat = np.eye(m, dtype=complex) + a.exchange
    scalar = 0.0 + 0.0j
    rows = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        val = f.value_at(lo)
        if lo < t:
            rows.append(ahat @ val + a.creation[:, 0])
            scalar += (complex((a.annihilation @ val.reshape(m, 1))[0, 0]) + a.time) * (hi - lo)
        else:
            rows.append(val)
    amplitudes = np.array(rows, dtype=complex).reshape(len(rows), m)
    return PiecewiseCoherent(
        m, float(pts[-1]), pts, amplitudes, f.prefactor * np.exp(scalar)
    )


def weyl_semigroup_check(t, a, f, h, b=None):
    """Absolute discrepancy of <W(t,a)f, W(t,b)h> against <f, W(t, a*b)h>.

    With b defaulting to a this is the polarized form of the semigroup
    representation law; the return value is the raw absolute difference.
    """
    if b is None:
        b = a
    lhs = coherent_inner(weyl_apply(t, a, f), weyl_apply(t, b, h))
    rhs = coherent_inner(f, weyl_apply(t, star_product(a, b), h))
    return abs(lhs - rhs)


def exchange_contraction_norm(a):
    """Spectral norm of I + exchange; <= 1 means the Weyl action is contractive."""
    m = a.multiplicity
    return float(np.linalg.norm(np.eye(m) + a.exchange, ord=2))


def gram_matrix(family):
    """Gram matrix of a finite family of piecewise-coherent vectors."""
    n = len(family)
    g = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            g[i, j] = coherent_inner(family[i], family[j])
    return g
