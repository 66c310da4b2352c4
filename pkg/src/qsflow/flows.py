"""Deterministic propagation of the CP flow in the vacuum/coherent sector.

Three independent routes are implemented and cross-validated: the
averaged semigroup (matrix exponential or RK4 of the constant generator),
the reduced coherent propagator (RK4 of the amplitude-dressed generator),
and a Picard/Duhamel iteration of the integral form built from drift
cocycles and quadrature, which never touches the differential generator
and therefore serves as the oracle for the other two.  On top of these
sit the output-state generating function and its positive-definite
kernel checks.
"""

import math
from dataclasses import dataclass

import numpy as np

from .coherent import PiecewiseCoherent, coherent_inner
from .germ import lambda_blocks, lindblad_superop, phi_superop
from .ito import MultiplicityMismatch, step_star
from .linalg import SuperOperator, adjoint, expm

__all__ = [
    "CpCoherentReport",
    "KernelReport",
    "ReducedPropagator",
    "coherent_propagator",
    "cp_coherent_check",
    "evolve_semigroup",
    "gen_function",
    "kernel_psd_check",
    "picard_oracle",
    "s_cocycle",
]


@dataclass(frozen=True)
class ReducedPropagator:
    """Coherent matrix element of the flow, normalized to be local in time.

    ``map`` applied to B gives <psi_f| flow_t(B) psi_g> divided by the full
    coherent inner product of f and g, so the zero generator yields the
    identity at all times.
    """

    dim: int
    time: float
    map: SuperOperator
    f: PiecewiseCoherent
    g: PiecewiseCoherent


@dataclass(frozen=True)
class KernelReport:
    kernel: np.ndarray
    min_eig: float
    monotone_min_eigs: dict
    passed: bool


@dataclass(frozen=True)
class CpCoherentReport:
    matrix: np.ndarray
    min_eig: float
    passed: bool


# ---------------------------------------------------------------------------
# Drift cocycle
# ---------------------------------------------------------------------------


def _segments(f, g, t):
    """Common refinement of the amplitude grids on [0, t]; returns (lo, hi, fv, gv)."""
    pts = {0.0, float(t)}
    for pc in (f, g):
        pts.update(float(b) for b in pc.breakpoints if 0.0 < b < t)
    pts = sorted(pts)
    return [
        (lo, hi, f.value_at(lo), g.value_at(lo)) for lo, hi in zip(pts[:-1], pts[1:])
    ]


def _drift_generator(model, amp):
    gen = model.K.copy()
    for n in range(model.multiplicity):
        gen = gen + model.K_list[n] * amp[n]
    return gen


def s_cocycle(model, f, t):
    """Solve dS/dt + (K + sum_n K_n f^n(t)) S = 0 exactly on the step grid."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if f.multiplicity != model.multiplicity:
        raise MultiplicityMismatch("amplitude multiplicity differs from model")
    s = np.eye(model.dim, dtype=complex)
    if t == 0:
        return s
    for lo, hi, fv, _ in _segments(f, f, t):
        s = expm(-_drift_generator(model, fv) * (hi - lo)) @ s
    return s


# ---------------------------------------------------------------------------
# Semigroup and coherent propagator (differential route)
# ---------------------------------------------------------------------------


def _rk4_right(mat, gen, h, n_steps):
    """n_steps of classical RK4 for M' = M @ gen with constant gen."""
    for _ in range(n_steps):
        k1 = mat @ gen
        k2 = (mat + 0.5 * h * k1) @ gen
        k3 = (mat + 0.5 * h * k2) @ gen
        k4 = (mat + h * k3) @ gen
        mat = mat + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return mat


def evolve_semigroup(model, t, steps=None, picture="heisenberg"):
    """The averaged semigroup at time t as a superoperator.

    With ``steps`` unset the constant generator is exponentiated exactly;
    otherwise fixed-step RK4 is used (matching the coherent propagator's
    integrator step for step).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    gen = lindblad_superop(model, picture)
    if steps is None:
        return SuperOperator(model.dim, expm(gen.matrix * t))
    if steps < 1:
        raise ValueError("steps must be >= 1")
    mat = _rk4_right(np.eye(model.dim**2, dtype=complex), gen.matrix, t / steps, steps)
    return SuperOperator(model.dim, mat)


def _dressed_generator(blocks, m, fv, gv):
    gen = blocks[0][0].matrix.copy()
    for i in range(1, m + 1):
        gen = gen + np.conj(fv[i - 1]) * blocks[i][0].matrix
    for j in range(1, m + 1):
        gen = gen + gv[j - 1] * blocks[0][j].matrix
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            gen = gen + np.conj(fv[i - 1]) * gv[j - 1] * blocks[i][j].matrix
    return gen


def coherent_propagator(model, f, g, t, steps=None):
    """Integrate the amplitude-dressed generator between coherent vectors.

    The generator at time r is the scalar structural map dressed with
    conj(f(r)) on the bra side and g(r) on the ket side; amplitudes are
    piecewise constant so RK4 runs with a constant generator per segment.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if f.multiplicity != model.multiplicity or g.multiplicity != model.multiplicity:
        raise MultiplicityMismatch("amplitude multiplicity differs from model")
    d = model.dim
    mat = np.eye(d * d, dtype=complex)
    if t > 0:
        blocks = lambda_blocks(model)
        n_total = steps if steps is not None else max(1, math.ceil(1000.0 * t))
        for lo, hi, fv, gv in _segments(f, g, t):
            n_seg = max(1, int(round(n_total * (hi - lo) / t)))
            gen = _dressed_generator(blocks, model.multiplicity, fv, gv)
            mat = _rk4_right(mat, gen, (hi - lo) / n_seg, n_seg)
    return ReducedPropagator(d, float(t), SuperOperator(d, mat), f, g)


# ---------------------------------------------------------------------------
# Picard/Duhamel oracle (integral route)
# ---------------------------------------------------------------------------


def _prefix_weights(j):
    """Quadrature weights over the first j uniform intervals (unit spacing).

    Composite Simpson for even j, Simpson plus a 3/8 tail for odd j >= 3,
    a single trapezoid for j = 1; the isolated low-order interval only
    affects one node at O(h^3).
    """
    if j == 0:
        return np.zeros(1)
    if j == 1:
        return np.array([0.5, 0.5])
    if j == 3:
        return np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    if j % 2 == 0:
        w = np.zeros(j + 1)
        w[0] = w[j] = 1.0 / 3.0
        w[1:j:2] = 4.0 / 3.0
        w[2:j:2] = 2.0 / 3.0
        return w
    w = np.zeros(j + 1)
    w[: j - 2] = _prefix_weights(j - 3)
    w[j - 3 :] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    return w


def _kron_batch(x, y):
    n, d, _ = x.shape
    return np.einsum("nab,ncd->nacbd", x, y).reshape(n, d * d, d * d)


def picard_oracle(model, f, g, t, depth=12, quad_steps=256, converge_tol=1e-10):
    """Iterate the integral form of the coherent propagator.

    Each pass wraps the previous iterate around drift-sandwiched blocks of
    the CP map under coherent contraction weights; depth 0 is the bare
    drift sandwich.  Built solely from interval exponentials and
    quadrature, this is independent of the RK4 route and converges to it.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if quad_steps < 8:
        raise ValueError("quad_steps must be >= 8")
    if f.multiplicity != model.multiplicity or g.multiplicity != model.multiplicity:
        raise MultiplicityMismatch("amplitude multiplicity differs from model")
    d = model.dim
    m = model.multiplicity
    if t == 0:
        return ReducedPropagator(d, 0.0, SuperOperator.identity(d), f, g)

    segs = _segments(f, g, t)
    phi_mats = [[phi_superop(model, i, j).matrix for j in range(m + 1)] for i in range(m + 1)]

    # Node grid: per segment a uniform, even number of intervals.
    seg_info = []
    nodes = [0.0]
    c = [0.0 + 0.0j]  # cumulative integral of <f, g>
    for lo, hi, fv, gv in segs:
        n_seg = max(2, math.ceil(quad_steps * (hi - lo) / t))
        n_seg += n_seg % 2
        h_seg = (hi - lo) / n_seg
        a_idx = len(nodes) - 1
        pair = complex(np.vdot(fv, gv))
        for k in range(1, n_seg + 1):
            nodes.append(lo + k * h_seg)
            c.append(c[-1] + pair * h_seg)
        ef = expm(-_drift_generator(model, fv) * h_seg)
        eg = expm(-_drift_generator(model, gv) * h_seg)
        w_phi = phi_mats[0][0].copy()
        for i in range(1, m + 1):
            w_phi = w_phi + np.conj(fv[i - 1]) * phi_mats[i][0]
        for j in range(1, m + 1):
            w_phi = w_phi + gv[j - 1] * phi_mats[0][j]
        for i in range(1, m + 1):
            for j in range(1, m + 1):
                w_phi = w_phi + np.conj(fv[i - 1]) * gv[j - 1] * phi_mats[i][j]
        seg_info.append(
            {"a": a_idx, "b": a_idx + n_seg, "h": h_seg, "ef": ef, "eg": eg, "phi": w_phi}
        )
    n_nodes = len(nodes)
    c = np.asarray(c)

    # Cumulative drift cocycles between all node pairs.
    eye = np.eye(d, dtype=complex)
    mf = np.zeros((n_nodes, n_nodes, d, d), dtype=complex)
    mg = np.zeros((n_nodes, n_nodes, d, d), dtype=complex)
    seg_of_interval = np.empty(n_nodes - 1, dtype=int)
    for s_idx, info in enumerate(seg_info):
        seg_of_interval[info["a"] : info["b"]] = s_idx
    for i in range(n_nodes):
        mf[i, i] = eye
        mg[i, i] = eye
    for j in range(1, n_nodes):
        info = seg_info[seg_of_interval[j - 1]]
        mf[:j, j] = info["ef"] @ mf[:j, j - 1]
        mg[:j, j] = info["eg"] @ mg[:j, j - 1]
        mf[j, j] = eye
        mg[j, j] = eye

    def sandwich_batch(idx, j):
        x = mg[idx, j].transpose(0, 2, 1)
        y = mf[idx, j].conj().transpose(0, 2, 1)
        return _kron_batch(x, y)

    base = np.empty((n_nodes, d * d, d * d), dtype=complex)
    for j in range(n_nodes):
        base[j] = np.exp(c[0] - c[j]) * sandwich_batch(np.array([0]), j)[0]

    iterate = base.copy()
    for _ in range(depth):
        weighted = [
            np.matmul(iterate[info["a"] : info["b"] + 1], info["phi"]) for info in seg_info
        ]
        new_it = np.empty_like(iterate)
        new_it[0] = base[0]
        for j in range(1, n_nodes):
            total = np.zeros((d * d, d * d), dtype=complex)
            for s_idx, info in enumerate(seg_info):
                if info["a"] >= j:
                    break
                local = min(j, info["b"]) - info["a"]
                w = _prefix_weights(local) * info["h"]
                idx = np.arange(info["a"], info["a"] + local + 1)
                coeff = w * np.exp(c[idx] - c[j])
                total += np.einsum(
                    "n,nab,nbc->ac", coeff, weighted[s_idx][: local + 1], sandwich_batch(idx, j)
                )
            new_it[j] = base[j] + total
        delta = float(np.max(np.abs(new_it - iterate)))
        iterate = new_it
        if delta < converge_tol:
            break

    return ReducedPropagator(d, float(t), SuperOperator(d, iterate[-1]), f, g)


# ---------------------------------------------------------------------------
# Output-state generating function and kernel checks
# ---------------------------------------------------------------------------


def gen_function(model, g, t, steps=None):
    """The output-state generating function as a d x d matrix.

    The step function acts from the vacuum through its creation column
    (the amplitude it creates) and its time component (a scalar
    exponential); what remains is a reduced-propagator matrix element.
    """
    if g.multiplicity != model.multiplicity:
        raise MultiplicityMismatch("step function multiplicity differs from model")
    m = model.multiplicity
    eye = np.eye(model.dim, dtype=complex)
    if t <= 0:
        return eye
    top = min(t, g.horizon)
    pts = [float(b) for b in g.breakpoints if b < top] + [top]
    scalar = 0.0 + 0.0j
    rows = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        val = g.value_at(lo)
        rows.append(val.creation[:, 0])
        scalar += val.time * (hi - lo)
    if rows:
        created = PiecewiseCoherent(m, top, np.asarray(pts), np.asarray(rows))
    else:
        created = PiecewiseCoherent.vacuum(m, horizon=max(t, 1.0))
    vac = PiecewiseCoherent.vacuum(m, horizon=max(t, 1.0))
    prop = coherent_propagator(model, vac, created, t, steps)
    return prop.map(eye) * np.exp(scalar)


def kernel_psd_check(model, step_fns, vectors, t, tol=1e-8, later_times=(), steps=None):
    """Positive definiteness of the generating-function kernel.

    Builds M_kl = <eta_k| theta_t(g_k * g_l) eta_l> over the star products
    of the supplied step functions and reports its smallest eigenvalue;
    for each requested later time s > t also reports min eig of
    M(t) - M(s), which must stay nonnegative for lossy models.
    """
    if len(step_fns) != len(vectors):
        raise ValueError("need one vector per step function")

    def kernel_at(time):
        n = len(step_fns)
        mat = np.zeros((n, n), dtype=complex)
        for k in range(n):
            for l in range(n):
                theta = gen_function(model, step_star(step_fns[k], step_fns[l]), time, steps)
                mat[k, l] = np.vdot(np.asarray(vectors[k]), theta @ np.asarray(vectors[l]))
        return (mat + mat.conj().T) / 2.0

    kernel = kernel_at(t)
    min_eig = float(np.linalg.eigvalsh(kernel)[0])
    monotone = {}
    for s in later_times:
        if s <= t:
            raise ValueError("later times must exceed t")
        diff = kernel - kernel_at(s)
        monotone[float(s)] = float(np.linalg.eigvalsh(diff)[0])
    passed = min_eig >= -tol and all(v >= -tol for v in monotone.values())
    return KernelReport(kernel, min_eig, monotone, passed)


def cp_coherent_check(model, t, family, tol=1e-8, steps=None):
    """Block positivity of the flow on a coherent test family.

    ``family`` is a sequence of (amplitude, operator) pairs; the assembled
    block matrix of propagator elements times coherent overlaps must be
    PSD whenever the flow is completely positive.
    """
    n = len(family)
    d = model.dim
    big = np.zeros((n * d, n * d), dtype=complex)
    for k, (fk, bk) in enumerate(family):
        for l, (fl, bl) in enumerate(family):
            prop = coherent_propagator(model, fk, fl, t, steps)
            big[k * d : (k + 1) * d, l * d : (l + 1) * d] = prop.map(
                adjoint(bk) @ bl
            ) * coherent_inner(fk, fl)
    big = (big + big.conj().T) / 2.0
    min_eig = float(np.linalg.eigvalsh(big)[0])
    return CpCoherentReport(big, min_eig, min_eig >= -tol)
