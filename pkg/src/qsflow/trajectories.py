"""Monte Carlo simulation of the linear filtering wave and master equations.

Two unravelings are provided: Euler-Maruyama for the diffusive wave
equation driven by Wiener increments, and an exact event-driven scheme
for the jump equation (exponential clocks plus matrix-exponential drift
between events, so no time-discretization bias enters the martingale
tests).

Randomness is counter-based: trajectory i of a run seeded with s draws
from Philox keyed by (s, i).  The diffusive engine draws each
trajectory's full increment vector in a single ``standard_normal`` call;
the jump engine draws inter-arrival times one ``exponential`` call at a
time.  Trajectories are processed in fixed-size chunks (independent of
the worker count) and chunk partials are merged in index order, so the
statistics are bit-identical across runs and across thread counts.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .germ import GermModel, KrausOp
from .linalg import DimensionMismatch, adjoint, expm

__all__ = [
    "DensityEnsemble",
    "EnsembleStats",
    "InsufficientData",
    "MartingaleReport",
    "StepTooLarge",
    "TrajectoryConfig",
    "UnifiedCoefficients",
    "evolve_density",
    "germ_model_from_unified",
    "martingale_stats",
    "simulate_diffusive",
    "simulate_jump",
    "unified_coefficients",
]

NORM_GUARD = 1e8
JUMP_HIST_BINS = 10


class StepTooLarge(ValueError):
    """The Euler-Maruyama step is too coarse for the drift operator."""


class InsufficientData(ValueError):
    """Not enough record times for the requested statistic."""


@dataclass(frozen=True)
class TrajectoryConfig:
    """Configuration of one simulation run.

    ``L`` is the diffusive noise operator; ``J`` the jump operator (the
    wave equation's noise coefficient is then J - I).  Record times are
    sorted, deduplicated, and for the diffusive scheme snapped to the
    step grid (nearest point, ties toward earlier).
    """

    kind: str
    dim: int
    K: np.ndarray
    t_max: float
    n_traj: int
    seed: int
    record_times: tuple
    L: np.ndarray | None = None
    J: np.ndarray | None = None
    h: float = 1e-3
    workers: int = 1
    chunk_size: int = 256

    def __post_init__(self):
        if self.kind not in ("diffusive", "jump"):
            raise ValueError(f"unknown kind {self.kind!r}")
        d = self.dim
        K = np.asarray(self.K, dtype=complex)
        if K.shape != (d, d):
            raise DimensionMismatch(f"K must be {d}x{d}")
        object.__setattr__(self, "K", K)
        for name in ("L", "J"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=complex)
                if val.shape != (d, d):
                    raise DimensionMismatch(f"{name} must be {d}x{d}")
                object.__setattr__(self, name, val)
        if self.kind == "diffusive" and self.L is None:
            raise ValueError("diffusive runs need L")
        if self.kind == "jump" and self.J is None:
            raise ValueError("jump runs need J")
        if self.h <= 0 or self.t_max <= 0 or self.n_traj < 1 or self.chunk_size < 1:
            raise ValueError("h, t_max must be positive; n_traj, chunk_size >= 1")
        times = np.array(sorted(set(float(t) for t in self.record_times)))
        if times.size == 0:
            raise ValueError("need at least one record time")
        if times[0] < 0 or times[-1] > self.t_max + 1e-12:
            raise ValueError("record times must lie in [0, t_max]")
        object.__setattr__(self, "record_times", tuple(times))


@dataclass(frozen=True)
class EnsembleStats:
    record_times: np.ndarray
    n_traj: int
    counts: np.ndarray
    mean_norm2: np.ndarray
    stderr_norm2: np.ndarray
    mean_rho: np.ndarray
    stderr_rho: np.ndarray
    aborted: np.ndarray
    survival_frac: np.ndarray | None = None
    jump_histogram: np.ndarray | None = None


@dataclass(frozen=True)
class DensityEnsemble:
    record_times: np.ndarray
    samples: np.ndarray  # (n_traj, n_times, d, d)
    mean: np.ndarray


def _rng_for(seed, index):
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _chunks(n, size):
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


# ---------------------------------------------------------------------------
# Moment accumulation (chunk partials merged in fixed order)
# ---------------------------------------------------------------------------


def _partial_from_values(values, alive):
    """Per-time count/mean/M2 from a chunk's record values.

    ``values`` has shape (nc, T) or (nc, T, ...); ``alive`` (nc, T) masks
    aborted trajectories out of the moments.
    """
    mask = alive.astype(float)
    while mask.ndim < values.ndim:
        mask = mask[..., None]
    counts = alive.sum(axis=0)
    denom = np.maximum(counts, 1).astype(float)
    shaped = denom.reshape(denom.shape + (1,) * (values.ndim - 2))
    mean = (values * mask).sum(axis=0) / shaped
    m2 = (np.abs(values - mean) ** 2 * mask).sum(axis=0)
    return counts, mean, m2


def _merge_moments(a, b):
    (na, ma, sa), (nb, mb, sb) = a, b
    n = na + nb
    shaped = lambda arr: arr.reshape(arr.shape + (1,) * (ma.ndim - arr.ndim)) if ma.ndim else arr
    nn = np.maximum(n, 1)
    delta = mb - ma
    mean = ma + delta * shaped(nb / nn)
    m2 = sa + sb + np.abs(delta) ** 2 * shaped(na * nb / nn)
    return n, mean, m2


def _stderr(n, m2):
    n = np.asarray(n, dtype=float)
    shaped = n.reshape(n.shape + (1,) * (np.asarray(m2).ndim - n.ndim))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sqrt(np.real(m2) / np.maximum(shaped * (shaped - 1), 1))
    return out


# ---------------------------------------------------------------------------
# Diffusive engine
# ---------------------------------------------------------------------------


def _snap_indices(cfg):
    n_steps = int(round(cfg.t_max / cfg.h))
    idx = [min(max(int(np.ceil(t / cfg.h - 0.5)), 0), n_steps) for t in cfg.record_times]
    return n_steps, np.array(idx, dtype=int)


def _diffusive_chunk(cfg, state0, lo, hi, n_steps, rec_idx):
    """Propagate trajectories [lo, hi); state may be a vector or a matrix."""
    nc = hi - lo
    vec_mode = state0.ndim == 1
    state = np.broadcast_to(state0, (nc,) + state0.shape).copy()
    noise = np.empty((nc, n_steps))
    for i in range(nc):
        noise[i] = _rng_for(cfg.seed, lo + i).standard_normal(n_steps)
    noise *= np.sqrt(cfg.h)

    n_rec = len(rec_idx)
    rec_states = np.zeros((nc, n_rec) + state0.shape, dtype=complex)
    alive_at = np.zeros((nc, n_rec), dtype=bool)
    alive = np.ones(nc, dtype=bool)
    rec_by_step = {}
    for r, step in enumerate(rec_idx):
        rec_by_step.setdefault(int(step), []).append(r)

    Kt, Lt = cfg.K.T, cfg.L.T
    for n in range(n_steps + 1):
        for r in rec_by_step.get(n, ()):
            rec_states[:, r] = state
            alive_at[:, r] = alive
        if n == n_steps:
            break
        dq = noise[:, n]
        if vec_mode:
            state = state - cfg.h * (state @ Kt) + dq[:, None] * (state @ Lt)
            norms = np.linalg.norm(state, axis=1)
        else:
            state = state - cfg.h * (cfg.K @ state) + dq[:, None, None] * (cfg.L @ state)
            norms = np.linalg.norm(state, axis=(1, 2))
        alive &= norms < NORM_GUARD
    return rec_states, alive_at


def simulate_diffusive(cfg, psi0):
    """Euler-Maruyama ensemble for the diffusive wave equation."""
    if cfg.kind != "diffusive":
        raise ValueError("config kind must be 'diffusive'")
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi0.size != cfg.dim:
        raise DimensionMismatch("psi0 has wrong dimension")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-12:
        raise ValueError("psi0 must be normalized")
    step_scale = cfg.h * float(np.linalg.norm(cfg.K, ord=2))
    if step_scale > 0.5:
        raise StepTooLarge(f"h * ||K|| = {step_scale:.3g} exceeds 0.5")
    if step_scale > 0.1:
        warnings.warn(f"h * ||K|| = {step_scale:.3g} exceeds 0.1; results will be biased")

    n_steps, rec_idx = _snap_indices(cfg)
    snapped = rec_idx * cfg.h

    def work(bounds):
        lo, hi = bounds
        states, alive = _diffusive_chunk(cfg, psi0, lo, hi, n_steps, rec_idx)
        norm2 = np.sum(np.abs(states) ** 2, axis=2)
        rho = np.einsum("nri,nrj->nrij", states, states.conj())
        return (
            _partial_from_values(norm2, alive),
            _partial_from_values(rho, alive),
            (hi - lo) - alive.sum(axis=0),
        )

    parts = _map_chunks(work, cfg)
    return _reduce_parts(cfg, snapped, parts, survival=None, hists=None)


# ---------------------------------------------------------------------------
# Jump engine
# ---------------------------------------------------------------------------


def _make_flow(a):
    """Return a solver for x(dt) = exp(-a dt) x, eigen-based when well conditioned."""
    d = a.shape[0]
    if d == 1:
        scalar = -complex(a[0, 0])
        return lambda dt, x: np.exp(scalar * dt) * x
    w, v = np.linalg.eig(a)
    if np.linalg.cond(v) < 1e6:
        vinv = np.linalg.inv(v)
        return lambda dt, x: v @ (np.exp(-w * dt)[:, None] * (vinv @ x))
    return lambda dt, x: expm(-a * dt) @ x


def _jump_chunk(cfg, state0, lo, hi):
    nc = hi - lo
    vec_mode = state0.ndim == 1
    mat0 = state0.reshape(cfg.dim, -1)
    drift = _make_flow(cfg.K + (cfg.J - np.eye(cfg.dim)))
    times = np.asarray(cfg.record_times)
    n_rec = times.size

    rec_states = np.zeros((nc, n_rec) + state0.shape, dtype=complex)
    alive_at = np.zeros((nc, n_rec), dtype=bool)
    jumps_at = np.zeros((nc, n_rec), dtype=int)
    for i in range(nc):
        rng = _rng_for(cfg.seed, lo + i)
        tau, jumps = 0.0, 0
        state = mat0.copy()
        alive = True
        next_event = rng.exponential()
        for r, t_rec in enumerate(times):
            while alive and next_event < t_rec:
                state = cfg.J @ drift(next_event - tau, state)
                tau = next_event
                jumps += 1
                next_event = tau + rng.exponential()
                if np.linalg.norm(state) >= NORM_GUARD:
                    alive = False
            if alive:
                state = drift(t_rec - tau, state)
                tau = t_rec
                if np.linalg.norm(state) >= NORM_GUARD:
                    alive = False
            rec_states[i, r] = state[:, 0] if vec_mode else state
            alive_at[i, r] = alive
            jumps_at[i, r] = jumps
    return rec_states, alive_at, jumps_at


def simulate_jump(cfg, psi0):
    """Exact event-driven ensemble for the jump wave equation."""
    if cfg.kind != "jump":
        raise ValueError("config kind must be 'jump'")
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi0.size != cfg.dim:
        raise DimensionMismatch("psi0 has wrong dimension")

    times = np.asarray(cfg.record_times)

    def work(bounds):
        lo, hi = bounds
        states, alive, jumps = _jump_chunk(cfg, psi0, lo, hi)
        norm2 = np.sum(np.abs(states) ** 2, axis=2)
        rho = np.einsum("nri,nrj->nrij", states, states.conj())
        surv = ((jumps == 0) & alive).sum(axis=0)
        hist = np.zeros((times.size, JUMP_HIST_BINS), dtype=int)
        capped = np.minimum(jumps, JUMP_HIST_BINS - 1)
        for r in range(times.size):
            hist[r] = np.bincount(capped[alive[:, r], r], minlength=JUMP_HIST_BINS)
        return (
            _partial_from_values(norm2, alive),
            _partial_from_values(rho, alive),
            (hi - lo) - alive.sum(axis=0),
            surv,
            hist,
        )

    parts = _map_chunks(work, cfg)
    return _reduce_parts(
        cfg,
        times,
        [p[:3] for p in parts],
        survival=np.sum([p[3] for p in parts], axis=0),
        hists=np.sum([p[4] for p in parts], axis=0),
    )


# ---------------------------------------------------------------------------
# Shared reduction
# ---------------------------------------------------------------------------


def _map_chunks(work, cfg):
    bounds = _chunks(cfg.n_traj, cfg.chunk_size)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(work, bounds))
    return [work(b) for b in bounds]


def _reduce_parts(cfg, times, parts, survival, hists):
    norm_mom = parts[0][0]
    rho_mom = parts[0][1]
    aborted = parts[0][2].copy()
    for part in parts[1:]:
        norm_mom = _merge_moments(norm_mom, part[0])
        rho_mom = _merge_moments(rho_mom, part[1])
        aborted += part[2]
    n, mean_n, m2_n = norm_mom
    _, mean_rho, m2_rho = rho_mom
    return EnsembleStats(
        record_times=np.asarray(times, dtype=float),
        n_traj=cfg.n_traj,
        counts=n,
        mean_norm2=np.real(mean_n),
        stderr_norm2=_stderr(n, m2_n),
        mean_rho=mean_rho,
        stderr_rho=_stderr(n, m2_rho),
        aborted=aborted,
        survival_frac=None if survival is None else survival / cfg.n_traj,
        jump_histogram=hists,
    )


# ---------------------------------------------------------------------------
# Density propagation and the unified coefficient map
# ---------------------------------------------------------------------------


def evolve_density(cfg, rho0, which=None):
    """Propagate rho_t = V_t rho_0 V_t^* pathwise, reusing the wave noise.

    The propagator V evolves by the same recursion (and the same
    per-trajectory noise) as the wave simulators, so for pure rho_0 the
    samples equal the outer products of the wave states path by path.
    """
    kind = which or cfg.kind
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (cfg.dim, cfg.dim):
        raise DimensionMismatch("rho0 has wrong shape")
    eye = np.eye(cfg.dim, dtype=complex)
    if kind == "diffusive":
        n_steps, rec_idx = _snap_indices(cfg)
        times = rec_idx * cfg.h
    else:
        times = np.asarray(cfg.record_times)

    samples = np.empty((cfg.n_traj, times.size, cfg.dim, cfg.dim), dtype=complex)
    for lo, hi in _chunks(cfg.n_traj, cfg.chunk_size):
        if kind == "diffusive":
            props, _ = _diffusive_chunk(cfg, eye, lo, hi, n_steps, rec_idx)
        else:
            props, _, _ = _jump_chunk(cfg, eye, lo, hi)
        samples[lo:hi] = props @ rho0 @ props.conj().transpose(0, 1, 3, 2)
    return DensityEnsemble(times, samples, samples.mean(axis=0))


@dataclass(frozen=True)
class UnifiedCoefficients:
    """Coefficients of the single quantum stochastic equation covering both unravelings."""

    K: np.ndarray
    K_minus: np.ndarray
    L_plus: np.ndarray
    J: np.ndarray


def unified_coefficients(kind, K, L=None, J=None):
    """Quantum coefficient set for the chosen classical unraveling.

    Diffusive (K, L): exchange coefficient I, creation L, annihilation
    -L.  Jump (K, J): exchange J, creation and annihilation i(J - I).
    """
    K = np.asarray(K, dtype=complex)
    eye = np.eye(K.shape[0], dtype=complex)
    if kind == "diffusive":
        if L is None:
            raise ValueError("diffusive coefficients need L")
        L = np.asarray(L, dtype=complex)
        return UnifiedCoefficients(K, -L, L, eye)
    if kind == "jump":
        if J is None:
            raise ValueError("jump coefficients need J")
        J = np.asarray(J, dtype=complex)
        L = J - eye
        return UnifiedCoefficients(K, 1j * L, 1j * L, J)
    raise ValueError(f"unknown kind {kind!r}")


def germ_model_from_unified(uc):
    """Single-noise generator model whose scalar structural map is the Lindbladian."""
    d = uc.K.shape[0]
    return GermModel(d, 1, uc.K, (uc.K_minus,), (KrausOp(uc.L_plus, (uc.J,)),))


# ---------------------------------------------------------------------------
# Martingale / submartingale diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleReport:
    mode: str
    entries: tuple  # (time, value, bound, ok) per record time / step
    passed: bool


def martingale_stats(stats, report):
    """Check the mean-square normalization against the dissipativity class.

    Filtering models must hold E||psi||^2 at 1 within four standard
    errors; lossy classes must be nonincreasing between consecutive
    record times within combined errors.
    """
    if len(stats.record_times) < 2:
        raise InsufficientData("need at least two record times")
    klass = report.klass if hasattr(report, "klass") else str(report)
    entries = []
    if klass == "filtering":
        for t, mean, se in zip(stats.record_times, stats.mean_norm2, stats.stderr_norm2):
            dev = abs(mean - 1.0)
            entries.append((float(t), float(dev), float(4.0 * se), dev <= 4.0 * se))
        mode = "martingale"
    else:
        for i in range(len(stats.record_times) - 1):
            step = stats.mean_norm2[i + 1] - stats.mean_norm2[i]
            bound = 4.0 * float(
                np.hypot(stats.stderr_norm2[i], stats.stderr_norm2[i + 1])
            )
            entries.append(
                (float(stats.record_times[i + 1]), float(step), bound, step <= bound)
            )
        mode = "submartingale"
    return MartingaleReport(mode, tuple(entries), all(e[3] for e in entries))
