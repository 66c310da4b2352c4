"""Structure theory of CP-flow generators at finite dimension.

A generator model consists of a drift operator K, one coupling operator
K_n per noise channel, and a Kraus family whose members carry one
"plus" operator and one operator per noise channel.  From this data the
module derives the block CP map phi, the germ matrix gamma, the
structural maps lambda, a conditional-complete-positivity test on the
degenerate-representation null space, the Choi/Kraus canonical dilation,
gauge fixing of the vacuum expectations, dissipativity classification,
and the differential unitarity conditions for cocycle coefficients.
"""

from dataclasses import dataclass

import numpy as np

from .ito import ItoQuadruple
from .linalg import (
    DimensionMismatch,
    NotPSD,
    SuperOperator,
    adjoint,
    matrix_from_json,
    matrix_to_json,
    superop_left,
    superop_right,
    unvec,
    vec,
)

__all__ = [
    "BasisNotSpanning",
    "CcpReport",
    "CocycleCoefficients",
    "DissipativityReport",
    "GermMatrix",
    "GermModel",
    "IntertwineReport",
    "KrausOp",
    "UnitarityReport",
    "block_choi",
    "block_phi_apply",
    "build_germ",
    "canonical_unitary_coefficients",
    "ccp_check",
    "classify",
    "gauge_fix",
    "germ_apply",
    "intertwine_check",
    "kraus_extract",
    "lambda_blocks",
    "lindblad_superop",
    "matrix_units",
    "phi_superop",
    "transpose_superop",
    "unitarity_check",
]


class BasisNotSpanning(ValueError):
    """The supplied operator basis does not span the full matrix algebra."""


@dataclass(frozen=True)
class KrausOp:
    """One member of the Kraus family: a plus operator and one operator per channel."""

    plus: np.ndarray
    noise: tuple

    def __post_init__(self):
        plus = np.asarray(self.plus, dtype=complex)
        noise = tuple(np.asarray(n, dtype=complex) for n in self.noise)
        d = plus.shape[0]
        if plus.shape != (d, d) or any(n.shape != (d, d) for n in noise):
            raise DimensionMismatch("Kraus blocks must all be d x d")
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "noise", noise)

    def column(self, j):
        """Block for column index j: 0 selects plus, n >= 1 selects channel n."""
        return self.plus if j == 0 else self.noise[j - 1]


@dataclass(frozen=True)
class GermModel:
    """Generator data (K, K_1..K_m, Kraus family) on a d-level system."""

    dim: int
    multiplicity: int
    K: np.ndarray
    K_list: tuple
    kraus: tuple

    def __post_init__(self):
        d, m = self.dim, self.multiplicity
        K = np.asarray(self.K, dtype=complex)
        K_list = tuple(np.asarray(k, dtype=complex) for k in self.K_list)
        kraus = tuple(self.kraus)
        if K.shape != (d, d):
            raise DimensionMismatch(f"K must be {d}x{d}, got {K.shape}")
        if len(K_list) != m or any(k.shape != (d, d) for k in K_list):
            raise DimensionMismatch(f"need {m} coupling operators of shape ({d},{d})")
        for op in kraus:
            if op.plus.shape != (d, d) or len(op.noise) != m:
                raise DimensionMismatch("Kraus member inconsistent with (d, m)")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "K_list", K_list)
        object.__setattr__(self, "kraus", kraus)

    @property
    def block_dim(self):
        """Dimension d(1+m) of the block space the germ acts on."""
        return self.dim * (1 + self.multiplicity)

    def to_json(self):
        return {
            "dim": self.dim,
            "multiplicity": self.multiplicity,
            "K": matrix_to_json(self.K),
            "K_list": [matrix_to_json(k) for k in self.K_list],
            "kraus": [
                {
                    "plus": matrix_to_json(op.plus),
                    "noise": [matrix_to_json(n) for n in op.noise],
                }
                for op in self.kraus
            ],
        }

    @classmethod
    def from_json(cls, obj):
        d = int(obj["dim"])
        m = int(obj["multiplicity"])
        return cls(
            d,
            m,
            matrix_from_json(obj["K"], (d, d)),
            tuple(matrix_from_json(k, (d, d)) for k in obj["K_list"]),
            tuple(
                KrausOp(
                    matrix_from_json(op["plus"], (d, d)),
                    tuple(matrix_from_json(n, (d, d)) for n in op["noise"]),
                )
                for op in obj["kraus"]
            ),
        )


@dataclass(frozen=True)
class GermMatrix:
    """(1+m) x (1+m) array of superoperator blocks; index 0 is the scalar corner."""

    dim: int
    multiplicity: int
    blocks: tuple


@dataclass(frozen=True)
class DissipativityReport:
    lambda_I_min: float
    block_lambda_I_min: float
    klass: str


@dataclass(frozen=True)
class CcpReport:
    passed: bool
    min_eig: float
    witness: np.ndarray | None


@dataclass(frozen=True)
class UnitarityReport:
    residuals: dict
    passed: bool


@dataclass(frozen=True)
class IntertwineReport:
    residuals: tuple
    passed: bool


# ---------------------------------------------------------------------------
# Block CP map and germ
# ---------------------------------------------------------------------------


def phi_superop(model, i, j):
    """Superoperator of the Kraus block sum; block indices 0 = scalar corner."""
    d = model.dim
    mat = np.zeros((d * d, d * d), dtype=complex)
    for op in model.kraus:
        mat += SuperOperator.sandwich(adjoint(op.column(i)), op.column(j)).matrix
    return SuperOperator(d, mat)


def block_phi_apply(model, b):
    """The block image [phi^mu_nu(B)] as a d(1+m) square matrix."""
    d, m = model.dim, model.multiplicity
    out = np.zeros((model.block_dim, model.block_dim), dtype=complex)
    for op in model.kraus:
        cols = [op.column(j) for j in range(m + 1)]
        for i in range(m + 1):
            rowfac = adjoint(cols[i]) @ b
            for j in range(m + 1):
                out[i * d : (i + 1) * d, j * d : (j + 1) * d] += rowfac @ cols[j]
    return out


def transpose_superop(d):
    """Superoperator of B -> B^T; positive but not CP, the stock counterexample."""
    mat = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            b = np.zeros((d, d), dtype=complex)
            b[i, j] = 1.0
            mat[:, j * d + i] = vec(b.T)
    return SuperOperator(d, mat)


def build_germ(model, phi_corner_override=None):
    """Assemble the germ blocks from the model.

    The corner is phi(B) - K^dag B - B K, the mixed blocks subtract the
    couplings, and the noise-noise blocks are the bare Kraus sums.
    ``phi_corner_override`` swaps a different superoperator in for the
    corner Kraus sum (used to build known-bad germs in checks).
    """
    d, m = model.dim, model.multiplicity
    rows = []
    for i in range(m + 1):
        row = []
        for j in range(m + 1):
            if i == 0 and j == 0 and phi_corner_override is not None:
                block = phi_corner_override
            else:
                block = phi_superop(model, i, j)
            if i == 0:
                block = block - superop_right(model.K if j == 0 else model.K_list[j - 1])
            if j == 0:
                block = block - superop_left(adjoint(model.K if i == 0 else model.K_list[i - 1]))
            row.append(block)
        rows.append(tuple(row))
    return GermMatrix(d, m, tuple(rows))


def germ_apply(germ, b):
    """Apply every germ block to B and assemble the d(1+m) square matrix."""
    d, m = germ.dim, germ.multiplicity
    out = np.zeros((d * (1 + m), d * (1 + m)), dtype=complex)
    for i in range(m + 1):
        for j in range(m + 1):
            out[i * d : (i + 1) * d, j * d : (j + 1) * d] = germ.blocks[i][j](b)
    return out


def lambda_blocks(model):
    """Structural maps: the germ with the identity ampliation removed.

    Only the noise-noise diagonal differs from the germ, by -B per
    channel.
    """
    germ = build_germ(model)
    ident = SuperOperator.identity(model.dim)
    rows = []
    for i in range(model.multiplicity + 1):
        row = []
        for j in range(model.multiplicity + 1):
            block = germ.blocks[i][j]
            if i == j and i > 0:
                block = block - ident
            row.append(block)
        rows.append(tuple(row))
    return tuple(rows)


def lindblad_superop(model, picture="heisenberg"):
    """Generator of the averaged semigroup.

    Heisenberg: B -> phi(B) - K^dag B - B K.  Schrodinger is its trace
    dual rho -> sum_k L^k rho L^k dag - K rho - rho K^dag.
    """
    d = model.dim
    mat = np.zeros((d * d, d * d), dtype=complex)
    if picture == "heisenberg":
        for op in model.kraus:
            mat += SuperOperator.sandwich(adjoint(op.plus), op.plus).matrix
        mat -= superop_left(adjoint(model.K)).matrix
        mat -= superop_right(model.K).matrix
    elif picture == "schrodinger":
        for op in model.kraus:
            mat += SuperOperator.sandwich(op.plus, adjoint(op.plus)).matrix
        mat -= superop_left(model.K).matrix
        mat -= superop_right(adjoint(model.K)).matrix
    else:
        raise ValueError(f"unknown picture {picture!r}")
    return SuperOperator(d, mat)


# ---------------------------------------------------------------------------
# Conditional complete positivity
# ---------------------------------------------------------------------------


def matrix_units(d):
    """The d^2 matrix units E_ij as a spanning operator basis."""
    out = []
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            out.append(e)
    return out


def ccp_check(germ, basis=None, tol=1e-8, null_cutoff=1e-10):
    """Test conditional complete positivity of a germ matrix.

    Builds the Gram form <zeta_k | gamma(B_k^* B_l) zeta_l> restricted to
    the subspace where the scalar components satisfy sum_k B_k zeta_k^0 = 0
    and reports its smallest eigenvalue.  On failure the witness vector is
    returned in full coordinates, shaped (len(basis), d(1+m)).
    """
    d, m = germ.dim, germ.multiplicity
    if basis is None:
        basis = matrix_units(d)
    basis = [np.asarray(b, dtype=complex) for b in basis]
    stacked = np.array([vec(b) for b in basis])
    if np.linalg.matrix_rank(stacked, tol=null_cutoff) < d * d:
        raise BasisNotSpanning(f"{len(basis)} operators do not span the {d}x{d} algebra")
    n = len(basis)
    dd = d * (1 + m)

    gram = np.zeros((n * dd, n * dd), dtype=complex)
    for k in range(n):
        for l in range(n):
            gram[k * dd : (k + 1) * dd, l * dd : (l + 1) * dd] = germ_apply(
                germ, adjoint(basis[k]) @ basis[l]
            )

    # Null space of (zeta_k^0) -> sum_k B_k zeta_k^0 via SVD.
    constraint = np.hstack(basis)
    _, s, vh = np.linalg.svd(constraint)
    rank = int(np.sum(s > null_cutoff * max(1.0, s[0] if s.size else 0.0)))
    null0 = vh[rank:].conj().T  # (n d, nullity)

    n_noise = n * d * m
    embed = np.zeros((n * dd, null0.shape[1] + n_noise), dtype=complex)
    for k in range(n):
        embed[k * dd : k * dd + d, : null0.shape[1]] = null0[k * d : (k + 1) * d, :]
    col = null0.shape[1]
    for k in range(n):
        for slot in range(d * m):
            embed[k * dd + d + slot, col] = 1.0
            col += 1

    q = embed.conj().T @ gram @ embed
    q = (q + q.conj().T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(q)
    min_eig = float(eigvals[0])
    if min_eig >= -tol:
        return CcpReport(True, min_eig, None)
    witness = (embed @ eigvecs[:, 0]).reshape(n, dd)
    return CcpReport(False, min_eig, witness)


# ---------------------------------------------------------------------------
# Choi form, Kraus extraction, gauge fixing
# ---------------------------------------------------------------------------


def block_choi(model):
    """Choi matrix of B -> [phi^mu_nu(B)], size d^2 (1+m) per side."""
    d = model.dim
    dd = model.block_dim
    choi = np.zeros((d * dd, d * dd), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            choi[i * dd : (i + 1) * dd, j * dd : (j + 1) * dd] = block_phi_apply(model, e)
    return choi


def kraus_extract(choi, d, m, rank_tol=1e-10):
    """Recover a Kraus family from a Choi matrix by eigendecomposition.

    Eigenvectors with eigenvalue above ``rank_tol * max_eig`` become family
    members; the reconstruction reproduces the block map up to the usual
    unitary mixing ambiguity.
    """
    dd = d * (1 + m)
    if choi.shape != (d * dd, d * dd):
        raise DimensionMismatch(f"Choi for (d={d}, m={m}) must be {d*dd} square")
    choi = np.asarray(choi, dtype=complex)
    herm = (choi + choi.conj().T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(herm)
    scale = float(np.max(np.abs(eigvals))) if eigvals.size else 0.0
    if eigvals.size and eigvals[0] < -rank_tol * max(scale, 1.0):
        raise NotPSD(f"Choi has eigenvalue {eigvals[0]:.3e}")
    family = []
    for lam, u in zip(eigvals, eigvecs.T):
        if lam <= rank_tol * max(scale, 1.0):
            continue
        a = np.sqrt(lam) * u.reshape(d, dd).T  # (dd, d): column i holds the i-block
        v = a.conj().T  # (d, dd)
        family.append(
            KrausOp(v[:, :d], tuple(v[:, (n + 1) * d : (n + 2) * d] for n in range(m)))
        )
    return tuple(family)


def gauge_fix(model, eta0):
    """Shift the plus-operators so their expectation in eta0 vanishes.

    Subtracting c_k = <eta0 | L^k eta0> from each plus operator while
    moving sum conj(c_k) L^k - |c|^2/2 into K leaves the scalar structural
    map unchanged as a superoperator.
    """
    eta0 = np.asarray(eta0, dtype=complex).reshape(-1)
    if eta0.size != model.dim:
        raise DimensionMismatch(f"eta0 must have dimension {model.dim}")
    if abs(np.linalg.norm(eta0) - 1.0) > 1e-12:
        raise ValueError("eta0 must be a unit vector")
    d = model.dim
    eye = np.eye(d, dtype=complex)
    new_kraus = []
    K_new = model.K.copy()
    for op in model.kraus:
        c = complex(np.vdot(eta0, op.plus @ eta0))
        new_kraus.append(KrausOp(op.plus - c * eye, op.noise))
        K_new = K_new + np.conj(c) * op.plus - 0.5 * abs(c) ** 2 * eye
    return GermModel(model.dim, model.multiplicity, K_new, model.K_list, tuple(new_kraus))


# ---------------------------------------------------------------------------
# Dissipativity classification
# ---------------------------------------------------------------------------


def _block_K(model):
    d, m = model.dim, model.multiplicity
    dd = model.block_dim
    big = np.zeros((dd, dd), dtype=complex)
    big[:d, :d] = model.K
    for n in range(m):
        big[:d, (n + 1) * d : (n + 2) * d] = model.K_list[n]
    big[d:, d:] = 0.5 * np.eye(d * m)
    return big


def classify(model, tol=1e-8):
    """Dissipativity class from D = K + K^dag - phi(I) and its block version."""
    eye = np.eye(model.dim, dtype=complex)
    phi_i = sum(
        (adjoint(op.plus) @ op.plus for op in model.kraus),
        np.zeros((model.dim, model.dim), dtype=complex),
    )
    disc = model.K + adjoint(model.K) - phi_i
    disc = (disc + adjoint(disc)) / 2.0
    big = _block_K(model)
    big_disc = big + adjoint(big) - block_phi_apply(model, eye)
    big_disc = (big_disc + adjoint(big_disc)) / 2.0
    lam_min = float(np.linalg.eigvalsh(disc)[0])
    block_min = float(np.linalg.eigvalsh(big_disc)[0])
    if float(np.linalg.norm(disc, ord=2)) <= tol:
        klass = "filtering"
    elif lam_min >= -tol:
        klass = "subfiltering"
    elif block_min >= -tol:
        klass = "contractive"
    else:
        klass = "none"
    return DissipativityReport(lam_min, block_min, klass)


# ---------------------------------------------------------------------------
# Differential unitarity conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CocycleCoefficients:
    """Coefficient blocks of a candidate unitary cocycle equation.

    Shapes: K is d x d; K_noise d x dm; K_dil d x dq; L_dil dq x d;
    J_noise dq x dm; J_dil dq x dq, where m is the noise multiplicity and
    q the dilation multiplicity.
    """

    dim: int
    noise_mult: int
    dilation_mult: int
    K: np.ndarray
    K_noise: np.ndarray
    K_dil: np.ndarray
    L_dil: np.ndarray
    J_noise: np.ndarray
    J_dil: np.ndarray

    def __post_init__(self):
        d, m, q = self.dim, self.noise_mult, self.dilation_mult
        shapes = {
            "K": (self.K, (d, d)),
            "K_noise": (self.K_noise, (d, d * m)),
            "K_dil": (self.K_dil, (d, d * q)),
            "L_dil": (self.L_dil, (d * q, d)),
            "J_noise": (self.J_noise, (d * q, d * m)),
            "J_dil": (self.J_dil, (d * q, d * q)),
        }
        for name, (val, shape) in shapes.items():
            val = np.asarray(val, dtype=complex)
            if val.shape != shape:
                raise DimensionMismatch(f"{name} must have shape {shape}, got {val.shape}")
            object.__setattr__(self, name, val)


def unitarity_check(coeffs, tol=1e-12):
    """Residuals of the five differential unitarity conditions."""
    L_adj = adjoint(coeffs.L_dil)
    J_adj = adjoint(coeffs.J_noise)
    eye_noise = np.eye(coeffs.dim * coeffs.noise_mult)
    eye_dil = np.eye(coeffs.dim * coeffs.dilation_mult)
    residuals = {
        "drift": np.linalg.norm(coeffs.K + adjoint(coeffs.K) - L_adj @ coeffs.L_dil),
        "noise_coupling": np.linalg.norm(coeffs.K_noise - L_adj @ coeffs.J_noise),
        "isometry": np.linalg.norm(J_adj @ coeffs.J_noise - eye_noise),
        "dilation_coupling": np.linalg.norm(coeffs.K_dil - L_adj @ coeffs.J_dil),
        "dilation_block": np.linalg.norm(
            coeffs.J_dil - (eye_dil - coeffs.J_noise @ J_adj)
        ),
    }
    residuals = {k: float(v) for k, v in residuals.items()}
    return UnitarityReport(residuals, all(v <= tol for v in residuals.values()))


def _stack_plus(model):
    return np.vstack([op.plus for op in model.kraus]) if model.kraus else np.zeros(
        (0, model.dim), dtype=complex
    )


def _stack_noise(model):
    d, m, p = model.dim, model.multiplicity, len(model.kraus)
    out = np.zeros((d * p, d * m), dtype=complex)
    for k, op in enumerate(model.kraus):
        for n in range(m):
            out[k * d : (k + 1) * d, n * d : (n + 1) * d] = op.noise[n]
    return out


def canonical_unitary_coefficients(model, iso_tol=1e-10):
    """Complete a model's Kraus data to a coefficient set satisfying unitarity.

    Uses the model's own noise blocks as the exchange isometry when they
    form one (the canonical block-dissipative choice); otherwise pads the
    dilation space by m extra channels and embeds the identity there.  The
    drift condition then holds exactly iff the model is filtering.
    """
    d, m, p = model.dim, model.multiplicity, len(model.kraus)
    L = _stack_plus(model)
    J_candidate = _stack_noise(model)
    eye_noise = np.eye(d * m)
    if p > 0 and np.linalg.norm(adjoint(J_candidate) @ J_candidate - eye_noise) <= iso_tol:
        q = p
        L_dil = L
        J_noise = J_candidate
    else:
        q = p + m
        L_dil = np.vstack([L, np.zeros((d * m, d), dtype=complex)])
        J_noise = np.vstack([np.zeros((d * p, d * m), dtype=complex), eye_noise])
    J_dil = np.eye(d * q) - J_noise @ adjoint(J_noise)
    L_adj = adjoint(L_dil)
    return CocycleCoefficients(
        d,
        m,
        q,
        model.K,
        L_adj @ J_noise,
        L_adj @ J_dil,
        L_dil,
        J_noise,
        J_dil,
    )


# ---------------------------------------------------------------------------
# Intertwining of an algebra representation with the dilation operators
# ---------------------------------------------------------------------------


def intertwine_check(model, a, i_rep, tol=1e-10):
    """Residuals of the four relations tying a quadruple to its dilation image.

    ``a`` lives over the model's noise space (multiplicity m) and ``i_rep``
    is a quadruple over the dilation space of dimension q = number of
    Kraus members.
    """
    d, m, q = model.dim, model.multiplicity, len(model.kraus)
    if a.multiplicity != m:
        raise DimensionMismatch(f"quadruple multiplicity {a.multiplicity} != model {m}")
    if i_rep.multiplicity != q:
        raise DimensionMismatch(
            f"representation multiplicity {i_rep.multiplicity} != Kraus count {q}"
        )
    eye = np.eye(d, dtype=complex)
    L = _stack_plus(model)  # (qd, d)
    L_noise = _stack_noise(model)  # (qd, md)
    K_noise = np.hstack(model.K_list) if m else np.zeros((d, 0), dtype=complex)  # (d, md)

    amp = lambda x: np.kron(np.asarray(x, dtype=complex), eye)

    r1 = L_noise @ amp(a.exchange) - amp(i_rep.exchange) @ L_noise
    r2 = (
        a.time * eye
        - K_noise @ amp(a.creation)
        - amp(i_rep.annihilation) @ L
        - i_rep.time * eye
    )
    r3 = L_noise @ amp(a.creation) - amp(i_rep.exchange) @ L - amp(i_rep.creation)
    r4 = amp(a.annihilation) - K_noise @ amp(a.exchange) - amp(i_rep.annihilation) @ L_noise
    residuals = tuple(float(np.linalg.norm(r)) for r in (r1, r2, r3, r4))
    return IntertwineReport(residuals, all(v <= tol for v in residuals))
