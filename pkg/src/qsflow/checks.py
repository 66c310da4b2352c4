"""Randomized residual batteries over the algebra and coherent calculus.

These aggregate worst-case residuals of the primitive operations over
seeded random draws; the command-line front end and the acceptance tests
both run them.  Residuals, not booleans, are returned so callers pin
their own tolerances.
"""

import numpy as np

from . import ito
from .coherent import PiecewiseCoherent, weyl_semigroup_check
from .germ import GermModel, KrausOp
from .ito import compose, extend, hp_product, pseudo_adjoint, star, star_product

__all__ = [
    "algebra_residuals",
    "random_coherent",
    "random_model",
    "random_quadruple",
    "table_residuals",
    "weyl_residuals",
]


def _cbox(rng, *shape, scale=1.0):
    """Complex entries with |Re|, |Im| <= scale/sqrt(2), so moduli stay <= scale."""
    bound = scale / np.sqrt(2.0)
    return rng.uniform(-bound, bound, shape) + 1j * rng.uniform(-bound, bound, shape)


def random_quadruple(rng, m, scale=1.0):
    return ito.ItoQuadruple(
        _cbox(rng, m, m, scale=scale),
        _cbox(rng, m, 1, scale=scale),
        _cbox(rng, 1, m, scale=scale),
        complex(_cbox(rng, scale=scale)),
    )


def random_coherent(rng, m, horizon, pieces=2, scale=1.0):
    bps = np.concatenate([[0.0], np.sort(rng.uniform(0, horizon, pieces - 1)), [horizon]])
    bps = np.unique(bps)
    amps = _cbox(rng, bps.size - 1, m, scale=scale)
    return PiecewiseCoherent(m, horizon, bps, amps)


def random_model(rng, d, m, p, scale=1.0):
    """A generator model with random Kraus family and K centered at phi(I)/2.

    Centering keeps random draws near the filtering regime; shift K to
    move the class.
    """
    kraus = tuple(
        KrausOp(_cbox(rng, d, d, scale=scale), tuple(_cbox(rng, d, d, scale=scale) for _ in range(m)))
        for _ in range(p)
    )
    phi_i = sum((op.plus.conj().T @ op.plus for op in kraus), np.zeros((d, d), dtype=complex))
    ham = _cbox(rng, d, d, scale=scale)
    K = 0.5 * phi_i + 1j * (ham + ham.conj().T)
    K_list = tuple(_cbox(rng, d, d, scale=scale) for _ in range(m))
    return GermModel(d, m, K, K_list, kraus)


def _faulty_product(fault):
    swap = float(fault.get("exchange_swap", 0.0))

    def product(a, b):
        out = hp_product(a, b)
        if swap:
            return ito.ItoQuadruple(
                out.exchange + swap * (b.exchange @ a.exchange),
                out.creation,
                out.annihilation,
                out.time,
            )
        return out

    return product


def algebra_residuals(samples, m_max, seed, fault=None):
    """Worst residuals of associativity, involution, and the extension homomorphism.

    ``fault`` optionally perturbs the product (test hook for the CLI's
    mutation check); residuals are reported against the perturbed product
    so an injected fault surfaces as a nonzero homomorphism defect.
    """
    rng = np.random.default_rng(seed)
    product = hp_product if fault is None else _faulty_product(fault)
    out = {
        "assoc": 0.0,
        "star_anti": 0.0,
        "compose_assoc": 0.0,
        "star_twisted": 0.0,
        "extend_hom": 0.0,
        "involution": 0.0,
        "extend_star": 0.0,
    }
    for _ in range(samples):
        m = int(rng.integers(1, m_max + 1))
        a, b, c = (random_quadruple(rng, m) for _ in range(3))
        out["assoc"] = max(out["assoc"], (product(product(a, b), c) - product(a, product(b, c))).norm())
        out["star_anti"] = max(
            out["star_anti"], (star(product(a, b)) - product(star(b), star(a))).norm()
        )
        out["compose_assoc"] = max(
            out["compose_assoc"],
            (compose(compose(a, b), c) - compose(a, compose(b, c))).norm(),
        )
        out["star_twisted"] = max(
            out["star_twisted"],
            (star_product(compose(b, a), c) - star_product(a, star_product(b, c))).norm(),
        )
        out["extend_hom"] = max(
            out["extend_hom"],
            float(np.max(np.abs(extend(product(a, b)).matrix - extend(a).matrix @ extend(b).matrix))),
        )
        out["involution"] = max(out["involution"], (star(star(a)) - a).norm())
        out["extend_star"] = max(
            out["extend_star"],
            float(np.max(np.abs(pseudo_adjoint(extend(a)).matrix - extend(star(a)).matrix))),
        )
    return out


def table_residuals():
    """Exact residuals of the canonical increment-table identities."""
    w = ito.wiener(0.0, 1.0)
    p = ito.poisson(0.0, 1.0)
    d1 = ito.newton(1.0)
    return {
        "wiener_square": (hp_product(w, w) - d1).norm(),
        "poisson_square": (hp_product(p, p) - (p + d1)).norm(),
        "newton_square": hp_product(d1, d1).norm(),
    }


def weyl_residuals(samples, m_max, t_max, seed):
    """Worst polarized semigroup-law discrepancy over random draws."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        m = int(rng.integers(1, m_max + 1))
        a = random_quadruple(rng, m)
        b = random_quadruple(rng, m)
        t = float(rng.uniform(0.0, t_max))
        horizon = float(rng.uniform(0.5, t_max))
        f = random_coherent(rng, m, horizon)
        h = random_coherent(rng, m, horizon)
        worst = max(worst, weyl_semigroup_check(t, a, f, h, b))
    return {"semigroup_law": worst}
