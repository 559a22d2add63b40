"""Kostlan Gaussian ensemble: sampling, norms and the barrier decomposition.

Coefficients are drawn in the orthonormal Kostlan basis with independent
real and imaginary parts, each ``N(0, 1)``, so that ``E|a_I|^2 = 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .poly_core import (
    AffinePolynomialMap,
    HomogeneousPolynomialSystem,
    homogenize,
    multi_indices,
    rescale,
)

__all__ = [
    "KostlanSample",
    "BarrierDecomposition",
    "trial_rng",
    "sample",
    "l2_norm",
    "inner",
    "bf_norm",
    "fs_pointwise",
    "decompose",
    "sphere_norm_mc",
    "gaussian_bf_norm_mc",
    "norm_ratio",
    "norm_ratio_series",
]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for trial ``trial`` of master seed ``seed``.

    The stream depends only on the pair, never on execution order.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


@dataclass(frozen=True)
class KostlanSample:
    system: HomogeneousPolynomialSystem
    seed_path: tuple[int, int]


@dataclass(frozen=True)
class BarrierDecomposition:
    """``s = a Q + R`` with ``Q`` of unit norm and ``R`` orthogonal to ``Q``."""

    a: complex
    Q: HomogeneousPolynomialSystem
    R: HomogeneousPolynomialSystem


def sample(n: int, d: int, r: int = 1, seed_path: tuple[int, int] = (0, 0)) -> KostlanSample:
    """Draw an ``r``-tuple of degree-``d`` forms in ``n + 1`` variables."""
    if d < 1 or not 1 <= r <= n:
        raise ValueError("need d >= 1 and 1 <= r <= n")
    size = len(multi_indices(n + 1, d, True))
    rng = trial_rng(*seed_path)
    re = rng.standard_normal((r, size))
    im = rng.standard_normal((r, size))
    return KostlanSample(HomogeneousPolynomialSystem(n, d, re + 1j * im), tuple(int(v) for v in seed_path))


def _system(P) -> HomogeneousPolynomialSystem:
    return P.system if isinstance(P, KostlanSample) else P


def l2_norm(P) -> float:
    """Euclidean norm of the Kostlan-basis coefficients, summed over components."""
    return float(np.linalg.norm(_system(P).coeffs))


def inner(P, Q) -> complex:
    """Hermitian inner product, linear in the first slot."""
    return complex(np.vdot(_system(Q).coeffs, _system(P).coeffs))


def bf_norm(p: AffinePolynomialMap) -> float:
    """Bargmann-Fock norm ``sqrt(pi^-n int |p|^2 exp(-|y|^2) dy)``.

    Monomials are orthogonal with ``||z^alpha||^2 = alpha!``, so this is a
    weighted coefficient sum.
    """
    dense = p.dense
    exps = multi_indices(p.n, p.max_degree)
    weights = np.exp(gammaln(exps + 1).sum(axis=1))
    return float(math.sqrt(np.sum(np.abs(dense) ** 2 * weights)))


def fs_pointwise(P, Z) -> float:
    """``|P(Z)| / |Z|^d``, with the Euclidean norm over components."""
    P = _system(P)
    Z = np.asarray(Z, dtype=complex)
    scale = np.linalg.norm(Z)
    if scale == 0:
        raise ValueError("Z must be nonzero")
    return float(np.linalg.norm(P.evaluate(Z / scale)))


def decompose(s, Q_raw: HomogeneousPolynomialSystem) -> BarrierDecomposition:
    """Split ``s`` along the unit vector ``Q_raw / ||Q_raw||``."""
    s = _system(s)
    norm = l2_norm(Q_raw)
    if norm == 0:
        raise ValueError("Q_raw must be nonzero")
    Q = Q_raw * (1.0 / norm)
    a = inner(s, Q)
    return BarrierDecomposition(a, Q, s - Q * a)


def sphere_norm_mc(P, points: int, rng: np.random.Generator, batch: int = 200_000) -> float:
    """Monte Carlo estimate of the L^2 norm by integration over the unit sphere.

    For ``Z`` uniform on the sphere of ``C^{n+1}``, ``E|Z^I|^2 = n! I!/(d+n)!``,
    so ``||P||^2 = E|P(Z)|^2 / n!``.
    """
    P = _system(P)
    total, done = 0.0, 0
    while done < points:
        m = min(batch, points - done)
        g = rng.standard_normal((m, P.n + 1)) + 1j * rng.standard_normal((m, P.n + 1))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        total += float(np.sum(np.abs(P.evaluate(g)) ** 2))
        done += m
    return math.sqrt(total / points / math.factorial(P.n))


def gaussian_bf_norm_mc(p: AffinePolynomialMap, points: int, rng: np.random.Generator) -> float:
    """Monte Carlo Bargmann-Fock norm: ``E|p(y)|^2`` with ``Re y, Im y ~ N(0, 1/2)``."""
    y = (rng.standard_normal((points, p.n)) + 1j * rng.standard_normal((points, p.n))) / math.sqrt(2)
    return math.sqrt(float(np.mean(np.sum(np.abs(p(y)) ** 2, axis=1))))


def norm_ratio(p: AffinePolynomialMap, eps: float, d: int) -> float:
    """``||P_{eps,d}|| d^{n/2} / ||p(./eps)||_BF`` with ``P_{eps,d}`` the homogenized rescaling."""
    P = homogenize(rescale(p, math.sqrt(d) / eps), d)
    return l2_norm(P) * d ** (p.n / 2) / bf_norm(rescale(p, 1.0 / eps))


def norm_ratio_series(p: AffinePolynomialMap, eps: float, degrees) -> np.ndarray:
    return np.array([norm_ratio(p, eps, int(d)) for d in degrees])
