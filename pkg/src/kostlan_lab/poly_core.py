"""Polynomial maps on complex space: storage, evaluation, jets and chart changes.

Two containers are provided.  :class:`AffinePolynomialMap` holds raw monomial
coefficients of a map ``C^n -> C^r``.  :class:`HomogeneousPolynomialSystem`
holds an ``r``-tuple of degree-``d`` forms in ``n + 1`` variables, with
coefficients taken in the orthonormal Kostlan basis

    e_I = sqrt((d + n)! / (i_0! ... i_n!)) Z_0^{i_0} ... Z_n^{i_n}.

Real coordinates on ``C^n`` are interleaved, ``(Re z_1, Im z_1, ..., Re z_n,
Im z_n)``, and likewise for the values.
"""
from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "multi_indices",
    "AffinePolynomialMap",
    "HomogeneousPolynomialSystem",
    "RealJet",
    "evaluate",
    "complex_derivatives",
    "jet",
    "real_jets",
    "to_real_tensor",
    "homogenize",
    "rescale",
    "chart_restrict",
    "linear_substitution",
    "to_json",
    "from_json",
]


# ---------------------------------------------------------------------------
# multi-index bookkeeping


def _compositions(total: int, slots: int):
    if slots == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, slots - 1):
            yield (first,) + rest


@functools.lru_cache(maxsize=None)
def multi_indices(nvars: int, degree: int, homogeneous: bool = False) -> np.ndarray:
    """Exponent vectors in ``nvars`` variables, graded by degree.

    With ``homogeneous=True`` only the vectors of total degree exactly
    ``degree`` are returned.  The array is read-only and shared.
    """
    if nvars < 1 or degree < 0:
        raise ValueError("need nvars >= 1 and degree >= 0")
    degrees = [degree] if homogeneous else range(degree + 1)
    rows = [c for k in degrees for c in _compositions(k, nvars)]
    out = np.array(rows, dtype=np.int64).reshape(-1, nvars)
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=None)
def _index(nvars: int, degree: int, homogeneous: bool = False) -> dict:
    return {tuple(int(v) for v in row): k for k, row in enumerate(multi_indices(nvars, degree, homogeneous))}


@functools.lru_cache(maxsize=None)
def _shift(nvars: int, degree: int, beta: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # differentiation d^beta on the dense graded basis: (source, target, factor)
    exps = multi_indices(nvars, degree)
    index = _index(nvars, degree)
    b = np.asarray(beta, dtype=np.int64)
    shifted = exps - b
    ok = np.all(shifted >= 0, axis=1)
    src = np.nonzero(ok)[0]
    dst = np.array([index[tuple(int(v) for v in row)] for row in shifted[ok]], dtype=np.int64)
    factor = np.ones(len(src))
    for j in range(nvars):
        for m in range(int(b[j])):
            factor *= exps[src, j] - m
    return src, dst, factor


@functools.lru_cache(maxsize=None)
def _log_weights(n: int, d: int) -> np.ndarray:
    exps = multi_indices(n + 1, d, True)
    out = 0.5 * (gammaln(d + n + 1) - gammaln(exps + 1).sum(axis=1))
    out.setflags(write=False)
    return out


def _log_factorial_sum(exps: np.ndarray) -> np.ndarray:
    return gammaln(np.asarray(exps) + 1).sum(axis=-1)


def _power_monomials(z: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """Monomials ``z^alpha`` for every row of ``exps``; ``z`` has shape (N, n)."""
    npts, n = z.shape
    top = int(exps.max()) if exps.size else 0
    out = np.ones((npts, len(exps)), dtype=complex)
    for j in range(n):
        powers = np.empty((npts, top + 1), dtype=complex)
        powers[:, 0] = 1.0
        for k in range(1, top + 1):
            powers[:, k] = powers[:, k - 1] * z[:, j]
        out *= powers[:, exps[:, j]]
    return out


# ---------------------------------------------------------------------------
# affine maps


@dataclass(frozen=True, eq=False)
class AffinePolynomialMap:
    """Polynomial map ``C^n -> C^r`` with raw monomial coefficients.

    ``exponents`` has shape ``(T, n)`` and ``coeffs`` shape ``(r, T)``.
    """

    n: int
    r: int
    exponents: np.ndarray
    coeffs: np.ndarray
    max_degree: int

    def __post_init__(self):
        exps = np.array(self.exponents, dtype=np.int64).reshape(-1, self.n)
        coeffs = np.array(self.coeffs, dtype=complex).reshape(self.r, len(exps))
        if self.r < 1 or self.n < 1:
            raise ValueError("need n >= 1 and r >= 1")
        if np.any(exps < 0):
            raise ValueError("exponents must be nonnegative")
        if len(exps) and exps.sum(axis=1).max() > self.max_degree:
            raise ValueError("a term exceeds max_degree")
        exps.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "coeffs", coeffs)

    # constructors -----------------------------------------------------------

    @classmethod
    def from_terms(cls, n: int, terms: Mapping[Sequence[int], complex | Sequence[complex]],
                   r: int = 1, max_degree: int | None = None) -> "AffinePolynomialMap":
        """Build from ``{exponents: coefficient}``; for ``r > 1`` each value is a length-``r`` sequence."""
        exps = np.array([tuple(k) for k in terms], dtype=np.int64).reshape(-1, n)
        vals = np.array([np.broadcast_to(np.asarray(v, dtype=complex), (r,)) for v in terms.values()])
        vals = vals.reshape(len(exps), r).T
        deg = int(exps.sum(axis=1).max()) if len(exps) else 0
        return cls(n, r, exps, vals, deg if max_degree is None else max_degree)

    @classmethod
    def from_dense(cls, n: int, max_degree: int, coeffs: np.ndarray) -> "AffinePolynomialMap":
        """Coefficients laid out on ``multi_indices(n, max_degree)``."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        return cls(n, coeffs.shape[0], multi_indices(n, max_degree), coeffs, max_degree)

    @classmethod
    def constant(cls, n: int, value: complex | Sequence[complex]) -> "AffinePolynomialMap":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        return cls(n, len(value), np.zeros((1, n), dtype=np.int64), value.reshape(-1, 1), 0)

    # views ------------------------------------------------------------------

    @functools.cached_property
    def dense(self) -> np.ndarray:
        """Coefficients on the full graded basis of degree ``<= max_degree``."""
        index = _index(self.n, self.max_degree)
        out = np.zeros((self.r, len(index)), dtype=complex)
        for t, row in enumerate(self.exponents):
            out[:, index[tuple(int(v) for v in row)]] += self.coeffs[:, t]
        out.setflags(write=False)
        return out

    @property
    def degree(self) -> int:
        """Actual degree (largest total degree carrying a nonzero coefficient)."""
        live = np.any(self.coeffs != 0, axis=0)
        return int(self.exponents[live].sum(axis=1).max()) if live.any() else 0

    def __call__(self, z) -> np.ndarray:
        return evaluate(self, z)

    def truncated(self, degree: int) -> "AffinePolynomialMap":
        """Drop every term of total degree above ``degree``."""
        keep = self.exponents.sum(axis=1) <= degree
        return AffinePolynomialMap(self.n, self.r, self.exponents[keep], self.coeffs[:, keep],
                                   min(degree, self.max_degree))

    # arithmetic -------------------------------------------------------------

    def _binary(self, other: "AffinePolynomialMap", a: complex, b: complex) -> "AffinePolynomialMap":
        if other.n != self.n or other.r != self.r:
            raise ValueError("shape mismatch")
        deg = max(self.max_degree, other.max_degree)
        out = np.zeros((self.r, len(multi_indices(self.n, deg))), dtype=complex)
        out[:, : self.dense.shape[1]] += a * self.dense
        out[:, : other.dense.shape[1]] += b * other.dense
        return AffinePolynomialMap.from_dense(self.n, deg, out)

    def __add__(self, other):
        if not isinstance(other, AffinePolynomialMap):
            other = AffinePolynomialMap.constant(self.n, np.broadcast_to(other, (self.r,)))
        return self._binary(other, 1.0, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, AffinePolynomialMap):
            other = AffinePolynomialMap.constant(self.n, np.broadcast_to(other, (self.r,)))
        return self._binary(other, 1.0, -1.0)

    def __neg__(self):
        return AffinePolynomialMap(self.n, self.r, self.exponents, -self.coeffs, self.max_degree)

    def __mul__(self, other):
        if isinstance(other, AffinePolynomialMap):
            return _product(self, other)
        return AffinePolynomialMap(self.n, self.r, self.exponents, self.coeffs * complex(other),
                                   self.max_degree)

    __rmul__ = __mul__


def _product(p: AffinePolynomialMap, q: AffinePolynomialMap) -> AffinePolynomialMap:
    if p.n != q.n or 1 not in (p.r, q.r):
        raise ValueError("product needs equal n and a scalar factor")
    deg = p.max_degree + q.max_degree
    index = _index(p.n, deg)
    r = max(p.r, q.r)
    out = np.zeros((r, len(index)), dtype=complex)
    for s, a in enumerate(p.exponents):
        for t, b in enumerate(q.exponents):
            out[:, index[tuple(int(v) for v in a + b)]] += p.coeffs[:, s] * q.coeffs[:, t]
    return AffinePolynomialMap.from_dense(p.n, deg, out)


def linear_substitution(p: AffinePolynomialMap, matrix: np.ndarray) -> AffinePolynomialMap:
    """Return ``z -> p(matrix @ z)``."""
    matrix = np.asarray(matrix, dtype=complex)
    n = p.n
    coords = [AffinePolynomialMap.from_terms(n, {tuple(np.eye(n, dtype=int)[k]): matrix[j, k] for k in range(n)},
                                             max_degree=1) for j in range(n)]
    total = AffinePolynomialMap.from_dense(n, p.max_degree, np.zeros((p.r, len(multi_indices(n, p.max_degree)))))
    for t, alpha in enumerate(p.exponents):
        term = AffinePolynomialMap.constant(n, p.coeffs[:, t])
        for j, power in enumerate(alpha):
            for _ in range(int(power)):
                term = term * coords[j]
        total = total + term
    return total.truncated(p.max_degree)


def _as_points(z, n: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    z = z.reshape(-1, n)
    return z, single


def evaluate(p: AffinePolynomialMap, z) -> np.ndarray:
    """Evaluate ``p`` at one point ``(n,)`` or a batch ``(N, n)``."""
    pts, single = _as_points(z, p.n)
    vals = _power_monomials(pts, p.exponents) @ p.coeffs.T
    return vals[0] if single else vals


def _derivative_tuples(n: int, order: int):
    return list(itertools.combinations_with_replacement(range(n), order))


def complex_derivatives(p: AffinePolynomialMap, z, order: int = 1,
                        monomials: np.ndarray | None = None) -> list[np.ndarray]:
    """Complex derivative tensors of ``p`` up to ``order`` (at most 4).

    Returns ``[value (N, r), d1 (N, r, n), d2 (N, r, n, n), ...]`` computed
    from exact coefficient differentiation.  ``monomials`` may carry a
    precomputed ``(N, T)`` matrix on ``multi_indices(n, p.max_degree)``.
    """
    if not 0 <= order <= 4:
        raise ValueError("derivative order must be in 0..4")
    n, r, deg = p.n, p.r, p.max_degree
    if monomials is None:
        pts, _ = _as_points(z, n)
        monomials = _power_monomials(pts, multi_indices(n, deg))
    dense = p.dense
    blocks, layout = [], []
    for k in range(order + 1):
        for tup in _derivative_tuples(n, k):
            beta = tuple(tup.count(j) for j in range(n))
            src, dst, fac = _shift(n, deg, beta)
            shifted = np.zeros_like(dense)
            shifted[:, dst] = dense[:, src] * fac
            blocks.append(shifted)
            layout.append((k, tup))
    stacked = np.concatenate(blocks, axis=0)
    vals = monomials @ stacked.T
    npts = vals.shape[0]
    out = [np.zeros((npts, r) + (n,) * k, dtype=complex) for k in range(order + 1)]
    for b, (k, tup) in enumerate(layout):
        col = vals[:, b * r:(b + 1) * r]
        for perm in set(itertools.permutations(tup)):
            out[k][(slice(None), slice(None)) + perm] = col
    return out


# ---------------------------------------------------------------------------
# real jets

_PHASE = np.array([1.0, 1.0j])


def to_real_tensor(tensor: np.ndarray, order: int) -> np.ndarray:
    """Real form of a holomorphic derivative tensor.

    ``tensor`` has shape ``(..., r, n, ..., n)`` with ``order`` trailing
    derivative axes; the result has shape ``(..., 2r, 2n, ..., 2n)``.
    """
    t = np.asarray(tensor, dtype=complex)
    lead = t.ndim - order - 1
    for k in range(order):
        axis = lead + 1 + k
        t = np.expand_dims(t, axis + 1) * _PHASE.reshape((2,) + (1,) * (t.ndim - axis - 1))
        shape = t.shape[:axis] + (t.shape[axis] * 2,) + t.shape[axis + 2:]
        t = t.reshape(shape)
    real = np.stack([t.real, t.imag], axis=lead + 1)
    shape = real.shape[:lead] + (real.shape[lead] * 2,) + real.shape[lead + 2:]
    return real.reshape(shape)


def complex_to_real(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).reshape(z.shape[:-1] + (2 * z.shape[-1],))


def real_to_complex(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    pairs = x.reshape(x.shape[:-1] + (x.shape[-1] // 2, 2))
    return pairs[..., 0] + 1j * pairs[..., 1]


@dataclass(frozen=True)
class RealJet:
    """Value and real derivative tensors of a holomorphic map at one point."""

    point: np.ndarray
    value: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    d3: np.ndarray | None = None


def real_jets(p: AffinePolynomialMap, z, order: int = 1) -> list[np.ndarray]:
    """Batched real jets: ``[value (N, 2r), d1 (N, 2r, 2n), ...]``."""
    cplx = complex_derivatives(p, z, order)
    return [to_real_tensor(t, k) for k, t in enumerate(cplx)]


def jet(p: AffinePolynomialMap, z, order: int = 1) -> RealJet:
    """Real jet of ``p`` at the single point ``z`` (complex n-vector)."""
    if order > 3:
        raise ValueError("derivative order must be <= 3")
    z = np.asarray(z, dtype=complex).reshape(p.n)
    tensors = [t[0] for t in real_jets(p, z[None, :], order)]
    tensors += [None] * (4 - len(tensors))
    return RealJet(complex_to_real(z), tensors[0], tensors[1], tensors[2], tensors[3])


# ---------------------------------------------------------------------------
# homogeneous systems


@dataclass(frozen=True, eq=False)
class HomogeneousPolynomialSystem:
    """``r`` forms of degree ``d`` in ``Z_0..Z_n``, coefficients in the Kostlan basis."""

    n: int
    d: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.d < 0 or self.n < 1:
            raise ValueError("need n >= 1 and d >= 0")
        size = len(multi_indices(self.n + 1, self.d, True))
        coeffs = np.array(self.coeffs, dtype=complex)
        coeffs = coeffs.reshape(-1, size)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def r(self) -> int:
        return self.coeffs.shape[0]

    @property
    def exponents(self) -> np.ndarray:
        return multi_indices(self.n + 1, self.d, True)

    @property
    def log_weights(self) -> np.ndarray:
        """``log sqrt((d+n)!/I!)`` for every exponent row."""
        return _log_weights(self.n, self.d)

    @classmethod
    def zeros(cls, n: int, d: int, r: int = 1) -> "HomogeneousPolynomialSystem":
        return cls(n, d, np.zeros((r, len(multi_indices(n + 1, d, True)))))

    @classmethod
    def from_raw(cls, n: int, d: int, terms: Mapping[Sequence[int], complex]) -> "HomogeneousPolynomialSystem":
        """Scalar form given by raw monomial coefficients ``{(i_0..i_n): b}``."""
        index = _index(n + 1, d, True)
        logw = _log_weights(n, d)
        out = np.zeros(len(index), dtype=complex)
        for exps, b in terms.items():
            k = index[tuple(exps)]
            out[k] += b * math.exp(-logw[k])
        return cls(n, d, out[None, :])

    def basis_element(self, k: int) -> "HomogeneousPolynomialSystem":
        out = np.zeros_like(self.coeffs)
        out[0, k] = 1.0
        return HomogeneousPolynomialSystem(self.n, self.d, out)

    def __call__(self, Z) -> np.ndarray:
        return self.evaluate(Z)

    def evaluate(self, Z) -> np.ndarray:
        """Evaluate at ``(n+1,)`` or ``(N, n+1)`` points, in log domain so large degrees stay finite."""
        pts, single = _as_points(Z, self.n + 1)
        mod = np.abs(pts)
        logmod = np.where(mod > 0, np.log(np.where(mod > 0, mod, 1.0)), -1e300)
        # only terms with a nonzero coefficient contribute
        live = np.any(self.coeffs != 0, axis=0)
        exps = self.exponents[live].astype(float)
        logs = logmod @ exps.T + self.log_weights[live]
        phase = np.angle(pts) @ exps.T
        basis = np.exp(logs + 1j * phase)
        vals = basis @ self.coeffs[:, live].T
        return vals[0] if single else vals

    def __add__(self, other: "HomogeneousPolynomialSystem"):
        return HomogeneousPolynomialSystem(self.n, self.d, self.coeffs + other.coeffs)

    def __sub__(self, other: "HomogeneousPolynomialSystem"):
        return HomogeneousPolynomialSystem(self.n, self.d, self.coeffs - other.coeffs)

    def __mul__(self, scalar: complex):
        return HomogeneousPolynomialSystem(self.n, self.d, self.coeffs * scalar)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# chart operations


def homogenize(p: AffinePolynomialMap, d: int) -> HomogeneousPolynomialSystem:
    """``P(Z) = Z_0^d p(Z_1/Z_0, ..., Z_n/Z_0)`` in the Kostlan basis."""
    if d < p.max_degree:
        raise ValueError(f"degree {d} is below max_degree {p.max_degree}")
    n = p.n
    index = _index(n + 1, d, True)
    logw = _log_weights(n, d)
    out = np.zeros((p.r, len(index)), dtype=complex)
    for t, alpha in enumerate(p.exponents):
        k = index[(d - int(alpha.sum()),) + tuple(int(v) for v in alpha)]
        out[:, k] += p.coeffs[:, t] * math.exp(-logw[k])
    return HomogeneousPolynomialSystem(n, d, out)


def rescale(p: AffinePolynomialMap, s: float) -> AffinePolynomialMap:
    """``z -> p(s z)``."""
    if not s > 0:
        raise ValueError("scale must be positive")
    deg = p.exponents.sum(axis=1)
    return AffinePolynomialMap(p.n, p.r, p.exponents, p.coeffs * np.power(float(s), deg), p.max_degree)


def chart_restrict(P: HomogeneousPolynomialSystem, eps: float, d: int | None = None,
                   max_degree: int | None = None) -> AffinePolynomialMap:
    """``q(z) = P(1, z eps / sqrt(d))`` as an affine map.

    ``max_degree`` optionally drops every term of higher total degree.
    """
    if d is not None and d != P.d:
        raise ValueError("d must equal the degree of P")
    d = P.d
    exps = P.exponents
    alpha = exps[:, 1:]
    deg = alpha.sum(axis=1)
    keep = np.ones(len(exps), bool) if max_degree is None else deg <= max_degree
    logscale = P.log_weights[keep] + deg[keep] * math.log(eps / math.sqrt(d))
    coeffs = P.coeffs[:, keep] * np.exp(logscale)
    return AffinePolynomialMap(P.n, P.r, alpha[keep], coeffs, d if max_degree is None else min(d, max_degree))


# ---------------------------------------------------------------------------
# serialization


def _terms(exps: np.ndarray, coeffs: np.ndarray) -> list[dict]:
    out = []
    for c in range(coeffs.shape[0]):
        for t, row in enumerate(exps):
            v = coeffs[c, t]
            if v != 0:
                out.append({"component": c, "exponents": [int(e) for e in row],
                            "re": float(v.real), "im": float(v.imag)})
    return out


def to_json(obj: AffinePolynomialMap | HomogeneousPolynomialSystem) -> str:
    """Serialize to ``{n, d | max_degree, r, basis, terms: [{exponents, re, im}]}``."""
    if isinstance(obj, HomogeneousPolynomialSystem):
        doc = {"kind": "homogeneous", "basis": "kostlan", "n": obj.n, "d": obj.d, "r": obj.r,
               "terms": _terms(obj.exponents, obj.coeffs)}
    else:
        doc = {"kind": "affine", "basis": "monomial", "n": obj.n, "max_degree": obj.max_degree,
               "r": obj.r, "terms": _terms(obj.exponents, obj.coeffs)}
    return json.dumps(doc)


def from_json(text: str | Mapping) -> AffinePolynomialMap | HomogeneousPolynomialSystem:
    doc = json.loads(text) if isinstance(text, str) else dict(text)
    n, r = int(doc["n"]), int(doc.get("r", 1))
    terms: Iterable[Mapping] = doc["terms"]
    if "d" in doc:
        d = int(doc["d"])
        index = _index(n + 1, d, True)
        coeffs = np.zeros((r, len(index)), dtype=complex)
        for t in terms:
            coeffs[int(t.get("component", 0)), index[tuple(t["exponents"])]] += complex(t["re"], t["im"])
        return HomogeneousPolynomialSystem(n, d, coeffs)
    deg = int(doc["max_degree"])
    index = _index(n, deg)
    coeffs = np.zeros((r, len(index)), dtype=complex)
    for t in terms:
        coeffs[int(t.get("component", 0)), index[tuple(t["exponents"])]] += complex(t["re"], t["im"])
    return AffinePolynomialMap.from_dense(n, deg, coeffs)
