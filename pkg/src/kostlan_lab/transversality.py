"""Quantitative transversality: T(A), the projection Phi(A, Y), grid sup norms and eta margins.

Grids live in real coordinates ``(Re z_1, Im z_1, ...)``.  Derivative norms
of holomorphic maps are computed from the complex tensors: for a scalar map
the real operator norms of ``d^1`` and ``d^2`` equal the complex ones, while
order 3 uses the Frobenius norm, which is an upper bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DegenerateInputError, NotTransverseError
from .poly_core import AffinePolynomialMap, _power_monomials, complex_derivatives, multi_indices

__all__ = [
    "t_of",
    "phi_proj",
    "BoxGrid",
    "SupNormEstimate",
    "derivative_norms",
    "t_of_complex",
    "grid_derivative_maxima",
    "sup_norm",
    "c_norm",
    "eta_margin",
    "SAFETY",
]

SAFETY = 1.5


def t_of(A) -> float | np.ndarray:
    """Smallest singular value of ``A`` (``2r x 2n``, ``r <= n``); zero iff ``A`` is not onto.

    Stacks of matrices are accepted and give an array.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[-2] > A.shape[-1]:
        raise ValueError("T(A) needs at most as many rows as columns")
    s = np.linalg.svd(A, compute_uv=False)[..., -1]
    return float(s) if s.ndim == 0 else s


def phi_proj(A, Y, tol: float = 1e-12) -> np.ndarray:
    """Minimal-norm solution ``A^T (A A^T)^{-1} Y`` of ``A X = Y``.

    Raises :class:`NotTransverseError` if ``T(A) <= tol``.
    """
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    t = t_of(A)
    if np.any(np.asarray(t) <= tol):
        raise NotTransverseError(f"T(A) = {np.min(t):.3e} is below {tol:.1e}")
    gram = A @ np.swapaxes(A, -1, -2)
    w = np.linalg.solve(gram, Y[..., None])
    return (np.swapaxes(A, -1, -2) @ w)[..., 0]


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class BoxGrid:
    """Points ``center + h k`` (``k`` integer) covering the closed ball ``|x - center| <= radius``.

    Every point of the ball lies within ``h sqrt(dim)/2`` of the grid, the
    half-diagonal of a lattice cell; points are kept up to that distance
    beyond the sphere.
    """

    center: np.ndarray
    radius: float
    spacing: float

    def __post_init__(self):
        c = np.array(self.center, dtype=float).ravel()
        if not self.radius > 0 or not self.spacing > 0:
            raise ValueError("radius and spacing must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @classmethod
    def ball(cls, n: int, radius: float = 2.0, spacing: float = 0.05) -> "BoxGrid":
        """Grid on the ball of ``C^n`` centred at the origin."""
        return cls(np.zeros(2 * n), radius, spacing)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def n(self) -> int:
        return self.dim // 2

    @property
    def covering_radius(self) -> float:
        return self.spacing * math.sqrt(self.dim) / 2

    @property
    def outer_radius(self) -> float:
        return self.radius + self.covering_radius

    def chunks(self, size: int = 200_000) -> Iterator[np.ndarray]:
        """Yield the grid points in lexicographic order, in blocks of roughly ``size`` rows."""
        h, R = self.spacing, self.outer_radius
        m = int(math.floor(R / h + 1e-12))
        ticks = np.arange(-m, m + 1) * h
        dim = self.dim
        if dim == 1:
            pts = ticks[np.abs(ticks) <= R][:, None]
            yield pts + self.center
            return
        inner = np.stack(np.meshgrid(*([ticks] * (dim - 1)), indexing="ij"), axis=-1).reshape(-1, dim - 1)
        inner_sq = np.sum(inner**2, axis=1)
        buf, count = [], 0
        for t in ticks:
            keep = inner_sq + t * t <= R * R * (1 + 1e-12)
            if not keep.any():
                continue
            block = np.empty((int(keep.sum()), dim))
            block[:, 0] = t
            block[:, 1:] = inner[keep]
            buf.append(block)
            count += len(block)
            if count >= size:
                yield np.concatenate(buf) + self.center
                buf, count = [], 0
        if buf:
            yield np.concatenate(buf) + self.center

    @property
    def points(self) -> np.ndarray:
        return np.concatenate(list(self.chunks()))

    def __len__(self) -> int:
        return sum(len(c) for c in self.chunks())


def real_to_complex(x: np.ndarray) -> np.ndarray:
    return x[..., 0::2] + 1j * x[..., 1::2]


# ---------------------------------------------------------------------------
# derivative norms


def derivative_norms(tensor: np.ndarray, order: int) -> np.ndarray:
    """Norm of each holomorphic derivative tensor in a batch ``(N, r, n, ..., n)``.

    Exact operator norms for orders 0 and 1 and for order 2 when ``r = 1``;
    otherwise an upper bound (spectral norm of a matricization for order 2,
    Frobenius norm for order 3).
    """
    t = np.asarray(tensor)
    npts, r = t.shape[:2]
    if order == 0:
        return np.linalg.norm(t, axis=1)
    if order == 1:
        if r == 1:
            return np.linalg.norm(t[:, 0, :], axis=1)
        return np.linalg.norm(t, 2, axis=(1, 2))
    if order == 2:
        if r == 1:
            return _spectral_norm(t[:, 0])
        n = t.shape[2]
        return np.linalg.norm(t.reshape(npts, r, n * n), 2, axis=(1, 2))
    return np.linalg.norm(t.reshape(npts, -1), axis=1)


def _spectral_norm(mats: np.ndarray) -> np.ndarray:
    # batched largest singular value, closed form for 2 x 2
    if mats.shape[-2:] == (1, 1):
        return np.abs(mats[:, 0, 0])
    if mats.shape[-2:] == (2, 2):
        fro2 = np.sum(np.abs(mats) ** 2, axis=(1, 2))
        det = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
        disc = np.sqrt(np.maximum(fro2**2 - 4 * np.abs(det) ** 2, 0.0))
        return np.sqrt((fro2 + disc) / 2)
    return np.linalg.norm(mats, 2, axis=(1, 2))


def t_of_complex(jac: np.ndarray) -> np.ndarray:
    """``T`` of the real form of complex Jacobians ``(N, r, n)``.

    The real form has the complex singular values, each doubled.
    """
    if jac.shape[1] == 1:
        return np.linalg.norm(jac[:, 0, :], axis=1)
    return np.linalg.svd(jac, compute_uv=False)[:, -1]


def _chunk_derivatives(p: AffinePolynomialMap, x: np.ndarray, order: int) -> list[np.ndarray]:
    z = real_to_complex(x)
    mono = _power_monomials(z, multi_indices(p.n, p.max_degree))
    return complex_derivatives(p, None, order, monomials=mono)


def grid_derivative_maxima(p: AffinePolynomialMap, grid: BoxGrid, order: int) -> np.ndarray:
    """Grid maxima of the derivative norms of orders ``0..order``."""
    if grid.n != p.n:
        raise ValueError("grid dimension does not match the map")
    out = np.zeros(order + 1)
    for x in grid.chunks():
        ders = _chunk_derivatives(p, x, order)
        for k in range(order + 1):
            out[k] = max(out[k], float(derivative_norms(ders[k], k).max()))
    return out


@dataclass(frozen=True)
class SupNormEstimate:
    """Grid sup of ``||d^order map||`` with a certified off-grid correction.

    ``certified_upper = grid_max + lipschitz_bound * covering_radius + tail_bound``,
    where ``tail_bound`` accounts for terms dropped from a truncated map.
    """

    grid_max: float
    lipschitz_bound: float
    certified_upper: float
    order: int
    spacing: float
    tail_bound: float = 0.0

    @classmethod
    def from_maxima(cls, maxima, order: int, grid: BoxGrid, tail=None) -> "SupNormEstimate":
        tail_j = 0.0 if tail is None else float(tail[order])
        tail_next = 0.0 if tail is None else float(tail[order + 1])
        lip = SAFETY * (float(maxima[order + 1]) + tail_next)
        upper = float(maxima[order]) + lip * grid.covering_radius + tail_j
        return cls(float(maxima[order]), lip, upper, order, grid.spacing, tail_j)


def sup_norm(p: AffinePolynomialMap, grid: BoxGrid, order: int) -> SupNormEstimate:
    """Certified sup over the grid ball of the order-``order`` derivative norm (``order <= 2``)."""
    if not 0 <= order <= 2:
        raise ValueError("order must be 0, 1 or 2")
    maxima = grid_derivative_maxima(p, grid, order + 1)
    return SupNormEstimate.from_maxima(maxima, order, grid)


def c_norm(estimates: list[SupNormEstimate], k: int) -> float:
    """``C^k`` norm from per-order estimates: the largest certified bound of orders ``0..k``."""
    return max(e.certified_upper for e in estimates[: k + 1])


def eta_margin(p: AffinePolynomialMap, grid: BoxGrid, certified: bool = True) -> float:
    """Transversality margin: the largest ``eta`` with ``|p| < eta => T(dp) > eta`` on the ball.

    A point supports every ``eta <= max(|p|, T(dp))``, so the margin is the
    minimum of that quantity over the grid.  With ``certified=True`` both
    terms are first lowered by a local Taylor bound over the cell of radius
    ``grid.covering_radius`` around each point, using the exact first and
    second derivatives there and ``SAFETY`` times the grid maximum of the
    third; for maps of degree at most 3 this bound is exact.

    Raises :class:`DegenerateInputError` if the margin is not positive.
    """
    if grid.n != p.n:
        raise ValueError("grid dimension does not match the map")
    delta = grid.covering_radius
    m3 = 0.0
    if certified and p.max_degree >= 3:
        if p.max_degree == 3:
            # the third derivative of a cubic is constant
            m3 = float(derivative_norms(_chunk_derivatives(p, grid.center[None, :], 3)[3], 3)[0])
        else:
            m3 = float(grid_derivative_maxima(p, grid, 3)[3])
        m3 *= SAFETY
    eta = math.inf
    for x in grid.chunks():
        ders = _chunk_derivatives(p, x, 2 if certified else 1)
        val = derivative_norms(ders[0], 0)
        T = t_of_complex(ders[1])
        if certified:
            n1 = derivative_norms(ders[1], 1)
            n2 = derivative_norms(ders[2], 2)
            val = val - (delta * n1 + delta**2 / 2 * n2 + delta**3 / 6 * m3)
            T = T - (delta * n2 + delta**2 / 2 * m3)
        eta = min(eta, float(np.maximum(val, T).min()))
    if not eta > 0:
        raise DegenerateInputError(f"transversality margin {eta:.3e} is not positive")
    return eta
