"""Barrier certificate: c_j budgets, Fubini-Study correction bounds, event conditions and trials.

A Kostlan sample ``s`` is split as ``s = a Q + R`` with ``Q`` the normalised
homogenisation of the rescaled barrier polynomial ``p``.  In the chart
``z -> (1, z eps / sqrt(d))`` and after multiplying by ``||P_{eps,d}||``,
the zero locus of ``s`` is that of ``f + g`` with ``f = a p`` and
``g(z) = ||P_{eps,d}|| R(1, z eps / sqrt(d))``.  The event holds when the
perturbation budgets ``c_j`` and the Fubini-Study correction ``mu`` are small.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np
from scipy.stats import norm as normal_dist

from .config import ExperimentConfig, worker_count
from .errors import DegenerateInputError
from .kostlan import BarrierDecomposition, l2_norm, trial_rng
from .moser import complex_structure, fs_forms
from .poly_core import (
    AffinePolynomialMap,
    HomogeneousPolynomialSystem,
    _index,
    _log_weights,
    _power_monomials,
    _shift,
    homogenize,
    multi_indices,
    rescale,
)
from .transversality import (
    SAFETY,
    BoxGrid,
    SupNormEstimate,
    _spectral_norm,
    c_norm,
    grid_derivative_maxima,
    real_to_complex,
)

__all__ = [
    "CjValues",
    "MuBounds",
    "EventRecord",
    "TrialSummary",
    "BarrierSetup",
    "RemainderNorms",
    "cj_compute",
    "mu_bounds",
    "mu_scaling_constant",
    "polynomial_norms",
    "event_check",
    "wilson_interval",
    "iter_trials",
    "run_trials",
    "summarize",
    "CSV_COLUMNS",
    "write_csv",
]


# ---------------------------------------------------------------------------
# c_j budgets


@dataclass(frozen=True)
class CjValues:
    """``c_j = eta^{-2(j+1)} ||f||_{C^{j+1}}^{2j+1} ||g||_{C^j}`` for ``j = 0, 1, 2``."""

    c0: float
    c1: float
    c2: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.c0, self.c1, self.c2)


def cj_compute(eta: float, f_norms, g_norms) -> CjValues:
    """Apply the budget formula.

    Parameters
    ----------
    eta : float
        Transversality margin of ``f``, positive.
    f_norms : sequence of 3 floats
        ``||f||_{C^1}, ||f||_{C^2}, ||f||_{C^3}``.
    g_norms : sequence of 3 floats
        ``||g||_{C^0}, ||g||_{C^1}, ||g||_{C^2}``.
    """
    if not eta > 0:
        raise DegenerateInputError(f"eta must be positive, got {eta}")
    f_norms = [float(v) for v in f_norms]
    g_norms = [float(v) for v in g_norms]
    if len(f_norms) != 3 or len(g_norms) != 3:
        raise ValueError("need three f norms and three g norms")
    vals = [f_norms[j] ** (2 * j + 1) * g_norms[j] / eta ** (2 * (j + 1)) for j in range(3)]
    return CjValues(*vals)


# ---------------------------------------------------------------------------
# Fubini-Study correction


class MuBounds(NamedTuple):
    """Certified sup norms over the ball of ``mu``, of ``d mu`` and the ``C^1`` norm of ``mu``."""

    mu_c0: float
    dmu_c0: float
    mu_c1: float


def _mu_second_derivative(x: np.ndarray, s: float, K: np.ndarray) -> np.ndarray:
    # H[..., i, j, k] = d_k d_j mu_i for mu = (q - 1) K x / 2, q = 1 / (1 + s |x|^2)
    q = 1.0 / (1.0 + s * np.sum(x * x, axis=-1))
    Kx = x @ K.T
    a1 = (-2.0 * s * q * q)[..., None] * x
    eye = np.eye(x.shape[-1])
    a2 = (-2.0 * s * q * q)[..., None, None] * eye + (8.0 * s * s * q**3)[..., None, None] * (
        x[..., :, None] * x[..., None, :])
    H = Kx[..., :, None, None] * a2[..., None, :, :]
    H = H + K[None, :, None, :] * a1[..., None, :, None]
    H = H + K[None, :, :, None] * a1[..., None, None, :]
    return 0.5 * H


def mu_bounds(eps: float, d: int, grid: BoxGrid | None = None) -> MuBounds:
    """Certified bounds on the Fubini-Study correction ``mu = lambda - lambda_0`` over the grid ball.

    ``mu`` is the difference between the rescaled Fubini-Study primitive
    and the flat one (see :func:`kostlan_lab.moser.fs_forms`).  Each grid
    maximum is raised by ``SAFETY`` times the grid maximum of the next
    derivative times the covering radius; ``||d(d mu)|| <= 2 ||D^2 mu||``.
    """
    if d < 1 or not eps > 0:
        raise ValueError("need d >= 1 and eps > 0")
    grid = BoxGrid.ball(2, 2.0, 0.2) if grid is None else grid
    _, mu = fs_forms(eps, d, grid.n)
    s = eps * eps / d
    K = complex_structure(grid.n)
    m0 = m1 = mw = m2 = 0.0
    for x in grid.chunks(size=50_000):
        m0 = max(m0, float(np.linalg.norm(mu(x), axis=-1).max()))
        D = mu.jacobian(x)
        m1 = max(m1, float(np.linalg.norm(D, 2, axis=(-2, -1)).max()))
        W = np.swapaxes(D, -1, -2) - D
        mw = max(mw, float(np.linalg.norm(W, 2, axis=(-2, -1)).max()))
        H = _mu_second_derivative(x, s, K)
        m2 = max(m2, float(np.sqrt(np.sum(H * H, axis=(-3, -2, -1))).max()))
    cover = grid.covering_radius
    mu_c0 = m0 + SAFETY * m1 * cover
    dmu_c0 = mw + SAFETY * 2.0 * m2 * cover
    dmu_sup = m1 + SAFETY * m2 * cover
    return MuBounds(mu_c0, dmu_c0, max(mu_c0, dmu_sup))


def mu_scaling_constant(eps: float, degrees: Iterable[int], grid: BoxGrid | None = None) -> float:
    """Fitted ``K`` in ``mu_c0 <= K eps^2 / d``: the largest ratio over ``degrees``."""
    return max(mu_bounds(eps, int(d), grid).mu_c0 / (eps * eps / int(d)) for d in degrees)


# ---------------------------------------------------------------------------
# certified norms


def polynomial_norms(p: AffinePolynomialMap, grid: BoxGrid) -> list[SupNormEstimate]:
    """Certified sup estimates of ``||d^j p||`` for ``j = 0..3``."""
    maxima = grid_derivative_maxima(p, grid, 4)
    return [SupNormEstimate.from_maxima(maxima, j, grid) for j in range(4)]


def _multiplicities(n: int, order: int) -> list[tuple[tuple[int, ...], int]]:
    out = []
    for tup in itertools.combinations_with_replacement(range(n), order):
        out.append((tup, len(set(itertools.permutations(tup)))))
    return out


class RemainderNorms:
    """Batched certified ``C^0..C^2`` norms of chart remainders ``g`` on a grid.

    The chart map of a degree-``d`` form is truncated at degree
    ``truncation``; every dropped monomial ``c z^alpha`` of degree ``k``
    enters a tail bound ``|c| k^j R^{k-j}`` on its ``j``-th derivative over
    the ball of radius ``R = grid.outer_radius``.

    Parameters
    ----------
    n, d : int
        Number of affine variables and degree of the forms.
    eps : float
        Scale of the chart ``z -> z eps / sqrt(d)``.
    scale : float
        Constant factor applied to every remainder (``||P_{eps,d}||``).
    grid : BoxGrid
        Grid on which the sup norms are certified.
    truncation : int
        Highest chart degree evaluated on the grid.
    """

    ORDER = 3

    def __init__(self, n: int, d: int, eps: float, scale: float, grid: BoxGrid,
                 truncation: int = 40, chunk: int = 2048, cache_bytes: int = 300 * 2**20):
        if grid.n != n:
            raise ValueError("grid dimension does not match")
        self.n, self.d, self.grid = n, d, grid
        K = min(d, int(truncation))
        self.degree = K
        hom = multi_indices(n + 1, d, True)
        alpha = hom[:, 1:]
        deg = alpha.sum(axis=1)
        logscale = _log_weights(n, d) + deg * math.log(eps / math.sqrt(d))
        factor = float(scale) * np.exp(logscale)
        keep = deg <= K
        index = _index(n, K)
        self._src = np.nonzero(keep)[0]
        self._dst = np.array([index[tuple(int(v) for v in row)] for row in alpha[keep]], dtype=np.int64)
        self._factor = factor[keep]
        self._size = len(multi_indices(n, K))
        tail_idx = np.nonzero(~keep)[0]
        R = grid.outer_radius
        kk = deg[tail_idx].astype(float)
        self._tail_idx = tail_idx
        self._tail_w = np.stack(
            [factor[tail_idx] * kk**j * R ** (kk - j) for j in range(self.ORDER + 1)], axis=1)
        self._layout = []
        for k in range(self.ORDER + 1):
            for tup in itertools.combinations_with_replacement(range(n), k):
                beta = tuple(tup.count(j) for j in range(n))
                self._layout.append((k, tup, _shift(n, K, beta)))
        self._chunks = [real_to_complex(x) for x in grid.chunks(size=chunk)]
        exps = multi_indices(n, K)
        total = sum(len(z) for z in self._chunks) * len(exps) * 16
        self._mono = [_power_monomials(z, exps) for z in self._chunks] if total <= cache_bytes else None

    def _monomials(self, i: int) -> np.ndarray:
        if self._mono is not None:
            return self._mono[i]
        return _power_monomials(self._chunks[i], multi_indices(self.n, self.degree))

    def chart_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        """Dense chart coefficients (on ``multi_indices(n, degree)``) of a batch ``(B, N_d)``."""
        coeffs = np.atleast_2d(coeffs)
        out = np.zeros((len(coeffs), self._size), dtype=complex)
        out[:, self._dst] = coeffs[:, self._src] * self._factor
        return out

    def tails(self, coeffs: np.ndarray) -> np.ndarray:
        """Tail bounds ``(B, 4)`` on the derivatives of orders ``0..3`` of the dropped terms."""
        coeffs = np.atleast_2d(coeffs)
        if len(self._tail_idx) == 0:
            return np.zeros((len(coeffs), self.ORDER + 1))
        return np.abs(coeffs[:, self._tail_idx]) @ self._tail_w

    def maxima(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid maxima ``(B, 4)`` of the derivative norms of orders ``0..3`` of the truncated maps."""
        c = self.chart_coefficients(coeffs)
        B, n = len(c), self.n
        blocks = []
        for _, _, (src, dst, fac) in self._layout:
            shifted = np.zeros_like(c)
            shifted[:, dst] = c[:, src] * fac
            blocks.append(shifted)
        stacked = np.concatenate(blocks, axis=0).T  # (T, nb * B)
        col = {(k, tup): b for b, (k, tup, _) in enumerate(self._layout)}
        out = np.zeros((B, self.ORDER + 1))
        for i in range(len(self._chunks)):
            vals = (self._monomials(i) @ stacked).reshape(-1, len(self._layout), B)
            out[:, 0] = np.maximum(out[:, 0], np.abs(vals[:, 0, :]).max(axis=0))
            grad2 = sum(np.abs(vals[:, col[(1, (j,))], :]) ** 2 for j in range(n))
            out[:, 1] = np.maximum(out[:, 1], np.sqrt(grad2).max(axis=0))
            hess = np.empty((vals.shape[0], B, n, n), dtype=complex)
            for a in range(n):
                for b in range(a, n):
                    hess[:, :, a, b] = hess[:, :, b, a] = vals[:, col[(2, (a, b))], :]
            n2 = _spectral_norm(hess.reshape(-1, n, n)).reshape(-1, B)
            out[:, 2] = np.maximum(out[:, 2], n2.max(axis=0))
            fro = sum(m * np.abs(vals[:, col[(3, tup)], :]) ** 2 for tup, m in _multiplicities(n, 3))
            out[:, 3] = np.maximum(out[:, 3], np.sqrt(fro).max(axis=0))
        return out

    def estimates(self, coeffs: np.ndarray) -> list[list[SupNormEstimate]]:
        """Certified ``C^0, C^1, C^2`` estimates for each map of the batch."""
        maxima = self.maxima(coeffs)
        tails = self.tails(coeffs)
        out = []
        for b in range(len(maxima)):
            ests = [SupNormEstimate.from_maxima(maxima[b], j, self.grid, tail=tails[b])
                    for j in range(3)]
            out.append(ests)
        return out


# ---------------------------------------------------------------------------
# events


@dataclass(frozen=True, eq=False)
class BarrierSetup:
    """Everything an event check needs that does not depend on the trial.

    ``eta`` is the margin of ``p``; the effective margin of ``f = a p`` is
    ``|a| eta``.  ``p_norms`` are the certified ``C^1, C^2, C^3`` norms of
    ``p``.
    """

    p: AffinePolynomialMap
    eps: float
    d: int
    eta: float
    diam_L: float
    Q: HomogeneousPolynomialSystem
    P_norm: float
    p_norms: tuple[float, float, float]
    mu: MuBounds
    remainder: RemainderNorms
    aragon_c: float = 1.0

    @classmethod
    def build(cls, p: AffinePolynomialMap, eps: float, d: int, eta: float, diam_L: float,
              grid: BoxGrid | None = None, truncation: int = 40, aragon_c: float = 1.0) -> "BarrierSetup":
        """Precompute the barrier polynomial data on ``grid`` (default spacing 0.4, radius 2)."""
        if not eta > 0:
            raise DegenerateInputError(f"transversality margin {eta} is not positive")
        if d < p.max_degree:
            raise ValueError("d must be at least the degree of p")
        grid = BoxGrid.ball(p.n, 2.0, 0.4) if grid is None else grid
        P = homogenize(rescale(p, math.sqrt(d) / eps), d)
        P_norm = l2_norm(P)
        Q = P * (1.0 / P_norm)
        ests = polynomial_norms(p, grid)
        p_norms = tuple(c_norm(ests, k) for k in (1, 2, 3))
        mu = mu_bounds(eps, d, grid)
        remainder = RemainderNorms(p.n, d, eps, P_norm, grid, truncation)
        return cls(p, eps, d, float(eta), float(diam_L), Q, P_norm, p_norms, mu, remainder, aragon_c)


@dataclass
class EventRecord:
    """Certificate of one trial.

    ``eta`` is the effective margin ``|a| eta_p`` of ``f = a p``; every norm
    is a certified upper bound.  ``a_required`` is the smallest ``|a|`` at
    which every amplitude-dependent inequality holds for this remainder;
    the ``mu`` terms do not depend on ``a`` and are left out of it.
    """

    trial_index: int
    a: complex
    eta: float
    g_norms: tuple[SupNormEstimate, SupNormEstimate, SupNormEstimate]
    f_norms: tuple[float, float, float]
    cj: CjValues
    mu_c0: float
    dmu_c0: float
    mu_c1: float
    cond_transversality: bool
    cond_kikou: bool
    cond_cloclo: bool
    cond_aragon: bool
    event: bool
    a_required: float
    loop_length: float | None = None
    loop_diameter: float | None = None
    flow_residual: float | None = None
    extras: dict = field(default_factory=dict)


def _record(index: int, a: complex, g_est: list[SupNormEstimate], setup: BarrierSetup) -> EventRecord:
    amp = abs(a)
    g = [e.certified_upper for e in g_est]
    mu = setup.mu
    f_norms = tuple(amp * v for v in setup.p_norms)
    unit = cj_compute(setup.eta, setup.p_norms, g).as_tuple()
    if amp > 0:
        cj = cj_compute(amp * setup.eta, f_norms, g)
        cvals = cj.as_tuple()
    else:
        cj = CjValues(*(math.inf if v > 0 else 0.0 for v in unit))
        cvals = cj.as_tuple()
    cond_t = amp > 0 and g[1] <= amp * setup.eta / 8
    cond_k = max(cvals[0], cvals[1], mu.mu_c0, mu.dmu_c0) <= 1 / 16
    cond_c = max(cvals[0], cvals[1], mu.mu_c0) <= setup.diam_L / 16
    cond_a = max(cvals[2], mu.mu_c1) <= setup.aragon_c
    # c_j scales like 1/|a|: each condition gives a lower bound on |a|
    need = [8 * g[1] / setup.eta, 16 * unit[0], 16 * unit[1], 16 * unit[0] / setup.diam_L,
            16 * unit[1] / setup.diam_L, unit[2] / setup.aragon_c]
    a_req = max(need)
    event = bool(cond_t and cond_k and cond_c and cond_a)
    return EventRecord(index, complex(a), amp * setup.eta, tuple(g_est), f_norms, cj, mu.mu_c0, mu.dmu_c0,
                       mu.mu_c1, bool(cond_t), bool(cond_k), bool(cond_c), bool(cond_a), event, float(a_req))


def event_check(dec: BarrierDecomposition, p: AffinePolynomialMap, eps: float, d: int, eta: float,
                diam_L: float, setup: BarrierSetup | None = None, trial_index: int = 0,
                **build_kwargs) -> EventRecord:
    """Evaluate the barrier event for one decomposition ``s = a Q + R``.

    Parameters
    ----------
    dec : BarrierDecomposition
        Decomposition against the normalised homogenisation of
        ``rescale(p, sqrt(d) / eps)``.
    p : AffinePolynomialMap
        Barrier polynomial on the chart ball.
    eps, d : float, int
        Scale and degree.
    eta : float
        Transversality margin of ``p``.
    diam_L : float
        Intrinsic diameter of the Lagrangian on ``Z(p)``.
    setup : BarrierSetup, optional
        Precomputed data; built from the other arguments when omitted.
    """
    if not eta > 0:
        raise DegenerateInputError(f"transversality margin {eta} is not positive")
    if setup is None:
        setup = BarrierSetup.build(p, eps, d, eta, diam_L, **build_kwargs)
    g_est = setup.remainder.estimates(dec.R.coeffs[:1])[0]
    return _record(trial_index, dec.a, g_est, setup)


# ---------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class TrialSummary:
    n: int
    d: int
    epsilon: float
    trials: int
    events: int
    frequency: float | None
    ci_low: float | None
    ci_high: float | None
    seed: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


def wilson_interval(events: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    z = float(normal_dist.ppf(0.5 + level / 2))
    phat = events / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials))
    # the score equation has the root 0 (resp. 1) exactly when no trial (every trial) is an event
    low = 0.0 if events == 0 else max(0.0, centre - half)
    high = 1.0 if events == trials else min(1.0, centre + half)
    return low, high


def summarize(records: Iterable[EventRecord], cfg: ExperimentConfig) -> TrialSummary:
    total = events = 0
    for rec in records:
        total += 1
        events += int(rec.event)
    if total == 0:
        return TrialSummary(cfg.n, cfg.d, cfg.epsilon, 0, 0, None, None, None, cfg.seed)
    lo, hi = wilson_interval(events, total)
    return TrialSummary(cfg.n, cfg.d, cfg.epsilon, total, events, events / total, lo, hi, cfg.seed)


def _sample_batch(cfg: ExperimentConfig, setup: BarrierSetup, indices: range):
    size = setup.Q.coeffs.shape[1]
    q = setup.Q.coeffs[0]
    coeffs = np.empty((len(indices), size), dtype=complex)
    for row, t in enumerate(indices):
        rng = trial_rng(cfg.seed, t)
        coeffs[row] = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    a = coeffs @ q.conj()
    R = coeffs - a[:, None] * q[None, :]
    return a, R


def _run_batch(cfg: ExperimentConfig, setup: BarrierSetup, indices: range) -> list[EventRecord]:
    a, R = _sample_batch(cfg, setup, indices)
    ests = setup.remainder.estimates(R)
    return [_record(t, a[row], ests[row], setup) for row, t in enumerate(indices)]


def iter_trials(cfg: ExperimentConfig, setup: BarrierSetup,
                post: Callable[[EventRecord], EventRecord] | None = None) -> Iterator[EventRecord]:
    """Yield the records of trials ``0..cfg.trials - 1`` in order.

    Trial ``t`` draws its sample from ``trial_rng(cfg.seed, t)``, so the
    stream does not depend on batching or on the number of workers.
    ``post`` may enrich a record, for instance with a transported loop.
    """
    batches = [range(s, min(s + cfg.batch, cfg.trials)) for s in range(0, cfg.trials, cfg.batch)]
    workers = worker_count()
    if workers == 1:
        results = (_run_batch(cfg, setup, b) for b in batches)
        for recs in results:
            for rec in recs:
                yield post(rec) if post is not None else rec
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for recs in pool.map(lambda b: _run_batch(cfg, setup, b), batches):
            for rec in recs:
                yield post(rec) if post is not None else rec


def run_trials(cfg: ExperimentConfig, setup: BarrierSetup,
               post: Callable[[EventRecord], EventRecord] | None = None) -> tuple[list[EventRecord], TrialSummary]:
    """Run every trial of ``cfg`` and summarise the event frequency with a Wilson 95% interval."""
    records = list(iter_trials(cfg, setup, post))
    return records, summarize(records, cfg)


# ---------------------------------------------------------------------------
# output

CSV_COLUMNS = [
    "trial_index", "a_re", "a_im", "eta", "g_c0", "g_c1", "g_c2", "f_c1", "f_c2", "f_c3", "c0", "c1", "c2",
    "mu_c0", "dmu_c0", "mu_c1", "cond_transversality", "cond_kikou", "cond_cloclo", "cond_aragon", "event",
    "a_required", "loop_length", "loop_diameter", "flow_residual",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _row(rec: EventRecord) -> list[str]:
    vals = [rec.trial_index, rec.a.real, rec.a.imag, rec.eta, *(e.certified_upper for e in rec.g_norms),
            *rec.f_norms, *rec.cj.as_tuple(), rec.mu_c0, rec.dmu_c0, rec.mu_c1, rec.cond_transversality,
            rec.cond_kikou, rec.cond_cloclo, rec.cond_aragon, rec.event, rec.a_required, rec.loop_length,
            rec.loop_diameter, rec.flow_residual]
    return [_fmt(v) for v in vals]


def write_csv(records: Iterable[EventRecord], mode: str, path: str | None = None) -> str:
    """CSV text with a version comment line and one row per record; also written to ``path`` if given."""
    buf = io.StringIO()
    buf.write(f"# kostlan-lab v1 {mode}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(_row(rec))
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
