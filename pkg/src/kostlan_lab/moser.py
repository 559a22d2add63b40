"""Flows that move zero loci and correct symplectic forms.

The isotopy field pushes ``Z(f)`` onto ``Z(f + g)``.  The Moser field solves
``i_X (Omega + t d nu) = -nu``.  A fixed-step RK4 integrator carries mesh
vertices along either field, with an optional Newton re-projection onto the
moving zero locus.

Real coordinates are interleaved ``(x_1, y_1, ..., x_n, y_n)``.  The standard
form is ``omega_0 = sum dx_k ^ dy_k``, represented by the matrix ``W`` with
``omega(u, v) = u^T W v``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.spatial import Delaunay

from .errors import (
    DisconnectedMeshError,
    FlowBreakdownError,
    NotTransverseError,
    SymplecticDegeneracyError,
)
from .poly_core import AffinePolynomialMap, complex_derivatives, to_real_tensor
from .transversality import BoxGrid, t_of

__all__ = [
    "Mesh",
    "FlowConfig",
    "FlowResult",
    "OneFormField",
    "chi",
    "chi_prime",
    "complex_structure",
    "standard_symplectic",
    "standard_primitive",
    "fs_forms",
    "quadratic_one_form",
    "IsotopyField",
    "iso_field",
    "flow_mesh",
    "nu_form",
    "tangent_frame",
    "s_of",
    "moser_field",
    "MoserField",
    "flow_psi",
    "plane_patch",
    "moser_demo",
    "simplex_integrals",
    "lagrangian_defect",
    "intrinsic_diameter",
]


# ---------------------------------------------------------------------------
# meshes


@dataclass(frozen=True, eq=False)
class Mesh:
    """Vertices in ``R^{2n}`` with edges and optional triangles.

    A loop mesh is the closed cycle ``0 -> 1 -> ... -> V-1 -> 0``.
    """

    vertices: np.ndarray
    edges: np.ndarray
    faces: np.ndarray | None = None
    kind: str = "surface"

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and (e.min() < 0 or e.max() >= len(v)):
            raise ValueError("edge index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", e)
        if self.faces is not None:
            object.__setattr__(self, "faces", np.array(self.faces, dtype=np.int64).reshape(-1, 3))
        if self.kind not in ("loop", "surface"):
            raise ValueError("kind must be 'loop' or 'surface'")

    @classmethod
    def loop(cls, vertices) -> "Mesh":
        v = np.asarray(vertices, dtype=float)
        k = np.arange(len(v))
        return cls(v, np.stack([k, (k + 1) % len(v)], axis=1), None, "loop")

    @classmethod
    def polar_disk(cls, radius: float, rings: int, sectors: int = 6) -> tuple[np.ndarray, np.ndarray]:
        """Delaunay triangulation of concentric rings in the complex disk.

        Ring ``k`` carries ``sectors * k`` points.  Returns the complex points and
        the faces, ready to be lifted into ``R^{2n}``.
        """
        pts = [0j]
        for k in range(1, rings + 1):
            m = sectors * k
            pts.extend(radius * k / rings * np.exp(2j * np.pi * (np.arange(m) + 0.5 * (k % 2)) / m))
        pts = np.array(pts)
        tri = Delaunay(np.stack([pts.real, pts.imag], axis=1))
        return pts, tri.simplices.astype(np.int64)

    @classmethod
    def from_faces(cls, vertices, faces) -> "Mesh":
        f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.unique(np.sort(e, axis=1), axis=0)
        return cls(vertices, e, f, "surface")

    def with_vertices(self, vertices) -> "Mesh":
        return replace(self, vertices=np.asarray(vertices, dtype=float))

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)

    def length(self) -> float:
        """Total edge length (the polygon length for a loop)."""
        return float(self.edge_lengths().sum())

    def tearing_ratio(self) -> float:
        """Largest edge length divided by the median edge length."""
        lengths = self.edge_lengths()
        return float(lengths.max() / np.median(lengths))

    def to_json(self) -> str:
        doc = {"kind": self.kind, "vertices": self.vertices.tolist(), "edges": self.edges.tolist()}
        if self.faces is not None:
            doc["faces"] = self.faces.tolist()
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Mesh":
        doc = json.loads(text)
        faces = doc.get("faces")
        return cls(np.array(doc["vertices"], dtype=float), np.array(doc["edges"]),
                   None if faces is None else np.array(faces), doc.get("kind", "surface"))


# ---------------------------------------------------------------------------
# cut-off and forms


def chi(s):
    """Quintic smoothstep: 1 on ``(-inf, 1/4]``, 0 on ``[1/2, inf)``, C^2 in between."""
    u = np.clip((np.asarray(s, dtype=float) - 0.25) * 4.0, 0.0, 1.0)
    return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u * u)


def chi_prime(s):
    u = np.clip((np.asarray(s, dtype=float) - 0.25) * 4.0, 0.0, 1.0)
    return -4.0 * 30.0 * u * u * (u - 1.0) ** 2


def complex_structure(n: int) -> np.ndarray:
    """Multiplication by ``i`` in interleaved real coordinates."""
    return np.kron(np.eye(n), np.array([[0.0, -1.0], [1.0, 0.0]]))


def standard_symplectic(n: int) -> np.ndarray:
    """Matrix of ``omega_0 = sum dx_k ^ dy_k``."""
    return -complex_structure(n)


@dataclass(frozen=True)
class OneFormField:
    """A 1-form on ``R^{2n}``: covector values and their Jacobian ``D[i, j] = d alpha_i / d x_j``."""

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x) -> np.ndarray:
        return self.value(np.asarray(x, dtype=float))

    def exterior(self, x) -> np.ndarray:
        """Matrix of ``d alpha`` at ``x``: ``D^T - D``."""
        D = self.jacobian(np.asarray(x, dtype=float))
        return np.swapaxes(D, -1, -2) - D

    def __add__(self, other: "OneFormField") -> "OneFormField":
        return OneFormField(lambda x: self.value(x) + other.value(x),
                            lambda x: self.jacobian(x) + other.jacobian(x))

    def __sub__(self, other: "OneFormField") -> "OneFormField":
        return OneFormField(lambda x: self.value(x) - other.value(x),
                            lambda x: self.jacobian(x) - other.jacobian(x))

    def scaled(self, c: float) -> "OneFormField":
        return OneFormField(lambda x: c * self.value(x), lambda x: c * self.jacobian(x))


def standard_primitive(n: int, gauge: str = "symmetric") -> OneFormField:
    """A primitive of ``omega_0``: ``(1/2) sum (x dy - y dx)`` or, with ``gauge='canonical'``, ``sum x dy``."""
    K = complex_structure(n)
    if gauge == "symmetric":
        return OneFormField(lambda x: 0.5 * x @ K.T, lambda x: np.broadcast_to(0.5 * K, x.shape[:-1] + K.shape))
    if gauge == "canonical":
        P = np.zeros((2 * n, 2 * n))
        P[1::2, 0::2] = np.eye(n)
        return OneFormField(lambda x: x @ P.T, lambda x: np.broadcast_to(P, x.shape[:-1] + P.shape))
    raise ValueError("gauge must be 'symmetric' or 'canonical'")


def quadratic_one_form(B, C=None) -> OneFormField:
    """``alpha_i(x) = sum_j B_ij x_j + sum_jk C_ijk x_j x_k``."""
    B = np.asarray(B, dtype=float)
    C = np.zeros(B.shape + (B.shape[1],)) if C is None else np.asarray(C, dtype=float)
    Cs = C + np.swapaxes(C, 1, 2)

    def value(x):
        return x @ B.T + np.einsum("ijk,...j,...k->...i", C, x, x)

    def jac(x):
        return B + np.einsum("ijk,...k->...ij", Cs, x)

    return OneFormField(value, jac)


def fs_forms(eps: float, d: int, n: int = 2) -> tuple[OneFormField, OneFormField]:
    """Rescaled Fubini-Study primitive ``lambda`` and its deviation ``mu = lambda - lambda_0``.

    With ``s = eps^2 / d`` and ``q = 1 / (1 + s |x|^2)``,
    ``lambda = (q/2) sum (x dy - y dx)``, the pull-back of the Fubini-Study
    primitive by ``z -> z eps / sqrt(d)`` multiplied by ``d / eps^2``; it
    agrees with ``lambda_0`` to third order at the origin, and
    ``|mu| <= s |x|^3 / 2``.
    """
    if d < 1 or not eps > 0:
        raise ValueError("need d >= 1 and eps > 0")
    s = eps * eps / d
    K = complex_structure(n)

    def parts(x):
        x = np.asarray(x, dtype=float)
        q = 1.0 / (1.0 + s * np.sum(x * x, axis=-1))
        Kx = x @ K.T
        grad_q = (-2.0 * s * q * q)[..., None] * x
        return q, Kx, grad_q

    def lam(x):
        q, Kx, _ = parts(x)
        return 0.5 * q[..., None] * Kx

    def lam_jac(x):
        q, Kx, grad_q = parts(x)
        return 0.5 * (q[..., None, None] * K + Kx[..., :, None] * grad_q[..., None, :])

    def mu(x):
        q, Kx, _ = parts(x)
        return 0.5 * (q - 1.0)[..., None] * Kx

    def mu_jac(x):
        q, Kx, grad_q = parts(x)
        return 0.5 * ((q - 1.0)[..., None, None] * K + Kx[..., :, None] * grad_q[..., None, :])

    return OneFormField(lam, lam_jac), OneFormField(mu, mu_jac)


# ---------------------------------------------------------------------------
# isotopy field


def _real_jets(p: AffinePolynomialMap, x: np.ndarray, order: int) -> list[np.ndarray]:
    z = x[:, 0::2] + 1j * x[:, 1::2]
    return [to_real_tensor(t, k) for k, t in enumerate(complex_derivatives(p, z, order))]


def _proj_with_derivative(A, Y, dA=None, dY=None):
    # X = A^T (A A^T)^{-1} Y and, if asked, dX[:, :, k] from dA[..., k] and dY[..., k]
    G = A @ np.swapaxes(A, 1, 2)
    w = np.linalg.solve(G, Y[..., None])[..., 0]
    X = np.einsum("nij,ni->nj", A, w)
    if dA is None:
        return X, None
    # dA: (N, 2r, 2n, K), dY: (N, 2r, K)
    term1 = np.einsum("nijk,ni->njk", dA, w)
    dG_w = np.einsum("nijk,nlj,nl->nik", dA, A, w) + np.einsum("nij,nljk,nl->nik", A, dA, w)
    rhs = dY - dG_w
    dw = np.linalg.solve(G, rhs)
    dX = term1 + np.einsum("nij,nik->njk", A, dw)
    return X, dX


@dataclass(frozen=True)
class IsotopyField:
    """``X_t(x) = chi(2|f(x)|/eta) chi((|x| - 1)/2) Phi(df_t(x), -g(x))`` with ``f_t = f + t g``."""

    f: AffinePolynomialMap
    g: AffinePolynomialMap
    eta: float
    tol: float = 1e-12

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def n(self) -> int:
        return self.f.n

    def __call__(self, t: float, x) -> np.ndarray:
        return self.evaluate(t, x)[0]

    def evaluate(self, t: float, x, jacobian: bool = False):
        """Field values ``(N, 2n)`` and, if requested, Jacobians ``(N, 2n, 2n)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        npts, dim = x.shape
        order = 2 if jacobian else 1
        jf = _real_jets(self.f, x, order)
        jg = _real_jets(self.g, x, order)
        fval = jf[0]
        absf = np.linalg.norm(fval, axis=1)
        radius = np.linalg.norm(x, axis=1)
        s1 = 2.0 * absf / self.eta
        s2 = (radius - 1.0) / 2.0
        cut = chi(s1) * chi(s2)
        X = np.zeros((npts, dim))
        dX = np.zeros((npts, dim, dim)) if jacobian else None
        active = cut > 0
        if not active.any():
            return X, dX
        A = jf[1][active] + t * jg[1][active]
        if np.any(t_of(A) <= self.tol):
            raise FlowBreakdownError("isotopy field: df_t is not onto inside the active region")
        Y = -jg[0][active]
        if jacobian:
            dA = jf[2][active] + t * jg[2][active]
            dY = -jg[1][active]
            P, dP = _proj_with_derivative(A, Y, dA, dY)
        else:
            P, _ = _proj_with_derivative(A, Y)
        c = cut[active]
        X[active] = c[:, None] * P
        if jacobian:
            fa = fval[active]
            nf = np.maximum(absf[active], 1e-300)
            grad_absf = np.einsum("ni,nij->nj", fa, jf[1][active]) / nf[:, None]
            r = np.maximum(radius[active], 1e-300)
            grad_c = (chi_prime(s1[active]) * (2.0 / self.eta) * chi(s2[active]))[:, None] * grad_absf
            grad_c += (chi(s1[active]) * chi_prime(s2[active]) * 0.5)[:, None] * x[active] / r[:, None]
            dX[active] = c[:, None, None] * dP + P[:, :, None] * grad_c[:, None, :]
        return X, dX


def iso_field(f: AffinePolynomialMap, g: AffinePolynomialMap, eta: float, t: float, x) -> np.ndarray:
    """Isotopy field at one point ``x`` (real ``2n``-vector)."""
    return IsotopyField(f, g, eta)(t, np.asarray(x, dtype=float)[None, :])[0]


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class FlowConfig:
    """Fixed-step RK4 settings.

    ``tolerance`` is relative to ``eta`` for the Newton re-projection, which
    runs at most ``newton_iterations`` times per step.
    """

    time_steps: int = 40
    newton_polish: bool = True
    tolerance: float = 1e-10
    newton_iterations: int = 3
    domain_radius: float = 2.0

    def __post_init__(self):
        if self.time_steps < 10:
            raise ValueError("time_steps must be at least 10")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class FlowResult:
    mesh: Mesh
    displacement: np.ndarray
    max_displacement: float
    field_max: float
    residual: float
    max_radius: float
    jacobians: np.ndarray | None = None
    newton_steps: int = 0
    extras: dict = field(default_factory=dict)


def _newton_project(F: AffinePolynomialMap, x: np.ndarray, tol: float, iterations: int) -> tuple[np.ndarray, int]:
    """Move each vertex onto ``Z(F)`` along ``Phi(dF, -F)``; returns the new points and iteration count."""
    used = 0
    for _ in range(iterations):
        jets = _real_jets(F, x, 1)
        res = np.linalg.norm(jets[0], axis=1)
        todo = res > tol
        if not todo.any():
            break
        used += 1
        try:
            step, _ = _proj_with_derivative(jets[1][todo], -jets[0][todo])
        except np.linalg.LinAlgError as exc:
            raise FlowBreakdownError("Newton projection hit a singular Jacobian") from exc
        x = x.copy()
        x[todo] += step
        new_res = np.linalg.norm(_real_jets(F, x[todo], 0)[0], axis=1)
        if not np.all(np.isfinite(new_res)) or np.any(new_res > 10 * res[todo] + tol):
            raise FlowBreakdownError("Newton projection diverged")
    return x, used


def _rk4(field_fn, x0: np.ndarray, steps: int, jac: bool, after_step=None, domain_radius=math.inf):
    """Integrate ``x' = X(t, x)`` (and optionally ``J' = DX J``) from 0 to 1."""
    h = 1.0 / steps
    x = x0.copy()
    npts, dim = x.shape
    J = np.broadcast_to(np.eye(dim), (npts, dim, dim)).copy() if jac else None
    field_max = 0.0
    for k in range(steps):
        t = k * h
        if jac:
            k1, a1 = field_fn(t, x, True)
            k2, a2 = field_fn(t + h / 2, x + h / 2 * k1, True)
            k3, a3 = field_fn(t + h / 2, x + h / 2 * k2, True)
            k4, a4 = field_fn(t + h, x + h * k3, True)
            j1 = a1 @ J
            j2 = a2 @ (J + h / 2 * j1)
            j3 = a3 @ (J + h / 2 * j2)
            j4 = a4 @ (J + h * j3)
            J = J + h / 6 * (j1 + 2 * j2 + 2 * j3 + j4)
        else:
            k1 = field_fn(t, x, False)[0]
            k2 = field_fn(t + h / 2, x + h / 2 * k1, False)[0]
            k3 = field_fn(t + h / 2, x + h / 2 * k2, False)[0]
            k4 = field_fn(t + h, x + h * k3, False)[0]
        for kk in (k1, k2, k3, k4):
            field_max = max(field_max, float(np.linalg.norm(kk, axis=1).max(initial=0.0)))
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise FlowBreakdownError("non-finite state during integration")
        if after_step is not None:
            x = after_step(t + h, x)
        if np.linalg.norm(x, axis=1).max(initial=0.0) > domain_radius:
            raise FlowBreakdownError("a vertex left the integration domain")
    return x, J, field_max


def flow_mesh(mesh: Mesh, field: IsotopyField, cfg: FlowConfig = FlowConfig(), variational: bool = False) -> FlowResult:
    """Carry the vertices of ``mesh`` along the isotopy field from ``t = 0`` to ``t = 1``.

    With ``cfg.newton_polish`` each step ends with a Newton re-projection of
    every vertex onto ``Z(f_t)``.  The residual reported is ``max |f + g|``
    over the final vertices.  With ``variational=True`` the Jacobians of the
    time-one map are integrated alongside (re-projection is not
    differentiated).
    """
    f, g = field.f, field.g
    tol = cfg.tolerance * field.eta
    counter = {"newton": 0}

    def polish(t, x):
        if not cfg.newton_polish:
            return x
        x, used = _newton_project(f + g * t, x, tol, cfg.newton_iterations)
        counter["newton"] += used
        return x

    x0 = mesh.vertices
    x1, J, field_max = _rk4(field.evaluate, x0, cfg.time_steps, variational, polish, cfg.domain_radius)
    disp = np.linalg.norm(x1 - x0, axis=1)
    residual = float(np.linalg.norm(_real_jets(f + g, x1, 0)[0], axis=1).max(initial=0.0))
    return FlowResult(
        mesh=mesh.with_vertices(x1),
        displacement=disp,
        max_displacement=float(disp.max(initial=0.0)),
        field_max=field_max,
        residual=residual,
        max_radius=float(np.linalg.norm(x1, axis=1).max(initial=0.0)),
        jacobians=J,
        newton_steps=counter["newton"],
    )


def nu_form(phi_jet: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]], lam: OneFormField,
            mu: OneFormField, x) -> np.ndarray:
    """``nu(x) = (lambda + mu)(phi(x)) o d phi(x) - lambda(x)`` as a covector."""
    x = np.asarray(x, dtype=float)
    y, D = phi_jet(x)
    pulled = np.einsum("...i,...ij->...j", lam(y) + mu(y), D)
    return pulled - lam(x)


# ---------------------------------------------------------------------------
# frames and the Moser field


def _sign_fix(frame: np.ndarray) -> np.ndarray:
    # first entry of each column with |v| > 1e-12 is made positive
    cols = frame.shape[-1]
    for c in range(cols):
        v = frame[..., :, c]
        idx = np.argmax(np.abs(v) > 1e-12, axis=-1)
        lead = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
        frame[..., :, c] *= np.where(lead < 0, -1.0, 1.0)[..., None]
    return frame


def tangent_frame(df, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``ker df`` as columns, shape ``(2n, 2n - 2r)``; stacks accepted."""
    A = np.asarray(df, dtype=float)
    rows, cols = A.shape[-2:]
    _, s, vt = np.linalg.svd(A)
    if np.any(s[..., -1] <= tol):
        raise NotTransverseError("differential is not onto")
    kernel = np.swapaxes(vt[..., rows:, :], -1, -2).copy()
    return _sign_fix(kernel)


def s_of(W) -> float | np.ndarray:
    """Smallest singular value of the antisymmetric matrix of a 2-form in an orthonormal frame."""
    s = np.linalg.svd(np.asarray(W, dtype=float), compute_uv=False)[..., -1]
    return float(s) if np.ndim(s) == 0 else s


def moser_field(W, nu, tol: float = 1e-12) -> np.ndarray:
    """Solve ``W(X, .) = -nu``, that is ``W^T X = -nu``, in frame coordinates."""
    W = np.asarray(W, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(np.asarray(s_of(W)) <= tol):
        raise SymplecticDegeneracyError("restricted form is degenerate")
    return np.linalg.solve(np.swapaxes(W, -1, -2), -nu[..., None])[..., 0]


@dataclass(frozen=True)
class MoserField:
    """Moser field for ``Omega_t = Omega + t d nu``, tangent to ``Z(constraint)`` if one is given.

    ``omega`` is a constant matrix.  ``support = (a, b)`` multiplies the
    field by a cut-off equal to 1 on ``|x| <= a`` and 0 on ``|x| >= b``.
    """

    omega: np.ndarray
    nu: OneFormField
    constraint: AffinePolynomialMap | None = None
    support: tuple[float, float] | None = None
    tol: float = 1e-12

    def __call__(self, t: float, x) -> np.ndarray:
        return self.evaluate(t, x)[0]

    def _cutoff(self, x):
        if self.support is None:
            return np.ones(len(x))
        a, b = self.support
        r = np.linalg.norm(x, axis=1)
        return chi(0.25 + 0.25 * (r - a) / (b - a))

    def evaluate(self, t: float, x, jacobian: bool = False):
        if jacobian:
            raise NotImplementedError("the Moser flow is integrated without its variational equation")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        W = self.omega + t * self.nu.exterior(x)
        nu = self.nu(x)
        if self.constraint is None:
            X = moser_field(W, nu, self.tol)
        else:
            df = _real_jets(self.constraint, x, 1)[1]
            E = tangent_frame(df)
            WF = np.swapaxes(E, 1, 2) @ W @ E
            nuF = np.einsum("nik,ni->nk", E, nu)
            X = np.einsum("nik,nk->ni", E, moser_field(WF, nuF, self.tol))
        return self._cutoff(x)[:, None] * X, None


def simplex_integrals(vertices: np.ndarray, faces: np.ndarray, form: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Integral of a 2-form over each flat triangle by the edge-midpoint rule.

    ``form(points)`` returns the ``(N, 2n, 2n)`` matrices of the form.
    """
    p0, p1, p2 = (vertices[faces[:, k]] for k in range(3))
    u, v = p1 - p0, p2 - p0
    total = np.zeros(len(faces))
    for m in ((p0 + p1) / 2, (p1 + p2) / 2, (p2 + p0) / 2):
        total += np.einsum("ni,nij,nj->n", u, form(m), v)
    return total / 6.0


def plane_patch(rng: np.random.Generator, half: float = 0.4, cells: int = 6) -> Mesh:
    """Triangulated square ``[-half, half]^2`` on a random real 2-plane of ``R^4``."""
    u, v = np.linalg.qr(rng.normal(size=(4, 2)))[0].T
    ticks = np.linspace(-half, half, cells + 1)
    a, b = np.meshgrid(ticks, ticks, indexing="ij")
    pts = a.reshape(-1, 1) * u + b.reshape(-1, 1) * v
    m = cells + 1
    faces = []
    for i in range(cells):
        for j in range(cells):
            k = i * m + j
            faces += [(k, k + m, k + 1), (k + 1, k + m, k + m + 1)]
    return Mesh.from_faces(pts, faces)


def flow_psi(mesh: Mesh, field: MoserField, cfg: FlowConfig = FlowConfig(), eta: float = 1.0) -> FlowResult:
    """Integrate the Moser field over the vertices and measure the pull-back defect.

    For each triangle ``sigma``, the defect before the flow is
    ``|int_sigma (Omega + d nu) - int_sigma Omega|`` and after it
    ``|int_{psi_1(sigma)} (Omega + d nu) - int_sigma Omega|``; images of
    triangles are taken flat.  With a constraint, vertices are re-projected
    onto it after every step.
    """
    tol = cfg.tolerance * eta

    def polish(t, x):
        if field.constraint is None or not cfg.newton_polish:
            return x
        return _newton_project(field.constraint, x, tol, cfg.newton_iterations)[0]

    x0 = mesh.vertices
    x1, _, field_max = _rk4(field.evaluate, x0, cfg.time_steps, False, polish, cfg.domain_radius)
    disp = np.linalg.norm(x1 - x0, axis=1)
    extras = {}
    if mesh.faces is not None:
        def omega_form(pts):
            return np.broadcast_to(field.omega, (len(pts),) + field.omega.shape)

        def full_form(pts):
            return field.omega + field.nu.exterior(pts)

        base = simplex_integrals(x0, mesh.faces, omega_form)
        extras["defect_pre"] = np.abs(simplex_integrals(x0, mesh.faces, full_form) - base)
        extras["defect_post"] = np.abs(simplex_integrals(x1, mesh.faces, full_form) - base)
    residual = 0.0
    if field.constraint is not None:
        residual = float(np.linalg.norm(_real_jets(field.constraint, x1, 0)[0], axis=1).max(initial=0.0))
    return FlowResult(
        mesh=mesh.with_vertices(x1),
        displacement=disp,
        max_displacement=float(disp.max(initial=0.0)),
        field_max=field_max,
        residual=residual,
        max_radius=float(np.linalg.norm(x1, axis=1).max(initial=0.0)),
        extras=extras,
    )


def moser_demo(seed: int, count: int, scale: float = 0.05, time_steps: int = 20, cells: int = 24) -> list[dict]:
    """Moser flows for ``count`` random small exact perturbations of the standard form on ``R^4``.

    Each perturbation is ``d nu`` for a random quadratic one-form ``nu`` with
    entries of size ``scale``.  A plane patch with ``cells`` squares per side
    is flowed, and again at twice the resolution;
    rows report the worst triangle defects before and after the flow, the
    post-flow defect on the refined patch, the displacement and its bound
    ``2 sup|nu| / S(Omega)`` with the supremum taken on a grid of the ball
    of radius 3/2.
    """
    rng = np.random.default_rng(seed)
    omega = standard_symplectic(2)
    sup_pts = BoxGrid.ball(2, 1.5, 0.25).points
    cfg = FlowConfig(time_steps=time_steps)
    rows = []
    for _ in range(count):
        nu = quadratic_one_form(scale * rng.normal(size=(4, 4)), scale * rng.normal(size=(4, 4, 4)))
        field = MoserField(omega, nu)
        patch_seed = int(rng.integers(2**32))
        # images of triangles are taken flat, so the post-flow defect is O(h^3) against O(h^2) before
        coarse = flow_psi(plane_patch(np.random.default_rng(patch_seed), cells=cells), field, cfg)
        fine = flow_psi(plane_patch(np.random.default_rng(patch_seed), cells=2 * cells), field, cfg)
        nu_sup = float(np.linalg.norm(nu(sup_pts), axis=1).max())
        rows.append({
            "defect_pre": float(coarse.extras["defect_pre"].max()),
            "defect_post": float(coarse.extras["defect_post"].max()),
            "defect_post_fine": float(fine.extras["defect_post"].max()),
            "max_displacement": coarse.max_displacement,
            "displacement_bound": 2 * nu_sup / s_of(omega),
        })
    return rows


# ---------------------------------------------------------------------------
# mesh diagnostics


def lagrangian_defect(mesh: Mesh, omega: Callable[[np.ndarray], np.ndarray] | np.ndarray) -> float:
    """``max |omega(u, v)| / (|u| |v|)`` over triangle edge pairs; 0 for loops."""
    if mesh.kind == "loop" or mesh.faces is None or len(mesh.faces) == 0:
        return 0.0
    V, F = mesh.vertices, mesh.faces
    u = V[F[:, 1]] - V[F[:, 0]]
    v = V[F[:, 2]] - V[F[:, 0]]
    c = (V[F[:, 0]] + V[F[:, 1]] + V[F[:, 2]]) / 3
    W = omega(c) if callable(omega) else np.broadcast_to(np.asarray(omega, dtype=float), (len(F),) + np.shape(omega))
    vals = np.abs(np.einsum("ni,nij,nj->n", u, W, v))
    return float(np.max(vals / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))))


def intrinsic_diameter(mesh: Mesh, subset=None) -> float:
    """Largest graph distance between vertices, with Euclidean edge weights.

    With ``subset`` (vertex indices) the maximum runs over pairs of subset
    vertices while paths may use the whole mesh, which measures the
    diameter of a curve inside a surface.
    """
    nv = len(mesh.vertices)
    if nv < 2:
        return 0.0
    w = mesh.edge_lengths()
    graph = coo_matrix((w, (mesh.edges[:, 0], mesh.edges[:, 1])), shape=(nv, nv)).tocsr()
    if subset is None:
        dist = shortest_path(graph, method="D", directed=False)
    else:
        idx = np.asarray(subset, dtype=np.int64)
        dist = shortest_path(graph, method="D", directed=False, indices=idx)
        if not np.all(np.isfinite(dist)):
            raise DisconnectedMeshError("mesh has more than one component")
        dist = dist[:, idx]
    if not np.all(np.isfinite(dist)):
        raise DisconnectedMeshError("mesh has more than one component")
    return float(dist.max())
