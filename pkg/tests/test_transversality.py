
import numpy as np
import pytest

from kostlan_lab.errors import DegenerateInputError, NotTransverseError
from kostlan_lab.poly_core import AffinePolynomialMap, multi_indices, real_jets, rescale
from kostlan_lab.transversality import (
    SAFETY,
    BoxGrid,
    derivative_norms,
    eta_margin,
    grid_derivative_maxima,
    phi_proj,
    sup_norm,
    t_of,
    t_of_complex,
)

# regression constants for the scaled cubic 8 z1^3 + 8 z2^3 - 1 on the radius-2 ball
SIGMA_ETA_FINE = 0.9298034184320898  # uncertified margin on a spacing-0.02 grid (certified 0.8874608135106977)
SIGMA_ETA_005 = 0.9380261190393367  # uncertified margin on the spacing-0.05 grid


def sigma():
    return rescale(AffinePolynomialMap.from_terms(2, {(3, 0): 1.0, (0, 3): 1.0, (0, 0): -1.0}), 2.0)


def random_cubic(rng, n=2):
    exps = multi_indices(n, 3)
    return AffinePolynomialMap.from_dense(n, 3, rng.normal(size=len(exps)) + 1j * rng.normal(size=len(exps)))


def test_t_of_examples():
    assert t_of(np.eye(2)) == pytest.approx(1)
    assert t_of(np.diag([2.0, 3.0])) == pytest.approx(2)
    assert t_of([[1.0, 0.0]]) == pytest.approx(1)
    assert t_of([[1.0, 2.0], [2.0, 4.0]]) == pytest.approx(0, abs=1e-12)
    with pytest.raises(ValueError):
        t_of(np.ones((3, 2)))


def test_phi_proj_examples():
    assert np.allclose(phi_proj([[1.0, 0.0]], [2.0]), [2.0, 0.0])
    y = np.array([0.3, -1.2])
    assert np.allclose(phi_proj(np.eye(2), y), y)
    with pytest.raises(NotTransverseError):
        phi_proj([[1.0, 2.0], [2.0, 4.0]], [1.0, 0.0])


def test_phi_proj_least_squares_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        A = rng.normal(size=(2, 4))
        Y = rng.normal(size=2)
        X = phi_proj(A, Y)
        assert np.allclose(A @ X, Y, atol=1e-10)
        assert np.allclose(X, np.linalg.lstsq(A, Y, rcond=None)[0], atol=1e-10)


def test_t_of_perturbation_property():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(10_000, 2, 4))
    B = rng.normal(size=(10_000, 2, 4)) * rng.uniform(0, 1, size=(10_000, 1, 1))
    lhs = t_of(A + B)
    rhs = t_of(A) - np.linalg.norm(B, 2, axis=(1, 2))
    assert np.all(lhs >= rhs - 1e-12)


def test_t_of_complex_matches_real_form():
    rng = np.random.default_rng(2)
    p = AffinePolynomialMap.from_dense(
        3, 2, rng.normal(size=(2, len(multi_indices(3, 2)))) + 1j * rng.normal(size=(2, len(multi_indices(3, 2))))
    )
    z = rng.normal(size=(20, 3)) + 1j * rng.normal(size=(20, 3))
    from kostlan_lab.poly_core import complex_derivatives

    cplx = complex_derivatives(p, z, 1)[1]
    real = real_jets(p, z, 1)[1]
    assert np.allclose(t_of_complex(cplx), t_of(real), rtol=1e-10)


def test_derivative_norms_match_real_operator_norms():
    rng = np.random.default_rng(3)
    p = random_cubic(rng)
    z = rng.normal(size=(30, 2)) + 1j * rng.normal(size=(30, 2))
    from kostlan_lab.poly_core import complex_derivatives

    cplx = complex_derivatives(p, z, 2)
    real = real_jets(p, z, 2)
    assert np.allclose(derivative_norms(cplx[1], 1), np.linalg.norm(real[1], 2, axis=(1, 2)), rtol=1e-10)
    # real second derivative: sup over unit u, v of |d2(u, v)| in R^2, probed densely
    d2 = real[2][0]
    rng2 = np.random.default_rng(4)
    u = rng2.normal(size=(20_000, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    vals = np.einsum("kab,ia,ib->ik", d2, u, u)
    probe = np.linalg.norm(vals, axis=1).max()
    exact = derivative_norms(cplx[2][:1], 2)[0]
    assert probe <= exact * (1 + 1e-10)
    assert probe >= 0.97 * exact


def test_box_grid_covering():
    g = BoxGrid.ball(1, radius=1.0, spacing=0.1)
    pts = g.points
    assert np.all(np.linalg.norm(pts, axis=1) <= g.radius + g.spacing + 1e-12)
    rng = np.random.default_rng(5)
    probe = rng.normal(size=(2000, 2))
    probe *= (rng.uniform(size=(2000, 1)) ** 0.5) / np.linalg.norm(probe, axis=1, keepdims=True)
    dist = np.min(np.linalg.norm(probe[:, None, :] - pts[None, :, :], axis=2), axis=1)
    assert dist.max() <= g.covering_radius + 1e-12


def test_box_grid_chunking_is_stable():
    g = BoxGrid.ball(2, radius=1.0, spacing=0.1)
    a = np.concatenate(list(g.chunks(size=1000)))
    b = np.concatenate(list(g.chunks(size=10**7)))
    assert np.array_equal(a, b)


def test_sup_norm_constant_and_identity():
    g = BoxGrid.ball(1, radius=2.0, spacing=0.05)
    c = AffinePolynomialMap.constant(1, 0.7 - 0.2j)
    est = sup_norm(c, g, 0)
    assert est.grid_max == pytest.approx(abs(0.7 - 0.2j))
    assert est.certified_upper == pytest.approx(abs(0.7 - 0.2j))
    ident = AffinePolynomialMap.from_terms(1, {(1,): 1.0})
    est = sup_norm(ident, g, 0)
    # grid points reach radius + covering radius; |z| has Lipschitz constant 1
    outer = g.radius + g.covering_radius
    assert 2 <= est.certified_upper <= outer + SAFETY * g.covering_radius + 1e-12
    assert est.grid_max <= est.certified_upper


def test_sup_norm_dominates_finer_grid():
    rng = np.random.default_rng(6)
    coarse = BoxGrid.ball(2, radius=2.0, spacing=0.4)
    fine = BoxGrid.ball(2, radius=2.0, spacing=0.04)
    for _ in range(10):
        p = random_cubic(rng)
        est = sup_norm(p, coarse, 1)
        fine_max = grid_derivative_maxima(p, fine, 1)[1]
        assert est.certified_upper >= fine_max


def test_eta_margin_identity():
    g = BoxGrid.ball(1, radius=2.0, spacing=0.05)
    ident = AffinePolynomialMap.from_terms(1, {(1,): 1.0})
    assert eta_margin(ident, g) == pytest.approx(1.0)
    assert eta_margin(ident, g, certified=False) == pytest.approx(1.0)


def test_eta_margin_square_degenerates():
    sq = AffinePolynomialMap.from_terms(1, {(2,): 1.0})
    with pytest.raises(DegenerateInputError):
        eta_margin(sq, BoxGrid.ball(1, radius=1.0, spacing=0.1))
    values = []
    for h in (0.1, 0.03, 0.01):
        # shift so that the critical point is not a grid node
        g = BoxGrid(np.array([0.3 * h, 0.41 * h]), 1.0, h)
        values.append(eta_margin(sq, g, certified=False))
    assert values[0] > values[1] > values[2]
    assert values[2] < 0.03


def test_eta_margin_monotone_under_refinement():
    rng = np.random.default_rng(7)
    p = random_cubic(rng, n=1)
    coarse = BoxGrid.ball(1, radius=2.0, spacing=0.05)
    fine = BoxGrid.ball(1, radius=2.0, spacing=0.005)
    raw_coarse = eta_margin(p, coarse, certified=False)
    cert_coarse = eta_margin(p, coarse)
    raw_fine = eta_margin(p, fine, certified=False)
    assert cert_coarse <= raw_fine <= raw_coarse + 1e-12


def test_sigma_margin_regression():
    g = BoxGrid.ball(2, radius=2.0, spacing=0.05)
    raw = eta_margin(sigma(), g, certified=False)
    cert = eta_margin(sigma(), g)
    assert raw == pytest.approx(SIGMA_ETA_005, rel=1e-12)
    assert 0 < cert <= SIGMA_ETA_FINE <= raw
