import math

import numpy as np
import pytest

from kostlan_lab.kostlan import (
    bf_norm,
    decompose,
    fs_pointwise,
    gaussian_bf_norm_mc,
    inner,
    l2_norm,
    norm_ratio_series,
    sample,
    sphere_norm_mc,
)
from kostlan_lab.poly_core import (
    AffinePolynomialMap,
    HomogeneousPolynomialSystem,
    homogenize,
    multi_indices,
    rescale,
)


def fermat():
    return AffinePolynomialMap.from_terms(2, {(3, 0): 1.0, (0, 3): 1.0, (0, 0): -1.0})


def test_sample_moments():
    # one sample of degree 99999 in one variable carries 10^5 independent coefficients
    s = sample(1, 99_999, 1, (11, 0))
    c = s.system.coeffs.ravel()
    assert c.size == 100_000
    assert abs(c.real.mean()) < 0.02
    assert np.mean(np.abs(c) ** 2) == pytest.approx(2, abs=0.05)


def test_sample_determinism_and_independence():
    a = sample(2, 6, 2, (5, 3))
    b = sample(2, 6, 2, (5, 3))
    c = sample(2, 6, 2, (5, 4))
    assert np.array_equal(a.system.coeffs, b.system.coeffs)
    assert not np.array_equal(a.system.coeffs, c.system.coeffs)
    assert not np.array_equal(a.system.coeffs[0], a.system.coeffs[1])


def test_sample_rejects_bad_shape():
    with pytest.raises(ValueError):
        sample(1, 3, 2)
    with pytest.raises(ValueError):
        sample(2, 0, 1)


def test_chi_square_law():
    n, d, r = 2, 4, 1
    size = len(multi_indices(n + 1, d, True))
    sq = [l2_norm(sample(n, d, r, (1, t))) ** 2 for t in range(10_000)]
    assert np.mean(sq) / (2 * size * r) == pytest.approx(1, abs=0.03)


def test_l2_norm_basis_and_zero():
    P = HomogeneousPolynomialSystem.zeros(2, 5)
    assert l2_norm(P) == 0
    assert l2_norm(P.basis_element(7)) == pytest.approx(1)


def test_raw_monomial_norm():
    rng = np.random.default_rng(0)
    exps = multi_indices(3, 5, True)
    for row in exps[rng.choice(len(exps), 10, replace=False)]:
        P = HomogeneousPolynomialSystem.from_raw(2, 5, {tuple(row): 1.0})
        want = math.prod(math.factorial(int(i)) for i in row) / math.factorial(7)
        assert l2_norm(P) ** 2 == pytest.approx(want, rel=1e-12)


def test_sphere_integral_matches_coefficient_norm():
    rng = np.random.default_rng(1)
    size = len(multi_indices(3, 3, True))
    P = HomogeneousPolynomialSystem(2, 3, rng.normal(size=size) + 1j * rng.normal(size=size))
    est = sphere_norm_mc(P, 400_000, np.random.default_rng(2))
    assert est == pytest.approx(l2_norm(P), rel=0.02)


def test_bf_norm_examples():
    assert bf_norm(AffinePolynomialMap.constant(1, 1.0)) == pytest.approx(1)
    assert bf_norm(AffinePolynomialMap.from_terms(1, {(1,): 1.0})) == pytest.approx(1)
    # z^2 has Gaussian moment 2!
    assert bf_norm(AffinePolynomialMap.from_terms(1, {(2,): 1.0})) ** 2 == pytest.approx(2)


def test_bf_norm_monte_carlo():
    rng = np.random.default_rng(3)
    exps = multi_indices(2, 3)
    p = AffinePolynomialMap.from_dense(2, 3, rng.normal(size=len(exps)) + 1j * rng.normal(size=len(exps)))
    est = gaussian_bf_norm_mc(p, 1_000_000, np.random.default_rng(4))
    assert est == pytest.approx(bf_norm(p), rel=0.01)


def test_fs_pointwise():
    P = HomogeneousPolynomialSystem.from_raw(2, 4, {(4, 0, 0): 1.0})
    assert fs_pointwise(P, [1, 0, 0]) == pytest.approx(1)
    rng = np.random.default_rng(5)
    size = len(multi_indices(3, 4, True))
    Q = HomogeneousPolynomialSystem(2, 4, rng.normal(size=size) + 1j * rng.normal(size=size))
    Z = rng.normal(size=3) + 1j * rng.normal(size=3)
    assert fs_pointwise(Q, Z) == pytest.approx(fs_pointwise(Q, 3 * Z), rel=1e-12)
    direct = abs(Q.evaluate(Z)[0]) / np.linalg.norm(Z) ** 4
    assert fs_pointwise(Q, Z) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(ValueError):
        fs_pointwise(Q, [0, 0, 0])


def test_decompose_trivial_cases():
    Q_raw = homogenize(fermat(), 4)
    dec = decompose(Q_raw, Q_raw)
    assert dec.a == pytest.approx(l2_norm(Q_raw))
    assert l2_norm(dec.R) < 1e-12
    k = int(np.nonzero(Q_raw.coeffs[0] == 0)[0][0])
    orth = Q_raw.basis_element(k)
    dec = decompose(orth, Q_raw)
    assert dec.a == 0
    assert np.allclose(dec.R.coeffs, orth.coeffs)
    with pytest.raises(ValueError):
        decompose(orth, HomogeneousPolynomialSystem.zeros(2, 4))


def test_decompose_reconstruction_and_orthogonality():
    Q_raw = homogenize(rescale(fermat(), 2.0), 6)
    for t in range(50):
        s = sample(2, 6, 1, (9, t))
        dec = decompose(s, Q_raw)
        rebuilt = dec.Q.coeffs * dec.a + dec.R.coeffs
        assert np.allclose(rebuilt, s.system.coeffs, rtol=0, atol=1e-12 * l2_norm(s))
        assert abs(inner(dec.R, dec.Q)) <= 1e-10 * l2_norm(s)


def test_decompose_statistics():
    rng = np.random.default_rng(6)
    size = len(multi_indices(2, 3, True))
    Q_raw = HomogeneousPolynomialSystem(1, 3, rng.normal(size=size) + 1j * rng.normal(size=size))
    a, rk = [], []
    for t in range(10_000):
        dec = decompose(sample(1, 3, 1, (13, t)), Q_raw)
        a.append(dec.a)
        rk.append(dec.R.coeffs[0, 1])
    a, rk = np.array(a), np.array(rk)
    assert np.mean(np.abs(a) ** 2) == pytest.approx(2, abs=0.1)
    corr = abs(np.mean(a * np.conj(rk))) / math.sqrt(np.mean(np.abs(a) ** 2) * np.mean(np.abs(rk) ** 2))
    assert corr < 0.05


def test_norm_ratio_exact_for_constant():
    one = AffinePolynomialMap.constant(1, 1.0)
    degrees = [10, 100, 400]
    ratios = norm_ratio_series(one, 1.0, degrees)
    # ||Z0^d||^2 = 1/(d+1)
    assert np.allclose(ratios, [math.sqrt(d / (d + 1)) for d in degrees], rtol=1e-12)


def test_norm_ratio_converges_for_cubic():
    degrees = np.array([25, 50, 200, 800, 3200])
    ratios = norm_ratio_series(fermat(), 0.7, degrees)
    # the limiting constant is 1 and the error decays like 1/d
    assert np.all(np.abs(ratios - 1) * degrees < 0.1)


def test_norm_decay_bound():
    p = fermat()
    degrees = [10, 20, 40, 80, 160]

    def scaled(eps, d):
        return l2_norm(homogenize(rescale(p, math.sqrt(d) / eps), d)) * d ** (p.n / 2) * eps ** 3

    c = max(scaled(1.0, d) for d in degrees)
    for eps in (1.0, 0.5, 0.25):
        for d in degrees:
            assert scaled(eps, d) <= c * (1 + 1e-12)
