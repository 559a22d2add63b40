import math

import numpy as np
import pytest
from scipy.integrate import quad

from kostlan_lab.config import ExperimentConfig
from kostlan_lab.errors import BadLoopError, BadScaleError
from kostlan_lab.poly_core import AffinePolynomialMap, complex_derivatives, evaluate
from kostlan_lab.systole_lab import (
    DIAMETER_CONSTANT,
    build_loop,
    build_sigma,
    cubic_mesh,
    diameter_sandwich,
    fs_area,
    fs_triangle_areas,
    genus,
    line_mesh,
    random_certified_pair,
    richardson_area,
    run_systole,
    scaling_report,
    sigma_polynomial,
    synthetic_diameter_ratios,
    systole_trial,
    trial_context,
    transport_loop,
)
from kostlan_lab.transversality import BoxGrid, sup_norm, t_of_complex

# certified margin of the scaled cubic on the default spacing-0.05 grid
SIGMA_ETA = 0.7789293996711555


@pytest.fixture(scope="module")
def sigma():
    return build_sigma(2.0)


@pytest.fixture(scope="module")
def loop(sigma):
    return build_loop(sigma, 0.3, 128)


def test_build_sigma_regression(sigma):
    assert sigma.eta == pytest.approx(SIGMA_ETA, rel=1e-12)
    assert sigma.eta > 0


def test_sigma_root_and_witness(sigma):
    assert evaluate(sigma.polynomial, [0.5, 0.0])[0] == pytest.approx(0, abs=1e-15)
    assert np.linalg.norm(sigma.witness) < 1
    assert abs(evaluate(sigma.polynomial, sigma.witness)[0]) <= 1e-12


def test_sigma_only_critical_point_is_the_origin():
    p = sigma_polynomial(2.0)
    pts = BoxGrid.ball(2, 2.0, 0.1).points
    z = pts[:, 0::2] + 1j * pts[:, 1::2]
    der = complex_derivatives(p, z, 1)
    T = t_of_complex(der[1])
    # dp = 24 (z1^2, z2^2): small only near the origin, where |p| is close to 1
    small = T < 0.5
    assert np.all(np.linalg.norm(pts[small], axis=1) < 0.2)
    assert np.all(np.abs(der[0][small, 0]) > 0.9)


def test_build_sigma_rejects_bad_scale():
    with pytest.raises(BadScaleError):
        build_sigma(1.0)
    with pytest.raises(BadScaleError):
        build_sigma(2.0, BoxGrid.ball(2, 2.0, 0.4))


def test_genus_of_cubic():
    assert genus(3) == 1
    assert genus(4) == 3


def test_loop_residuals_and_closure(sigma):
    L = build_loop(sigma, 0.3, 512)
    assert L.max_residual <= 1e-10
    assert np.abs(evaluate(sigma.polynomial, L.points)).max() <= 1e-10
    assert L.closure_gap <= 1e-12
    assert len(L.loop.vertices) == 512 and L.loop.kind == "loop"


def _exact_length(r, rho):
    def speed(theta):
        e = np.exp(1j * theta)
        w = 1 - (r * e) ** 3
        dz2 = -(r**3) * 1j * e**3 * w ** (-2 / 3) / rho
        return math.hypot(r / rho, abs(dz2))

    return quad(speed, 0, 2 * np.pi, limit=200)[0]


def test_loop_length_small_radius(sigma):
    r = 0.1
    L = build_loop(sigma, r, 256)
    ratio = L.loop.length() / (2 * np.pi * r / sigma.rho)
    assert 0.9 <= ratio <= 1.2
    assert L.loop.length() == pytest.approx(_exact_length(r, sigma.rho), rel=1e-3)


def test_loop_rejects_bad_radius(sigma):
    with pytest.raises(BadLoopError):
        build_loop(sigma, 1.2, 128)
    with pytest.raises(ValueError):
        build_loop(sigma, 0.3, 32)


def test_surface_patch_contains_loop(sigma, loop):
    surf = loop.surface
    assert np.allclose(surf.vertices[loop.loop_indices], loop.loop.vertices, atol=1e-14)
    z = surf.vertices[:, 0::2] + 1j * surf.vertices[:, 1::2]
    assert np.abs(evaluate(sigma.polynomial, z)).max() <= 1e-10
    # the curve distance between loop points is at least their chord and at most the loop arc
    chord = np.linalg.norm(loop.loop.vertices[:, None] - loop.loop.vertices[None], axis=2).max()
    assert chord <= loop.diameter <= loop.loop_diameter


def test_transport_with_zero_remainder_keeps_loop(sigma):
    cfg = ExperimentConfig(mode="systole", d=30, trials=1)
    ctx = trial_context(cfg)
    zero = AffinePolynomialMap.constant(2, 0.0)
    out = transport_loop(ctx, sigma.polynomial, zero, sigma.eta)
    assert out["length"] == pytest.approx(ctx.loop.loop.length(), rel=1e-12)
    assert out["max_displacement"] == 0.0


def test_trial_without_event_records_no_loop_metrics():
    rec = systole_trial(30, 1.0, (0, 0))
    assert not rec.event
    assert rec.loop_length is None and rec.loop_diameter is None and rec.flow_residual is None


def test_run_systole_is_deterministic():
    cfg = ExperimentConfig(mode="systole", d=30, trials=10, seed=5)
    a, sa, ctx = run_systole(cfg)
    b, sb, _ = run_systole(cfg, ctx)
    assert sa == sb
    assert [r.a for r in a] == [r.a for r in b]
    direct = systole_trial(30, 1.0, (5, 3), cfg, ctx)
    assert direct.a == a[3].a


def test_scaling_report_single_cell():
    report = scaling_report([30], [1.0], 1000, 0)
    assert len(report["rows"]) == 1
    row = report["rows"][0]
    assert row["trials"] == 1000 and row["d"] == 30


def test_certified_pairs_satisfy_hypotheses(sigma, loop):
    rng = np.random.default_rng(3)
    for _ in range(5):
        pair = random_certified_pair(rng, sigma, loop)
        grid = BoxGrid.ball(2, 2.0, 0.2)
        g1 = max(sup_norm(pair["g"], grid, 0).certified_upper, sup_norm(pair["g"], grid, 1).certified_upper)
        assert g1 <= pair["eta"] / 8 * (1 + 1e-9)
        z = pair["loop"].vertices[:, 0::2] + 1j * pair["loop"].vertices[:, 1::2]
        assert np.abs(evaluate(pair["f"], z)).max() <= 1e-9


def test_diameter_sandwich_on_fresh_synthetic_pairs(sigma, loop):
    samples = synthetic_diameter_ratios(1, 10, sigma, loop)
    for s in samples:
        assert s["residual"] <= 1e-6 * s["eta"]
        assert diameter_sandwich(s["surface"], s["loop"], s["transported"], DIAMETER_CONSTANT)


def test_fs_area_of_small_flat_triangle():
    V = np.array([[0, 0], [1e-3, 0], [0, 1e-3j]], dtype=complex)
    assert fs_triangle_areas(V, [[0, 1, 2]])[0] == pytest.approx(0.5e-6, rel=1e-5)


def test_line_area_matches_closed_form():
    # the line z1 = 1 carries the density 2 / (2 + |t|^2)^2, so area(R) = pi R^2 / (2 + R^2)
    for R in (1.0, 5.0):
        assert fs_area(line_mesh(R, inner=80, outer=40, sectors=192)) == pytest.approx(
            np.pi * R**2 / (2 + R**2), rel=2e-3)


def test_cubic_to_line_area_ratio_is_degree():
    line = richardson_area(line_mesh, 10.0)
    cubic = richardson_area(cubic_mesh, 10.0)
    assert line == pytest.approx(np.pi, rel=1e-3)
    assert cubic / line == pytest.approx(3, rel=0.05)


def test_positive_transport_frequency_at_degree_60():
    cfg = ExperimentConfig(mode="systole", d=60, trials=10_000, seed=0)
    records, summary, ctx = run_systole(cfg)
    ok = [r for r in records if r.loop_length is not None
          and 0.5 * ctx.loop.loop.length() <= r.loop_length * math.sqrt(60) <= DIAMETER_CONSTANT * 2 * ctx.loop.loop_diameter]
    print(f"d=60 events {summary.events}/{summary.trials}, transported {len(ok)}")
    assert len(ok) > 0
