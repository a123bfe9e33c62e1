"""Tests for the rasterized domains, the Dirichlet Laplacian, and the
fourth-order plate solver, anchored against the closed-form ball values."""

import math

import numpy as np
import pytest

from plate_tension.ball import Ball, plate_first_eig_ball, torsional_rigidity_ball
from plate_tension.gridsolver import (
    SHAPE_NAMES,
    convex_criterion,
    disk_domain,
    laplacian_first,
    mask_domain,
    optimality_alpha,
    plate_first,
    plate_torsion,
    read_mask_file,
    shape_derivative_volume,
    slope_sandwich_grid,
    square_domain,
    triangle_domain,
    unit_area_domain,
    write_mask_file,
)


# ---------------------------------------------------------------------------
# domains


def test_unit_area_shapes():
    for name in SHAPE_NAMES:
        dom = unit_area_domain(name, 1.0 / 32.0)
        assert dom.exact_area == pytest.approx(1.0, rel=1e-12)
        # the raster insets cells near the boundary, so it undershoots the
        # exact area by an O(h) band
        assert 0.85 <= dom.raster_area <= 1.0
    with pytest.raises(ValueError):
        unit_area_domain("hexagon", 1.0 / 32.0)


def test_domain_validation():
    with pytest.raises(ValueError):
        square_domain(-0.1)
    with pytest.raises(ValueError):
        # too coarse to carry any solver
        square_domain(0.5)


def test_mask_file_round_trip(tmp_path):
    dom = disk_domain(1.0 / 16.0)
    path = str(tmp_path / "disk.mask")
    write_mask_file(path, dom)
    back = read_mask_file(path)
    assert back.nx == dom.nx and back.ny == dom.ny
    assert back.h == dom.h
    assert np.array_equal(back.mask, dom.mask)


def test_mask_file_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.mask"
    bad.write_text("4 4\n1111\n1111\n1111\n1111\n")
    with pytest.raises(ValueError):
        read_mask_file(str(bad))
    bad.write_text("4 2 0.1\n1121\n1111\n")
    with pytest.raises(ValueError):
        read_mask_file(str(bad))


def test_mask_domain_geometry():
    mask = np.ones((8, 8), dtype=bool)
    dom = mask_domain(mask, 0.125)
    assert dom.exact_area == pytest.approx(1.0, rel=1e-14)
    assert dom.exact_perimeter == pytest.approx(4.0, rel=1e-14)


# ---------------------------------------------------------------------------
# Dirichlet Laplacian


def test_laplacian_square_anchor():
    # lambda_1 of the unit square is 2 pi^2
    lam, vec = laplacian_first(square_domain(1.0 / 128.0))
    assert lam == pytest.approx(2.0 * math.pi**2, rel=2e-3)
    assert np.all(vec > 0) or np.all(vec < 0)


def test_laplacian_disk_anchor():
    lam, _ = laplacian_first(disk_domain(1.0 / 128.0))
    assert lam == pytest.approx(5.783185962946783, rel=5e-3)


def test_laplacian_triangle_anchor():
    # equilateral triangle of area 3: lambda_1 = 4 pi^2 / (sqrt(3) * 3)
    lam, _ = laplacian_first(triangle_domain(1.0 / 128.0, area=3.0))
    assert lam == pytest.approx(4.0 * math.pi**2 / (math.sqrt(3.0) * 3.0), rel=1e-2)


def test_laplacian_square_convergence():
    exact = 2.0 * math.pi**2
    errs = [
        abs(laplacian_first(square_domain(h))[0] - exact)
        for h in (1.0 / 32.0, 1.0 / 64.0)
    ]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


# ---------------------------------------------------------------------------
# plate solver on the disk versus closed forms


@pytest.fixture(scope="module")
def disk64():
    return disk_domain(1.0 / 64.0)


@pytest.mark.parametrize("tau", [0.0, 1.0, 10.0])
def test_plate_eig_disk_vs_closed_form(disk64, tau):
    exact = plate_first_eig_ball(Ball(2, 1.0), tau).gamma
    res = plate_first(disk64, tau)
    assert res.gamma == pytest.approx(exact, rel=3e-3)
    assert res.one_signed
    assert res.tau == tau


@pytest.mark.parametrize("tau", [0.0, 1.0, 10.0])
def test_plate_torsion_disk_vs_closed_form(disk64, tau):
    exact = torsional_rigidity_ball(Ball(2, 1.0), tau)
    res = plate_torsion(disk64, tau)
    assert res.rigidity == pytest.approx(exact, rel=3e-3)
    assert res.vertex_values.max() > 0


def test_plate_grad_norm_disk(disk64):
    # discrete Dirichlet energy of the normalized tau = 0 eigenvector
    res = plate_first(disk64, 0.0)
    assert res.grad_norm_sq == pytest.approx(6.927992175917211, rel=2e-2)


def test_plate_rejects_negative_tau(disk64):
    with pytest.raises(ValueError):
        plate_first(disk64, -1.0)
    with pytest.raises(ValueError):
        plate_torsion(disk64, -1.0)


def test_plate_scaling_covariance():
    # the same raster at spacing alpha h is the domain dilated by alpha, and
    # Gamma(alpha Omega, tau / alpha^2) = alpha^-4 Gamma(Omega, tau) holds
    # exactly at the discrete level
    mask = disk_domain(1.0 / 24.0).mask
    base = plate_first(mask_domain(mask, 1.0 / 24.0), 8.0).gamma
    alpha = 2.0
    scaled = plate_first(mask_domain(mask, alpha / 24.0), 8.0 / alpha**2).gamma
    assert scaled == pytest.approx(base / alpha**4, rel=1e-7)


def test_slope_sandwich_square():
    dom = square_domain(1.0 / 48.0)
    slope, lower, upper = slope_sandwich_grid(dom, 1.0)
    assert lower - 1e-6 <= slope <= upper + 1e-6


# ---------------------------------------------------------------------------
# scalar criteria helpers


def test_convex_criterion():
    # unit square: pi * 16 / 16 = pi, below the disk threshold
    out = convex_criterion(4.0, 1.0)
    assert out["value"] == pytest.approx(math.pi, rel=1e-14)
    assert out["threshold"] == pytest.approx(6.927992175917211, rel=1e-12)
    assert out["passes"] is False
    # 4 x 1/4 rectangle: pi * 8.5^2 / 16 exceeds the threshold
    assert convex_criterion(8.5, 1.0)["passes"] is True
    with pytest.raises(ValueError):
        convex_criterion(0.0, 1.0)


def test_optimality_alpha():
    gamma = 104.36310555884428
    alpha = optimality_alpha(gamma, 0.0, 2, math.pi, 6.927992175917211)
    assert alpha == pytest.approx(math.sqrt(2.0 * gamma / math.pi), rel=1e-12)
    with pytest.raises(ValueError):
        optimality_alpha(1.0, 1e6, 2, math.pi, 6.93)


def test_shape_derivative_dilation_invariance():
    # uniform normal speed is a dilation; the scale-invariant functional must
    # be stationary when the boundary trace equals the optimality constant
    gamma, tau, d, gn = 104.363, 7.0, 2, 6.928
    volume = 1.0
    alpha = optimality_alpha(gamma, tau, d, volume, gn)
    n = 37
    perim = 2.0 * math.sqrt(math.pi)
    w = np.full(n, perim / n)
    out = shape_derivative_volume(
        w, np.ones(n), np.full(n, alpha), gamma, tau, d, volume, gn
    )
    assert out["volume_derivative"] == pytest.approx(perim, rel=1e-12)
    assert out["eigenvalue_derivative"] == pytest.approx(-alpha**2 * perim, rel=1e-12)
    assert abs(out["scale_invariant_derivative"]) < 1e-10 * gamma * perim
