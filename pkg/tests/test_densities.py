import itertools
import math

import numpy as np
import pytest

from kdelab import quadrature
from kdelab.densities import (
    FarMassDensity,
    GaussianMixture,
    ball_mass_sigma,
    density_from_json,
    standard_normal,
)
from kdelab.errors import (
    DimensionMismatch,
    EmptySamples,
    InputError,
    OrderUnavailable,
)

PHI0 = (2.0 * math.pi) ** -0.5


# ---------------------------------------------------------------------------
# pdf


def test_standard_normal_at_zero():
    assert standard_normal(1).pdf(0.0) == pytest.approx(0.3989422804, abs=1e-10)


def test_symmetric_mixture_at_zero():
    m = GaussianMixture([(0.5, [-1.0], [[1.0]]), (0.5, [1.0], [[1.0]])])
    expect = PHI0 * math.exp(-0.5)  # both components contribute phi(1)/1 * 0.5
    assert m.pdf(0.0) == pytest.approx(expect, rel=1e-12)
    assert m.pdf(0.0) == pytest.approx(0.2420, abs=5e-5)


def test_mixture_mass_validated_on_construction():
    with pytest.raises(InputError):
        GaussianMixture([(0.7, [0.0], [[1.0]]), (0.7, [1.0], [[1.0]])])
    with pytest.raises(InputError):
        GaussianMixture([(1.0, [0.0], [[-1.0]])])
    with pytest.raises(DimensionMismatch):
        GaussianMixture([(1.0, [0.0, 0.0], [[1.0]])])


def test_pdf_batch_matches_scalar():
    m = GaussianMixture([(0.3, [0.5, -0.5], np.eye(2)), (0.7, [-1.0, 0.2], 2 * np.eye(2))])
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(40, 2))
    batch = m.pdf_batch(pts)
    for i, p in enumerate(pts):
        assert batch[i] == pytest.approx(m.pdf(p), rel=1e-14)


# ---------------------------------------------------------------------------
# derivative tensors


def test_gaussian_first_derivative_zero_at_center():
    m = standard_normal(1)
    assert float(m.deriv_tensor([0.0], 1)[0]) == pytest.approx(0.0, abs=1e-15)


def test_gaussian_second_derivative_at_center():
    # f''(x) = (x^2 - 1) phi(x); at 0 that is -phi(0)
    m = standard_normal(1)
    val = float(m.deriv_tensor([0.0], 2)[0, 0])
    assert val == pytest.approx(-0.3989422804, abs=1e-9)


def test_order_zero_is_pdf():
    m = GaussianMixture([(1.0, [0.3, 0.1], np.eye(2))])
    x = [0.2, -0.4]
    assert float(m.deriv_tensor(x, 0)) == pytest.approx(m.pdf(x), rel=1e-14)


def test_tensor_symmetry_under_index_permutation():
    m = GaussianMixture([(0.4, [0.5, -0.2], [[1.0, 0.2], [0.2, 0.7]]),
                         (0.6, [-0.3, 0.4], [[0.8, -0.1], [-0.1, 1.2]])])
    rng = np.random.default_rng(5)
    for j in (2, 3, 4):
        t = m.deriv_tensor(rng.normal(size=2), j)
        for perm in itertools.permutations(range(j)):
            assert np.allclose(np.transpose(t, perm), t, rtol=0, atol=1e-12)


def test_directional_second_derivative_matches_finite_differences():
    m = GaussianMixture([(1.0, [0.2, -0.1], [[1.0, 0.3], [0.3, 0.8]])])
    v = np.array([0.6, -0.8])
    x = np.array([0.4, 0.3])
    t = m.deriv_tensor(x, 2)
    analytic = float(v @ t @ v)
    step = 1e-4
    fd = (m.pdf(x + step * v) - 2.0 * m.pdf(x) + m.pdf(x - step * v)) / step**2
    assert fd == pytest.approx(analytic, rel=1e-5)


def test_deriv_order_cap():
    m = GaussianMixture([(1.0, [0.0], [[1.0]])], max_deriv_order=3)
    with pytest.raises(OrderUnavailable):
        m.deriv_tensor([0.0], 4)


# ---------------------------------------------------------------------------
# local derivative bound


def test_deriv_sup_norm_gaussian_small_ball():
    # |f''| near 0 peaks at the center; grid max times the 1.05 safety factor
    m = standard_normal(1)
    val = m.deriv_sup_norm([0.0], 0.1, 2)
    assert val == pytest.approx(1.05 * 0.3989422804, rel=1e-6)


def test_deriv_sup_norm_grid_scan_oracle():
    m = standard_normal(1)
    delta = 0.5
    grid = np.linspace(-delta, delta, 33)
    oracle = max(abs((x * x - 1.0) * PHI0 * math.exp(-0.5 * x * x)) for x in grid)
    assert m.deriv_sup_norm([0.0], delta, 2) == pytest.approx(1.05 * oracle, rel=1e-9)


def test_deriv_sup_norm_degenerate_ball_is_exact():
    m = standard_normal(1)
    assert m.deriv_sup_norm([0.0], 0.0, 2) == pytest.approx(0.3989422804, abs=1e-9)


def test_deriv_sup_norm_monotone_in_delta():
    m = GaussianMixture([(1.0, [0.5], [[0.8]])])
    vals = [m.deriv_sup_norm([0.0], d, 2) for d in (0.05, 0.1, 0.3, 0.6, 1.0)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# sampling


def test_sampling_deterministic():
    m = GaussianMixture([(0.5, [-1.0], [[1.0]]), (0.5, [1.0], [[1.0]])])
    a = m.sample(200, seed=7)
    b = m.sample(200, seed=7)
    assert np.array_equal(a, b)
    c = m.sample(200, seed=8)
    assert not np.array_equal(a, c)


def test_sampling_clt_bound():
    n = 100_000
    pts = standard_normal(1).sample(n, seed=0)
    assert abs(pts.mean()) < 4.0 / math.sqrt(n)


def test_sampling_requires_positive_n():
    with pytest.raises(EmptySamples):
        standard_normal(1).sample(0, seed=0)


# ---------------------------------------------------------------------------
# far-mass density


@pytest.mark.parametrize("dim", [1, 2])
def test_far_mass_equals_inner_profile_on_ball(dim):
    fm = FarMassDensity(dim=dim)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.0, 1.0, size=(200, dim))
    pts = pts[np.linalg.norm(pts, axis=1) <= 1.0][:100]
    assert np.array_equal(fm.pdf_batch(pts), fm.inner.pdf_batch(pts))


@pytest.mark.parametrize("dim", [1, 2])
def test_far_mass_total_mass(dim):
    fm = FarMassDensity(dim=dim)
    ball = quadrature.integrate(
        fm.pdf_batch,
        quadrature.Ball(tuple([0.0] * dim), 1.0),
        rel_tol=1e-10,
        abs_tol=1e-12,
    )
    lo = fm.bump_center - fm.bump_radius
    hi = fm.bump_center + fm.bump_radius
    shell = quadrature.integrate(
        fm.pdf_batch, quadrature.Box(tuple(lo), tuple(hi)), rel_tol=1e-10, abs_tol=1e-12
    )
    assert ball.value + shell.value == pytest.approx(1.0, abs=1e-8)
    assert ball.value == pytest.approx(fm.inner_mass, abs=1e-8)


def test_far_mass_bump_confined_to_shell():
    fm = FarMassDensity(dim=1, far_radius=1.05, shell_width=0.05)
    xs = np.array([[1.04], [1.049], [1.101], [1.2], [-1.08]])
    assert np.all(fm.pdf_batch(xs) == 0.0)
    inside = np.array([[1.075]])
    assert fm.pdf_batch(inside)[0] > 0.0


def test_far_mass_half_mass_sigma():
    # the default inner Gaussian puts half its mass in the unit ball
    for d in (1, 2, 3):
        sigma = ball_mass_sigma(d, 0.5)
        prof = GaussianMixture([(1.0, np.zeros(d), sigma**2 * np.eye(d))],
                               validate_mass=False)
        res = quadrature.integrate(
            prof.pdf_batch, quadrature.Ball(tuple([0.0] * d), 1.0), rel_tol=1e-10
        )
        assert res.value == pytest.approx(0.5, abs=1e-8)


def test_far_mass_derivatives_exposed_only_at_order_zero():
    fm = FarMassDensity(dim=1)
    assert float(fm.deriv_tensor([0.2], 0)) == pytest.approx(fm.pdf([0.2]))
    with pytest.raises(OrderUnavailable):
        fm.deriv_tensor([0.2], 1)


def test_far_mass_sampler_lands_in_support():
    fm = FarMassDensity(dim=1)
    pts = fm.sample(400, seed=11)
    r = np.abs(pts[:, 0])
    in_ball = r <= 1.0
    in_shell = (r >= fm.far_radius) & (r <= fm.far_radius + fm.shell_width)
    assert np.all(in_ball | in_shell)
    # inner mass 0.5: the split should be near half (binomial 4-sigma)
    assert abs(in_ball.mean() - 0.5) < 0.1
    assert np.array_equal(pts, fm.sample(400, seed=11))


def test_far_mass_validation():
    with pytest.raises(InputError):
        FarMassDensity(dim=1, far_radius=0.9)
    with pytest.raises(InputError):
        FarMassDensity(dim=1, shell_width=0.0)
    with pytest.raises(InputError):
        FarMassDensity(dim=1, inner_mass=1.0)


# ---------------------------------------------------------------------------
# wire format


def test_density_json_roundtrip():
    m = GaussianMixture([(0.4, [0.0], [[1.0]]), (0.6, [1.0], [[2.0]])])
    again = density_from_json(m.to_json())
    assert again.pdf(0.3) == pytest.approx(m.pdf(0.3), rel=1e-14)

    fm = FarMassDensity(dim=2, far_radius=1.2, shell_width=0.1)
    again = density_from_json(fm.to_json())
    assert again.pdf([1.25, 0.0]) == pytest.approx(fm.pdf([1.25, 0.0]), rel=1e-14)


def test_density_json_unknown_kind():
    with pytest.raises(InputError):
        density_from_json({"kind": "exponential", "dim": 1})
