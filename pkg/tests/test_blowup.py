import math

import numpy as np
import pytest

from kdelab import bandwidth, blowup, quadrature
from kdelab.errors import InputError, NumericalError
from kdelab.kernels import make_spike_train


@pytest.fixture(scope="module")
def spike_d1():
    return make_spike_train(p=0.5, ell=0, dim=1, n_max=10_000)


def test_predicted_rate_cases():
    eps = 0.01
    assert blowup.predicted_rate((eps, eps), 1.0) == pytest.approx(1.0 / eps)
    assert blowup.predicted_rate((eps, eps), 2.0) == pytest.approx(1.0)
    assert blowup.predicted_rate((eps, eps**2), 1.0) == pytest.approx(eps**-2.0)


def test_predicted_rate_validation():
    with pytest.raises(InputError):
        blowup.predicted_rate((0.1, 0.2), 1.0)  # not descending
    with pytest.raises(InputError):
        blowup.predicted_rate((0.1, -0.2), 1.0)


def test_witness_geometry(spike_d1):
    h = bandwidth.scalar(0.25, 1)
    witness, n_star = blowup.spike_aligned_witness(spike_d1, h, far_radius=1.05)
    assert n_star == math.ceil(1.05 / 0.25)
    center = witness.far_radius + witness.bump_radius
    assert center == pytest.approx(0.25 * n_star, rel=1e-12)
    # the bump must clear the unit ball and sit inside one spike image
    assert witness.far_radius > 1.0
    q = spike_d1.params.shrink_exp
    assert 2.0 * witness.bump_radius <= 0.25 * n_star**-q + 1e-18


def test_witness_spike_index_capped():
    k = make_spike_train(p=1.0, ell=1, dim=1, n_max=100)
    with pytest.raises(InputError):
        blowup.spike_aligned_witness(k, bandwidth.scalar(0.005, 1))


def test_engine_matches_brute_force_oracle():
    # moderate parameters keep the mapped spike width far above the float
    # spacing, so a global-coordinate reference integral is still trustworthy
    k = make_spike_train(p=2.0, ell=0, dim=1, n_max=50)
    eps = 0.5
    h = bandwidth.scalar(eps, 1)
    witness, n_star = blowup.spike_aligned_witness(k, h)
    res = blowup.convolve_witness_at_zero(k, h, witness, n_star)
    assert res.converged

    def integrand(pts):
        y = pts[:, 0]
        return k.radial_profile(np.abs(y) / eps) / eps * witness.pdf_batch(pts)

    cuts = {-1.2, 1.2, -1.0, 1.0}
    for n in range(2, 51):
        hw = 0.5 * float(n) ** -k.params.shrink_exp
        for sgn in (1, -1):
            a, b = sorted((sgn * eps * (n - hw), sgn * eps * (n + hw)))
            if -1.2 < a and b < 1.2:
                cuts.update((a, b))
    cuts.update((witness.far_radius, witness.far_radius + witness.shell_width))
    edges = sorted(cuts)
    boxes = [(np.array([a]), np.array([b])) for a, b in zip(edges[:-1], edges[1:])]
    ref = quadrature.integrate_boxes(integrand, boxes, rel_tol=1e-11, abs_tol=1e-15)
    assert res.value == pytest.approx(ref.value, rel=1e-9)


def test_sweep_d1_slope(spike_d1):
    eps = [0.5 * 0.5**i for i in range(5)]
    run = blowup.blowup_sweep(spike_d1, "balanced", eps)
    assert abs(run.fitted_slope - (-0.5)) < 0.3
    assert run.predicted_slope == pytest.approx(-0.5, abs=1e-9)
    for step in run.steps:
        assert step.converged
        assert step.value >= step.floor * (1.0 - 1e-9)


def test_sweep_d2_balanced_growth():
    k = make_spike_train(p=1.0, ell=0, dim=2, n_max=10_000)
    eps = [0.5 * 0.5**i for i in range(5)]
    run = blowup.blowup_sweep(k, "balanced", eps)
    vals = [s.value for s in run.steps]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert abs(run.fitted_slope - (-1.0)) < 0.3


def test_sweep_unbalanced_schedule():
    k = make_spike_train(p=1.0, ell=0, dim=2, n_max=10_000)
    eps = [0.5 * 0.5**i for i in range(4)]
    run = blowup.blowup_sweep(k, "unbalanced", eps)
    # lambda = (eps, eps^2): predicted rate eps^(p - d(d+1)/2) = eps^-2
    assert run.predicted_slope == pytest.approx(-2.0, abs=1e-9)
    assert abs(run.fitted_slope - run.predicted_slope) < 0.3


def test_bounded_when_decay_is_fast_enough():
    # p = d: the predicted rate is flat, and values must stay bounded
    k = make_spike_train(p=1.0, ell=0, dim=1, n_max=10_000)
    eps = [0.5 * 0.5**i for i in range(6)]
    run = blowup.blowup_sweep(k, "balanced", eps)
    vals = [s.value for s in run.steps]
    assert run.predicted_slope == pytest.approx(0.0, abs=1e-9)
    assert max(vals) / min(vals) < 3.0


def test_empirical_slope_not_below_prediction(spike_d1):
    # the rate statement is a lower bound; the fit may only overshoot
    eps = [0.5 * 0.5**i for i in range(5)]
    run = blowup.blowup_sweep(spike_d1, "balanced", eps)
    assert run.fitted_slope <= run.predicted_slope + 0.3


def test_sweep_validation(spike_d1):
    with pytest.raises(InputError):
        blowup.blowup_sweep(spike_d1, "balanced", [0.5])
    with pytest.raises(InputError):
        blowup.blowup_sweep(spike_d1, "balanced", [0.25, 0.5])  # not decreasing
    with pytest.raises(InputError):
        blowup.blowup_sweep(spike_d1, "sideways", [0.5, 0.25])
    with pytest.raises(InputError):
        blowup.schedule_eigenvalues("diagonal-ish", 0.5, 2)


def test_sweep_refuses_slope_with_many_exclusions(spike_d1, monkeypatch):
    def fake(*args, **kwargs):
        return quadrature.QuadratureResult(1.0, 1.0, 0, False)

    monkeypatch.setattr(blowup, "convolve_witness_at_zero", fake)
    with pytest.raises(NumericalError):
        blowup.blowup_sweep(spike_d1, "balanced", [0.5, 0.25, 0.125])


def test_sweep_threads_deterministic(spike_d1):
    eps = [0.5 * 0.5**i for i in range(4)]
    a = blowup.blowup_sweep(spike_d1, "balanced", eps, threads=1)
    b = blowup.blowup_sweep(spike_d1, "balanced", eps, threads=4)
    assert [s.value for s in a.steps] == [s.value for s in b.steps]


# ---------------------------------------------------------------------------
# moment finiteness


def test_moment_report_unit_mass():
    k = make_spike_train(p=1.0, ell=2, dim=1, n_max=10_000)
    rows = blowup.moment_finiteness_report(k, 2)
    assert rows[0].value == pytest.approx(1.0, abs=1e-6)
    assert all(r.converged for r in rows)


def test_moment_report_truncation_stability():
    k = make_spike_train(p=1.0, ell=2, dim=1, n_max=4000)
    for j in (0, 1, 2):
        v1 = k.moment(j).value
        v2 = k.moment(j, n_max=2 * k.params.n_max).value
        assert abs(v2 - v1) / abs(v2) < 1e-6


def test_moment_report_rejects_j_beyond_guarantee():
    k = make_spike_train(p=1.0, ell=1, dim=1, n_max=1000)
    with pytest.raises(InputError):
        blowup.moment_finiteness_report(k, 2)
