"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line each.  Run with `pytest tests/test_acceptance.py -v -s`.
"""

import json
import math
import time

import numpy as np
import pytest

from helpers import gauss_conv_pdf, random_spd
from kdelab import bandwidth, bias_analysis, blowup
from kdelab.cli import main as cli_main
from kdelab.densities import GaussianMixture, standard_normal
from kdelab.kernels import (
    EpanechnikovKernel,
    GaussianKernel,
    HigherOrder4Kernel,
    make_spike_train,
)

THREADS = 4


def report(num, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {num}: {status} - {detail}")
    assert passed, detail


# ---------------------------------------------------------------------------


def test_criterion_1_gaussian_convolution_oracle():
    """20 seeded (cov, h, x') cases in d=1,2: bias matches the closed form."""
    t0 = time.monotonic()
    rng = np.random.default_rng(20_25)
    worst = 0.0
    for case in range(20):
        d = 1 if case < 10 else 2
        cov = random_spd(rng, d, cond_span=0.8)
        hmat = random_spd(rng, d, cond_span=0.7) * 0.35
        mean = rng.uniform(-0.5, 0.5, size=d)
        x = rng.uniform(-1.2, 1.2, size=d)
        model = GaussianMixture([(1.0, mean, cov)])
        h = bandwidth.make_bandwidth(hmat)
        got = bias_analysis.exact_bias(
            GaussianKernel(d), h, model, x, rel_tol=1e-9, abs_tol=1e-11
        )
        want = gauss_conv_pdf(mean, cov, h.entries, x) - model.pdf(x)
        worst = max(worst, abs(got - want))
    elapsed = time.monotonic() - t0
    report(
        1,
        worst < 1e-6 and elapsed < 30.0,
        f"max |bias - closed form| = {worst:.3e} (tol 1e-6), {elapsed:.1f}s (< 30s)",
    )


def test_criterion_2_moment_term_identities():
    """mu_0, mu_1 vanish for every symmetric kernel; mu_2, mu_3 for order 4."""
    model = standard_normal(1)
    h = bandwidth.scalar(0.4, 1)
    x = [0.3]
    worst01 = 0.0
    for kern in (GaussianKernel(1), EpanechnikovKernel(), HigherOrder4Kernel()):
        worst01 = max(worst01, abs(bias_analysis.moment_term(kern, h, model, x, 0)))
        worst01 = max(worst01, abs(bias_analysis.moment_term(kern, h, model, x, 1)))
    k4 = HigherOrder4Kernel()
    worst23 = max(
        abs(bias_analysis.moment_term(k4, h, model, x, 2)),
        abs(bias_analysis.moment_term(k4, h, model, x, 3)),
    )
    report(
        2,
        worst01 < 1e-10 and worst23 < 1e-8,
        f"max |mu_0|,|mu_1| = {worst01:.2e} (tol 1e-10); "
        f"order-4 |mu_2|,|mu_3| = {worst23:.2e} (tol 1e-8)",
    )


def test_criterion_3_bias_order_reproduction():
    """log-log bias slope: 2.0 +- 0.1 for order 2, 4.0 +- 0.2 for order 4."""
    t0 = time.monotonic()
    mixture = GaussianMixture([(0.6, [-1.0], [[0.64]]), (0.4, [1.5], [[1.21]])])
    h_values = [2.0**-k for k in range(2, 8)]
    queries = [[-1.0], [0.2], [1.5]]
    slopes = {}
    for kern, target, tol in (
        (GaussianKernel(1), 2.0, 0.1),
        (HigherOrder4Kernel(), 4.0, 0.2),
    ):
        for q in queries:
            st = bias_analysis.bias_scaling_study(
                kern, mixture, q, h_values, rel_tol=1e-11, abs_tol=1e-14,
                threads=THREADS,
            )
            slopes[(kern.kind, tuple(q))] = (st.slope, target, tol)
    elapsed = time.monotonic() - t0
    ok = all(abs(s - t) <= tol for s, t, tol in slopes.values()) and elapsed < 120.0
    detail = "; ".join(
        f"{kind} x={q[0]}: {s:.3f} (want {t}+-{tol})"
        for (kind, q), (s, t, tol) in slopes.items()
    )
    report(3, ok, detail + f"; {elapsed:.1f}s (< 120s)")


def test_criterion_4_remainder_bound_holds():
    """|remainder| <= bound * ||h||^k over the full grid, zero violations."""
    kernels = (GaussianKernel(1), EpanechnikovKernel())
    densities = (
        standard_normal(1),
        GaussianMixture([(0.6, [-1.0], [[0.64]]), (0.4, [1.5], [[1.21]])]),
    )
    h_values = [2.0**-k for k in range(2, 8)]
    queries = [[-0.6], [0.0], [0.35]]
    margins = []
    violations = 0
    for kern in kernels:
        for model in densities:
            for hv in h_values:
                for q in queries:
                    rep = bias_analysis.bias_report(
                        kern, bandwidth.scalar(hv, 1), model, q, k=2,
                        rel_tol=1e-11, abs_tol=1e-14,
                    )
                    margin = abs(rep.empirical_remainder) / rep.bound_times_hk
                    margins.append(margin)
                    if not rep.bound_satisfied:
                        violations += 1
    report(
        4,
        violations == 0,
        f"{len(margins)} grid cells, {violations} violations; margin ratios "
        f"min={min(margins):.3e} median={sorted(margins)[len(margins) // 2]:.3e} "
        f"max={max(margins):.3e}",
    )


def test_criterion_5_blowup_rates():
    """Balanced shrink: d=2,p=1 slope -1 +- 0.3 and increasing; d=1,p=0.5 slope -0.5 +- 0.3."""
    t0 = time.monotonic()
    eps = [0.5 * 0.5**i for i in range(6)]
    k2 = make_spike_train(p=1.0, ell=0, dim=2, n_max=10_000)
    run2 = blowup.blowup_sweep(k2, "balanced", eps, threads=THREADS)
    vals = [s.value for s in run2.steps]
    increasing = all(b > a for a, b in zip(vals, vals[1:]))
    k1 = make_spike_train(p=0.5, ell=0, dim=1, n_max=10_000)
    run1 = blowup.blowup_sweep(k1, "balanced", eps, threads=THREADS)
    elapsed = time.monotonic() - t0
    ok = (
        increasing
        and abs(run2.fitted_slope - (-1.0)) <= 0.3
        and abs(run1.fitted_slope - (-0.5)) <= 0.3
        and elapsed < 300.0
    )
    report(
        5,
        ok,
        f"d=2 p=1: slope {run2.fitted_slope:.3f} (want -1+-0.3), increasing={increasing}; "
        f"d=1 p=0.5: slope {run1.fitted_slope:.3f} (want -0.5+-0.3); "
        f"{elapsed:.1f}s (< 300s)",
    )


def test_criterion_6_mse_rate():
    """d=1 normal-reference bandwidth: MSE slope -0.8 +- 0.15 over n=2^10..2^17."""
    t0 = time.monotonic()
    study = bias_analysis.mse_study(
        GaussianKernel(1),
        standard_normal(1),
        [0.0],
        [2**k for k in range(10, 18)],
        replicates=200,
        seed=0,
        threads=THREADS,
    )
    elapsed = time.monotonic() - t0
    report(
        6,
        abs(study.slope - (-0.8)) <= 0.15 and elapsed < 600.0,
        f"slope {study.slope:.3f} (want -0.8 +- 0.15); {elapsed:.1f}s (< 600s)",
    )


def test_criterion_7_hadamard_property():
    """1000 seeded SPD matrices, d in {2,3,5}: ratio <= 1 and product identity."""
    rng = np.random.default_rng(77)
    worst_ratio = 0.0
    worst_product = 0.0
    dims = [2, 3, 5]
    for i in range(1000):
        h = bandwidth.make_bandwidth(random_spd(rng, dims[i % 3]))
        worst_ratio = max(worst_ratio, bandwidth.hadamard_ratio(h))
        worst_product = max(
            worst_product,
            abs(bandwidth.hadamard_ratio(h) * bandwidth.balance_ratio(h) - 1.0),
        )
    report(
        7,
        worst_ratio <= 1.0 + 1e-12 and worst_product <= 1e-10,
        f"max |h|/||h||^d = {worst_ratio:.15f} (<= 1+1e-12); "
        f"max |product - 1| = {worst_product:.2e} (tol 1e-10)",
    )


def test_criterion_8_spike_train_integrity():
    """Normalization, truncation-doubling stability, spike-decay constancy."""
    k = make_spike_train(p=1.0, ell=2, dim=1, n_max=10_000)
    m0 = k.moment(0)
    unit_ok = m0.converged and abs(m0.value - 1.0) < 1e-6
    stable = True
    for j in (0, 1, 2):
        v1 = k.moment(j).value
        v2 = k.moment(j, n_max=2 * k.params.n_max).value
        stable = stable and abs(v2 - v1) / abs(v2) < 1e-6
    centers = k.spike_centers()
    peaks = k.radial_profile(centers) * centers**k.params.decay_exp
    expect = k.params.c * math.exp(-1.0)
    constancy = float(np.max(np.abs(peaks / expect - 1.0)))
    report(
        8,
        unit_ok and stable and constancy < 1e-10,
        f"moment0 = {m0.value:.9f} (1 +- 1e-6); doubling stable (j <= 2): {stable}; "
        f"decay-floor constancy over {len(centers)} spikes: {constancy:.2e} (tol 1e-10)",
    )


def test_criterion_9_cli_determinism(tmp_path):
    """Byte-identical CLI outputs at 1, 2 and 8 worker threads, and on rerun."""
    (tmp_path / "kernel.json").write_text(json.dumps({"kind": "gaussian", "dim": 1}))
    (tmp_path / "density.json").write_text(
        json.dumps(
            {
                "kind": "gaussian_mixture",
                "dim": 1,
                "components": [{"weight": 1.0, "mean": [0.0], "cov": [[1.0]]}],
            }
        )
    )
    rng = np.random.default_rng(1)
    rows = "\n".join(format(v, ".17g") for v in rng.normal(size=400))
    (tmp_path / "samples.csv").write_text("x1\n" + rows + "\n")

    def run_all(tag, threads):
        est = tmp_path / f"est-{tag}.csv"
        rep = tmp_path / f"rep-{tag}.json"
        repc = tmp_path / f"rep-{tag}.csv"
        mom = tmp_path / f"mom-{tag}.csv"
        assert cli_main([
            "estimate", "--samples", str(tmp_path / "samples.csv"),
            "--kernel", str(tmp_path / "kernel.json"), "--bandwidth", "0.3",
            "--queries", "[-0.5, 0.0, 0.5, 1.0]", "--seed", "0",
            "--threads", str(threads), "--out", str(est),
        ]) == 0
        assert cli_main([
            "bias-report", "--kernel", str(tmp_path / "kernel.json"),
            "--density", str(tmp_path / "density.json"),
            "--bandwidths", "[0.5, 0.25, 0.125]", "--queries", "[0.0, 0.4]",
            "--seed", "0", "--threads", str(threads),
            "--out-json", str(rep), "--out-csv", str(repc),
        ]) == 0
        assert cli_main([
            "moments", "--p", "1.0", "--ell", "2", "--dim", "1",
            "--n-max", "3000", "--seed", "0", "--threads", str(threads),
            "--out-csv", str(mom),
        ]) == 0
        return tuple(p.read_bytes() for p in (est, rep, repc, mom))

    base = run_all("t1", 1)
    same = all(run_all(f"t{t}", t) == base for t in (2, 8))
    rerun = run_all("t1b", 1) == base
    report(
        9,
        same and rerun,
        f"outputs byte-identical across threads 1/2/8: {same}; rerun identical: {rerun}",
    )
