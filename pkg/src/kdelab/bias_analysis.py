"""Pointwise bias analysis: exact bias, moment-series terms, the two-piece
remainder bound, exact variance, and empirical scaling studies.

The bias of the estimator at x' is the convolution defect
K_h * f(x') - f(x').  Expanding f around x' turns it into a series whose
j-th term pairs the kernel with the order-j derivative tensor of f:

    mu_0 = f(x') * (int K - 1)
    mu_j = ((-1)^j / j!) * int K(u) D^j f(x')((h u)^j) du

What is left after k terms is controlled by two quantities only: the kernel
decay beyond delta/||h|| (tail term) and the local size of the k-th
derivative of f (Taylor term).  ``remainder_bound`` evaluates that bound
with explicit constants; the studies fit empirical rates against it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from . import quadrature
from .bandwidth import BandwidthMatrix, scalar as scalar_bandwidth
from .errors import AllPointsExcluded, InputError
from .estimator import SampleSet, kde_estimate
from .kernels import (
    EpanechnikovKernel,
    GaussianKernel,
    HigherOrder4Kernel,
    Kernel,
    ProductKernel,
    SpikeTrainKernel,
)

TAYLOR_NORM_CONSTANT = 1.0  # Euclidean operator norms throughout


@dataclass
class BiasReport:
    x_query: tuple
    h_entries: list
    h_norm: float
    h_det: float
    k: int
    exact_bias: float
    moment_terms: list
    empirical_remainder: float
    delta_used: float
    tail_term: float
    taylor_term: float
    bound_total: float
    bound_times_hk: float
    bound_satisfied: bool
    remainder_over_hk: float
    remainder_over_h2: float

    def to_json(self) -> dict:
        return {
            "x_query": list(self.x_query),
            "h_entries": self.h_entries,
            "h_norm": self.h_norm,
            "h_det": self.h_det,
            "k": self.k,
            "exact_bias": self.exact_bias,
            "moment_terms": list(self.moment_terms),
            "empirical_remainder": self.empirical_remainder,
            "delta_used": self.delta_used,
            "tail_term": self.tail_term,
            "taylor_term": self.taylor_term,
            "bound_total": self.bound_total,
            "bound_times_hk": self.bound_times_hk,
            "bound_satisfied": self.bound_satisfied,
            "remainder_over_hk": self.remainder_over_hk,
            "remainder_over_h2": self.remainder_over_h2,
        }


def choose_delta(h: BandwidthMatrix) -> float:
    """Default split radius between the tail and Taylor regimes: ||h||^(1/2)."""
    return math.sqrt(h.op_norm)


def exact_bias(
    kernel: Kernel,
    h: BandwidthMatrix,
    model,
    x_query,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    max_depth: int = quadrature.DEFAULT_MAX_DEPTH,
) -> float:
    conv = quadrature.convolve_at(
        kernel, h, model, x_query, rel_tol=rel_tol, abs_tol=abs_tol,
        max_depth=max_depth,
    )
    conv.require_converged("convolution")
    return conv.value - model.pdf(x_query)


# ---------------------------------------------------------------------------
# moment terms


def _contract_bandwidth(tensor: np.ndarray, h: BandwidthMatrix) -> np.ndarray:
    """Fold h into every slot: S[u^j] = T[(h u)^j]."""
    out = np.asarray(tensor, dtype=float)
    for _ in range(out.ndim):
        out = np.tensordot(out, h.entries, axes=([0], [0]))
    return out


_EINSUM_LETTERS = "abcdefgh"


def _poly_apply_batch(tensor: np.ndarray, pts: np.ndarray) -> np.ndarray:
    j = tensor.ndim
    idx = _EINSUM_LETTERS[:j]
    spec = idx + "," + ",".join(f"n{c}" for c in idx) + "->n"
    return np.einsum(spec, tensor, *([pts] * j))


def _abs_moment_tail(kernel: Kernel, r: float, j: int) -> float:
    """Upper bound on int_{|u| > r} |K(u)| |u|^j du."""

    def gauss_tail(d, jj, rr):
        mom = 2.0 ** (jj / 2.0) * math.gamma((d + jj) / 2.0) / math.gamma(d / 2.0)
        return mom * float(gammaincc((d + jj) / 2.0, 0.5 * rr * rr))

    if isinstance(kernel, GaussianKernel):
        return gauss_tail(kernel.dim, j, r)
    if isinstance(kernel, EpanechnikovKernel):
        return 0.0 if r >= 1.0 else kernel.moment(j).value
    if isinstance(kernel, HigherOrder4Kernel):
        # |K| <= (3 + u^2)/2 * phi(u)
        return 1.5 * gauss_tail(1, j, r) + 0.5 * gauss_tail(1, j + 2, r)
    if isinstance(kernel, ProductKernel):
        if kernel.support_halfwidth is not None:
            return 0.0 if r >= kernel.support_radius else kernel.moment(j).value
        d = kernel.dim
        base = kernel.base
        rp = r / math.sqrt(d)
        m1 = base.moment(0).value
        mj = base.moment(j).value if j > 0 else m1
        tw = _abs_moment_tail(base, rp, j)
        t0 = _abs_moment_tail(base, rp, 0)
        # |u|^j <= d^(j-1) sum |u_i|^j ; outside the box, some axis exceeds rp
        per_axis = tw * m1 ** (d - 1) + (d - 1) * t0 * mj * m1 ** max(d - 2, 0)
        return d ** max(j - 1, 0) * d * per_axis
    if isinstance(kernel, SpikeTrainKernel):
        return _spike_weighted_tail(kernel, r, j)
    raise InputError(f"no tail bound for kernel kind {kernel.kind!r}")


def _spike_weighted_tail(kernel: SpikeTrainKernel, r: float, j: int) -> float:
    p = kernel.params
    centers = kernel.spike_centers()
    hw = kernel.spike_half_widths()
    mask = centers + hw > r
    coeff = p.c * centers**-p.decay_exp
    surface = quadrature.sphere_surface(p.dim)
    masses = coeff * surface * (centers + hw) ** (p.dim - 1 + j) * 2.0 * hw
    return float(np.sum(masses[mask][::-1]))


def _moment_region(kernel: Kernel, j: int, abs_tol: float):
    half = kernel.support_halfwidth
    if half is not None:
        return quadrature.Box(
            tuple([-half] * kernel.dim), tuple([half] * kernel.dim)
        ), True
    r = 8.0
    while r < 80.0:
        if _abs_moment_tail(kernel, r, j) <= 0.1 * abs_tol:
            return quadrature.Box(
                tuple([-r] * kernel.dim), tuple([r] * kernel.dim)
            ), True
        r += 2.0
    return quadrature.Box(tuple([-r] * kernel.dim), tuple([r] * kernel.dim)), False


def moment_term(
    kernel: Kernel,
    h: BandwidthMatrix,
    model,
    x_query,
    j: int,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    max_depth: int = quadrature.DEFAULT_MAX_DEPTH,
) -> float:
    """The j-th bias series term at x'.

    Computed by quadrature of the defining integral against the fixed
    derivative tensor; the spike-train kernel instead expands the polynomial
    into monomials and pairs them with its exact signed moments (tensor
    grids cannot see the spikes).
    """
    d = kernel.dim
    rel_tol = quadrature.default_rel_tol(d) if rel_tol is None else rel_tol
    abs_tol = quadrature.DEFAULT_ABS_TOL if abs_tol is None else abs_tol
    if j == 0:
        unit = kernel.signed_moment((0,) * d)
        return model.pdf(x_query) * (unit - 1.0)

    tensor = model.deriv_tensor(x_query, j)
    folded = _contract_bandwidth(np.atleast_1d(tensor), h)
    sign_fact = (-1.0) ** j / math.factorial(j)

    if isinstance(kernel, SpikeTrainKernel):
        total = 0.0
        for idx in np.ndindex(*folded.shape):
            alpha = [0] * d
            for i in idx:
                alpha[i] += 1
            total += folded[idx] * kernel.signed_moment(tuple(alpha))
        return sign_fact * total

    # |S[u^j]| <= (sum of |S| entries) * |u|^j, which the tail bound absorbs
    scale = max(float(np.sum(np.abs(folded))), 1e-300)
    region, tail_ok = _moment_region(kernel, j, abs_tol / scale)

    def fn(pts):
        return kernel.eval_batch(pts) * _poly_apply_batch(folded, pts)

    res = quadrature.integrate(
        fn, region, rel_tol=rel_tol, abs_tol=abs_tol, max_depth=max_depth
    )
    if not tail_ok:
        res.converged = False
    res.require_converged(f"moment term {j}")
    return sign_fact * res.value


# ---------------------------------------------------------------------------
# remainder bound


def remainder_bound(
    kernel: Kernel,
    h: BandwidthMatrix,
    model,
    x_query,
    k: int,
    delta: float,
) -> tuple:
    """(tail_term, taylor_term, total) with explicit constants.

    tail_term = 2 |h|^-1 psi(delta / ||h||), taylor_term =
    C * mu_K(k) / k! * sup of ||D^k f|| over the delta-ball, C = 1.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    tail = 2.0 / h.det * kernel.decay_envelope(delta / h.op_norm)
    mu_k = kernel.moment(k).require(f"kernel moment {k}")
    local = model.deriv_sup_norm(x_query, delta, k)
    taylor = TAYLOR_NORM_CONSTANT * mu_k / math.factorial(k) * local
    return tail, taylor, tail + taylor


def bias_report(
    kernel: Kernel,
    h: BandwidthMatrix,
    model,
    x_query,
    k: int = 2,
    delta: float | None = None,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    max_depth: int = quadrature.DEFAULT_MAX_DEPTH,
) -> BiasReport:
    """Assemble the full per-(x', h) record: exact bias, series terms,
    empirical remainder and the bound at its two normalizations."""
    x_query = np.atleast_1d(np.asarray(x_query, dtype=float))
    delta = choose_delta(h) if delta is None else delta
    bias = exact_bias(
        kernel, h, model, x_query, rel_tol=rel_tol, abs_tol=abs_tol,
        max_depth=max_depth,
    )
    terms = [
        moment_term(
            kernel, h, model, x_query, j, rel_tol=rel_tol, abs_tol=abs_tol,
            max_depth=max_depth,
        )
        for j in range(k + 1)
    ]
    remainder = bias - math.fsum(terms)
    tail, taylor, total = remainder_bound(kernel, h, model, x_query, k, delta)
    hk = h.op_norm**k
    bound_scaled = total * hk
    return BiasReport(
        x_query=tuple(float(v) for v in x_query),
        h_entries=h.to_json(),
        h_norm=h.op_norm,
        h_det=h.det,
        k=k,
        exact_bias=bias,
        moment_terms=[float(t) for t in terms],
        empirical_remainder=remainder,
        delta_used=delta,
        tail_term=tail,
        taylor_term=taylor,
        bound_total=total,
        bound_times_hk=bound_scaled,
        bound_satisfied=bool(abs(remainder) <= bound_scaled),
        remainder_over_hk=remainder / hk,
        remainder_over_h2=remainder / h.op_norm**2,
    )


# ---------------------------------------------------------------------------
# exact variance


def variance_exact(
    kernel: Kernel,
    h: BandwidthMatrix,
    model,
    x_query,
    n: int,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    max_depth: int = quadrature.DEFAULT_MAX_DEPTH,
) -> float:
    """Variance of the estimator at x' for sample size n, by quadrature."""
    if n < 1:
        raise InputError("n must be >= 1")
    mean = quadrature.convolve_at(
        kernel, h, model, x_query, rel_tol=rel_tol, abs_tol=abs_tol,
        max_depth=max_depth,
    )
    mean.require_converged("first convolution moment")
    second = quadrature.convolve_at(
        kernel, h, model, x_query, rel_tol=rel_tol, abs_tol=abs_tol, power=2,
        max_depth=max_depth,
    )
    second.require_converged("second convolution moment")
    return (second.value / h.det - mean.value**2) / n


# ---------------------------------------------------------------------------
# scaling studies


def fit_loglog(xs, ys) -> tuple:
    """Least-squares slope and intercept of log|y| against log x."""
    xs = np.log(np.asarray(xs, dtype=float))
    ys = np.log(np.abs(np.asarray(ys, dtype=float)))
    xbar = xs.mean()
    ybar = ys.mean()
    denom = float(np.sum((xs - xbar) ** 2))
    if denom == 0.0:
        raise InputError("need at least two distinct abscissae")
    slope = float(np.sum((xs - xbar) * (ys - ybar)) / denom)
    return slope, float(ybar - slope * xbar)


@dataclass
class ScalingPoint:
    h_value: float
    bias: float
    included: bool


@dataclass
class ScalingStudy:
    points: list
    slope: float
    intercept: float


def bias_scaling_study(
    kernel: Kernel,
    model,
    x_query,
    h_values,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    max_depth: int = quadrature.DEFAULT_MAX_DEPTH,
    threads: int = 1,
) -> ScalingStudy:
    """Fit the log-log slope of |bias| against the bandwidth norm.

    Points where |bias| is within 10x of the quadrature accuracy floor are
    excluded from the fit (they measure noise, not rate).
    """
    h_values = [float(v) for v in h_values]
    if len(h_values) < 2:
        raise InputError("need at least two bandwidth values")
    d = kernel.dim
    abs_tol_eff = quadrature.DEFAULT_ABS_TOL if abs_tol is None else abs_tol

    def one(hv: float):
        h = scalar_bandwidth(hv, d)
        conv = quadrature.convolve_at(
            kernel, h, model, x_query, rel_tol=rel_tol, abs_tol=abs_tol,
            max_depth=max_depth,
        )
        conv.require_converged(f"convolution at h={hv!r}")
        bias = conv.value - model.pdf(x_query)
        floor = 10.0 * max(abs_tol_eff, conv.error_estimate)
        return ScalingPoint(hv, bias, bool(abs(bias) >= floor))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(one, h_values))
    else:
        points = [one(hv) for hv in h_values]

    kept = [(p.h_value, p.bias) for p in points if p.included]
    if len(kept) < 2:
        raise AllPointsExcluded(
            "all bias values sit at the quadrature noise floor; nothing to fit"
        )
    slope, intercept = fit_loglog([k_ for k_, _ in kept], [b for _, b in kept])
    return ScalingStudy(points, slope, intercept)


@dataclass
class MsePoint:
    n: int
    mse: float
    mean_h: float


@dataclass
class MseStudy:
    points: list
    slope: float
    intercept: float
    replicates: int
    seed: int


def mse_study(
    kernel: Kernel,
    model,
    x_query,
    n_values,
    replicates: int,
    seed: int,
    bandwidth_constant: float = 1.06,
    threads: int = 1,
) -> MseStudy:
    """Empirical MSE of the estimator at x' across sample sizes.

    Per replicate, the bandwidth follows the normal-reference rule
    c0 * sigma_hat * n^(-1/(4+d)); every (n, replicate) cell draws from its
    own seed stream (seed + cell index) so the study parallelizes without
    losing reproducibility.
    """
    if replicates < 1:
        raise InputError("replicates must be >= 1")
    n_values = [int(n) for n in n_values]
    d = kernel.dim
    x_query = np.atleast_1d(np.asarray(x_query, dtype=float))
    f_true = model.pdf(x_query)
    rate = -1.0 / (4.0 + d)

    def one_cell(cell):
        i_n, rep = cell
        n = n_values[i_n]
        pts = model.sample(n, seed + i_n * replicates + rep)
        sigma = float(np.std(pts, ddof=1)) if d == 1 else float(
            np.mean(np.std(pts, axis=0, ddof=1))
        )
        hv = bandwidth_constant * sigma * n**rate
        h = scalar_bandwidth(hv, d)
        est = kde_estimate(SampleSet.from_array(pts), kernel, h, x_query[None, :])[0]
        return (est - f_true) ** 2, hv

    cells = [(i, r) for i in range(len(n_values)) for r in range(replicates)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_cell, cells))
    else:
        results = [one_cell(c) for c in cells]

    points = []
    for i, n in enumerate(n_values):
        errs = [results[i * replicates + r][0] for r in range(replicates)]
        hs = [results[i * replicates + r][1] for r in range(replicates)]
        points.append(MsePoint(n, math.fsum(errs) / replicates, math.fsum(hs) / replicates))
    slope, intercept = fit_loglog([p.n for p in points], [p.mse for p in points])
    return MseStudy(points, slope, intercept, replicates, seed)
