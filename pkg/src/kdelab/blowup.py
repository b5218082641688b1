"""Blow-up experiments: how slow kernel decay plus shrinking bandwidth
eigenvalues makes pointwise estimates explode.

For the spike-train kernel the estimate at the origin, maximized over all
densities that agree with a fixed profile on the unit ball, grows like
lambda_1^p / prod(lambda_i).  The witness density used here parks the free
mass in a smooth bump sitting exactly inside the image of one kernel spike
(radius lambda_1 * n_star just outside the unit ball), which is how the
supremum is approached; the bump therefore moves with the bandwidth step,
while the inner profile stays fixed across the sweep.

All convolutions run in spike-local coordinates.  At step epsilon the spike
width in the data space is epsilon * n^-q, far below the floating-point
spacing at the spike radius for interesting parameter ranges, so naive
global-coordinate quadrature would silently integrate garbage.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .bandwidth import BandwidthMatrix, diagonal
from .bias_analysis import fit_loglog
from .densities import FarMassDensity
from .errors import DimensionMismatch, InputError, NumericalError
from .kernels import SpikeTrainKernel, bump, bump_rule

WITNESS_BUMP_FRACTION = 0.25  # bump radius as a fraction of the mapped spike width
ARC_GL_ORDER = 24
MAX_EXCLUDED_FRACTION = 0.2


def predicted_rate(eigs, p: float) -> float:
    """lambda_1^p / prod(lambda_i) for descending positive eigenvalues."""
    eigs = [float(v) for v in eigs]
    if not eigs or any(v <= 0 for v in eigs):
        raise InputError("eigenvalues must be positive")
    if any(a < b for a, b in zip(eigs, eigs[1:])):
        raise InputError("eigenvalues must be sorted descending")
    return eigs[0] ** p / math.prod(eigs)


def spike_aligned_witness(
    kernel: SpikeTrainKernel,
    h: BandwidthMatrix,
    far_radius: float = 1.05,
    inner_mass: float = 0.5,
) -> tuple[FarMassDensity, int]:
    """Witness density whose far bump sits inside the image of one spike.

    The bump is centered at lambda_1 * n_star along the top eigenvector,
    with n_star the first spike index mapped outside ``far_radius``, and its
    radius is a quarter of the mapped spike width, so every point of the
    bump sees a kernel value of at least c * n_star^-p * bump(1/2) / |h|.
    """
    p = kernel.params
    lam1 = h.op_norm
    lam_min = float(h.eigenvalues[-1])
    n_star = max(2, math.ceil(far_radius / lam1))
    if n_star > p.n_max:
        raise InputError(
            f"witness spike index {n_star} exceeds the kernel truncation {p.n_max}"
        )
    center_radius = lam1 * n_star
    rho = WITNESS_BUMP_FRACTION * lam_min * n_star**-p.shrink_exp
    witness = FarMassDensity(
        dim=p.dim,
        far_direction=h.top_eigenvector,
        far_radius=center_radius - rho,
        shell_width=2.0 * rho,
        inner_mass=inner_mass,
    )
    return witness, n_star


def _far_bump_integral(kernel, lambdas, witness, n_star, rel_tol, abs_tol):
    """Far-bump contribution in bump-local coordinates z (unit ball).

    The spike offset s = 2 n^q (|h^-1 y| - n) is evaluated through
    W_i = (bump_fraction * lam_min / lam_i) * z_i, which keeps full precision
    where |h^-1 y| - n would cancel catastrophically.
    """
    p = kernel.params
    d = p.dim
    lam = np.asarray(lambdas, dtype=float)
    det = float(np.prod(lam))
    eta = WITNESS_BUMP_FRACTION
    scale = eta * lam[-1] / lam  # W = scale * z
    nq = float(n_star) ** -p.shrink_exp
    amp = p.c * float(n_star) ** -p.decay_exp
    prefactor = witness.far_mass * amp / (det * witness.unit_bump_mass)

    def integrand(z):
        w = z * scale[None, :]
        wnorm2 = np.sum(w * w, axis=-1)
        reach = np.sqrt((n_star + w[:, 0] * nq) ** 2 + (wnorm2 - w[:, 0] ** 2) * nq * nq)
        s = (4.0 * n_star * w[:, 0] + 2.0 * wnorm2 * nq) / (reach + n_star)
        return bump(s) * bump(np.linalg.norm(z, axis=-1))

    if d == 1:
        region = quadrature.Box((-1.0,), (1.0,))
    else:
        region = quadrature.Ball(tuple([0.0] * d), 1.0)
    res = quadrature.integrate(integrand, region, rel_tol=rel_tol, abs_tol=abs_tol)
    return prefactor * res.value, prefactor * res.error_estimate, res.converged


def _arc_average(f0r, r, lam1, lam2, theta_lo, theta_hi):
    """integral over [theta_lo, theta_hi] of f0(radius r mapped by diag h)."""
    x, w = quadrature.legendre_rule(ARC_GL_ORDER)
    mid = 0.5 * (theta_lo + theta_hi)
    half = 0.5 * (theta_hi - theta_lo)
    th = mid[..., None] + half[..., None] * x[None, :]
    g = np.sqrt(
        (lam1 * np.cos(th)) ** 2 + (lam2 * np.sin(th)) ** 2
    )
    vals = f0r(r[..., None] * g)
    return np.sum(vals * w[None, :], axis=-1) * half


def _inner_integral(kernel, lambdas, witness, rel_tol, abs_tol):
    """Contribution of the fixed inner profile (unit ball) spike by spike."""
    p = kernel.params
    d = p.dim
    lam = np.asarray(lambdas, dtype=float)
    lam1 = float(lam[0])
    lam_min = float(lam[-1])
    f0r = witness.inner_radial

    n_hi = min(p.n_max, int(math.floor(1.0 / lam_min)) + 1)
    if n_hi < 2:
        return 0.0, 0.0, True
    centers = np.arange(2, n_hi + 1, dtype=float)
    hw = 0.5 * centers**-p.shrink_exp
    coeff = p.c * centers**-p.decay_exp

    s_nodes, s_wts = bump_rule()
    value = 0.0
    err = 0.0
    ok = True

    # spikes whose radial range crosses a ball-edge image get adaptive
    # treatment; the rest use the fixed bump rule
    lo_r = centers - hw
    hi_r = centers + hw
    edges = [1.0 / lam1] if d == 1 else [1.0 / lam1, 1.0 / lam_min]
    straddles = np.zeros(centers.shape, dtype=bool)
    for e in edges:
        straddles |= (lo_r < e) & (hi_r > e)

    def theta_profile(r):
        # A(r): angular integral of the truncated inner profile at radius r
        r = np.asarray(r, dtype=float)
        if d == 1:
            return 2.0 * f0r(lam1 * r) * (lam1 * r <= 1.0)
        if lam1 == lam_min:
            return 2.0 * math.pi * f0r(lam1 * r) * (lam1 * r <= 1.0)
        denom = (lam1 * lam1 - lam_min * lam_min) * r * r
        tau = (1.0 - (lam_min * r) ** 2) / denom
        tau_c = np.clip(tau, 0.0, 1.0)
        theta0 = np.arccos(np.sqrt(tau_c))
        full = tau >= 1.0
        some = (tau > 0.0) & ~full
        out = np.zeros_like(r)
        if np.any(full):
            # whole circle maps inside the ball; quarter arc by symmetry
            arc = _arc_average(
                f0r,
                r[full],
                lam1,
                lam_min,
                np.zeros(np.count_nonzero(full)),
                np.full(np.count_nonzero(full), 0.5 * math.pi),
            )
            tmp = np.zeros_like(r)
            tmp[full] = 4.0 * arc
            out = out + tmp
        if np.any(some):
            arc = _arc_average(
                f0r,
                r[some],
                lam1,
                lam_min,
                theta0[some],
                np.full(np.count_nonzero(some), 0.5 * math.pi),
            )
            tmp = np.zeros_like(r)
            tmp[some] = 4.0 * arc
            out = out + tmp
        return out

    # fixed-rule spikes, vectorized over (spike, s-node)
    smooth = ~straddles
    if np.any(smooth):
        c_s = centers[smooth][:, None]
        h_s = hw[smooth][:, None]
        radii = c_s + s_nodes[None, :] * h_s
        vals = bump(np.broadcast_to(s_nodes, radii.shape)) * theta_profile(
            radii.ravel()
        ).reshape(radii.shape)
        if d == 2:
            vals = vals * radii
        per_spike = (vals @ s_wts) * hw[smooth]
        value += float(np.sum((coeff[smooth] * per_spike)[::-1]))

    for i in np.nonzero(straddles)[0]:
        n = centers[i]
        w = hw[i]
        cuts = {-1.0, 1.0}
        for e in edges:
            s_c = (e - n) / w
            if -1.0 < s_c < 1.0:
                cuts.add(float(s_c))
        boxes = [
            (np.array([a]), np.array([b]))
            for a, b in zip(sorted(cuts)[:-1], sorted(cuts)[1:])
        ]

        def fn(pts, n=n, w=w):
            s = pts[:, 0]
            r = n + s * w
            vals = bump(s) * theta_profile(r)
            if d == 2:
                vals = vals * r
            return vals * w

        res = quadrature.integrate_boxes(fn, boxes, rel_tol=rel_tol, abs_tol=abs_tol)
        value += coeff[i] * res.value
        err += coeff[i] * res.error_estimate
        ok = ok and res.converged

    return value, err, ok


def convolve_witness_at_zero(
    kernel: SpikeTrainKernel,
    h: BandwidthMatrix,
    witness: FarMassDensity,
    n_star: int,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-13,
) -> quadrature.QuadratureResult:
    """Scaled-kernel convolution with the witness density at the origin.

    Exact decomposition into the inner-ball contribution and the far-bump
    contribution (their supports are disjoint), each in well-conditioned
    local coordinates.  Works in the eigenbasis of h, so any SPD bandwidth
    whose top eigenvector carries the witness bump is accepted.
    """
    p = kernel.params
    if p.dim > 2:
        raise DimensionMismatch("blow-up convolutions support d <= 2")
    lambdas = [float(v) for v in h.eigenvalues]
    far_v, far_e, far_ok = _far_bump_integral(
        kernel, lambdas, witness, n_star, rel_tol, abs_tol
    )
    in_v, in_e, in_ok = _inner_integral(kernel, lambdas, witness, rel_tol, abs_tol)
    return quadrature.QuadratureResult(
        far_v + in_v, far_e + in_e, 0, far_ok and in_ok
    )


def witness_floor(kernel, h, witness, n_star) -> float:
    """Directly computable lower envelope: far mass times the minimum of the
    scaled kernel over the bump support."""
    p = kernel.params
    lam_ratio = float(h.eigenvalues[-1]) / h.op_norm
    s_bound = 2.0 * WITNESS_BUMP_FRACTION * lam_ratio + float(n_star) ** -p.shrink_exp
    amp = p.c * float(n_star) ** -p.decay_exp
    return witness.far_mass * amp * bump(min(s_bound, 0.999)) / h.det


@dataclass
class BlowupStep:
    eps: float
    eigenvalues: list
    n_star: int
    bump_center_radius: float
    bump_radius: float
    value: float
    error_estimate: float
    converged: bool
    predicted: float
    floor: float


@dataclass
class BlowupRun:
    decay_exp: float
    moment_order: int
    dim: int
    schedule: str
    far_radius: float
    steps: list
    fitted_slope: float
    predicted_slope: float

    def to_json(self) -> dict:
        return {
            "p": self.decay_exp,
            "ell": self.moment_order,
            "dim": self.dim,
            "schedule": self.schedule,
            "far_radius": self.far_radius,
            "fitted_slope": self.fitted_slope,
            "predicted_slope": self.predicted_slope,
            "steps": [
                {
                    "eps": s.eps,
                    "eigenvalues": s.eigenvalues,
                    "n_star": s.n_star,
                    "bump_center_radius": s.bump_center_radius,
                    "bump_radius": s.bump_radius,
                    "value": s.value,
                    "error_estimate": s.error_estimate,
                    "converged": s.converged,
                    "predicted": s.predicted,
                    "floor": s.floor,
                }
                for s in self.steps
            ],
        }


def schedule_eigenvalues(kind: str, eps: float, dim: int) -> list:
    if kind == "balanced":
        return [eps] * dim
    if kind == "unbalanced":
        return [eps**i for i in range(1, dim + 1)]
    raise InputError(f"unknown schedule kind {kind!r}")


def blowup_sweep(
    kernel: SpikeTrainKernel,
    schedule_kind: str,
    eps_values,
    far_radius: float = 1.05,
    rel_tol: float = 1e-9,
    abs_tol: float = 1e-13,
    threads: int = 1,
) -> BlowupRun:
    """Sweep shrinking bandwidth schedules and fit the growth rate.

    Every step builds its own spike-aligned witness, computes the
    convolution at the origin, checks it against the directly computable
    floor, and the run fits log(value) against log(eps).  Steps whose
    quadrature did not converge are excluded; more than 20% exclusions
    aborts the run instead of reporting a slope.
    """
    p = kernel.params
    eps_values = [float(e) for e in eps_values]
    if len(eps_values) < 2:
        raise InputError("need at least two epsilon values")
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise InputError("epsilon schedule must be strictly decreasing")
    if any(e <= 0 or e >= 1 for e in eps_values):
        raise InputError("epsilon values must lie in (0, 1)")

    def one_step(eps: float) -> BlowupStep:
        eigs = schedule_eigenvalues(schedule_kind, eps, p.dim)
        h = diagonal(eigs)
        witness, n_star = spike_aligned_witness(kernel, h, far_radius=far_radius)
        res = convolve_witness_at_zero(
            kernel, h, witness, n_star, rel_tol=rel_tol, abs_tol=abs_tol
        )
        floor = witness_floor(kernel, h, witness, n_star)
        if res.value < floor * (1.0 - 1e-9):
            raise NumericalError(
                f"sweep step eps={eps}: value {res.value!r} below the "
                f"computable floor {floor!r}"
            )
        return BlowupStep(
            eps=eps,
            eigenvalues=[float(v) for v in h.eigenvalues],
            n_star=n_star,
            bump_center_radius=float(witness.far_radius + witness.bump_radius),
            bump_radius=float(witness.bump_radius),
            value=res.value,
            error_estimate=res.error_estimate,
            converged=res.converged,
            predicted=predicted_rate(h.eigenvalues, p.decay_exp),
            floor=floor,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            steps = list(pool.map(one_step, eps_values))
    else:
        steps = [one_step(e) for e in eps_values]

    kept = [s for s in steps if s.converged]
    if len(steps) - len(kept) > MAX_EXCLUDED_FRACTION * len(steps):
        raise NumericalError(
            f"{len(steps) - len(kept)} of {len(steps)} sweep steps failed to "
            "converge; refusing to fit a slope"
        )
    if len(kept) < 2:
        raise NumericalError("not enough converged sweep steps to fit a slope")
    fitted, _ = fit_loglog([s.eps for s in kept], [s.value for s in kept])
    predicted, _ = fit_loglog([s.eps for s in kept], [s.predicted for s in kept])
    return BlowupRun(
        decay_exp=p.decay_exp,
        moment_order=p.moment_order,
        dim=p.dim,
        schedule=schedule_kind,
        far_radius=far_radius,
        steps=steps,
        fitted_slope=fitted,
        predicted_slope=predicted,
    )


@dataclass
class MomentRow:
    j: int
    value: float
    converged: bool


def moment_finiteness_report(kernel: SpikeTrainKernel, j_max: int) -> list:
    """Radial moments j = 0..j_max with a two-stage truncation-doubling check
    (n_max against 2 n_max and 4 n_max)."""
    p = kernel.params
    if j_max > p.moment_order:
        raise InputError(
            f"j_max {j_max} exceeds the guaranteed moment order {p.moment_order}"
        )
    rows = []
    for j in range(j_max + 1):
        base = kernel.moment(j)  # already compares n_max vs 2 n_max
        v2 = kernel.moment(j, n_max=2 * p.n_max)
        ok = base.converged and v2.converged
        rows.append(MomentRow(j, base.value, bool(ok)))
    return rows
