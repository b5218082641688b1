"""Command implementations behind the service endpoints.

Each runner turns a validated request into a response model.  They are
plain functions, so the CLI can call them in-process through the HTTP layer
while tests can exercise them directly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import bias_analysis, blowup, quadrature
from ..bandwidth import make_bandwidth
from ..densities import density_from_json
from ..errors import InputError, KdelabError
from ..estimator import SampleSet, kde_estimate
from ..kernels import SpikeTrainKernel, SpikeTrainParams, kernel_from_json, verify_order
from ..reporting import FORMAT_VERSION
from . import models


def _config_echo(req) -> dict:
    # threads is an execution resource, not part of what is computed; leaving
    # it out keeps outputs byte-identical across worker counts
    out = req.model_dump(mode="json")
    out.pop("threads", None)
    return out


def _kernel(spec: models.KernelSpec):
    return kernel_from_json(spec.model_dump())


def _density(spec: models.DensitySpec):
    return density_from_json(spec.to_core_json())


def run_kernel_info(req: models.KernelInfoRequest) -> models.KernelInfoResponse:
    kernel = _kernel(req.kernel)
    moments = []
    for j in range(req.j_max + 1):
        res = kernel.moment(j)
        moments.append(models.MomentEntry(j=j, value=res.value, converged=res.converged))
    radii = req.envelope_radii
    if radii is None:
        top = kernel.support_radius
        if not math.isfinite(top):
            top = 10.0
        radii = list(np.linspace(0.0, top, 100))
    envelope = [
        models.EnvelopeSample(r=float(r), psi=kernel.decay_envelope(float(r)))
        for r in radii
    ]
    order_model = None
    if req.verify_order_v is not None:
        rep = verify_order(kernel, req.verify_order_v)
        order_model = models.OrderReportModel(
            order=rep.order,
            unit_mass=rep.unit_mass,
            unit_mass_ok=rep.unit_mass_ok,
            checks=[
                models.OrderCheckEntry(
                    alpha=list(c.alpha), value=c.value, passed=c.passed
                )
                for c in rep.checks
            ],
            verified=rep.verified,
        )
    resolved = req.kernel.model_copy(update={"params": kernel.params_json()})
    return models.KernelInfoResponse(
        format_version=FORMAT_VERSION,
        config=_config_echo(req),
        kernel=resolved,
        moments=moments,
        envelope=envelope,
        order_report=order_model,
    )


def run_estimate(req: models.EstimateRequest) -> models.EstimateResponse:
    kernel = _kernel(req.kernel)
    h = make_bandwidth(req.bandwidth)
    samples = SampleSet.from_array(np.asarray(req.samples, dtype=float))
    queries = np.asarray(req.queries, dtype=float)
    values = kde_estimate(samples, kernel, h, queries, threads=req.threads)
    return models.EstimateResponse(
        format_version=FORMAT_VERSION,
        config=_config_echo(req),
        values=[float(v) for v in values],
    )


def run_bias_report(req: models.BiasReportRequest) -> models.BiasReportResponse:
    kernel = _kernel(req.kernel)
    model = _density(req.density)
    matrices = [make_bandwidth(m) for m in req.bandwidths]
    cells = [(h, tuple(q)) for h in matrices for q in req.queries]

    def one(cell):
        h, query = cell
        try:
            rep = bias_analysis.bias_report(
                kernel,
                h,
                model,
                np.asarray(query, dtype=float),
                k=req.k,
                delta=req.delta,
                rel_tol=req.quad.rel_tol,
                abs_tol=req.quad.abs_tol,
                max_depth=req.quad.max_depth,
            )
        except KdelabError as exc:
            raise type(exc)(
                f"cell h_norm={h.op_norm!r} x={list(query)}: {exc}"
            ) from exc
        if rep.bound_times_hk > 0.0:
            margin = abs(rep.empirical_remainder) / rep.bound_times_hk
        else:
            # degenerate bound (flat density far from mass); keep it finite
            margin = 0.0 if rep.empirical_remainder == 0.0 else 1e300
        return models.BiasReportRow(**rep.to_json(), margin_ratio=margin)

    if req.threads > 1:
        with ThreadPoolExecutor(max_workers=req.threads) as pool:
            rows = list(pool.map(one, cells))
    else:
        rows = [one(c) for c in cells]
    return models.BiasReportResponse(
        format_version=FORMAT_VERSION,
        config=_config_echo(req),
        reports=rows,
        all_bounds_satisfied=all(r.bound_satisfied for r in rows),
    )


def run_bias_scaling(req: models.BiasScalingRequest) -> models.BiasScalingResponse:
    kernel = _kernel(req.kernel)
    model = _density(req.density)
    per_query = []
    for q in req.queries:
        study = bias_analysis.bias_scaling_study(
            kernel,
            model,
            np.asarray(q, dtype=float),
            req.h_values,
            rel_tol=req.quad.rel_tol,
            abs_tol=req.quad.abs_tol,
            max_depth=req.quad.max_depth,
            threads=req.threads,
        )
        per_query.append(
            models.BiasScalingPerQuery(
                x_query=[float(v) for v in q],
                slope=study.slope,
                intercept=study.intercept,
                points=[
                    models.ScalingPointRow(
                        h_value=p.h_value, bias=p.bias, included=p.included
                    )
                    for p in study.points
                ],
            )
        )
    return models.BiasScalingResponse(
        format_version=FORMAT_VERSION,
        config=_config_echo(req),
        per_query=per_query,
    )


def run_mse_scaling(req: models.MseScalingRequest) -> models.MseScalingResponse:
    kernel = _kernel(req.kernel)
    model = _density(req.density)
    study = bias_analysis.mse_study(
        kernel,
        model,
        np.asarray(req.query, dtype=float),
        req.n_values,
        replicates=req.replicates,
        seed=req.seed,
        bandwidth_constant=req.bandwidth_constant,
        threads=req.threads,
    )
    return models.MseScalingResponse(
        format_version=FORMAT_VERSION,
        config=_config_echo(req),
        slope=study.slope,
        intercept=study.intercept,
        points=[
            models.MsePointRow(n=p.n, mse=p.mse, mean_h=p.mean_h) for p in study.points
        ],
    )


def run_blowup(req: models.BlowupRequest) -> models.BlowupResponse:
    kernel = SpikeTrainKernel(
        SpikeTrainParams(req.p, req.ell, req.dim, req.n_max)
    ).normalized()
    eps_values = [req.eps_start * req.eps_ratio**i for i in range(req.eps_steps)]
    run = blowup.blowup_sweep(
        kernel,
        req.schedule,
        eps_values,
        far_radius=req.far_radius,
        rel_tol=req.quad.rel_tol if req.quad.rel_tol is not None else 1e-9,
        abs_tol=req.quad.abs_tol if req.quad.abs_tol is not None else 1e-13,
        threads=req.threads,
    )
    return models.BlowupResponse(
        format_version=FORMAT_VERSION,
        config=_config_echo(req),
        fitted_slope=run.fitted_slope,
        predicted_slope=run.predicted_slope,
        normalization_c=kernel.params.c,
        steps=[
            models.BlowupStepRow(
                eps=s.eps,
                eigenvalues=s.eigenvalues,
                n_star=s.n_star,
                bump_center_radius=s.bump_center_radius,
                bump_radius=s.bump_radius,
                value=s.value,
                error_estimate=s.error_estimate,
                converged=s.converged,
                predicted=s.predicted,
                floor=s.floor,
            )
            for s in run.steps
        ],
    )


def run_moments(req: models.MomentsRequest) -> models.MomentsResponse:
    kernel = SpikeTrainKernel(
        SpikeTrainParams(req.p, req.ell, req.dim, req.n_max)
    ).normalized()
    j_max = req.ell if req.j_max is None else req.j_max
    if j_max > req.ell:
        raise InputError(
            f"j_max {j_max} exceeds the guaranteed moment order ell={req.ell}"
        )
    rows = blowup.moment_finiteness_report(kernel, j_max)
    return models.MomentsResponse(
        format_version=FORMAT_VERSION,
        config=_config_echo(req),
        normalization_c=kernel.params.c,
        rows=[
            models.MomentEntry(j=r.j, value=r.value, converged=r.converged)
            for r in rows
        ],
    )
