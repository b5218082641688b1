"""FastAPI application exposing the laboratory commands.

Error contract: malformed requests answer 400/422 with
``{"error_kind": "input"}``; computations that cannot meet their accuracy
contract answer 500 with ``{"error_kind": "numerical"}``.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import InputError, NumericalError
from ..reporting import FORMAT_VERSION
from . import models, runners


def create_app() -> FastAPI:
    app = FastAPI(
        title="kdelab",
        description="Kernel density estimation bias laboratory",
        version="0.1.0",
    )

    @app.exception_handler(InputError)
    async def _input_error(_: Request, exc: InputError):
        return JSONResponse(
            status_code=400,
            content={"error_kind": "input", "detail": str(exc)},
        )

    @app.exception_handler(NumericalError)
    async def _numerical_error(_: Request, exc: NumericalError):
        return JSONResponse(
            status_code=500,
            content={"error_kind": "numerical", "detail": str(exc)},
        )

    @app.get("/v1/health", response_model=models.HealthResponse)
    def health():
        return models.HealthResponse(status="ok", format_version=FORMAT_VERSION)

    @app.post("/v1/kernel-info", response_model=models.KernelInfoResponse)
    def kernel_info(req: models.KernelInfoRequest):
        return runners.run_kernel_info(req)

    @app.post("/v1/estimate", response_model=models.EstimateResponse)
    def estimate(req: models.EstimateRequest):
        return runners.run_estimate(req)

    @app.post("/v1/bias-report", response_model=models.BiasReportResponse)
    def bias_report(req: models.BiasReportRequest):
        return runners.run_bias_report(req)

    @app.post("/v1/bias-scaling", response_model=models.BiasScalingResponse)
    def bias_scaling(req: models.BiasScalingRequest):
        return runners.run_bias_scaling(req)

    @app.post("/v1/mse-scaling", response_model=models.MseScalingResponse)
    def mse_scaling(req: models.MseScalingRequest):
        return runners.run_mse_scaling(req)

    @app.post("/v1/blowup-demo", response_model=models.BlowupResponse)
    def blowup_demo(req: models.BlowupRequest):
        return runners.run_blowup(req)

    @app.post("/v1/moments", response_model=models.MomentsResponse)
    def moments(req: models.MomentsRequest):
        return runners.run_moments(req)

    return app


app = create_app()
