"""HTTP service wrapping the numerical core: pydantic request/response
models, runner functions, and the FastAPI application."""

from .app import create_app

__all__ = ["create_app"]
