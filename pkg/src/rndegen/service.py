"""FastAPI service wrapping the computation runners.

Every command is a POST endpoint taking the scenario JSON plus options and
returning the deterministic report; the CLI is a thin client of this app
(in-process by default, over the network when pointed at a server).
Run standalone with: uvicorn rndegen.service:app
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .degeneration import DegenerationError
from .jump import ConvergenceError
from .runners import RunnerError, run
from .scenario import ScenarioError

app = FastAPI(title="rn-degen", version=__version__,
              description="Real-normalized differentials on plumbed curves: "
                          "Kirchhoff limits, jump problems, degeneration of zeroes.")


class CommandRequest(BaseModel):
    scenario: dict[str, Any]
    options: dict[str, Any] = Field(default_factory=dict)


class CheckModel(BaseModel):
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None


class ReportResponse(BaseModel):
    command: str
    scenario: str
    settings_hash: str
    options: dict[str, Any]
    passed: bool
    checks: list[CheckModel]
    results: dict[str, Any]
    tables: dict[str, Any]
    timings: dict[str, Any] | None = None


class HealthResponse(BaseModel):
    status: str
    version: str


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


def _execute(command: str, req: CommandRequest) -> ReportResponse:
    try:
        report = run(command, req.scenario, req.options)
    except ScenarioError as exc:
        raise HTTPException(status_code=422,
                            detail={"errors": exc.errors}) from exc
    except (RunnerError, DegenerationError, ConvergenceError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return ReportResponse(**report.as_dict())


@app.post("/solve-kirchhoff", response_model=ReportResponse)
def solve_kirchhoff(req: CommandRequest) -> ReportResponse:
    return _execute("solve-kirchhoff", req)


@app.post("/multiscale-limit", response_model=ReportResponse)
def multiscale_limit(req: CommandRequest) -> ReportResponse:
    return _execute("multiscale-limit", req)


@app.post("/construct-rn", response_model=ReportResponse)
def construct_rn(req: CommandRequest) -> ReportResponse:
    return _execute("construct-rn", req)


@app.post("/degenerate", response_model=ReportResponse)
def degenerate(req: CommandRequest) -> ReportResponse:
    return _execute("degenerate", req)


@app.post("/stratify", response_model=ReportResponse)
def stratify(req: CommandRequest) -> ReportResponse:
    return _execute("stratify", req)


@app.post("/track-zeros", response_model=ReportResponse)
def track_zeros(req: CommandRequest) -> ReportResponse:
    return _execute("track-zeros", req)


@app.post("/verify", response_model=ReportResponse)
def verify(req: CommandRequest) -> ReportResponse:
    return _execute("verify", req)
