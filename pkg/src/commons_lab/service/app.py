"""FastAPI app wrapping the harness commands.

Handlers are plain functions so the CLI can call them in-process with the
same request models it would POST to a running server.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from commons_lab import __version__
from commons_lab.errors import ConfigError, IncompatibleCheckpointError, IntegrityError, UsageError
from commons_lab.harness import commands
from commons_lab.harness.config import ExperimentConfig, parse_env
from commons_lab.harness.runner import cmd_train
from commons_lab.service.schemas import (BaselineRequest, CommandResult, DreamRequest, ErrorBody, EvalRequest,
                                         ProjectRequest, ReplayRequest, TrainRequest)

ERROR_STATUS = {"config": 422, "usage": 400, "checkpoint": 409, "integrity": 409}


def error_kind(exc: Exception) -> str:
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, IntegrityError):
        return "integrity"
    if isinstance(exc, IncompatibleCheckpointError):
        return "checkpoint"
    return "usage"


def handle_train(req: TrainRequest) -> CommandResult:
    cfg = ExperimentConfig.from_dict(req.config, base_dir=Path(req.base_dir) if req.base_dir else None)
    return CommandResult(command="train", result=cmd_train(cfg, req.out, req.seeds, req.parallel))


def handle_eval(req: EvalRequest) -> CommandResult:
    res = commands.cmd_eval(req.agents, parse_env(req.env), req.episodes, req.seed, req.out)
    return CommandResult(command="eval", result=res)


def handle_replay(req: ReplayRequest) -> CommandResult:
    return CommandResult(command="replay", result=commands.cmd_replay(req.log, req.out, req.upscale))


def handle_dream(req: DreamRequest) -> CommandResult:
    env = parse_env(req.env) if req.env is not None else None
    res = commands.cmd_dream(req.checkpoint, req.delta_t, req.out, log_path=req.log, env=env,
                             context_length=req.context_length, seed=req.seed, agent_index=req.agent_index)
    return CommandResult(command="dream", result=res)


def handle_project(req: ProjectRequest) -> CommandResult:
    res = commands.cmd_project(req.checkpoint, parse_env(req.env), req.episodes, req.out, req.method, req.seed,
                               req.perplexity, req.iterations, req.agent_index)
    return CommandResult(command="project", result=res)


def handle_baseline(req: BaselineRequest) -> CommandResult:
    return CommandResult(command="baseline", result=commands.cmd_baseline(parse_env(req.env), req.episodes,
                                                                          req.seed, req.out))


HANDLERS = {"train": (TrainRequest, handle_train), "eval": (EvalRequest, handle_eval),
            "replay": (ReplayRequest, handle_replay), "dream": (DreamRequest, handle_dream),
            "project": (ProjectRequest, handle_project), "baseline": (BaselineRequest, handle_baseline)}

app = FastAPI(title="commons-lab", version=__version__)


@app.exception_handler(ConfigError)
@app.exception_handler(IntegrityError)
@app.exception_handler(UsageError)
@app.exception_handler(IncompatibleCheckpointError)
async def lab_error(request: Request, exc: Exception):
    kind = error_kind(exc)
    return JSONResponse(status_code=ERROR_STATUS[kind], content=ErrorBody(kind=kind, detail=str(exc)).model_dump())


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/train", response_model=CommandResult)
def train(req: TrainRequest):
    return handle_train(req)


@app.post("/eval", response_model=CommandResult)
def evaluate(req: EvalRequest):
    return handle_eval(req)


@app.post("/replay", response_model=CommandResult)
def replay(req: ReplayRequest):
    return handle_replay(req)


@app.post("/dream", response_model=CommandResult)
def dream(req: DreamRequest):
    return handle_dream(req)


@app.post("/project", response_model=CommandResult)
def project(req: ProjectRequest):
    return handle_project(req)


@app.post("/baseline", response_model=CommandResult)
def baseline(req: BaselineRequest):
    return handle_baseline(req)
