"""Request and response models shared by the HTTP service and the CLI client."""

from __future__ import annotations

from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class Request(BaseModel):
    model_config = ConfigDict(extra="forbid")


# an environment is a preset name or an EnvConfig mapping (may carry "preset" and "map")
EnvSpec = Union[str, dict]


class TrainRequest(Request):
    config: dict
    base_dir: Optional[str] = None  # resolves relative env.map_file paths
    seeds: Optional[list[int]] = None
    out: Optional[str] = None
    parallel: Optional[int] = Field(default=None, ge=1)


class EvalRequest(Request):
    agents: list[str]  # checkpoint paths or scripted kinds
    env: EnvSpec = "default"
    episodes: int = Field(default=100, ge=1)
    seed: int = 0
    out: str


class ReplayRequest(Request):
    log: str
    out: str
    upscale: int = Field(default=1, ge=1)


class DreamRequest(Request):
    checkpoint: str
    delta_t: int = Field(default=15, ge=0)
    out: str
    log: Optional[str] = None
    env: Optional[EnvSpec] = None
    context_length: int = Field(default=5, ge=1)
    seed: int = 0
    agent_index: int = 0


class ProjectRequest(Request):
    checkpoint: str
    env: EnvSpec
    episodes: int = Field(default=2, ge=1)
    out: str
    method: Literal["tsne", "pca"] = "tsne"
    seed: int = 0
    perplexity: float = Field(default=30.0, gt=0)
    iterations: int = Field(default=1000, ge=1)
    agent_index: int = 0


class BaselineRequest(Request):
    env: EnvSpec = "default"
    episodes: int = Field(default=100, ge=1)
    seed: int = 0
    out: Optional[str] = None


class CommandResult(BaseModel):
    command: str
    result: dict[str, Any]


class ErrorBody(BaseModel):
    kind: Literal["config", "integrity", "usage", "checkpoint"]
    detail: str
