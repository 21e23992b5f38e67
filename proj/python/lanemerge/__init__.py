"""Python access to the lane-merge coordination core."""

from __future__ import annotations

import json
from os import PathLike
from typing import Any

from . import _core
from ._core import (
    CheckpointError,
    ConfigError,
    InvariantError,
    QNetwork,
    WireError,
    advance,
    ecdf,
    percentile,
    roundtrip_envelope,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "InvariantError",
    "QNetwork",
    "WireError",
    "advance",
    "ecdf",
    "extrapolate",
    "percentile",
    "roundtrip_envelope",
    "run_stack",
    "summarize_logs",
    "synthetic_instances",
    "train",
]


def extrapolate(rud: dict[str, Any], t_ref: int) -> dict[str, Any]:
    """RUD moved to ``t_ref`` under uniformly accelerated motion."""
    return json.loads(_core.extrapolate_json(json.dumps(rud), t_ref))


def synthetic_instances(seed: int, count: int) -> list[dict[str, Any]]:
    return [json.loads(line) for line in _core.synthetic_instances(seed, count)]


def summarize_logs(path: str | PathLike[str]) -> dict[str, Any]:
    return json.loads(_core.summarize_logs(path))


def train(variant: str = "dueling", steps: int = 5000, seed: int = 1, instances: int = 50,
          data_seed: int = 11, out: str | PathLike[str] | None = None) -> dict[str, Any]:
    """Trains on synthetic instances; the result holds counters and the network."""
    return _core.train(variant, steps, seed, instances, data_seed, out)


def run_stack(config: str, model: str | PathLike[str], out: str | PathLike[str]) -> tuple[int, dict[str, Any]]:
    """In-process stack run. ``config`` is flat ``key = value`` text."""
    code, summary = _core.run_stack(config, model, out)
    return code, json.loads(summary) if summary else {}
