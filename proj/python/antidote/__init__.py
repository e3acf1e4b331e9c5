"""Python front end for the antidote pipeline core.

Thin wrappers over the native ``_antidote`` module. Structured results come
back as plain dicts and lists.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Mapping, Optional, Sequence

from . import _antidote as _core
from ._antidote import (  # noqa: F401
    AntidoteError,
    BackendError,
    ConfigError,
    ContractError,
    DataError,
    Diverged,
    EmptyInput,
    IncompatibleSignatures,
    InsufficientData,
    InvalidToken,
    ParseError,
    StageOrderError,
    jaccard_estimate,
    minhash_signature,
    neg_log_sigmoid,
    shingles,
    stage_names,
)

ROLES = ("textgen", "imagegen", "detect", "embed", "judge")

__all__ = [
    "ROLES",
    "compute_metrics",
    "conformance",
    "deduplicate",
    "dpo_loss",
    "jaccard_estimate",
    "load_config",
    "manifest_digest",
    "minhash_signature",
    "neg_log_sigmoid",
    "reward_margin",
    "run_all",
    "run_stage",
    "shingles",
    "stage_names",
    "stub_embed",
    "train_toy",
]


def deduplicate(captions: Iterable[Mapping], bands: int = 32, rows_per_band: int = 4,
                threshold: float = 0.8, seed: int = 0) -> dict:
    """Near-duplicate clustering of ``{"id", "text"}`` records."""
    return json.loads(_core._deduplicate(json.dumps(list(captions)), bands, rows_per_band, threshold, seed))


def dpo_loss(records: Sequence[Mapping], beta: float = 0.1) -> float:
    return _core._dpo_loss(json.dumps(list(records)), beta)


def reward_margin(record: Mapping, beta: float = 0.1) -> float:
    return _core._reward_margin(json.dumps(record), beta)


def train_toy(pairs: Sequence[Mapping], vocab_size: int, max_len: int, beta: float = 0.1,
              learning_rate: float = 0.5, steps: int = 200, seed: int = 0) -> dict:
    """Trains the toy policy on ``{"chosen": [...], "rejected": [...]}`` token pairs."""
    return json.loads(_core._train_toy(json.dumps(list(pairs)), vocab_size, max_len, beta,
                                       learning_rate, steps, seed))


def compute_metrics(verdicts: Sequence[Mapping], labels: Mapping[str, str]) -> dict:
    return json.loads(_core._compute_metrics(json.dumps(list(verdicts)), json.dumps(dict(labels))))


def conformance(role: str, url: str = "stub://synthetic") -> dict:
    """Runs the wire-contract probes for one role against a backend URL."""
    return json.loads(_core._conformance(role, url))


def stub_embed(text: str) -> list:
    return _core._stub_embed(text)


def load_config(path: os.PathLike | str) -> dict:
    return json.loads(_core._load_config(os.fspath(path)))


def run_stage(stage: str, config: os.PathLike | str, workdir: Optional[os.PathLike | str] = None,
              seed: Optional[int] = None, force: bool = False) -> dict:
    wd = os.fspath(workdir) if workdir is not None else None
    return json.loads(_core._run_stage(stage, os.fspath(config), wd, seed, force))


def run_all(config: os.PathLike | str, workdir: Optional[os.PathLike | str] = None,
            seed: Optional[int] = None, force: bool = False) -> list:
    return [run_stage(s, config, workdir, seed, force) for s in stage_names()]


def manifest_digest(config: os.PathLike | str, workdir: Optional[os.PathLike | str] = None) -> str:
    wd = os.fspath(workdir) if workdir is not None else None
    return _core._manifest_digest(os.fspath(config), wd)
