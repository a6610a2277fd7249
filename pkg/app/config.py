"""
Configuration and logging setup
Environment-driven service settings plus the declarative experiment config
"""

import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.errors import ConfigError

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
FAMILIES = ("BM", "TCT", "FUS")
_METRIC_PATTERN = re.compile(r"^(RR|AP|NDCG)@([1-9][0-9]*)$")

_logging_configured = False


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stream handler on the root logger (idempotent)."""
    global _logging_configured

    level_name = (level or ServiceSettings.from_env().log_level).upper()
    root = logging.getLogger()
    root.setLevel(level_name)
    if _logging_configured:
        return

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    _logging_configured = True


def _env_path(key: str) -> Optional[Path]:
    value = os.getenv(key)
    return Path(value) if value else None


def _env_list(key: str) -> Optional[List[str]]:
    value = os.getenv(key)
    if not value:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


class ServiceSettings(BaseModel):
    """Paths and toggles the HTTP service reads from the environment."""

    collection_path: Optional[Path] = None
    index_path: Optional[Path] = None
    qrels_path: Optional[Path] = None
    topics_path: Optional[Path] = None
    log_level: str = "INFO"
    allowed_origins: Optional[List[str]] = None
    enabled_services: Optional[List[str]] = None

    @classmethod
    def from_env(cls) -> "ServiceSettings":
        return cls(
            collection_path=_env_path("SENSITIVITY_COLLECTION_PATH"),
            index_path=_env_path("SENSITIVITY_INDEX_PATH"),
            qrels_path=_env_path("SENSITIVITY_QRELS_PATH"),
            topics_path=_env_path("SENSITIVITY_TOPICS_PATH"),
            log_level=os.getenv("SENSITIVITY_LOG_LEVEL") or "INFO",
            allowed_origins=_env_list("ALLOWED_ORIGINS"),
            enabled_services=_env_list("ENABLED_SERVICES"),
        )


class ExperimentConfig(BaseModel):
    """
    Declarative description of one sensitivity sweep.

    Depth defaults follow the evaluation setup: runs truncated to 10, metrics
    at cutoff 10, seed and fused rankings to depth 100, d swept over 0..20.
    """

    model_config = ConfigDict(extra="forbid")

    collection: Path
    gold_qrels: Path
    runs_dir: Path
    topics: Optional[Path] = None
    external_first_stage: Optional[Path] = None
    external_second_stage: Optional[Path] = None
    output_dir: Optional[Path] = None

    metrics: List[str] = Field(default_factory=lambda: ["RR@10", "AP@10", "NDCG@10"])
    d_max: int = Field(20, ge=0)
    families: List[Literal["BM", "TCT", "FUS"]] = Field(default_factory=lambda: ["BM", "FUS"])

    rbc_phi: float = Field(0.98, ge=0.0, lt=1.0)
    run_depth: int = Field(10, gt=0)
    seed_depth: int = Field(100, gt=0)
    fused_depth: int = Field(100, gt=0)
    rerun_depth: int = Field(100, gt=0)
    fan_out: int = Field(5, gt=0)
    exclude_gold_from_fanout: bool = False

    rng_seed: int = 0
    k1: float = Field(0.9, ge=0.0)
    b: float = Field(0.4, ge=0.0, le=1.0)
    stem: bool = True
    max_query_terms: Optional[int] = Field(None, gt=0)

    allow_partial: bool = False
    lenient_qrels: bool = False
    symmetric_tau: bool = False
    workers: int = Field(1, gt=0)
    keep_tables: bool = False
    progress: bool = False

    @field_validator("metrics")
    @classmethod
    def _check_metrics(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one metric is required")
        for label in value:
            if not _METRIC_PATTERN.match(label):
                raise ValueError(f"metric {label!r} is not of the form RR@k, AP@k or NDCG@k")
        return value

    @model_validator(mode="after")
    def _check_depths(self) -> "ExperimentConfig":
        if not self.families:
            raise ValueError("nothing to sweep: no families selected")
        if self.fused_depth < self.d_max:
            raise ValueError(f"fused_depth ({self.fused_depth}) must be >= d_max ({self.d_max})")
        if self.seed_depth < self.d_max:
            raise ValueError(f"seed_depth ({self.seed_depth}) must be >= d_max ({self.d_max})")
        if "TCT" in self.families and self.external_first_stage is None:
            raise ValueError("family TCT requires external_first_stage")
        return self


def validation_message(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        where = ".".join(str(item) for item in error.get("loc", ())) or "config"
        parts.append(f"{where}: {error.get('msg')}")
    return "; ".join(parts)


def build_experiment_config(data: Mapping[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(dict(data))
    except ValidationError as exc:
        raise ConfigError(f"invalid experiment config: {validation_message(exc)}") from exc


def load_experiment_config(
    path: Optional[Path], overrides: Optional[Mapping[str, Any]] = None
) -> ExperimentConfig:
    """Read a JSON experiment file and apply non-None flag overrides on top."""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")

        # relative paths in the file resolve against the file's directory
        base = Path(path).resolve().parent
        for key in (
            "collection",
            "gold_qrels",
            "runs_dir",
            "topics",
            "external_first_stage",
            "external_second_stage",
            "output_dir",
        ):
            if isinstance(data.get(key), str) and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    return build_experiment_config(data)
