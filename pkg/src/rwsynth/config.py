"""Run configuration: one nested document (JSON or YAML) plus ``--set`` overrides."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .data_model import NEGATIVE_CENTER_POLICIES, Schema
from .risk import SINGLETON_POLICIES
from .samplers import MixtureConfig, NBConfig
from .utility import parse_statistic

OUTPUT_ENV = "RWSYNTH_OUTPUT_DIR"
DEFAULT_OUTPUT = "rwsynth-out"


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field path."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BallSection(_Section):
    r: float = 0.2
    negative_center_policy: Literal[NEGATIVE_CENTER_POLICIES] = "absolute_radius"  # type: ignore[valid-type]
    zero_center_epsilon: float = Field(0.0, ge=0.0)

    @field_validator("r")
    @classmethod
    def _r(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError("must lie in (0, 1)")
        return v


class RiskSection(_Section):
    singleton_policy: Literal[SINGLETON_POLICIES] = "error"  # type: ignore[valid-type]
    n_jobs: int = Field(1, ge=1)


class WeightSection(_Section):
    scheme: Literal["unit", "marginal", "pairwise"] = "marginal"
    c: float = Field(1.0, ge=0.0)
    g: float = 0.0
    floor: float = Field(0.0, ge=0.0, lt=1.0)


class MixtureSection(_Section):
    K: int = Field(10, ge=1)
    a_gamma: float = Field(1.0, gt=0)
    b_gamma: float = Field(1.0, gt=0)
    beta_prior_scale: float = Field(10.0, gt=0)
    sigma_prior_df: float = Field(3.0, gt=0)
    sigma_prior_scale: float = Field(1.0, gt=0)
    iterations: int = Field(4000, ge=1)
    burn_in: int = Field(2000, ge=0)
    thin: int = Field(2, ge=1)
    chains: int = Field(2, ge=1)
    fixed_sigma: Optional[float] = Field(None, gt=0)
    sigma_step: float = Field(0.1, gt=0)
    gamma_step: float = Field(0.5, gt=0)
    target_accept: float = Field(0.4, gt=0, lt=1)
    n_jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _burn(self):
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        return self


class NBSection(_Section):
    log_mu_prior_mean: float = 0.0
    log_mu_prior_sd: float = Field(5.0, gt=0)
    log_phi_prior_mean: float = 0.0
    log_phi_prior_sd: float = Field(5.0, gt=0)
    step_log_mu: float = Field(0.05, gt=0)
    step_log_phi: float = Field(0.2, gt=0)
    adapt: bool = True
    target_accept: float = Field(0.3, gt=0, lt=1)
    iterations: int = Field(4000, ge=1)
    burn_in: int = Field(2000, ge=0)
    thin: int = Field(2, ge=1)
    chains: int = Field(2, ge=1)

    @model_validator(mode="after")
    def _burn(self):
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        return self


class SynthSection(_Section):
    family: Literal["mixture", "negative_binomial"] = "mixture"
    predictors: list[str] = Field(default_factory=list)
    model_on_log: bool = False
    mixture: MixtureSection = Field(default_factory=MixtureSection)
    negative_binomial: NBSection = Field(default_factory=NBSection)

    @model_validator(mode="after")
    def _family(self):
        if self.family == "negative_binomial" and self.predictors:
            raise ValueError("predictors are not used by the negative_binomial family")
        if self.family == "negative_binomial" and self.model_on_log:
            raise ValueError("model_on_log applies to the mixture family only")
        return self


class RegressionSection(_Section):
    predictors: list[str]
    target: tuple[str, str]


class EvaluateSection(_Section):
    statistics: list[str] = Field(default_factory=lambda: ["mean", "median", "quantile(0.9)"])
    B: int = Field(1000, ge=200)
    level: float = Field(0.95, gt=0, lt=1)
    regression: Optional[RegressionSection] = None
    topcode_quantile: Optional[float] = Field(None, gt=0, lt=1)
    whack_a_mole_threshold: float = Field(0.25, gt=0)
    baseline: Optional[str] = None

    @field_validator("statistics")
    @classmethod
    def _stats(cls, v):
        for s in v:
            parse_statistic(s)
        return v


class RunConfig(_Section):
    input: str
    schema_: Union[str, dict] = Field(alias="schema")
    pattern_vars: list[str] = Field(min_length=1)
    delimiter: str = ","
    ball: BallSection = Field(default_factory=BallSection)
    risk: RiskSection = Field(default_factory=RiskSection)
    weights: WeightSection = Field(default_factory=WeightSection)
    synthesizer: SynthSection = Field(default_factory=SynthSection)
    L: int = Field(20, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str
    risk_ceiling: Optional[float] = Field(None, ge=0, le=1)
    evaluate: EvaluateSection = Field(default_factory=EvaluateSection)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    def load_schema(self) -> Schema:
        doc = self.schema_
        if isinstance(doc, str):
            doc = json.loads(Path(doc).read_text())
        return Schema.from_dict(doc)

    def mixture_config(self) -> MixtureConfig:
        return MixtureConfig(**self.synthesizer.mixture.model_dump(), seed=self.seed)

    def nb_config(self) -> NBConfig:
        return NBConfig(**self.synthesizer.negative_binomial.model_dump(), seed=self.seed)

    def to_dict(self) -> dict:
        """Every effective value, defaults included."""
        return self.model_dump(mode="json", by_alias=True)


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        msg = e["msg"].removeprefix("Value error, ")
        lines.append(f"{path}: {msg}")
    return "; ".join(lines)


def read_document(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: not a valid configuration document: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars/lists."""
    doc = json.loads(json.dumps(doc))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key.path=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"{key}: {p!r} is not a section")
            node = nxt
        node[parts[-1]] = yaml.safe_load(raw)
    return doc


def _resolve(base: Path | None, p: str) -> str:
    q = Path(p)
    return str(q if q.is_absolute() or base is None else (base / q))


def build_config(doc: dict, base_dir=None, output_dir=None) -> RunConfig:
    """Validate ``doc``; relative paths resolve against ``base_dir``.

    The output directory comes from ``output_dir``, else the document, else
    the ``RWSYNTH_OUTPUT_DIR`` environment variable, else ``rwsynth-out``.
    """
    doc = dict(doc)
    base = Path(base_dir) if base_dir is not None else None
    if output_dir is not None:
        doc["output_dir"] = str(output_dir)
    doc.setdefault("output_dir", os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT))
    if isinstance(doc.get("input"), str):
        doc["input"] = _resolve(base, doc["input"])
    if isinstance(doc.get("schema"), str):
        doc["schema"] = _resolve(base, doc["schema"])
    ev = doc.get("evaluate")
    if isinstance(ev, dict) and isinstance(ev.get("baseline"), str):
        doc["evaluate"] = {**ev, "baseline": _resolve(base, ev["baseline"])}
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigError(_format_errors(e)) from None
    _check_against_schema(cfg)
    return cfg


def _check_against_schema(cfg: RunConfig) -> None:
    try:
        schema = cfg.load_schema()
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"schema: {e}") from None
    for i, v in enumerate(cfg.pattern_vars):
        if v not in schema:
            raise ConfigError(f"pattern_vars.{i}: no column {v!r} in the schema")
        if schema[v].kind != "categorical":
            raise ConfigError(f"pattern_vars.{i}: column {v!r} is not categorical")
    for i, v in enumerate(cfg.synthesizer.predictors):
        if v not in schema or schema[v].kind != "categorical" or schema[v].role == "sensitive":
            raise ConfigError(f"synthesizer.predictors.{i}: {v!r} is not a categorical column")
    reg = cfg.evaluate.regression
    if reg is not None:
        for i, v in enumerate(reg.predictors):
            if v not in schema or schema[v].kind != "categorical":
                raise ConfigError(f"evaluate.regression.predictors.{i}: {v!r} is not a categorical column")
        col, level = reg.target
        if col not in reg.predictors:
            raise ConfigError(f"evaluate.regression.target: {col!r} is not among the predictors")
        if level not in schema[col].levels[1:]:
            raise ConfigError(f"evaluate.regression.target: {level!r} is not a non-reference level of {col!r}")


def load_config(path=None, overrides=(), output_dir=None) -> RunConfig:
    """Read, override and validate a run configuration."""
    doc = read_document(path) if path is not None else {}
    doc = apply_overrides(doc, overrides)
    base = Path(path).resolve().parent if path is not None else None
    return build_config(doc, base, output_dir)
