"""Run configuration: a single versioned JSON document."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from .girsanov import THETA_KINDS, ThetaProcess
from .graphon import Graphon, GraphonError
from .grids import Grids
from .solver import DIFFUSION_KINDS, DRIFT_KINDS, INITIAL_KINDS, Coefficients, InitialCondition

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Model):
    T: PositiveFloat = 1.0
    n_steps: PositiveInt = 256
    n_index: PositiveInt = 64


class GraphonSpec(_Model):
    kind: Literal["constant", "product", "min", "piecewise"] = "constant"
    p: Optional[float] = None
    matrix: Optional[list[list[float]]] = None
    csv: Optional[str] = None


class DriftSpec(_Model):
    kind: Literal[DRIFT_KINDS] = "linear"
    a: float = 1.0
    c: float = 0.0
    d: float = 0.0


class DiffusionSpec(_Model):
    kind: Literal[DIFFUSION_KINDS] = "linear"
    s: float = 2.0**0.5
    s0: float = 0.0


class CoefficientSpec(_Model):
    drift: DriftSpec = Field(default_factory=DriftSpec)
    diffusion: DiffusionSpec = Field(default_factory=DiffusionSpec)


class InitialSpec(_Model):
    kind: Literal[INITIAL_KINDS] = "constant"
    x0: float = 1.0
    slope: float = 0.0
    mean: float = 0.0
    var: float = Field(1.0, ge=0.0)


class SolverSpec(_Model):
    mode: Literal["coupled", "picard"] = "coupled"
    tol: PositiveFloat = 1e-4
    max_iter: PositiveInt = 50
    compare: bool = False


class ThetaSpec(_Model):
    kind: Literal[THETA_KINDS] = "constant"
    c: float = 0.5
    slope: float = 0.0
    kappa: float = 0.0


class GirsanovSpec(_Model):
    theta: Optional[ThetaSpec] = None
    alpha: float = Field(0.01, gt=0.0, lt=1.0)
    n_pairs: PositiveInt = 20
    n_mean_indices: PositiveInt = 10


class VerifySpec(_Model):
    alpha: float = Field(0.01, gt=0.0, lt=1.0)
    pair_alpha: float = Field(0.001, gt=0.0, lt=1.0)
    n_intervals: PositiveInt = 5
    n_indices: PositiveInt = 20
    n_pairs: PositiveInt = 50
    counterexample: bool = False


class EllnSpec(_Model):
    n_small: PositiveInt = 64
    n_large: PositiveInt = 256
    n_steps: PositiveInt = 16


class OutputSpec(_Model):
    directory: str = "out"
    formats: list[Literal["json", "csv"]] = Field(default_factory=lambda: ["json", "csv"])
    dump_paths: bool = False
    dump_noise: Optional[Literal["bin", "csv"]] = None


class RunConfig(_Model):
    schema_version: Literal[SCHEMA_VERSION] = SCHEMA_VERSION
    grids: GridSpec = Field(default_factory=GridSpec)
    n_paths: PositiveInt = 2000
    seed: int = Field(42, ge=0, lt=2**64)
    graphon: GraphonSpec = Field(default_factory=GraphonSpec)
    coefficients: CoefficientSpec = Field(default_factory=CoefficientSpec)
    initial_condition: InitialSpec = Field(default_factory=InitialSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    girsanov: Optional[GirsanovSpec] = Field(default_factory=lambda: GirsanovSpec(theta=ThetaSpec()))
    verify: VerifySpec = Field(default_factory=VerifySpec)
    elln: EllnSpec = Field(default_factory=EllnSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def _catalogues(self):
        # build each domain object once so catalogue errors surface at load time
        if self.graphon.csv is None:
            self.build_graphon()
        self.build_coefficients()
        self.build_initial_condition()
        if self.girsanov is not None and self.girsanov.theta is not None:
            self.build_theta()
        return self

    def build_grids(self) -> Grids:
        return Grids.make(self.grids.T, self.grids.n_steps, self.grids.n_index)

    def build_graphon(self, base_dir=None) -> Graphon:
        spec = self.graphon.model_dump(exclude_none=True)
        if spec.get("kind") == "constant":
            spec.setdefault("p", 1.0)
        try:
            return Graphon.from_spec(spec, base_dir=base_dir)
        except OSError as exc:
            raise ConfigError(f"cannot read piecewise graphon matrix: {exc}") from None

    def build_coefficients(self) -> Coefficients:
        return Coefficients.from_spec(self.coefficients.model_dump())

    def build_initial_condition(self) -> InitialCondition:
        return InitialCondition.from_spec(self.initial_condition.model_dump())

    def build_theta(self) -> ThetaProcess:
        if self.girsanov is None or self.girsanov.theta is None:
            raise ConfigError("girsanov.theta is required")
        return ThetaProcess.from_spec(self.girsanov.theta.model_dump())

    def echo(self) -> dict:
        """Config as JSON data without the output section (which varies between reruns)."""
        return self.model_dump(mode="json", exclude={"output"})


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    except (GraphonError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
