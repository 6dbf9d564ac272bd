"""Experiment configuration: strict TOML schema with one section per module."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .circuit import CircuitSpec

KINDS = ("spectrum", "ramsey", "ej-scan", "reconstruct", "validate", "circuit-sweep")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)


class ModelSection(_Strict):
    EC_GHz: float = Field(0.3, gt=0)
    EJ_over_EC: float = Field(50.0, ge=0)
    EJ2_over_EJ: float = Field(0.0, ge=0)
    ng: float = 0.0
    N: Optional[int] = Field(None, ge=1)


class SpectrumSection(_Strict):
    EJ_over_EC: list[float] = [50.0, 10.0]
    levels: int = Field(4, ge=1)


class ProbeSection(_Strict):
    delta_p_GHz: float = Field(3.0, gt=0)
    g_GHz: float = 0.15

    @field_validator("g_GHz")
    @classmethod
    def _nonzero(cls, v):
        if v == 0:
            raise ValueError("g_GHz must be non-zero")
        return v


class RamseySection(_Strict):
    residual_EJ_over_EC: list[float] = [0.0]
    samples: int = Field(2048, ge=16)
    periods: float = Field(20.0, gt=0)
    noise_std: float = Field(0.0, ge=0)
    T1_ns: Optional[float] = Field(None, gt=0)
    Tphi_ns: Optional[float] = Field(None, gt=0)


class TomographySection(_Strict):
    EJ_range: tuple[float, float] = Field((10.0, 50.0), strict=False)
    counts: list[int] = [21]
    N0: int = Field(7, ge=1)
    maps: Literal["numeric", "analytic"] = "numeric"
    solver: Literal["linear", "cholesky"] = "linear"
    noise_std: float = Field(0.0, ge=0)
    fit_EJ2_over_EJ: list[float] = [0.0]


class CircuitSection(_Strict):
    EJp_GHz: float = 121.0
    EJt_GHz: float = 5.0
    alpha_L: float = 0.4
    alpha_R: float = 0.4
    f_p: float = 0.5
    ng_p: float = 0.0
    CJp_fF: float = 8.0
    CJt_fF: float = 4.0
    Ct_fF: float = 40.0
    Cg_fF: float = 0.0
    Ccp_fF: float = 5.0
    Cct_fF: float = 5.0
    Cr_fF: float = 100.0
    Lr_nH: float = 10.0
    Np: int = Field(7, ge=2)

    def spec(self) -> CircuitSpec:
        return CircuitSpec(
            EJp=self.EJp_GHz, EJt=self.EJt_GHz, alpha_L=self.alpha_L, alpha_R=self.alpha_R, f_p=self.f_p,
            ng_p=self.ng_p, CJp=self.CJp_fF, CJt=self.CJt_fF, Ct=self.Ct_fF, Cg=self.Cg_fF,
            Ccp=self.Ccp_fF, Cct=self.Cct_fF, Cr=self.Cr_fF, Lr=self.Lr_nH,
        )


class SweepSection(_Strict):
    """One swept parameter, optionally repeated over a series of a second one."""

    name: str
    parameter: Literal["ng_p", "Ccp", "alpha", "delta_alpha"]
    values: Optional[list[float]] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    num: Optional[int] = Field(None, ge=1)
    series_parameter: Optional[Literal["ng_p", "Ccp", "alpha", "delta_alpha"]] = None
    series_values: Optional[list[float]] = None
    fixed: dict[str, float] = {}

    @model_validator(mode="after")
    def _grid(self):
        explicit = self.values is not None
        ranged = None not in (self.start, self.stop, self.num)
        if explicit == ranged:
            raise ValueError(f"sweep {self.name!r}: give either values or start/stop/num")
        if (self.series_parameter is None) != (self.series_values is None):
            raise ValueError(f"sweep {self.name!r}: series_parameter and series_values go together")
        for key in self.fixed:
            if key not in CircuitSection.model_fields or key == "Np":
                raise ValueError(f"sweep {self.name!r}: unknown circuit key {key!r} in fixed")
        return self

    def grid(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.start, self.stop, self.num)


class ToleranceSection(_Strict):
    visibility_floor: float = Field(1e-4, ge=0)
    lstsq_rcond: float = Field(1e-7, gt=0)
    gn_max_iter: int = Field(200, ge=1)
    dense_threshold: int = Field(2000, ge=1)
    max_dimension: int = Field(40_000, ge=1)


class ExperimentConfig(_Strict):
    kind: Literal["spectrum", "ramsey", "ej-scan", "reconstruct", "validate", "circuit-sweep"]
    name: str = "run"
    description: str = ""
    seed: int = 0
    output_dir: Optional[str] = None
    metadata: dict[str, str] = {}
    model: ModelSection = ModelSection()
    spectrum: SpectrumSection = SpectrumSection()
    probe: ProbeSection = ProbeSection()
    ramsey: RamseySection = RamseySection()
    tomography: TomographySection = TomographySection()
    circuit: CircuitSection = CircuitSection()
    sweeps: list[SweepSection] = []
    tolerance: ToleranceSection = ToleranceSection()

    def to_toml(self) -> str:
        return tomli_w.dumps(self.model_dump(mode="json", exclude_none=True))

    def with_overrides(self, seed: int | None = None, tolerance: dict | None = None,
                       output_dir: str | None = None) -> "ExperimentConfig":
        data = self.model_dump(mode="json", exclude_none=True)
        if seed is not None:
            data["seed"] = seed
        if output_dir is not None:
            data["output_dir"] = output_dir
        if tolerance:
            data["tolerance"] = {**data["tolerance"], **tolerance}
        return parse_config(data)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_describe(err)) from None


def loads(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"TOML syntax: {err}") from None
    return parse_config(data)


def load(path) -> ExperimentConfig:
    return loads(Path(path).read_text())


def parse_tolerance_overrides(items) -> dict:
    """``["k=v", ...]`` into typed values; unknown keys raise :class:`ConfigError`."""
    out = {}
    fields = ToleranceSection.model_fields
    for item in items or ():
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"tolerance override {item!r} is not of the form key=value")
        if key not in fields:
            raise ConfigError(f"tolerance.{key}: unknown key (known: {', '.join(fields)})")
        typ = fields[key].annotation
        try:
            out[key] = int(value) if typ is int else float(value)
        except ValueError:
            raise ConfigError(f"tolerance.{key}: cannot parse {value!r}") from None
    return out

