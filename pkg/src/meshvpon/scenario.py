"""Scenario files.

A scenario is a TOML document with ``[ran]``, ``[pon]``, ``[traffic]``,
``[run]``, ``[topology]`` and ``[sweep]`` sections. Only ``[ran]`` is
required; absent keys take the numerology-1 defaults.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .dba import GrantCycleConfig, policy_names
from .errors import ScenarioError
from .ran import CgsConfig, NumerologyConfig
from .topology import TopologySpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

REQUIRED_SECTIONS = ("ran",)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RanSection(_Section):
    numerology: int = Field(default=1, ge=1, le=2)
    slot_time_ms: float | None = None
    max_prbs: int | None = None
    cgs_fraction: float = Field(default=0.20, gt=0, lt=1)
    prbs_per_user: Literal[5] = 5
    antennas: int = Field(default=4, gt=0)

    def numerology_config(self) -> NumerologyConfig:
        data: dict[str, Any] = {"mu": self.numerology}
        if self.slot_time_ms is not None:
            data["slot_time_s"] = self.slot_time_ms / 1e3
        if self.max_prbs is not None:
            data["max_prbs"] = self.max_prbs
        return NumerologyConfig(**data)

    def cgs_config(self) -> CgsConfig:
        return CgsConfig(
            reserved_fraction=self.cgs_fraction, max_prbs=self.numerology_config().max_prbs
        )


class PonSection(_Section):
    policy: str = "enhanced-codba"
    n_rus: int = Field(default=16, gt=0)
    uplink_capacity_gbps: float = Field(default=50.0, gt=0)
    grant_cycle_us: int = Field(default=125, gt=0)
    onu_response_us: int = Field(default=35, ge=0)
    frame_bytes: int = Field(default=2048, gt=0)
    inter_packet_gap_ns: int = Field(default=100, ge=0)
    conventional_headroom: float = Field(default=0.05, ge=0, lt=1)
    dl_fraction: float = Field(default=1.0, gt=0, le=1)

    @field_validator("policy")
    @classmethod
    def _known_policy(cls, value: str) -> str:
        if value not in policy_names():
            raise ValueError(f"unknown policy {value!r}; choose from {policy_names()}")
        return value

    def grant_cycle(self) -> GrantCycleConfig:
        return GrantCycleConfig(
            period_ns=self.grant_cycle_us * 1_000,
            onu_response_ns=self.onu_response_us * 1_000,
            uplink_capacity_bps=int(round(self.uplink_capacity_gbps * 1e9)),
            guard_ns=self.inter_packet_gap_ns,
            frame_bytes=self.frame_bytes,
        )


class TrafficSection(_Section):
    target_load_pct: float = Field(default=50.0, ge=0, le=100)
    urllc_share: float = Field(default=0.20, ge=0, le=1)


class RunSection(_Section):
    duration_s: float = Field(default=2.0, gt=0)
    warmup_ms: float = Field(default=50.0, ge=0)
    seed: int = Field(default=1, ge=0)


class TopologySection(_Section):
    ru_mec_km: float = Field(default=12.0, gt=0)
    mec_mec_km: float = Field(default=20.0, gt=0)
    mec_co_km: float = Field(default=50.0, gt=0)
    propagation_us_per_km: float = Field(default=4.5, gt=0)
    retune_us: float = Field(default=35.0, ge=0)

    def spec(self, n_rus: int) -> TopologySpec:
        return TopologySpec(
            n_rus=n_rus,
            ru_mec_km=self.ru_mec_km,
            mec_mec_km=self.mec_mec_km,
            mec_co_km=self.mec_co_km,
            propagation_ns_per_km=int(round(self.propagation_us_per_km * 1_000)),
        )


class SweepSection(_Section):
    loads: list[float] = Field(default_factory=list)
    dl_fractions: list[float] = Field(default_factory=list)
    numerologies: list[int] = Field(default_factory=list)
    policies: list[str] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=list)


class Scenario(_Section):
    """Fully validated simulation input."""

    ran: RanSection = Field(default_factory=RanSection)
    pon: PonSection = Field(default_factory=PonSection)
    traffic: TrafficSection = Field(default_factory=TrafficSection)
    run: RunSection = Field(default_factory=RunSection)
    topology: TopologySection = Field(default_factory=TopologySection)
    sweep: SweepSection = Field(default_factory=SweepSection)

    def replace(self, **changes: dict[str, Any]) -> "Scenario":
        """Copy with some section keys changed, e.g. ``replace(pon={"dl_fraction": 0.1})``."""
        data = self.model_dump()
        for section, values in changes.items():
            data[section].update(values)
        return Scenario.model_validate(data)

    @property
    def scenario_id(self) -> str:
        return (
            f"{self.pon.policy}_mu{self.ran.numerology}"
            f"_cgs{self.ran.cgs_fraction * 100:g}"
            f"_load{self.traffic.target_load_pct:g}"
            f"_dl{self.pon.dl_fraction * 100:g}"
        )


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item["loc"]) or "scenario"
        if item["type"] == "extra_forbidden":
            kind = "section" if len(item["loc"]) == 1 else "key"
            parts.append(f"unknown {kind} '{where}'")
        else:
            parts.append(f"'{where}': {item['msg']}")
    return "; ".join(parts)


def scenario_from_dict(data: dict[str, Any], source: str = "<scenario>") -> Scenario:
    for section in REQUIRED_SECTIONS:
        if section not in data:
            raise ScenarioError(f"{source}: missing required section [{section}]")
    try:
        scenario = Scenario.model_validate(data)
        # surface numerology and CGS consistency errors at parse time
        scenario.ran.cgs_config()
    except ValidationError as e:
        raise ScenarioError(f"{source}: {_describe(e)}") from e
    return scenario


def parse_scenario(path: Path) -> Scenario:
    """Load and validate a scenario file."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ScenarioError(f"scenario file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"{path}: malformed TOML: {e}") from e
    scenario = scenario_from_dict(data, str(path))
    logger.debug("Loaded scenario %s from %s", scenario.scenario_id, path)
    return scenario
