"""Rate model calculators.

Split-7.2 uplink fronthaul rate, maximum cell throughput, DU payload per slot
and PON traffic intensity. Every function here is pure.
"""

from collections.abc import Iterable

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from .errors import RateModelError


class PucchParams(BaseModel):
    """PUCCH term of the split-7.2 rate."""

    model_config = ConfigDict(frozen=True)

    n_reg: PositiveInt = 1
    n_re: PositiveInt = 156
    n_res: PositiveInt = 8


class PrachParams(BaseModel):
    """PRACH term, averaged over its period."""

    model_config = ConfigDict(frozen=True)

    n_bins: PositiveInt = 839
    n_res: PositiveInt = 10
    period_s: PositiveFloat = 10e-3


class SrsParams(BaseModel):
    """SRS term, averaged over its period."""

    model_config = ConfigDict(frozen=True)

    n_re: PositiveInt = 12
    n_res: PositiveInt = 8
    period_s: PositiveFloat = 1e-3


class Split72Params(BaseModel):
    """Every constant of the split-7.2 uplink rate except the per-PRB data flags."""

    model_config = ConfigDict(frozen=True)

    n_ant: PositiveInt = 4
    n_re_per_prb: PositiveInt = 156
    n_res_bits: PositiveInt = 8
    pucch: PucchParams = Field(default_factory=PucchParams)
    prach: PrachParams = Field(default_factory=PrachParams)
    srs: SrsParams = Field(default_factory=SrsParams)
    max_prbs: PositiveInt = 270
    slot_time_s: PositiveFloat = 0.5e-3

    @model_validator(mode="after")
    def _check_pucch_fits(self) -> "Split72Params":
        if self.pucch.n_reg >= self.max_prbs:
            raise ValueError("PUCCH regions must leave PRBs for SRS")
        return self

    @property
    def srs_subcarriers(self) -> int:
        return (self.max_prbs - self.pucch.n_reg) * self.srs.n_re

    @property
    def prb_slope_bps(self) -> float:
        """Rate added by one PRB that carries data."""
        return 2 * self.n_ant * self.n_re_per_prb * self.n_res_bits / self.slot_time_s


class CellThroughputParams(BaseModel):
    """Maximum cell throughput parameters (one entry per aggregated carrier)."""

    model_config = ConfigDict(frozen=True)

    j_carriers: PositiveInt = 1
    layers: PositiveInt = 4
    q_m: PositiveInt = 8
    scaling: float = Field(default=1.0, gt=0, le=1)
    r_max: float = Field(default=948 / 1024, gt=0, le=1)
    max_prbs: PositiveInt = 270
    symbol_time_s: PositiveFloat = 1e-3 / 28
    overhead: float = Field(default=0.1, ge=0, le=1)


class DuPayloadParams(BaseModel):
    """Inputs of the DU payload per slot."""

    model_config = ConfigDict(frozen=True)

    r_cell_mbps: PositiveFloat
    max_prbs: PositiveInt = 270
    prbs_per_user: PositiveInt = 5
    slot_time_s: PositiveFloat = 0.5e-3


def split72_rate(params: Split72Params, data_prbs: int) -> float:
    """Uplink split-7.2 fronthaul rate in bit/s for a slot with ``data_prbs`` busy PRBs."""
    if not 0 <= data_prbs <= params.max_prbs:
        raise RateModelError(f"data_prbs={data_prbs} outside [0, {params.max_prbs}]")

    t_slot = params.slot_time_s
    pusch = data_prbs * params.n_re_per_prb * params.n_res_bits / t_slot
    pucch = params.pucch.n_reg * params.pucch.n_re * params.pucch.n_res / t_slot
    prach = params.prach.n_bins * params.prach.n_res / params.prach.period_s
    srs = params.srs_subcarriers * params.srs.n_res / params.srs.period_s
    return 2 * params.n_ant * (pusch + pucch + prach + srs)


def cell_throughput(params: CellThroughputParams) -> float:
    """Maximum cell throughput in Mbit/s."""
    per_carrier = (
        params.layers
        * params.q_m
        * params.scaling
        * params.r_max
        * (params.max_prbs * 12 / params.symbol_time_s)
        * (1 - params.overhead)
    )
    return 1e-6 * params.j_carriers * per_carrier


def du_payload_per_slot(params: DuPayloadParams, active_users: int) -> float:
    """Megabits the DU hands to the upper layers for ``active_users`` in one slot."""
    if active_users < 0 or active_users * params.prbs_per_user > params.max_prbs:
        raise RateModelError(
            f"{active_users} users x {params.prbs_per_user} PRBs exceeds {params.max_prbs} PRBs"
        )
    per_prb = params.r_cell_mbps / params.max_prbs
    return per_prb * params.prbs_per_user * active_users * params.slot_time_s


def traffic_intensity(ru_rates: Iterable[float], capacity: float) -> float:
    """PON load in percent: total RU fronthaul rate over slice uplink capacity."""
    if capacity <= 0:
        raise RateModelError(f"capacity must be positive, got {capacity}")
    return 100.0 * sum(ru_rates) / capacity
