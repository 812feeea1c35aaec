"""
Blocklength optimizer, crossover search and the sweep harness.

Sweeps produce one SweepRow per (grid point, scheme); rows for points whose
error rate makes the AoI unbounded are kept and flagged instead of aborting.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.aoi_analytic import (
    ERROR_FLOOR,
    Scenario,
    Scheme,
    avg_aoi_distributed,
    beta_closed_form,
    evaluate,
    sigma_closed_form,
)
from src.aoi_sim import SimSettings, simulate
from src.errors import NoCrossoverError, UnboundedAoIError, ValidationError
from src.fbl_channel import ChannelParams, block_error_rate, error_rate_profile

logger = logging.getLogger(__name__)

MAX_BLOCKLENGTH = 10 ** 6
BASE_SNR = 3.0
UNBOUNDED_FLAG = "unbounded"
BOUNDARY_FLAG = "range_boundary"

Number = Union[int, float]


class SweepVariable(Enum):
    CODING_RATE = "coding_rate"
    NUM_SENSORS = "num_sensors"
    REDUNDANCY = "redundancy"
    BLOCKLENGTH = "blocklength"

    @property
    def is_integer(self) -> bool:
        return self is not SweepVariable.CODING_RATE


class SchemeSelection(Enum):
    JOINT = "joint"
    DISTRIBUTED = "distributed"
    BOTH = "both"

    @property
    def schemes(self) -> Tuple[Scheme, ...]:
        if self is SchemeSelection.JOINT:
            return (Scheme.JOINT,)
        if self is SchemeSelection.DISTRIBUTED:
            return (Scheme.DISTRIBUTED,)
        return (Scheme.JOINT, Scheme.DISTRIBUTED)


@dataclass(frozen=True)
class SweepSpec:
    scheme: SchemeSelection
    swept_variable: SweepVariable
    grid: Tuple[Number, ...]
    base: Scenario
    with_simulation: bool = False
    sim: SimSettings = field(default_factory=SimSettings)
    forced_error_rate: Optional[float] = None
    label: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(self.grid))
        if not self.grid:
            raise ValidationError("grid", "grid must not be empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValidationError("grid", "grid must be strictly increasing", self.grid)
        if self.swept_variable.is_integer:
            bad = [v for v in self.grid if not float(v).is_integer()]
            if bad:
                raise ValidationError("grid", f"{self.swept_variable.value} takes integer values",
                                      bad[0])
        if self.forced_error_rate is not None and not (0.0 <= self.forced_error_rate <= 1.0):
            raise ValidationError("forced_error", "forced error rate must lie in [0, 1]",
                                  self.forced_error_rate)
        for value in self.grid:
            self.scenario_at(value)

    def scenario_at(self, value: Number) -> Scenario:
        """Base scenario with the swept variable set to `value`."""
        var = self.swept_variable
        if var is SweepVariable.CODING_RATE:
            return self.base.with_updates(coding_rate=float(value))
        if var is SweepVariable.NUM_SENSORS:
            return self.base.with_updates(num_sensors=int(value))
        if var is SweepVariable.REDUNDANCY:
            return self.base.with_updates(redundancy_bits=int(value))
        return self.base.with_updates(joint_blocklength_override=int(value),
                                      sensor_blocklength_override=int(value))

    @property
    def sim_settings(self) -> SimSettings:
        if self.forced_error_rate is not None and self.sim.forced_error_rate is None:
            return replace(self.sim, forced_error_rate=self.forced_error_rate)
        return self.sim


@dataclass(frozen=True)
class SweepRow:
    swept_variable: SweepVariable
    swept_value: Number
    scheme: Scheme
    derived_blocklength: int
    error_rate: float
    analytic_aoi_slots: Optional[float]
    sim_aoi_slots: Optional[float] = None
    sim_ci95: Optional[float] = None
    seed: Optional[int] = None
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class Optimum:
    scheme: Scheme
    best_blocklength: int
    best_aoi_slots: float
    searched_range: Tuple[int, int]
    profile: Tuple[Tuple[int, float], ...]
    at_range_boundary: bool = False

    @property
    def flags(self) -> Tuple[str, ...]:
        return (BOUNDARY_FLAG,) if self.at_range_boundary else ()


@dataclass(frozen=True)
class RateChoice:
    scheme: Scheme
    best_rate: float
    best_blocklength: int
    best_aoi_slots: float
    profile: Tuple[Tuple[float, float], ...]


# ---------------------------
# BLOCKLENGTH OPTIMIZER
# ---------------------------

def _check_range(m_range: Tuple[int, int]) -> Tuple[int, int]:
    lo, hi = int(m_range[0]), int(m_range[1])
    if lo > hi:
        raise ValidationError("m_range", "blocklength range is empty", (lo, hi))
    if lo < 1 or hi > MAX_BLOCKLENGTH:
        raise ValidationError("m_range", f"blocklength range must lie in [1, {MAX_BLOCKLENGTH}]",
                              (lo, hi))
    return lo, hi


def _distributed_profile(n_sensors: int, m: np.ndarray, eps: np.ndarray) -> np.ndarray:
    delta = np.full(len(m), np.inf)
    cache = {}
    for i, (m_h, e) in enumerate(zip(m, eps)):
        e = float(e)
        if 1.0 - e < ERROR_FLOOR:
            continue
        if e not in cache:
            cache[e] = (sigma_closed_form(n_sensors, e), beta_closed_form(n_sensors, e))
        sigma, beta = cache[e]
        delta[i] = sigma * n_sensors * m_h + beta * m_h + (m_h - 1) / 2.0
    return delta


def optimize_blocklength(scheme: Scheme, bits: int, ch: ChannelParams,
                         m_range: Tuple[int, int], num_sensors: Optional[int] = None,
                         forced_error_rate: Optional[float] = None) -> Optimum:
    """
    Exhaustive integer search of the analytic average AoI over m_range.

    Joint: `bits` is L and the search runs over M. Distributed: `bits` is L_h,
    the search runs over M_h and `num_sensors` is required.
    """
    lo, hi = _check_range(m_range)
    if bits < 1:
        raise ValidationError("bits", "bits must be >= 1", bits)
    if scheme is Scheme.DISTRIBUTED and (num_sensors is None or num_sensors < 1):
        raise ValidationError("sensors", "distributed search needs N >= 1", num_sensors)

    m = np.arange(lo, hi + 1)
    if forced_error_rate is not None:
        eps = np.full(len(m), float(forced_error_rate))
    else:
        eps = error_rate_profile(bits, m, ch)

    if scheme is Scheme.JOINT:
        success = 1.0 - eps
        with np.errstate(divide="ignore"):
            delta = np.where(success >= ERROR_FLOOR, m / np.maximum(success, ERROR_FLOOR)
                             + (m - 1) / 2.0, np.inf)
    else:
        delta = _distributed_profile(num_sensors, m, eps)

    if not np.any(np.isfinite(delta)):
        raise UnboundedAoIError(scheme.value, float(eps.min()), ERROR_FLOOR)

    best = int(np.argmin(delta))    # first minimum -> smallest M on ties
    at_boundary = best == 0 or best == len(m) - 1
    if at_boundary:
        logger.warning("minimum at range boundary (M=%d in [%d, %d]); widen the range",
                       int(m[best]), lo, hi)
    return Optimum(
        scheme=scheme,
        best_blocklength=int(m[best]),
        best_aoi_slots=float(delta[best]),
        searched_range=(lo, hi),
        profile=tuple(zip(m.tolist(), delta.tolist())),
        at_range_boundary=at_boundary,
    )


def optimize_coding_rate(scheme: Scheme, base: Scenario, rates: Sequence[float],
                         forced_error_rate: Optional[float] = None) -> RateChoice:
    """Rate on `rates` minimising the analytic AoI; ties go to the shorter packet."""
    if not rates:
        raise ValidationError("rates", "rate grid must not be empty")
    profile = []
    best = None
    for rate in rates:
        sc = base.with_updates(coding_rate=float(rate))
        try:
            result = evaluate(scheme, sc, forced_error_rate)
        except UnboundedAoIError:
            profile.append((float(rate), math.inf))
            continue
        profile.append((float(rate), result.avg_aoi_slots))
        key = (result.avg_aoi_slots, result.blocklength)
        if best is None or key < best[0]:
            best = (key, float(rate))
    if best is None:
        raise UnboundedAoIError(scheme.value, 1.0, ERROR_FLOOR)
    (aoi, blocklength), rate = best
    return RateChoice(scheme, rate, blocklength, aoi, tuple(profile))


# ---------------------------
# SWEEPS
# ---------------------------

def _error_rate(scheme: Scheme, sc: Scenario, forced: Optional[float]) -> float:
    if forced is not None:
        return float(forced)
    shape = sc.joint_shape if scheme is Scheme.JOINT else sc.sensor_shape
    return block_error_rate(shape, sc.channel)


def _evaluate_point(spec: SweepSpec, value: Number) -> List[SweepRow]:
    sc = spec.scenario_at(value)
    rows = []
    for scheme in spec.scheme.schemes:
        try:
            result = evaluate(scheme, sc, spec.forced_error_rate)
            analytic, eps, blocklength, flags = (result.avg_aoi_slots, result.error_rate,
                                                 result.blocklength, result.flags)
        except UnboundedAoIError:
            logger.warning("%s=%s, %s scheme: unbounded AoI", spec.swept_variable.value,
                           value, scheme.value)
            blocklength = (sc.joint_blocklength if scheme is Scheme.JOINT
                           else sc.sensor_blocklength)
            analytic, flags = None, (UNBOUNDED_FLAG,)
            eps = _error_rate(scheme, sc, spec.forced_error_rate)

        sim_mean = sim_ci = seed = None
        if spec.with_simulation:
            outcome = simulate(scheme, sc, spec.sim_settings)
            sim_mean, sim_ci, seed = outcome.avg_aoi_slots, outcome.ci95_half_width, outcome.seed

        rows.append(SweepRow(
            swept_variable=spec.swept_variable,
            swept_value=value,
            scheme=scheme,
            derived_blocklength=blocklength,
            error_rate=eps,
            analytic_aoi_slots=analytic,
            sim_aoi_slots=sim_mean,
            sim_ci95=sim_ci,
            seed=seed,
            flags=tuple(flags),
        ))
    return rows


def run_sweep(spec: SweepSpec, workers: int = 1) -> List[SweepRow]:
    """One row per (grid point, scheme), in grid order."""
    logger.info("sweep %s: %s over %d points (%s)", spec.label, spec.swept_variable.value,
                len(spec.grid), spec.scheme.value)
    specs = [spec] * len(spec.grid)
    if workers > 1 and len(spec.grid) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_point = list(pool.map(_evaluate_point, specs, spec.grid))
    else:
        per_point = [_evaluate_point(s, v) for s, v in zip(specs, spec.grid)]
    return [row for rows in per_point for row in rows]


# ---------------------------
# CROSSOVER
# ---------------------------

def _joint_minus_distributed(base: Scenario, alpha: int, delta_d: float,
                             forced: Optional[float]) -> float:
    try:
        delta_j = evaluate(Scheme.JOINT, base.with_updates(redundancy_bits=alpha), forced)
    except UnboundedAoIError:
        return math.inf
    return delta_j.avg_aoi_slots - delta_d


def locate_crossover(base: Scenario, alpha_range: Tuple[int, int],
                     forced_error_rate: Optional[float] = None) -> float:
    """
    Redundancy at which the exact Delta_J(alpha) - Delta_D changes sign.

    Integer bisection; the result is interpolated inside the final one-bit
    bracket unless a grid point hits zero exactly.
    """
    lo, hi = int(alpha_range[0]), int(alpha_range[1])
    limit = base.num_sensors * base.per_sensor_bits - 1
    if not (0 <= lo < hi <= limit):
        raise ValidationError("alpha_range", f"need 0 <= lo < hi <= N·L_h − 1 = {limit}",
                              (lo, hi))

    delta_d = avg_aoi_distributed(base, forced_error_rate).avg_aoi_slots
    g_lo = _joint_minus_distributed(base, lo, delta_d, forced_error_rate)
    g_hi = _joint_minus_distributed(base, hi, delta_d, forced_error_rate)
    if g_lo == 0:
        return float(lo)
    if g_hi == 0:
        return float(hi)
    if (g_lo > 0) == (g_hi > 0):
        raise NoCrossoverError(lo, hi)

    while hi - lo > 1:
        mid = (lo + hi) // 2
        g_mid = _joint_minus_distributed(base, mid, delta_d, forced_error_rate)
        if g_mid == 0:
            return float(mid)
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid

    if not (math.isfinite(g_lo) and math.isfinite(g_hi)):
        return (lo + hi) / 2.0
    crossing = lo + g_lo / (g_lo - g_hi)
    logger.debug("crossover bracket [%d, %d] -> %.4f", lo, hi, crossing)
    return crossing


# ---------------------------
# FIGURE REPLICAS
# ---------------------------

FIGURES = ("fig3", "fig4", "fig5")


def replica_base(per_sensor_bits: int = 120, num_sensors: int = 4,
                 coding_rate: float = 0.8) -> Scenario:
    return Scenario(num_sensors=num_sensors, per_sensor_bits=per_sensor_bits,
                    redundancy_bits=0, coding_rate=coding_rate,
                    channel=ChannelParams(BASE_SNR))


def replica_specs(figure: str, with_simulation: bool = False, sim: Optional[SimSettings] = None,
                  forced_error_rate: Optional[float] = None) -> List[SweepSpec]:
    """
    Sweep specs for the three reference curve families.

    fig3: AoI vs coding rate 0.3..1.4, N=4, alpha=0, L_h in {60, 120}.
    fig4: AoI vs N = 1..10, L_h=120, alpha=0, R in {0.6, 0.8, 1.0}.
    fig5: AoI vs alpha (step 40), L_h=120, R=0.8, N in {2, 4}.
    """
    sim = sim or SimSettings()
    common = dict(with_simulation=with_simulation, sim=sim, forced_error_rate=forced_error_rate)
    if figure == "fig3":
        rates = tuple(round(0.3 + 0.05 * i, 2) for i in range(23))
        return [
            SweepSpec(SchemeSelection.BOTH, SweepVariable.CODING_RATE, rates,
                      replica_base(per_sensor_bits=lh), label=f"lh{lh}", **common)
            for lh in (60, 120)
        ]
    if figure == "fig4":
        return [
            SweepSpec(SchemeSelection.BOTH, SweepVariable.NUM_SENSORS, tuple(range(1, 11)),
                      replica_base(coding_rate=rate), label=f"r{rate:g}", **common)
            for rate in (0.6, 0.8, 1.0)
        ]
    if figure == "fig5":
        return [
            SweepSpec(SchemeSelection.BOTH, SweepVariable.REDUNDANCY,
                      tuple(range(0, (n - 1) * 120 + 1, 40)),
                      replica_base(num_sensors=n), label=f"n{n}", **common)
            for n in (2, 4)
        ]
    raise ValidationError("figure", f"figure must be one of {', '.join(FIGURES)}", figure)
