"""
Closed-form average AoI for the joint and distributed encoding schemes.

Joint scheme (one packet of L = N*L_h - alpha bits over M channel uses):

    Delta_J = M / (1 - eps_J) + (M - 1) / 2

Distributed scheme (round robin, one L_h-bit packet of M_h uses per sensor):

    Delta_D = sigma * N * M_h + beta * M_h + (M_h - 1) / 2

where sigma = E[f_max] is the expected largest run of consecutive failures
over the N sensors and beta = E[N - n* + 1] with n* the stalest sensor
holding that run. Both have alternating binomial closed forms and plain
infinite-series definitions; the series are kept as oracles.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from src.errors import UnboundedAoIError, ValidationError
from src.fbl_channel import ChannelParams, PacketShape, block_error_rate, is_short_block

logger = logging.getLogger(__name__)

ERROR_FLOOR = 1e-12            # smallest usable success probability 1 - eps
SERIES_TOL = 1e-12             # default tail bound for the series oracles
CANCELLATION_LIMIT = 1e6       # sum|terms| / |sum| above this -> use the series
LOW_ERROR_REGIME = 0.05        # eps_D above this breaks the crossover approximation
_SERIES_CHUNK = 1 << 16


class Scheme(Enum):
    JOINT = "joint"
    DISTRIBUTED = "distributed"


class PreferredScheme(Enum):
    JOINT = "Joint"
    DISTRIBUTED = "Distributed"
    TIE = "Tie"


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class Scenario:
    """N homogeneous sensors, L_h bits each, alpha bits of joint redundancy."""
    num_sensors: int
    per_sensor_bits: int
    redundancy_bits: int
    coding_rate: float
    channel: ChannelParams
    # Blocklength sweeps pin M / M_h directly instead of deriving them from R.
    joint_blocklength_override: Optional[int] = None
    sensor_blocklength_override: Optional[int] = None

    def __post_init__(self):
        if self.num_sensors < 1:
            raise ValidationError("sensors", "N must be >= 1", self.num_sensors)
        if self.per_sensor_bits < 1:
            raise ValidationError("bits_per_sensor", "L_h must be >= 1", self.per_sensor_bits)
        if self.redundancy_bits < 0:
            raise ValidationError("alpha", "alpha must be >= 0", self.redundancy_bits)
        if self.num_sensors * self.per_sensor_bits - self.redundancy_bits < 1:
            raise ValidationError("alpha", "L = N·L_h − α must be ≥ 1", self.redundancy_bits)
        if not math.isfinite(self.coding_rate) or self.coding_rate <= 0:
            raise ValidationError("rate", "R must be finite and > 0", self.coding_rate)
        for override in (self.joint_blocklength_override, self.sensor_blocklength_override):
            if override is not None and override < 1:
                raise ValidationError("blocklength", "blocklength must be >= 1", override)

    @property
    def joint_bits(self) -> int:
        return self.num_sensors * self.per_sensor_bits - self.redundancy_bits

    @property
    def joint_blocklength(self) -> int:
        if self.joint_blocklength_override is not None:
            return self.joint_blocklength_override
        return max(1, round_half_away(self.joint_bits / self.coding_rate))

    @property
    def sensor_blocklength(self) -> int:
        if self.sensor_blocklength_override is not None:
            return self.sensor_blocklength_override
        return max(1, round_half_away(self.per_sensor_bits / self.coding_rate))

    @property
    def joint_shape(self) -> PacketShape:
        return PacketShape(self.joint_bits, self.joint_blocklength)

    @property
    def sensor_shape(self) -> PacketShape:
        return PacketShape(self.per_sensor_bits, self.sensor_blocklength)

    def with_updates(self, **changes) -> "Scenario":
        """Copy with some fields replaced; the copy is validated again."""
        return replace(self, **changes)


@dataclass(frozen=True)
class AnalyticResult:
    scheme: Scheme
    avg_aoi_slots: float
    error_rate: float
    boundary_aoi: float
    blocklength: int
    sigma: Optional[float] = None
    beta: Optional[float] = None
    flags: Tuple[str, ...] = ()

    def in_seconds(self, slot_duration: float) -> float:
        return self.avg_aoi_slots * slot_duration


@dataclass(frozen=True)
class ThresholdResult:
    alpha_0: float
    aoi_diff: float
    preferred_scheme: PreferredScheme
    error_rate: float
    sigma: float
    beta: float
    flags: Tuple[str, ...] = ()


# ---------------------------
# sigma / beta
# ---------------------------

def _check_error_rate(eps: float):
    if not (0.0 <= eps < 1.0):
        raise ValidationError("eps", "error rate must satisfy 0 <= eps < 1", eps)


def _check_series_args(n_sensors: int, eps: float, tol: float):
    if n_sensors < 1:
        raise ValidationError("sensors", "N must be >= 1", n_sensors)
    _check_error_rate(eps)
    if not tol > 0:
        raise ValidationError("tol", "tolerance must be > 0", tol)


def _one_minus_power(eps: float, k: int) -> float:
    # 1 - eps**k without cancellation when eps is close to 1
    if eps == 0.0:
        return 1.0
    return -math.expm1(k * math.log(eps))


def _series_length(bound_scale: float, eps: float, tol: float) -> int:
    """Smallest F with bound_scale * eps**F < tol."""
    return max(1, math.ceil(math.log(tol / bound_scale) / math.log(eps)) + 1)


def _sum_guarded(terms: List[float], name: str) -> Optional[float]:
    """fsum of the terms, or None when cancellation makes it untrustworthy."""
    value = math.fsum(terms)
    magnitude = math.fsum(abs(t) for t in terms)
    if value <= 0.0 or magnitude / value > CANCELLATION_LIMIT:
        logger.info("%s closed form cancels (%.3g / %.3g); using the series oracle",
                    name, magnitude, value)
        return None
    return value


def sigma_series_oracle(n_sensors: int, eps: float, tol: float = SERIES_TOL) -> float:
    """E[f_max] = sum_{f>=1} 1 - (1 - eps^f)^N, truncated once the tail is < tol."""
    _check_series_args(n_sensors, eps, tol)
    if eps == 0.0:
        return 0.0
    # each term is at most N * eps^f, so the tail from F is N eps^F / (1 - eps)
    stop = _series_length(n_sensors / (1.0 - eps), eps, tol)
    log_eps = math.log(eps)
    partials = []
    for start in range(1, stop, _SERIES_CHUNK):
        f = np.arange(start, min(start + _SERIES_CHUNK, stop), dtype=float)
        eps_f = np.exp(f * log_eps)
        partials.append(float(np.sum(-np.expm1(n_sensors * np.log1p(-eps_f)))))
    return math.fsum(partials)


def sigma_closed_form(n_sensors: int, eps: float, tol: float = SERIES_TOL) -> float:
    """sum_{n=1}^{N} C(N,n) (-1)^{n+1} eps^n / (1 - eps^n)."""
    _check_series_args(n_sensors, eps, tol)
    if eps == 0.0:
        return 0.0
    terms = [
        math.comb(n_sensors, n) * (-1) ** (n + 1) * eps ** n / _one_minus_power(eps, n)
        for n in range(1, n_sensors + 1)
    ]
    value = _sum_guarded(terms, "sigma")
    if value is None:
        return sigma_series_oracle(n_sensors, eps, tol)
    return value


def beta_series_oracle(n_sensors: int, eps: float,
                       tol: float = SERIES_TOL) -> Tuple[float, List[float]]:
    """
    Pr(n* = n) = sum_{f>=0} (1-eps^f)^{n-1} (1-eps^{f+1})^{N-n} eps^f (1-eps)

    Returns (beta, pmf) with beta = sum_n Pr(n* = n) (N - n + 1).
    """
    _check_series_args(n_sensors, eps, tol)
    if eps == 0.0:
        pmf = [1.0] + [0.0] * (n_sensors - 1)
        return float(n_sensors), pmf

    # the pmf tails from F add up to Pr(f_max >= F) <= N eps^F and beta weights
    # each by at most N
    stop = _series_length(float(n_sensors * n_sensors), eps, tol)
    log_eps = math.log(eps)
    partials: List[List[float]] = [[] for _ in range(n_sensors)]
    for start in range(0, stop, _SERIES_CHUNK):
        f = np.arange(start, min(start + _SERIES_CHUNK, stop), dtype=float)
        eps_f = np.exp(f * log_eps)
        below = -np.expm1(f * log_eps)          # Pr(f_k < f)
        at_most = -np.expm1((f + 1) * log_eps)  # Pr(f_k <= f)
        own = eps_f * (1.0 - eps)               # Pr(f_n = f)
        for n in range(1, n_sensors + 1):
            terms = np.power(below, n - 1) * np.power(at_most, n_sensors - n) * own
            partials[n - 1].append(float(np.sum(terms)))

    pmf = [math.fsum(p) for p in partials]
    beta = math.fsum(p * (n_sensors - n + 1) for n, p in enumerate(pmf, start=1))
    return beta, pmf


def beta_closed_form(n_sensors: int, eps: float, tol: float = SERIES_TOL) -> float:
    """Double binomial expansion of E[N - n* + 1]; lies in [1, N]."""
    _check_series_args(n_sensors, eps, tol)
    terms = []
    for n in range(1, n_sensors + 1):
        weight = (1.0 - eps) * (n_sensors - n + 1)
        for n1 in range(n):
            for n2 in range(n_sensors - n + 1):
                coeff = math.comb(n - 1, n1) * math.comb(n_sensors - n, n2) * (-1) ** (n1 + n2)
                terms.append(weight * coeff * eps ** n2 / _one_minus_power(eps, n1 + n2 + 1))
    value = _sum_guarded(terms, "beta")
    if value is None:
        value, _ = beta_series_oracle(n_sensors, eps, tol)
    return min(float(n_sensors), max(1.0, value))


def fmax_pmf(n_sensors: int, eps: float, max_f: int) -> np.ndarray:
    """Pr(f_max = f) = (1 - eps^{f+1})^N - (1 - eps^f)^N for f = 0..max_f."""
    _check_error_rate(eps)
    f = np.arange(max_f + 1, dtype=float)
    return np.power(1.0 - eps ** (f + 1), n_sensors) - np.power(1.0 - eps ** f, n_sensors)


# ---------------------------
# AVERAGE AoI
# ---------------------------

def _resolve_error_rate(scheme: Scheme, shape: PacketShape, ch: ChannelParams,
                        forced_error_rate: Optional[float], error_floor: float,
                        literal_dispersion: bool) -> Tuple[float, List[str]]:
    flags: List[str] = []
    if forced_error_rate is not None:
        if not (0.0 <= forced_error_rate <= 1.0):
            raise ValidationError("forced_error", "forced error rate must lie in [0, 1]",
                                  forced_error_rate)
        eps = float(forced_error_rate)
    else:
        eps = block_error_rate(shape, ch, literal_dispersion=literal_dispersion)
        if is_short_block(shape):
            flags.append("short_block")
    if eps >= 1.0 or 1.0 - eps < error_floor:
        raise UnboundedAoIError(scheme.value, eps, error_floor)
    return eps, flags


def avg_aoi_joint(sc: Scenario, forced_error_rate: Optional[float] = None,
                  error_floor: float = ERROR_FLOOR,
                  literal_dispersion: bool = False) -> AnalyticResult:
    """Delta_J = M / (1 - eps_J) + (M - 1) / 2, in slots."""
    m = sc.joint_blocklength
    eps, flags = _resolve_error_rate(Scheme.JOINT, sc.joint_shape, sc.channel,
                                     forced_error_rate, error_floor, literal_dispersion)
    boundary = m / (1.0 - eps)
    return AnalyticResult(
        scheme=Scheme.JOINT,
        avg_aoi_slots=boundary + (m - 1) / 2.0,
        error_rate=eps,
        boundary_aoi=boundary,
        blocklength=m,
        flags=tuple(flags),
    )


def _distributed_terms(sc: Scenario, forced_error_rate: Optional[float], error_floor: float,
                       literal_dispersion: bool, tol: float):
    eps, flags = _resolve_error_rate(Scheme.DISTRIBUTED, sc.sensor_shape, sc.channel,
                                     forced_error_rate, error_floor, literal_dispersion)
    sigma = sigma_closed_form(sc.num_sensors, eps, tol)
    beta = beta_closed_form(sc.num_sensors, eps, tol)
    return eps, sigma, beta, flags


def avg_aoi_distributed(sc: Scenario, forced_error_rate: Optional[float] = None,
                        error_floor: float = ERROR_FLOOR, literal_dispersion: bool = False,
                        tol: float = SERIES_TOL) -> AnalyticResult:
    """Delta_D = sigma N M_h + beta M_h + (M_h - 1) / 2, in slots."""
    m_h = sc.sensor_blocklength
    eps, sigma, beta, flags = _distributed_terms(sc, forced_error_rate, error_floor,
                                                 literal_dispersion, tol)
    boundary = sigma * sc.num_sensors * m_h + beta * m_h
    return AnalyticResult(
        scheme=Scheme.DISTRIBUTED,
        avg_aoi_slots=boundary + (m_h - 1) / 2.0,
        error_rate=eps,
        boundary_aoi=boundary,
        blocklength=m_h,
        sigma=sigma,
        beta=beta,
        flags=tuple(flags),
    )


def evaluate(scheme: Scheme, sc: Scenario, forced_error_rate: Optional[float] = None,
             error_floor: float = ERROR_FLOOR, literal_dispersion: bool = False) -> AnalyticResult:
    if scheme is Scheme.JOINT:
        return avg_aoi_joint(sc, forced_error_rate, error_floor, literal_dispersion)
    return avg_aoi_distributed(sc, forced_error_rate, error_floor, literal_dispersion)


# ---------------------------
# SCHEME SELECTION
# ---------------------------

def _approx_difference(sc: Scenario, sigma: float, beta: float) -> float:
    n = sc.num_sensors
    joint_part = 1.5 * (n - sc.redundancy_bits / sc.per_sensor_bits)
    return (joint_part - (n * sigma + 0.5 + beta)) * sc.sensor_blocklength


def _warn_regime(eps_d: float) -> List[str]:
    if eps_d > LOW_ERROR_REGIME:
        logger.warning("eps_D = %.3g exceeds %.2g: the low-error crossover approximation "
                       "does not hold", eps_d, LOW_ERROR_REGIME)
        return ["approx_regime"]
    return []


def aoi_difference_approx(sc: Scenario, forced_error_rate: Optional[float] = None,
                          error_floor: float = ERROR_FLOOR,
                          tol: float = SERIES_TOL) -> float:
    """Delta_J - Delta_D with eps_J neglected; positive means distributed is fresher."""
    eps_d, sigma, beta, _ = _distributed_terms(sc, forced_error_rate, error_floor, False, tol)
    _warn_regime(eps_d)
    return _approx_difference(sc, sigma, beta)


def alpha_threshold(sc: Scenario, forced_error_rate: Optional[float] = None,
                    error_floor: float = ERROR_FLOOR,
                    tol: float = SERIES_TOL) -> ThresholdResult:
    """
    alpha_0 = ((3 - 2 sigma) N - 2 beta - 1) L_h / 3.

    Joint encoding is preferred when the scenario's alpha reaches alpha_0,
    i.e. whenever the approximate difference is <= 0.
    """
    eps_d, sigma, beta, flags = _distributed_terms(sc, forced_error_rate, error_floor,
                                                   False, tol)
    flags = flags + _warn_regime(eps_d)
    n = sc.num_sensors
    alpha_0 = ((3.0 - 2.0 * sigma) * n - 2.0 * beta - 1.0) * sc.per_sensor_bits / 3.0
    diff = _approx_difference(sc, sigma, beta)
    if diff <= 0:
        preferred = PreferredScheme.JOINT
    else:
        preferred = PreferredScheme.DISTRIBUTED
    return ThresholdResult(
        alpha_0=alpha_0,
        aoi_diff=diff,
        preferred_scheme=preferred,
        error_rate=eps_d,
        sigma=sigma,
        beta=beta,
        flags=tuple(flags),
    )
