"""
Finite-Blocklength Channel Module

Block error rate of an l-bit update sent over m channel uses of an AWGN
channel, using the normal approximation:

    eps(l, m, gamma) = Q( (C - l/m) / (log2(e) * sqrt(V / m)) )

with C = 0.5 * log2(1 + gamma) and V = 0.5 * (1 - (1 + gamma)^-2).

Examples:
- eps(120, 150, 3)  -> ~6.57e-3
- eps(480, 600, 3)  -> ~3.5e-7
- eps(120, 50, 3)   -> ~1 (rate above capacity)
"""

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from src.errors import ValidationError

logger = logging.getLogger(__name__)

# Below this blocklength the normal approximation is no longer tight.
SHORT_BLOCK_THRESHOLD = 100

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class ChannelParams:
    """Received SNR (linear) and time per channel use."""
    snr_linear: float
    slot_duration: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.snr_linear) or self.snr_linear <= 0:
            raise ValidationError("snr", "received SNR must be finite and > 0", self.snr_linear)
        if not math.isfinite(self.slot_duration) or self.slot_duration <= 0:
            raise ValidationError("slot_duration", "T_u must be finite and > 0", self.slot_duration)

    @classmethod
    def from_db(cls, snr_db: float, slot_duration: float = 1.0) -> "ChannelParams":
        if not math.isfinite(snr_db):
            raise ValidationError("snr_db", "SNR in dB must be finite", snr_db)
        return cls(10.0 ** (snr_db / 10.0), slot_duration)

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr_linear)

    @property
    def capacity(self) -> float:
        """Shannon capacity in bits per channel use."""
        return 0.5 * math.log2(1.0 + self.snr_linear)


@dataclass(frozen=True)
class PacketShape:
    """An update of `update_bits` bits coded over `blocklength` channel uses."""
    update_bits: int
    blocklength: int

    def __post_init__(self):
        if self.update_bits < 1:
            raise ValidationError("update_bits", "l must be >= 1", self.update_bits)
        if self.blocklength < 1:
            raise ValidationError("blocklength", "m must be >= 1", self.blocklength)

    @property
    def rate(self) -> float:
        return self.update_bits / self.blocklength


def q_function(x: ArrayLike) -> ArrayLike:
    """Standard Gaussian tail probability, Q(x) = 0.5 * erfc(x / sqrt(2))."""
    if np.ndim(x) == 0:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError(f"q_function needs a finite argument, got {x!r}")
        return float(0.5 * special.erfc(x / math.sqrt(2.0)))
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def _dispersion_term(snr: float, literal_dispersion: bool) -> float:
    # The printed formula has (1 + gamma^2); the normal approximation it cites
    # uses (1 + gamma)^2. The literal form is only kept for comparison.
    if literal_dispersion:
        return 1.0 - 1.0 / (1.0 + snr ** 2)
    return 1.0 - (1.0 + snr) ** -2


def _z_score(bits: ArrayLike, blocklength: ArrayLike, ch: ChannelParams,
             literal_dispersion: bool) -> ArrayLike:
    dispersion = _dispersion_term(ch.snr_linear, literal_dispersion)
    numerator = ch.capacity - np.divide(bits, blocklength)
    denominator = math.log2(math.e) * np.sqrt(dispersion / (2.0 * np.asarray(blocklength, dtype=float)))
    return numerator / denominator


def is_short_block(shape: PacketShape) -> bool:
    """True when the approximation is outside its tight regime (m < 100)."""
    return shape.blocklength < SHORT_BLOCK_THRESHOLD


def block_error_rate(shape: PacketShape, ch: ChannelParams,
                     literal_dispersion: bool = False) -> float:
    """Normal-approximation block error rate, in [0, 1]."""
    if is_short_block(shape):
        logger.debug("blocklength %d < %d: normal approximation is loose",
                     shape.blocklength, SHORT_BLOCK_THRESHOLD)
    z = float(_z_score(shape.update_bits, shape.blocklength, ch, literal_dispersion))
    return min(1.0, max(0.0, q_function(z)))


def error_rate_profile(bits: int, blocklengths: np.ndarray, ch: ChannelParams,
                       literal_dispersion: bool = False) -> np.ndarray:
    """Vectorised block_error_rate over an array of blocklengths."""
    m = np.asarray(blocklengths, dtype=float)
    if bits < 1 or np.any(m < 1):
        raise ValidationError("blocklength", "bits and every blocklength must be >= 1")
    return np.clip(q_function(_z_score(bits, m, ch, literal_dispersion)), 0.0, 1.0)


def joint_error_approx(eps_d: float, n_sensors: int) -> float:
    """eps_J ~= eps_D ** N, valid when the per-sensor error rate is low."""
    return eps_d ** n_sensors
