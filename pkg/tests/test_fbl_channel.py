"""
Test suite for the finite-blocklength channel model

Tests the Q-function, the normal-approximation block error rate and the
parameter validation of ChannelParams / PacketShape.
"""

import os
import sys

# ensure project root is on path so `import src` works
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

import numpy as np
import pytest

from src.errors import ValidationError
from src.fbl_channel import (
    ChannelParams,
    PacketShape,
    block_error_rate,
    error_rate_profile,
    is_short_block,
    joint_error_approx,
    q_function,
)

# 0.5 * erfc(x / sqrt(2)) evaluated with 30-digit arithmetic
Q_REFERENCE = {
    -3.0: 0.9986501019683699054733482,
    -1.0: 0.8413447460685429485852325,
    0.0: 0.5,
    1.0: 0.1586552539314570514147675,
    1.96: 0.02499789514822043413658427,
    2.48: 0.006569119135546762569945242,
    5.0: 2.866515718791939116737523e-07,
}


class TestQFunction:
    """Gaussian tail probability."""

    @pytest.mark.parametrize("x,expected", sorted(Q_REFERENCE.items()))
    def test_matches_high_precision_reference(self, x, expected):
        """Agrees with a 30-digit erfc evaluation"""
        assert abs(q_function(x) - expected) <= 1e-10
        assert q_function(x) == pytest.approx(expected, rel=1e-12)

    def test_symmetry(self):
        """Q(x) + Q(-x) = 1"""
        for x in (0.1, 0.7, 1.5, 3.3, 6.0):
            assert q_function(x) + q_function(-x) == pytest.approx(1.0, abs=1e-12)

    def test_half_at_zero(self):
        """Q(0) = 0.5 exactly"""
        assert q_function(0.0) == 0.5

    def test_scalar_returns_float(self):
        """Scalars in, plain floats out"""
        assert isinstance(q_function(1), float)

    def test_vectorised(self):
        """Arrays are evaluated elementwise"""
        xs = np.array([-1.0, 0.0, 1.0])
        out = q_function(xs)
        assert out.shape == (3,)
        assert out[1] == 0.5
        assert out[0] == pytest.approx(Q_REFERENCE[-1.0], rel=1e-12)

    def test_rejects_non_finite_scalar(self):
        """NaN is refused"""
        with pytest.raises(ValueError):
            q_function(float("nan"))


class TestChannelParams:
    """SNR and slot duration validation."""

    def test_capacity(self):
        """snr 3 carries one bit per channel use"""
        assert ChannelParams(3.0).capacity == pytest.approx(1.0)

    def test_from_db(self):
        """dB input is converted to linear"""
        ch = ChannelParams.from_db(10 * np.log10(3.0))
        assert ch.snr_linear == pytest.approx(3.0, rel=1e-12)
        assert ch.snr_db == pytest.approx(4.771212547, rel=1e-9)

    @pytest.mark.parametrize("snr", [0.0, -1.0, float("inf"), float("nan")])
    def test_rejects_bad_snr(self, snr):
        """Non-positive or non-finite snr names the key"""
        with pytest.raises(ValidationError) as exc:
            ChannelParams(snr)
        assert exc.value.key == "snr"

    def test_rejects_bad_slot_duration(self):
        """Slot duration must be positive"""
        with pytest.raises(ValidationError) as exc:
            ChannelParams(3.0, slot_duration=0.0)
        assert exc.value.key == "slot_duration"


class TestPacketShape:

    def test_rate(self):
        """Rate is bits over channel uses"""
        assert PacketShape(120, 150).rate == pytest.approx(0.8)

    @pytest.mark.parametrize("bits,m", [(0, 10), (10, 0)])
    def test_rejects_empty_packets(self, bits, m):
        """Zero bits or zero channel uses are refused"""
        with pytest.raises(ValidationError):
            PacketShape(bits, m)


class TestBlockErrorRate:
    """Normal approximation of the block error rate."""

    def test_sensor_packet_reference(self):
        """120 bits in 150 uses at snr 3"""
        eps = block_error_rate(PacketShape(120, 150), ChannelParams(3.0))
        assert eps == pytest.approx(0.006571353433649381870838322, rel=1e-9)

    def test_joint_packet_reference(self):
        """480 bits in 600 uses at snr 3"""
        eps = block_error_rate(PacketShape(480, 600), ChannelParams(3.0))
        assert eps == pytest.approx(3.529061892309563832539592e-07, rel=1e-8)

    def test_short_packet_reference(self):
        """80 bits in 100 uses at snr 3"""
        eps = block_error_rate(PacketShape(80, 100), ChannelParams(3.0))
        assert eps == pytest.approx(0.02144330977646975332294441, rel=1e-9)

    def test_rate_above_capacity(self):
        """Rates far above capacity almost surely fail"""
        eps = block_error_rate(PacketShape(120, 50), ChannelParams(3.0))
        assert eps > 1 - 1e-12
        assert eps <= 1.0

    def test_rate_at_capacity_is_one_half(self):
        """Rate equal to capacity gives eps = 0.5"""
        # capacity at snr 3 is exactly 1 bit per channel use
        assert block_error_rate(PacketShape(200, 200), ChannelParams(3.0)) == pytest.approx(0.5)

    def test_longer_block_same_rate_is_more_reliable(self):
        """Same rate, longer block, lower eps"""
        ch = ChannelParams(3.0)
        assert block_error_rate(PacketShape(480, 600), ch) < block_error_rate(PacketShape(120, 150), ch)

    def test_literal_dispersion_differs(self):
        """The literal dispersion variant gives a smaller eps"""
        ch = ChannelParams(3.0)
        shape = PacketShape(120, 150)
        literal = block_error_rate(shape, ch, literal_dispersion=True)
        # 1 - 1/(1 + 9) < 1 - 1/16: smaller dispersion, smaller error rate
        assert literal < block_error_rate(shape, ch)

    def test_short_block_indicator(self):
        """Blocks under 100 uses are short"""
        assert is_short_block(PacketShape(80, 99))
        assert not is_short_block(PacketShape(80, 100))


class TestErrorRateProfile:

    def test_matches_scalar_evaluation(self):
        """Vector profile equals scalar evaluation"""
        ch = ChannelParams(3.0)
        ms = np.array([50, 150, 300])
        profile = error_rate_profile(120, ms, ch)
        for m, eps in zip(ms, profile):
            assert eps == pytest.approx(block_error_rate(PacketShape(120, int(m)), ch), rel=1e-12)

    def test_rejects_zero_blocklength(self):
        """Any zero blocklength is refused"""
        with pytest.raises(ValidationError):
            error_rate_profile(120, np.array([0, 10]), ChannelParams(3.0))


def test_joint_error_approx():
    """eps_J is approximated by eps_D^N"""
    assert joint_error_approx(0.1, 3) == pytest.approx(1e-3)
