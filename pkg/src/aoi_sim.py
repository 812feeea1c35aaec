"""
Slot-level Monte Carlo simulator for the joint and distributed schemes.

Both schemes follow the zero-wait policy: a packet is generated the moment
the previous transmission ends, so there is never a queue. Every packet is
decoded independently with probability 1 - eps.

Two engines share one stream of success draws per replication:
- the slot path walks every slot and keeps per-sensor ages (readable, and
  checked against the age bookkeeping in debug mode);
- the frame-jump path uses the fact that ages only grow by one per slot
  between deliveries, so each (sub)frame contributes an affine sum.
Both return bit-identical means.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy import stats

from src.aoi_analytic import Scenario, Scheme
from src.errors import ValidationError
from src.fbl_channel import block_error_rate

logger = logging.getLogger(__name__)

DEFAULT_WARMUP = 1000
DEFAULT_REPLICATIONS = 20
DEFAULT_SEED = 20210607
_CHUNK_FRAMES = 1 << 16


@dataclass(frozen=True)
class SimSettings:
    frames: int = 100_000
    warmup_frames: Optional[int] = None     # None -> min(1000, frames // 10)
    replications: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    forced_error_rate: Optional[float] = None
    fast: bool = True
    debug: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.frames < 1:
            raise ValidationError("frames", "K must be >= 1", self.frames)
        if self.replications < 1:
            raise ValidationError("replications", "replications must be >= 1", self.replications)
        if not (0 <= self.seed < 2 ** 64):
            raise ValidationError("seed", "seed must be a 64-bit unsigned integer", self.seed)
        if self.warmup_frames is not None:
            if self.warmup_frames < 0:
                raise ValidationError("warmup", "W must be >= 0", self.warmup_frames)
            if self.frames <= self.warmup_frames:
                raise ValidationError("warmup", "frames K must exceed warm-up frames W",
                                      self.warmup_frames)
        if self.forced_error_rate is not None and not (0.0 <= self.forced_error_rate <= 1.0):
            raise ValidationError("forced_error", "forced error rate must lie in [0, 1]",
                                  self.forced_error_rate)
        if self.workers < 1:
            raise ValidationError("workers", "workers must be >= 1", self.workers)

    @property
    def effective_warmup(self) -> int:
        if self.warmup_frames is not None:
            return self.warmup_frames
        return min(DEFAULT_WARMUP, self.frames // 10)

    @property
    def frames_used(self) -> int:
        return self.frames - self.effective_warmup


@dataclass
class SimState:
    """Per-sensor age bookkeeping for the slot path."""
    per_sensor_age: np.ndarray
    per_sensor_last_gen: np.ndarray
    consecutive_failures: np.ndarray
    current_slot: int = 0

    @classmethod
    def start(cls, initial_ages: np.ndarray) -> "SimState":
        ages = np.asarray(initial_ages, dtype=np.int64).copy()
        return cls(
            per_sensor_age=ages,
            per_sensor_last_gen=-ages,
            consecutive_failures=np.zeros(len(ages), dtype=np.int64),
        )

    def overall_age(self) -> int:
        return int(self.per_sensor_age.max())

    def deliver(self, sensors, success: bool, generated_at: int):
        if success:
            self.per_sensor_last_gen[sensors] = generated_at
            self.per_sensor_age[sensors] = self.current_slot - generated_at
            self.consecutive_failures[sensors] = 0
        else:
            self.consecutive_failures[sensors] += 1

    def advance(self):
        self.per_sensor_age += 1
        self.current_slot += 1

    def check_accounting(self):
        expected = self.current_slot - self.per_sensor_last_gen
        if not np.array_equal(self.per_sensor_age, expected):
            raise AssertionError(
                f"age accounting broken at slot {self.current_slot}: "
                f"{self.per_sensor_age.tolist()} != {expected.tolist()}"
            )


@dataclass(frozen=True)
class SimResult:
    scheme: Scheme
    avg_aoi_slots: float
    ci95_half_width: float
    frames_used: int
    seed: int
    per_replication_means: Tuple[float, ...]


# ---------------------------
# RANDOM STREAMS
# ---------------------------

def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Independent stream for replication r, derived from (seed, r) only."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replication,)))


def _success_chunks(rng: np.random.Generator, eps: float, frames: int,
                    columns: int) -> Iterator[Tuple[int, np.ndarray]]:
    for start in range(0, frames, _CHUNK_FRAMES):
        count = min(_CHUNK_FRAMES, frames - start)
        yield start, rng.random((count, columns)) >= eps


def _failure_runs(success: np.ndarray, carry: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Consecutive failures just before each frame, per column.

    `carry` holds the run length entering the chunk; the second return value
    is the run length leaving it.
    """
    count = success.shape[0]
    idx = np.arange(count, dtype=np.int64)[:, None]
    virtual = -1 - carry
    marker = np.where(success, idx, virtual[None, :])
    last = np.maximum.accumulate(marker, axis=0)
    previous = np.vstack([virtual[None, :], last[:-1]])
    return idx - previous - 1, (count - 1) - last[-1]


# ---------------------------
# JOINT SCHEME
# ---------------------------

def _joint_fast(m: int, eps: float, frames: int, warmup: int,
                rng: np.random.Generator) -> int:
    total = 0
    carry = np.zeros(1, dtype=np.int64)
    for start, success in _success_chunks(rng, eps, frames, 1):
        runs, carry = _failure_runs(success, carry)
        boundary = m * (1 + runs[:, 0])
        kept = boundary[max(0, warmup - start):]
        total += int(np.sum(m * kept)) + len(kept) * (m * (m - 1) // 2)
    return total


def _joint_slots(n_sensors: int, m: int, eps: float, frames: int, warmup: int,
                 rng: np.random.Generator, debug: bool) -> int:
    state = SimState.start(np.full(n_sensors, m))
    everyone = slice(None)
    total = 0
    previous_success = None
    for start, success in _success_chunks(rng, eps, frames, 1):
        for offset, delivered in enumerate(success[:, 0]):
            k = start + offset
            for s in range(m):
                if s == 0 and previous_success is not None:
                    state.deliver(everyone, previous_success, (k - 1) * m)
                if debug:
                    state.check_accounting()
                    if s == 0 and not np.all(state.per_sensor_age == m * (1 + state.consecutive_failures)):
                        raise AssertionError(f"joint boundary age wrong at frame {k}")
                if k >= warmup:
                    total += state.overall_age()
                state.advance()
            previous_success = bool(delivered)
    return total


# ---------------------------
# DISTRIBUTED SCHEME
# ---------------------------

def _distributed_fast(n: int, m_h: int, eps: float, frames: int, warmup: int,
                      rng: np.random.Generator) -> int:
    offsets = (n - np.arange(n, dtype=np.int64)) * m_h
    total = 0
    carry = np.zeros(n, dtype=np.int64)
    segment_ramp = m_h * (m_h - 1) // 2
    for start, success in _success_chunks(rng, eps, frames, n):
        runs, carry = _failure_runs(success, carry)
        boundary = runs * (n * m_h) + offsets[None, :]
        frame_sums = np.zeros(len(boundary), dtype=np.int64)
        for j in range(n):
            ages = boundary + j * m_h
            if j:
                # sensors 0..j-1 already delivered in this super-frame
                fresh = (j - np.arange(j, dtype=np.int64)) * m_h
                ages[:, :j] = np.where(success[:, :j], fresh[None, :], ages[:, :j])
            frame_sums += m_h * ages.max(axis=1) + segment_ramp
        total += int(np.sum(frame_sums[max(0, warmup - start):]))
    return total


def _distributed_slots(n: int, m_h: int, eps: float, frames: int, warmup: int,
                       rng: np.random.Generator, debug: bool) -> int:
    state = SimState.start((n - np.arange(n)) * m_h)
    super_frame = n * m_h
    total = 0
    previous_row = None
    for start, success in _success_chunks(rng, eps, frames, n):
        for offset, row in enumerate(success):
            k = start + offset
            for j in range(n):
                for s in range(m_h):
                    if s == 0 and j > 0:
                        state.deliver(j - 1, bool(row[j - 1]), k * super_frame + (j - 1) * m_h)
                    elif s == 0 and previous_row is not None:
                        state.deliver(n - 1, bool(previous_row[n - 1]),
                                      (k - 1) * super_frame + (n - 1) * m_h)
                    if debug:
                        state.check_accounting()
                        if s == 0 and j == 0:
                            _check_boundary_law(state, n, m_h, k)
                    if k >= warmup:
                        total += state.overall_age()
                    state.advance()
            previous_row = row
    return total


def _check_boundary_law(state: SimState, n: int, m_h: int, k: int):
    # Delta_n(k N M_h) = f_n N M_h + (N - n + 1) M_h
    expected = state.consecutive_failures * n * m_h + (n - np.arange(n)) * m_h
    if not np.array_equal(state.per_sensor_age, expected):
        raise AssertionError(
            f"boundary law broken at super-frame {k}: "
            f"{state.per_sensor_age.tolist()} != {expected.tolist()}"
        )


# ---------------------------
# REPLICATIONS
# ---------------------------

@dataclass(frozen=True)
class _ReplicationTask:
    scheme: Scheme
    n_sensors: int
    blocklength: int
    eps: float
    frames: int
    warmup: int
    seed: int
    index: int
    fast: bool
    debug: bool


def _replication_mean(task: _ReplicationTask) -> float:
    rng = replication_rng(task.seed, task.index)
    used = task.frames - task.warmup
    if task.scheme is Scheme.JOINT:
        if task.fast and not task.debug:
            total = _joint_fast(task.blocklength, task.eps, task.frames, task.warmup, rng)
        else:
            total = _joint_slots(task.n_sensors, task.blocklength, task.eps, task.frames,
                                 task.warmup, rng, task.debug)
        return total / (used * task.blocklength)

    if task.fast and not task.debug:
        total = _distributed_fast(task.n_sensors, task.blocklength, task.eps, task.frames,
                                  task.warmup, rng)
    else:
        total = _distributed_slots(task.n_sensors, task.blocklength, task.eps, task.frames,
                                   task.warmup, rng, task.debug)
    return total / (used * task.n_sensors * task.blocklength)


def _confidence_half_width(means: np.ndarray) -> float:
    if len(means) < 2:
        return 0.0
    spread = float(np.std(means, ddof=1))
    if spread == 0.0:
        return 0.0
    return float(stats.t.ppf(0.975, len(means) - 1)) * spread / math.sqrt(len(means))


def _run(scheme: Scheme, sc: Scenario, st: SimSettings) -> SimResult:
    if scheme is Scheme.JOINT:
        shape = sc.joint_shape
    else:
        shape = sc.sensor_shape
    if st.forced_error_rate is not None:
        eps = float(st.forced_error_rate)
    else:
        eps = block_error_rate(shape, sc.channel)

    warmup = st.effective_warmup
    if st.frames <= warmup:
        raise ValidationError("warmup", "frames K must exceed warm-up frames W", warmup)

    tasks = [
        _ReplicationTask(scheme, sc.num_sensors, shape.blocklength, eps, st.frames, warmup,
                         st.seed, r, st.fast, st.debug)
        for r in range(st.replications)
    ]
    logger.info("simulating %s scheme: eps=%.4g, blocklength=%d, %d x %d frames",
                scheme.value, eps, shape.blocklength, st.replications, st.frames)
    if st.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=st.workers) as pool:
            means: List[float] = list(pool.map(_replication_mean, tasks))
    else:
        means = [_replication_mean(task) for task in tasks]

    values = np.asarray(means, dtype=float)
    return SimResult(
        scheme=scheme,
        avg_aoi_slots=float(np.mean(values)),
        ci95_half_width=_confidence_half_width(values),
        frames_used=st.frames - warmup,
        seed=st.seed,
        per_replication_means=tuple(means),
    )


def simulate_joint(sc: Scenario, st: SimSettings) -> SimResult:
    """Time-average AoI of the zero-wait joint scheme."""
    return _run(Scheme.JOINT, sc, st)


def simulate_distributed(sc: Scenario, st: SimSettings) -> SimResult:
    """Time-average AoI of the round-robin distributed scheme."""
    return _run(Scheme.DISTRIBUTED, sc, st)


def simulate(scheme: Scheme, sc: Scenario, st: SimSettings) -> SimResult:
    return _run(scheme, sc, st)


# ---------------------------
# f_max LAW
# ---------------------------

def empirical_fmax_pmf(n_sensors: int, eps: float, samples: int,
                       seed: int = DEFAULT_SEED) -> np.ndarray:
    """Histogram (as probabilities, index = f) of the max of N geometric failure runs."""
    if not (0.0 <= eps < 1.0):
        raise ValidationError("eps", "error rate must satisfy 0 <= eps < 1", eps)
    if samples < 1:
        raise ValidationError("samples", "samples must be >= 1", samples)
    if n_sensors < 1:
        raise ValidationError("sensors", "N must be >= 1", n_sensors)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    # numpy counts trials up to the first success; failures are one fewer
    runs = rng.geometric(1.0 - eps, size=(samples, n_sensors)) - 1
    return np.bincount(runs.max(axis=1)) / samples


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance; mass missing from either vector counts as mismatch."""
    size = max(len(p), len(q))
    p_full = np.zeros(size)
    q_full = np.zeros(size)
    p_full[:len(p)] = p
    q_full[:len(q)] = q
    missing = max(0.0, 1.0 - p_full.sum()) + max(0.0, 1.0 - q_full.sum())
    return 0.5 * (float(np.abs(p_full - q_full).sum()) + missing)
