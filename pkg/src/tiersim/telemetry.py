"""Access sampling and per-process fast-memory miss-ratio accounting.

Every period-th load of a process is sampled (deterministic stride, period
100 by default, i.e. 1-in-100). Samples are attributed to the tier the page
lived in at access time and drive both the miss-ratio telemetry and the
hotness bins. At each epoch close the instantaneous miss ratio is folded
into an EWMA that the QoS policy consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hotness import HotnessBins, Tier

DEFAULT_SAMPLE_PERIOD = 100
DEFAULT_EWMA_LAMBDA = 0.5
DEFAULT_EPOCH_SECONDS = 1.0


@dataclass
class SamplerConfig:
    period: int = DEFAULT_SAMPLE_PERIOD
    ewma_lambda: float = DEFAULT_EWMA_LAMBDA
    epoch_seconds: float = DEFAULT_EPOCH_SECONDS

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("sampling period must be >= 1")
        if not 0 < self.ewma_lambda <= 1:
            raise ValueError("EWMA weight must be in (0, 1]")
        if self.epoch_seconds <= 0:
            raise ValueError("epoch duration must be positive")


@dataclass
class ProcessQoSState:
    """QoS bookkeeping for one process.

    ``a_fast``/``a_slow`` count this epoch's samples by tier; ``a_miss`` is
    the EWMA miss ratio carried across epochs. ``quota`` is the fast-memory
    byte entitlement the policy maintains.
    """

    pid: int
    t_miss: float
    arrival_seq: int
    a_fast: int = 0
    a_slow: int = 0
    a_miss: float = 0.0
    quota: int = 0
    sample_phase: int = 0  # accesses since the last emitted sample

    def __post_init__(self):
        if not 0 < self.t_miss <= 1:
            raise ValueError(f"t_miss must be in (0, 1], got {self.t_miss}")

    def set_target(self, t_miss: float) -> None:
        if not 0 < t_miss <= 1:
            raise ValueError(f"t_miss must be in (0, 1], got {t_miss}")
        self.t_miss = t_miss


@dataclass
class TelemetryRow:
    """Per-epoch telemetry handed to the metrics recorder."""

    epoch: int
    pid: int
    a_fast: int
    a_slow: int
    inst_fmmr: float
    ewma_fmmr: float
    quota: int


def epoch_fmmr(a_fast: int, a_slow: int) -> float:
    """Instantaneous miss ratio a_slow / (a_slow + a_fast); 0 when idle."""
    total = a_fast + a_slow
    if total == 0:
        return 0.0
    return a_slow / total


def update_ewma(prev: float, inst: float, ewma_lambda: float) -> float:
    return ewma_lambda * inst + (1.0 - ewma_lambda) * prev


class AccessSampler:
    """Deterministic stride sampler over per-process access streams."""

    def __init__(self, config: SamplerConfig | None = None):
        self.config = config or SamplerConfig()

    def sample_indices(self, state: ProcessQoSState, n_accesses: int) -> np.ndarray:
        """Stream positions to sample, advancing the process's stride phase."""
        period = self.config.period
        first = period - 1 - state.sample_phase
        state.sample_phase = (state.sample_phase + n_accesses) % period
        if first >= n_accesses:
            return np.empty(0, dtype=np.int64)
        return np.arange(first, n_accesses, period, dtype=np.int64)

    def ingest_accesses(self, state: ProcessQoSState, pages: np.ndarray,
                        tiers: np.ndarray, bins: HotnessBins | None = None) -> int:
        """Sample one epoch's access stream for a process.

        ``pages`` and ``tiers`` describe the stream in order; tiers use the
        page's placement at access time (in-flight migration never
        reattributes a sample). Sampled accesses bump a_fast/a_slow and are
        forwarded to the hotness bins. Returns the number of samples taken.
        """
        idx = self.sample_indices(state, len(pages))
        if len(idx) == 0:
            return 0
        sampled_tiers = tiers[idx]
        n_fast = int(np.count_nonzero(sampled_tiers == TIER_FAST_CODE))
        state.a_fast += n_fast
        state.a_slow += len(idx) - n_fast
        if bins is not None:
            bins.record_sample_batch(pages[idx])
        return len(idx)

    def close_epoch(self, state: ProcessQoSState, epoch: int) -> TelemetryRow:
        """Fold this epoch's counters into the EWMA and reset them."""
        inst = epoch_fmmr(state.a_fast, state.a_slow)
        state.a_miss = update_ewma(state.a_miss, inst, self.config.ewma_lambda)
        row = TelemetryRow(epoch, state.pid, state.a_fast, state.a_slow,
                           inst, state.a_miss, state.quota)
        state.a_fast = 0
        state.a_slow = 0
        return row


# integer tier codes used on the vectorized access path
TIER_FAST_CODE = 0
TIER_SLOW_CODE = 1

TIER_CODE = {Tier.FAST: TIER_FAST_CODE, Tier.SLOW: TIER_SLOW_CODE}
