"""Fixed-point leaky integrate-and-fire recurrent core.

The core is a single recurrent layer of LIF neurons with three weight
memories (input, recurrent, output) and a vector of non-spiking readout
accumulators. It advances one tick at a time:

* membrane:  v[j] <- leak(v[j]) + pending_input[j] + sum_{i spiked last tick} w_rec[i][j]
* spike where v >= threshold (decided on the pre-reset membrane)
* reset: to zero, or subtract threshold
* readout: y[k] <- leak(y[k]) + sum_{j spiked this tick} w_out[j][k]

Input events accumulate weight rows into a pending-current buffer and take
effect at the next tick; recurrent spikes take effect one tick after they
fire, exactly as a synchronous pipeline would. All arithmetic is saturating
integer arithmetic; saturation events are counted, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ProtocolError
from . import fixedpoint as fx

MAX_N_IN = 256
MAX_N_REC = 256
MAX_N_OUT = 16

RESET_TO_ZERO = "to_zero"
RESET_SUBTRACT = "subtract_threshold"

MODE_CLASSIFICATION = "classification"
MODE_REGRESSION = "regression"

DEFAULT_INIT_RANGE = 16


@dataclass
class NetworkConfig:
    """Topology, fixed-point format, and LIF parameters of one core."""

    n_in: int
    n_rec: int
    n_out: int
    threshold: int = 256
    leak_shift: int = 5
    readout_leak_shift: int = 5
    reset_mode: str = RESET_TO_ZERO
    frac_bits: int = 8
    mode: str = MODE_CLASSIFICATION

    def validate(self) -> "NetworkConfig":
        if not (1 <= self.n_in <= MAX_N_IN):
            raise ConfigError(f"n_in={self.n_in} outside 1..{MAX_N_IN}")
        if not (1 <= self.n_rec <= MAX_N_REC):
            raise ConfigError(f"n_rec={self.n_rec} outside 1..{MAX_N_REC}")
        if not (1 <= self.n_out <= MAX_N_OUT):
            raise ConfigError(f"n_out={self.n_out} outside 1..{MAX_N_OUT}")
        if self.threshold <= 0:
            raise ConfigError("threshold must be positive")
        if self.leak_shift < 1:
            raise ConfigError("leak_shift must be >= 1")
        if self.readout_leak_shift < 1:
            raise ConfigError("readout_leak_shift must be >= 1")
        if self.frac_bits < 0:
            raise ConfigError("frac_bits must be >= 0")
        if self.reset_mode not in (RESET_TO_ZERO, RESET_SUBTRACT):
            raise ConfigError(f"unknown reset_mode {self.reset_mode!r}")
        if self.mode not in (MODE_CLASSIFICATION, MODE_REGRESSION):
            raise ConfigError(f"unknown mode {self.mode!r}")
        return self


@dataclass
class WeightMemories:
    """The three signed 8-bit weight matrices."""

    w_inp: np.ndarray  # (n_in, n_rec) int8
    w_rec: np.ndarray  # (n_rec, n_rec) int8
    w_out: np.ndarray  # (n_rec, n_out) int8

    def checksum(self) -> int:
        """Cheap content fingerprint for purity checks."""
        total = 0
        for m in (self.w_inp, self.w_rec, self.w_out):
            total = (total * 1000003 + int(m.astype(np.int64).sum())) & 0xFFFFFFFF
            total = (total * 1000003 + int((m.astype(np.int64) ** 2).sum())) & 0xFFFFFFFF
        return total

    def copy(self) -> "WeightMemories":
        return WeightMemories(self.w_inp.copy(), self.w_rec.copy(), self.w_out.copy())


@dataclass
class CoreState:
    """Mutable per-sample state of one core instance.

    Membranes are held in int32 buffers but always stay inside the signed
    16-bit window; readouts stay inside the signed 32-bit window. ``v_pre``
    is the pre-reset membrane of the last tick, which is what both the
    spike decision and the learning surrogate look at.
    """

    v: np.ndarray        # (n_rec,) int32, clamped to int16 range
    pending: np.ndarray  # (n_rec,) int32 input current for the next tick
    spiked: np.ndarray   # (n_rec,) bool, spikes of the last completed tick
    v_pre: np.ndarray    # (n_rec,) int32 pre-reset membrane of the last tick
    y: np.ndarray        # (n_out,) int64, clamped to int32 range
    tick: int = 0
    sat_count: int = 0   # membrane + readout saturation events


def new_core(cfg: NetworkConfig, seed: int,
             init_range: int = DEFAULT_INIT_RANGE) -> tuple[CoreState, WeightMemories]:
    """Zeroed state plus uniformly random weights in [-init_range, init_range].

    Fully determined by (cfg, seed, init_range).
    """
    cfg.validate()
    if not (1 <= init_range <= fx.W_MAX):
        raise ConfigError(f"init_range={init_range} outside 1..{fx.W_MAX}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    lo, hi = -init_range, init_range + 1
    weights = WeightMemories(
        w_inp=rng.integers(lo, hi, size=(cfg.n_in, cfg.n_rec), dtype=np.int8),
        w_rec=rng.integers(lo, hi, size=(cfg.n_rec, cfg.n_rec), dtype=np.int8),
        w_out=rng.integers(lo, hi, size=(cfg.n_rec, cfg.n_out), dtype=np.int8),
    )
    return new_state(cfg), weights


def new_state(cfg: NetworkConfig) -> CoreState:
    return CoreState(
        v=np.zeros(cfg.n_rec, dtype=np.int32),
        pending=np.zeros(cfg.n_rec, dtype=np.int32),
        spiked=np.zeros(cfg.n_rec, dtype=bool),
        v_pre=np.zeros(cfg.n_rec, dtype=np.int32),
        y=np.zeros(cfg.n_out, dtype=np.int64),
        tick=0,
        sat_count=0,
    )


def reset_sample(state: CoreState) -> None:
    """Zero the per-sample state; weights are never touched."""
    state.v[:] = 0
    state.pending[:] = 0
    state.spiked[:] = False
    state.v_pre[:] = 0
    state.y[:] = 0
    state.tick = 0


def inject_input_spike(cfg: NetworkConfig, state: CoreState,
                       weights: WeightMemories, ae: int) -> None:
    """Accumulate the input weight row of ``ae`` into the pending current.

    Accumulation only, no multiply; the current is applied at the next tick.
    Control codes (-1, -2) are consumed by the protocol layer and are not
    valid here.
    """
    if not (0 <= ae < cfg.n_in):
        raise ProtocolError(f"input address {ae} outside 0..{cfg.n_in - 1}")
    state.pending += weights.w_inp[ae]


def step_tick(cfg: NetworkConfig, state: CoreState,
              weights: WeightMemories) -> tuple[np.ndarray, np.ndarray]:
    """Advance the core by one tick.

    Returns (indices of neurons that spiked this tick, copy of the readout).
    """
    acc = fx.leak(state.v.astype(np.int64), cfg.leak_shift)
    acc += state.pending
    prev = np.flatnonzero(state.spiked)
    if prev.size:
        acc += weights.w_rec[prev].sum(axis=0, dtype=np.int64)
    acc, over = fx.saturate(acc, fx.V_MIN, fx.V_MAX)
    state.sat_count += over

    state.v_pre[:] = acc
    fired = acc >= cfg.threshold
    spikes = np.flatnonzero(fired)
    if cfg.reset_mode == RESET_TO_ZERO:
        acc[spikes] = 0
    else:
        acc[spikes] -= cfg.threshold
    state.v[:] = acc

    y = fx.leak(state.y, cfg.readout_leak_shift)
    if spikes.size:
        y += weights.w_out[spikes].sum(axis=0, dtype=np.int64)
    y, over = fx.saturate(y, fx.Y_MIN, fx.Y_MAX)
    state.sat_count += over
    state.y[:] = y

    state.spiked[:] = fired
    state.pending[:] = 0
    state.tick += 1
    return spikes, state.y.copy()


def decide(y: np.ndarray) -> int:
    """Classification decision: argmax of the readout, ties to lowest index."""
    return int(np.argmax(y))
