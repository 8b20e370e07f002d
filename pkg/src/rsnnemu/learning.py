"""Online weight-update engine, local in space and time.

The rule keeps one low-pass trace per input neuron and per recurrent neuron,
one boxcar surrogate value per recurrent neuron, and one error value per
readout. Nothing is ever stored per synapse: the eligibility product
psi[j] * x[i] is formed on the fly inside the update sweep, so trace memory
is exactly n_in + 2*n_rec + n_out scalars for any topology.

Error is broadcast to the recurrent layer through a fixed, seeded feedback
matrix B (random signs), never through the transposed output weights, which
keeps the update spatially local. Updates are applied either at every tick
(regression, targets per timestep) or once at the end of a sample
(classification, one label per sample).

Update rule, all integer arithmetic:

    hidden (input and recurrent synapses):
        L[j]      = sum_k B[k][j] * err[k]
        dw[i][j]  = (L[j] * psi[j] * x[i]) >> lr_shift   (truncate toward zero)
    output synapses:
        dw[j][k]  = (err[k] * x_rec[j]) >> lr_shift

Weight additions saturate at +/-127. Synapses whose eligibility or learning
signal is zero are skipped and counted, mirroring the sparsity counters a
hardware update pipeline would expose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ProtocolError
from .core import NetworkConfig, WeightMemories, CoreState
from . import fixedpoint as fx

PER_TICK = "per_tick"
PER_SAMPLE = "per_sample"

# Feedback weights are random signs: strong enough to steer hidden updates,
# and they keep hidden and output update magnitudes on the same scale under
# the shared lr_shift.
FEEDBACK_VALUES = (-1, 1)


@dataclass
class LearnParams:
    """Learning hyperparameters; all rates and decays are powers of two."""

    lr_shift: int = 20
    trace_shift: int = 7
    surrogate_width: int = 128
    feedback_seed: int = 1
    enabled: bool = True
    update_granularity: str = PER_SAMPLE

    def validate(self) -> "LearnParams":
        if self.lr_shift < 0:
            raise ConfigError("lr_shift must be >= 0")
        if not (1 <= self.trace_shift <= 12):
            raise ConfigError("trace_shift must be in 1..12")
        if self.surrogate_width <= 0:
            raise ConfigError("surrogate_width must be positive")
        if self.update_granularity not in (PER_TICK, PER_SAMPLE):
            raise ConfigError(
                f"unknown update_granularity {self.update_granularity!r}")
        return self


@dataclass
class TargetSignal:
    """Training target: one label per sample, or one value per timestep."""

    kind: str                      # "class_label" | "regression_value"
    value: int | None = None       # label for classification
    ticks: np.ndarray | None = None    # (m,) u32 target ticks for regression
    values: np.ndarray | None = None   # (m,) i32 target values for regression

    @classmethod
    def label(cls, value: int) -> "TargetSignal":
        return cls(kind="class_label", value=int(value))

    @classmethod
    def regression(cls, ticks, values) -> "TargetSignal":
        return cls(kind="regression_value",
                   ticks=np.asarray(ticks, dtype=np.uint32),
                   values=np.asarray(values, dtype=np.int32))


@dataclass
class TraceState:
    """Per-neuron learning state: O(neurons), never O(synapses).

    Traces are Q8 values saturating at 16 bits (TRACE_MAX), like the
    membranes: a channel firing every tick rails its trace rather than
    growing without bound, which also bounds update magnitudes.
    """

    x_in: np.ndarray   # (n_in,) int32 presynaptic input traces, Q8
    x_rec: np.ndarray  # (n_rec,) int32 presynaptic recurrent traces, Q8
    psi: np.ndarray    # (n_rec,) uint8 boxcar surrogate of the last tick
    err: np.ndarray    # (n_out,) int32 readout error, Q8
    B: np.ndarray      # (n_out, n_rec) int8 fixed feedback weights
    skip_count: int = 0    # synapses skipped for zero eligibility / signal
    weight_sat_count: int = 0

    def scalar_count(self) -> int:
        """Stored trace scalars; must equal n_in + 2*n_rec + n_out."""
        return self.x_in.size + self.x_rec.size + self.psi.size + self.err.size

    def reset(self) -> None:
        self.x_in[:] = 0
        self.x_rec[:] = 0
        self.psi[:] = 0
        self.err[:] = 0


def new_traces(cfg: NetworkConfig, params: LearnParams) -> TraceState:
    params.validate()
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(params.feedback_seed)))
    feedback = rng.choice(np.array(FEEDBACK_VALUES, dtype=np.int8),
                          size=(cfg.n_out, cfg.n_rec))
    return TraceState(
        x_in=np.zeros(cfg.n_in, dtype=np.int32),
        x_rec=np.zeros(cfg.n_rec, dtype=np.int32),
        psi=np.zeros(cfg.n_rec, dtype=np.uint8),
        err=np.zeros(cfg.n_out, dtype=np.int32),
        B=feedback,
    )


def advance_traces(cfg: NetworkConfig, params: LearnParams, traces: TraceState,
                   rec_spikes: np.ndarray, input_spikes: np.ndarray,
                   state: CoreState) -> None:
    """Per-tick trace update; call once per tick, after step_tick.

    ``rec_spikes`` / ``input_spikes`` are index arrays of this tick's spikes.
    """
    traces.x_in -= traces.x_in >> params.trace_shift
    traces.x_rec -= traces.x_rec >> params.trace_shift
    if len(input_spikes):
        # Binary indicator: a channel hit twice in one tick still adds one.
        idx = np.unique(np.asarray(input_spikes))
        traces.x_in[idx] = np.minimum(traces.x_in[idx] + fx.TRACE_ONE,
                                      fx.TRACE_MAX)
    if len(rec_spikes):
        idx = np.asarray(rec_spikes)
        traces.x_rec[idx] = np.minimum(traces.x_rec[idx] + fx.TRACE_ONE,
                                       fx.TRACE_MAX)
    np.less(np.abs(state.v_pre - cfg.threshold), params.surrogate_width,
            out=traces.psi.view(bool))


def normalize_readout(y: np.ndarray, n_out: int) -> np.ndarray:
    """Fixed-point softmax surrogate: y * ERR_ONE / sum|y|, trunc toward zero.

    Monotone in y and argmax-preserving; when the readout is all zero the
    surrogate is uniform 1/n_out.
    """
    y = np.asarray(y, dtype=np.int64)
    denom = int(np.abs(y).sum())
    if denom == 0:
        return np.full(n_out, fx.ERR_ONE // n_out, dtype=np.int32)
    scaled = y * fx.ERR_ONE
    return (np.sign(scaled) * (np.abs(scaled) // denom)).astype(np.int32)


def compute_error(cfg: NetworkConfig, traces: TraceState, y: np.ndarray,
                  target: TargetSignal, tick: int | None = None) -> np.ndarray:
    """Readout error for the current scope; also stored in traces.err.

    Classification: err = onehot(label)*ERR_ONE - normalize(y), at sample end.
    Regression:     err = target(tick) - y, every tick with a target.
    """
    if target.kind == "class_label":
        label = int(target.value)
        if not (0 <= label < cfg.n_out):
            raise ProtocolError(f"label {label} outside 0..{cfg.n_out - 1}")
        err = -normalize_readout(y, cfg.n_out)
        err[label] += fx.ERR_ONE
    else:
        if tick is None:
            raise ProtocolError("regression error needs the current tick")
        hits = np.flatnonzero(target.ticks == tick)
        if hits.size == 0:
            err = np.zeros(cfg.n_out, dtype=np.int32)
        else:
            # Consecutive same-tick targets map to consecutive readouts.
            tgt = np.zeros(cfg.n_out, dtype=np.int64)
            vals = target.values[hits]
            tgt[: min(vals.size, cfg.n_out)] = vals[: cfg.n_out]
            err = np.clip(tgt - y, -fx.ERR_MAX, fx.ERR_MAX).astype(np.int32)
    traces.err[:] = err
    return err


def apply_update(cfg: NetworkConfig, params: LearnParams,
                 weights: WeightMemories, traces: TraceState) -> None:
    """One update sweep over the three weight memories.

    No-op when learning is disabled. The sweep walks presynaptic rows with a
    nonzero trace and adds the shifted eligibility product; peak temporary
    storage is one row of n_rec values, never a synapse-shaped array.
    """
    if not params.enabled:
        return
    n_in, n_rec, n_out = cfg.n_in, cfg.n_rec, cfg.n_out
    err = traces.err.astype(np.int64)

    # Hidden update: learning signal gated by the surrogate.
    signal = err @ traces.B.astype(np.int64)
    signal *= traces.psi
    active = np.flatnonzero(signal)

    sat = 0
    for x, w in ((traces.x_in, weights.w_inp), (traces.x_rec, weights.w_rec)):
        rows = np.flatnonzero(x)
        traces.skip_count += x.size * n_rec - rows.size * active.size
        for i in rows:
            delta = fx.shift_to_zero(signal[active] * int(x[i]), params.lr_shift)
            if not delta.any():
                continue
            nw = w[i, active].astype(np.int64) + delta
            sat += int(np.count_nonzero((nw > fx.W_MAX) | (nw < fx.W_MIN)))
            w[i, active] = np.clip(nw, fx.W_MIN, fx.W_MAX)

    # Output update: err[k] * x_rec[j], no feedback matrix involved.
    rows = np.flatnonzero(traces.x_rec)
    cols = np.flatnonzero(err)
    traces.skip_count += n_rec * n_out - rows.size * cols.size
    for j in rows:
        delta = fx.shift_to_zero(err[cols] * int(traces.x_rec[j]), params.lr_shift)
        if not delta.any():
            continue
        nw = weights.w_out[j, cols].astype(np.int64) + delta
        sat += int(np.count_nonzero((nw > fx.W_MAX) | (nw < fx.W_MIN)))
        weights.w_out[j, cols] = np.clip(nw, fx.W_MIN, fx.W_MAX)

    traces.weight_sat_count += sat


def set_learning(params: LearnParams, enabled: bool) -> None:
    """Toggle the update module; inference leaves weights bit-identical."""
    params.enabled = bool(enabled)
