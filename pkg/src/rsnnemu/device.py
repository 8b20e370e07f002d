"""One emulated accelerator instance: configuration, memories, replay.

A ``Device`` bundles everything one chip would hold -- network config,
learning parameters, the three weight memories, neuron/readout state, and
trace state -- behind the same lifecycle the hardware exposes: configure
through the register map, initialize weights, then replay framed samples
with learning enabled (training) or disabled (inference).

Instances are independent and single-threaded; nothing is shared.
"""

from __future__ import annotations

import numpy as np

from . import core, learning
from .aer import Sample
from .core import CoreState, NetworkConfig, WeightMemories
from .errors import BusyError, ConfigError, ShapeError
from .learning import LearnParams, TraceState
from .registers import (Reg, RegisterMap, RESET_MODE_CODES, MODE_CODES,
                        GRANULARITY_CODES, save_checkpoint)
from .replay import (ReplayResult, replay_sample, replay_sample_fast,
                     DEFAULT_TICK_BUDGET)

_RESET_TO_CODE = {v: k for k, v in RESET_MODE_CODES.items()}
_MODE_TO_CODE = {v: k for k, v in MODE_CODES.items()}
_GRAN_TO_CODE = {v: k for k, v in GRANULARITY_CODES.items()}


class Device:
    def __init__(self, cfg: NetworkConfig | None = None,
                 params: LearnParams | None = None,
                 seed: int = 0, init_range: int = core.DEFAULT_INIT_RANGE,
                 init_weights: bool = True):
        cfg = (cfg or NetworkConfig(n_in=1, n_rec=1, n_out=1)).validate()
        params = (params or LearnParams()).validate()
        self.regfile: dict[Reg, int] = {
            Reg.N_IN: cfg.n_in, Reg.N_REC: cfg.n_rec, Reg.N_OUT: cfg.n_out,
            Reg.THRESHOLD: cfg.threshold, Reg.LEAK_SHIFT: cfg.leak_shift,
            Reg.READOUT_LEAK_SHIFT: cfg.readout_leak_shift,
            Reg.RESET_MODE: _RESET_TO_CODE[cfg.reset_mode],
            Reg.FRAC_BITS: cfg.frac_bits, Reg.MODE: _MODE_TO_CODE[cfg.mode],
            Reg.LR_SHIFT: params.lr_shift, Reg.TRACE_SHIFT: params.trace_shift,
            Reg.SURROGATE_WIDTH: params.surrogate_width,
            Reg.FEEDBACK_SEED: params.feedback_seed,
            Reg.LEARN_ENABLE: int(params.enabled),
            Reg.UPDATE_GRANULARITY: _GRAN_TO_CODE[params.update_granularity],
            Reg.INIT_SEED: seed, Reg.INIT_RANGE: init_range,
        }
        self.cfg = cfg
        self.params = params
        self.sample_active = False
        self.regs = RegisterMap(self)
        self.state: CoreState = core.new_state(cfg)
        self.weights: WeightMemories = self._zero_weights()
        self.traces: TraceState = learning.new_traces(cfg, params)
        if init_weights:
            self.init_weights()

    # -- register plumbing -------------------------------------------------

    def _zero_weights(self) -> WeightMemories:
        cfg = self.cfg
        return WeightMemories(
            w_inp=np.zeros((cfg.n_in, cfg.n_rec), dtype=np.int8),
            w_rec=np.zeros((cfg.n_rec, cfg.n_rec), dtype=np.int8),
            w_out=np.zeros((cfg.n_rec, cfg.n_out), dtype=np.int8),
        )

    def apply_registers(self) -> None:
        """Materialize config objects from the register file."""
        rf = self.regfile
        if rf[Reg.RESET_MODE] not in RESET_MODE_CODES:
            raise ConfigError(f"bad reset mode code {rf[Reg.RESET_MODE]}")
        if rf[Reg.MODE] not in MODE_CODES:
            raise ConfigError(f"bad mode code {rf[Reg.MODE]}")
        if rf[Reg.UPDATE_GRANULARITY] not in GRANULARITY_CODES:
            raise ConfigError(
                f"bad granularity code {rf[Reg.UPDATE_GRANULARITY]}")
        cfg = NetworkConfig(
            n_in=rf[Reg.N_IN], n_rec=rf[Reg.N_REC], n_out=rf[Reg.N_OUT],
            threshold=rf[Reg.THRESHOLD], leak_shift=rf[Reg.LEAK_SHIFT],
            readout_leak_shift=rf[Reg.READOUT_LEAK_SHIFT],
            reset_mode=RESET_MODE_CODES[rf[Reg.RESET_MODE]],
            frac_bits=rf[Reg.FRAC_BITS], mode=MODE_CODES[rf[Reg.MODE]],
        ).validate()
        params = LearnParams(
            lr_shift=rf[Reg.LR_SHIFT], trace_shift=rf[Reg.TRACE_SHIFT],
            surrogate_width=rf[Reg.SURROGATE_WIDTH],
            feedback_seed=rf[Reg.FEEDBACK_SEED],
            enabled=bool(rf[Reg.LEARN_ENABLE]),
            update_granularity=GRANULARITY_CODES[rf[Reg.UPDATE_GRANULARITY]],
        ).validate()
        topology_changed = (cfg.n_in, cfg.n_rec, cfg.n_out) != \
            (self.cfg.n_in, self.cfg.n_rec, self.cfg.n_out)
        feedback_changed = (params.feedback_seed != self.params.feedback_seed)
        self.cfg, self.params = cfg, params
        if topology_changed:
            self.state = core.new_state(cfg)
            self.weights = self._zero_weights()
        if topology_changed or feedback_changed:
            skip, wsat = 0, 0
            if not topology_changed:
                skip = self.traces.skip_count
                wsat = self.traces.weight_sat_count
            self.traces = learning.new_traces(cfg, params)
            self.traces.skip_count = skip
            self.traces.weight_sat_count = wsat

    def read_status(self, reg: Reg) -> int:
        if reg == Reg.TICK:
            return self.state.tick
        if reg == Reg.SKIP_COUNT:
            return self.traces.skip_count
        if reg == Reg.SAT_COUNT:
            return self.state.sat_count
        if reg == Reg.WEIGHT_SAT_COUNT:
            return self.traces.weight_sat_count
        return int(self.sample_active)

    # -- lifecycle ----------------------------------------------------------

    def init_weights(self) -> None:
        """Config-phase weight randomization from INIT_SEED / INIT_RANGE."""
        if self.sample_active:
            raise BusyError("weight init while a sample is active")
        _, self.weights = core.new_core(self.cfg, self.regfile[Reg.INIT_SEED],
                                        self.regfile[Reg.INIT_RANGE])

    def set_learning(self, enabled: bool) -> None:
        learning.set_learning(self.params, enabled)
        self.regfile[Reg.LEARN_ENABLE] = int(enabled)

    def reset_sample(self) -> None:
        core.reset_sample(self.state)

    def load_weights(self, weights: WeightMemories) -> None:
        expect = ((self.cfg.n_in, self.cfg.n_rec),
                  (self.cfg.n_rec, self.cfg.n_rec),
                  (self.cfg.n_rec, self.cfg.n_out))
        mats = (weights.w_inp, weights.w_rec, weights.w_out)
        for m, shape in zip(mats, expect):
            if m.shape != shape:
                raise ShapeError(f"weight shape {m.shape}, expected {shape}")
        self.weights = WeightMemories(*(m.astype(np.int8, copy=True)
                                        for m in mats))

    def checkpoint(self) -> bytes:
        return save_checkpoint(self.cfg, self.weights)

    def run_sample(self, sample: Sample, learn: bool | None = None,
                   tick_budget: int = DEFAULT_TICK_BUDGET,
                   fast: bool = True) -> ReplayResult:
        """Replay one framed sample: SAMPLE assert, events, decision.

        ``learn=None`` follows the LEARN_ENABLE register; an explicit value
        overrides it for this sample (the per-sample learning gating a
        dataset driver performs for train vs. test passes).
        """
        if self.sample_active:
            raise BusyError("sample already active")
        restore = None
        if learn is not None and learn != self.params.enabled:
            restore = self.params.enabled
            self.params.enabled = learn
        self.sample_active = True
        try:
            fn = replay_sample_fast if fast else replay_sample
            if self.params.enabled:
                result = fn(self.cfg, self.state, self.weights, sample,
                            self.params, self.traces, tick_budget=tick_budget)
            else:
                result = fn(self.cfg, self.state, self.weights, sample,
                            tick_budget=tick_budget)
        finally:
            self.sample_active = False
            if restore is not None:
                self.params.enabled = restore
        return result
