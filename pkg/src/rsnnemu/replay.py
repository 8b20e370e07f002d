"""Tick-accurate replay of framed samples into a core instance.

Replay is the software analogue of the FIFO-draining state machines in
front of the accelerator: events whose timestamp equals t are injected
before tick t is stepped, ticks advance monotonically, the end event's
timestamp is the final tick, and the readout decision is taken at each
timestep (regression) or at the end of the sample (classification).

Two implementations are provided and kept bit-identical (tested):

* the operations path in :mod:`rsnnemu.core` / :mod:`rsnnemu.learning`,
  stepped from Python, with an optional injection hook for instrumentation;
* a compiled fast path (numba) that runs a whole sample per call, used by
  the harness where tens of millions of ticks are replayed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core, learning
from . import fixedpoint as fx
from .aer import Sample
from .core import CoreState, NetworkConfig, WeightMemories, MODE_CLASSIFICATION
from .errors import ProtocolError, RunawayError
from .learning import LearnParams, TraceState, PER_TICK

try:
    from numba import njit
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]

DEFAULT_TICK_BUDGET = 10_000_000


@dataclass
class ReplayResult:
    decision: int
    y: np.ndarray
    n_ticks: int
    n_input_events: int
    y_history: np.ndarray | None = None  # (n_ticks, n_out) when collected


def replay_sample(cfg: NetworkConfig, state: CoreState, weights: WeightMemories,
                  sample: Sample, params: LearnParams | None = None,
                  traces: TraceState | None = None,
                  tick_budget: int = DEFAULT_TICK_BUDGET,
                  inject_hook=None, collect_y: bool = False) -> ReplayResult:
    """Replay one sample through the operations path.

    Resets the per-sample state first (SAMPLE assertion), then injects and
    steps tick by tick. With ``traces`` given, traces advance every tick and
    weight updates fire according to ``params``; with ``traces=None`` the
    whole update module is gated off, as in inference.
    """
    duration = sample.duration_ticks
    if duration > tick_budget:
        raise RunawayError(f"sample needs {duration} ticks, budget {tick_budget}")

    core.reset_sample(state)
    learn = traces is not None and params is not None
    if learn:
        traces.reset()

    ae, ts = sample.input_arrays()
    target = sample.target
    is_cls = cfg.mode == MODE_CLASSIFICATION
    per_tick = learn and not is_cls and params.update_granularity == PER_TICK
    history = np.zeros((duration, cfg.n_out), dtype=np.int64) if collect_y else None

    ev = 0
    for t in range(duration):
        tick_inputs = []
        while ev < ae.size and ts[ev] == t:
            if inject_hook is not None:
                inject_hook(int(ae[ev]), t)
            core.inject_input_spike(cfg, state, weights, int(ae[ev]))
            tick_inputs.append(int(ae[ev]))
            ev += 1
        spikes, y = core.step_tick(cfg, state, weights)
        if learn:
            learning.advance_traces(cfg, params, traces, spikes,
                                    np.asarray(tick_inputs, dtype=np.int64), state)
            # Disabling learning gates the whole update module, error
            # computation included.
            if (per_tick and params.enabled and target is not None
                    and np.any(target.ticks == t)):
                learning.compute_error(cfg, traces, y, target, tick=t)
                learning.apply_update(cfg, params, weights, traces)
        if history is not None:
            history[t] = y

    if learn and params.enabled and target is not None and not per_tick:
        if is_cls:
            learning.compute_error(cfg, traces, state.y, target)
            learning.apply_update(cfg, params, weights, traces)
        elif np.any(target.ticks == duration - 1):
            learning.compute_error(cfg, traces, state.y, target, tick=duration - 1)
            learning.apply_update(cfg, params, weights, traces)

    return ReplayResult(decision=core.decide(state.y), y=state.y.copy(),
                        n_ticks=duration, n_input_events=int(ae.size),
                        y_history=history)


# ---------------------------------------------------------------------------
# Compiled fast path


@njit(cache=True)
def _update_sweep(w_inp, w_rec, w_out, x_in, x_rec, psi, err, B,
                  lr_shift, counters):
    n_in = x_in.shape[0]
    n_rec = x_rec.shape[0]
    n_out = err.shape[0]

    sig = np.zeros(n_rec, dtype=np.int64)
    na = 0
    for j in range(n_rec):
        if psi[j] != 0:
            s = np.int64(0)
            for k in range(n_out):
                s += np.int64(B[k, j]) * np.int64(err[k])
            sig[j] = s
            if s != 0:
                na += 1

    for src in range(2):
        x = x_in if src == 0 else x_rec
        w = w_inp if src == 0 else w_rec
        nx = 0
        for i in range(x.shape[0]):
            xi = np.int64(x[i])
            if xi == 0:
                continue
            nx += 1
            for j in range(n_rec):
                g = sig[j]
                if g == 0:
                    continue
                p = g * xi
                d = (p >> lr_shift) if p >= 0 else -((-p) >> lr_shift)
                if d != 0:
                    nw = np.int64(w[i, j]) + d
                    if nw > fx.W_MAX:
                        nw = fx.W_MAX
                        counters[1] += 1
                    elif nw < fx.W_MIN:
                        nw = fx.W_MIN
                        counters[1] += 1
                    w[i, j] = nw
        counters[2] += x.shape[0] * n_rec - nx * na

    ne = 0
    for k in range(n_out):
        if err[k] != 0:
            ne += 1
    nx = 0
    for j in range(n_rec):
        xj = np.int64(x_rec[j])
        if xj == 0:
            continue
        nx += 1
        for k in range(n_out):
            e = np.int64(err[k])
            if e == 0:
                continue
            p = e * xj
            d = (p >> lr_shift) if p >= 0 else -((-p) >> lr_shift)
            if d != 0:
                nw = np.int64(w_out[j, k]) + d
                if nw > fx.W_MAX:
                    nw = fx.W_MAX
                    counters[1] += 1
                elif nw < fx.W_MIN:
                    nw = fx.W_MIN
                    counters[1] += 1
                w_out[j, k] = nw
    counters[2] += n_rec * n_out - nx * ne


@njit(cache=True)
def _run_sample(ae, ts, tgt_ticks, tgt_vals, label, duration,
                v, pending, spiked, v_pre, y,
                w_inp, w_rec, w_out,
                x_in, x_rec, psi, err, B,
                threshold, leak_shift, ro_shift, reset_to_zero, is_cls,
                do_traces, do_update, per_tick,
                trace_shift, width, lr_shift, counters):
    n_rec = v.shape[0]
    n_out = y.shape[0]
    n_in = x_in.shape[0]

    rec_in = np.zeros(n_rec, dtype=np.int64)
    spike_idx = np.empty(n_rec, dtype=np.int64)
    in_flag = np.zeros(n_in, dtype=np.uint8)

    ev = 0
    tp = 0
    n_events = ae.shape[0]
    n_tgt = tgt_ticks.shape[0]

    for t in range(duration):
        while ev < n_events and ts[ev] == t:
            a = ae[ev]
            for j in range(n_rec):
                pending[j] += w_inp[a, j]
            if do_traces:
                in_flag[a] = 1
            ev += 1

        # recurrent input from last tick's spikes
        any_prev = False
        for i in range(n_rec):
            if spiked[i]:
                any_prev = True
                for j in range(n_rec):
                    rec_in[j] += w_rec[i, j]

        nspk = 0
        for j in range(n_rec):
            vv = np.int64(v[j])
            vv = vv - (vv >> leak_shift) + pending[j]
            if any_prev:
                vv += rec_in[j]
                rec_in[j] = 0
            if vv > fx.V_MAX:
                vv = fx.V_MAX
                counters[0] += 1
            elif vv < fx.V_MIN:
                vv = fx.V_MIN
                counters[0] += 1
            v_pre[j] = vv
            if vv >= threshold:
                spike_idx[nspk] = j
                nspk += 1
                spiked[j] = True
                vv = 0 if reset_to_zero else vv - threshold
            else:
                spiked[j] = False
            v[j] = vv
            pending[j] = 0

        for k in range(n_out):
            yy = y[k]
            yy = yy - (yy >> ro_shift)
            y[k] = yy
        for s in range(nspk):
            j = spike_idx[s]
            for k in range(n_out):
                y[k] += w_out[j, k]
        for k in range(n_out):
            if y[k] > fx.Y_MAX:
                y[k] = fx.Y_MAX
                counters[0] += 1
            elif y[k] < fx.Y_MIN:
                y[k] = fx.Y_MIN
                counters[0] += 1

        if do_traces:
            for i in range(n_in):
                x_in[i] -= x_in[i] >> trace_shift
                if in_flag[i] != 0:
                    xi = x_in[i] + fx.TRACE_ONE
                    x_in[i] = xi if xi < fx.TRACE_MAX else fx.TRACE_MAX
                    in_flag[i] = 0
            for j in range(n_rec):
                x_rec[j] -= x_rec[j] >> trace_shift
                d = np.int64(v_pre[j]) - threshold
                psi[j] = 1 if (-width < d < width) else 0
            for s in range(nspk):
                xj = x_rec[spike_idx[s]] + fx.TRACE_ONE
                x_rec[spike_idx[s]] = xj if xj < fx.TRACE_MAX else fx.TRACE_MAX

            if (not is_cls) and per_tick and do_update:
                has_tgt = False
                while tp < n_tgt and tgt_ticks[tp] < t:
                    tp += 1
                if tp < n_tgt and tgt_ticks[tp] == t:
                    has_tgt = True
                    for k in range(n_out):
                        err[k] = 0
                    k = 0
                    q = tp
                    while q < n_tgt and tgt_ticks[q] == t:
                        if k < n_out:
                            e = tgt_vals[q] - y[k]
                            if e > fx.ERR_MAX:
                                e = fx.ERR_MAX
                            elif e < -fx.ERR_MAX:
                                e = -fx.ERR_MAX
                            err[k] = e
                            k += 1
                        q += 1
                    for kk in range(k, n_out):
                        e = np.int64(0) - y[kk]
                        if e > fx.ERR_MAX:
                            e = fx.ERR_MAX
                        elif e < -fx.ERR_MAX:
                            e = -fx.ERR_MAX
                        err[kk] = e
                if has_tgt and do_update:
                    _update_sweep(w_inp, w_rec, w_out, x_in, x_rec, psi, err,
                                  B, lr_shift, counters)

    # end of sample
    if do_traces and do_update and is_cls and label >= 0:
        denom = np.int64(0)
        for k in range(n_out):
            denom += y[k] if y[k] >= 0 else -y[k]
        for k in range(n_out):
            if denom == 0:
                p = np.int64(fx.ERR_ONE // n_out)
            else:
                s = y[k] * fx.ERR_ONE
                p = (s // denom) if s >= 0 else -((-s) // denom)
            err[k] = (fx.ERR_ONE if k == label else 0) - p
        _update_sweep(w_inp, w_rec, w_out, x_in, x_rec, psi, err, B,
                      lr_shift, counters)
    if do_traces and do_update and (not is_cls) and (not per_tick) and n_tgt > 0:
        t_last = duration - 1
        has_tgt = False
        for k in range(n_out):
            err[k] = 0
        k = 0
        for q in range(n_tgt):
            if tgt_ticks[q] == t_last:
                has_tgt = True
                if k < n_out:
                    e = tgt_vals[q] - y[k]
                    if e > fx.ERR_MAX:
                        e = fx.ERR_MAX
                    elif e < -fx.ERR_MAX:
                        e = -fx.ERR_MAX
                    err[k] = e
                    k += 1
        if has_tgt:
            for kk in range(k, n_out):
                e = np.int64(0) - y[kk]
                if e > fx.ERR_MAX:
                    e = fx.ERR_MAX
                elif e < -fx.ERR_MAX:
                    e = -fx.ERR_MAX
                err[kk] = e
            _update_sweep(w_inp, w_rec, w_out, x_in, x_rec, psi, err, B,
                          lr_shift, counters)

    best = np.int64(0)
    for k in range(1, n_out):
        if y[k] > y[best]:
            best = k
    return best


def replay_sample_fast(cfg: NetworkConfig, state: CoreState,
                       weights: WeightMemories, sample: Sample,
                       params: LearnParams | None = None,
                       traces: TraceState | None = None,
                       tick_budget: int = DEFAULT_TICK_BUDGET) -> ReplayResult:
    """Replay one sample through the compiled kernel (bit-identical to
    :func:`replay_sample`, minus hooks and history)."""
    if not NUMBA_AVAILABLE:  # pragma: no cover
        return replay_sample(cfg, state, weights, sample, params, traces,
                             tick_budget)
    duration = sample.duration_ticks
    if duration > tick_budget:
        raise RunawayError(f"sample needs {duration} ticks, budget {tick_budget}")

    core.reset_sample(state)
    learn = traces is not None and params is not None
    if learn:
        traces.reset()

    ae, ts = sample.input_arrays()
    target = sample.target
    is_cls = cfg.mode == MODE_CLASSIFICATION
    label = -1
    tgt_ticks = np.empty(0, dtype=np.int64)
    tgt_vals = np.empty(0, dtype=np.int64)
    if target is not None:
        if target.kind == "class_label":
            label = int(target.value)
            if learn and params.enabled and not (0 <= label < cfg.n_out):
                raise ProtocolError(
                    f"label {label} outside 0..{cfg.n_out - 1}")
        else:
            tgt_ticks = target.ticks.astype(np.int64)
            tgt_vals = target.values.astype(np.int64)

    if learn:
        tr = traces
        do_update = bool(params.enabled)
        per_tick = params.update_granularity == PER_TICK
        trace_shift, lr_shift, width = (params.trace_shift, params.lr_shift,
                                        params.surrogate_width)
    else:
        tr = _EMPTY_TRACES.setdefault(
            (cfg.n_in, cfg.n_rec, cfg.n_out),
            learning.new_traces(cfg, LearnParams(feedback_seed=0)))
        do_update = False
        per_tick = False
        trace_shift, lr_shift, width = 1, 0, 1

    counters = np.zeros(3, dtype=np.int64)
    decision = _run_sample(
        ae, ts, tgt_ticks, tgt_vals, label, duration,
        state.v, state.pending, state.spiked, state.v_pre, state.y,
        weights.w_inp, weights.w_rec, weights.w_out,
        tr.x_in, tr.x_rec, tr.psi, tr.err, tr.B,
        cfg.threshold, cfg.leak_shift, cfg.readout_leak_shift,
        cfg.reset_mode == core.RESET_TO_ZERO, is_cls,
        learn, do_update, per_tick,
        trace_shift, width, lr_shift, counters)

    state.tick = duration
    state.sat_count += int(counters[0])
    if learn:
        traces.weight_sat_count += int(counters[1])
        traces.skip_count += int(counters[2])
    return ReplayResult(decision=int(decision), y=state.y.copy(),
                        n_ticks=duration, n_input_events=int(ae.size))


# Placeholder trace arrays per topology for inference calls: the kernel
# signature needs arrays, but with learning gated off it never reads or
# writes them, so sharing across instances is safe.
_EMPTY_TRACES: dict = {}


def warm_up() -> None:
    """Force kernel compilation so benchmarks never time the JIT."""
    from .aer import Event
    cfg = NetworkConfig(n_in=2, n_rec=2, n_out=2).validate()
    state, weights = core.new_core(cfg, seed=0)
    params = LearnParams(feedback_seed=0)
    traces = learning.new_traces(cfg, params)
    events = [Event(0, 0), Event(-2, 1, payload=1), Event(-1, 1)]
    sample = Sample(events=events, target=learning.TargetSignal.label(1),
                    duration_ticks=2)
    replay_sample_fast(cfg, state, weights, sample, params, traces)
    replay_sample_fast(cfg, state, weights, sample)
