"""Dataset generation and ingestion.

Two synthetic generators plus a loader for recorded event files:

* ``gen_cue_samples``: delayed cue accumulation (T-maze). Cues arrive as
  dense spike bursts on a left or a right channel group; after a silent
  delay a recall channel fires and the network must report the majority
  side. The label is decidable by recounting emitted cue events, which is
  what the oracle tests do.

* ``gen_spid_surrogate``: stand-in for the recorded robot-arm dataset.
  Four joints with six polarized spiking signals each (24 channels) follow
  periodic rate envelopes; the loaded class raises error-channel rates,
  damps motor channels, and lags all direction changes. Per-trajectory gain
  spread keeps total event count an imperfect classifier while the channel
  composition stays separable.

All randomness derives from (seed, sample index), so generation is
deterministic and order-independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aer import Event, EventStream, Sample, StreamHeader, parse_stream, \
    serialize_stream
from .core import MODE_CLASSIFICATION
from .errors import ConfigError, ShapeError, SplitError
from .learning import TargetSignal

DEFAULT_TICK_US = 1000  # 1 ms ticks


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


@dataclass
class Dataset:
    samples: list[Sample]
    n_in: int
    tick_us: int = DEFAULT_TICK_US
    mode: str = MODE_CLASSIFICATION

    def labels(self) -> list[int]:
        return [s.label for s in self.samples]

    def to_stream(self) -> EventStream:
        return EventStream(
            header=StreamHeader(n_in=self.n_in, tick_us=self.tick_us,
                                mode=self.mode),
            samples=self.samples)


# ---------------------------------------------------------------------------
# Delayed cue accumulation (T-maze)


@dataclass
class CueTaskConfig:
    n_cues: int = 7
    cue_period_ticks: int = 100
    delay_ticks: int = 500
    cue_group_size: int = 4
    noise_rate: float = 0.0    # spikes/tick/neuron on distractor channels
    seed: int = 0
    n_in: int = 24

    def validate(self) -> "CueTaskConfig":
        if self.n_cues < 1 or self.n_cues % 2 == 0:
            raise ConfigError("n_cues must be odd so the majority is defined")
        if self.cue_period_ticks < 2 or self.delay_ticks < 0:
            raise ConfigError("bad cue timing")
        if self.cue_group_size < 1:
            raise ConfigError("cue_group_size must be >= 1")
        if 2 * self.cue_group_size + 1 > self.n_in:
            raise ConfigError(
                f"two groups of {self.cue_group_size} plus a recall channel "
                f"exceed n_in={self.n_in}")
        if not (0.0 <= self.noise_rate <= 1.0):
            raise ConfigError("noise_rate must be a probability")
        return self

    @property
    def left_channels(self):
        return range(0, self.cue_group_size)

    @property
    def right_channels(self):
        return range(self.cue_group_size, 2 * self.cue_group_size)

    @property
    def recall_channel(self) -> int:
        return 2 * self.cue_group_size

    @property
    def duration_ticks(self) -> int:
        # cues, silent delay, recall window of one cue period
        return (self.n_cues + 1) * self.cue_period_ticks + self.delay_ticks


CUE_BURST_DENSITY = 0.9  # per-tick spike probability inside a cue burst


def gen_cue_sample(cfg: CueTaskConfig, index: int) -> Sample:
    rng = _rng(cfg.seed, 0x0C0E, index)
    sides = rng.integers(0, 2, size=cfg.n_cues)
    label = int(sides.sum() * 2 > cfg.n_cues)

    period = cfg.cue_period_ticks
    active = (period + 1) // 2  # cue burst fills the first half-window
    duration = cfg.duration_ticks
    recall_start = cfg.n_cues * period + cfg.delay_ticks

    noise_channels = [c for c in range(cfg.n_in)
                      if c > cfg.recall_channel]
    noise = (rng.random((duration, len(noise_channels))) < cfg.noise_rate
             ) if (noise_channels and cfg.noise_rate > 0) else None

    events: list[Event] = []
    for t in range(duration):
        cue = t // period
        if cue < cfg.n_cues and (t % period) < active:
            group = cfg.right_channels if sides[cue] else cfg.left_channels
            for ch in group:
                # dense burst with per-sample jitter, so samples sharing a
                # cue sequence still differ spike-for-spike
                if rng.random() < CUE_BURST_DENSITY:
                    events.append(Event(ch, t))
        if t >= recall_start:  # recall cue holds until the decision tick
            events.append(Event(cfg.recall_channel, t))
        if noise is not None:
            for k in np.flatnonzero(noise[t]):
                events.append(Event(noise_channels[k], t))
    events.append(Event(-2, duration - 1, payload=label))
    events.append(Event(-1, duration - 1))
    return Sample(events=events, target=TargetSignal.label(label),
                  duration_ticks=duration)


def gen_cue_samples(cfg: CueTaskConfig, count: int) -> Dataset:
    cfg.validate()
    samples = [gen_cue_sample(cfg, i) for i in range(count)]
    return Dataset(samples=samples, n_in=cfg.n_in)


def recount_cue_label(cfg: CueTaskConfig, sample: Sample) -> int:
    """Brute-force majority recount from the emitted cue events."""
    left = set(cfg.left_channels)
    right = set(cfg.right_channels)
    period = cfg.cue_period_ticks
    votes = {}
    for ev in sample.events:
        if ev.ae < 0 or ev.ts >= cfg.n_cues * period:
            continue
        if ev.ae in left:
            votes[ev.ts // period] = 0
        elif ev.ae in right:
            votes[ev.ts // period] = 1
    return int(sum(votes.values()) * 2 > len(votes))


# ---------------------------------------------------------------------------
# Robot-arm (SPID) surrogate

N_JOINTS = 4
SIGNALS_PER_JOINT = 6  # 3 signal types x 2 polarities
TYPE_COMMAND, TYPE_ERROR, TYPE_MOTOR = 0, 1, 2


@dataclass
class SpidSurrogateConfig:
    n_channels: int = 24
    n_trajectories: int = 18
    sample_ticks: int = 2250  # 2250 ms at 1 ms ticks
    base_rate: float = 0.22
    load_gain: float = 0.25       # error channels x(1+g), motor x(1-g/4)
    gain_spread: float = 0.5      # per-trajectory amplitude spread
    phase_lag_ticks: int = 60     # loaded samples lag direction changes
    rest_ticks: int = 250          # settling window closing every sample
    rest_error_hold: float = 0.6   # loaded: servo error stays hot at rest
    rest_command_hold: float = 0.5 # posture-hold command activity at rest
    rest_floor: float = 0.1        # motor (and unloaded error) rest level
    seed: int = 0

    def validate(self) -> "SpidSurrogateConfig":
        if self.n_channels != N_JOINTS * SIGNALS_PER_JOINT:
            raise ConfigError("surrogate is fixed at 24 channels (4 joints x 6)")
        if self.n_trajectories < 1 or self.sample_ticks < 2:
            raise ConfigError("bad surrogate dimensions")
        if not (0 < self.base_rate < 1):
            raise ConfigError("base_rate must be in (0, 1)")
        if not (0 <= self.rest_ticks < self.sample_ticks):
            raise ConfigError("rest_ticks must fit inside the sample")
        return self


_TYPE_GAIN = (1.0, 0.9, 1.1)
_JOINT_CYCLES = (1.0, 2.0, 1.0, 2.0)  # lemniscate-style joint periodicities


def _trajectory_params(cfg: SpidSurrogateConfig, traj: int):
    rng = _rng(cfg.seed, 0x591D, traj)
    gain = 0.78 + cfg.gain_spread * (traj / max(1, cfg.n_trajectories - 1)) \
        + rng.uniform(-0.04, 0.04)
    freqs = np.array(_JOINT_CYCLES) * rng.uniform(0.85, 1.15, size=N_JOINTS)
    phases = rng.uniform(0, 1, size=N_JOINTS)
    type_phase = rng.uniform(0, 0.25, size=(N_JOINTS, 3))
    return gain, freqs, phases, type_phase


def gen_spid_sample(cfg: SpidSurrogateConfig, traj: int, loaded: bool) -> Sample:
    gain, freqs, phases, type_phase = _trajectory_params(cfg, traj)
    # Both classes of one trajectory share the spike-draw randomness, like
    # two recordings of the same motion: the load-gain count ordering then
    # holds by construction instead of within Poisson noise.
    rng = _rng(cfg.seed, 0x591D, traj, 0xD12A)
    ticks = np.arange(cfg.sample_ticks)
    lag = cfg.phase_lag_ticks if loaded else 0

    # settling envelope: motion winds down over the final rest window; a
    # loaded gripper keeps the servo error channels busy while at rest
    rest_start = cfg.sample_ticks - cfg.rest_ticks
    ramp = np.ones(cfg.sample_ticks)
    if cfg.rest_ticks:
        fade = np.linspace(1.0, 0.0, min(50, cfg.rest_ticks))
        ramp[rest_start:rest_start + fade.size] = fade
        ramp[rest_start + fade.size:] = 0.0
    settle = cfg.rest_floor + (1.0 - cfg.rest_floor) * ramp
    command_hold = cfg.rest_command_hold + (1.0 - cfg.rest_command_hold) * ramp
    error_hold = cfg.rest_error_hold + (1.0 - cfg.rest_error_hold) * ramp

    rates = np.zeros((cfg.sample_ticks, cfg.n_channels))
    for j in range(N_JOINTS):
        angle = 2 * np.pi * (freqs[j] * (ticks - lag) / cfg.sample_ticks
                             + phases[j])
        for sig in range(3):
            env = np.sin(angle + 2 * np.pi * type_phase[j, sig])
            scale = cfg.base_rate * gain * _TYPE_GAIN[sig]
            if sig == TYPE_COMMAND:
                envelope = command_hold
            else:
                envelope = settle
            if loaded:
                if sig == TYPE_ERROR:
                    scale *= 1.0 + cfg.load_gain
                    envelope = error_hold
                elif sig == TYPE_MOTOR:
                    scale *= 1.0 - cfg.load_gain / 4.0
            ch = j * SIGNALS_PER_JOINT + sig * 2
            rates[:, ch] = scale * envelope * np.maximum(0.0, env)
            rates[:, ch + 1] = scale * envelope * np.maximum(0.0, -env)

    spikes = rng.random(rates.shape) < np.minimum(rates, 0.95)
    events: list[Event] = []
    for t in range(cfg.sample_ticks):
        for ch in np.flatnonzero(spikes[t]):
            events.append(Event(int(ch), t))
    label = int(loaded)
    events.append(Event(-2, cfg.sample_ticks - 1, payload=label))
    events.append(Event(-1, cfg.sample_ticks - 1))
    return Sample(events=events, target=TargetSignal.label(label),
                  duration_ticks=cfg.sample_ticks)


def gen_spid_surrogate(cfg: SpidSurrogateConfig) -> Dataset:
    cfg.validate()
    samples = [gen_spid_sample(cfg, traj, loaded)
               for traj in range(cfg.n_trajectories)
               for loaded in (False, True)]
    return Dataset(samples=samples, n_in=cfg.n_channels)


def count_threshold_baseline(samples: list[Sample]) -> float:
    """Best accuracy a single total-event-count threshold reaches.

    The yardstick the trained network has to beat: scans every threshold
    between sorted counts, both polarities.
    """
    counts = np.array([s.n_input_events() for s in samples], dtype=float)
    labels = np.array([s.label for s in samples])
    order = np.argsort(counts)
    best = 0.0
    cuts = np.concatenate(([counts.min() - 1],
                           (counts[order][1:] + counts[order][:-1]) / 2,
                           [counts.max() + 1]))
    for cut in cuts:
        pred = (counts > cut).astype(int)
        acc = max(float((pred == labels).mean()),
                  float((1 - pred == labels).mean()))
        best = max(best, acc)
    return best


# ---------------------------------------------------------------------------
# Split / save / load


def split_dataset(dataset: Dataset, fraction: float = 0.5,
                  seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified, disjoint, deterministic train/test split."""
    if not (0.0 < fraction < 1.0):
        raise SplitError(f"fraction {fraction} not in (0, 1)")
    labels = dataset.labels()
    if any(lb is None for lb in labels):
        raise SplitError("split needs labeled classification samples")
    by_class: dict[int, list[int]] = {}
    for idx, lb in enumerate(labels):
        by_class.setdefault(lb, []).append(idx)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for lb in sorted(by_class):
        idxs = np.array(by_class[lb])
        if idxs.size < 2:
            raise SplitError(f"class {lb} has {idxs.size} sample(s), needs >= 2")
        rng = _rng(seed, 0x5117, lb)
        rng.shuffle(idxs)
        n_train = int(round(idxs.size * fraction))
        n_train = min(max(n_train, 1), idxs.size - 1)
        train_idx.extend(int(i) for i in idxs[:n_train])
        test_idx.extend(int(i) for i in idxs[n_train:])
    train_idx.sort()
    test_idx.sort()
    pick = lambda idxs: Dataset([dataset.samples[i] for i in idxs],
                                dataset.n_in, dataset.tick_us, dataset.mode)
    return pick(train_idx), pick(test_idx)


def save_dataset(dataset: Dataset, path: str | Path, binary: bool = False,
                 generator: dict | None = None) -> None:
    """Write the event-stream file plus a JSON manifest next to it.

    ``generator`` records how the data came to be (task name, seeds).
    """
    path = Path(path)
    path.write_bytes(serialize_stream(dataset.to_stream(), binary=binary))
    manifest = {
        "file": path.name,
        "format": "binary" if binary else "text",
        "n_in": dataset.n_in,
        "tick_us": dataset.tick_us,
        "mode": dataset.mode,
        "n_samples": len(dataset.samples),
        "generator": generator or {},
        "samples": [
            {"index": i, "label": s.label, "events": s.n_input_events(),
             "duration_ticks": s.duration_ticks}
            for i, s in enumerate(dataset.samples)
        ],
    }
    path.with_suffix(path.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    stream = parse_stream(Path(path).read_bytes())
    return Dataset(samples=stream.samples, n_in=stream.header.n_in,
                   tick_us=stream.header.tick_us, mode=stream.header.mode)


def gen_bench_stream(n_in: int = 24, n_samples: int = 8,
                     sample_ticks: int = 4000, rate: float = 0.5,
                     seed: int = 0) -> Dataset:
    """Dense Poisson stream for throughput benchmarking (inference only)."""
    samples = []
    for idx in range(n_samples):
        rng = _rng(seed, 0xBE7C, idx)
        spikes = rng.random((sample_ticks, n_in)) < rate
        events = [Event(int(ch), int(t))
                  for t, ch in zip(*np.nonzero(spikes))]
        events.append(Event(-2, sample_ticks - 1, payload=0))
        events.append(Event(-1, sample_ticks - 1))
        samples.append(Sample(events=events, target=TargetSignal.label(0),
                              duration_ticks=sample_ticks))
    return Dataset(samples=samples, n_in=n_in)


def load_recorded(path: str | Path) -> Dataset:
    """Load a recorded robot-arm dataset (24 channels enforced).

    External recordings must first be converted to the event-stream format:
    one E line per spike with the channel mapped to joint*6 + signal*2 +
    polarity, timestamps rebased to ticks from each sample start, one T line
    carrying the load label, and one X line closing each sample.
    """
    dataset = load_dataset(path)
    if dataset.n_in != N_JOINTS * SIGNALS_PER_JOINT:
        raise ShapeError(
            f"recorded dataset has {dataset.n_in} channels, expected 24")
    return dataset
