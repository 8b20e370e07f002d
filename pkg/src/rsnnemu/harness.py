"""Training, evaluation, hyperparameter sweep, and throughput benchmark.

The flow mirrors how the real device is driven: a configuration phase
writes every parameter through the register map and randomizes the weight
memories, then each epoch replays the shuffled training set with learning
enabled and evaluates the train and test sets with learning disabled.

All artifacts are deterministic byte for byte under (config, seed): metrics
CSV (columns: epoch, train_acc, test_acc, skip_count, sat_count), a JSON
summary, and the weight checkpoint. Only benchmark logs carry timing
fields.

Run configuration files are flat ``key = value`` text (see README for the
schema); CLI flags override file values.
"""

from __future__ import annotations

import concurrent.futures
import json
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import NetworkConfig
from .device import Device
from .errors import ConfigError, InputError, ShapeError
from .learning import LearnParams
from .registers import (Reg, load_checkpoint, GRANULARITY_CODES, MODE_CODES,
                        RESET_MODE_CODES)
from .replay import warm_up, DEFAULT_TICK_BUDGET
from .tasks import (CueTaskConfig, Dataset, SpidSurrogateConfig,
                    gen_cue_samples, gen_spid_surrogate, load_dataset,
                    split_dataset)

TASK_CUE = "cue"
TASK_SPID = "spid"
TASK_FILE = "file"


@dataclass
class RunConfig:
    """Everything one training run needs; flat and file-serializable."""

    network: NetworkConfig
    learn: LearnParams
    task: str = TASK_CUE
    epochs: int = 100
    seed: int = 1
    init_range: int = 16
    out_dir: str | None = None
    threads: int = 1
    tick_budget: int = DEFAULT_TICK_BUDGET
    # cue task
    cue: CueTaskConfig = field(default_factory=CueTaskConfig)
    train_count: int = 128
    test_count: int = 128
    # spid task
    spid: SpidSurrogateConfig = field(default_factory=SpidSurrogateConfig)
    split_fraction: float = 0.5
    # file task
    train_data: str | None = None
    test_data: str | None = None

    def validate(self) -> "RunConfig":
        self.network.validate()
        self.learn.validate()
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.task not in (TASK_CUE, TASK_SPID, TASK_FILE):
            raise ConfigError(f"unknown task {self.task!r}")
        return self


def default_run_config(task: str = TASK_CUE) -> RunConfig:
    """Tuned defaults for the synthetic tasks (see README for rationale).

    The long membrane constant (leak_shift 12, tau ~ 4096 ticks) is what
    carries cue evidence across the silent delay as subthreshold charge;
    trace and learning-rate shifts are matched so updates are a few weight
    LSBs early in training and truncate to zero once predictions are
    confident.
    """
    if task == TASK_SPID:
        # Responsive rate-coded regime; matched readout/trace filters make
        # the decision read exactly the features the updates credit.
        network = NetworkConfig(n_in=24, n_rec=200, n_out=2, threshold=192,
                                leak_shift=6, readout_leak_shift=10)
        learn = LearnParams(lr_shift=18, trace_shift=10, surrogate_width=96,
                            feedback_seed=4)
        return RunConfig(network=network, learn=learn, task=task,
                         init_range=16)
    network = NetworkConfig(n_in=24, n_rec=64, n_out=2, threshold=1536,
                            leak_shift=11, readout_leak_shift=8)
    learn = LearnParams(lr_shift=21, trace_shift=11, surrogate_width=512,
                        feedback_seed=8)
    return RunConfig(network=network, learn=learn, task=task,
                     init_range=8)


# ---------------------------------------------------------------------------
# Flat key=value config files


def run_config_to_text(run: RunConfig) -> str:
    lines = []
    net, lp = run.network, run.learn
    for key in ("n_in", "n_rec", "n_out", "threshold", "leak_shift",
                "readout_leak_shift", "reset_mode", "frac_bits", "mode"):
        lines.append(f"{key} = {getattr(net, key)}")
    for key in ("lr_shift", "trace_shift", "surrogate_width", "feedback_seed",
                "update_granularity"):
        lines.append(f"{key} = {getattr(lp, key)}")
    lines.append(f"task = {run.task}")
    for key in ("epochs", "seed", "init_range", "threads", "tick_budget",
                "train_count", "test_count", "split_fraction"):
        lines.append(f"{key} = {getattr(run, key)}")
    for key, attr in _CUE_KEYS.items():
        lines.append(f"{key} = {getattr(run.cue, attr)}")
    for key, attr in _SPID_KEYS.items():
        lines.append(f"{key} = {getattr(run.spid, attr)}")
    if run.train_data:
        lines.append(f"train_data = {run.train_data}")
    if run.test_data:
        lines.append(f"test_data = {run.test_data}")
    return "\n".join(lines) + "\n"


# config-file key -> dataclass attribute of the task configs
_CUE_KEYS = {
    "cue_n_cues": "n_cues",
    "cue_period_ticks": "cue_period_ticks",
    "cue_delay_ticks": "delay_ticks",
    "cue_group_size": "cue_group_size",
    "cue_noise_rate": "noise_rate",
    "cue_seed": "seed",
}
_SPID_KEYS = {
    "spid_seed": "seed",
    "spid_sample_ticks": "sample_ticks",
    "spid_base_rate": "base_rate",
    "spid_load_gain": "load_gain",
    "spid_phase_lag_ticks": "phase_lag_ticks",
}

_INT_KEYS = {
    "n_in", "n_rec", "n_out", "threshold", "leak_shift",
    "readout_leak_shift", "frac_bits", "lr_shift", "trace_shift",
    "surrogate_width", "feedback_seed", "epochs", "seed", "init_range",
    "threads", "tick_budget", "train_count", "test_count", "cue_n_cues",
    "cue_period_ticks", "cue_delay_ticks", "cue_group_size", "cue_seed",
    "spid_seed", "spid_sample_ticks", "spid_phase_lag_ticks",
}
_FLOAT_KEYS = {"split_fraction", "cue_noise_rate", "spid_base_rate",
               "spid_load_gain"}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


def run_config_from_values(values: dict, base: RunConfig | None = None) -> RunConfig:
    run = base or default_run_config(values.get("task", TASK_CUE))
    net, lp, cue, spid = run.network, run.learn, run.cue, run.spid
    for key, value in values.items():
        if key in _CUE_KEYS:
            setattr(cue, _CUE_KEYS[key], value)
        elif key in _SPID_KEYS:
            setattr(spid, _SPID_KEYS[key], value)
        elif hasattr(net, key):
            setattr(net, key, value)
        elif hasattr(lp, key):
            setattr(lp, key, value)
        elif hasattr(run, key):
            setattr(run, key, value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    run.cue.n_in = run.network.n_in
    return run.validate()


def load_run_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return run_config_from_values(parse_config_text(Path(path).read_text()),
                                  base)


# ---------------------------------------------------------------------------
# Dataset materialization


_DATASET_MEMO: dict = {}


def materialize_datasets(run: RunConfig) -> tuple[Dataset, Dataset]:
    """Build the train/test datasets for a run (memoized per process:
    sweep trials share identical generator configs)."""
    if run.task == TASK_CUE:
        key = ("cue", tuple(sorted(vars(run.cue).items())),
               run.train_count, run.test_count)
        if key not in _DATASET_MEMO:
            train_cfg = replace(run.cue, seed=run.cue.seed * 2 + 1)
            test_cfg = replace(run.cue, seed=run.cue.seed * 2 + 2)
            _DATASET_MEMO[key] = (gen_cue_samples(train_cfg, run.train_count),
                                  gen_cue_samples(test_cfg, run.test_count))
        return _DATASET_MEMO[key]
    if run.task == TASK_SPID:
        # The split is part of the dataset identity (derived from the
        # generator seed), so sweep trials compete on the same split.
        key = ("spid", tuple(sorted(vars(run.spid).items())),
               run.split_fraction)
        if key not in _DATASET_MEMO:
            dataset = gen_spid_surrogate(run.spid)
            _DATASET_MEMO[key] = split_dataset(dataset, run.split_fraction,
                                               seed=run.spid.seed + 1)
        return _DATASET_MEMO[key]
    if not run.train_data or not run.test_data:
        raise InputError("task=file needs train_data and test_data paths")
    return load_dataset(run.train_data), load_dataset(run.test_data)


def configure_device(run: RunConfig) -> Device:
    """Configuration phase: all parameters through register writes, then
    randomize the weight memories."""
    dev = Device(init_weights=False)
    net, lp = run.network, run.learn
    reset_code = {v: k for k, v in RESET_MODE_CODES.items()}[net.reset_mode]
    mode_code = {v: k for k, v in MODE_CODES.items()}[net.mode]
    gran_code = {v: k for k, v in GRANULARITY_CODES.items()}[lp.update_granularity]
    writes = [
        (Reg.N_IN, net.n_in), (Reg.N_REC, net.n_rec), (Reg.N_OUT, net.n_out),
        (Reg.THRESHOLD, net.threshold), (Reg.LEAK_SHIFT, net.leak_shift),
        (Reg.READOUT_LEAK_SHIFT, net.readout_leak_shift),
        (Reg.RESET_MODE, reset_code), (Reg.FRAC_BITS, net.frac_bits),
        (Reg.MODE, mode_code), (Reg.LR_SHIFT, lp.lr_shift),
        (Reg.TRACE_SHIFT, lp.trace_shift),
        (Reg.SURROGATE_WIDTH, lp.surrogate_width),
        (Reg.FEEDBACK_SEED, lp.feedback_seed),
        (Reg.LEARN_ENABLE, int(lp.enabled)),
        (Reg.UPDATE_GRANULARITY, gran_code),
        (Reg.INIT_SEED, run.seed), (Reg.INIT_RANGE, run.init_range),
    ]
    for reg, value in writes:
        dev.regs.write_reg(reg, value)
    dev.regs.init_weights()
    return dev


# ---------------------------------------------------------------------------
# Train / evaluate


@dataclass
class EvalResult:
    accuracy: float
    confusion: list[list[int]]   # confusion[truth][decision]
    decisions: list[int]


@dataclass
class EpochRow:
    epoch: int
    train_acc: float
    test_acc: float
    skip_count: int
    sat_count: int


@dataclass
class TrainResult:
    rows: list[EpochRow]
    final_train_acc: float
    final_test_acc: float
    checkpoint: bytes
    metrics_csv: str
    summary: dict
    paths: dict = field(default_factory=dict)


def evaluate_device(dev: Device, dataset: Dataset,
                    tick_budget: int = DEFAULT_TICK_BUDGET) -> EvalResult:
    """Learning-disabled pass; weights are untouched (asserted by tests)."""
    n_out = dev.cfg.n_out
    confusion = [[0] * n_out for _ in range(n_out)]
    decisions = []
    correct = 0
    for sample in dataset.samples:
        res = dev.run_sample(sample, learn=False, tick_budget=tick_budget)
        decisions.append(res.decision)
        label = sample.label
        if label is not None:
            confusion[label][res.decision] += 1
            correct += int(res.decision == label)
    n = len(dataset.samples)
    return EvalResult(accuracy=correct / n if n else 0.0,
                      confusion=confusion, decisions=decisions)


def _acc_str(value: float) -> str:
    return f"{value:.6f}"


def train(run: RunConfig, write_files: bool = True) -> TrainResult:
    run.validate()
    warm_up()
    train_set, test_set = materialize_datasets(run)
    if train_set.n_in != run.network.n_in:
        raise ShapeError(f"dataset has {train_set.n_in} channels, "
                         f"network expects {run.network.n_in}")
    dev = configure_device(run)

    rng = np.random.default_rng(run.seed)
    rows: list[EpochRow] = []
    for epoch in range(run.epochs):
        skip0 = dev.traces.skip_count
        sat0 = dev.state.sat_count + dev.traces.weight_sat_count
        for idx in rng.permutation(len(train_set.samples)):
            dev.run_sample(train_set.samples[idx], learn=True,
                           tick_budget=run.tick_budget)
        train_eval = evaluate_device(dev, train_set, run.tick_budget)
        test_eval = evaluate_device(dev, test_set, run.tick_budget)
        rows.append(EpochRow(
            epoch=epoch,
            train_acc=train_eval.accuracy,
            test_acc=test_eval.accuracy,
            skip_count=dev.traces.skip_count - skip0,
            sat_count=dev.state.sat_count + dev.traces.weight_sat_count - sat0,
        ))

    checkpoint = dev.checkpoint()
    csv_lines = ["epoch,train_acc,test_acc,skip_count,sat_count"]
    for row in rows:
        csv_lines.append(f"{row.epoch},{_acc_str(row.train_acc)},"
                         f"{_acc_str(row.test_acc)},{row.skip_count},"
                         f"{row.sat_count}")
    metrics_csv = "\n".join(csv_lines) + "\n"
    summary = {
        "task": run.task,
        "topology": [run.network.n_in, run.network.n_rec, run.network.n_out],
        "epochs": run.epochs,
        "seed": run.seed,
        "final_train_acc": rows[-1].train_acc,
        "final_test_acc": rows[-1].test_acc,
        "best_test_acc": max(r.test_acc for r in rows),
        "total_skip_count": sum(r.skip_count for r in rows),
        "total_sat_count": sum(r.sat_count for r in rows),
    }
    result = TrainResult(rows=rows, final_train_acc=rows[-1].train_acc,
                         final_test_acc=rows[-1].test_acc,
                         checkpoint=checkpoint, metrics_csv=metrics_csv,
                         summary=summary)
    if write_files and run.out_dir:
        out = Path(run.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(metrics_csv)
        (out / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out / "checkpoint.bin").write_bytes(checkpoint)
        (out / "run_config.txt").write_text(run_config_to_text(run))
        result.paths = {name: str(out / name) for name in
                        ("metrics.csv", "summary.json", "checkpoint.bin")}
    return result


def evaluate_checkpoint(run: RunConfig, checkpoint: bytes,
                        dataset: Dataset) -> EvalResult:
    """Evaluate a dumped checkpoint against a dataset, learning off."""
    (n_in, n_rec, n_out, _), weights = load_checkpoint(checkpoint)
    if (n_in, n_rec, n_out) != (run.network.n_in, run.network.n_rec,
                                run.network.n_out):
        raise ShapeError(
            f"checkpoint topology {(n_in, n_rec, n_out)} does not match "
            f"network {(run.network.n_in, run.network.n_rec, run.network.n_out)}")
    if dataset.n_in != n_in:
        raise ShapeError(f"dataset has {dataset.n_in} channels, "
                         f"checkpoint expects {n_in}")
    dev = configure_device(run)
    dev.load_weights(weights)
    return evaluate_device(dev, dataset, run.tick_budget)


# ---------------------------------------------------------------------------
# Random-search sweep


# Default search spaces: a neighborhood around each task's operating
# regime (long-time-constant integrator for the cue task, responsive
# rate-coded readout for the robot-arm surrogate). These ranges are this
# repository's own and are documented in the README.
CUE_SWEEP_SPACE = {
    "threshold": [512, 768, 1024, 1536, 2048],
    "leak_shift": [10, 11, 12],
    "readout_leak_shift": [7, 8],
    "trace_shift": [10, 11, 12],
    "lr_shift": [20, 21, 22, 23],
    "surrogate_width": [128, 256, 512, 768],
    "feedback_seed": [1, 2, 3, 4, 5, 6, 7, 8],
    "init_range": [6, 8, 12, 16],
}
SPID_SWEEP_SPACE = {
    "threshold": [128, 192, 256],
    "leak_shift": [5, 6, 7],
    "readout_leak_shift": [9, 10, 11],
    "trace_shift": [9, 10, 11],
    "lr_shift": [16, 17, 18, 19],
    "surrogate_width": [1, 2, 4, 8, 96],
    "feedback_seed": [1, 2, 3, 4, 5, 6, 7, 8],
    "init_range": [12, 16, 24],
}


@dataclass
class SweepSpec:
    """Random search over integer-choice parameter ranges.

    With no explicit space, the sweep searches the default neighborhood of
    the base config's task.
    """

    trials: int = 20
    seed: int = 0
    epochs: int | None = None  # override base epochs per trial
    space: dict = field(default_factory=dict)  # name -> list of choices

    def resolve_space(self, task: str) -> dict:
        if self.space:
            return self.space
        return SPID_SWEEP_SPACE if task == TASK_SPID else CUE_SWEEP_SPACE

    def validate(self) -> "SweepSpec":
        if self.trials < 1:
            raise ConfigError("sweep needs at least one trial")
        if any(not v for v in self.space.values()):
            raise ConfigError("sweep parameter ranges must be non-empty")
        return self


@dataclass
class SweepTrial:
    trial_id: int
    params: dict
    train_acc: float
    test_acc: float
    error: str | None = None


@dataclass
class SweepResult:
    trials: list[SweepTrial]      # sorted by test_acc desc, trial_id asc
    best: SweepTrial
    table_csv: str


def _trial_params(space: dict, seed: int, trial_id: int) -> dict:
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, 0x5EEB, trial_id]))
    return {name: choices[int(rng.integers(len(choices)))]
            for name, choices in sorted(space.items())}


def _apply_trial(base: RunConfig, spec: SweepSpec, space: dict,
                 trial_id: int) -> tuple[RunConfig, dict]:
    params = _trial_params(space, spec.seed, trial_id)
    run = replace(base, network=replace(base.network),
                  learn=replace(base.learn), out_dir=None,
                  seed=base.seed + trial_id)
    for name, value in params.items():
        if hasattr(run.network, name):
            setattr(run.network, name, value)
        elif hasattr(run.learn, name):
            setattr(run.learn, name, value)
        else:
            setattr(run, name, value)
    if spec.epochs is not None:
        run.epochs = spec.epochs
    return run.validate(), params


def _run_trial(args) -> SweepTrial:
    base, spec, space, trial_id = args
    run, params = _apply_trial(base, spec, space, trial_id)
    try:
        result = train(run, write_files=False)
        return SweepTrial(trial_id=trial_id, params=params,
                          train_acc=result.final_train_acc,
                          test_acc=result.final_test_acc)
    except Exception as exc:  # recorded, not fatal
        return SweepTrial(trial_id=trial_id, params=params, train_acc=0.0,
                          test_acc=0.0, error=f"{type(exc).__name__}: {exc}")


def sweep(spec: SweepSpec, base: RunConfig, threads: int | None = None,
          write_files: bool = True) -> SweepResult:
    spec.validate()
    base.validate()
    space = spec.resolve_space(base.task)
    jobs = [(base, spec, space, tid) for tid in range(spec.trials)]
    threads = threads if threads is not None else base.threads
    if threads > 1 and spec.trials > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as ex:
            trials = list(ex.map(_run_trial, jobs))
    else:
        trials = [_run_trial(job) for job in jobs]
    trials.sort(key=lambda t: (-t.test_acc, t.trial_id))

    param_names = sorted(space)
    header = ["trial_id"] + param_names + ["train_acc", "test_acc", "error"]
    lines = [",".join(header)]
    for t in trials:
        cells = [str(t.trial_id)] + [str(t.params[p]) for p in param_names]
        cells += [_acc_str(t.train_acc), _acc_str(t.test_acc), t.error or ""]
        lines.append(",".join(cells))
    table_csv = "\n".join(lines) + "\n"

    result = SweepResult(trials=trials, best=trials[0], table_csv=table_csv)
    if write_files and base.out_dir:
        out = Path(base.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(table_csv)
        best = {"trial_id": result.best.trial_id, "params": result.best.params,
                "train_acc": result.best.train_acc,
                "test_acc": result.best.test_acc}
        (out / "sweep_best.json").write_text(
            json.dumps(best, indent=2, sort_keys=True) + "\n")
    return result


# ---------------------------------------------------------------------------
# Throughput benchmark


@dataclass
class BenchResult:
    reps: list[dict]           # [{n_events, n_ticks, elapsed_s, events_per_s}]
    mean_events_per_s: float
    peak_events_per_s: float
    mean_ticks_per_s: float
    host: dict
    log: dict


def bench_throughput(run: RunConfig, dataset: Dataset, repetitions: int = 3,
                     write_files: bool = True) -> BenchResult:
    """Inference-mode event throughput over >= 3 repetitions.

    A warm-up pass (JIT compilation plus one full stream replay) runs
    before timing; rates derive only from logged raw counts and timings.
    """
    if repetitions < 3:
        raise ConfigError("benchmark needs at least 3 repetitions")
    if not dataset.samples or all(s.n_input_events() == 0
                                  for s in dataset.samples):
        raise InputError("benchmark stream has no events")
    run.validate()
    warm_up()
    dev = configure_device(run)
    for sample in dataset.samples:  # warm-up pass, untimed
        sample.input_arrays()
        dev.run_sample(sample, learn=False, tick_budget=run.tick_budget)

    n_events = sum(s.n_input_events() for s in dataset.samples)
    n_ticks = sum(s.duration_ticks for s in dataset.samples)
    reps = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        for sample in dataset.samples:
            dev.run_sample(sample, learn=False, tick_budget=run.tick_budget)
        elapsed = time.perf_counter() - t0
        reps.append({"n_events": n_events, "n_ticks": n_ticks,
                     "elapsed_s": elapsed,
                     "events_per_s": n_events / elapsed,
                     "ticks_per_s": n_ticks / elapsed})
    host = {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "processor": platform.processor() or "unknown",
    }
    log = {"topology": [run.network.n_in, run.network.n_rec,
                        run.network.n_out],
           "repetitions": repetitions, "reps": reps, "host": host}
    result = BenchResult(
        reps=reps,
        mean_events_per_s=float(np.mean([r["events_per_s"] for r in reps])),
        peak_events_per_s=float(max(r["events_per_s"] for r in reps)),
        mean_ticks_per_s=float(np.mean([r["ticks_per_s"] for r in reps])),
        host=host, log=log)
    if write_files and run.out_dir:
        out = Path(run.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.json").write_text(
            json.dumps(log, indent=2, sort_keys=True) + "\n")
    return result
