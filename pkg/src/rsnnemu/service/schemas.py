"""Pydantic request/response models for the emulator service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


# ---------------------------------------------------------------------------
# Harness runs

# Flat run configuration: same keys as the key=value config file.
RunOverrides = dict[str, Any]


class TrainRequest(BaseModel):
    config: RunOverrides = Field(default_factory=dict)
    out_dir: Optional[str] = None


class EpochMetrics(BaseModel):
    epoch: int
    train_acc: float
    test_acc: float
    skip_count: int
    sat_count: int


class TrainResponse(BaseModel):
    final_train_acc: float
    final_test_acc: float
    best_test_acc: float
    epochs: list[EpochMetrics]
    paths: dict[str, str]


class EvaluateRequest(BaseModel):
    config: RunOverrides = Field(default_factory=dict)
    checkpoint_path: str
    data_path: str


class EvaluateResponse(BaseModel):
    accuracy: float
    confusion: list[list[int]]
    decisions: list[int]


class SweepRequest(BaseModel):
    config: RunOverrides = Field(default_factory=dict)
    trials: int = 20
    sweep_seed: int = 0
    epochs: Optional[int] = None
    space: Optional[dict[str, list[int]]] = None
    threads: int = 1
    out_dir: Optional[str] = None


class SweepTrialModel(BaseModel):
    trial_id: int
    params: dict[str, int]
    train_acc: float
    test_acc: float
    error: Optional[str] = None


class SweepResponse(BaseModel):
    best: SweepTrialModel
    trials: list[SweepTrialModel]
    paths: dict[str, str]


class BenchRequest(BaseModel):
    config: RunOverrides = Field(default_factory=dict)
    data_path: Optional[str] = None     # default: synthetic dense stream
    repetitions: int = 3
    out_dir: Optional[str] = None


class BenchRepetition(BaseModel):
    n_events: int
    n_ticks: int
    elapsed_s: float
    events_per_s: float
    ticks_per_s: float


class BenchResponse(BaseModel):
    mean_events_per_s: float
    peak_events_per_s: float
    mean_ticks_per_s: float
    reps: list[BenchRepetition]
    host: dict[str, str]
    paths: dict[str, str]


class GenerateRequest(BaseModel):
    task: str = "cue"                   # cue | spid | bench
    count: int = 128                    # cue sample count
    seed: int = 0
    out_path: str
    binary: bool = False
    config: RunOverrides = Field(default_factory=dict)


class GenerateResponse(BaseModel):
    path: str
    manifest_path: str
    n_samples: int
    n_events: int


class ValidateRequest(BaseModel):
    data_path: str
    config: RunOverrides = Field(default_factory=dict)
    check_topology: bool = False


class ViolationModel(BaseModel):
    sample: int
    kind: str
    message: str


class ValidateResponse(BaseModel):
    ok: bool
    n_samples: int
    n_events: int
    mean_rate: float
    peak_tick_events: int
    per_sample_events: list[int]
    per_sample_duration: list[int]
    violations: list[ViolationModel]


# ---------------------------------------------------------------------------
# Device sessions


class DeviceCreateRequest(BaseModel):
    config: RunOverrides = Field(default_factory=dict)
    seed: int = 0
    init_range: int = 16


class DeviceInfo(BaseModel):
    device_id: str
    topology: list[int]
    mode: str
    sample_active: bool
    tick: int
    skip_count: int
    sat_count: int
    weight_sat_count: int
    learn_enabled: bool


class RegisterValue(BaseModel):
    value: int


class WeightsPayload(BaseModel):
    data_b64: str   # row-major signed 8-bit bytes


class EventModel(BaseModel):
    ae: int
    ts: int
    payload: Optional[int] = None


class ReplayRequest(BaseModel):
    events: list[EventModel]
    learn: Optional[bool] = None


class ReplayResponse(BaseModel):
    decision: int
    y: list[int]
    n_ticks: int
    n_input_events: int


class CheckpointPayload(BaseModel):
    data_b64: str
