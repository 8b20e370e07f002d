"""FastAPI service exposing the emulator to multiple clients.

Two surfaces:

* run endpoints (``/runs/...``, ``/datasets/...``, ``/streams/...``) wrap
  the harness: train, evaluate, sweep, bench, generate, validate;
* device sessions (``/devices/...``) expose one emulator instance per id
  with register access, weight load/dump, and sample replay -- the same
  interaction model as driving the memory-mapped device interactively.

Device sessions live in process memory; runs execute synchronously in the
request (they are desk-scale batch jobs).
"""

from __future__ import annotations

import base64
import itertools
import threading

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from ..aer import Event, Sample, validate_stream
from ..device import Device
from ..errors import (AddressError, BusyError, EmulatorError, ProtocolError,
                      ShapeError)
from ..harness import (RunConfig, SweepSpec, bench_throughput,
                       evaluate_checkpoint, run_config_from_values, sweep,
                       train)
from ..learning import TargetSignal
from ..registers import Reg, load_checkpoint
from ..tasks import (gen_bench_stream, gen_cue_samples,
                     gen_spid_surrogate, load_dataset, save_dataset)
from . import schemas as sm

_HTTP_STATUS = {
    AddressError: 404,
    BusyError: 409,
    ShapeError: 422,
    ProtocolError: 422,
}


def _build_run(overrides: dict) -> RunConfig:
    return run_config_from_values(dict(overrides))


def _frame_events(models: list[sm.EventModel], mode: str) -> Sample:
    events = [Event(m.ae, m.ts, m.payload) for m in models]
    if not events or events[-1].ae != -1:
        raise ProtocolError("replay needs a terminating end event (ae=-1)")
    targets = [e for e in events if e.ae == -2]
    if not targets:
        target = None
    elif mode == "classification":
        target = TargetSignal.label(targets[0].payload)
    else:
        target = TargetSignal.regression([e.ts for e in targets],
                                         [e.payload for e in targets])
    return Sample(events=events, target=target,
                  duration_ticks=events[-1].ts + 1)


def create_app() -> FastAPI:
    app = FastAPI(title="rsnnemu", version=__version__,
                  description="Recurrent spiking accelerator emulator")
    devices: dict[str, Device] = {}
    dev_lock = threading.Lock()
    dev_ids = itertools.count(1)

    @app.exception_handler(EmulatorError)
    async def emulator_error(request, exc: EmulatorError):
        status = _HTTP_STATUS.get(type(exc), 400)
        for klass, code in _HTTP_STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__,
                                     "detail": str(exc)})

    def get_device(device_id: str) -> Device:
        with dev_lock:
            dev = devices.get(device_id)
        if dev is None:
            raise HTTPException(status_code=404,
                                detail=f"no device {device_id!r}")
        return dev

    @app.get("/health", response_model=sm.HealthResponse)
    def health():
        return sm.HealthResponse(status="ok", version=__version__)

    # -- harness runs ------------------------------------------------------

    @app.post("/runs/train", response_model=sm.TrainResponse)
    def run_train(req: sm.TrainRequest):
        run = _build_run(req.config)
        if req.out_dir:
            run.out_dir = req.out_dir
        result = train(run)
        return sm.TrainResponse(
            final_train_acc=result.final_train_acc,
            final_test_acc=result.final_test_acc,
            best_test_acc=result.summary["best_test_acc"],
            epochs=[sm.EpochMetrics(**vars(row)) for row in result.rows],
            paths=result.paths)

    @app.post("/runs/evaluate", response_model=sm.EvaluateResponse)
    def run_evaluate(req: sm.EvaluateRequest):
        run = _build_run(req.config)
        with open(req.checkpoint_path, "rb") as fh:
            blob = fh.read()
        dataset = load_dataset(req.data_path)
        result = evaluate_checkpoint(run, blob, dataset)
        return sm.EvaluateResponse(accuracy=result.accuracy,
                                   confusion=result.confusion,
                                   decisions=result.decisions)

    @app.post("/runs/sweep", response_model=sm.SweepResponse)
    def run_sweep(req: sm.SweepRequest):
        run = _build_run(req.config)
        if req.out_dir:
            run.out_dir = req.out_dir
        spec = SweepSpec(trials=req.trials, seed=req.sweep_seed,
                         epochs=req.epochs)
        if req.space:
            spec.space = req.space
        result = sweep(spec, run, threads=req.threads)
        paths = {}
        if run.out_dir:
            paths = {"sweep.csv": f"{run.out_dir}/sweep.csv",
                     "sweep_best.json": f"{run.out_dir}/sweep_best.json"}
        to_model = lambda t: sm.SweepTrialModel(
            trial_id=t.trial_id, params=t.params, train_acc=t.train_acc,
            test_acc=t.test_acc, error=t.error)
        return sm.SweepResponse(best=to_model(result.best),
                                trials=[to_model(t) for t in result.trials],
                                paths=paths)

    @app.post("/runs/bench", response_model=sm.BenchResponse)
    def run_bench(req: sm.BenchRequest):
        run = _build_run(req.config)
        if req.out_dir:
            run.out_dir = req.out_dir
        if req.data_path:
            dataset = load_dataset(req.data_path)
        else:
            dataset = gen_bench_stream(n_in=run.network.n_in)
        result = bench_throughput(run, dataset, repetitions=req.repetitions)
        paths = {"bench.json": f"{run.out_dir}/bench.json"} if run.out_dir else {}
        return sm.BenchResponse(
            mean_events_per_s=result.mean_events_per_s,
            peak_events_per_s=result.peak_events_per_s,
            mean_ticks_per_s=result.mean_ticks_per_s,
            reps=[sm.BenchRepetition(**r) for r in result.reps],
            host=result.host, paths=paths)

    # -- datasets / streams -------------------------------------------------

    @app.post("/datasets/generate", response_model=sm.GenerateResponse)
    def generate(req: sm.GenerateRequest):
        run = _build_run(req.config)
        if req.task == "cue":
            run.cue.seed = req.seed
            dataset = gen_cue_samples(run.cue, req.count)
        elif req.task == "spid":
            run.spid.seed = req.seed
            dataset = gen_spid_surrogate(run.spid)
        elif req.task == "bench":
            dataset = gen_bench_stream(n_in=run.network.n_in, seed=req.seed)
        else:
            raise HTTPException(status_code=422,
                                detail=f"unknown task {req.task!r}")
        save_dataset(dataset, req.out_path, binary=req.binary,
                     generator={"task": req.task, "seed": req.seed})
        return sm.GenerateResponse(
            path=req.out_path,
            manifest_path=req.out_path + ".manifest.json",
            n_samples=len(dataset.samples),
            n_events=sum(s.n_input_events() for s in dataset.samples))

    @app.post("/streams/validate", response_model=sm.ValidateResponse)
    def validate(req: sm.ValidateRequest):
        with open(req.data_path, "rb") as fh:
            blob = fh.read()
        cfg = None
        if req.check_topology:
            cfg = _build_run(req.config).network
        report = validate_stream(blob, cfg)
        return sm.ValidateResponse(
            ok=report.ok, n_samples=report.n_samples,
            n_events=report.n_events, mean_rate=report.mean_rate,
            peak_tick_events=report.peak_tick_events,
            per_sample_events=report.per_sample_events,
            per_sample_duration=report.per_sample_duration,
            violations=[sm.ViolationModel(sample=v.sample, kind=v.kind,
                                          message=v.message)
                        for v in report.violations])

    # -- device sessions ----------------------------------------------------

    def device_info(device_id: str, dev: Device) -> sm.DeviceInfo:
        return sm.DeviceInfo(
            device_id=device_id,
            topology=[dev.cfg.n_in, dev.cfg.n_rec, dev.cfg.n_out],
            mode=dev.cfg.mode,
            sample_active=dev.sample_active,
            tick=dev.state.tick,
            skip_count=dev.traces.skip_count,
            sat_count=dev.state.sat_count,
            weight_sat_count=dev.traces.weight_sat_count,
            learn_enabled=dev.params.enabled)

    @app.post("/devices", response_model=sm.DeviceInfo)
    def create_device(req: sm.DeviceCreateRequest):
        run = _build_run(req.config)
        dev = Device(run.network, run.learn, seed=req.seed,
                     init_range=req.init_range)
        with dev_lock:
            device_id = f"dev{next(dev_ids)}"
            devices[device_id] = dev
        return device_info(device_id, dev)

    @app.get("/devices", response_model=list[sm.DeviceInfo])
    def list_devices():
        with dev_lock:
            items = list(devices.items())
        return [device_info(did, dev) for did, dev in items]

    @app.get("/devices/{device_id}", response_model=sm.DeviceInfo)
    def get_device_status(device_id: str):
        return device_info(device_id, get_device(device_id))

    @app.delete("/devices/{device_id}")
    def delete_device(device_id: str):
        with dev_lock:
            if device_id not in devices:
                raise HTTPException(status_code=404,
                                    detail=f"no device {device_id!r}")
            del devices[device_id]
        return {"deleted": device_id}

    @app.get("/devices/{device_id}/registers/{name}",
             response_model=sm.RegisterValue)
    def read_register(device_id: str, name: str):
        dev = get_device(device_id)
        return sm.RegisterValue(value=dev.regs.read_reg(_reg_addr(name)))

    @app.put("/devices/{device_id}/registers/{name}",
             response_model=sm.RegisterValue)
    def write_register(device_id: str, name: str, body: sm.RegisterValue):
        dev = get_device(device_id)
        addr = _reg_addr(name)
        dev.regs.write_reg(addr, body.value)
        return sm.RegisterValue(value=dev.regs.read_reg(addr))

    @app.get("/devices/{device_id}/weights/{matrix_id}",
             response_model=sm.WeightsPayload)
    def dump_weights(device_id: str, matrix_id: int):
        dev = get_device(device_id)
        blob = dev.regs.dump_weights(matrix_id)
        return sm.WeightsPayload(data_b64=base64.b64encode(blob).decode())

    @app.put("/devices/{device_id}/weights/{matrix_id}")
    def load_weights(device_id: str, matrix_id: int, body: sm.WeightsPayload):
        dev = get_device(device_id)
        dev.regs.load_weights(matrix_id, base64.b64decode(body.data_b64))
        return {"loaded": matrix_id}

    @app.post("/devices/{device_id}/init_weights")
    def init_weights(device_id: str):
        dev = get_device(device_id)
        dev.regs.init_weights()
        return {"initialized": True}

    @app.post("/devices/{device_id}/reset")
    def reset_device_sample(device_id: str):
        dev = get_device(device_id)
        dev.reset_sample()
        return {"reset": True}

    @app.post("/devices/{device_id}/replay", response_model=sm.ReplayResponse)
    def replay(device_id: str, req: sm.ReplayRequest):
        dev = get_device(device_id)
        sample = _frame_events(req.events, dev.cfg.mode)
        result = dev.run_sample(sample, learn=req.learn)
        return sm.ReplayResponse(decision=result.decision,
                                 y=[int(v) for v in result.y],
                                 n_ticks=result.n_ticks,
                                 n_input_events=result.n_input_events)

    @app.get("/devices/{device_id}/checkpoint",
             response_model=sm.CheckpointPayload)
    def dump_checkpoint(device_id: str):
        dev = get_device(device_id)
        return sm.CheckpointPayload(
            data_b64=base64.b64encode(dev.checkpoint()).decode())

    @app.put("/devices/{device_id}/checkpoint")
    def restore_checkpoint(device_id: str, body: sm.CheckpointPayload):
        dev = get_device(device_id)
        _, weights = load_checkpoint(base64.b64decode(body.data_b64))
        dev.load_weights(weights)
        return {"loaded": True}

    return app


def _reg_addr(name: str) -> int:
    """Register path segment: symbolic name or numeric address."""
    try:
        return Reg[name.upper()].value
    except KeyError:
        pass
    try:
        return int(name, 0)
    except ValueError:
        raise HTTPException(status_code=404,
                            detail=f"unknown register {name!r}") from None
