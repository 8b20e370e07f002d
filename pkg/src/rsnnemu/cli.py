"""Command-line client for the emulator service.

Every subcommand is a thin wrapper over one service endpoint. By default
the CLI spins the service up in-process (no network); ``--server URL``
points it at a running ``rsnnemu serve`` instance instead, in which case
paths are interpreted on the server side.

Subcommands: gen, train, eval, sweep, bench, validate, serve.
Global flags: --server, --config <file>, --seed, --out <dir>, --threads.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import parse_config_text


def _parse_args(argv):
    parser = argparse.ArgumentParser(
        prog="rsnnemu",
        description="Recurrent spiking accelerator emulator client")
    parser.add_argument("--server", default=None,
                        help="service base URL (default: run in-process)")
    parser.add_argument("--config", default=None,
                        help="flat key=value run config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the run seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for sweeps")
    parser.add_argument("--json", action="store_true", dest="as_json",
                        help="print the raw JSON response")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset file")
    p.add_argument("--task", choices=["cue", "spid", "bench"], default="cue")
    p.add_argument("--count", type=int, default=128,
                   help="sample count (cue task)")
    p.add_argument("--binary", action="store_true",
                   help="write the binary format")
    p.add_argument("path", help="output event-stream file")

    sub.add_parser("train", help="train, evaluate per epoch, checkpoint")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("sweep", help="random hyperparameter search")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--sweep-seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None,
                   help="override epochs per trial")

    p = sub.add_parser("bench", help="inference throughput benchmark")
    p.add_argument("--data", default=None,
                   help="event stream (default: synthetic dense stream)")
    p.add_argument("--repetitions", type=int, default=3)

    p = sub.add_parser("validate", help="validate an event-stream file")
    p.add_argument("--strict-topology", action="store_true",
                   help="also check against the configured network")
    p.add_argument("path")

    p = sub.add_parser("serve", help="run the service under uvicorn")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8177)

    return parser.parse_args(argv)


class Client:
    """httpx against a remote server, or an in-process ASGI test client."""

    def __init__(self, server: str | None):
        if server:
            import httpx
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from fastapi.testclient import TestClient
            from .service import create_app
            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code >= 400:
            try:
                detail = resp.json()
            except Exception:
                detail = resp.text
            raise SystemExit(f"error {resp.status_code}: {detail}")
        return resp.json()


def _load_overrides(args) -> dict:
    overrides: dict = {}
    if args.config:
        overrides.update(parse_config_text(Path(args.config).read_text()))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads != 1:
        overrides["threads"] = args.threads
    return overrides


def _emit(args, payload: dict, human: str) -> None:
    if args.as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(human)


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])

    if args.command == "serve":
        import uvicorn
        from .service import create_app
        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    client = Client(args.server)
    overrides = _load_overrides(args)

    if args.command == "gen":
        reply = client.post("/datasets/generate", {
            "task": args.task, "count": args.count,
            "seed": args.seed if args.seed is not None else 0,
            "out_path": args.path, "binary": args.binary,
            "config": overrides})
        _emit(args, reply,
              f"wrote {reply['n_samples']} samples "
              f"({reply['n_events']} events) to {reply['path']}")
        return 0

    if args.command == "train":
        reply = client.post("/runs/train",
                            {"config": overrides, "out_dir": args.out})
        last = reply["epochs"][-1]
        _emit(args, reply,
              f"train_acc={reply['final_train_acc']:.4f} "
              f"test_acc={reply['final_test_acc']:.4f} "
              f"best_test_acc={reply['best_test_acc']:.4f} "
              f"(epoch {last['epoch']})"
              + (f"\nartifacts: {reply['paths']}" if reply["paths"] else ""))
        return 0

    if args.command == "eval":
        reply = client.post("/runs/evaluate", {
            "config": overrides, "checkpoint_path": args.checkpoint,
            "data_path": args.data})
        _emit(args, reply,
              f"accuracy={reply['accuracy']:.4f}\n"
              f"confusion={reply['confusion']}")
        return 0

    if args.command == "sweep":
        payload = {"config": overrides, "trials": args.trials,
                   "sweep_seed": args.sweep_seed, "threads": args.threads,
                   "out_dir": args.out}
        if args.epochs is not None:
            payload["epochs"] = args.epochs
        reply = client.post("/runs/sweep", payload)
        best = reply["best"]
        _emit(args, reply,
              f"best trial {best['trial_id']}: "
              f"train_acc={best['train_acc']:.4f} "
              f"test_acc={best['test_acc']:.4f}\nparams={best['params']}")
        return 0

    if args.command == "bench":
        reply = client.post("/runs/bench", {
            "config": overrides, "data_path": args.data,
            "repetitions": args.repetitions, "out_dir": args.out})
        _emit(args, reply,
              f"mean={reply['mean_events_per_s'] / 1e6:.2f}M events/s "
              f"peak={reply['peak_events_per_s'] / 1e6:.2f}M events/s "
              f"({reply['mean_ticks_per_s'] / 1e3:.0f}k ticks/s)")
        return 0

    if args.command == "validate":
        reply = client.post("/streams/validate", {
            "data_path": args.path, "config": overrides,
            "check_topology": args.strict_topology})
        if reply["ok"]:
            _emit(args, reply,
                  f"OK: {reply['n_samples']} samples, "
                  f"{reply['n_events']} events, "
                  f"mean rate {reply['mean_rate']:.3f} events/tick")
            return 0
        lines = [f"{len(reply['violations'])} violation(s):"]
        lines += [f"  sample {v['sample']}: [{v['kind']}] {v['message']}"
                  for v in reply["violations"]]
        _emit(args, reply, "\n".join(lines))
        return 1

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
