"""Address-event stream model: framing, file formats, validation.

A stream is a header plus a flat sequence of (AE, TS) events. Two control
addresses frame the stream into samples:

* AE = -2 carries the training target (classification label per sample, or
  a regression value per timestep) in its payload;
* AE = -1 ends the sample; its timestamp is the sample's final tick, so a
  sample whose end event has TS = t runs ticks 0..t (duration t+1).

Timestamps are relative to the sample start and non-decreasing; events that
share a tick are delivered in file order, exactly once (the software stand-in
for a FIFO with a Req/Ack handshake).

Text format (line-oriented, human-diffable):

    !version 1          header; also !n_in, !tick_us, !mode
    E <ae> <ts>         input event
    T <ts> <value>      target event (AE = -2)
    X <ts>              end of sample (AE = -1)
    # comment           blank lines ignored

Binary format (little-endian, bit-exact across implementations):

    magic "AERS" | u16 version | u16 mode (0=classification, 1=regression)
    u32 n_in | u32 tick_us
    records: i32 ae, u32 ts, then i32 payload iff ae == -2
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (FramingError, OrderingError, ProtocolError,
                     StreamFormatError)
from .core import NetworkConfig, MODE_CLASSIFICATION, MODE_REGRESSION
from .learning import TargetSignal

AE_END = -1
AE_TARGET = -2

MAGIC = b"AERS"
FORMAT_VERSION = 1

_MODE_CODE = {MODE_CLASSIFICATION: 0, MODE_REGRESSION: 1}
_CODE_MODE = {v: k for k, v in _MODE_CODE.items()}


@dataclass
class Event:
    """One (address, timestamp) tuple; payload present iff ae == -2."""

    ae: int
    ts: int
    payload: int | None = None

    def __post_init__(self):
        if self.ae == AE_TARGET and self.payload is None:
            raise ProtocolError("target event (-2) requires a payload")
        if self.ae != AE_TARGET and self.payload is not None:
            raise ProtocolError("payload only allowed on target events (-2)")
        if self.ae < AE_TARGET:
            raise ProtocolError(f"unknown control address {self.ae}")
        if self.ts < 0:
            raise ProtocolError("timestamp must be non-negative")


@dataclass
class StreamHeader:
    version: int = FORMAT_VERSION
    n_in: int = 0
    tick_us: int = 1000
    mode: str = MODE_CLASSIFICATION


@dataclass
class Sample:
    """One framed sample: payload events, extracted target, duration."""

    events: list[Event]
    target: TargetSignal | None
    duration_ticks: int
    _arrays: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def label(self) -> int | None:
        if self.target is not None and self.target.kind == "class_label":
            return self.target.value
        return None

    def input_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(ae, ts) arrays of the input events, cached for replay."""
        if self._arrays is None:
            inp = [(e.ae, e.ts) for e in self.events if e.ae >= 0]
            ae = np.array([a for a, _ in inp], dtype=np.int64)
            ts = np.array([t for _, t in inp], dtype=np.int64)
            self._arrays = (ae, ts)
        return self._arrays

    def n_input_events(self) -> int:
        return sum(1 for e in self.events if e.ae >= 0)


@dataclass
class EventStream:
    header: StreamHeader
    samples: list[Sample]


@dataclass
class Violation:
    sample: int      # sample index, -1 for stream-level problems
    kind: str        # "range" | "ordering" | "framing" | "target" | "format"
    message: str


@dataclass
class StreamReport:
    n_samples: int = 0
    n_events: int = 0
    per_sample_events: list[int] = field(default_factory=list)
    per_sample_duration: list[int] = field(default_factory=list)
    mean_rate: float = 0.0        # input events per tick, stream-wide
    peak_tick_events: int = 0     # most input events sharing one tick
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _frame_samples(events: list[Event], header: StreamHeader,
                   report: StreamReport | None) -> list[Sample]:
    """Split a flat event list into samples, validating invariants.

    With ``report`` given, violations are recorded and parsing continues;
    otherwise the first violation raises.
    """

    def flag(kind: str, message: str, exc_type):
        if report is None:
            raise exc_type(message)
        report.violations.append(Violation(len(samples), kind, message))

    samples: list[Sample] = []
    current: list[Event] = []
    targets: list[Event] = []
    last_ts = 0
    for ev in events:
        if ev.ts < last_ts:
            flag("ordering", f"timestamp {ev.ts} after {last_ts} "
                 f"in sample {len(samples)}", OrderingError)
        last_ts = ev.ts
        if ev.ae >= 0:
            if header.n_in and ev.ae >= header.n_in:
                flag("range", f"address {ev.ae} outside 0..{header.n_in - 1}",
                     ProtocolError)
            current.append(ev)
        elif ev.ae == AE_TARGET:
            targets.append(ev)
            current.append(ev)
        else:  # AE_END closes the sample
            current.append(ev)
            target = _extract_target(targets, header, len(samples), flag)
            samples.append(Sample(events=current, target=target,
                                  duration_ticks=ev.ts + 1))
            current, targets, last_ts = [], [], 0
    if current:
        flag("framing", "stream ends inside a sample (missing end event)",
             FramingError)
        if report is not None and current:
            target = _extract_target(targets, header, len(samples), flag)
            samples.append(Sample(events=current, target=target,
                                  duration_ticks=current[-1].ts + 1))
    return samples


def _extract_target(targets: list[Event], header: StreamHeader,
                    sample_idx: int, flag) -> TargetSignal | None:
    if header.mode == MODE_CLASSIFICATION:
        if len(targets) != 1:
            flag("target", f"classification sample {sample_idx} has "
                 f"{len(targets)} target events (expected 1)", FramingError)
            if not targets:
                return None
        return TargetSignal.label(targets[0].payload)
    if not targets:
        return None
    return TargetSignal.regression([e.ts for e in targets],
                                   [e.payload for e in targets])


# ---------------------------------------------------------------------------
# Text format


def _add_event(events: list[Event], report: StreamReport | None, **kw) -> None:
    """Append an event; in report mode a malformed event is flagged, not fatal."""
    try:
        events.append(Event(**kw))
    except ProtocolError:
        if report is None:
            raise
        report.violations.append(
            Violation(-1, "format", f"malformed event {kw}"))


def _parse_text(text: str, report: StreamReport | None):
    header = StreamHeader()
    events: list[Event] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if line.startswith("!"):
                key, value = parts[0][1:], parts[1]
                if key == "version":
                    header.version = int(value)
                elif key == "n_in":
                    header.n_in = int(value)
                elif key == "tick_us":
                    header.tick_us = int(value)
                elif key == "mode":
                    if value not in _MODE_CODE:
                        raise StreamFormatError(
                            f"line {lineno}: unknown mode {value!r}")
                    header.mode = value
                else:
                    raise StreamFormatError(
                        f"line {lineno}: unknown header key {key!r}")
            elif parts[0] == "E":
                _add_event(events, report, ae=int(parts[1]), ts=int(parts[2]))
            elif parts[0] == "T":
                _add_event(events, report, ae=AE_TARGET, ts=int(parts[1]),
                           payload=int(parts[2]))
            elif parts[0] == "X":
                _add_event(events, report, ae=AE_END, ts=int(parts[1]))
            else:
                raise StreamFormatError(
                    f"line {lineno}: unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise StreamFormatError(f"line {lineno}: {raw!r}: {exc}") from exc
        except ProtocolError as exc:
            raise type(exc)(f"line {lineno}: {exc}") from exc
    return header, events


def _serialize_text(header: StreamHeader, samples: list[Sample]) -> bytes:
    lines = [f"!version {header.version}", f"!n_in {header.n_in}",
             f"!tick_us {header.tick_us}", f"!mode {header.mode}"]
    for sample in samples:
        for ev in sample.events:
            if ev.ae >= 0:
                lines.append(f"E {ev.ae} {ev.ts}")
            elif ev.ae == AE_TARGET:
                lines.append(f"T {ev.ts} {ev.payload}")
            else:
                lines.append(f"X {ev.ts}")
    return ("\n".join(lines) + "\n").encode("ascii")


# ---------------------------------------------------------------------------
# Binary format

_HDR = struct.Struct("<4sHHII")
_EV = struct.Struct("<iI")
_PAYLOAD = struct.Struct("<i")


def _parse_binary(data: bytes, report: StreamReport | None):
    if len(data) < _HDR.size:
        raise StreamFormatError("truncated header")
    magic, version, mode_code, n_in, tick_us = _HDR.unpack_from(data, 0)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}")
    if mode_code not in _CODE_MODE:
        raise StreamFormatError(f"unknown mode code {mode_code}")
    header = StreamHeader(version=version, n_in=n_in, tick_us=tick_us,
                          mode=_CODE_MODE[mode_code])
    events: list[Event] = []
    off = _HDR.size
    while off < len(data):
        if off + _EV.size > len(data):
            raise StreamFormatError(f"truncated event record at byte {off}")
        ae, ts = _EV.unpack_from(data, off)
        off += _EV.size
        payload = None
        if ae == AE_TARGET:
            if off + _PAYLOAD.size > len(data):
                raise StreamFormatError(f"truncated payload at byte {off}")
            (payload,) = _PAYLOAD.unpack_from(data, off)
            off += _PAYLOAD.size
        _add_event(events, report, ae=ae, ts=int(ts), payload=payload)
    return header, events


def _serialize_binary(header: StreamHeader, samples: list[Sample]) -> bytes:
    out = [_HDR.pack(MAGIC, header.version, _MODE_CODE[header.mode],
                     header.n_in, header.tick_us)]
    for sample in samples:
        for ev in sample.events:
            out.append(_EV.pack(ev.ae, ev.ts))
            if ev.ae == AE_TARGET:
                out.append(_PAYLOAD.pack(ev.payload))
    return b"".join(out)


# ---------------------------------------------------------------------------
# Public API


def parse_stream(data: bytes | str) -> EventStream:
    """Parse text or binary stream bytes; raises on the first violation."""
    header, events = _parse_any(data, report=None)
    samples = _frame_samples(events, header, report=None)
    return EventStream(header=header, samples=samples)


def _parse_any(data: bytes | str, report: StreamReport | None):
    if isinstance(data, str):
        return _parse_text(data, report)
    if data[:4] == MAGIC:
        return _parse_binary(data, report)
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise StreamFormatError("neither binary magic nor ascii text") from exc
    return _parse_text(text, report)


def serialize_stream(stream: EventStream, binary: bool = False) -> bytes:
    """Canonical encoding; the inverse of parse_stream on canonical files."""
    _check_serializable(stream)
    if binary:
        return _serialize_binary(stream.header, stream.samples)
    return _serialize_text(stream.header, stream.samples)


def _check_serializable(stream: EventStream) -> None:
    for idx, sample in enumerate(stream.samples):
        if not sample.events or sample.events[-1].ae != AE_END:
            raise FramingError(f"sample {idx} does not end with an end event")
        if sum(1 for e in sample.events if e.ae == AE_END) != 1:
            raise FramingError(f"sample {idx} has multiple end events")
        last = 0
        for ev in sample.events:
            if ev.ts < last:
                raise OrderingError(
                    f"sample {idx}: timestamp {ev.ts} after {last}")
            last = ev.ts
            if 0 <= ev.ae and stream.header.n_in and ev.ae >= stream.header.n_in:
                raise ProtocolError(
                    f"sample {idx}: address {ev.ae} outside configured range")


def validate_stream(data: bytes | str | EventStream,
                    cfg: NetworkConfig | None = None) -> StreamReport:
    """Report-only validation: statistics plus every detected violation."""
    report = StreamReport()
    if isinstance(data, EventStream):
        header, samples = data.header, data.samples
        _frame_samples([e for s in samples for e in s.events], header, report)
    else:
        try:
            header, events = _parse_any(data, report)
        except StreamFormatError as exc:
            report.violations.append(Violation(-1, "format", str(exc)))
            return report
        samples = _frame_samples(events, header, report)

    if cfg is not None:
        if header.n_in != cfg.n_in:
            report.violations.append(Violation(
                -1, "range", f"header n_in {header.n_in} != core n_in {cfg.n_in}"))
        for idx, sample in enumerate(samples):
            label = sample.label
            if label is not None and not (0 <= label < cfg.n_out):
                report.violations.append(Violation(
                    idx, "target", f"label {label} outside 0..{cfg.n_out - 1}"))

    report.n_samples = len(samples)
    total_events = 0
    total_ticks = 0
    peak = 0
    for sample in samples:
        n_inp = sample.n_input_events()
        report.per_sample_events.append(n_inp)
        report.per_sample_duration.append(sample.duration_ticks)
        total_events += n_inp
        total_ticks += sample.duration_ticks
        _, ts = sample.input_arrays()
        if ts.size:
            _, counts = np.unique(ts, return_counts=True)
            peak = max(peak, int(counts.max()))
    report.n_events = total_events
    report.mean_rate = total_events / total_ticks if total_ticks else 0.0
    report.peak_tick_events = peak
    return report
