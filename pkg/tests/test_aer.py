"""Event-stream parsing, serialization, framing, and validation."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsnnemu.aer import (Event, EventStream, Sample, StreamHeader,
                         parse_stream, serialize_stream, validate_stream,
                         MAGIC)
from rsnnemu.core import NetworkConfig
from rsnnemu.errors import (FramingError, OrderingError, ProtocolError,
                            StreamFormatError)
from rsnnemu.learning import TargetSignal


def make_stream(rng, n_samples=3, n_in=8, mode="classification"):
    samples = []
    for _ in range(n_samples):
        duration = int(rng.integers(2, 30))
        events = []
        t = 0
        for _ in range(int(rng.integers(0, 15))):
            t = min(duration - 1, t + int(rng.integers(0, 3)))
            events.append(Event(int(rng.integers(n_in)), t))
        if mode == "classification":
            label = int(rng.integers(2))
            events.append(Event(-2, duration - 1, payload=label))
            target = TargetSignal.label(label)
        else:
            ticks = sorted(set(int(rng.integers(duration)) for _ in range(3)))
            vals = [int(rng.integers(-100, 100)) for _ in ticks]
            for tk, v in zip(ticks, vals):
                events.append(Event(-2, tk, payload=v))
            events.sort(key=lambda e: e.ts)
            target = TargetSignal.regression(ticks, vals)
        events.append(Event(-1, duration - 1))
        samples.append(Sample(events=events, target=target,
                              duration_ticks=duration))
    return EventStream(header=StreamHeader(n_in=n_in, mode=mode),
                       samples=samples)


class TestTextFormat:
    def test_empty_body_parses_to_no_samples(self):
        text = "!version 1\n!n_in 4\n!tick_us 1000\n!mode classification\n"
        stream = parse_stream(text)
        assert stream.samples == []
        assert stream.header.n_in == 4

    def test_two_events_then_end(self):
        text = ("!n_in 4\n"
                "E 0 0\n"
                "E 2 3\n"
                "T 5 1\n"
                "X 5\n")
        stream = parse_stream(text)
        assert len(stream.samples) == 1
        sample = stream.samples[0]
        assert sample.n_input_events() == 2
        assert sample.label == 1
        assert sample.duration_ticks == 6

    def test_comments_and_blanks_ignored(self):
        text = "!n_in 2\n# a comment\n\nE 1 0\nT 1 0\nX 1\n"
        assert len(parse_stream(text).samples) == 1

    def test_unknown_record_rejected(self):
        with pytest.raises(StreamFormatError):
            parse_stream("!n_in 2\nQ 1 2\n")

    def test_ordering_violation_raises_with_position(self):
        text = "!n_in 4\nE 0 5\nE 1 2\nT 5 0\nX 5\n"
        with pytest.raises(OrderingError):
            parse_stream(text)

    def test_range_violation(self):
        with pytest.raises(ProtocolError):
            parse_stream("!n_in 4\nE 4 0\nT 1 0\nX 1\n")

    def test_missing_terminator(self):
        with pytest.raises(FramingError):
            parse_stream("!n_in 4\nE 0 0\nT 1 0\n")

    def test_classification_needs_exactly_one_target(self):
        with pytest.raises(FramingError):
            parse_stream("!n_in 4\nE 0 0\nX 1\n")
        with pytest.raises(FramingError):
            parse_stream("!n_in 4\nT 0 1\nT 1 0\nX 1\n")


class TestBinaryFormat:
    def test_round_trip_identity(self):
        stream = make_stream(np.random.default_rng(0))
        blob = serialize_stream(stream, binary=True)
        assert blob[:4] == MAGIC
        again = serialize_stream(parse_stream(blob), binary=True)
        assert blob == again

    def test_truncated_record_rejected(self):
        stream = make_stream(np.random.default_rng(1))
        blob = serialize_stream(stream, binary=True)
        with pytest.raises(StreamFormatError):
            parse_stream(blob[:-2])

    def test_bad_magic_falls_back_to_text_then_fails(self):
        with pytest.raises(StreamFormatError):
            parse_stream(b"XXXX\x00\x00")


class TestRoundTrip:
    @pytest.mark.parametrize("mode", ["classification", "regression"])
    @pytest.mark.parametrize("binary", [False, True])
    def test_serialize_parse_serialize_identity(self, mode, binary):
        rng = np.random.default_rng(42)
        for trial in range(50):
            stream = make_stream(rng, n_samples=int(rng.integers(0, 5)),
                                 mode=mode)
            blob = serialize_stream(stream, binary=binary)
            parsed = parse_stream(blob)
            assert serialize_stream(parsed, binary=binary) == blob
            assert len(parsed.samples) == len(stream.samples)
            for a, b in zip(parsed.samples, stream.samples):
                assert a.duration_ticks == b.duration_ticks
                assert [(e.ae, e.ts, e.payload) for e in a.events] == \
                       [(e.ae, e.ts, e.payload) for e in b.events]

    def test_empty_sample_list_serializes_header_only(self):
        stream = EventStream(StreamHeader(n_in=4), [])
        text = serialize_stream(stream).decode()
        assert text == "!version 1\n!n_in 4\n!tick_us 1000\n!mode classification\n"
        blob = serialize_stream(stream, binary=True)
        assert len(blob) == 16  # header record only
        assert parse_stream(blob).samples == []

    def test_serialize_rejects_order_violation(self):
        sample = Sample(events=[Event(1, 5), Event(0, 2),
                                Event(-2, 6, payload=0), Event(-1, 6)],
                        target=TargetSignal.label(0), duration_ticks=7)
        stream = EventStream(StreamHeader(n_in=4), [sample])
        with pytest.raises(OrderingError):
            serialize_stream(stream)

    def test_serialize_rejects_missing_end(self):
        sample = Sample(events=[Event(1, 5)], target=None, duration_ticks=6)
        stream = EventStream(StreamHeader(n_in=4), [sample])
        with pytest.raises(FramingError):
            serialize_stream(stream)


class TestValidate:
    def test_clean_stream_zero_violations(self):
        stream = make_stream(np.random.default_rng(3))
        report = validate_stream(serialize_stream(stream))
        assert report.ok
        assert report.n_samples == len(stream.samples)

    def test_range_violation_flagged_not_raised(self):
        text = "!n_in 4\nE 4 0\nT 1 0\nX 1\n"
        report = validate_stream(text)
        assert not report.ok
        assert any(v.kind == "range" for v in report.violations)

    def test_event_counts_match_brute_force(self):
        stream = make_stream(np.random.default_rng(9), n_samples=5)
        blob = serialize_stream(stream)
        report = validate_stream(blob)
        brute = [sum(1 for e in s.events if e.ae >= 0) for s in stream.samples]
        assert report.per_sample_events == brute
        assert report.n_events == sum(brute)

    def test_config_mismatch_flagged(self):
        stream = make_stream(np.random.default_rng(3), n_in=8)
        cfg = NetworkConfig(n_in=24, n_rec=8, n_out=2).validate()
        report = validate_stream(serialize_stream(stream), cfg)
        assert any(v.kind == "range" for v in report.violations)

    def test_framing_count_matches_end_events(self):
        stream = make_stream(np.random.default_rng(5), n_samples=4)
        blob = serialize_stream(stream)
        n_end = sum(1 for s in stream.samples for e in s.events if e.ae == -1)
        assert validate_stream(blob).n_samples == n_end


@st.composite
def stream_strategy(draw):
    n_in = draw(st.integers(1, 16))
    n_samples = draw(st.integers(0, 4))
    rng_seed = draw(st.integers(0, 2**31))
    return make_stream(np.random.default_rng(rng_seed), n_samples, n_in)


class TestFuzz:
    @given(stream=stream_strategy(), binary=st.booleans())
    @settings(max_examples=60, deadline=None)
    def test_canonical_round_trip(self, stream, binary):
        blob = serialize_stream(stream, binary=binary)
        assert serialize_stream(parse_stream(blob), binary=binary) == blob

    def test_mutations_always_detected(self):
        # Structured mutations that break an invariant must never parse.
        rng = np.random.default_rng(123)
        detected = 0
        trials = 0
        for i in range(200):
            stream = make_stream(rng, n_samples=3, n_in=8)
            kind = i % 4
            sample = stream.samples[int(rng.integers(len(stream.samples)))]
            if kind == 0:    # framing: drop the end event
                sample.events.pop()
            elif kind == 1:  # ordering: swap a decreasing timestamp in
                if sample.n_input_events() < 2:
                    continue
                sample.events[0].ts = sample.events[-1].ts + 5
            elif kind == 2:  # range: address beyond header n_in
                sample.events.insert(0, Event(stream.header.n_in + 1, 0))
            else:            # target: second label in one sample
                sample.events.insert(0, Event(-2, 0, payload=0))
            trials += 1
            blob = None
            try:
                blob = serialize_stream(stream)
            except Exception:
                detected += 1
                continue
            with pytest.raises((FramingError, OrderingError, ProtocolError)):
                parse_stream(blob)
            detected += 1
        assert trials > 100 and detected == trials
