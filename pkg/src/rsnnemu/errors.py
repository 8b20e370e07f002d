"""Exception hierarchy shared by all emulator layers."""


class EmulatorError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EmulatorError):
    """Invalid network or learning configuration (bad dimensions, ranges)."""


class ProtocolError(EmulatorError):
    """Event-level violation: address out of range, bad label, bad payload."""


class FramingError(ProtocolError):
    """Sample framing violation: missing or misplaced end-of-sample marker."""


class OrderingError(ProtocolError):
    """Timestamps decrease within a sample."""


class StreamFormatError(EmulatorError):
    """Unparseable event-stream bytes (bad magic, truncated record, bad line)."""


class AddressError(EmulatorError):
    """Unknown or non-writable register address, or weight cell out of range."""


class BusyError(EmulatorError):
    """Configuration write attempted while a sample is active."""


class ShapeError(EmulatorError):
    """Payload dimensions do not match the configured topology."""


class RunawayError(EmulatorError):
    """Sample replay would exceed the tick budget."""


class SplitError(EmulatorError):
    """Dataset split is impossible (bad fraction, class too small)."""


class InputError(EmulatorError):
    """Harness input is unusable (empty stream, missing dataset)."""
