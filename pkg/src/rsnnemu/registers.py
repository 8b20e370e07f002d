"""Register-map configuration layer and weight-memory access.

The map emulates the configuration bus of the accelerator at the behavioral
level: every network and learning parameter has an addressed register,
weight memories are written and read back through matrix/row/column
commands, and status counters (tick, sparsity, saturation) are read-only.
Addresses are this emulator's own enumeration (documented in the README);
access is plain read/write, no serial bit-level emulation.

Rules:

* every writable register reads back the last written value;
* configuration writes while a sample is active raise ``BusyError``;
* status registers reject writes with ``AddressError``.

The weight checkpoint is a self-describing binary blob:

    magic "RSNW" | u16 version | u16 n_in | u16 n_rec | u16 n_out
    | u16 frac_bits | w_inp | w_rec | w_out   (row-major signed 8-bit)
"""

from __future__ import annotations

import struct
from enum import IntEnum

import numpy as np

from .core import (WeightMemories, RESET_TO_ZERO, RESET_SUBTRACT,
                   MODE_CLASSIFICATION, MODE_REGRESSION)
from .errors import AddressError, BusyError, ConfigError, ShapeError
from .learning import PER_SAMPLE, PER_TICK


class Reg(IntEnum):
    # network configuration
    N_IN = 0x00
    N_REC = 0x01
    N_OUT = 0x02
    THRESHOLD = 0x03
    LEAK_SHIFT = 0x04
    READOUT_LEAK_SHIFT = 0x05
    RESET_MODE = 0x06          # 0 = to_zero, 1 = subtract_threshold
    FRAC_BITS = 0x07
    MODE = 0x08                # 0 = classification, 1 = regression
    # learning configuration
    LR_SHIFT = 0x10
    TRACE_SHIFT = 0x11
    SURROGATE_WIDTH = 0x12
    FEEDBACK_SEED = 0x13
    LEARN_ENABLE = 0x14        # 0 / 1
    UPDATE_GRANULARITY = 0x15  # 0 = per_sample, 1 = per_tick
    # weight initialization command parameters
    INIT_SEED = 0x18
    INIT_RANGE = 0x19
    # status (read-only)
    TICK = 0x20
    SKIP_COUNT = 0x21
    SAT_COUNT = 0x22
    WEIGHT_SAT_COUNT = 0x23
    SAMPLE_ACTIVE = 0x24


STATUS_REGS = frozenset({Reg.TICK, Reg.SKIP_COUNT, Reg.SAT_COUNT,
                         Reg.WEIGHT_SAT_COUNT, Reg.SAMPLE_ACTIVE})

RESET_MODE_CODES = {0: RESET_TO_ZERO, 1: RESET_SUBTRACT}
MODE_CODES = {0: MODE_CLASSIFICATION, 1: MODE_REGRESSION}
GRANULARITY_CODES = {0: PER_SAMPLE, 1: PER_TICK}

MATRIX_IDS = {0: "w_inp", 1: "w_rec", 2: "w_out"}


class RegisterMap:
    """Addressed access to one device's configuration and status."""

    def __init__(self, device):
        self._dev = device

    def write_reg(self, addr: int, value: int) -> None:
        try:
            reg = Reg(addr)
        except ValueError:
            raise AddressError(f"unknown register address {addr:#x}") from None
        if reg in STATUS_REGS:
            raise AddressError(f"register {reg.name} is read-only")
        if self._dev.sample_active:
            raise BusyError(f"write to {reg.name} while a sample is active")
        old = self._dev.regfile[reg]
        self._dev.regfile[reg] = int(value)
        try:
            self._dev.apply_registers()
        except ConfigError:
            self._dev.regfile[reg] = old
            raise

    def read_reg(self, addr: int) -> int:
        try:
            reg = Reg(addr)
        except ValueError:
            raise AddressError(f"unknown register address {addr:#x}") from None
        if reg in STATUS_REGS:
            return self._dev.read_status(reg)
        return self._dev.regfile[reg]

    # -- weight memory commands ------------------------------------------

    def _matrix(self, matrix_id: int) -> np.ndarray:
        if matrix_id not in MATRIX_IDS:
            raise AddressError(f"unknown weight matrix id {matrix_id}")
        return getattr(self._dev.weights, MATRIX_IDS[matrix_id])

    def write_weight(self, matrix_id: int, row: int, col: int, value: int) -> None:
        m = self._matrix(matrix_id)
        if not (0 <= row < m.shape[0] and 0 <= col < m.shape[1]):
            raise AddressError(f"weight cell ({row},{col}) outside {m.shape}")
        if not (-128 <= value <= 127):
            raise ConfigError(f"weight value {value} not signed 8-bit")
        if self._dev.sample_active:
            raise BusyError("weight write while a sample is active")
        m[row, col] = value

    def read_weight(self, matrix_id: int, row: int, col: int) -> int:
        m = self._matrix(matrix_id)
        if not (0 <= row < m.shape[0] and 0 <= col < m.shape[1]):
            raise AddressError(f"weight cell ({row},{col}) outside {m.shape}")
        return int(m[row, col])

    def load_weights(self, matrix_id: int, payload) -> None:
        m = self._matrix(matrix_id)
        if self._dev.sample_active:
            raise BusyError("weight load while a sample is active")
        if isinstance(payload, (bytes, bytearray)):
            arr = np.frombuffer(bytes(payload), dtype=np.int8)
            if arr.size != m.size:
                raise ShapeError(f"payload {arr.size} bytes, expected {m.size}")
            arr = arr.reshape(m.shape)
        else:
            arr = np.asarray(payload)
            if arr.shape != m.shape:
                raise ShapeError(f"payload shape {arr.shape}, expected {m.shape}")
            if arr.dtype != np.int8:
                if np.any(arr < -128) or np.any(arr > 127):
                    raise ConfigError("weight values not signed 8-bit")
                arr = arr.astype(np.int8)
        m[:] = arr

    def dump_weights(self, matrix_id: int) -> bytes:
        return self._matrix(matrix_id).tobytes()

    def init_weights(self) -> None:
        """Randomize all three memories from INIT_SEED / INIT_RANGE."""
        self._dev.init_weights()


# ---------------------------------------------------------------------------
# Weight checkpoint blob

_CKPT_HDR = struct.Struct("<4sHHHHH")
CKPT_MAGIC = b"RSNW"
CKPT_VERSION = 1


def save_checkpoint(cfg, weights: WeightMemories) -> bytes:
    head = _CKPT_HDR.pack(CKPT_MAGIC, CKPT_VERSION, cfg.n_in, cfg.n_rec,
                          cfg.n_out, cfg.frac_bits)
    return head + weights.w_inp.tobytes() + weights.w_rec.tobytes() \
        + weights.w_out.tobytes()


def load_checkpoint(blob: bytes):
    """Returns ((n_in, n_rec, n_out, frac_bits), WeightMemories)."""
    if len(blob) < _CKPT_HDR.size:
        raise ShapeError("checkpoint too short for header")
    magic, version, n_in, n_rec, n_out, frac_bits = _CKPT_HDR.unpack_from(blob)
    if magic != CKPT_MAGIC:
        raise ShapeError(f"bad checkpoint magic {magic!r}")
    if version != CKPT_VERSION:
        raise ShapeError(f"unsupported checkpoint version {version}")
    sizes = (n_in * n_rec, n_rec * n_rec, n_rec * n_out)
    if len(blob) != _CKPT_HDR.size + sum(sizes):
        raise ShapeError("checkpoint body does not match topology")
    off = _CKPT_HDR.size
    mats = []
    for count, shape in zip(sizes, ((n_in, n_rec), (n_rec, n_rec),
                                    (n_rec, n_out))):
        mats.append(np.frombuffer(blob, dtype=np.int8, count=count,
                                  offset=off).reshape(shape).copy())
        off += count
    return (n_in, n_rec, n_out, frac_bits), WeightMemories(*mats)
