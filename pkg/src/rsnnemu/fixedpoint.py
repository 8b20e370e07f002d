"""Fixed-point formats and integer arithmetic helpers.

All on-chip quantities are plain integers:

* membrane potentials: signed 16-bit, ``frac_bits`` fractional bits
  (raw value v represents v * 2**-frac_bits);
* readout accumulators: signed 32-bit in the same fractional scale,
  wider because they integrate over a whole sample without spiking;
* weights: signed 8-bit, updates saturate at +/-127;
* traces and errors: Q8 (``TRACE_ONE`` / ``ERR_ONE`` represent 1.0),
  held in 32-bit so decay arithmetic never overflows.

Decay is multiplier-free everywhere: x <- x - (x >> shift), i.e. a decay
factor of 1 - 2**-shift per tick, with arithmetic-shift truncation.
"""

from __future__ import annotations

import numpy as np

V_MIN = -(1 << 15)
V_MAX = (1 << 15) - 1

Y_MIN = -(1 << 31)
Y_MAX = (1 << 31) - 1

W_MIN = -127
W_MAX = 127

# 1.0 in trace / error fixed point (Q8). Traces and errors live in
# 16-bit saturating fixed point like the membranes.
TRACE_ONE = 256
TRACE_MAX = (1 << 15) - 1
ERR_ONE = 256
ERR_MAX = (1 << 15) - 1


def leak(x: np.ndarray, shift: int) -> np.ndarray:
    """One decay step x - (x >> shift) with arithmetic-shift truncation."""
    return x - (x >> shift)


def saturate(acc: np.ndarray, lo: int, hi: int) -> tuple[np.ndarray, int]:
    """Clip ``acc`` into [lo, hi]; return (clipped, number of clipped lanes)."""
    over = int(np.count_nonzero((acc > hi) | (acc < lo)))
    if over:
        acc = np.clip(acc, lo, hi)
    return acc, over


def shift_to_zero(p, lr_shift: int):
    """Right-shift with truncation toward zero (sign-symmetric learning steps).

    Plain arithmetic shift floors, which would bias small negative updates
    toward -1; truncating toward zero keeps +p and -p updates mirrored.
    Works on scalars and integer arrays.
    """
    p = np.asarray(p)
    return np.sign(p) * (np.abs(p) >> lr_shift)
