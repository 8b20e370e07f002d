"""Behavioral emulator of a recurrent spiking neural network accelerator.

The package models a 256-neuron fixed-point LIF recurrent core with 8-bit
weight memories, an online local learning engine whose state scales with
neurons rather than synapses, an address-event (AER) stream protocol with
sample framing, a register-map configuration layer, synthetic task
generators, and a training/evaluation/sweep/benchmark harness. A FastAPI
service exposes the emulator to multiple clients; the CLI is a thin client
of that service.
"""

__version__ = "0.1.0"

from .core import NetworkConfig, WeightMemories, CoreState, new_core
from .learning import LearnParams, TraceState, TargetSignal
from .aer import Event, Sample, EventStream, parse_stream, serialize_stream

__all__ = [
    "NetworkConfig", "WeightMemories", "CoreState", "new_core",
    "LearnParams", "TraceState", "TargetSignal",
    "Event", "Sample", "EventStream", "parse_stream", "serialize_stream",
    "__version__",
]
