"""Pulse synthesis, leakage-channel extraction and surface-code memory
simulation for Rydberg atom arrays driven with three-qubit CZ2 gates."""

__version__ = "0.1.0"

from .waveform import ControlWaveform, GateTarget, PulseResult, reference_pi_2pi_pi
from .grape import synthesize_time_optimal, evaluate_fidelity, rydberg_occupation_times
from .pauli import PauliString, PauliChannelTable
