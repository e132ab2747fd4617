"""Piecewise-constant drive waveforms and gate targets.

All times are in units of 1/Omega_max and Rabi amplitudes in units of
Omega_max.  A waveform carries one track for the measurement atom and one
shared track for all data atoms (global data drive).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .pauli import hash_arrays

PHASE = "phase"
DETUNING = "detuning_cutoff"

ROLES = ("measurement", "data")


@dataclass
class ControlWaveform:
    segment_count: int
    total_duration: float
    amplitude_m: np.ndarray
    amplitude_d: np.ndarray
    # phase parametrization: phase_* holds phi(t); detuning parametrization:
    # phase_* holds Delta(t) and the coupling phase is fixed to zero.
    phase_m: np.ndarray
    phase_d: np.ndarray
    parametrization: str = PHASE
    cutoff: float | None = None

    def __post_init__(self):
        for name in ("amplitude_m", "amplitude_d", "phase_m", "phase_d"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.validate()

    def validate(self):
        n = self.segment_count
        if n <= 0 or self.total_duration <= 0:
            raise ValueError("segment_count and total_duration must be positive")
        for name in ("amplitude_m", "amplitude_d", "phase_m", "phase_d"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if np.any(self.amplitude_m < -1e-12) or np.any(self.amplitude_m > 1 + 1e-12):
            raise ValueError("measurement amplitudes outside [0, 1]")
        if np.any(self.amplitude_d < -1e-12) or np.any(self.amplitude_d > 1 + 1e-12):
            raise ValueError("data amplitudes outside [0, 1]")
        if self.parametrization == DETUNING:
            if self.cutoff is None:
                raise ValueError("detuning parametrization requires a cutoff")
            if np.any(np.abs(self.phase_m) > self.cutoff + 1e-9) or np.any(np.abs(self.phase_d) > self.cutoff + 1e-9):
                raise ValueError("detuning exceeds cutoff")
        elif self.parametrization != PHASE:
            raise ValueError(f"unknown parametrization {self.parametrization!r}")

    @property
    def dt(self) -> float:
        return self.total_duration / self.segment_count

    def track(self, role: str) -> tuple[np.ndarray, np.ndarray]:
        if role == "measurement":
            return self.amplitude_m, self.phase_m
        if role == "data":
            return self.amplitude_d, self.phase_d
        raise ValueError(f"unknown role {role!r}")

    def content_hash(self) -> str:
        return hash_arrays(self.amplitude_m, self.amplitude_d, self.phase_m, self.phase_d,
                           np.array([self.total_duration, self.segment_count]))

    def to_detuning(self, cutoff: float) -> "ControlWaveform":
        """Differentiate the phase tracks into detuning tracks (midpoint rule)."""
        if self.parametrization != PHASE:
            raise ValueError("to_detuning expects a phase-parametrized waveform")
        dt = self.dt

        def diff(phi):
            d = np.zeros_like(phi)
            d[1:] = np.diff(np.unwrap(phi)) / dt
            d[0] = d[1] if len(phi) > 1 else 0.0
            return np.clip(d, -cutoff, cutoff)

        return ControlWaveform(self.segment_count, self.total_duration,
                               self.amplitude_m.copy(), self.amplitude_d.copy(),
                               diff(self.phase_m), diff(self.phase_d),
                               parametrization=DETUNING, cutoff=cutoff)


CZ2 = "CZ2"
CZ = "CZ"


@dataclass(frozen=True)
class GateTarget:
    """Diagonal target: phases theta_m*m + (theta_d + m*pi)*(sum of data bits)."""

    kind: str  # CZ2 or CZ

    def __post_init__(self):
        if self.kind not in (CZ2, CZ):
            raise ValueError(f"unknown gate kind {self.kind!r}")

    @property
    def n_data(self) -> int:
        return 2 if self.kind == CZ2 else 1

    @property
    def dim(self) -> int:
        return 2 ** (1 + self.n_data)

    def basis_states(self):
        """(m, data bits...) tuples for all computational basis states."""
        import itertools
        return [bits for bits in itertools.product((0, 1), repeat=1 + self.n_data)]

    def phase(self, bits, theta_m: float, theta_d: float) -> float:
        m, data = bits[0], bits[1:]
        s = sum(data)
        return theta_m * m + (theta_d + m * np.pi) * s


@dataclass
class PulseResult:
    waveform: ControlWaveform
    theta_m: float
    theta_d: float
    infidelity: float
    rydberg_time_m: float
    rydberg_time_d: float
    kind: str = CZ2
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.infidelity < 0:
            raise ValueError("infidelity must be >= 0")

    def save(self, path):
        wf = self.waveform
        key = "phase" if wf.parametrization == PHASE else "detuning"
        doc = {
            "version": 1,
            "kind": self.kind,
            "parametrization": wf.parametrization,
            "cutoff": wf.cutoff,
            "segment_count": wf.segment_count,
            "total_duration": wf.total_duration,
            "amplitude": {"measurement": wf.amplitude_m.tolist(), "data": wf.amplitude_d.tolist()},
            key: {"measurement": wf.phase_m.tolist(), "data": wf.phase_d.tolist()},
            "theta_m": self.theta_m,
            "theta_d": self.theta_d,
            "infidelity": self.infidelity,
            "rydberg_time_m": self.rydberg_time_m,
            "rydberg_time_d": self.rydberg_time_d,
        }
        with open(path, "w") as f:
            json.dump(doc, f)

    @classmethod
    def load(cls, path) -> "PulseResult":
        with open(path) as f:
            doc = json.load(f)
        if doc.get("version") != 1:
            raise ValueError("unsupported pulse file version")
        key = "phase" if doc["parametrization"] == PHASE else "detuning"
        wf = ControlWaveform(
            doc["segment_count"], doc["total_duration"],
            np.array(doc["amplitude"]["measurement"]), np.array(doc["amplitude"]["data"]),
            np.array(doc[key]["measurement"]), np.array(doc[key]["data"]),
            parametrization=doc["parametrization"], cutoff=doc["cutoff"])
        return cls(waveform=wf, theta_m=doc["theta_m"], theta_d=doc["theta_d"],
                   infidelity=doc["infidelity"], rydberg_time_m=doc["rydberg_time_m"],
                   rydberg_time_d=doc["rydberg_time_d"], kind=doc["kind"])


def reference_pi_2pi_pi(target: GateTarget, segments: int = 500) -> ControlWaveform:
    """Sequential resonant pi(measurement) - 2pi(data) - pi(measurement) pulse.

    Implements the CZ2 target (with theta_m = theta_d = pi) under infinite
    blockade; total duration 4*pi.  Used as the baseline the time-optimal
    pulse is compared against.
    """
    if target.kind != CZ2:
        raise ValueError("reference pulse is defined for the CZ2 target")
    if segments % 4:
        raise ValueError("segments must be divisible by 4 to align the pi sections")
    total = 4 * np.pi
    q = segments // 4
    amp_m = np.zeros(segments)
    amp_d = np.zeros(segments)
    amp_m[:q] = 1.0
    amp_m[3 * q:] = 1.0
    amp_d[q:3 * q] = 1.0
    zeros = np.zeros(segments)
    return ControlWaveform(segments, total, amp_m, amp_d, zeros.copy(), zeros.copy())
