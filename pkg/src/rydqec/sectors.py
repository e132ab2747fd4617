"""Computational-sector dynamics for blockaded gate pulses.

Under the projected Hamiltonian the pattern of atoms in |0> versus {|1>,|r>}
is conserved and |0> <-> |1> transitions are impossible, so each computational
basis state evolves inside its own small sector and the propagator restricted
to the computational basis is diagonal.  All distinct sectors are stacked into
one block-diagonal space (dimension 17 for CZ2, 8 for CZ) so a pulse can be
propagated with a single chain of small matrix products.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .waveform import ControlWaveform, GateTarget, PHASE, DETUNING

R = 2  # local level codes: 0, 1, r


@dataclass
class SectorSpace:
    """Block-diagonal sector basis for one gate target."""

    target: GateTarget
    states: list[tuple[int, ...]]        # local levels per atom, atom 0 = measurement
    comp_index: list[int]                # position of each computational state's sector seed
    comp_bits: list[tuple[int, ...]]     # the (m, d...) bits, parallel to comp_index
    comp_mult: list[int]                 # degeneracy weight of each distinct state
    coupling_m: np.ndarray               # upper coupling |r><1| on the measurement atom
    coupling_d: np.ndarray               # summed upper couplings on the data atoms
    n_r_m: np.ndarray                    # diag: measurement-atom Rydberg occupation
    n_r_d: np.ndarray                    # diag: total data-atom Rydberg occupation

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def d_comp(self) -> int:
        return self.target.dim


def build_sector_space(target: GateTarget) -> SectorSpace:
    n_atoms = 1 + target.n_data
    # distinct sectors: data atoms are interchangeable (shared drive), so a
    # sector is keyed by (m bit, number of data atoms in 1)
    seen = {}
    states: list[tuple[int, ...]] = []
    comp_index, comp_bits, comp_mult = [], [], []
    for bits in target.basis_states():
        key = (bits[0], sum(bits[1:]))
        if key in seen:
            comp_mult[seen[key]] += 1
            continue
        seen[key] = len(comp_index)
        active = [i for i, b in enumerate(bits) if b == 1]
        sector = _sector_states(n_atoms, active)
        comp_index.append(len(states))  # all-ones state is first in its sector
        comp_bits.append(bits)
        comp_mult.append(1)
        states.extend(sector)

    dim = len(states)
    index = {s: i for i, s in enumerate(states)}
    cm = np.zeros((dim, dim), dtype=complex)
    cd = np.zeros((dim, dim), dtype=complex)
    nm = np.zeros(dim)
    nd = np.zeros(dim)
    for i, s in enumerate(states):
        nm[i] = 1.0 if s[0] == R else 0.0
        nd[i] = sum(1.0 for a in range(1, n_atoms) if s[a] == R)
        for a in range(n_atoms):
            if s[a] != 1:
                continue
            t = list(s)
            t[a] = R
            j = index.get(tuple(t))
            if j is None:  # blockaded
                continue
            if a == 0:
                cm[j, i] += 0.5
            else:
                cd[j, i] += 0.5
    return SectorSpace(target, states, comp_index, comp_bits, comp_mult, cm, cd, nm, nd)


def _sector_states(n_atoms: int, active: list[int]) -> list[tuple[int, ...]]:
    """States of one sector, all-ones first, blockaded states removed."""
    out = []
    for combo in itertools.product((1, R), repeat=len(active)):
        s = [0] * n_atoms
        for a, v in zip(active, combo):
            s[a] = v
        if s[0] == R and any(s[a] == R for a in range(1, n_atoms)):
            continue
        out.append(tuple(s))
    return out


def segment_hamiltonians(space: SectorSpace, waveform: ControlWaveform) -> np.ndarray:
    """Stacked (segments, dim, dim) Hamiltonians for one waveform."""
    am, pm = waveform.amplitude_m, waveform.phase_m
    ad, pd = waveform.amplitude_d, waveform.phase_d
    cm, cd = space.coupling_m, space.coupling_d
    if waveform.parametrization == PHASE:
        um = am[:, None, None] * np.exp(1j * pm)[:, None, None] * cm
        ud = ad[:, None, None] * np.exp(1j * pd)[:, None, None] * cd
        h = um + ud
        h = h + np.conj(np.swapaxes(h, 1, 2))
    elif waveform.parametrization == DETUNING:
        h = am[:, None, None] * cm + ad[:, None, None] * cd
        h = h + np.conj(np.swapaxes(h, 1, 2))
        h = h + pm[:, None, None] * np.diag(space.n_r_m) + pd[:, None, None] * np.diag(space.n_r_d)
    else:
        raise ValueError(waveform.parametrization)
    return h


def segment_propagators(h: np.ndarray, dt: float):
    """Eigendecompose stacked Hamiltonians and exponentiate.

    Returns (w, v, u) with u_k = v_k exp(-i w_k dt) v_k^dag.
    """
    w, v = np.linalg.eigh(h)
    phase = np.exp(-1j * dt * w)
    u = np.einsum("kij,kj,klj->kil", v, phase, v.conj())
    return w, v, u


def total_propagator(u: np.ndarray) -> np.ndarray:
    out = np.eye(u.shape[1], dtype=complex)
    for k in range(u.shape[0]):
        out = u[k] @ out
    return out


def computational_overlaps(space: SectorSpace, u_total: np.ndarray) -> np.ndarray:
    """Diagonal overlaps u_b = <b|U|b> for the distinct computational states."""
    idx = np.asarray(space.comp_index)
    return u_total[idx, idx]
