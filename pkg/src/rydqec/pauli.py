"""Pauli strings and Pauli channel probability tables.

Strings are canonically written with qubit 0 first and letters ordered
I < X < Y < Z.  Internally a string is encoded as a pair of bitmasks
(x, z) with bit i referring to qubit i: X=(1,0), Y=(1,1), Z=(0,1).
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field

import numpy as np

LETTERS = "IXYZ"
_LETTER_TO_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}

NORMALIZATION_TOL = 1e-6
NEGATIVITY_TOL = 1e-9
LAMBDA_FLOOR = 1e-14


@dataclass(frozen=True)
class PauliString:
    """Phase-free n-qubit Pauli string."""

    letters: str

    def __post_init__(self):
        if any(c not in LETTERS for c in self.letters):
            raise ValueError(f"invalid Pauli letters: {self.letters!r}")

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def weight(self) -> int:
        return sum(c != "I" for c in self.letters)

    def masks(self) -> tuple[int, int]:
        x = z = 0
        for i, c in enumerate(self.letters):
            xb, zb = _LETTER_TO_XZ[c]
            x |= xb << i
            z |= zb << i
        return x, z

    @classmethod
    def from_masks(cls, x: int, z: int, n: int) -> "PauliString":
        out = []
        for i in range(n):
            xb, zb = (x >> i) & 1, (z >> i) & 1
            out.append("IXZY"[xb + 2 * zb])
        return cls("".join(out))

    def commutes_with(self, other: "PauliString") -> bool:
        x1, z1 = self.masks()
        x2, z2 = other.masks()
        return (bin(x1 & z2).count("1") + bin(z1 & x2).count("1")) % 2 == 0

    def matrix(self) -> np.ndarray:
        """Dense 2^n matrix (for small-n oracles only)."""
        one = {"I": np.eye(2), "X": np.array([[0, 1], [1, 0]]),
               "Y": np.array([[0, -1j], [1j, 0]]), "Z": np.array([[1, 0], [0, -1]])}
        m = np.array([[1.0]])
        for c in self.letters:
            m = np.kron(m, one[c])
        return m

    def __str__(self):
        return self.letters


def all_pauli_strings(n: int):
    """All 4^n strings in canonical order (qubit 0 = most significant digit)."""
    for idx in range(4 ** n):
        digits = []
        v = idx
        for _ in range(n):
            digits.append(LETTERS[v % 4])
            v //= 4
        yield PauliString("".join(reversed(digits)))


def symplectic_transform(t_xz: np.ndarray) -> np.ndarray:
    """Apply lambda(xQ, zQ) = sum_{xR,zR} (-1)^{xR.zQ + zR.xQ} t(xR, zR).

    `t_xz` is a (2^n, 2^n) array indexed by the (x, z) bitmasks of R; the
    result is indexed by the masks of Q.  This is the sign sum s(R, Q) from
    the chi-matrix diagonal reconstruction, evaluated as two fast Walsh
    transforms.
    """
    m = t_xz.shape[0]
    n = m.bit_length() - 1
    w = _walsh_matrix(n)
    # (W t)[zQ, zR] sums over xR with sign (-1)^{xR.zQ}; the second product
    # sums over zR with sign (-1)^{zR.xQ}.
    out = w @ t_xz @ w
    return out.T  # index order back to (xQ, zQ)


def _walsh_matrix(n: int) -> np.ndarray:
    w = np.array([[1.0]])
    h = np.array([[1.0, 1.0], [1.0, -1.0]])
    for _ in range(n):
        w = np.kron(w, h)
    return w


@dataclass
class PauliChannelTable:
    """Probabilities lambda_Q of a Pauli-twirled channel."""

    n: int
    entries: dict[str, float]
    variant: str = ""
    gamma: float = 0.0
    pulse_hash: str = ""
    metadata: dict = field(default_factory=dict)

    def total(self) -> float:
        return float(sum(self.entries.values()))

    def lam(self, pauli: str) -> float:
        return self.entries.get(pauli, 0.0)

    @property
    def identity(self) -> str:
        return "I" * self.n

    def heaviest(self, k: int = 10):
        return sorted(self.entries.items(), key=lambda kv: -kv[1])[:k]

    def arrays(self):
        """(probs, xmasks, zmasks) arrays for samplers, identity included."""
        probs, xs, zs = [], [], []
        for s, lam in sorted(self.entries.items()):
            x, z = PauliString(s).masks()
            probs.append(lam)
            xs.append(x)
            zs.append(z)
        probs = np.asarray(probs, dtype=float)
        # numerical drift from the floor goes to the identity entry
        drift = 1.0 - probs.sum()
        idx = sorted(self.entries).index(self.identity) if self.identity in self.entries else None
        if idx is not None:
            probs[idx] += drift
        return probs, np.asarray(xs, dtype=np.int64), np.asarray(zs, dtype=np.int64)

    def to_json(self) -> str:
        doc = {
            "version": 1,
            "n": self.n,
            "variant": self.variant,
            "gamma": self.gamma,
            "pulse_hash": self.pulse_hash,
            "entries": sorted(self.entries.items()),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "PauliChannelTable":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError("unsupported channel table version")
        return cls(n=doc["n"], entries={k: v for k, v in doc["entries"]},
                   variant=doc["variant"], gamma=doc["gamma"], pulse_hash=doc["pulse_hash"])

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PauliChannelTable":
        with open(path) as f:
            return cls.from_json(f.read())


def table_from_lambda_array(lam: np.ndarray, n: int, floor: float = LAMBDA_FLOOR, **meta) -> PauliChannelTable:
    """Build a table from lambda indexed by (x, z) masks, dropping noise-floor entries."""
    entries = {}
    for x in range(2 ** n):
        for z in range(2 ** n):
            v = float(lam[x, z])
            if abs(v) >= floor:
                entries[str(PauliString.from_masks(x, z, n))] = v
    return PauliChannelTable(n=n, entries=entries, **meta)


def hash_arrays(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]
