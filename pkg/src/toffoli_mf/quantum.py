"""Operator algebra for the three-qubit XY chain.

Basis convention: computational basis |q1 q2 q3> with qubit 1 most
significant, so basis index i = 4*q1 + 2*q2 + q3.  The Toffoli gate used
throughout has qubits 1 and 2 as controls and qubit 3 as target, i.e. it
swaps basis states 6 (|110>) and 7 (|111>).  hbar = 1.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

DIM = 8

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


def _embed(qubit, op):
    mats = [_I2, _I2, _I2]
    mats[qubit] = op
    return np.kron(np.kron(mats[0], mats[1]), mats[2])


# Single-qubit Pauli operators embedded in the 8-dimensional space.
SIGMA_X = tuple(_embed(m, _SX) for m in range(3))
SIGMA_Y = tuple(_embed(m, _SY) for m in range(3))

# Canonical control-operator order: (x1, y1, x2, y2, x3, y3).
CONTROL_OPERATORS = np.stack(
    [SIGMA_X[0], SIGMA_Y[0], SIGMA_X[1], SIGMA_Y[1], SIGMA_X[2], SIGMA_Y[2]]
)

# Rows map packed control amplitudes onto the canonical operators above.
# "x-only" drives one x field per qubit; "symmetric13" ties qubit 3 to
# qubit 1 (packed order: x1, y1, x2, y2).
LAYOUT_MATRICES = {
    "full": np.eye(6),
    "x-only": np.array(
        [
            [1, 0, 0, 0, 0, 0],
            [0, 0, 1, 0, 0, 0],
            [0, 0, 0, 0, 1, 0],
        ],
        dtype=float,
    ),
    "symmetric13": np.array(
        [
            [1, 0, 0, 0, 1, 0],
            [0, 1, 0, 0, 0, 1],
            [0, 0, 1, 0, 0, 0],
            [0, 0, 0, 1, 0, 0],
        ],
        dtype=float,
    ),
}

N_CONTROLS = {name: mat.shape[0] for name, mat in LAYOUT_MATRICES.items()}

PULSE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CouplingConfig:
    """Interqubit coupling pattern J_ml = j * ratio_ml.

    The default ratios encode J12 = J23 = 6*J13, with ``jbar`` setting the
    energy scale of the simulation units.
    """

    jbar: float = 1.0
    ratios: tuple = (1.0, 1.0, 1.0 / 6.0)  # (r12, r23, r13)

    # Qubit pairs matching the ratio order.
    pairs = ((0, 1), (1, 2), (0, 2))


@dataclass(frozen=True)
class PulseSet:
    """Piecewise-constant control amplitudes for one gate realization.

    Parameters
    ----------
    nt : int
        Number of equal time segments.
    tg : float
        Total gate time, in units of 1/jbar.
    layout : str
        Control topology: "full" (x and y on every qubit), "x-only"
        (one x field per qubit) or "symmetric13" (x and y fields with
        qubit 3 tied to qubit 1).
    amplitudes : ndarray, shape (nt, n_controls)
        Control field values per segment, in units of jbar.
    meta : dict
        Free-form provenance (objective kind, seed, achieved fidelity...).
    """

    nt: int = 20
    tg: float = 4.18
    layout: str = "full"
    amplitudes: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.layout not in LAYOUT_MATRICES:
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.nt < 1:
            raise ValueError("nt must be >= 1")
        if not self.tg > 0:
            raise ValueError("tg must be positive")
        amps = self.amplitudes
        if amps is None:
            amps = np.zeros((self.nt, N_CONTROLS[self.layout]))
        amps = np.asarray(amps, dtype=float)
        if amps.shape != (self.nt, N_CONTROLS[self.layout]):
            raise ValueError(
                f"amplitudes shape {amps.shape} does not match "
                f"(nt={self.nt}, n_controls={N_CONTROLS[self.layout]})"
            )
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_controls(self):
        return N_CONTROLS[self.layout]

    def canonical_amplitudes(self):
        """Amplitudes expanded onto the canonical 6-operator order."""
        return self.amplitudes @ LAYOUT_MATRICES[self.layout]

    def to_json_dict(self):
        return {
            "schema": PULSE_SCHEMA_VERSION,
            "nt": self.nt,
            "tg": self.tg,
            "layout": self.layout,
            "amplitudes": self.amplitudes.ravel().tolist(),  # row-major
            "meta": dict(self.meta),
        }

    @classmethod
    def from_json_dict(cls, doc):
        if doc.get("schema") != PULSE_SCHEMA_VERSION:
            raise ValueError(f"unsupported pulse schema {doc.get('schema')!r}")
        nt = int(doc["nt"])
        layout = doc["layout"]
        amps = np.asarray(doc["amplitudes"], dtype=float).reshape(
            nt, N_CONTROLS[layout]
        )
        return cls(
            nt=nt,
            tg=float(doc["tg"]),
            layout=layout,
            amplitudes=amps,
            meta=dict(doc.get("meta", {})),
        )

    def save(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def drift_hamiltonian(cfg: CouplingConfig, j: float) -> np.ndarray:
    """XY-chain Hamiltonian sum_{m<l} J_ml (x_m x_l + y_m y_l) with J_ml = j*ratio_ml."""
    h = np.zeros((DIM, DIM), dtype=complex)
    for (m, l), ratio in zip(CouplingConfig.pairs, cfg.ratios):
        h += (j * ratio) * (
            SIGMA_X[m] @ SIGMA_X[l] + SIGMA_Y[m] @ SIGMA_Y[l]
        )
    return h


def control_hamiltonian(p: PulseSet, segment: int) -> np.ndarray:
    """Zeeman-like control Hamiltonian for one time segment."""
    if not 0 <= segment < p.nt:
        raise IndexError(f"segment {segment} out of range for nt={p.nt}")
    coeffs = p.canonical_amplitudes()[segment]
    return np.einsum("c,cij->ij", coeffs, CONTROL_OPERATORS)


def segment_hamiltonians(p: PulseSet, cfg: CouplingConfig, j_values) -> np.ndarray:
    """Total Hamiltonians for every (coupling value, segment) pair.

    Returns an array of shape (len(j_values), nt, 8, 8).  The drift is
    linear in the scalar coupling, which keeps this a cheap broadcast.
    """
    j_values = np.atleast_1d(np.asarray(j_values, dtype=float))
    h0_unit = drift_hamiltonian(cfg, 1.0)
    coeffs = p.canonical_amplitudes()
    hc = np.einsum("kc,cij->kij", coeffs, CONTROL_OPERATORS)
    return j_values[:, None, None, None] * h0_unit + hc[None]


def segment_propagators(hamiltonians: np.ndarray, dt: float):
    """Eigendecompose stacked Hermitian Hamiltonians and exponentiate.

    Returns (U, w, V) where U = V diag(exp(-i w dt)) V^dagger segmentwise.
    """
    w, v = np.linalg.eigh(hamiltonians)
    phases = np.exp(-1j * dt * w)
    u = (v * phases[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    return u, w, v


def propagate(p: PulseSet, cfg: CouplingConfig = CouplingConfig(), j: float = None) -> np.ndarray:
    """Total evolution operator over the gate time at scalar coupling j.

    The propagator is the product of the per-segment exponentials in
    reverse order: U = U_nt ... U_1.
    """
    if j is None:
        j = cfg.jbar
    return propagate_batch(p, cfg, [j])[0]


def propagate_batch(p: PulseSet, cfg: CouplingConfig, j_values) -> np.ndarray:
    """Propagators for many scalar couplings at once, shape (len(j_values), 8, 8)."""
    hs = segment_hamiltonians(p, cfg, j_values)
    dt = p.tg / p.nt
    us, _, _ = segment_propagators(hs, dt)
    total = np.broadcast_to(np.eye(DIM, dtype=complex), us.shape[:1] + (DIM, DIM)).copy()
    for k in range(p.nt):
        total = us[:, k] @ total
    return total


def gate_fidelity(u: np.ndarray, target: np.ndarray) -> float:
    """Phase-invariant gate overlap |Tr(U^dagger target)| / 8."""
    return abs(np.vdot(u, target)) / DIM


def toffoli_target() -> np.ndarray:
    """The Toffoli permutation: identity with the last two rows interchanged."""
    t = np.eye(DIM, dtype=complex)
    t[[6, 7]] = t[[7, 6]]
    return t
