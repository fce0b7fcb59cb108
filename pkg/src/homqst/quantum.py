"""Small dense linear algebra for qudit states and probe frames.

Everything here is an immutable value: arrays are copied on construction
and marked read-only.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_TOL = 1e-10
DUST = 1e-14

_S = 2 ** -0.5
_QUBIT_AMPLITUDES = {
    "H": (1.0, 0.0),
    "V": (0.0, 1.0),
    "D": (_S, _S),
    "A": (_S, -_S),
    "R": (_S, 1j * _S),
    "L": (_S, -1j * _S),
}
QUBIT_LABELS = tuple(_QUBIT_AMPLITUDES)

FRAME_KINDS = ("qubit6", "qubit4", "mub-full", "custom")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _fix_phase(amps: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(amps) > DUST)
    if nz.size == 0:
        return amps
    first = amps[nz[0]]
    return amps * (abs(first) / first)


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state with its global phase fixed.

    The first non-negligible amplitude is made real and positive, so equal
    states serialize identically.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size == 0:
            raise ValueError("state vector must have at least one amplitude")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > HERMITIAN_TOL:
            raise ValueError(f"state vector not normalized (|psi|^2 = {norm2!r})")
        object.__setattr__(self, "amplitudes", _frozen(_fix_phase(amps)))

    @classmethod
    def from_amplitudes(cls, amps: Iterable[complex]) -> "StateVector":
        a = np.asarray(list(amps) if not isinstance(amps, np.ndarray) else amps, dtype=complex).ravel()
        norm = np.linalg.norm(a)
        if norm == 0:
            raise ValueError("zero vector cannot be normalized")
        return cls(a / norm)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def tensor(self, other: "StateVector") -> "StateVector":
        return StateVector(np.kron(self.amplitudes, other.amplitudes))

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.amplitudes.real.tolist(),
            "im": self.amplitudes.imag.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "StateVector":
        amps = np.asarray(data["re"], float) + 1j * np.asarray(data["im"], float)
        if amps.size != int(data["dim"]):
            raise ValueError("dim does not match amplitude count")
        return cls.from_amplitudes(amps)


@dataclass(frozen=True)
class DensityMatrix:
    """Physical density operator: Hermitian, unit trace, positive semidefinite."""

    elements: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.elements, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(m).min() < -EIGEN_TOL:
            raise ValueError("density matrix has negative eigenvalues")
        object.__setattr__(self, "elements", _frozen(m))

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @classmethod
    def from_ket(cls, ket: StateVector) -> "DensityMatrix":
        return cls(ket.projector())

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def from_array(cls, m: np.ndarray) -> "DensityMatrix":
        """Hermitize and renormalize a numerically noisy estimate."""
        m = np.asarray(m, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        return cls(m / np.trace(m).real)

    def mix(self, other: "DensityMatrix", weight: float) -> "DensityMatrix":
        """Return ``(1 - weight) * self + weight * other``."""
        if not 0.0 <= weight <= 1.0:
            raise ValueError("mixing weight must lie in [0, 1]")
        return DensityMatrix.from_array((1 - weight) * self.elements + weight * other.elements)

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.elements.real.ravel().tolist(),
            "im": self.elements.imag.ravel().tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DensityMatrix":
        dim = int(data["dim"])
        re = np.asarray(data["re"], float).reshape(dim, dim)
        im = np.asarray(data["im"], float).reshape(dim, dim)
        return cls.from_array(re + 1j * im)


def make_qubit_ket(label: str) -> StateVector:
    """Polarization eigenstate for one of H, V, D, A, R, L."""
    try:
        return StateVector(np.array(_QUBIT_AMPLITUDES[label], dtype=complex))
    except KeyError:
        raise ValueError(f"unknown qubit label {label!r}; expected one of {QUBIT_LABELS}") from None


def _check_dims(rho: DensityMatrix, ket: StateVector) -> None:
    if rho.dim != ket.dim:
        raise ValueError(f"dimension mismatch: rho is {rho.dim}, ket is {ket.dim}")


def projection_probability(rho: DensityMatrix, ket: StateVector) -> float:
    _check_dims(rho, ket)
    k = ket.amplitudes
    p = float(np.vdot(k, rho.elements @ k).real)
    if abs(p) < DUST:
        return 0.0
    if 1.0 < p < 1.0 + DUST:
        return 1.0
    return p


def fidelity_to_ket(rho: DensityMatrix, ket: StateVector) -> float:
    """Fidelity of ``rho`` to the pure state ``ket``, i.e. <k|rho|k>."""
    return projection_probability(rho, ket)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def state_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))**2."""
    if rho.dim != sigma.dim:
        raise ValueError("dimension mismatch")
    s = _psd_sqrt(rho.elements)
    inner = s @ sigma.elements @ s
    w = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(min(1.0, np.sum(np.sqrt(np.clip(w, 0, None))) ** 2))


def joint_probability(rho: DensityMatrix, kets: Sequence[StateVector | None], d: int) -> float:
    """Probability <k_1..k_n| rho_S |k_1..k_n> on the parties that carry a ket.

    Parties given as ``None`` are traced out; with all parties ``None`` the
    result is 1.
    """
    ops = [np.eye(d) if k is None else k.projector() for k in kets]
    if rho.dim != d ** len(ops):
        raise ValueError("dimension mismatch between rho and party count")
    op = reduce(np.kron, ops)
    p = float(np.trace(op @ rho.elements).real)
    if abs(p) < DUST:
        return 0.0
    if 1.0 < p < 1.0 + DUST:
        return 1.0
    return p


def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) basis of Hermitian dim x dim matrices."""
    basis = []
    for i in range(dim):
        m = np.zeros((dim, dim), complex)
        m[i, i] = 1.0
        basis.append(m)
    for i, j in itertools.combinations(range(dim), 2):
        m = np.zeros((dim, dim), complex)
        m[i, j] = m[j, i] = _S
        basis.append(m)
        m = np.zeros((dim, dim), complex)
        m[i, j], m[j, i] = -1j * _S, 1j * _S
        basis.append(m)
    return np.array(basis)


def frame_design_matrix(kets: np.ndarray) -> np.ndarray:
    """Real matrix mapping Hermitian-basis coordinates to <k|X|k> values."""
    kets = np.asarray(kets, complex)
    basis = hermitian_basis(kets.shape[1])
    return np.einsum("ki,bij,kj->kb", kets.conj(), basis, kets).real


def frame_rank(kets: np.ndarray) -> int:
    """Rank of the frame's projector Gram matrix (= span in Hermitian space)."""
    a = frame_design_matrix(kets)
    return int(np.linalg.matrix_rank(a.T @ a, tol=1e-10))


def _weyl_heisenberg_mubs(d: int) -> tuple[list[str], list[np.ndarray]]:
    labels = [f"z{m}" for m in range(d)]
    kets = [np.eye(d, dtype=complex)[m] for m in range(d)]
    omega = np.exp(2j * np.pi / d)
    m = np.arange(d)
    for b in range(d):
        for j in range(d):
            labels.append(f"b{b}j{j}")
            kets.append(omega ** ((b * m * m + j * m) % d) / np.sqrt(d))
    return labels, kets


def _is_prime(d: int) -> bool:
    return d >= 2 and all(d % f for f in range(2, int(d ** 0.5) + 1))


@dataclass(frozen=True)
class ProbeFrame:
    """Product frame of probe settings, one local setting list shared by all parties."""

    d: int
    n: int
    kind: str
    local_labels: tuple[str, ...]
    local_kets: tuple[StateVector, ...]
    rank: int = field(init=False)

    def __post_init__(self):
        if self.d < 2 or self.n < 1:
            raise ValueError("need d >= 2 and n >= 1")
        if len(self.local_labels) != len(self.local_kets):
            raise ValueError("one label per local ket required")
        if len(set(self.local_labels)) != len(self.local_labels):
            raise ValueError("local labels must be unique")
        if any(k.dim != self.d for k in self.local_kets):
            raise ValueError(f"all local kets must have dimension {self.d}")
        if any("," in lab or lab == "-" for lab in self.local_labels):
            raise ValueError("local labels may not contain ',' or be '-'")
        object.__setattr__(self, "local_labels", tuple(self.local_labels))
        object.__setattr__(self, "local_kets", tuple(self.local_kets))
        object.__setattr__(self, "rank", frame_rank(self.kets))

    @property
    def dim(self) -> int:
        return self.d ** self.n

    @property
    def label_tuples(self) -> list[tuple[str, ...]]:
        return list(itertools.product(self.local_labels, repeat=self.n))

    @property
    def labels(self) -> list[str]:
        return [",".join(t) for t in self.label_tuples]

    @property
    def kets(self) -> np.ndarray:
        local = [k.amplitudes for k in self.local_kets]
        return np.array([reduce(np.kron, combo) for combo in itertools.product(local, repeat=self.n)])

    @property
    def settings(self) -> list[tuple[str, StateVector]]:
        return [(lab, StateVector(k)) for lab, k in zip(self.labels, self.kets)]

    def local_ket(self, label: str) -> StateVector:
        try:
            return self.local_kets[self.local_labels.index(label)]
        except ValueError:
            raise KeyError(f"label {label!r} not in frame") from None

    @property
    def is_complete(self) -> bool:
        return self.rank == self.dim ** 2

    def computational_labels(self) -> list[str]:
        """Frame labels whose local kets are computational basis states."""
        comp = []
        for lab, ket in zip(self.local_labels, self.local_kets):
            a = np.abs(ket.amplitudes)
            if np.isclose(a.max(), 1.0, atol=1e-12):
                comp.append((int(np.argmax(a)), lab))
        comp.sort()
        if len(comp) != self.d:
            return []
        local = [lab for _, lab in comp]
        return [",".join(t) for t in itertools.product(local, repeat=self.n)]

    def to_json_dict(self) -> dict:
        return {
            "d": self.d,
            "n": self.n,
            "kind": self.kind,
            "local": [
                {"label": lab, **ket.to_json_dict()} for lab, ket in zip(self.local_labels, self.local_kets)
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ProbeFrame":
        local = data["local"]
        return cls(
            d=int(data["d"]),
            n=int(data["n"]),
            kind=str(data["kind"]),
            local_labels=tuple(e["label"] for e in local),
            local_kets=tuple(StateVector.from_json_dict(e) for e in local),
        )


def build_probe_frame(
    d: int,
    n: int,
    kind: str = "qubit6",
    custom: Sequence[tuple[str, Sequence[complex]]] | None = None,
    require_complete: bool = True,
) -> ProbeFrame:
    """Build a product probe frame.

    ``qubit6`` uses H, V, D, A, R, L; ``qubit4`` the minimal H, V, D, R set;
    ``mub-full`` the computational basis plus the Weyl-Heisenberg mutually
    unbiased bases (prime ``d`` only); ``custom`` takes ``(label, amplitudes)``
    pairs.  With ``require_complete`` a frame that cannot determine a
    ``d**n``-dimensional state raises ``ValueError``.
    """
    if kind not in FRAME_KINDS:
        raise ValueError(f"unknown frame kind {kind!r}")
    if kind in ("qubit6", "qubit4"):
        if d != 2:
            raise ValueError(f"{kind} frame needs d = 2")
        labels = list(QUBIT_LABELS) if kind == "qubit6" else ["H", "V", "D", "R"]
        kets = [make_qubit_ket(lab) for lab in labels]
    elif kind == "mub-full":
        if d == 2:
            labels = list(QUBIT_LABELS)
            kets = [make_qubit_ket(lab) for lab in labels]
        elif _is_prime(d):
            labels, raw = _weyl_heisenberg_mubs(d)
            kets = [StateVector(k) for k in raw]
        else:
            raise ValueError(f"mub-full frames need prime d, got {d}; use a custom frame")
    else:
        if not custom:
            raise ValueError("custom frame needs (label, amplitudes) pairs")
        labels = [lab for lab, _ in custom]
        kets = [StateVector.from_amplitudes(a) for _, a in custom]
    frame = ProbeFrame(d=d, n=n, kind=kind, local_labels=tuple(labels), local_kets=tuple(kets))
    if require_complete and not frame.is_complete:
        raise ValueError(f"frame rank {frame.rank} < {frame.dim ** 2}: not informationally complete")
    return frame


_BELL = {
    "PHI+": (1, 0, 0, 1),
    "PHI-": (1, 0, 0, -1),
    "PSI+": (0, 1, 1, 0),
    "PSI-": (0, 1, -1, 0),
}


def named_state(name: str, d: int = 2, n: int = 1) -> StateVector:
    """Look up a named pure state.

    Accepts qubit labels per party (``"D"``, ``"HV"``, ``"D,A"``), the Bell
    states ``PHI+``, ``PHI-``, ``PSI+``, ``PSI-``, ``GHZ``, and computational
    qudit indices per party (``"0"``, ``"1,2"``).
    """
    key = name.strip()
    if key.upper() in _BELL:
        if (d, n) != (2, 2):
            raise ValueError("Bell states need d = 2, n = 2")
        return StateVector.from_amplitudes(_BELL[key.upper()])
    if key.upper() == "GHZ":
        amps = np.zeros(d ** n, complex)
        amps[0] = amps[-1] = 1.0
        return StateVector.from_amplitudes(amps)
    parts = key.split(",") if "," in key else list(key) if d == 2 and len(key) == n else [key]
    if len(parts) != n:
        raise ValueError(f"state {name!r} does not name {n} parties")
    kets = []
    for p in parts:
        if d == 2 and p in _QUBIT_AMPLITUDES:
            kets.append(make_qubit_ket(p))
        elif p.isdigit() and int(p) < d:
            kets.append(StateVector(np.eye(d, dtype=complex)[int(p)]))
        else:
            raise ValueError(f"unknown state component {p!r}")
    return reduce(StateVector.tensor, kets)
