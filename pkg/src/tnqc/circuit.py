"""Gate-level circuits and a dense statevector simulator.

Conventions
-----------
* Wire 0 is the most significant bit of a basis index, so for two qubits
  ``|10>`` is amplitude index 2.
* Multi-qubit matrices use the same ordering over the gate's wire list:
  ``wires[0]`` is the most significant bit of the matrix index.
* ``Rot(omega, theta, phi) = RX(phi) @ RY(theta) @ RZ(omega)``, i.e. the Z
  rotation is applied first.

Statevectors are plain ``numpy`` arrays of shape ``(2**n,)`` or, for batched
simulation, ``(batch, 2**n)``. Every operation here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROT = "rot"
CNOT = "cnot"
UNITARY = "unitary"
PREP = "prep"
BASIS = "basis"

PREP_STATES = ("Z0", "Z1", "Xplus", "Yplus")
MEAS_BASES = ("X", "Y", "Z")

MAX_UNITARY_QUBITS = 6
UNITARY_ATOL = 1e-12

_SQ2 = 1.0 / np.sqrt(2.0)
_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) * _SQ2
_S = np.diag([1, 1j])
_SDG = np.diag([1, -1j])
_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

# Unitaries taking |0> to each preparation state.
_PREP_MATRICES = {
    "Z0": _I2,
    "Z1": _X,
    "Xplus": _H,
    "Yplus": _S @ _H,
}
# Unitaries rotating each basis' +1 eigenstate onto |0>.
_BASIS_MATRICES = {
    "X": _H,
    "Y": _H @ _SDG,
    "Z": _I2,
}


class CircuitError(ValueError):
    """Raised for malformed gates, circuits or simulator inputs."""


def rx(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def rot_unitary(omega: float, theta: float, phi: float) -> np.ndarray:
    """Arbitrary single-qubit rotation ``RX(phi) RY(theta) RZ(omega)``."""
    return rx(phi) @ ry(theta) @ rz(omega)


def is_unitary(matrix: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    eye = np.eye(matrix.shape[0])
    return bool(np.max(np.abs(matrix.conj().T @ matrix - eye)) <= atol)


@dataclass(frozen=True, eq=False)
class Gate:
    """A single circuit operation.

    ``kind`` is one of ``"rot"``, ``"cnot"``, ``"unitary"``, ``"prep"`` or
    ``"basis"``. Rotation angles live in ``angles``; ``which`` names the
    preparation state or measurement basis for prep/basis gates.
    """

    kind: str
    wires: tuple[int, ...]
    angles: tuple[float, float, float] | None = None
    matrix_data: np.ndarray | None = None
    which: str | None = None

    def __post_init__(self) -> None:
        wires = tuple(int(w) for w in self.wires)
        object.__setattr__(self, "wires", wires)
        if len(set(wires)) != len(wires):
            raise CircuitError(f"repeated wires in {self.kind} gate: {wires}")
        if any(w < 0 for w in wires):
            raise CircuitError(f"negative wire index in {wires}")
        arity = {ROT: 1, CNOT: 2, PREP: 1, BASIS: 1}
        if self.kind in arity and len(wires) != arity[self.kind]:
            raise CircuitError(f"{self.kind} gate needs {arity[self.kind]} wires")
        if self.kind == ROT:
            if self.angles is None or len(self.angles) != 3:
                raise CircuitError("rot gate needs three angles")
            object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        elif self.kind == UNITARY:
            k = len(wires)
            if not 1 <= k <= MAX_UNITARY_QUBITS:
                raise CircuitError(
                    f"fixed unitaries act on 1..{MAX_UNITARY_QUBITS} qubits, got {k}"
                )
            m = np.asarray(self.matrix_data, dtype=complex)
            if m.shape != (2**k, 2**k):
                raise CircuitError(f"matrix shape {m.shape} does not match {k} wires")
            if not is_unitary(m):
                raise CircuitError("fixed unitary matrix is not unitary")
            object.__setattr__(self, "matrix_data", m)
        elif self.kind == PREP:
            if self.which not in PREP_STATES:
                raise CircuitError(f"unknown preparation state {self.which!r}")
        elif self.kind == BASIS:
            if self.which not in MEAS_BASES:
                raise CircuitError(f"unknown measurement basis {self.which!r}")
        elif self.kind != CNOT:
            raise CircuitError(f"unknown gate kind {self.kind!r}")

    @property
    def matrix(self) -> np.ndarray:
        if self.kind == ROT:
            return rot_unitary(*self.angles)
        if self.kind == CNOT:
            return _CNOT
        if self.kind == UNITARY:
            return self.matrix_data
        if self.kind == PREP:
            return _PREP_MATRICES[self.which]
        return _BASIS_MATRICES[self.which]

    def with_angles(self, angles: Sequence[float]) -> "Gate":
        return Gate(ROT, self.wires, angles=tuple(angles))

    def remap(self, mapping: dict[int, int]) -> "Gate":
        return Gate(
            self.kind,
            tuple(mapping[w] for w in self.wires),
            angles=self.angles,
            matrix_data=self.matrix_data,
            which=self.which,
        )

    def __repr__(self) -> str:
        extra = ""
        if self.angles is not None:
            extra = ", " + ", ".join(f"{a:.4g}" for a in self.angles)
        elif self.which is not None:
            extra = f", {self.which}"
        return f"{self.kind}({list(self.wires)}{extra})"


def Rot(wire: int, omega: float = 0.0, theta: float = 0.0, phi: float = 0.0) -> Gate:
    return Gate(ROT, (wire,), angles=(omega, theta, phi))


def Cnot(control: int, target: int) -> Gate:
    return Gate(CNOT, (control, target))


def FixedUnitary(matrix: np.ndarray, wires: Sequence[int]) -> Gate:
    return Gate(UNITARY, tuple(wires), matrix_data=np.asarray(matrix, dtype=complex))


def PrepState(which: str, wire: int) -> Gate:
    return Gate(PREP, (wire,), which=which)


def BasisChange(basis: str, wire: int) -> Gate:
    return Gate(BASIS, (wire,), which=basis)


@dataclass
class Circuit:
    """An ordered gate list over ``n_qubits`` wires.

    ``cut_markers`` holds ``(wire, position)`` pairs: the wire is cut right
    after gate index ``position``. Markers are annotations only; the
    simulator treats a cut wire as an ordinary wire.
    """

    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    cut_markers: list[tuple[int, int]] = field(default_factory=list)
    measured_wire: int | None = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.n_qubits < 1:
            raise CircuitError("a circuit needs at least one qubit")
        for g in self.gates:
            if max(g.wires) >= self.n_qubits:
                raise CircuitError(f"{g!r} exceeds circuit width {self.n_qubits}")
        for wire, pos in self.cut_markers:
            if not 0 <= wire < self.n_qubits:
                raise CircuitError(f"cut marker on invalid wire {wire}")
            if not -1 <= pos < len(self.gates):
                raise CircuitError(f"cut marker at invalid position {pos}")
        if self.measured_wire is not None and not 0 <= self.measured_wire < self.n_qubits:
            raise CircuitError(f"measured wire {self.measured_wire} out of range")

    @property
    def n_params(self) -> int:
        return 3 * sum(1 for g in self.gates if g.kind == ROT)

    def parameters(self) -> np.ndarray:
        return np.array(
            [a for g in self.gates if g.kind == ROT for a in g.angles], dtype=float
        )

    def bind(self, params: Iterable[float]) -> "Circuit":
        """Return a copy with the rotation angles replaced, in gate order."""
        params = np.asarray(params, dtype=float).ravel()
        if params.size != self.n_params:
            raise CircuitError(
                f"expected {self.n_params} parameters, got {params.size}"
            )
        gates, i = [], 0
        for g in self.gates:
            if g.kind == ROT:
                gates.append(g.with_angles(params[i : i + 3]))
                i += 3
            else:
                gates.append(g)
        return Circuit(self.n_qubits, gates, list(self.cut_markers), self.measured_wire)


# ---------------------------------------------------------------------------
# simulation


def zero_state(n_qubits: int) -> np.ndarray:
    state = np.zeros(2**n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def _n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if dim != 2**n:
        raise CircuitError(f"state dimension {dim} is not a power of two")
    return n


def apply_matrix(state: np.ndarray, matrix: np.ndarray, wires: Sequence[int]) -> np.ndarray:
    """Apply a ``2^k x 2^k`` matrix to ``wires`` of a (batched) state."""
    n = _n_qubits_of(state)
    k = len(wires)
    if any(not 0 <= w < n for w in wires):
        raise CircuitError(f"wires {list(wires)} out of range for {n} qubits")
    batch_shape = state.shape[:-1]
    lead = len(batch_shape)
    psi = state.reshape(batch_shape + (2,) * n)
    op = np.asarray(matrix).reshape((2,) * (2 * k))
    axes = [lead + w for w in wires]
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), axes))
    # tensordot puts the gate's output legs first
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(state.shape)


def _apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    n = _n_qubits_of(state)
    if not (0 <= control < n and 0 <= target < n):
        raise CircuitError(f"cnot wires ({control}, {target}) out of range")
    batch_shape = state.shape[:-1]
    lead = len(batch_shape)
    psi = state.reshape(batch_shape + (2,) * n).copy()
    sel = [slice(None)] * (lead + n)
    sel[lead + control] = 1
    sub = psi[tuple(sel)]
    t = target - (1 if target > control else 0)
    sub[:] = np.flip(sub, axis=lead + t)
    return psi.reshape(state.shape)


def apply_gate(state: np.ndarray, gate: Gate) -> np.ndarray:
    """Evolve a (batched) state by one gate."""
    if gate.kind == CNOT:
        return _apply_cnot(state, *gate.wires)
    return apply_matrix(state, gate.matrix, gate.wires)


def _embed(matrix: np.ndarray, wires: Sequence[int], into: Sequence[int]) -> np.ndarray:
    """Lift a matrix on ``wires`` to the larger ordered wire set ``into``."""
    dim = 2 ** len(into)
    eye = np.eye(dim, dtype=complex)
    local = [into.index(w) for w in wires]
    return apply_matrix(eye.T, matrix, local).T


def fuse_gates(gates: Sequence[Gate], max_qubits: int = 2) -> list[tuple[np.ndarray, tuple[int, ...]]]:
    """Merge runs of consecutive gates acting on at most ``max_qubits`` wires.

    Returns ``(matrix, wires)`` pairs whose ordered product equals the
    original sequence. Fusing cuts the number of passes over a large
    statevector roughly by the number of gates per block.
    """
    ops: list[tuple[np.ndarray, tuple[int, ...]]] = []
    cur_m: np.ndarray | None = None
    cur_w: tuple[int, ...] = ()
    for g in gates:
        union = tuple(sorted(set(cur_w) | set(g.wires)))
        if cur_m is not None and len(union) <= max_qubits:
            if union != cur_w:
                cur_m = _embed(cur_m, cur_w, union)
                cur_w = union
            cur_m = _embed(g.matrix, g.wires, cur_w) @ cur_m
        else:
            if cur_m is not None:
                ops.append((cur_m, cur_w))
            cur_m, cur_w = g.matrix, g.wires
    if cur_m is not None:
        ops.append((cur_m, cur_w))
    return ops


def run(
    circuit: Circuit,
    params: Iterable[float] | None = None,
    initial_state: np.ndarray | None = None,
    fuse: bool = True,
) -> np.ndarray:
    """Simulate ``circuit`` and return the output statevector.

    ``initial_state`` defaults to ``|0...0>`` and may carry a leading batch
    axis, in which case every row is evolved independently.
    """
    if params is not None:
        circuit = circuit.bind(params)
    n = circuit.n_qubits
    if initial_state is None:
        state = zero_state(n)
    else:
        state = np.array(initial_state, dtype=complex)
        if state.shape[-1] != 2**n:
            raise CircuitError(
                f"initial state has dimension {state.shape[-1]}, expected {2**n}"
            )
    if fuse:
        for matrix, wires in fuse_gates(circuit.gates):
            state = apply_matrix(state, matrix, wires)
    else:
        for g in circuit.gates:
            state = apply_gate(state, g)
    return state


def circuit_unitary(circuit: Circuit, params: Iterable[float] | None = None) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix of the circuit (column ``j`` = image of ``|j>``)."""
    eye = np.eye(2**circuit.n_qubits, dtype=complex)
    return run(circuit, params, initial_state=eye).T


def probabilities(state: np.ndarray) -> np.ndarray:
    return np.abs(state) ** 2


def z_signs(n_qubits: int, wire: int) -> np.ndarray:
    """``+1``/``-1`` per basis index according to the bit on ``wire``."""
    bits = (np.arange(2**n_qubits) >> (n_qubits - 1 - wire)) & 1
    return 1.0 - 2.0 * bits


def expval_z(state: np.ndarray, wire: int) -> float | np.ndarray:
    """Pauli-Z expectation on ``wire``; batched states give an array."""
    n = _n_qubits_of(state)
    if not 0 <= wire < n:
        raise CircuitError(f"wire {wire} out of range for {n} qubits")
    val = probabilities(state) @ z_signs(n, wire)
    return float(val) if np.ndim(val) == 0 else val


def expval_z_product(state: np.ndarray, wires: Sequence[int]) -> float | np.ndarray:
    """Expectation of ``Z_{w1} Z_{w2} ...``; an empty list gives the norm."""
    n = _n_qubits_of(state)
    signs = np.ones(2**n)
    for w in wires:
        signs = signs * z_signs(n, w)
    val = probabilities(state) @ signs
    return float(val) if np.ndim(val) == 0 else val


def sample_z(state: np.ndarray, wire: int, shots: int, seed: int | None = None) -> np.ndarray:
    """Draw ``shots`` Pauli-Z outcomes (``+1``/``-1``) on ``wire``."""
    if shots < 1:
        raise CircuitError("shots must be at least 1")
    if np.ndim(state) != 1:
        raise CircuitError("sample_z expects a single (unbatched) state")
    p_plus = (1.0 + expval_z(state, wire)) / 2.0
    p_plus = min(max(p_plus, 0.0), 1.0)
    rng = np.random.default_rng(seed)
    return np.where(rng.random(shots) < p_plus, 1, -1)
