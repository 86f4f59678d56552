"""MPS and TTN meta-ansatz circuits built from strongly entangling blocks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, Cnot, Gate, Rot


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class BlockSpec:
    n_block_qubits: int
    n_layers: int = 2
    entangling_range: int = 1

    def __post_init__(self) -> None:
        if self.n_block_qubits < 2:
            raise LayoutError("blocks need at least two qubits")
        if self.n_layers < 1:
            raise LayoutError("blocks need at least one layer")
        if not 1 <= self.entangling_range < self.n_block_qubits:
            raise LayoutError("entangling range must lie in [1, b)")

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_block_qubits * 3


def sel_block(spec: BlockSpec, wires, params) -> list[Gate]:
    """Strongly entangling layers on ``wires``.

    Each layer is a Rot on every wire followed by the CNOT ring
    ``wires[i] -> wires[(i + range) % b]``. ``params`` has shape
    ``(n_layers, b, 3)``.
    """
    wires = list(wires)
    b = spec.n_block_qubits
    if len(wires) != b:
        raise LayoutError(f"block expects {b} wires, got {len(wires)}")
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.n_layers, b, 3):
        raise LayoutError(
            f"block params must have shape {(spec.n_layers, b, 3)}, got {params.shape}"
        )
    gates: list[Gate] = []
    for layer in params:
        for w, angles in zip(wires, layer):
            gates.append(Rot(w, *angles))
        for i in range(b):
            gates.append(Cnot(wires[i], wires[(i + spec.entangling_range) % b]))
    return gates


@dataclass
class AnsatzLayout:
    """Where each block sits and which wires connect consecutive blocks.

    ``bonds`` lists ``(child_block, parent_block, wires)`` triples: the wires
    leave ``child_block`` and enter ``parent_block``; they are cut when the
    circuit is built.
    """

    kind: str
    n_qubits: int
    n_bond_qubits: int
    block: BlockSpec
    block_wire_map: list[list[int]] = field(default_factory=list)
    bonds: list[tuple[int, int, list[int]]] = field(default_factory=list)
    measured_wire: int = 0

    @property
    def n_blocks(self) -> int:
        return len(self.block_wire_map)

    @property
    def bond_dim(self) -> int:
        return 2**self.n_bond_qubits

    @property
    def param_shape(self) -> tuple[int, int, int, int]:
        return (self.n_blocks, self.block.n_layers, self.block.n_block_qubits, 3)

    @property
    def n_params(self) -> int:
        return int(np.prod(self.param_shape))

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n_qubits,
            "n_V": self.n_bond_qubits,
            "b": self.block.n_block_qubits,
            "L": self.block.n_layers,
        }


def n_mps_blocks(n: int, n_v: int, b: int) -> int:
    if n_v < 1 or b < 2 * n_v:
        raise LayoutError(f"MPS blocks need b >= 2*n_V (b={b}, n_V={n_v})")
    if n < b or (n - n_v) % (b - n_v):
        raise LayoutError(
            f"n={n} is not n_V + k*(b - n_V) for integer k >= 1 (b={b}, n_V={n_v})"
        )
    return (n - n_v) // (b - n_v)


def n_ttn_levels(n: int, n_v: int, b: int) -> int:
    if n_v < 1 or b != 2 * n_v:
        raise LayoutError(f"TTN blocks need b = 2*n_V (b={b}, n_V={n_v})")
    if n % b:
        raise LayoutError(f"n={n} is not a multiple of b={b}")
    leaves = n // b
    if leaves < 2 or leaves & (leaves - 1):
        raise LayoutError(f"n={n} is not b*2^m with m >= 1 (b={b})")
    return leaves.bit_length()  # m + 1


def nearest_valid_mps_n(target: int, n_v: int, b: int) -> int:
    """Closest qubit count ``n_V + k (b - n_V)`` (``k >= 1``) to ``target``."""
    step = b - n_v
    k = max(1, round((target - n_v) / step))
    return n_v + k * step


def mps_layout(n: int, n_v: int, b: int | None = None, n_layers: int = 2) -> AnsatzLayout:
    """Blocks of ``b`` wires with stride ``b - n_V``; neighbours share ``n_V`` wires."""
    b = 2 * n_v if b is None else b
    k = n_mps_blocks(n, n_v, b)
    stride = b - n_v
    wire_map = [list(range(j * stride, j * stride + b)) for j in range(k)]
    bonds = [
        (j, j + 1, list(range((j + 1) * stride, (j + 1) * stride + n_v)))
        for j in range(k - 1)
    ]
    return AnsatzLayout("mps", n, n_v, BlockSpec(b, n_layers), wire_map, bonds, n - 1)


def ttn_layout(n: int, n_v: int, b: int | None = None, n_layers: int = 2) -> AnsatzLayout:
    """Binary tree of ``b = 2 n_V`` blocks.

    Every block hands its lower-indexed ``n_V`` wires to its parent; the
    other half is traced out. The root's highest wire is measured.
    """
    b = 2 * n_v if b is None else b
    n_ttn_levels(n, n_v, b)
    wire_map: list[list[int]] = []
    bonds: list[tuple[int, int, list[int]]] = []
    level = []
    for i in range(n // b):
        wire_map.append(list(range(i * b, (i + 1) * b)))
        level.append(len(wire_map) - 1)
    while len(level) > 1:
        nxt = []
        for left, right in zip(level[0::2], level[1::2]):
            up_l = wire_map[left][:n_v]
            up_r = wire_map[right][:n_v]
            wire_map.append(up_l + up_r)
            parent = len(wire_map) - 1
            bonds.append((left, parent, up_l))
            bonds.append((right, parent, up_r))
            nxt.append(parent)
        level = nxt
    root = wire_map[level[0]]
    return AnsatzLayout("ttn", n, n_v, BlockSpec(b, n_layers), wire_map, bonds, root[-1])


def make_layout(kind: str, n: int, n_v: int, b: int | None = None, n_layers: int = 2) -> AnsatzLayout:
    kind = kind.lower()
    if kind == "mps":
        return mps_layout(n, n_v, b, n_layers)
    if kind == "ttn":
        return ttn_layout(n, n_v, b, n_layers)
    raise LayoutError(f"unknown layout kind {kind!r}")


def ttn_level_count(layout: AnsatzLayout) -> int:
    return n_ttn_levels(layout.n_qubits, layout.n_bond_qubits, layout.block.n_block_qubits)


def random_params(layout: AnsatzLayout, rng: np.random.Generator) -> np.ndarray:
    """Uniform angles in ``[0, 2*pi)``, flat."""
    return rng.uniform(0.0, 2 * np.pi, size=layout.n_params)


def build_circuit(layout: AnsatzLayout, params=None, cut: bool = True) -> Circuit:
    """Concrete circuit for ``layout`` with blocks in construction order.

    Cut markers go on every bond wire right after the child block's last
    gate (omit them with ``cut=False``).
    """
    if params is None:
        params = np.zeros(layout.n_params)
    params = np.asarray(params, dtype=float)
    if params.size != layout.n_params:
        raise LayoutError(f"expected {layout.n_params} parameters, got {params.size}")
    params = params.reshape(layout.param_shape)
    gates: list[Gate] = []
    last_gate = []
    for j, wires in enumerate(layout.block_wire_map):
        gates.extend(sel_block(layout.block, wires, params[j]))
        last_gate.append(len(gates) - 1)
    markers = []
    if cut:
        for child, _parent, wires in layout.bonds:
            markers.extend((w, last_gate[child]) for w in wires)
    return Circuit(layout.n_qubits, gates, markers, layout.measured_wire)


def build_mps(layout: AnsatzLayout, params=None) -> Circuit:
    if layout.kind != "mps":
        raise LayoutError("build_mps needs an MPS layout")
    return build_circuit(layout, params)


def build_ttn(layout: AnsatzLayout, params=None) -> Circuit:
    if layout.kind != "ttn":
        raise LayoutError("build_ttn needs a TTN layout")
    return build_circuit(layout, params)
