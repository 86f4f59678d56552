"""Dense tensors, tensor-network graphs and the TN <-> circuit conversions.

A :class:`DenseTensor` is a numpy array whose axes carry string labels.
Contraction sums over labels shared by two tensors. A
:class:`TensorNetworkGraph` stores tensors on vertices and indices on edges;
an edge with ``None`` as an endpoint is an open index.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .circuit import Circuit

OPEN = None


class TensorNetworkError(ValueError):
    pass


@dataclass(eq=False)
class DenseTensor:
    data: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        self.labels = tuple(self.labels)
        if self.data.ndim != len(self.labels):
            raise TensorNetworkError(
                f"{self.data.ndim}-index array given {len(self.labels)} labels"
            )
        if len(set(self.labels)) != len(self.labels):
            raise TensorNetworkError(f"duplicate labels {self.labels}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rank(self) -> int:
        return self.data.ndim

    def dim(self, label: str) -> int:
        return self.data.shape[self.labels.index(label)]

    def transpose(self, labels: Sequence[str]) -> "DenseTensor":
        perm = [self.labels.index(lab) for lab in labels]
        return DenseTensor(self.data.transpose(perm), tuple(labels))


def contract_pair(
    a: DenseTensor, b: DenseTensor, shared_labels: Sequence[str] | None = None
) -> DenseTensor:
    """Sum over ``shared_labels`` (default: every common label).

    Result labels are ``a``'s free labels followed by ``b``'s. No shared
    labels gives the outer product.
    """
    if shared_labels is None:
        shared_labels = [lab for lab in a.labels if lab in b.labels]
    shared = list(shared_labels)
    for lab in shared:
        if lab not in a.labels or lab not in b.labels:
            raise TensorNetworkError(f"label {lab!r} is not present in both tensors")
        if a.dim(lab) != b.dim(lab):
            raise TensorNetworkError(
                f"dimension mismatch on {lab!r}: {a.dim(lab)} vs {b.dim(lab)}"
            )
    leftover = (set(a.labels) & set(b.labels)) - set(shared)
    if leftover:
        raise TensorNetworkError(f"labels {sorted(leftover)} shared but not contracted")
    ax_a = [a.labels.index(lab) for lab in shared]
    ax_b = [b.labels.index(lab) for lab in shared]
    data = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    labels = [lab for lab in a.labels if lab not in shared] + [
        lab for lab in b.labels if lab not in shared
    ]
    return DenseTensor(data, tuple(labels))


def trace_pair(t: DenseTensor, label_a: str, label_b: str) -> DenseTensor:
    """Join two legs of one tensor and sum over them."""
    i, j = t.labels.index(label_a), t.labels.index(label_b)
    if t.shape[i] != t.shape[j]:
        raise TensorNetworkError("traced legs must have equal dimension")
    data = np.trace(t.data, axis1=i, axis2=j)
    labels = [lab for k, lab in enumerate(t.labels) if k not in (i, j)]
    return DenseTensor(data, tuple(labels))


@dataclass
class Edge:
    u: Hashable | None
    v: Hashable | None
    dim: int
    label: str

    @property
    def is_open(self) -> bool:
        return self.u is OPEN or self.v is OPEN

    def endpoints(self) -> list[Hashable]:
        return [x for x in (self.u, self.v) if x is not OPEN]


@dataclass
class TensorNetworkGraph:
    """Vertices map to tensors (or ``None`` for layout-only graphs)."""

    vertices: dict[Hashable, DenseTensor | None] = field(default_factory=dict)
    edges: list[Edge] = field(default_factory=list)

    def add_vertex(self, vid: Hashable, tensor: DenseTensor | None = None) -> None:
        self.vertices[vid] = tensor

    def add_edge(self, u, v, dim: int, label: str | None = None) -> Edge:
        if label is None:
            label = f"e{len(self.edges)}"
        if any(e.label == label for e in self.edges):
            raise TensorNetworkError(f"duplicate edge label {label!r}")
        edge = Edge(u, v, int(dim), label)
        self.edges.append(edge)
        self.validate_edge(edge)
        return edge

    def validate_edge(self, e: Edge) -> None:
        if e.dim < 1:
            raise TensorNetworkError(f"edge {e.label} has dimension {e.dim} < 1")
        if e.u is OPEN and e.v is OPEN:
            raise TensorNetworkError(f"edge {e.label} has no endpoint")
        for x in e.endpoints():
            if x not in self.vertices:
                raise TensorNetworkError(f"edge {e.label} references unknown vertex {x!r}")

    def validate(self) -> None:
        for e in self.edges:
            self.validate_edge(e)
        for vid, t in self.vertices.items():
            if t is None:
                continue
            for e in self.incident(vid):
                if e.label not in t.labels:
                    raise TensorNetworkError(f"tensor {vid!r} lacks leg {e.label!r}")
                if t.dim(e.label) != e.dim:
                    raise TensorNetworkError(
                        f"tensor {vid!r} leg {e.label!r} has dimension "
                        f"{t.dim(e.label)}, edge says {e.dim}"
                    )

    def incident(self, vid) -> list[Edge]:
        return [e for e in self.edges if vid in (e.u, e.v)]

    def open_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.is_open]

    def neighbors(self, vid) -> list[Hashable]:
        out = []
        for e in self.incident(vid):
            other = e.v if e.u == vid else e.u
            if other is not OPEN and other != vid and other not in out:
                out.append(other)
        return out

    @classmethod
    def from_tensors(cls, tensors: dict[Hashable, DenseTensor]) -> "TensorNetworkGraph":
        """Build a graph by matching labels: shared labels become edges."""
        tn = cls()
        holders: dict[str, list[Hashable]] = defaultdict(list)
        dims: dict[str, int] = {}
        for vid, t in tensors.items():
            tn.add_vertex(vid, t)
            for lab, d in zip(t.labels, t.shape):
                holders[lab].append(vid)
                dims[lab] = d
        for lab, vs in holders.items():
            if len(vs) > 2:
                raise TensorNetworkError(f"label {lab!r} used by more than two tensors")
            u, v = (vs + [OPEN])[:2]
            tn.edges.append(Edge(u, v, dims[lab], lab))
        tn.validate()
        return tn


# ---------------------------------------------------------------------------
# contraction


def greedy_path(tensors: Sequence[DenseTensor]) -> list[tuple[int, int]]:
    """Pairs of positions into a shrinking list (contracted result appended).

    Each step contracts the pair sharing an index whose result is smallest;
    disconnected pieces are joined by outer products at the end.
    """
    shapes: dict[int, dict[str, int]] = {
        i: dict(zip(t.labels, t.shape)) for i, t in enumerate(tensors)
    }
    holders: dict[str, set[int]] = defaultdict(set)
    for i, sh in shapes.items():
        for lab in sh:
            holders[lab].add(i)
    alive = list(range(len(tensors)))
    path: list[tuple[int, int]] = []
    next_id = len(tensors)

    def result_size(a: int, b: int) -> int:
        sa, sb = shapes[a], shapes[b]
        size = 1
        for k, d in sa.items():
            if k not in sb:
                size *= d
        for k, d in sb.items():
            if k not in sa:
                size *= d
        return size

    while len(alive) > 1:
        best = None
        for lab, hs in holders.items():
            if len(hs) != 2:
                continue
            a, b = sorted(hs)
            key = (result_size(a, b), a, b)
            if best is None or key < best:
                best = key
        if best is None:
            a, b = sorted(alive, key=lambda i: (math.prod(shapes[i].values()), i))[:2]
        else:
            _, a, b = best
        sa, sb = shapes.pop(a), shapes.pop(b)
        merged = {k: d for k, d in sa.items() if k not in sb}
        merged.update({k: d for k, d in sb.items() if k not in sa})
        for lab in sa:
            holders[lab].discard(a)
        for lab in sb:
            holders[lab].discard(b)
        for lab in [k for k in sa if k in sb]:
            del holders[lab]
        shapes[next_id] = merged
        for lab in merged:
            holders[lab].add(next_id)
        pa, pb = sorted((alive.index(a), alive.index(b)))
        path.append((pa, pb))
        alive = [x for x in alive if x not in (a, b)] + [next_id]
        next_id += 1
    return path


def contract_network(
    tn: TensorNetworkGraph | Sequence[DenseTensor],
    path: str | Sequence[tuple[int, int]] = "greedy",
) -> DenseTensor:
    """Contract every tensor of ``tn`` into one tensor over the open indices.

    ``path`` lists position pairs into the current tensor list; after each
    step the two tensors are removed and their contraction appended.
    """
    if isinstance(tn, TensorNetworkGraph):
        tn.validate()
        if any(t is None for t in tn.vertices.values()):
            raise TensorNetworkError("every vertex needs a tensor to contract")
        tensors = list(tn.vertices.values())
    else:
        tensors = list(tn)
    if not tensors:
        raise TensorNetworkError("empty network")
    if isinstance(path, str):
        if path != "greedy":
            raise TensorNetworkError(f"unknown path strategy {path!r}")
        path = greedy_path(tensors)
    work = list(tensors)
    for i, j in path:
        if i == j:
            raise TensorNetworkError("a path step must name two different tensors")
        a, b = work[i], work[j]
        work = [t for p, t in enumerate(work) if p not in (i, j)]
        work.append(contract_pair(a, b))
    if len(work) != 1:
        raise TensorNetworkError(f"path left {len(work)} tensors uncontracted")
    return work[0]


# ---------------------------------------------------------------------------
# matrix product states


def mps_factorize(
    a: DenseTensor,
    max_bond: int | None = None,
    rtol: float = 1e-12,
) -> list[DenseTensor]:
    """Factor ``a`` into a chain by sweeping SVDs left to right.

    Site ``i`` keeps the physical label ``a.labels[i]``; bond ``i`` (between
    sites ``i`` and ``i+1``) is labelled ``"bond{i}"``. Tensors have legs
    ``(phys, right)``, ``(left, phys, right)`` ... ``(left, phys)``.
    Singular values below ``rtol * s_max`` are dropped, so a product tensor
    gets bond dimension one. ``max_bond`` keeps only the largest values.
    """
    if a.rank < 2:
        raise TensorNetworkError("an MPS factorization needs a tensor of rank >= 2")
    if max_bond is not None and max_bond < 1:
        raise TensorNetworkError("max_bond must be positive")
    dims = a.shape
    out: list[DenseTensor] = []
    rest = a.data.reshape(1, -1)
    left = 1
    for i in range(a.rank - 1):
        mat = rest.reshape(left * dims[i], -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 1
        keep = max(keep, 1)
        if max_bond is not None:
            keep = min(keep, max_bond)
        u, s, vh = u[:, :keep], s[:keep], vh[:keep]
        core = u.reshape(left, dims[i], keep)
        bond = f"bond{i}"
        if i == 0:
            out.append(DenseTensor(core[0], (a.labels[0], bond)))
        else:
            out.append(DenseTensor(core, (f"bond{i - 1}", a.labels[i], bond)))
        rest = s[:, None] * vh
        left = keep
    last = rest.reshape(left, dims[-1])
    out.append(DenseTensor(last, (f"bond{a.rank - 2}", a.labels[-1])))
    return out


def mps_bond_dims(sites: Sequence[DenseTensor]) -> list[int]:
    return [t.shape[-1] for t in sites[:-1]]


def mps_reconstruct(sites: Sequence[DenseTensor], labels: Sequence[str]) -> DenseTensor:
    chain = sites[0]
    for t in sites[1:]:
        chain = contract_pair(chain, t)
    return chain.transpose(labels)


# ---------------------------------------------------------------------------
# circuit -> tensor network


_Z = np.diag([1.0, -1.0]).astype(complex)
_RHO0 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)


def circuit_to_tn(circuit: Circuit) -> TensorNetworkGraph:
    """Network whose full contraction is ``Tr(O U |0><0| U^dagger)``.

    The ket side carries the gate tensors, the bra side their conjugates;
    per wire a ``|0><0|`` tensor closes the inputs and the observable
    (Pauli Z on ``measured_wire``, identity elsewhere) closes the outputs.
    Every leg has dimension two.
    """
    if circuit.measured_wire is None:
        raise TensorNetworkError("circuit has no measured wire")
    n = circuit.n_qubits
    ket = [f"k{w}_0" for w in range(n)]
    bra = [f"b{w}_0" for w in range(n)]
    depth = [0] * n
    tensors: dict[str, DenseTensor] = {}
    for w in range(n):
        tensors[f"rho{w}"] = DenseTensor(_RHO0, (ket[w], bra[w]))
    for gi, g in enumerate(circuit.gates):
        k = len(g.wires)
        m = g.matrix.reshape((2,) * (2 * k))
        in_k = [ket[w] for w in g.wires]
        in_b = [bra[w] for w in g.wires]
        for w in g.wires:
            depth[w] += 1
            ket[w] = f"k{w}_{depth[w]}"
            bra[w] = f"b{w}_{depth[w]}"
        out_k = [ket[w] for w in g.wires]
        out_b = [bra[w] for w in g.wires]
        tensors[f"U{gi}"] = DenseTensor(m, tuple(out_k + in_k))
        tensors[f"Udg{gi}"] = DenseTensor(m.conj(), tuple(out_b + in_b))
    for w in range(n):
        obs = _Z if w == circuit.measured_wire else np.eye(2, dtype=complex)
        tensors[f"O{w}"] = DenseTensor(obs, (bra[w], ket[w]))
    return TensorNetworkGraph.from_tensors(tensors)


def tn_expval(circuit: Circuit) -> float:
    """Contract :func:`circuit_to_tn` to a real scalar."""
    val = contract_network(circuit_to_tn(circuit)).data
    return float(np.real(val))


# ---------------------------------------------------------------------------
# tensor network -> circuit layout


@dataclass
class LayoutEdge:
    src: int | None  # None = circuit input
    dst: int | None  # None = circuit output
    wires: int
    label: str


@dataclass
class CircuitLayout:
    """Directed acyclic block graph produced from a tensor network."""

    n_blocks: int
    edges: list[LayoutEdge]
    vertex_labels: dict[Hashable, int]

    @property
    def inputs(self) -> list[LayoutEdge]:
        return [e for e in self.edges if e.src is None]

    @property
    def outputs(self) -> list[LayoutEdge]:
        return [e for e in self.edges if e.dst is None]

    @property
    def n_wires(self) -> int:
        return sum(e.wires for e in self.inputs)

    def wires_in(self, v: int) -> int:
        return sum(e.wires for e in self.edges if e.dst == v)

    def wires_out(self, v: int) -> int:
        return sum(e.wires for e in self.edges if e.src == v)

    def is_balanced(self) -> bool:
        return all(self.wires_in(v) == self.wires_out(v) for v in range(self.n_blocks))

    def topological_order(self) -> list[int]:
        indeg = {v: 0 for v in range(self.n_blocks)}
        succ = defaultdict(list)
        for e in self.edges:
            if e.src is not None and e.dst is not None:
                indeg[e.dst] += 1
                succ[e.src].append(e.dst)
        queue = deque(sorted(v for v, d in indeg.items() if d == 0))
        order = []
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in succ[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
        if len(order) != self.n_blocks:
            raise TensorNetworkError("layout contains a cycle")
        return order

    def is_acyclic(self) -> bool:
        try:
            self.topological_order()
        except TensorNetworkError:
            return False
        return True

    def to_text(self) -> str:
        lines = [
            f"# blocks {self.n_blocks}",
            f"# wires {self.n_wires}",
        ]
        for vid, lab in self.vertex_labels.items():
            lines.append(f"# vertex {vid} -> {lab}")
        for e in self.edges:
            src = "in" if e.src is None else str(e.src)
            dst = "out" if e.dst is None else str(e.dst)
            lines.append(f"{src} {dst} {e.wires}")
        return "\n".join(lines) + "\n"

    def merge_single_wire_blocks(self) -> "CircuitLayout":
        """Absorb blocks acting on one wire into their single successor."""
        edges = [LayoutEdge(e.src, e.dst, e.wires, e.label) for e in self.edges]
        alive = list(range(self.n_blocks))
        changed = True
        while changed:
            changed = False
            for v in alive:
                ins = [e for e in edges if e.dst == v]
                outs = [e for e in edges if e.src == v]
                if sum(e.wires for e in ins) == 1 and len(outs) == 1 and outs[0].dst is not None:
                    succ = outs[0].dst
                    edges.remove(outs[0])
                    for e in ins:
                        e.dst = succ
                    alive.remove(v)
                    changed = True
                    break
        relabel = {v: i for i, v in enumerate(alive)}
        new_edges = [
            LayoutEdge(
                None if e.src is None else relabel[e.src],
                None if e.dst is None else relabel[e.dst],
                e.wires,
                e.label,
            )
            for e in edges
        ]
        vmap = {k: relabel[v] for k, v in self.vertex_labels.items() if v in relabel}
        return CircuitLayout(len(alive), new_edges, vmap)


def wires_for_dim(d: int) -> int:
    """Number of qubit wires representing an index of dimension ``d``."""
    return max(0, math.ceil(math.log2(d))) if d > 1 else 0


def _label_vertices(tn: TensorNetworkGraph, directions: dict[str, str]) -> dict[Hashable, int]:
    order = list(tn.vertices)
    n_open_in = {
        v: sum(1 for e in tn.incident(v) if e.is_open and directions[e.label] == "in")
        for v in order
    }
    labels: dict[Hashable, int] = {}
    while len(labels) < len(order):
        rest = [v for v in order if v not in labels]
        start = max(rest, key=lambda v: (n_open_in[v], -order.index(v)))
        queue = deque([start])
        labels[start] = len(labels)
        while queue:
            v = queue.popleft()
            for w in tn.neighbors(v):
                if w not in labels:
                    labels[w] = len(labels)
                    queue.append(w)
    return labels


def tn_to_circuit_layout(
    tn: TensorNetworkGraph, open_edge_directions: dict[str, str] | str
) -> CircuitLayout:
    """Turn a tensor-network graph into a balanced, acyclic block layout.

    1. open edges get the given direction (``"in"`` or ``"out"``);
    2. vertices are numbered breadth-first, starting from the vertex with
       the most open inputs;
    3. internal edges point from the lower to the higher number;
    4. each vertex whose incoming and outgoing wire counts differ gets new
       open edges (inputs if it has fewer incoming wires, outputs otherwise).

    An index of dimension ``d`` becomes ``ceil(log2 d)`` wires.
    ``open_edge_directions`` may be ``"in"``/``"out"`` for all open edges.
    """
    open_edges = tn.open_edges()
    if isinstance(open_edge_directions, str):
        directions = {e.label: open_edge_directions for e in open_edges}
    else:
        directions = dict(open_edge_directions)
    for e in open_edges:
        if directions.get(e.label) not in ("in", "out"):
            raise TensorNetworkError(f"open edge {e.label!r} needs direction 'in' or 'out'")
    labels = _label_vertices(tn, directions)
    edges: list[LayoutEdge] = []
    for e in tn.edges:
        w = wires_for_dim(e.dim)
        if e.is_open:
            (v,) = e.endpoints()
            if directions[e.label] == "in":
                edges.append(LayoutEdge(None, labels[v], w, e.label))
            else:
                edges.append(LayoutEdge(labels[v], None, w, e.label))
        elif e.u == e.v:
            raise TensorNetworkError(f"self-loop {e.label!r} cannot become a wire")
        else:
            a, b = sorted((labels[e.u], labels[e.v]))
            edges.append(LayoutEdge(a, b, w, e.label))
    layout = CircuitLayout(len(labels), edges, labels)
    for v in range(layout.n_blocks):
        n_in, n_out = layout.wires_in(v), layout.wires_out(v)
        if n_in < n_out:
            edges.append(LayoutEdge(None, v, n_out - n_in, f"bal_in{v}"))
        elif n_out < n_in:
            edges.append(LayoutEdge(v, None, n_in - n_out, f"bal_out{v}"))
    return layout


def peps_graph(rows: int, cols: int, bond_dim: int = 2, phys_dim: int = 2) -> TensorNetworkGraph:
    """Layout-only PEPS grid graph with one open (physical) edge per site."""
    tn = TensorNetworkGraph()
    for r in range(rows):
        for c in range(cols):
            tn.add_vertex((r, c))
    for r in range(rows):
        for c in range(cols):
            tn.add_edge((r, c), OPEN, phys_dim, f"p{r}_{c}")
            if c + 1 < cols:
                tn.add_edge((r, c), (r, c + 1), bond_dim, f"h{r}_{c}")
            if r + 1 < rows:
                tn.add_edge((r, c), (r + 1, c), bond_dim, f"v{r}_{c}")
    return tn


def mps_graph(n_sites: int, bond_dim: int = 2, phys_dim: int = 2) -> TensorNetworkGraph:
    tn = TensorNetworkGraph()
    for i in range(n_sites):
        tn.add_vertex(i)
    for i in range(n_sites):
        tn.add_edge(i, OPEN, phys_dim, f"p{i}")
        if i + 1 < n_sites:
            tn.add_edge(i, i + 1, bond_dim, f"b{i}")
    return tn


def parse_graph_text(text: str) -> TensorNetworkGraph:
    """Parse ``u v dim [label]`` lines; ``*`` marks an open end.

    ``vertex NAME`` declares an isolated vertex. ``#`` starts a comment.
    Errors name the offending line number.
    """
    tn = TensorNetworkGraph()
    pending: list[tuple[int, str, str, int, str | None]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "vertex":
            if len(parts) != 2:
                raise TensorNetworkError(f"line {lineno}: expected 'vertex NAME'")
            tn.add_vertex(parts[1])
            continue
        if len(parts) not in (3, 4):
            raise TensorNetworkError(f"line {lineno}: expected 'u v dim [label]'")
        u, v, d = parts[:3]
        try:
            dim = int(d)
        except ValueError:
            raise TensorNetworkError(f"line {lineno}: dimension {d!r} is not an integer") from None
        if dim < 1:
            raise TensorNetworkError(f"line {lineno}: dimension must be >= 1")
        if u == "*" and v == "*":
            raise TensorNetworkError(f"line {lineno}: an edge needs one vertex")
        pending.append((lineno, u, v, dim, parts[3] if len(parts) == 4 else None))
        for x in (u, v):
            if x != "*" and x not in tn.vertices:
                tn.add_vertex(x)
    for lineno, u, v, dim, label in pending:
        try:
            tn.add_edge(
                OPEN if u == "*" else u,
                OPEN if v == "*" else v,
                dim,
                label or f"e{lineno}",
            )
        except TensorNetworkError as exc:
            raise TensorNetworkError(f"line {lineno}: {exc}") from None
    return tn
