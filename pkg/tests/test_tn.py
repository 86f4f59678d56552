import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tnqc.ansatz import build_circuit, make_layout, random_params
from tnqc.circuit import Circuit, Rot, expval_z, run
from tnqc.tn import (
    OPEN,
    DenseTensor,
    TensorNetworkError,
    TensorNetworkGraph,
    circuit_to_tn,
    contract_network,
    contract_pair,
    greedy_path,
    mps_bond_dims,
    mps_factorize,
    mps_graph,
    mps_reconstruct,
    parse_graph_text,
    peps_graph,
    tn_expval,
    tn_to_circuit_layout,
    trace_pair,
    wires_for_dim,
)

from conftest import DATA, random_circuit


def test_identity_contraction():
    b = DenseTensor(np.arange(4.0).reshape(2, 2), ("j", "k"))
    eye = DenseTensor(np.eye(2), ("i", "j"))
    out = contract_pair(eye, b).transpose(("i", "k"))
    assert np.allclose(out.data, b.data)


def test_matrix_product_by_hand():
    a = DenseTensor(np.array([[1, 2], [3, 4]]), ("i", "j"))
    b = DenseTensor(np.array([[5, 6], [7, 8]]), ("j", "k"))
    assert np.allclose(contract_pair(a, b, ["j"]).data, [[19, 22], [43, 50]])


def test_self_trace():
    t = DenseTensor(np.array([[1, 2], [3, 4]]), ("i", "j"))
    assert trace_pair(t, "i", "j").data == pytest.approx(5)


def test_outer_product_allowed():
    a = DenseTensor(np.array([1, 2]), ("i",))
    b = DenseTensor(np.array([3, 4, 5]), ("j",))
    assert contract_pair(a, b).shape == (2, 3)


def test_dimension_mismatch_rejected():
    a = DenseTensor(np.ones((2, 3)), ("i", "j"))
    b = DenseTensor(np.ones((2, 2)), ("j", "k"))
    with pytest.raises(TensorNetworkError):
        contract_pair(a, b)


def test_duplicate_labels_rejected():
    with pytest.raises(TensorNetworkError):
        DenseTensor(np.ones((2, 2)), ("i", "i"))


def random_network(rng, n_tensors, max_dim=3):
    """Random connected network; some open legs stay on the last tensor."""
    edges = [(i, int(rng.integers(i))) for i in range(1, n_tensors)]
    for _ in range(n_tensors // 2):
        u, v = rng.choice(n_tensors, 2, replace=False)
        edges.append((int(u), int(v)))
    legs = {i: [] for i in range(n_tensors)}
    for k, (u, v) in enumerate(edges):
        legs[u].append((f"e{k}", None))
        legs[v].append((f"e{k}", None))
    legs[n_tensors - 1].append(("open", None))
    dims = {f"e{k}": int(rng.integers(1, max_dim + 1)) for k in range(len(edges))}
    dims["open"] = 2
    tensors = []
    for i in range(n_tensors):
        labels = tuple(lab for lab, _ in legs[i])
        shape = tuple(dims[lab] for lab in labels)
        data = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        tensors.append(DenseTensor(data, labels))
    return tensors


@settings(max_examples=30)
@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_contraction_is_path_independent(n_tensors, seed):
    rng = np.random.default_rng(seed)
    tensors = random_network(rng, n_tensors)
    greedy = contract_network(tensors, "greedy")
    # naive left-to-right path
    path = [(0, 1)] + [(0, len(tensors) - i - 1) for i in range(1, n_tensors - 1)]
    naive = contract_network(tensors, path).transpose(greedy.labels)
    scale = max(np.max(np.abs(greedy.data)), 1e-300)
    assert np.max(np.abs(greedy.data - naive.data)) / scale <= 1e-10


def test_greedy_path_length(rng):
    tensors = random_network(rng, 6)
    assert len(greedy_path(tensors)) == 5


def test_two_tensor_network_equals_pair():
    a = DenseTensor(np.array([[1, 2], [3, 4]]), ("i", "j"))
    b = DenseTensor(np.array([[5, 6], [7, 8]]), ("j", "k"))
    tn = TensorNetworkGraph.from_tensors({"a": a, "b": b})
    out = contract_network(tn).transpose(("i", "k"))
    assert np.allclose(out.data, contract_pair(a, b).data)


def test_product_tensor_has_unit_bonds(rng):
    vs = [rng.normal(size=2) for _ in range(4)]
    data = np.einsum("a,b,c,d->abcd", *vs)
    sites = mps_factorize(DenseTensor(data, ("a", "b", "c", "d")))
    assert mps_bond_dims(sites) == [1, 1, 1]


def test_ghz_tensor_bonds():
    data = np.zeros((2,) * 4)
    data[0, 0, 0, 0] = data[1, 1, 1, 1] = 1
    sites = mps_factorize(DenseTensor(data, ("a", "b", "c", "d")))
    assert mps_bond_dims(sites) == [2, 2, 2]


def test_mps_site_labels():
    data = np.random.default_rng(0).normal(size=(2, 3, 2))
    sites = mps_factorize(DenseTensor(data, ("a", "b", "c")))
    assert [s.labels for s in sites] == [("a", "bond0"), ("bond0", "b", "bond1"), ("bond1", "c")]


def test_mps_round_trip(rng):
    data = rng.normal(size=(2, 2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2, 2))
    labels = ("a", "b", "c", "d")
    sites = mps_factorize(DenseTensor(data, labels))
    assert np.max(np.abs(mps_reconstruct(sites, labels).data - data)) <= 1e-10
    assert np.allclose(contract_network(sites).transpose(labels).data, data)


def test_mps_rank_one_rejected():
    with pytest.raises(TensorNetworkError):
        mps_factorize(DenseTensor(np.ones(3), ("a",)))


@settings(max_examples=25)
@given(st.lists(st.integers(2, 3), min_size=3, max_size=5), st.integers(0, 2**31 - 1))
def test_truncation_respects_max_bond_and_is_monotone(shape, seed):
    rng = np.random.default_rng(seed)
    labels = tuple(f"i{k}" for k in range(len(shape)))
    data = rng.normal(size=shape)
    t = DenseTensor(data, labels)
    errors = []
    for d in range(1, 10):
        sites = mps_factorize(t, max_bond=d)
        assert max(mps_bond_dims(sites)) <= d
        errors.append(np.linalg.norm(mps_reconstruct(sites, labels).data - data))
    assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:]))


def test_tn_oracle_simple_cases():
    assert tn_expval(Circuit(1, [Rot(0, 0, np.pi, 0)], measured_wire=0)) == pytest.approx(-1)
    assert tn_expval(Circuit(2, [], measured_wire=1)) == pytest.approx(1)


def test_tn_oracle_matches_mps_circuit(rng):
    layout = make_layout("mps", 4, 1, 2)
    circ = build_circuit(layout, random_params(layout, rng), cut=False)
    assert tn_expval(circ) == pytest.approx(expval_z(run(circ), circ.measured_wire), abs=1e-10)


def test_circuit_tn_has_dimension_two_legs(rng):
    tn = circuit_to_tn(random_circuit(3, 10, rng))
    assert all(e.dim == 2 for e in tn.edges)
    assert not tn.open_edges()


def test_wires_for_dim():
    assert [wires_for_dim(d) for d in (1, 2, 3, 4, 5, 8, 9)] == [0, 1, 2, 2, 3, 3, 4]


def test_peps_layout():
    layout = tn_to_circuit_layout(peps_graph(3, 3), "in")
    assert layout.n_blocks == 9
    assert layout.n_wires == 10
    assert layout.is_acyclic() and layout.is_balanced()


def test_peps_fixture_file_matches_builder():
    tn = parse_graph_text((DATA / "peps3x3.txt").read_text())
    layout = tn_to_circuit_layout(tn, "in")
    assert (layout.n_blocks, layout.n_wires) == (9, 10)


def test_single_tensor_layout():
    g = TensorNetworkGraph()
    g.add_vertex("a")
    g.add_edge("a", OPEN, 2, "i")
    g.add_edge("a", OPEN, 2, "o")
    layout = tn_to_circuit_layout(g, {"i": "in", "o": "out"})
    assert (layout.n_blocks, layout.n_wires) == (1, 1)


def test_mps_layout_merges_to_cascade():
    layout = tn_to_circuit_layout(mps_graph(4), "in").merge_single_wire_blocks()
    assert layout.n_blocks == 3
    assert layout.n_wires == 4
    assert [layout.wires_in(v) for v in range(3)] == [2, 2, 2]
    assert layout.is_acyclic() and layout.is_balanced()


def test_missing_direction_rejected():
    with pytest.raises(TensorNetworkError):
        tn_to_circuit_layout(mps_graph(2), {"p0": "in"})


def random_graph(rng, n):
    g = TensorNetworkGraph()
    for v in range(n):
        g.add_vertex(v)
    for v in range(1, n):
        g.add_edge(int(rng.integers(v)), v, int(rng.integers(2, 9)))
    for _ in range(int(rng.integers(0, n))):
        u, v = rng.choice(n, 2, replace=False)
        g.add_edge(int(u), int(v), int(rng.integers(2, 5)))
    for v in range(n):
        for _ in range(int(rng.integers(0, 3))):
            g.add_edge(v, OPEN, int(rng.integers(2, 5)))
    return g


@settings(max_examples=50)
@given(st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_layout_is_acyclic_and_balanced(n, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    dirs = {e.label: ("in" if rng.random() < 0.5 else "out") for e in g.open_edges()}
    layout = tn_to_circuit_layout(g, dirs)
    assert layout.n_blocks == n
    assert layout.is_acyclic()
    assert layout.is_balanced()
    for e in layout.edges:
        if e.src is not None and e.dst is not None:
            assert e.src < e.dst


def test_parse_reports_line_numbers():
    with pytest.raises(TensorNetworkError, match="line 2"):
        parse_graph_text("a b 2\na c nope\n")
