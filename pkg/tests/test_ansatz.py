import numpy as np
import pytest
from hypothesis import given, strategies as st

from tnqc.ansatz import (
    BlockSpec,
    LayoutError,
    build_circuit,
    build_mps,
    build_ttn,
    make_layout,
    nearest_valid_mps_n,
    random_params,
    sel_block,
)
from tnqc.circuit import CNOT, ROT, Circuit, circuit_unitary, expval_z, is_unitary, run


def test_sel_block_structure_single_layer():
    gates = sel_block(BlockSpec(2, 1), [0, 1], np.zeros((1, 2, 3)))
    assert [g.kind for g in gates] == [ROT, ROT, CNOT, CNOT]
    assert [g.wires for g in gates[2:]] == [(0, 1), (1, 0)]


def test_sel_block_two_layers():
    gates = sel_block(BlockSpec(2, 2), [3, 4], np.zeros((2, 2, 3)))
    assert [g.kind for g in gates] == [ROT, ROT, CNOT, CNOT] * 2


def test_sel_block_range():
    gates = sel_block(BlockSpec(4, 1, entangling_range=2), [0, 1, 2, 3], np.zeros((1, 4, 3)))
    assert [g.wires for g in gates if g.kind == CNOT] == [(0, 2), (1, 3), (2, 0), (3, 1)]


def test_sel_block_shape_checked():
    with pytest.raises(LayoutError):
        sel_block(BlockSpec(2, 2), [0, 1], np.zeros((1, 2, 3)))


def test_sel_block_is_unitary(rng):
    spec = BlockSpec(3, 2)
    gates = sel_block(spec, [0, 1, 2], rng.uniform(0, 2 * np.pi, (2, 3, 3)))
    assert is_unitary(circuit_unitary(Circuit(3, gates)), atol=1e-12)


def test_mps_four_qubits():
    layout = make_layout("mps", 4, 1, 2)
    assert layout.block_wire_map == [[0, 1], [1, 2], [2, 3]]
    assert layout.measured_wire == 3
    circ = build_mps(layout)
    assert sorted(circ.cut_markers) == sorted(
        [(1, len(circ.gates) // 3 - 1), (2, 2 * len(circ.gates) // 3 - 1)]
    )


def test_mps_single_block_has_no_cuts():
    layout = make_layout("mps", 16, 2, 16)
    assert layout.n_blocks == 1
    assert build_circuit(layout).cut_markers == []


def test_mps_divisibility():
    with pytest.raises(LayoutError):
        make_layout("mps", 100, 1, 5)
    assert nearest_valid_mps_n(100, 1, 5) == 101
    assert make_layout("mps", 101, 1, 5).n_blocks == 25


def test_mps_needs_room_for_bond():
    with pytest.raises(LayoutError):
        make_layout("mps", 7, 2, 3)


def test_ttn_four_qubits():
    layout = make_layout("ttn", 4, 1)
    assert layout.block_wire_map == [[0, 1], [2, 3], [0, 2]]
    assert layout.measured_wire == 2
    assert [(c, p, w) for c, p, w in layout.bonds] == [(0, 2, [0]), (1, 2, [2])]


@pytest.mark.parametrize("n, blocks", [(4, 3), (8, 7), (16, 15)])
def test_ttn_block_counts(n, blocks):
    assert make_layout("ttn", n, 1).n_blocks == blocks


def test_ttn_constraints():
    for n, nv, b in [(5, 1, 2), (6, 1, 2), (2, 1, 2), (8, 1, 4)]:
        with pytest.raises(LayoutError):
            make_layout("ttn", n, nv, b)


def test_builders_check_kind():
    with pytest.raises(LayoutError):
        build_ttn(make_layout("mps", 4, 1))
    with pytest.raises(LayoutError):
        build_mps(make_layout("ttn", 4, 1))


@st.composite
def valid_mps(draw):
    nv = draw(st.integers(1, 3))
    b = draw(st.integers(2 * nv, 2 * nv + 4))
    k = draw(st.integers(1, (32 - nv) // (b - nv)))
    return nv + k * (b - nv), nv, b


@given(valid_mps())
def test_mps_block_count_formula(point):
    n, nv, b = point
    layout = make_layout("mps", n, nv, b)
    assert layout.n_blocks == (n - nv) // (b - nv)
    assert layout.block_wire_map[-1][-1] == n - 1
    for (_, _, wires), (j, nxt) in zip(layout.bonds, zip(layout.block_wire_map, layout.block_wire_map[1:])):
        assert wires == sorted(set(j) & set(nxt)) and len(wires) == nv


@given(st.integers(1, 3), st.integers(1, 3))
def test_ttn_block_count_formula(nv, m):
    b = 2 * nv
    n = b * 2**m
    if n > 32:
        return
    layout = make_layout("ttn", n, nv)
    assert layout.n_blocks == 2 * n // b - 1


@given(st.sampled_from([("mps", 4, 1, 2), ("mps", 7, 1, 3), ("ttn", 4, 1, 2), ("ttn", 8, 1, 2),
                        ("mps", 8, 2, 4)]),
       st.integers(0, 2**31 - 1))
def test_param_count_and_unitarity(point, seed):
    layout = make_layout(*point)
    params = random_params(layout, np.random.default_rng(seed))
    assert params.size == layout.n_params == int(np.prod(layout.param_shape))
    assert np.all((params >= 0) & (params < 2 * np.pi))
    circ = build_circuit(layout, params)
    assert circ.n_params == layout.n_params
    assert is_unitary(circuit_unitary(circ), atol=1e-10)


@pytest.mark.parametrize("point", [("mps", 4, 1, 2), ("mps", 13, 1, 4), ("ttn", 8, 1, 2),
                                   ("ttn", 16, 2, 4)])
def test_zero_params_measure_plus_one(point):
    layout = make_layout(*point)
    circ = build_circuit(layout)
    assert expval_z(run(circ), circ.measured_wire) == pytest.approx(1.0)


def test_wrong_param_count():
    with pytest.raises(LayoutError):
        build_circuit(make_layout("mps", 4, 1), np.zeros(5))
