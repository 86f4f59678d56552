import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tnqc.ansatz import build_circuit, make_layout, random_params
from tnqc.circuit import Circuit, Cnot, Rot, expval_z, run
from tnqc.cutting import (
    PREP_TO_PAULI,
    CuttingError,
    FragmentConfig,
    count_configs_layout,
    count_configs_mps,
    count_configs_ttn,
    cut_expval,
    cut_run_report,
    enumerate_configs,
    estimate_cost,
    evaluate_all,
    evaluate_fragment,
    partition,
    reconstruct,
)


def uncut(circ):
    return expval_z(run(circ), circ.measured_wire)


def one_wire_fragment(gates_before, gates_after=(Rot(0),)):
    """Single wire cut between two gate groups; returns the downstream fragment."""
    gates = list(gates_before) + list(gates_after)
    circ = Circuit(1, gates, [(0, len(gates_before) - 1)], 0)
    return partition(circ)


def test_prep_table_reproduces_paulis():
    # density matrices of the four preparations combine into I, X, Y, Z
    kets = {
        "Z0": np.array([1, 0]),
        "Z1": np.array([0, 1]),
        "Xplus": np.array([1, 1]) / np.sqrt(2),
        "Yplus": np.array([1, 1j]) / np.sqrt(2),
    }
    rhos = [np.outer(k, k.conj()) for k in kets.values()]
    paulis = [np.eye(2), [[0, 1], [1, 0]], [[0, -1j], [1j, 0]], np.diag([1, -1])]
    for row, pauli in zip(PREP_TO_PAULI, paulis):
        assert np.allclose(sum(c * r for c, r in zip(row, rhos)), pauli)


def test_ttn_four_qubits_gives_three_fragments():
    fs = partition(build_circuit(make_layout("ttn", 4, 1)))
    assert fs.k == 3
    assert sorted(f.n_qubits for f in fs.fragments) == [2, 2, 2]
    assert fs.d_max == 1


def test_mps_seven_qubits_three_blocks():
    fs = partition(build_circuit(make_layout("mps", 7, 1, 3)))
    assert fs.k == 3
    assert fs.d_max == 1


def test_no_markers_rejected():
    with pytest.raises(CuttingError):
        partition(Circuit(2, [Cnot(0, 1)]))


def test_non_separating_cut_rejected():
    # wire 0 still links the gates on both sides of the cut
    with pytest.raises(CuttingError):
        partition(Circuit(2, [Cnot(0, 1), Cnot(1, 0), Cnot(0, 1)], [(1, 0)], 1))


def test_fragments_partition_the_gates():
    circ = build_circuit(make_layout("mps", 8, 1))
    fs = partition(circ)
    ids = sorted(i for f in fs.fragments for i in f.gate_ids)
    assert ids == list(range(len(circ.gates)))


def test_config_count_examples():
    assert len(enumerate_configs(partition(build_circuit(make_layout("mps", 4, 1))))) == 19
    assert len(enumerate_configs(partition(build_circuit(make_layout("ttn", 4, 1))))) == 22
    assert len(enumerate_configs(partition(build_circuit(make_layout("mps", 8, 1))))) == 67


def test_count_formulas():
    assert count_configs_mps(4, 1) == 19
    assert count_configs_mps(8, 1) == 67
    assert count_configs_mps(8, 2) == 169
    assert count_configs_ttn(4, 1) == 22
    assert count_configs_ttn(8, 1) == 124
    assert count_configs_ttn(16, 1) == 328
    with pytest.raises(CuttingError):
        count_configs_mps(7, 2)
    with pytest.raises(CuttingError):
        count_configs_ttn(12, 1)


def test_general_block_count():
    # b = 3, n_V = 1: 3 + (k - 2) * 12 + 4 with k = 3
    assert count_configs_layout(make_layout("mps", 7, 1, 3)) == 19
    assert count_configs_layout(make_layout("mps", 16, 2, 16)) == 1


def test_single_wire_fragment_values():
    fs = one_wire_fragment([Rot(0)])
    src = next(f for f in fs.fragments if f.out_cuts)
    sink = next(f for f in fs.fragments if f.in_cuts)
    assert evaluate_fragment(src, FragmentConfig(src.index, (), ("Z",)))[("Z",)] == 1
    assert evaluate_fragment(sink, FragmentConfig(sink.index, ("Z0",), ()))[()] == 1
    plus = evaluate_fragment(sink, FragmentConfig(sink.index, ("Xplus",), ()))
    assert plus[()] == pytest.approx(0)
    fs = one_wire_fragment([Rot(0, 0, np.pi / 2, 0)])
    src = next(f for f in fs.fragments if f.out_cuts)
    assert evaluate_fragment(src, FragmentConfig(src.index, (), ("X",)))[("X",)] == pytest.approx(1)


def test_identity_wire_reconstructs_to_plus_one():
    assert cut_expval(one_wire_fragment([Rot(0)]).circuit) == pytest.approx(1)


def test_bell_pair_cut():
    circ = Circuit(2, [Rot(0, 0, np.pi / 2, 0), Cnot(0, 1)], [(0, 0)], 1)
    assert cut_expval(circ) == pytest.approx(uncut(circ), abs=1e-12)
    assert uncut(circ) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("method", ["cached", "direct"])
def test_random_mps_eight_qubits(rng, method):
    layout = make_layout("mps", 8, 1)
    circ = build_circuit(layout, random_params(layout, rng))
    assert cut_expval(circ, method=method) == pytest.approx(uncut(circ), abs=1e-8)


@settings(max_examples=15)
@given(
    st.sampled_from([("mps", 4, 1, 2), ("ttn", 4, 1, 2), ("mps", 6, 1, 2), ("ttn", 8, 1, 2),
                     ("mps", 7, 1, 3), ("mps", 8, 2, 4), ("ttn", 8, 2, 4)]),
    st.integers(0, 2**31 - 1),
)
def test_cached_and_direct_evaluation_agree(point, seed):
    layout = make_layout(*point)
    fs = partition(build_circuit(layout, random_params(layout, np.random.default_rng(seed))))
    direct = evaluate_all(fs, method="direct")
    cached = evaluate_all(fs, method="cached")
    for d, c in zip(direct, cached):
        assert d.keys() == c.keys()
        assert all(abs(d[k] - c[k]) <= 1e-12 for k in d)


def test_reconstruction_ignores_result_order(rng):
    layout = make_layout("ttn", 8, 1)
    fs = partition(build_circuit(layout, random_params(layout, rng)))
    results = evaluate_all(fs)
    shuffled = [dict(reversed(list(r.items()))) for r in results]
    assert abs(reconstruct(fs, results) - reconstruct(fs, shuffled)) <= 1e-12


def test_missing_results_rejected(rng):
    fs = partition(build_circuit(make_layout("mps", 4, 1)))
    results = evaluate_all(fs)
    results[1] = dict(list(results[1].items())[1:])
    with pytest.raises(CuttingError):
        reconstruct(fs, results)


def test_parallel_workers_match_serial(rng):
    layout = make_layout("mps", 8, 1)
    fs = partition(build_circuit(layout, random_params(layout, rng)))
    assert evaluate_all(fs, workers=3) == evaluate_all(fs)


def test_shot_mode_is_close_and_seeded(rng):
    layout = make_layout("mps", 4, 1)
    circ = build_circuit(layout, random_params(layout, rng))
    a = cut_expval(circ, shots=20_000, seed=5)
    assert a == cut_expval(circ, shots=20_000, seed=5)
    assert abs(a - uncut(circ)) < 0.2


def test_estimate_cost():
    assert estimate_cost(1, 2, 0.1) == pytest.approx(512 * 8 * math.log(2) / 0.01)
    assert estimate_cost(1, 1, 0.1) == 0
    assert estimate_cost(2, 5, 0.1) / estimate_cost(1, 5, 0.1) == pytest.approx(1024)
    with pytest.raises(CuttingError):
        estimate_cost(1, 2, 0)


def test_cut_run_report_fields(rng):
    layout = make_layout("mps", 8, 1)
    rep = cut_run_report(layout, random_params(layout, rng))
    assert rep["n_configs"] == 67
    assert rep["max_abs_error"] <= 1e-8
    assert {"n", "n_V", "b", "kind", "n_fragments", "expval_cut", "wall_time_ms"} <= rep.keys()


def test_cut_run_report_skips_uncut_for_wide_circuits(rng):
    layout = make_layout("mps", 40, 1)
    rep = cut_run_report(layout, random_params(layout, rng))
    assert "expval_uncut" not in rep and "max_abs_error" not in rep
    assert -1 <= rep["expval_cut"] <= 1
