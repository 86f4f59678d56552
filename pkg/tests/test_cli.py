import csv
import json

import numpy as np

from tnqc.cli import main, read_config
from tnqc.imaging import GrayImage, save_pgm, synthetic_image

from conftest import DATA


def run_json(args, capsys):
    assert main(args) == 0
    return json.loads(capsys.readouterr().out)


def test_bas_gen(tmp_path):
    assert main(["bas-gen", "--size", "4", "--out", str(tmp_path / "d")]) == 0
    files = sorted(p.name for p in (tmp_path / "d").iterdir())
    assert len(files) == 29 and "labels.tsv" in files
    rows = (tmp_path / "d" / "labels.tsv").read_text().splitlines()[1:]
    assert len(rows) == 28
    assert sum(r.split("\t")[2] == "train" for r in rows) == 14
    assert main(["bas-gen", "--size", "2", "--out", str(tmp_path / "e")]) == 0
    assert len(list((tmp_path / "e").glob("*.pgm"))) == 4


def test_bas_gen_rejects_size_one(tmp_path, capsys):
    assert main(["bas-gen", "--size", "1", "--out", str(tmp_path)]) == 2
    assert "size" in capsys.readouterr().err


def test_bas_gen_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["bas-gen", "--size", "2", "--out", str(blocker / "sub")]) == 2


def test_train_and_metrics(tmp_path, capsys):
    data = tmp_path / "bas"
    main(["bas-gen", "--size", "4", "--seed", "3", "--out", str(data)])
    capsys.readouterr()
    out = tmp_path / "m.json"
    summary = run_json(["train", "--layout", "mps", "--n", "4", "--nv", "1", "--data", str(data),
                        "--iters", "20", "--out", str(out)], capsys)
    lines = (tmp_path / "m.metrics.jsonl").read_text().splitlines()
    assert len(lines) == 20
    assert set(json.loads(lines[0])) == {"iter", "loss", "train_acc", "test_acc"}
    assert json.loads(out.read_text())["layout"]["kind"] == "mps"
    assert 0 <= summary["train_acc"] <= 1


def test_train_is_reproducible(tmp_path, capsys):
    data = tmp_path / "bas"
    main(["bas-gen", "--size", "4", "--out", str(data)])
    args = ["train", "--n", "4", "--data", str(data), "--iters", "10", "--seed", "2"]
    main(args + ["--out", str(tmp_path / "a.json")])
    main(args + ["--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_train_rejects_bad_layout(tmp_path):
    data = tmp_path / "bas"
    main(["bas-gen", "--size", "4", "--out", str(data)])
    code = main(["train", "--layout", "ttn", "--n", "5", "--data", str(data),
                 "--out", str(tmp_path / "m.json")])
    assert code == 2


def test_cut_run_reports(capsys):
    rep = run_json(["cut-run", "--layout", "mps", "--n", "8", "--nv", "1"], capsys)
    assert rep["n_configs"] == 67 and rep["max_abs_error"] <= 1e-8
    rep = run_json(["cut-run", "--layout", "ttn", "--n", "8", "--nv", "1"], capsys)
    assert rep["n_configs"] == 124
    rep = run_json(["cut-run", "--layout", "mps", "--n", "40", "--nv", "1"], capsys)
    assert "expval_uncut" not in rep


def test_cut_run_deterministic_apart_from_time(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["cut-run", "--n", "6", "--seed", "4", "--out", str(p)]) == 0
    a, b = (json.loads(p.read_text()) for p in paths)
    a.pop("wall_time_ms"), b.pop("wall_time_ms")
    assert a == b


def test_cut_run_invalid_sizes():
    assert main(["cut-run", "--layout", "ttn", "--n", "6"]) == 2


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# cut settings\nlayout = ttn\nn = 8\nblock-qubits = 2\n")
    assert read_config(cfg) == {"layout": "ttn", "n": "8", "block_qubits": "2"}
    rep = run_json(["cut-run", "--config", str(cfg)], capsys)
    assert rep["kind"] == "ttn" and rep["n"] == 8
    rep = run_json(["cut-run", "--config", str(cfg), "--n", "4"], capsys)
    assert rep["n"] == 4


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n = 8\nwidth = 3\n")
    assert main(["cut-run", "--config", str(cfg)]) == 2
    assert "width" in capsys.readouterr().err


def test_config_bad_line(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n 8\n")
    assert main(["cut-run", "--config", str(cfg)]) == 2


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_bench_qubit_sweep_is_affine(tmp_path):
    out = tmp_path / "q.csv"
    assert main(["bench", "--sweep", "qubits", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["n", "n_V", "b", "n_configs", "ms"]
    n = np.array([int(r["n"]) for r in rows])
    c = np.array([int(r["n_configs"]) for r in rows])
    assert np.all(np.diff(c) * (n[1] - n[0]) == (c[1] - c[0]) * np.diff(n))


def test_bench_block_sweep_records_valid_n(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--sweep", "block", "--out", str(out)]) == 0
    rows = read_csv(out)
    for r in rows:
        n, nv, b = int(r["n"]), int(r["n_V"]), int(r["b"])
        assert (n - nv) % (b - nv) == 0 and abs(n - 100) < b


def test_tn2circ(tmp_path, capsys):
    out = tmp_path / "lay.txt"
    assert main(["tn2circ", "--graph", str(DATA / "peps3x3.txt"), "--out", str(out)]) == 0
    text = out.read_text()
    assert "# blocks 9" in text and "# wires 10" in text
    single = tmp_path / "one.txt"
    single.write_text("a * 2 i\na * 2 o\n")
    assert main(["tn2circ", "--graph", str(single), "--directions", "i=in,o=out"]) == 0
    assert "# blocks 1" in capsys.readouterr().out


def test_tn2circ_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("a b 2\nthis is not an edge line\n")
    assert main(["tn2circ", "--graph", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_detect_command(tmp_path, detectors):
    _, models = detectors
    paths = []
    for name, model in zip(("full", "coarse", "fine"), models):
        paths.append(tmp_path / f"{name}.json")
        model.save(paths[-1])
    img, _ = synthetic_image(256, np.random.default_rng(3), n_blobs=2, blob_size=(8, 12))
    save_pgm(img, tmp_path / "in.pgm")
    save_pgm(GrayImage(np.ones((256, 256))), tmp_path / "white.pgm")
    models_arg = ",".join(map(str, paths))
    out = f"{tmp_path / 'r.json'},{tmp_path / 'h.ppm'}"
    assert main(["detect", "--image", str(tmp_path / "in.pgm"), "--models", models_arg,
                 "--out", out]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["stage1"] == "defect" and report["stage3_boxes"]
    assert main(["detect", "--image", str(tmp_path / "white.pgm"), "--models", models_arg,
                 "--out", out]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["stage1"] == "no-defect" and not report["stage2_boxes"]
    bad = f"{tmp_path / 'missing.json'},{paths[1]},{paths[2]}"
    assert main(["detect", "--image", str(tmp_path / "in.pgm"), "--models", bad,
                 "--out", out]) == 2


def test_usage_errors_exit_two():
    assert main([]) == 2
    assert main(["cut-run", "--n", "not-a-number"]) == 2
