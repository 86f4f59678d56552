"""Command-line entry point: ``tnqc <command> [options]``.

Every command accepts ``--config FILE`` with flat ``key = value`` lines;
keys are the long option names (dashes or underscores) and explicit
command-line flags win. Exit codes: 0 success, 2 usage or validation
error, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .ansatz import LayoutError, make_layout, nearest_valid_mps_n, random_params
from .circuit import CircuitError
from .cutting import CuttingError, cut_run_report
from .imaging import (
    GrayImage,
    ImageError,
    detect,
    generate_bas,
    highlight_to_ppm,
    load_pgm,
    save_pgm,
)
from .tn import TensorNetworkError, parse_graph_text, tn_to_circuit_layout
from .training import (
    BAS_SPSA,
    LabeledDataset,
    SPSAConfig,
    TrainedModel,
    TrainingConfig,
    TrainingError,
    split_indices,
    train,
)

log = logging.getLogger("tnqc")

VALIDATION_ERRORS = (
    LayoutError,
    CircuitError,
    CuttingError,
    ImageError,
    TensorNetworkError,
    TrainingError,
)


class UsageError(Exception):
    """Bad input from the user; maps to exit code 2."""


# ---------------------------------------------------------------------------
# config files


def read_config(path) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
        if key in out:
            raise UsageError(f"{path}: line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, cfg: dict[str, str]) -> None:
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(cfg) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, raw in cfg.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean")
            defaults[key] = raw.lower() in ("true", "1", "yes")
            continue
        try:
            value = action.type(raw) if action.type else raw
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: bad value {raw!r}") from exc
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r} must be one of {list(action.choices)}")
        defaults[key] = value
    parser.set_defaults(**defaults)
    for key in defaults:
        actions[key].required = False


def _dump_json(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        _writable(path).write_text(text)


def _writable(path) -> Path:
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {p.parent}: {exc.strerror}") from exc
    return p


def _layout_from(args):
    return make_layout(args.layout, args.n, args.nv, args.block_qubits, args.layers)


def _add_layout_args(p, layout_default="ttn", n_default=None):
    p.add_argument("--layout", choices=("mps", "ttn"), default=layout_default)
    p.add_argument("--n", type=int, default=n_default, required=n_default is None,
                   help="number of qubits")
    p.add_argument("--nv", type=int, default=1, help="bond qubits per cut")
    p.add_argument("--block-qubits", type=int, default=None,
                   help="qubits per block (default 2*nv)")
    p.add_argument("--layers", type=int, default=2, help="entangling layers per block")


# ---------------------------------------------------------------------------
# commands


MANIFEST = "labels.tsv"


def cmd_bas_gen(args) -> int:
    """Write bars-and-stripes PGMs plus a ``labels.tsv`` manifest."""
    if args.size < 2:
        raise UsageError("--size must be at least 2")
    ds = generate_bas(args.size, args.seed, args.n_images)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create {out}: {exc.strerror}") from exc
    split = np.full(len(ds), "test", dtype=object)
    split[ds.train] = "train"
    width = len(str(len(ds) - 1))
    rows = ["filename\tlabel\tsplit"]
    for i, (img, label) in enumerate(zip(ds.images, ds.labels)):
        name = f"bas_{i:0{width}d}.pgm"
        try:
            save_pgm(GrayImage(img), out / name)
        except OSError as exc:
            raise UsageError(f"cannot write {out / name}: {exc.strerror}") from exc
        rows.append(f"{name}\t{label}\t{split[i]}")
    (out / MANIFEST).write_text("\n".join(rows) + "\n")
    print(f"wrote {len(ds)} images to {out}")
    return 0


def load_image_dir(path, seed: int = 0) -> LabeledDataset:
    """Read a directory written by ``bas-gen`` (or any PGMs + ``labels.tsv``).

    A missing ``split`` column gets a seeded stratified half/half split.
    """
    root = Path(path)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise UsageError(f"{manifest} not found")
    images, labels, splits = [], [], []
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        parts = line.split("\t")
        if not line.strip() or parts[0] == "filename":
            continue
        if len(parts) not in (2, 3) or parts[1] not in ("0", "1"):
            raise UsageError(f"{manifest}: line {lineno}: expected 'filename<TAB>label[<TAB>split]'")
        try:
            images.append(load_pgm(root / parts[0]).pixels)
        except OSError as exc:
            raise UsageError(f"cannot read {root / parts[0]}: {exc.strerror}") from exc
        labels.append(int(parts[1]))
        splits.append(parts[2] if len(parts) == 3 else None)
    if not images:
        raise UsageError(f"{manifest} lists no images")
    if len({im.shape for im in images}) > 1:
        raise UsageError("images in a data directory must share one size")
    labels_arr = np.array(labels)
    if all(s is not None for s in splits):
        tr = [i for i, s in enumerate(splits) if s == "train"]
        te = [i for i, s in enumerate(splits) if s == "test"]
    else:
        tr, te = split_indices(len(labels), seed, labels=labels_arr)
    return LabeledDataset(np.stack(images), labels_arr, tr, te)


def cmd_train(args) -> int:
    layout = _layout_from(args)
    ds = load_image_dir(args.data, args.seed)
    base = BAS_SPSA if args.preset == "bas" else SPSAConfig()
    spsa = SPSAConfig(
        a=args.a if args.a is not None else base.a,
        c=args.c if args.c is not None else base.c,
        A=args.A if args.A is not None else base.A,
    )
    opts = {}
    if args.encoding == "dark-reference":
        opts = {"ref_mass": args.ref_mass, "dark_cutoff": args.dark_cutoff}
    cfg = TrainingConfig(
        max_iters=args.iters,
        spsa=spsa,
        seed=args.seed,
        shots=args.shots,
        loss=args.loss,
        encoding=args.encoding,
        encoding_opts=opts,
    )
    out = _writable(args.out)
    metrics_path = _writable(args.metrics) if args.metrics else out.with_suffix(".metrics.jsonl")
    with metrics_path.open("w") as fh:
        def record(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if args.verbose and rec["iter"] % 25 == 0:
                log.info("iter %d loss %.5f train %.3f test %s", rec["iter"], rec["loss"],
                         rec["train_acc"], rec["test_acc"])

        model = train(layout, ds, cfg, on_iteration=record)
    model.save(out)
    train_acc = float(np.mean(model.predict(ds.images[ds.train]) == ds.labels[ds.train]))
    test_acc = (
        float(np.mean(model.predict(ds.images[ds.test]) == ds.labels[ds.test]))
        if ds.test.size
        else None
    )
    _dump_json({"checkpoint": str(out), "metrics": str(metrics_path),
                "train_acc": train_acc, "test_acc": test_acc})
    return 0


def cmd_cut_run(args) -> int:
    layout = _layout_from(args)
    params = random_params(layout, np.random.default_rng(args.seed))
    report = cut_run_report(layout, params, shots=args.shots, seed=args.seed,
                            method=args.method, workers=args.workers)
    _dump_json(report, args.out)
    return 0


def bench_points(sweep: str, args) -> list[tuple[int, int, int]]:
    """``(n, n_V, b)`` points for one sweep (MPS layouts only)."""
    if sweep == "bond":
        n = args.n or 66
        b = args.block_qubits or 6
        return [(n, nv, b) for nv in (1, 2, 3)]
    if sweep == "qubits":
        nv = args.nv or 1
        b = args.block_qubits or 5
        return [(nv + k * (b - nv), nv, b) for k in range(2, 9)]
    if sweep == "block":
        nv = args.nv or 1
        target = args.n or 100
        return [(nearest_valid_mps_n(target, nv, b), nv, b) for b in range(2 * nv, 2 * nv + 5)]
    raise UsageError(f"unknown sweep {sweep!r}")


def cmd_bench(args) -> int:
    points = bench_points(args.sweep, args)
    out = _writable(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "n_V", "b", "n_configs", "ms"])
        for n, nv, b in points:
            layout = make_layout("mps", n, nv, b, args.layers)
            params = random_params(layout, np.random.default_rng(args.seed))
            best = None
            for _ in range(args.repeats):
                rep = cut_run_report(layout, params, method=args.method, seed=args.seed)
                best = rep if best is None or rep["wall_time_ms"] < best["wall_time_ms"] else best
            writer.writerow([n, nv, b, best["n_configs"], f"{best['wall_time_ms']:.3f}"])
            fh.flush()
            log.info("n=%d n_V=%d b=%d configs=%d %.1f ms", n, nv, b,
                     best["n_configs"], best["wall_time_ms"])
    print(f"wrote {len(points)} rows to {out}")
    return 0


def _split_pair(value: str, what: str) -> list[str]:
    parts = [p.strip() for p in value.split(",")]
    if any(not p for p in parts):
        raise UsageError(f"{what}: empty entry in {value!r}")
    return parts


def cmd_detect(args) -> int:
    paths = _split_pair(args.models, "--models")
    if len(paths) != 3:
        raise UsageError("--models takes three comma-separated checkpoints (full, coarse, fine)")
    models = []
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"model file {p} not found")
        try:
            models.append(TrainedModel.load(p))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"{p}: not a model checkpoint ({exc})") from exc
    outs = _split_pair(args.out, "--out")
    if len(outs) != 2:
        raise UsageError("--out takes report.json,highlight.ppm")
    if not Path(args.image).is_file():
        raise UsageError(f"image {args.image} not found")
    img = load_pgm(args.image)
    report = detect(img, *models, black_threshold=args.threshold,
                    stride_coarse=args.stride_coarse, stride_fine=args.stride_fine)
    _dump_json(report.to_dict(), outs[0])
    highlight_to_ppm(report, _writable(outs[1]))
    return 0


def _parse_directions(spec: str):
    if spec in ("in", "out"):
        return spec
    out = {}
    for item in _split_pair(spec, "--directions"):
        label, sep, d = item.partition("=")
        if not sep or d not in ("in", "out"):
            raise UsageError(f"--directions: expected LABEL=in|out, got {item!r}")
        out[label] = d
    return out


def cmd_tn2circ(args) -> int:
    try:
        text = Path(args.graph).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.graph}: {exc.strerror}") from exc
    tn = parse_graph_text(text)
    layout = tn_to_circuit_layout(tn, _parse_directions(args.directions))
    if args.merge:
        layout = layout.merge_single_wire_blocks()
    body = layout.to_text()
    if args.out in (None, "-"):
        sys.stdout.write(body)
    else:
        _writable(args.out).write_text(body)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tnqc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.set_defaults(func=func)
        return p

    p = add("bas-gen", cmd_bas_gen, "write a bars-and-stripes data set")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-images", type=int, default=None,
                   help="draw this many images instead of enumerating all")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a classifier on an image directory")
    _add_layout_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--iters", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--loss", choices=("logistic", "cross-entropy"), default="logistic")
    p.add_argument("--encoding", choices=("amplitude", "dark-reference"), default="amplitude")
    p.add_argument("--ref-mass", type=float, default=0.25)
    p.add_argument("--dark-cutoff", type=float, default=0.5)
    p.add_argument("--preset", choices=("default", "bas"), default="bas",
                   help="SPSA gain preset; --a/--c/--A override single gains")
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--A", type=float, default=None)
    p.add_argument("--out", required=True, help="checkpoint path (JSON)")
    p.add_argument("--metrics", default=None, help="JSONL path (default beside --out)")

    p = add("cut-run", cmd_cut_run, "cut, evaluate and reconstruct one circuit")
    _add_layout_args(p, layout_default="mps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--method", choices=("cached", "direct"), default="cached")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None, help="report path (default stdout)")

    p = add("bench", cmd_bench, "sweep cut-simulation cost over one parameter")
    p.add_argument("--sweep", choices=("bond", "qubits", "block"), required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--nv", type=int, default=None)
    p.add_argument("--block-qubits", type=int, default=None)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1, help="keep the fastest of this many runs")
    p.add_argument("--method", choices=("cached", "direct"), default="cached")
    p.add_argument("--out", required=True)

    p = add("detect", cmd_detect, "three-stage defect search on one PGM image")
    p.add_argument("--image", required=True)
    p.add_argument("--models", required=True, help="full,coarse,fine checkpoints")
    p.add_argument("--threshold", type=float, default=0.25, help="black pixel threshold")
    p.add_argument("--stride-coarse", type=int, default=None)
    p.add_argument("--stride-fine", type=int, default=None)
    p.add_argument("--out", required=True, help="report.json,highlight.ppm")

    p = add("tn2circ", cmd_tn2circ, "turn a tensor-network graph into a block layout")
    p.add_argument("--graph", required=True)
    p.add_argument("--directions", default="in",
                   help="'in', 'out' or LABEL=in|out,... for open edges")
    p.add_argument("--merge", action="store_true", help="merge single-wire blocks")
    p.add_argument("--out", default=None)
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(name)
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        cmd = next((a for a in argv if not a.startswith("-")), None)
        known, _ = pre.parse_known_args(argv)
        if known.config and cmd is not None and _subparser(parser, cmd) is not None:
            _apply_config(_subparser(parser, cmd), read_config(known.config))
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)
        if args.verbose:
            logging.getLogger("tnqc").setLevel(logging.INFO)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort exit code contract
        log.exception("internal error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
