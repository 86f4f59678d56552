"""Train the TTN classifier on bars and stripes over several seeds.

    python scripts/run_bas.py --sizes 4 16 --seeds 0 1 2 3 4 --out results/bas.json
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from tnqc.ansatz import make_layout
from tnqc.imaging import MAX_ENUMERATED_BAS, generate_bas
from tnqc.training import BAS_SPSA, TrainingConfig, evaluate_accuracy, train

QUBITS = {4: 4, 16: 8, 256: 16}


def run(side: int, seed: int, iters: int) -> dict:
    n_images = None if side <= MAX_ENUMERATED_BAS else 28
    ds = generate_bas(side, seed, n_images)
    layout = make_layout("ttn", QUBITS[side], 1, 2, 2)
    t0 = time.perf_counter()
    model = train(layout, ds, TrainingConfig(max_iters=iters, seed=seed, spsa=BAS_SPSA))
    perfect = next(
        (r["iter"] for r in model.history if r["train_acc"] == 1 and r["test_acc"] == 1), None
    )
    return {
        "side": side,
        "seed": seed,
        "train_acc": evaluate_accuracy(model, *ds.split("train")),
        "test_acc": evaluate_accuracy(model, *ds.split("test")),
        "initial_loss": model.history[0]["loss"] if model.history else None,
        "best_loss": min((r["loss"] for r in model.history), default=None),
        "first_perfect_iter": perfect,
        "seconds": round(time.perf_counter() - t0, 2),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 16], choices=sorted(QUBITS))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--iters", type=int, default=400)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    rows = []
    for side in args.sizes:
        for seed in args.seeds:
            row = run(side, seed, args.iters)
            rows.append(row)
            print(f"{side:>4} seed {seed}: train {row['train_acc']:.3f} test {row['test_acc']:.3f} "
                  f"first 100/100 at {row['first_perfect_iter']} ({row['seconds']} s)", flush=True)
        tests = [r["test_acc"] for r in rows if r["side"] == side]
        print(f"{side:>4} median test accuracy {np.median(tests):.3f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")


if __name__ == "__main__":
    main()
