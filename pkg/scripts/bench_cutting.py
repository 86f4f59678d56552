"""Run the three cut-simulation sweeps and summarise how the cost scales.

    python scripts/bench_cutting.py --out-dir results/bench
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from tnqc.cli import main as cli_main


def read(path: Path) -> list[dict]:
    with path.open() as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="results/bench")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    out = Path(args.out_dir)
    for sweep in ("bond", "qubits", "block"):
        code = cli_main(["bench", "--sweep", sweep, "--repeats", str(args.repeats),
                         "--out", str(out / f"{sweep}.csv")])
        if code:
            raise SystemExit(code)

    q = read(out / "qubits.csv")
    n = np.array([r["n"] for r in q])
    c = np.array([r["n_configs"] for r in q])
    slope, icpt = np.polyfit(n, c, 1)
    print(f"qubits: n_configs = {slope:.3f} n + {icpt:.3f}, "
          f"max residual {np.max(np.abs(slope * n + icpt - c)):.2e}")
    for r in read(out / "bond.csv"):
        print(f"bond: n_V={int(r['n_V'])} configs={int(r['n_configs'])} ms={r['ms']:.1f}")
    for r in read(out / "block.csv"):
        print(f"block: b={int(r['b'])} n={int(r['n'])} configs={int(r['n_configs'])} ms={r['ms']:.1f}")


if __name__ == "__main__":
    main()
