"""Compare the learned (m, s) against the grid-search and fixed-value baselines.

    python scripts/grid_vs_learned.py --out runs/grid_vs_learned [--jobs 4]

--train and --task take JSON overrides, as in trace_training.py.

Writes comparison.csv with one row per method: accuracy, m in ms, cutoff in Hz, MACs.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from maskwin import SyntheticTaskSpec, TrainConfig, fixed_values, generate_dataset, grid_search, train
from maskwin.train import default_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/grid_vs_learned")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--train", default="{}", help="TrainConfig overrides (JSON object)")
    ap.add_argument("--task", default="{}", help="SyntheticTaskSpec overrides (JSON object)")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    task = SyntheticTaskSpec(**{k: tuple(v) if isinstance(v, list) else v
                                for k, v in json.loads(args.task).items()})
    cfg = TrainConfig(**json.loads(args.train))
    data = generate_dataset(task)
    learned = train(cfg, data)
    learned.write(out / "learned")

    m_grid, s_grid = default_grid(task, cfg)
    grid = grid_search(cfg, data, m_grid, s_grid, jobs=args.jobs)
    (out / "grid.csv").write_text(grid.csv_text())
    best = next(r for r in grid.table if (r["m"], r["s"]) == grid.best)
    fixed = fixed_values(cfg, data, learned.final_m, learned.final_s)

    rows = [
        ("learned", learned.test_acc, learned.report.m_ms, learned.report.s_hz, learned.report.macs),
        ("grid_best", best["accuracy"], 1000 * best["m"] / task.rate_in,
         best["s"] * task.rate_in / task.n, best["macs"]),
        ("fixed_values", fixed.test_acc, fixed.report.m_ms, fixed.report.s_hz, fixed.report.macs),
    ]
    with (out / "comparison.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "test_acc", "m_ms", "s_hz", "macs"))
        w.writerows(rows)
    for row in rows:
        print("{:<13} acc={:.3f} m={:.1f} ms s={:.0f} Hz macs={}".format(*row))
    return 0


if __name__ == "__main__":
    sys.exit(main())
