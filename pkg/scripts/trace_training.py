"""Print per-epoch m, s, loss and accuracy for one training run.

Keyword overrides for the training config and the task go in as JSON:

    python scripts/trace_training.py --train '{"lam": 1.0}' --task '{"label_noise": 0.0}'
"""

import argparse
import json
import sys

from maskwin import SyntheticTaskSpec, TrainConfig, generate_dataset, train


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train", default="{}", help="TrainConfig overrides (JSON object)")
    ap.add_argument("--task", default="{}", help="SyntheticTaskSpec overrides (JSON object)")
    args = ap.parse_args(argv)
    task = SyntheticTaskSpec(**{k: tuple(v) if isinstance(v, list) else v
                                for k, v in json.loads(args.task).items()})
    run = train(TrainConfig(**json.loads(args.train)), generate_dataset(task))
    print(f"{'epoch':>5} {'m':>7} {'s':>7} {'loss':>8} {'acc':>6} {'macs':>6}")
    for r in run.rows:
        print(f"{r.epoch:>5} {r.m_samples:>7.0f} {r.s_bins:>7.0f} {r.train_loss:>8.4f} "
              f"{r.test_acc:>6.3f} {r.mac_ratio:>6.3f}")
    print(f"final m={run.final_m:.1f} s={run.final_s:.1f} acc={run.test_acc:.3f} "
          f"MAC ratio={run.report.mac_ratio_vs_reference:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
