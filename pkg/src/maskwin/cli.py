"""``maskwin`` command line: train, grid, gradcheck, report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
from pathlib import Path

from .data import SyntheticTaskSpec
from .gradcheck import run_checks
from .train import DivergenceError, TrainConfig, default_grid, grid_search, train

log = logging.getLogger("maskwin")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

# JSON spelling -> dataclass field, where they differ
_ALIASES = {"train": {"lambda": "lam"}, "task": {}}
_SECTIONS = {"task": SyntheticTaskSpec, "train": TrainConfig}


class ConfigError(ValueError):
    pass


def _coerce(path: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float) or default is None:
        if value is None:
            ok = default is None
        else:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, list) and all(isinstance(v, (int, float)) for v in value)
        if ok:
            value = tuple(value)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{path}: expected {type(default).__name__ if default is not None else 'number or null'}, "
                          f"got {json.dumps(value)}")
    return value


def _section(name: str, raw) -> object:
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        attr = _ALIASES[name].get(key, key)
        if attr not in fields or attr in _ALIASES[name]:
            raise ConfigError(f"unknown config key '{name}.{key}'")
        kwargs[attr] = _coerce(f"{name}.{key}", value, fields[attr].default)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def load_config(path=None, environ=None):
    """(task, train config, out) from a JSON file; missing fields take defaults."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in ("task", "train", "out"):
            raise ConfigError(f"unknown config key '{key}'")
    task = _section("task", raw.get("task", {}))
    cfg = _section("train", raw.get("train", {}))
    seed = (environ if environ is not None else os.environ).get("MASKWIN_SEED")
    if seed is not None:
        try:
            seed = int(seed)
        except ValueError:
            raise ConfigError(f"MASKWIN_SEED must be an integer, got {seed!r}") from None
        task = dataclasses.replace(task, seed=seed)
        cfg = dataclasses.replace(cfg, seed=seed)
    return task, cfg, raw.get("out")


def config_to_json(task: SyntheticTaskSpec, cfg: TrainConfig) -> dict:
    train_part = cfg.to_dict()
    train_part["lambda"] = train_part.pop("lam")
    return {"task": task.to_dict(), "train": train_part}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(args, config_out) -> Path:
    out = args.out or config_out
    if not out:
        raise ConfigError("no output directory: pass --out or set \"out\" in the config")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    task, cfg, out = load_config(args.config)
    out = _out_dir(args, out)
    run = train(cfg, task)
    run.write(out)
    _write_json(out / "resolved_config.json", config_to_json(task, cfg.resolve(task)))
    print(f"final m={run.final_m:.1f} samples, s={run.final_s:.1f} bins, "
          f"test acc={run.test_acc:.3f}, MAC ratio={run.report.mac_ratio_vs_reference:.3f}")
    return EXIT_OK


def _parse_grid(text, name):
    if text is None:
        return None
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigError(f"--{name}: empty grid")
    return values


def cmd_grid(args) -> int:
    task, cfg, out = load_config(args.config)
    m_grid = _parse_grid(args.m_grid, "m-grid")
    s_grid = _parse_grid(args.s_grid, "s-grid")
    dm, ds = default_grid(task, cfg)
    m_grid = m_grid if m_grid is not None else dm
    s_grid = s_grid if s_grid is not None else ds
    out = _out_dir(args, out)
    try:
        result = grid_search(cfg, task, m_grid, s_grid, jobs=args.jobs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    (out / "grid.csv").write_text(result.csv_text())
    best = next(r for r in result.table if (r["m"], r["s"]) == result.best)
    _write_json(out / "best.json", {"m": best["m"], "s": best["s"], "accuracy": best["accuracy"],
                                    "mac_ratio": best["mac_ratio"], "macs": best["macs"]})
    print(f"best m={best['m']:.1f} s={best['s']:.1f} acc={best['accuracy']:.3f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    def show(r):
        print(f"{r.name:<20} max_rel={r.max_rel:.3e} tol={r.tol:.0e} cases={r.cases} "
              f"{'ok' if r.passed else 'FAIL'}", flush=True)

    try:
        results = run_checks(args.seed, corrupt=args.corrupt, report=show)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("gradcheck failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def _last_row(run_dir: Path) -> dict:
    path = run_dir / "runlog.csv"
    if not path.is_file():
        raise ConfigError(f"missing runlog: {path}")
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    if not rows:
        raise ConfigError(f"empty runlog: {path}")
    return rows[-1]


def _run_lambda(run_dir: Path):
    path = run_dir / "resolved_config.json"
    if not path.is_file():
        return None
    return float(json.loads(path.read_text())["train"]["lambda"])


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_report(args) -> int:
    runs = [Path(d) for d in args.run]
    finals = [(d, _last_row(d), _run_lambda(d)) for d in runs]
    out = _out_dir(args, None)
    _write_csv(out / "tradeoff.csv", ("run", "m_ms", "s_hz", "test_acc", "mac_ratio"),
               [(str(d), r["m_ms"], r["s_hz"], r["test_acc"], r["mac_ratio"]) for d, r, _ in finals])
    sweep = sorted(((lam, str(d), r) for d, r, lam in finals if lam is not None), key=lambda t: t[:2])
    for d, _, lam in finals:
        if lam is None:
            log.warning("%s has no resolved_config.json; left out of penalty_sweep.csv", d)
    _write_csv(out / "penalty_sweep.csv", ("lambda", "run", "m_ms", "s_hz", "test_acc"),
               [(repr(lam), d, r["m_ms"], r["s_hz"], r["test_acc"]) for lam, d, r in sweep])
    print(f"wrote {out / 'tradeoff.csv'} ({len(finals)} rows) and {out / 'penalty_sweep.csv'} ({len(sweep)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskwin", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train backbone, window length and cutoff jointly")
    p.add_argument("--config", help="JSON config (defaults when omitted)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="fixed-(m, s) grid-search baseline")
    p.add_argument("--config")
    p.add_argument("--m-grid", help="comma-separated window lengths in samples")
    p.add_argument("--s-grid", help="comma-separated cutoffs in bins")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="collect finished runs into plot-ready CSV")
    p.add_argument("--run", nargs="+", required=True, metavar="DIR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"maskwin {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"maskwin {args.command}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
