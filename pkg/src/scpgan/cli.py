"""Command-line entry point: gen-data, train, eval, ablate, check.

Exit codes: 0 success, 1 check failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checks, trainer
from .config import MODES, TrainConfig, load_config
from .data import Manifest, build_manifest, synth_corpus
from .errors import BadCheckpoint, ConfigError, EmptyCorpus, ScpganError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
SUMMARY_METRICS = ("ssnr_noisy", "ssnr_enh", "q_noisy", "q_enh")

log = logging.getLogger("scpgan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed_list(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not seeds or len(set(seeds)) != len(seeds):
        raise argparse.ArgumentTypeError("seeds must be a non-empty list without repeats")
    return seeds


def build_parser():
    p = _Parser(prog="scpgan", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic corpus and its manifest")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--clips", type=int, default=200, help="training clips (test = clips/5)")
    g.add_argument("--seconds", type=float, default=1.0)
    g.add_argument("--sr", type=int, default=16000, choices=(8000, 16000, 48000))
    g.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--config", required=True, type=Path)
    t.add_argument("--mode", choices=list(MODES))
    t.add_argument("--seed", type=int)
    t.add_argument("--out", type=Path, help="run directory (default: config checkpoint_dir)")

    e = sub.add_parser("eval", help="score a checkpoint on one split")
    e.add_argument("--ckpt", required=True, type=Path)
    e.add_argument("--manifest", required=True, type=Path)
    e.add_argument("--split", default="test", choices=("train", "test"))
    e.add_argument("--out", required=True, type=Path)

    a = sub.add_parser("ablate", help="train every ablation mode for each seed")
    a.add_argument("--config", required=True, type=Path)
    a.add_argument("--seeds", type=_seed_list, default=[0, 1, 2])
    a.add_argument("--out", required=True, type=Path)

    c = sub.add_parser("check", help="run the randomized property suites")
    c.add_argument("--suite", default="all", choices=("all", *checks.SUITES))
    c.add_argument("--seed", type=int, help="RNG seed (random if omitted; always printed)")
    return p


def _load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"manifest not found: {path}")
    return Manifest.load(path)


def _config(path):
    if not Path(path).is_file():
        raise UsageError(f"config not found: {path}")
    return load_config(path)


def _manifest_for(cfg: TrainConfig, config_path):
    path = Path(cfg.manifest)
    if not path.is_absolute():
        # Relative manifest paths resolve against the config file first, then the cwd.
        beside = Path(config_path).parent / path
        path = beside if beside.is_file() else path
    return _load_manifest(path)


def cmd_gen_data(args):
    if args.clips < 1 or args.seconds <= 0:
        raise UsageError("--clips must be >= 1 and --seconds > 0")
    info = synth_corpus(args.out, n_clips=args.clips, duration_s=args.seconds,
                        sample_rate=args.sr, seed=args.seed)
    m = build_manifest(args.out, seed=args.seed)
    print(f"corpus {info.root}: {info.n_train} train + {info.n_test} test clips, "
          f"{info.n_noise} noise clips, {info.seconds:.1f} s audio")
    print(f"manifest {args.out / 'manifest.jsonl'} sha256 {m.digest()}")
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args.config)
    if args.mode:
        cfg = cfg.with_mode(args.mode)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    manifest = _manifest_for(cfg, args.config)
    out = args.out or Path(cfg.checkpoint_dir)
    result = trainer.train(cfg, manifest, out_dir=out)
    (Path(out) / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    best = result["best"]
    print(f"mode {cfg.mode.name} seed {cfg.seed}: best epoch {result['best_epoch']}, "
          f"ssnr noisy {best['ssnr_noisy']:.3f} dB, enhanced {best['ssnr_enh']:.3f} dB, "
          f"sc violations {result['sc_violations']}")
    return EXIT_OK


def cmd_eval(args):
    if not args.ckpt.is_file():
        raise UsageError(f"checkpoint not found: {args.ckpt}")
    manifest = _load_manifest(args.manifest)
    rows = trainer.evaluate(args.ckpt, manifest, split=args.split, out_csv=args.out)
    s = trainer.summarize(rows)
    print(f"{len(rows)} {args.split} clips: ssnr noisy {s['ssnr_noisy']:.3f} dB, "
          f"enhanced {s['ssnr_enh']:.3f} dB -> {args.out}")
    return EXIT_OK


def run_ablation(cfg: TrainConfig, manifest: Manifest, seeds, out_dir):
    """Train all modes for all seeds; returns summary rows in reporting order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_path = out_dir / "runs.csv"
    fields = ["mode", "seed", "status", "best_epoch", *SUMMARY_METRICS, "sc_violations", "error"]
    runs = []
    for mode in MODES:
        for seed in seeds:
            run_dir = out_dir / f"{mode}_seed{seed}"
            row = {"mode": mode, "seed": seed}
            try:
                c = dataclasses.replace(cfg.with_mode(mode), seed=seed)
                res = trainer.train(c, manifest, out_dir=run_dir)
                row.update(status="ok", best_epoch=res["best_epoch"], sc_violations=res["sc_violations"],
                           **{k: res["best"][k] for k in SUMMARY_METRICS})
            except (ScpganError, ValueError, OSError) as exc:
                log.error("run %s seed %d failed: %s", mode, seed, exc)
                run_dir.mkdir(parents=True, exist_ok=True)
                row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            runs.append(row)
            log.info("finished %s seed %d (%s)", mode, seed, row["status"])
    _write_csv(runs_path, fields, runs)
    summary = summarize_ablation(runs, seeds)
    cols = ["mode", "n_ok", "n_failed"]
    for k in SUMMARY_METRICS:
        cols += [f"{k}_mean", f"{k}_std"]
    _write_csv(out_dir / "summary.csv", cols, summary)
    return summary


def summarize_ablation(runs, seeds):
    summary = []
    for mode in MODES:
        ok = [r for r in runs if r["mode"] == mode and r["status"] == "ok"]
        row = {"mode": mode, "n_ok": len(ok), "n_failed": len(seeds) - len(ok)}
        for k in SUMMARY_METRICS:
            vals = np.array([r[k] for r in ok], dtype=float)
            row[f"{k}_mean"] = float(vals.mean()) if vals.size else float("nan")
            row[f"{k}_std"] = float(vals.std()) if vals.size else float("nan")
        summary.append(row)
    return summary


def _write_csv(path, fields, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def cmd_ablate(args):
    cfg = _config(args.config)
    manifest = _manifest_for(cfg, args.config)
    summary = run_ablation(cfg, manifest, args.seeds, args.out)
    for row in summary:
        print(f"{row['mode']:<10} ssnr_enh {row['ssnr_enh_mean']:.3f} +/- {row['ssnr_enh_std']:.3f} "
              f"({row['n_ok']} ok, {row['n_failed']} failed)")
    print(f"summary {args.out / 'summary.csv'}")
    return EXIT_OK


def cmd_check(args):
    seed = args.seed if args.seed is not None else int.from_bytes(os.urandom(4), "little")
    print(f"seed {seed}")
    results = checks.run(args.suite, seed)
    for r in results:
        print(r.summary())
        for f in r.failures:
            print(f"  {f}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "ablate": cmd_ablate, "check": cmd_check}


def main(argv=None):
    level = os.environ.get("SCPGAN_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BadCheckpoint, EmptyCorpus, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScpganError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
