"""Command-line entry point: ``nmpa {train,eval,sweep,gen-data,gradcheck}``.

Run directories are created under ``$NMPA_RUN_ROOT`` (default ``./runs``)
unless the config sets ``output_dir`` or ``--run-dir`` is given. Every run
directory holds the resolved ``config.yaml`` it was produced from.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from .config import ConfigError, RunConfig, config_hash, dump_config, load_config

log = logging.getLogger("nmpa")

RUN_ROOT_ENV = "NMPA_RUN_ROOT"


class CliError(Exception):
    pass


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.field=value")
    key, raw = text.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def resolve_config(path, overrides: List[str] = (), episodes: Optional[int] = None) -> RunConfig:
    """Load a YAML config and apply ``section.field=value`` overrides."""
    data = load_config(path).to_dict()
    for item in overrides:
        keys, value = _parse_override(item)
        node = data
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise ConfigError(f"unknown config section {'.'.join(keys[:-1])}")
            node = node[k]
        node[keys[-1]] = value
    if episodes is not None:
        data["train"]["max_episodes"] = episodes
    return RunConfig.from_dict(data)


def _run_dir(cfg: RunConfig, explicit: Optional[str]) -> Path:
    if explicit:
        return Path(explicit)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    root = Path(os.environ.get(RUN_ROOT_ENV, "runs"))
    return root / f"run-{config_hash(cfg)[:12]}"


def cmd_train(args) -> int:
    from .td3 import resume_agent, train

    cfg = resolve_config(args.config, args.set, args.episodes)
    out = _run_dir(cfg, args.run_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    agent, start = None, 0
    if args.resume:
        ckpt = out / "last"
        if not ckpt.with_suffix(".npz").is_file():
            raise CliError(f"--resume: no checkpoint at {ckpt}.npz")
        agent, manifest = resume_agent(cfg, ckpt)
        start = int(manifest["episode"])
        log.info("resuming from episode %d", start)

    def progress(rec):
        print(json.dumps({k: rec[k] for k in ("episode", "mean_sum_rate", "violations_per_tx")}),
              flush=True)

    _, report = train(cfg, agent, out_dir=out, start_episode=start, progress=progress)
    if not report.records:
        (out / "train_report.jsonl").touch()
    print(f"run directory: {out}")
    print(f"episodes: {report.episodes}  best episode: {report.best_episode}  "
          f"best validation sum-rate: {report.best_sum_rate}")
    return 0


def _load_actor(args, cfg: RunConfig):
    from .policy import load_checkpoint

    nets, manifest, _ = load_checkpoint(args.checkpoint, cfg.network, cfg.env.B_max,
                                        expected_hash=config_hash(cfg), force=args.force,
                                        alpha=cfg.env.alpha)
    return nets["actor"]


def _eval_config(args) -> RunConfig:
    path = args.config
    if path is None:
        path = Path(args.checkpoint).parent / "config.yaml"
    return resolve_config(path, args.set)


def _lengths(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"--lengths expects comma-separated integers, got {text!r}")


def cmd_eval(args) -> int:
    from .evaluation import (compare, scale_histogram, sweep_lengths, write_histogram_csv,
                             write_summary_json, write_sweep_csv, write_trajectories_csv)

    cfg = _eval_config(args)
    actor = _load_actor(args, cfg)
    n = cfg.eval.episodes if args.episodes is None else args.episodes
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "eval"
    out.mkdir(parents=True, exist_ok=True)
    rep = compare(cfg, actor, n, args.length)
    summary = {**rep.summary(), "config_hash": config_hash(cfg), "checkpoint": str(args.checkpoint)}
    write_summary_json(summary, out / "summary.json")
    write_trajectories_csv(rep, out / "trajectories.csv")
    write_histogram_csv(scale_histogram(rep.nmpa, cfg.env.B_max, cfg.eval.hist_bins), out / "histogram.csv")
    lengths = _lengths(args.lengths)
    if lengths:
        write_sweep_csv(sweep_lengths(cfg, actor, lengths, n), out / "sweep.csv")
    s = summary
    print(f"episodes {s['episodes']}, T {s['T']}: NMPA {s['nmpa_episodic_sum_rate']['mean']:.4f}  "
          f"MPA {s['mpa_episodic_sum_rate']['mean']:.4f}  "
          f"improvement {100 * s['relative_improvement']['mean']:.2f}%  "
          f"violations/tx {s['nmpa_violations_per_tx']:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    from .evaluation import sweep_lengths, write_sweep_csv

    cfg = _eval_config(args)
    actor = _load_actor(args, cfg)
    n = cfg.eval.episodes if args.episodes is None else args.episodes
    lengths = _lengths(args.lengths) or list(cfg.eval.lengths)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "eval"
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_lengths(cfg, actor, lengths, n)
    write_sweep_csv(rows, out / "sweep.csv")
    for r in rows:
        print(f"T={r['length']:4d}  NMPA {r['nmpa_mean']:.4f}  MPA {r['mpa_mean']:.4f}  "
              f"improvement {100 * r['improvement_mean']:.2f}%")
    return 0


def cmd_gen_data(args) -> int:
    from .network import write_episodes_jsonl
    from .td3 import make_episode

    cfg = resolve_config(args.config, args.set)
    T = cfg.env.T if args.T is None else args.T
    eps = (make_episode(cfg, args.split, k, T)[0] for k in range(args.n))
    n = write_episodes_jsonl(eps, args.out)
    print(f"wrote {n} episodes of length {T} to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    res = run_gradcheck(args.instances, seed=args.seed)
    print(f"instances {res['instances']}  max relative error {res['max_relative_error']:.3e}")
    return 0 if res["max_relative_error"] < args.tol else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmpa", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add_set(sp):
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                        help="override a config field (repeatable)")

    t = sub.add_parser("train", help="train a policy and write a run directory")
    t.add_argument("config")
    t.add_argument("--episodes", type=int, help="override train.max_episodes")
    t.add_argument("--run-dir")
    t.add_argument("--resume", action="store_true", help="continue from <run-dir>/last")
    add_set(t)
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "paired NMPA/MPA evaluation"),
                                 ("sweep", cmd_sweep, "episode-length generalization table")):
        e = sub.add_parser(name, help=helptext)
        e.add_argument("checkpoint", help="checkpoint path without suffix, e.g. runs/x/best")
        e.add_argument("--config", help="defaults to config.yaml next to the checkpoint")
        e.add_argument("--episodes", type=int)
        e.add_argument("--lengths", help="comma-separated episode lengths")
        e.add_argument("--out")
        e.add_argument("--force", action="store_true", help="ignore a config-hash mismatch")
        if name == "eval":
            e.add_argument("--length", type=int, help="episode length of the headline comparison")
        add_set(e)
        e.set_defaults(func=func)

    g = sub.add_parser("gen-data", help="export episodes as JSONL")
    g.add_argument("config")
    g.add_argument("-T", type=int)
    g.add_argument("-n", type=int, default=10)
    g.add_argument("--split", default="test")
    g.add_argument("--out", required=True)
    add_set(g)
    g.set_defaults(func=cmd_gen_data)

    c = sub.add_parser("gradcheck", help="finite-difference check of actor/critic gradients")
    c.add_argument("--instances", type=int, default=50)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tol", type=float, default=1e-4)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .policy import CheckpointError

    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
