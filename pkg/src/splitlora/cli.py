"""Command-line entry point: ``run``, ``sweep-alpha`` and ``theory``.

Exit codes: 0 success, 1 runtime failure (or a failed theory check), 2 bad
arguments or configuration. Outputs go to ``--out-dir`` when given, else to
a hash-named folder under ``$SPLITLORA_OUT`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics, theory
from .config import ExperimentConfig, canonical_json, load_config
from .errors import ConfigError
from .gradmem import save_memory
from .linalg import atomic_write_text
from .lora import save_stacks
from .tasks import stream_from_config
from .trainer import RunResult, run_stream

SCHEMA_VERSION = 1
OUT_ENV = "SPLITLORA_OUT"

log = logging.getLogger("splitlora")


# --- output helpers ----------------------------------------------------------


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


class OutputDir:
    """Collects every file written for one command so the manifest can hash them."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.written: list[str] = []

    def write_text(self, rel: str, text: str) -> None:
        atomic_write_text(self.root / rel, text)
        self.written.append(rel)

    def write_json(self, rel: str, obj) -> None:
        self.write_text(rel, _json_text(obj))

    def write_csv(self, rel: str, header: list[str], rows) -> None:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join("" if v is None else (repr(float(v)) if isinstance(v, float) else str(v))
                                  for v in row))
        self.write_text(rel, "\n".join(lines) + "\n")

    def adopt_tree(self, rel_dir: str) -> None:
        """Register files another writer placed under ``rel_dir``."""
        base = self.root / rel_dir
        for p in sorted(base.rglob("*")):
            if p.is_file():
                self.written.append(p.relative_to(self.root).as_posix())

    def write_manifest(self, command: str, cfg: ExperimentConfig, extra: dict | None = None) -> None:
        files = {}
        for rel in sorted(set(self.written)):
            files[rel] = hashlib.sha256((self.root / rel).read_bytes()).hexdigest()
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "config": cfg.to_dict(),
            "config_hash": cfg.content_hash(),
            "seeds": list(cfg.seeds),
            "files": files,
            **(extra or {}),
        }
        atomic_write_text(self.root / "manifest.json", _json_text(manifest))


def resolve_out_dir(arg: str | None, label: str, cfg_hash: str) -> Path:
    if arg:
        return Path(arg)
    root = Path(os.environ.get(OUT_ENV, "runs"))
    return root / f"{label}-{cfg_hash[:12]}"


# --- experiment plumbing -----------------------------------------------------


def run_seed(cfg: ExperimentConfig, seed: int) -> RunResult:
    stream = stream_from_config(cfg.stream_config(seed))
    return run_stream(stream, cfg.train, seed=seed, net_cfg=cfg.network)


def _round_floats(obj):
    """Recursively convert numpy scalars so JSON output is stable."""
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_run_outputs(out: OutputDir, prefix: str, results: list[RunResult]) -> dict:
    """Per-seed artifacts under ``prefix``; returns the aggregated summary."""
    summaries = []
    for res in results:
        s = res.seed
        summaries.append({"seed": s, **res.summary})
        out.write_csv(f"{prefix}accuracy/seed{s}.csv", ["task", "after_task", "accuracy"],
                      [(i, j, res.accuracy.get(i, j)) for j in range(1, res.accuracy.T + 1)
                       for i in range(1, j + 1)])
        for rep in res.reports:
            records = [{"layer": p.layer, "t": p.t, "sigma": p.sigma, "k_split": p.k_split,
                        "k_threshold": p.k_threshold, "epsilon_at_k": p.epsilon_at_k}
                       for p in rep.partitions]
            out.write_json(f"{prefix}partitions/seed{s}/task{rep.task}.json", _round_floats(records))
        ck = f"{prefix}checkpoints/seed{s}"
        save_memory(out.root / ck / "gradmem", res.memory)
        save_stacks(out.root / ck / "adapters",
                    {lid: layer.adapters for lid, layer in zip(res.net.layer_ids(), res.net.layers)})
        out.adopt_tree(ck)
    out.write_csv(f"{prefix}metrics.csv", ["seed", "faa", "caa", "forgetting", "plasticity"],
                  [(d["seed"], d["faa"], d["caa"], d["forgetting"], d["plasticity"]) for d in summaries])
    agg = metrics.aggregate([{k: v for k, v in d.items() if k != "seed"} for d in summaries])
    return {"per_seed": summaries, "aggregate": agg}


def execute_run(cfg: ExperimentConfig, out: OutputDir, prefix: str = "") -> dict:
    results = []
    for seed in cfg.seeds:
        log.info("seed %d: %s alpha=%g", seed, cfg.train.method, cfg.train.alpha)
        results.append(run_seed(cfg, seed))
    summary = write_run_outputs(out, prefix, results)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "runs": [_round_floats(r.to_dict()) for r in results],
        **summary,
    }
    out.write_json(f"{prefix}results.json", payload)
    out.write_json(f"{prefix}metrics.json", {"schema_version": SCHEMA_VERSION, **summary})
    return {"results": results, **summary}


# --- commands ----------------------------------------------------------------


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seeds([args.seed])
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out_dir = resolve_out_dir(args.out_dir, Path(args.config).stem, cfg.content_hash())
    if args.dry_run:
        print(_json_text({"command": "run", "out_dir": str(out_dir), "config": cfg.to_dict()}), end="")
        return 0
    out = OutputDir(out_dir)
    summary = execute_run(cfg, out)
    out.write_manifest("run", cfg)
    agg = summary["aggregate"]
    print(f"{out_dir}: FAA {agg['faa']['mean']:.4f} CAA {agg['caa']['mean']:.4f} "
          f"forgetting {agg['forgetting']['mean']:.4f}")
    return 0


def parse_alphas(values) -> list[float]:
    alphas = [float(v) for v in values]
    if len(set(alphas)) != len(alphas):
        raise ConfigError(f"duplicate alpha values in {values}")
    if any(not np.isfinite(a) or a <= 0 for a in alphas):
        raise ConfigError("alpha values must be positive and finite")
    return alphas


def cmd_sweep_alpha(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    alphas = parse_alphas(args.alphas)
    if cfg.train.method != "split":
        raise ConfigError(f"sweep-alpha needs trainer.method 'split', got {cfg.train.method!r}")
    sweep_hash = hashlib.sha256((cfg.content_hash() + canonical_json(alphas)).encode()).hexdigest()
    out_dir = resolve_out_dir(args.out_dir, Path(args.config).stem + "-sweep", sweep_hash)
    if args.dry_run:
        print(_json_text({"command": "sweep-alpha", "alphas": alphas, "out_dir": str(out_dir),
                          "config": cfg.to_dict()}), end="")
        return 0
    out = OutputDir(out_dir)
    if len(alphas) == 1:
        one = cfg.with_alpha(alphas[0])
        execute_run(one, out)
        out.write_manifest("run", one, {"alphas": alphas})
        return 0

    per_alpha = {}
    matrices = {}
    for a in alphas:
        sub = execute_run(cfg.with_alpha(a), out, prefix=f"alpha_{a:g}/")
        per_alpha[a] = sub["aggregate"]
        matrices[a] = [r.accuracy for r in sub["results"]]
    baseline = 1.0 if 1.0 in alphas else min(alphas)
    curves = metrics.relative_curves(matrices, baseline_alpha=baseline)
    rows = []
    for a in alphas:
        agg, c = per_alpha[a], curves[a]
        rows.append((a, agg["faa"]["mean"], agg["faa"]["std"], agg["caa"]["mean"], agg["caa"]["std"],
                     c["forgetting"], c["plasticity"], c["relative_forgetting"], c["relative_plasticity"]))
    out.write_csv("alpha_curves.csv", ["alpha", "faa_mean", "faa_std", "caa_mean", "caa_std", "forgetting",
                                       "plasticity", "relative_forgetting", "relative_plasticity"], rows)
    faa_means = [per_alpha[a]["faa"]["mean"] for a in alphas]
    out.write_json("results.json", {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.content_hash(),
        "alphas": alphas,
        "baseline_alpha": baseline,
        "per_alpha": {f"{a:g}": per_alpha[a] for a in alphas},
        "relative_curves": {f"{a:g}": curves[a] for a in alphas},
        "faa_spread": max(faa_means) - min(faa_means),
    })
    out.write_manifest("sweep-alpha", cfg, {"alphas": alphas})
    for a, row in zip(alphas, rows):
        print(f"alpha {a:g}: FAA {row[1]:.4f} forgetting {row[5]:.4f} plasticity {row[6]:.4f}")
    return 0


def cmd_theory(args) -> int:
    try:
        cfg = theory.TheoryProbeConfig(prop_trials=args.trials, seed=args.seed if args.seed is not None else 0,
                                       tolerance_scale=args.tolerance_scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out_dir = Path(args.out_dir) if args.out_dir else Path(os.environ.get(OUT_ENV, "runs")) / "theory"
    if args.dry_run:
        print(_json_text({"command": "theory", "out_dir": str(out_dir),
                          "probe": theory.config_dict(cfg)}), end="")
        return 0
    report = theory.run_all(cfg)
    atomic_write_text(out_dir / "theory_report.json", _json_text(_round_floats(report.to_dict())))
    for c in report.checks[1:]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="run only this seed (overrides the config)")
    common.add_argument("--out-dir", default=None, help=f"output directory (default: under ${OUT_ENV} or ./runs)")
    common.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="splitlora", description="Continual learning with subspace-split LoRA.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="train every seed of a configuration")
    p.add_argument("config", help="JSON configuration file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-alpha", parents=[common], help="repeat a run over several alpha values")
    p.add_argument("config", help="JSON configuration file")
    p.add_argument("--alphas", nargs="+", required=True, type=float, help="alpha values, no duplicates")
    p.set_defaults(func=cmd_sweep_alpha)

    p = sub.add_parser("theory", parents=[common], help="run the numerical theory probes")
    p.add_argument("--trials", type=int, default=1000, help="random instances for the loss bound")
    p.add_argument("--tolerance-scale", type=float, default=1.0,
                   help="multiply every probe tolerance (0 demands exact equality)")
    p.set_defaults(func=cmd_theory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        where = getattr(args, "config", None)
        print(f"error: {where + ': ' if where else ''}{exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any failure after validation is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
