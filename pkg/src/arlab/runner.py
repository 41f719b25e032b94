"""Run directories: manifest, metrics CSV, checkpoints, final evaluation.

A run directory is named ``<method>-s<seed>-<config hash>``. Re-running the same
(config, seed) into the same output root resumes from the newest checkpoint, or
returns the stored summary when the run already finished.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import checkpoint
from .arl import METRIC_FIELDS, ArlTrainer
from .config import config_hash, validate
from .evaluation import evaluate_scenarios, evaluate_uniform, exploration_footprint, write_heatmap
from .rng import rng_stream

log = logging.getLogger(__name__)

SUMMARY = "summary.json"
MANIFEST = "manifest.json"
METRICS = "metrics.csv"
TAIL_EPISODES = 100


def artifact_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def run_name(config: dict) -> str:
    return f"{config.get('method', 'run')}-s{config.get('seed', 0)}-{config_hash(config)}"


def _format(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


class MetricsWriter:
    """Appends one CSV row per episode; floats are written with repr so they round-trip."""

    def __init__(self, path: Path, keep_episodes: int = 0):
        self.path = path
        if keep_episodes and path.exists():
            # resume: drop rows written after the checkpoint being resumed from
            with open(path, encoding="utf-8") as f:
                lines = f.readlines()
            with open(path, "w", encoding="utf-8") as f:
                f.writelines(lines[: 1 + keep_episodes])
            self.f = open(path, "a", newline="", encoding="utf-8")
        else:
            self.f = open(path, "w", newline="", encoding="utf-8")
            self.f.write(",".join(METRIC_FIELDS) + "\n")
        self.w = csv.writer(self.f, lineterminator="\n")

    def __call__(self, row: dict):
        self.w.writerow([_format(row[k]) for k in METRIC_FIELDS])

    def flush(self):
        self.f.flush()

    def close(self):
        self.f.close()


def read_metrics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def build_trainer(config: dict, metrics_sink=None) -> ArlTrainer:
    env, prot, adv, arl = validate(config)
    return ArlTrainer(env, arl, prot, adv, seed=int(config.get("seed", 0)), metrics_sink=metrics_sink)


def _latest_checkpoint(ckpt_dir: Path):
    found = sorted(ckpt_dir.glob("iter_*.ckpt"))
    return found[-1] if found else None


def training_tail(rows, n=TAIL_EPISODES) -> dict:
    """Mean return and success over the final ``n`` protagonist-phase episodes."""
    rows = [r for r in rows if r["phase"] == "P"][-n:]
    if not rows:
        return {"episodes": 0, "mean_return": float("nan"), "success_rate": float("nan")}
    rets = [float(r["return"]) for r in rows]
    succ = [r["cause"] == "success" for r in rows]
    return {"episodes": len(rows), "mean_return": float(np.mean(rets)), "success_rate": 100.0 * float(np.mean(succ))}


def evaluate_trainer(trainer: ArlTrainer, config: dict, out: Path, seed=None) -> dict:
    """Fresh deterministic-policy evaluation of the protagonist; writes files under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    ev = config.get("eval", {})
    seed = int(config.get("seed", 0) if seed is None else seed)
    rng = rng_stream(seed, "eval")
    env = trainer.env
    result = {}
    if config["env"]["kind"] == "maze":
        grid = evaluate_uniform(trainer.protagonist, env, int(ev.get("n_per_cell", 5)), rng)
        write_heatmap(grid, out / "eval_uniform")
        result["uniform"] = {"mean_return": grid.overall_return(), "success_rate": grid.overall_success()}
    else:
        trials = int(ev.get("trials", 100))
        for name, scen in (("train", env.train_set), ("test", env.test_set)):
            if not scen:
                continue
            summary, _, _ = evaluate_scenarios(trainer.protagonist, env, scen, trials, rng)
            result[name] = {"mean_return": summary.mean_return, "success_rate": summary.success_rate}
    return result


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run(config: dict, out_root, resume: bool = True) -> Path:
    """Train (or resume) one run and write its directory; returns the directory path."""
    build_trainer(config)  # validate before touching the filesystem
    run_dir = Path(out_root) / run_name(config)
    if resume and (run_dir / SUMMARY).exists():
        log.info("%s already finished", run_dir)
        return run_dir
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    _write_json(run_dir / MANIFEST, {
        "config": config,
        "seed": int(config.get("seed", 0)),
        "config_hash": config_hash(config),
        "artifact_version": artifact_version(),
        "metrics_fields": METRIC_FIELDS,
    })

    trainer = build_trainer(config)
    latest = _latest_checkpoint(ckpt_dir) if resume else None
    if latest is not None:
        checkpoint.load_trainer(latest, trainer)
        log.info("resuming %s from %s (iteration %d)", run_dir.name, latest.name, trainer.iteration)
    writer = MetricsWriter(run_dir / METRICS, keep_episodes=trainer.log.episodes if latest else 0)
    trainer.metrics_sink = writer
    every = int(config.get("checkpoint_every", 0) or 0)

    def on_iteration_end(tr):
        if every and tr.iteration % every == 0 and tr.iteration < tr.config.N:
            writer.flush()
            path = checkpoint.save_trainer(ckpt_dir / f"iter_{tr.iteration:06d}.ckpt", tr, {"config": config})
            for old in ckpt_dir.glob("iter_*.ckpt"):
                if old != path:
                    old.unlink()

    trainer.on_iteration_end = on_iteration_end
    t0 = time.time()
    try:
        trainer.train()
    finally:
        writer.close()
    checkpoint.save_trainer(ckpt_dir / "final.ckpt", trainer, {"config": config})
    for old in ckpt_dir.glob("iter_*.ckpt"):
        old.unlink()

    rows = read_metrics(run_dir / METRICS)
    summary = {
        "method": config.get("method", "run"),
        "seed": int(config.get("seed", 0)),
        "config_hash": config_hash(config),
        "env": config["env"]["kind"],
        "episodes": trainer.log.episodes,
        "train_seconds": round(time.time() - t0, 1),
        "training_tail": training_tail(rows),
        "phase_log": trainer.log.as_dict(),
    }
    if trainer.visits is not None:
        visits = trainer.visits
        summary["footprint"] = exploration_footprint(visits, trainer.env.grid)
        np.savetxt(run_dir / "visits.csv", visits, fmt="%d", delimiter=",")
    if config.get("eval", {}).get("at_end", True):
        summary["eval"] = evaluate_trainer(trainer, config, run_dir / "eval")
    _write_json(run_dir / SUMMARY, summary)
    return run_dir


def load_summary(run_dir) -> dict:
    with open(Path(run_dir) / SUMMARY, encoding="utf-8") as f:
        return json.load(f)


def trainer_from_checkpoint(path, config=None):
    """Rebuild the trainer recorded in a checkpoint; ``config`` overrides the stored one."""
    meta, arrays = checkpoint.load(path)
    config = config or meta.get("config")
    if config is None:
        raise checkpoint.CheckpointError(f"{path}: checkpoint carries no config; pass --config")
    trainer = build_trainer(config)
    checkpoint.check_compatible(meta, trainer)
    trainer.load_state(meta, arrays)
    return trainer, config
