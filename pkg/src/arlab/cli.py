"""Command-line entry point: ``arl train | sweep | eval | heatmap | compare | config``."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import report, runner
from .config import apply_overrides, default_config, load_config
from .errors import ArlError, ConfigError, DivergenceError
from .evaluation import evaluate_scenarios, evaluate_uniform, write_heatmap
from .rng import rng_stream

log = logging.getLogger("arlab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


def _resolve_config(args) -> dict:
    if args.config and args.preset:
        raise ConfigError("--config", "give either --config or --preset, not both")
    if args.preset:
        env_kind, _, method = args.preset.partition("/")
        config = default_config(env_kind, method or "asac10")
    elif args.config:
        config = load_config(args.config)
    else:
        raise ConfigError("--config", "a config file (or --preset env/method) is required")
    config = apply_overrides(config, args.override)
    if args.seed is not None:
        config["seed"] = args.seed
    return config


def cmd_train(args) -> int:
    config = _resolve_config(args)
    run_dir = runner.run(config, args.out or "runs", resume=not args.fresh)
    print(run_dir)
    print(json.dumps(runner.load_summary(run_dir).get("eval", {}), sort_keys=True))
    return EXIT_OK


def parse_axis(spec: str):
    """``K=10,100`` or ``H_A=1,5`` or any ``dotted.key=v1,v2``."""
    if "=" not in spec:
        raise ConfigError("--axis", f"expected name=v1,v2,..., got {spec!r}")
    name, values = spec.split("=", 1)
    vals = [json.loads(v) if v.strip().lstrip("-").replace(".", "", 1).isdigit() else v.strip() for v in values.split(",")]
    if not vals or any(v == "" for v in vals):
        raise ConfigError("--axis", f"empty value list in {spec!r}")
    return name.strip(), vals


def sweep_configs(base: dict, axes, budget=None, seeds=None) -> list[dict]:
    """One config per grid point; the episode budget stays fixed so N follows K_A + K_P."""
    names = [a[0] for a in axes]
    out = []
    for combo in itertools.product(*[a[1] for a in axes]) if axes else [()]:
        overrides, tags = [], []
        for name, value in zip(names, combo):
            if name == "K":
                overrides += [f"arl.K_A={value}", f"arl.K_P={value}"]
            elif name == "H_A":
                overrides.append(f"arl.H_A={value}")
            else:
                overrides.append(f"{name}={json.dumps(value)}")
            tags.append(f"{name.split('.')[-1].replace('_', '')}{value}")
        config = apply_overrides(base, overrides)
        if budget is not None or combo:
            config["arl"]["N"] = None
            if budget is not None:
                config["arl"]["episode_budget"] = budget
        if tags:
            config["method"] = "_".join([config.get("method", "run")] + tags)
        for seed in seeds if seeds is not None else [config.get("seed", 0)]:
            out.append(dict(config, seed=seed))
    return out


def _run_one(item):
    config, out = item
    return str(runner.run(config, out))


def cmd_sweep(args) -> int:
    base = _resolve_config(args)
    axes = [parse_axis(a) for a in args.axis]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    configs = sweep_configs(base, axes, args.budget, seeds)
    for c in configs:
        runner.build_trainer(c)  # validate every point first
    items = [(c, args.out or "runs") for c in configs]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            dirs = list(pool.map(_run_one, items))
    else:
        dirs = [_run_one(i) for i in items]
    print("\n".join(dirs))
    return EXIT_OK


def cmd_eval(args, mode=None) -> int:
    mode = mode or args.mode
    config = _resolve_config(args) if (args.config or args.preset) else None
    trainer, config = runner.trainer_from_checkpoint(args.checkpoint, config)
    if args.override and not (args.config or args.preset):
        config = apply_overrides(config, args.override)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    out = Path(args.out or Path(args.checkpoint).parent.parent / "eval")
    out.mkdir(parents=True, exist_ok=True)
    rng = rng_stream(seed, "eval")
    ev = config.get("eval", {})
    env = trainer.env
    if mode == "uniform":
        if config["env"]["kind"] != "maze":
            raise ConfigError("--mode", "uniform evaluation is defined for the maze only; use --mode scenarios")
        grid = evaluate_uniform(trainer.protagonist, env, int(ev.get("n_per_cell", 5)), rng)
        csv_path, pgm_path = write_heatmap(grid, out / "eval_uniform")
        result = {"uniform": {"mean_return": grid.overall_return(), "success_rate": grid.overall_success()}}
        print(csv_path)
        print(pgm_path)
    else:
        if config["env"]["kind"] != "disentangle2d":
            raise ConfigError("--mode", "scenario evaluation needs the disentangle2d environment")
        result = {}
        for name, scen in (("train", env.train_set), ("test", env.test_set)):
            if not scen:
                continue
            summary, returns, successes = evaluate_scenarios(trainer.protagonist, env, scen, int(ev.get("trials", 100)), rng)
            result[name] = {"mean_return": summary.mean_return, "success_rate": summary.success_rate}
            with open(out / f"eval_{name}_trials.csv", "w", encoding="utf-8") as f:
                f.write("trial,return,success\n")
                for k, (r, s) in enumerate(zip(returns, successes)):
                    f.write(f"{k},{float(r)!r},{int(s)}\n")
    (out / f"eval_{mode}.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    summaries, missing = report.collect(args.runs)
    if not summaries:
        raise ConfigError("runs", "none of the given directories holds a summary")
    names, table = report.method_table(summaries)
    text = report.format_table(names, table)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.txt").write_text(text, encoding="utf-8")
        report.write_table_csv(names, table, out / "compare.csv")
    return EXIT_OK


def cmd_config(args) -> int:
    print(json.dumps(_resolve_config(args), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config (JSON)")
    common.add_argument("--preset", help="built-in config, e.g. maze/asac10 or disentangle2d/sac")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, repeatable (e.g. arl.K_A=100)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="arl", description="Adversarial RL training lab")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train one run")
    t.add_argument("--fresh", action="store_true", help="ignore existing checkpoints in the run directory")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", parents=[common], help="one run per grid point at a fixed episode budget")
    s.add_argument("--axis", action="append", default=[], help="e.g. K=10,100,1000 or H_A=1,5,20")
    s.add_argument("--budget", type=int, help="total episodes per run (default: the config's)")
    s.add_argument("--seeds", help="comma-separated seeds")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--mode", choices=["uniform", "scenarios"], required=True)
    e.set_defaults(func=cmd_eval)

    h = sub.add_parser("heatmap", parents=[common], help="alias of eval --mode uniform")
    h.add_argument("--checkpoint", required=True)
    h.set_defaults(func=lambda a: cmd_eval(a, mode="uniform"))

    c = sub.add_parser("compare", parents=[common], help="combine run summaries into a table")
    c.add_argument("runs", nargs="+")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("config", parents=[common], help="print the resolved config")
    g.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ArlError, FloatingPointError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
