"""Combine per-run summaries into a method table (mean ± standard error across runs)."""
from __future__ import annotations

import csv
import logging
from collections import defaultdict
from pathlib import Path

from .evaluation import MethodSummary, summarize
from .runner import SUMMARY, load_summary

log = logging.getLogger(__name__)


def collect(run_dirs):
    """Load summaries; directories without one are reported and skipped."""
    found, missing = [], []
    for d in run_dirs:
        if (Path(d) / SUMMARY).exists():
            found.append(load_summary(d))
        else:
            missing.append(str(d))
            log.warning("no %s in %s; skipped", SUMMARY, d)
    return found, missing


def _metric_sets(summary: dict) -> dict:
    sets = {f"eval:{k}": v for k, v in summary.get("eval", {}).items()}
    sets["train_tail"] = summary["training_tail"]
    return sets


def method_table(summaries) -> tuple[list[str], dict[str, dict[str, MethodSummary]]]:
    """Group by method. Returns (metric set names, {method: {set: MethodSummary}})."""
    per = defaultdict(lambda: defaultdict(lambda: ([], [])))
    names = set()
    for s in summaries:
        for key, vals in _metric_sets(s).items():
            names.add(key)
            rets, succ = per[s["method"]][key]
            rets.append(vals["mean_return"])
            succ.append(vals["success_rate"])
    table = {
        m: {k: summarize(m, r, sr) for k, (r, sr) in sets.items()}
        for m, sets in per.items()
    }
    return sorted(names), dict(sorted(table.items()))


def _columns(set_names):
    cols = []
    for k in set_names:
        cols += [(k, "return"), (k, "success")]
    return cols


def _cell_value(ms: MethodSummary, what):
    return (ms.mean_return, ms.return_stderr) if what == "return" else (ms.success_rate, ms.success_stderr)


def _maxima(set_names, table):
    best = {}
    for col in _columns(set_names):
        vals = [_cell_value(t[col[0]], col[1])[0] for t in table.values() if col[0] in t]
        best[col] = max(vals) if vals else None
    return best


def format_table(set_names, table) -> str:
    """Aligned text table; '*' marks the best method in each column."""
    cols = _columns(set_names)
    best = _maxima(set_names, table)
    header = ["method", "runs"] + [f"{k} {what}" for k, what in cols]
    rows = []
    for m, sets in table.items():
        runs = max(s.n_runs for s in sets.values())
        row = [m, str(runs)]
        for col in cols:
            if col[0] not in sets:
                row.append("-")
                continue
            mean, se = _cell_value(sets[col[0]], col[1])
            fmt = "{:.2f} ± {:.2f}" if col[1] == "success" else "{:.3f} ± {:.3f}"
            row.append(fmt.format(mean, se) + ("*" if mean == best[col] else ""))
        rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + rows]
    return "\n".join(lines) + "\n"


def write_table_csv(set_names, table, path) -> None:
    cols = _columns(set_names)
    best = _maxima(set_names, table)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        head = ["method", "runs"]
        for k, what in cols:
            head += [f"{k}_{what}", f"{k}_{what}_stderr", f"{k}_{what}_best"]
        w.writerow(head)
        for m, sets in table.items():
            row = [m, max(s.n_runs for s in sets.values())]
            for col in cols:
                if col[0] not in sets:
                    row += ["", "", ""]
                    continue
                mean, se = _cell_value(sets[col[0]], col[1])
                row += [repr(mean), repr(se), int(mean == best[col])]
            w.writerow(row)
