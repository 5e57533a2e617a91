"""Learning-curve figures from metrics CSVs.

Groups CSVs by run mode (read from the manifest next to each file, falling
back to the file's stem); multiple seeds of one mode aggregate to mean and
a one-standard-deviation band on the common evaluation grid.
"""

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .trainer import METRIC_COLUMNS

PLOT_METRICS = ("mean_ep_reward", "mean_ep_len")


class PlotError(ValueError):
    pass


def read_metrics(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or len(rows) < 2:
        raise PlotError(f"{path}: empty metrics file")
    if rows[0] != METRIC_COLUMNS:
        raise PlotError(
            f"{path}: unexpected columns {rows[0]}; expected {METRIC_COLUMNS}"
        )
    out = defaultdict(list)
    for row in rows[1:]:
        rec = dict(zip(METRIC_COLUMNS, row))
        out[rec["circuit"]].append(
            (int(rec["t"]), float(rec["mean_ep_reward"]), float(rec["mean_ep_len"]))
        )
    return out


def _mode_of(path):
    mdir = os.path.dirname(os.path.abspath(path))
    manifest = os.path.join(mdir, "manifest.json")
    if os.path.exists(manifest):
        import json

        with open(manifest) as f:
            return json.load(f).get("mode", "run")
    return os.path.splitext(os.path.basename(path))[0]

def plot_learning_curves(csv_paths, out_dir):
    """One figure per metric per circuit; returns the written file paths."""
    os.makedirs(out_dir, exist_ok=True)
    by_mode = defaultdict(list)
    for p in csv_paths:
        by_mode[_mode_of(p)].append(read_metrics(p))

    circuits = sorted({c for runs in by_mode.values() for run in runs for c in run})
    written = []
    for metric_idx, metric in enumerate(PLOT_METRICS, start=1):
        for cid in circuits:
            fig, ax = plt.subplots(figsize=(5, 3.4))
            for mode, runs in sorted(by_mode.items()):
                series = [run[cid] for run in runs if cid in run]
                if not series:
                    continue
                common = sorted(set.intersection(*(set(t for t, *_ in s) for s in series)))
                if not common:
                    continue
                grid = {t: [] for t in common}
                for s in series:
                    lookup = {t: vals[metric_idx - 1] for t, *vals in s}
                    for t in common:
                        grid[t].append(lookup[t])
                ts = np.array(common)
                vals = np.array([grid[t] for t in common])
                mean = vals.mean(axis=1)
                ax.plot(ts, mean, label=mode)
                if vals.shape[1] > 1:
                    std = vals.std(axis=1)
                    ax.fill_between(ts, mean - std, mean + std, alpha=0.25)
            ax.set_xlabel("environment steps")
            ax.set_ylabel(metric.replace("_", " "))
            ax.set_title(cid)
            ax.legend()
            fig.tight_layout()
            out = os.path.join(out_dir, f"{metric}_{cid}.png")
            fig.savefig(out, dpi=120)
            plt.close(fig)
            written.append(out)
    return written
