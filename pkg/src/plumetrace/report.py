"""Figure rendering for exported batch results.

Reads the delimited/JSON files a run produces and writes matplotlib figures
next to them: the final-distance CDF, per-scenario success bars, and episode
trajectory plots. Rendering is strictly downstream of the metrics files; no
simulation state is consumed here.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _load_metrics(results_dir):
    with open(os.path.join(results_dir, "metrics.json")) as fh:
        return json.load(fh)


def render_cdf(results_dirs, out_path, labels=None, title=None):
    """Empirical CDF of final distance to the emitter, one curve per run."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for k, rdir in enumerate(results_dirs):
        path = os.path.join(rdir, "cdf.csv")
        dist, quant = [], []
        with open(path) as fh:
            for row in csv.DictReader(fh):
                dist.append(float(row["final_distance_m"]))
                quant.append(float(row["empirical_quantile"]))
        label = labels[k] if labels else os.path.basename(os.path.normpath(rdir))
        ax.step([0.0] + dist, [0.0] + quant, where="post", label=label)
    ax.set_xlabel("final distance to emitter (m)")
    ax.set_ylabel("empirical CDF")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_success_bars(results_dirs, out_path, labels=None):
    """Success rate and mean location error per exported batch."""
    names, rates, errors = [], [], []
    for k, rdir in enumerate(results_dirs):
        m = _load_metrics(rdir)
        names.append(labels[k] if labels else m["scenario"])
        rates.append(m["success_rate"])
        errors.append(m["mean_error_all"])
    x = np.arange(len(names))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    ax1.bar(x, rates, color="tab:blue")
    ax1.set_xticks(x, names, rotation=30, ha="right", fontsize=8)
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("success rate")
    ax1.grid(axis="y", alpha=0.3)
    ax2.bar(x, errors, color="tab:orange")
    ax2.set_xticks(x, names, rotation=30, ha="right", fontsize=8)
    ax2.set_ylabel("mean location error (m)")
    ax2.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_trajectory(trajectory_csv, out_path, emitter=None, area=(200, 200)):
    """Top-down plot of one episode: UAV paths, centroid, anchor history."""
    rows = []
    with open(trajectory_csv) as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames
        for row in reader:
            rows.append(row)
    n_uavs = sum(1 for f in fields if f.endswith("_x") and f.startswith("uav"))
    fig, ax = plt.subplots(figsize=(5.4, 5.4))
    for i in range(n_uavs):
        xs = [float(r[f"uav{i}_x"]) for r in rows]
        ys = [float(r[f"uav{i}_y"]) for r in rows]
        ax.plot(xs, ys, lw=0.8, alpha=0.8, label=f"uav {i}")
    ax.plot([float(r["centroid_x"]) for r in rows],
            [float(r["centroid_y"]) for r in rows],
            "k--", lw=1.2, label="centroid")
    anc = [(float(r["anchor_x"]), float(r["anchor_y"])) for r in rows
           if r["anchor_valid"] == "1"]
    if anc:
        ax.plot(*zip(*anc), "r.", ms=2, label="anchor")
    if emitter is not None:
        ax.plot(*emitter, "g*", ms=14, label="emitter")
    ax.set_xlim(0, area[0])
    ax.set_ylim(0, area[1])
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_report(results_dirs, out_dir, labels=None, max_trajectories=3):
    """Render the full figure set for one or more exported result directories."""
    os.makedirs(out_dir, exist_ok=True)
    written = [render_cdf(results_dirs, os.path.join(out_dir, "cdf.png"),
                          labels=labels),
               render_success_bars(results_dirs,
                                   os.path.join(out_dir, "success.png"),
                                   labels=labels)]
    for rdir in results_dirs:
        traj_dir = os.path.join(rdir, "trajectories")
        if not os.path.isdir(traj_dir):
            continue
        emitter = None
        echo = os.path.join(rdir, "scenario_echo.json")
        if os.path.exists(echo):
            with open(echo) as fh:
                data = json.load(fh)
            emitter = data["plume"]["emitter"]
            area = (data["area"]["X"], data["area"]["Y"])
        else:
            area = (200.0, 200.0)
        tag = os.path.basename(os.path.normpath(rdir))
        for name in sorted(os.listdir(traj_dir))[:max_trajectories]:
            out = os.path.join(out_dir, f"traj_{tag}_{os.path.splitext(name)[0]}.png")
            written.append(render_trajectory(os.path.join(traj_dir, name), out,
                                             emitter=emitter, area=area))
    return written
