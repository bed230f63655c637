"""Report rendering: delimited exports plus matplotlib figures.

Every CLI path that writes a CSV also renders the matching figure next to it,
so a run leaves both machine-readable and eyeball-ready artifacts.
"""

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _sibling(path, suffix):
    base, _ = os.path.splitext(path)
    return base + suffix


def write_csv(path, rows, fieldnames=None):
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def save_success_curve(curve, csv_path, title="playing"):
    """Success curve CSV (episode, outcome, running mean) plus a PNG plot."""
    from .playing import curve_rows

    rows = curve_rows(curve)
    write_csv(csv_path, rows, ["episode", "outcome", "running_mean"])
    episodes = [r["episode"] for r in rows]
    outcomes = [r["outcome"] for r in rows]
    running = [r["running_mean"] for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(episodes, outcomes, ".", markersize=2, alpha=0.35, label="episode outcome")
    ax.plot(episodes, running, lw=2, label="running success mean")
    if len(rows) >= 100:
        trailing = np.convolve(outcomes, np.ones(100) / 100, mode="valid")
        ax.plot(range(99, len(outcomes)), trailing, lw=1.5, ls="--",
                label="trailing-100 mean")
    ax.set_xlabel("episode")
    ax.set_ylabel("success")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    png_path = _sibling(csv_path, ".png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return csv_path, png_path


def save_blame_report(blame, csv_path, top=15, title="blame posterior"):
    """Ranked blame CSV plus a horizontal bar chart of the top hypotheses."""
    rows = [{"rank": i + 1, "hypothesis": h, "posterior": p}
            for i, (h, p) in enumerate(blame.top())]
    write_csv(csv_path, rows, ["rank", "hypothesis", "posterior"])
    shown = rows[:top]
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(shown) + 1.5))
    names = [r["hypothesis"] for r in reversed(shown)]
    values = [r["posterior"] for r in reversed(shown)]
    ax.barh(names, values, color=["#c0392b" if n != "no-fault" else "#7f8c8d" for n in names])
    ax.set_xlabel("posterior")
    ax.set_xlim(0, 1)
    ax.set_title(title)
    fig.tight_layout()
    png_path = _sibling(csv_path, ".png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return csv_path, png_path


def save_session_log(session, csv_path):
    rows = session.rows()
    write_csv(csv_path, rows,
              ["step", "skill", "outcome", "t_fail", "top_hypothesis", "top_posterior"])
    return csv_path


def save_ecm_heatmap(ecm, csv_path, title="ecm policy"):
    """Edge list CSV plus a heatmap of state -> option probabilities."""
    rows = [{"src": src, "dst": dst, "h": ecm.h[(src, dst)]}
            for src in ecm.clips for dst in ecm.out_edges(src)]
    write_csv(csv_path, rows, ["src", "dst", "h"])
    states = ecm.layers[3]
    options = ecm.layers[4]
    matrix = np.zeros((len(states), len(options)))
    for i, state in enumerate(states):
        targets, probs = ecm.probabilities(state)
        for dst, p in zip(targets, probs):
            matrix[i, options.index(dst)] = p
    fig, axes = plt.subplots(
        1, 2, figsize=(10, max(3.0, 0.45 * len(states) + 1.5)),
        gridspec_kw={"width_ratios": [1, 3]})
    sensing = ecm.layers[2]
    _, root_probs = ecm.probabilities("root")
    axes[0].bar([ecm.clips[c].label for c in sensing], root_probs, color="#2980b9")
    axes[0].set_ylim(0, 1)
    axes[0].set_title("sensing choice")
    axes[0].tick_params(axis="x", rotation=45)
    im = axes[1].imshow(matrix, vmin=0, vmax=1, cmap="viridis", aspect="auto")
    axes[1].set_xticks(range(len(options)),
                       [ecm.clips[c].label for c in options], rotation=45, ha="right")
    axes[1].set_yticks(range(len(states)), [ecm.clips[c].label for c in states])
    axes[1].set_title("state to preparation probabilities")
    fig.colorbar(im, ax=axes[1], shrink=0.8)
    fig.suptitle(title)
    fig.tight_layout()
    png_path = _sibling(csv_path, ".png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return csv_path, png_path
