"""Output artifacts: delimited data, JSON summaries and rendered figures.

All files are written atomically (temp file + rename).  Every artifact gets
a ``.meta.json`` sidecar carrying the config hash and seed for provenance.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path


__all__ = [
    "atomic_write_text",
    "write_csv",
    "write_json",
    "write_meta",
    "fig_policy",
    "fig_table1",
    "fig_shading",
    "fig_asymptotics",
]


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_meta(path, config_hash, seed, command):
    meta = {"config_hash": config_hash, "seed": seed, "command": command}
    write_json(Path(path).with_suffix(Path(path).suffix + ".meta.json"), meta)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.png")
    fig.savefig(tmp, dpi=130, bbox_inches="tight")
    os.replace(tmp, path)


def fig_policy(result, path):
    """Value curve, solved value function and optimal bid against age."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ts = result.tau_grid
    ax.plot(ts, result.curve.value(ts), label="item value k", color="tab:gray")
    ax.plot(ts, result.b_star, label="optimal bid", color="tab:red")
    ax.set_xlabel("age since last win")
    ax.set_ylabel("value / bid")
    ax2 = ax.twinx()
    ax2.plot(ts, result.V_star, label="value function", color="tab:blue", alpha=0.7)
    ax2.set_ylabel("expected future payoff")
    lines, labels = ax.get_legend_handles_labels()
    l2, lab2 = ax2.get_legend_handles_labels()
    ax.legend(lines + l2, labels + lab2, loc="lower right")
    ax.set_title(f"mu={result.env.mu:g}, gamma={result.env.gamma:g}, "
                 f"V0={result.v0_star:.4g}")
    _save(fig, path)
    plt.close(fig)


def fig_table1(rows, path):
    """Value per time unit against intensity, one panel per curve."""
    plt = _pyplot()
    kinds = sorted({r.k_kind for r in rows})
    fig, axes = plt.subplots(1, len(kinds), figsize=(6 * len(kinds), 4.2),
                             squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        sub = [r for r in rows if r.k_kind == kind]
        for name in sorted({r.policy for r in sub}):
            pts = sorted([r for r in sub if r.policy == name], key=lambda r: r.mu)
            mus = [r.mu for r in pts]
            vals = [r.value_per_time for r in pts]
            err = [[r.value_per_time - r.ci_low for r in pts],
                   [r.ci_high - r.value_per_time for r in pts]]
            ax.errorbar(mus, vals, yerr=err, marker="o", capsize=3, label=name)
        ax.set_xscale("log")
        ax.set_xlabel("auction intensity mu")
        ax.set_ylabel("value per time unit")
        ax.set_title(kind)
        ax.legend()
        ax.grid(alpha=0.3)
    _save(fig, path)
    plt.close(fig)


def fig_shading(records, path):
    """Shading payoff relative to the solved optimum, per intensity."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.2))
    mus = sorted({r["mu"] for r in records})
    for mu in mus:
        pts = sorted([r for r in records if r["mu"] == mu], key=lambda r: r["alpha"])
        ax.plot([p["alpha"] for p in pts], [p["ratio_to_optimal"] for p in pts],
                marker="o", label=f"mu={mu:g}")
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("shading factor alpha")
    ax.set_ylabel("fraction of optimal value")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)
    plt.close(fig)


def fig_asymptotics(payload, path):
    """Relative greedy gap against intensity with its limiting constant."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.2))
    gaps = payload["gaps"]
    ax.plot([g["mu"] for g in gaps], [g["relative_gap"] for g in gaps],
            marker="o", label="1 - greedy/optimal")
    ax.axhline(payload["p_dot_0"], color="k", ls="--",
               label=f"limit {payload['p_dot_0']:.3g}")
    ax.set_xscale("log")
    ax.set_xlabel("auction intensity mu")
    ax.set_ylabel("relative gap")
    ax.legend()
    ax.grid(alpha=0.3)
    _save(fig, path)
    plt.close(fig)
