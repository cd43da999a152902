"""Static figures for suite results (PNG, rendered off-screen)."""

from __future__ import annotations

import io
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LABELS = {
    "reward": "discounted cumulative reward",
    "best_arm": "best-arm pull frequency",
    "query": "teacher query frequency",
    "u_loss": "utility L2 loss",
    "arm_loss": "arm expectation L2 loss",
}

FINAL_KEYS = {"u_loss": "final_u_loss", "arm_loss": "final_arm_loss", "reward": "final_reward",
              "query": "queries"}

# name -> (kind, metric, algorithm filter or None, title)
FIGURE_SETS = {
    "recommendation": {
        "reward.png": ("line", "reward", ("ATS-specific", "Naive", "Random"), "Reward"),
        "best_arm.png": ("line", "best_arm", ("ATS-specific", "Naive", "Random"), "Best arm"),
        "queries.png": ("line", "query", ("ATS-specific", "Naive", "Random"), "Teacher queries"),
        "utility_loss.png": ("box", "u_loss", ("ATS", "Naive"), "Utility estimate error"),
        "arm_loss.png": ("box", "arm_loss", ("ATS", "Naive"), "Arm estimate error"),
        "specific_vs_general_reward.png": ("line", "reward", ("ATS",), "Specific vs general"),
        "specific_vs_general_best_arm.png": ("line", "best_arm", ("ATS",), "Specific vs general"),
    },
    "covid": {
        "covid_reward.png": ("line", "reward", None, "Vaccine testing reward"),
        "covid_ats_actions.png": ("actions", None, ("ATS-specific",), "ATS action frequencies"),
    },
    "rollouts": {
        "rollout_reward.png": ("line", "reward", None, "Rollout policies"),
    },
    "costs": {
        "cost_reward.png": ("line", "reward", None, "Cost multiplier: reward"),
        "cost_queries.png": ("line", "query", None, "Cost multiplier: queries"),
        "cost_best_arm.png": ("line", "best_arm", None, "Cost multiplier: best arm"),
    },
}


def _select(algs, prefixes):
    if prefixes is None:
        return list(algs)
    return [a for a in algs if any(a.startswith(p) for p in prefixes)]


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def line_figure(result, metric: str, algs, title: str) -> bytes:
    fig, ax = plt.subplots(figsize=(6, 4))
    for a in algs:
        s = result.series[a].get(metric)
        if s is None:
            continue
        t = np.arange(len(s["mean"]))
        ax.plot(t, s["mean"], label=a, lw=1.2)
        ax.fill_between(t, s["q25"], s["q75"], alpha=0.15)
    ax.set_xlabel("step")
    ax.set_ylabel(LABELS.get(metric, metric))
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _png(fig)


def box_figure(result, metric: str, algs, title: str) -> bytes:
    key = FINAL_KEYS[metric]
    data, names = [], []
    for a in algs:
        v = np.array([e[key] for e in result.episodes.get(a, [])], dtype=float)
        v = v[~np.isnan(v)]
        if len(v):
            data.append(v)
            names.append(a)
    fig, ax = plt.subplots(figsize=(6, 4))
    if data:
        ax.boxplot(data, whis=(0, 100))
        ax.set_xticks(range(1, len(names) + 1), names, rotation=20, fontsize=7)
    ax.set_ylabel("final " + LABELS.get(metric, metric))
    ax.set_title(title)
    fig.tight_layout()
    return _png(fig)


def actions_figure(result, alg: str, title: str) -> bytes:
    s = result.series[alg]
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in sorted(k for k in s if k.startswith("pull_")):
        ax.plot(s[m]["mean"], label=f"arm {m[5:]}", lw=1.2)
    ax.plot(s["query"]["mean"], label="any teacher", lw=1.2, ls="--")
    ax.set_xlabel("step")
    ax.set_ylabel("action frequency")
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _png(fig)


def render_figures(result, figures: Optional[dict] = None) -> dict:
    """Render ``figures`` (name -> spec) or, by default, one line plot per metric."""
    if figures is None:
        metrics = sorted({m for a in result.algorithms for m in result.series[a]} & set(LABELS))
        figures = {f"{m}.png": ("line", m, None, LABELS[m]) for m in metrics}
    out = {}
    for name, (kind, metric, prefixes, title) in figures.items():
        algs = _select(result.algorithms, prefixes)
        if not algs:
            continue
        if kind == "line":
            out[name] = line_figure(result, metric, algs, title)
        elif kind == "box":
            out[name] = box_figure(result, metric, algs, title)
        else:
            out[name] = actions_figure(result, algs[0], title)
    return out
