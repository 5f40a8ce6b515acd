"""Matplotlib renderings of the experiment outputs, written to image files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update(
    {
        "axes.linewidth": 0.8,
        "font.size": 9,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "xtick.direction": "in",
        "ytick.direction": "in",
        "savefig.dpi": 150,
    }
)

GOLDEN = (1 + 5**0.5) / 2


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def fixed_point_check(x, fx, f3x, path):
    """f and f^3 against the diagonal, side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(7, 3.3), sharey=True)
    for ax, y, label in zip(axes, (fx, f3x), ("f(x)", "f³(x)")):
        ax.plot(x, y, lw=0.9, label=label)
        ax.plot([0, 1], [0, 1], "k--", lw=0.6, label="y = x")
        ax.set_xlim(0, 1)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("x")
        ax.legend(loc="upper left")
    return _save(fig, path)


def scrambling(distances, path, gap=None):
    t = np.arange(len(distances))
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.semilogy(t, np.maximum(distances, 1e-18), lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("|f^t(x) - f^t(y)|")
    if gap is not None:
        ax.set_title(f"initial gap {gap:g}")
    return _save(fig, path)


def region_growth(counts, path, rate=None):
    t = np.arange(1, len(counts) + 1)
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.semilogy(t, counts, "o-", ms=3, lw=0.8, label="regions")
    ax.semilogy(t, GOLDEN**t, ":", lw=0.8, label="φ^t")
    if rate is not None:
        ax.set_title(f"fitted rate {rate:.3f}")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, path)


def sweep(xs, p, lo, hi, path, xlabel="σ²", ylabel="P(period 3)"):
    fig, ax = plt.subplots(figsize=(5, 3))
    xs, p, lo, hi = map(np.asarray, (xs, p, lo, hi))
    ax.errorbar(xs, p, yerr=[p - lo, hi - p], fmt="o-", ms=3, lw=0.8, capsize=2)
    ax.set_xscale("log")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def state_traces(states, path, neurons=4):
    """Per-neuron values against the number of compositions."""
    fig, ax = plt.subplots(figsize=(5, 3))
    for j in range(min(neurons, states.shape[1])):
        ax.plot(states[:, j], lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("neuron value")
    return _save(fig, path)


def table(labels, p, path):
    fig, ax = plt.subplots(figsize=(5, 0.4 * len(labels) + 1))
    ax.barh(labels, 100 * np.asarray(p))
    ax.set_xlabel("% with period 3")
    return _save(fig, path)
