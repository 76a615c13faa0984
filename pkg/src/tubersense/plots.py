"""Static SVG figures. Output is byte-stable for identical inputs."""

from __future__ import annotations

from collections import defaultdict
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .features import FEATURE_NAMES, FeatureVector  # noqa: E402
from .model import ChannelSpectrum  # noqa: E402

# Fixed hash salt and no date metadata keep repeated runs identical.
plt.rcParams["svg.hashsalt"] = "tubersense"
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def plot_spectra(spectra: Mapping[str, ChannelSpectrum], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, spec in spectra.items():
        ax.plot(spec.freqs / 1e9, spec.a_db, label=label, lw=1)
    ax.set_xlabel("frequency (GHz)")
    ax.set_ylabel("|H| (dB)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_feature_trajectories(features: Sequence[FeatureVector], path) -> None:
    by_pot = defaultdict(list)
    for fv in features:
        by_pot[fv.pot_id].append(fv)
    fig, axes = plt.subplots(2, 2, figsize=(7, 5), sharex=True)
    for j, (ax, name) in enumerate(zip(axes.ravel(), FEATURE_NAMES)):
        for pot, series in by_pot.items():
            series = sorted(series, key=lambda f: f.day)
            ax.plot([f.day for f in series], [f.as_array()[j] for f in series], label=pot, lw=1)
        ax.set_title(name, fontsize=9)
    axes[1, 0].set_xlabel("day")
    axes[1, 1].set_xlabel("day")
    axes[0, 0].legend(fontsize=6)
    fig.tight_layout()
    _save(fig, path)


def plot_heatmap_panels(panels: Mapping[str, np.ndarray], path) -> None:
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(1.8 * n, 2.2), squeeze=False)
    for ax, (title, values) in zip(axes[0], panels.items()):
        ax.imshow(values, cmap="viridis", interpolation="nearest")
        ax.set_title(title, fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    _save(fig, path)


def plot_band_tradeoff(freqs, psi_p, ratio, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    sc = ax.scatter(psi_p, ratio, c=np.asarray(freqs) / 1e9, s=10, cmap="plasma")
    fig.colorbar(sc, ax=ax, label="frequency (GHz)")
    ax.set_xlabel("penetration score")
    ax.set_ylabel("activity / penetration")
    fig.tight_layout()
    _save(fig, path)


def plot_accuracy_curves(curves: Mapping[str, Mapping[float, float]], path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for source, curve in curves.items():
        d = sorted(curve)
        ax.plot(d, [curve[k] for k in d], marker="o", label=source, lw=1)
    ax.set_xlabel("tolerance (cm)")
    ax.set_ylabel("accuracy")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
