"""Static report figures: atlas heatmaps, trajectory overlays, noise and
ablation summaries. Everything renders to SVG files next to the CSV
output; nothing is interactive."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .atlas import Atlas
from .simworld import CATEGORY_NAMES, GridWorld, RESOLUTION


def atlas_heatmaps(atlas: Atlas, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []

    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(atlas.gamma, cmap="viridis", vmin=0, vmax=1)
    ax.set_xlabel("place cluster")
    ax.set_ylabel("place cluster")
    ax.set_title("Place reachability")
    fig.colorbar(im, ax=ax, shrink=0.85)
    p = out_dir / "gamma_heatmap.svg"
    fig.savefig(p, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    im = ax.imshow(atlas.r_po, cmap="magma", aspect="auto")
    ax.set_xticks(range(len(CATEGORY_NAMES)))
    ax.set_xticklabels(CATEGORY_NAMES, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("place cluster")
    ax.set_title("Place-object connection counts")
    fig.colorbar(im, ax=ax, shrink=0.85)
    p = out_dir / "r_heatmap.svg"
    fig.savefig(p, bbox_inches="tight")
    plt.close(fig)
    paths.append(p)
    return paths


def trajectories(world: GridWorld, episodes: list[tuple], out_path) -> Path:
    """Overlay episode paths on the occupancy map. episodes holds
    (spec, trace) pairs from one scene."""
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.imshow(world.occupancy, cmap="gray_r", origin="lower",
              extent=[0, world.shape[1] * RESOLUTION, 0, world.shape[0] * RESOLUTION])
    cmap = plt.get_cmap("tab10")
    for i, (spec, trace) in enumerate(episodes):
        if not trace:
            continue
        xs = [spec.start[0]] + [row["x"] for row in trace]
        ys = [spec.start[1]] + [row["y"] for row in trace]
        label = CATEGORY_NAMES[spec.goal_category]
        ax.plot(xs, ys, color=cmap(i % 10), lw=1.2, label=f"{label}")
        ax.plot(xs[0], ys[0], marker="*", color=cmap(i % 10), ms=10)
        ax.plot(xs[-1], ys[-1], marker="o", color=cmap(i % 10), ms=5)
    for obj in world.objects:
        ax.plot(obj.x, obj.y, marker="s", color="k", ms=2)
    ax.legend(fontsize=7, loc="upper right")
    ax.set_title(f"Episode trajectories, scene {world.seed}")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    out_path = Path(out_path)
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)
    return out_path


def noise_curve(success_by_level: dict[int, float], out_path) -> Path:
    levels = sorted(success_by_level)
    vals = [100.0 * success_by_level[k] for k in levels]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(levels, vals, marker="o")
    ax.set_xlabel("pose noise level")
    ax.set_ylabel("success [%]")
    ax.set_title("Success under pose-sensor noise")
    ax.grid(alpha=0.3)
    out_path = Path(out_path)
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)
    return out_path


def ablation_bars(metrics_by_config: dict[str, dict], out_path) -> Path:
    names = list(metrics_by_config)
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    for ax, key, label in zip(
        axes, ("success_rate", "spl", "dts"), ("Success", "SPL", "DTS [m]")
    ):
        vals = [metrics_by_config[n][key] for n in names]
        ax.bar(range(len(names)), vals, color="steelblue")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
        ax.set_title(label)
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)
    return out_path


def localization_bars(acc_by_mode: dict[str, tuple[float, float]], out_path) -> Path:
    """Acc@0.5m / Acc@1m per matching mode (image, +objects, +places)."""
    modes = list(acc_by_mode)
    x = np.arange(len(modes))
    a05 = [acc_by_mode[m][0] for m in modes]
    a1 = [acc_by_mode[m][1] for m in modes]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(x - 0.18, a05, width=0.36, label="Acc@0.5m")
    ax.bar(x + 0.18, a1, width=0.36, label="Acc@1m")
    ax.set_xticks(x)
    ax.set_xticklabels(modes)
    ax.set_ylim(0, 1)
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    ax.set_title("Localization accuracy by input channels")
    out_path = Path(out_path)
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)
    return out_path
