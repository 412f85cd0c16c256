"""Render report figures next to the delimited outputs (Agg backend)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib import cm

TYPE_COLORS = {
    "home": "#6baed6",
    "work": "#969696",
    "retail": "#9e9ac8",
    "park": "#74c476",
}


def plot_city(ax, city):
    """Buildings as colored unit blocks, doors as small white squares."""
    for building in city.buildings.values():
        color = TYPE_COLORS.get(building.building_type, "#cccccc")
        for bx, by in building.blocks:
            ax.add_patch(plt.Rectangle((bx, by), 1, 1, facecolor=color,
                                       edgecolor="white", linewidth=0.3))
        dx, dy = building.door_centroid
        ax.plot([dx], [dy], marker="s", color="white", markersize=2,
                markeredgecolor="black", markeredgewidth=0.3, zorder=3)
    ax.set_xlim(0, city.width)
    ax.set_ylim(0, city.height)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])


def save_city_figure(city, path):
    fig, ax = plt.subplots(figsize=(6, 6))
    plot_city(ax, city)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_trajectory_figure(city, trajectory, path, sparse=None):
    fig, ax = plt.subplots(figsize=(6, 6))
    plot_city(ax, city)
    ax.plot(trajectory["x"], trajectory["y"], linewidth=0.6, color="tab:blue",
            alpha=0.35, zorder=2)
    ax.scatter(trajectory["x"], trajectory["y"], s=2, color="black", alpha=0.4, zorder=2)
    if sparse is not None and len(sparse):
        ax.scatter(sparse["x"], sparse["y"], s=18, color="tab:red", zorder=4,
                   label="pings")
        ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def save_timeline_figure(timelines, path, horizon):
    """Burst spans and ping times per regime, one panel each.

    ``timelines`` maps a label to (burst intervals, ping minutes).
    """
    fig, axes = plt.subplots(len(timelines), 1,
                             figsize=(10, 1.4 * len(timelines)), squeeze=False)
    for ax, (label, (bursts, pings)) in zip(axes[:, 0], timelines.items()):
        for start, end in bursts:
            ax.axvspan(start, end, color="lightgrey", zorder=1)
        ax.vlines(pings, 0.1, 0.9, color="black", linewidth=0.8, zorder=2)
        ax.set_xlim(0, horizon)
        ax.set_yticks([])
        ax.set_title(label, loc="left", fontsize=9)
        for name, spine in ax.spines.items():
            if name != "bottom":
                spine.set_visible(False)
    axes[-1, 0].set_xlabel("minutes")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_labeled_pings_figure(city, panels, path, noise_label=-1):
    """Ping scatter per panel, colored by cluster; noise stays black.

    ``panels`` maps a title to (pings frame, labels).
    """
    n = len(panels)
    ncols = 2 if n > 1 else 1
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(5 * ncols, 4.2 * nrows),
                             squeeze=False)
    flat = axes.ravel()
    for ax in flat[n:]:
        ax.axis("off")
    for ax, (title, (pings, labels)) in zip(flat, panels.items()):
        plot_city(ax, city)
        clusters = sorted({lab for lab in labels if lab != noise_label})
        for cid in clusters:
            mask = [lab == cid for lab in labels]
            color = cm.tab20c(cid / (len(clusters) + 1))
            ax.scatter(pings["x"][mask], pings["y"][mask], s=60, color=color,
                       zorder=3, alpha=0.9)
        ax.scatter(pings["x"], pings["y"], s=6, color="black", zorder=4)
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
