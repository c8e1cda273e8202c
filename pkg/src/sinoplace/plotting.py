"""Report figures rendered to files with the non-interactive Agg backend."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LABEL_COLORS = {"TP": "tab:green", "FN": "tab:orange", "FP": "tab:red"}


def _save(fig, path) -> None:
    fig.tight_layout()
    # fixed metadata keeps SVG output byte-identical across runs
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)


def plot_pr(report, path) -> None:
    """PR curve on the left, F1 against recall on the right."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    if report.pr_points:
        p, r = zip(*report.pr_points)
        ax1.plot(r, p, "-", color="tab:blue")
    ax1.set_xlabel("recall")
    ax1.set_ylabel("precision")
    auc = "n/a" if report.auc is None else f"{report.auc:.3f}"
    ax1.set_title(f"PR (AUC {auc})")
    if report.f1_curve:
        f, r = zip(*sorted(report.f1_curve, key=lambda x: x[1]))
        ax2.plot(r, f, "-", color="tab:purple")
    ax2.set_xlabel("recall")
    ax2.set_ylabel("F1")
    best = "n/a" if report.max_f1 is None else f"{report.max_f1:.3f}"
    ax2.set_title(f"F1 (max {best})")
    for ax in (ax1, ax2):
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
    _save(fig, path)


def plot_trajectory(xy: np.ndarray, labelled, path) -> None:
    """Trajectory in grey with labelled query positions on top.

    Args:
        xy: (N, 2) positions of every frame.
        labelled: iterable of ``(x, y, label)``.
    """
    fig, ax = plt.subplots(figsize=(5, 5))
    if len(xy):
        ax.plot(xy[:, 0], xy[:, 1], "-", color="0.75", lw=1)
    rows = list(labelled)
    for label, color in LABEL_COLORS.items():
        pts = [(x, y) for x, y, lab in rows if lab == label]
        if pts:
            a = np.array(pts)
            ax.scatter(a[:, 0], a[:, 1], s=10, color=color, label=f"{label} ({len(pts)})")
    if rows:
        ax.legend(loc="best", fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    _save(fig, path)


def plot_sensitivity(result, path) -> None:
    """Normalized distance per transform kind with the unit threshold line."""
    kinds = ["rotation", "translation_x", "translation_y"]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, kind in zip(axes, kinds):
        rows = [r for r in result.rows if r[0] == kind]
        if rows:
            ax.plot([r[1] for r in rows], [r[3] for r in rows], "o-", ms=3)
        ax.axhline(1.0, color="tab:red", ls="--", lw=1)
        ax.set_xlabel("degrees" if kind == "rotation" else "pixels")
        ax.set_title(kind.replace("_", " "))
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("d / unrelated-place d")
    _save(fig, path)
