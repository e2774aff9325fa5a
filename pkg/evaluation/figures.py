"""Trend figures for guidance and mixing-ratio sweeps."""
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from evaluation.models import REPORT_METRICS  # noqa: E402

TREND_METRICS = ("is_acc", "personalization_feature", "personalization_hue", "compatibility", "fid", "cis")


def sweep_figure(rows, parameter, path, metrics=TREND_METRICS):
    """One panel per metric against the swept value, saved as PNG."""
    metrics = [name for name in metrics if name in REPORT_METRICS]
    values = [float(value) for value, _ in rows]
    columns = 3
    lines = -(-len(metrics) // columns)
    figure, axes = plt.subplots(lines, columns, figsize=(3.2 * columns, 2.6 * lines), squeeze=False)
    for panel, name in zip(axes.flat, metrics):
        points = [(v, getattr(report, name)) for v, (_, report) in zip(values, rows)]
        points = [(v, y) for v, y in points if y is not None]
        if points:
            panel.plot(*zip(*points), marker="o", color="tab:blue")
        panel.set_title(name, fontsize=9)
        panel.set_xlabel(parameter, fontsize=8)
        panel.tick_params(labelsize=7)
        panel.grid(alpha=0.3)
    for panel in list(axes.flat)[len(metrics):]:
        panel.axis("off")
    figure.tight_layout()
    figure.savefig(path, dpi=120)
    plt.close(figure)
    return path
