"""SVG line charts of per-size curves."""
from __future__ import annotations

from collections.abc import Mapping, Sequence
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402

from .const import DOMAIN  # noqa: E402
from .exceptions import StorageError  # noqa: E402
from .stats import CurvePoint, DistributionReport  # noqa: E402

_LOGGER = logging.getLogger(__name__)

_SVG_PARAMS = {"svg.hashsalt": DOMAIN, "svg.fonttype": "none", "path.simplify": False}


def _save(figure: Figure, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with matplotlib.rc_context(_SVG_PARAMS):
            figure.savefig(path, format="svg", metadata={"Date": None})
    except OSError as ex:
        raise StorageError(f"Cannot write plot {path}: {ex}") from ex
    _LOGGER.debug("Wrote %s", path)
    return path


def plot_size_curves(
    path: str | Path,
    curves: Mapping[int, Sequence[CurvePoint]],
    ylabel: str,
    title: str = "",
    crossings: Sequence[float] = (),
) -> Path:
    """One errorbar series per system size against p; dashed verticals mark crossings."""
    with matplotlib.rc_context(_SVG_PARAMS):
        figure = Figure(figsize=(6.0, 4.0))
        axes = figure.add_subplot()
        for size in sorted(curves):
            points = sorted(curves[size])
            axes.errorbar(
                [point[0] for point in points],
                [point[1] for point in points],
                yerr=[point[2] for point in points],
                marker="o",
                markersize=3,
                capsize=2,
                label=f"L={size}",
            )
        for p_star in crossings:
            axes.axvline(p_star, color="grey", linestyle="--", linewidth=0.8)
        axes.set_xlabel("p")
        axes.set_ylabel(ylabel)
        if title:
            axes.set_title(title)
        if curves:
            axes.legend(frameon=False)
        figure.tight_layout()
    return _save(figure, Path(path))


def plot_distribution(path: str | Path, reports: Mapping[str, DistributionReport], title: str = "") -> Path:
    """Cumulative distributions of P_corr, one step curve per group."""
    with matplotlib.rc_context(_SVG_PARAMS):
        figure = Figure(figsize=(6.0, 4.0))
        axes = figure.add_subplot()
        for label in sorted(reports):
            report = reports[label]
            axes.step(report.edges[1:], report.cdf, where="post", label=label)
        axes.set_xlabel("P_corr")
        axes.set_ylabel("cumulative fraction")
        axes.set_xlim(0.0, 1.0)
        axes.set_ylim(0.0, 1.0)
        if title:
            axes.set_title(title)
        if reports:
            axes.legend(frameon=False, fontsize="small")
        figure.tight_layout()
    return _save(figure, Path(path))
