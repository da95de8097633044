"""
SVG line charts of metric curves.
"""

import logging
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "lfmgan"
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

Series = Tuple[Sequence[float], Sequence[float]]


def line_chart(path: Union[str, Path], series: Dict[str, Series], title: str = "",
               xlabel: str = "iteration", ylabel: str = "") -> Path:
    """
    Draw one line per series and save the figure as SVG.

    Args:
        path: Output file; the suffix is forced to .svg
        series: Label to (x values, y values)
        title: Figure title
        xlabel: X axis label
        ylabel: Y axis label

    Returns:
        Path of the written file
    """
    path = Path(path).with_suffix(".svg")
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    try:
        for label, (xs, ys) in series.items():
            ax.plot(list(xs), list(ys), label=label, linewidth=1.2)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if series:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    logger.info(f"Saved chart {path}")
    return path


__all__ = ["line_chart"]
