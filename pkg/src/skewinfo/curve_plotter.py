from io import StringIO
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
from matplotlib.figure import Figure

from .density import CurveTable
from .skew_logger import get_logger


class CurvePlotterError(Exception):
    """Custom exception for CurvePlotter errors."""


class CurvePlotter:
    """
    Renders a family of density curves as SVG.

    Curves are drawn in the order given, the first darkest and the last
    lightest, on a fixed 800x600 viewBox.
    """

    # the svg backend writes 72 units per inch
    WIDTH_IN = 800 / 72
    HEIGHT_IN = 600 / 72
    DPI = 72
    DARKEST = 0.1
    LIGHTEST = 0.75

    def __init__(self, title: str = ""):
        self.title = title
        self.logger = get_logger(__name__)

    def shades(self, count: int) -> List[str]:
        """Grey levels from darkest to lightest as hex colours."""
        levels = np.linspace(self.DARKEST, self.LIGHTEST, count) if count > 1 else np.array([self.DARKEST])
        return ["#{0:02x}{0:02x}{0:02x}".format(int(round(255 * g))) for g in levels]

    def render_svg(self, curves: Sequence[CurveTable]) -> str:
        """
        Draw the curves and return the SVG document.

        Args:
            curves (Sequence[CurveTable]): Curves ordered by delta.

        Returns:
            str: SVG text.

        Raises:
            CurvePlotterError: If there is nothing to draw or rendering fails.
        """
        if not curves:
            raise CurvePlotterError("No curves to plot")
        try:
            figure = Figure(figsize=(self.WIDTH_IN, self.HEIGHT_IN), dpi=self.DPI)
            axes = figure.add_subplot()
            for curve, colour in zip(curves, self.shades(len(curves))):
                label = ", ".join(f"{v:g}" for v in np.ravel(curve.delta)) if curve.delta is not None else ""
                axes.plot(curve.x, curve.pdf, color=colour, linewidth=1.5, label=f"delta = {label}")
            axes.set_xlabel(f"x{curves[0].axis + 1}")
            axes.set_ylabel("density")
            if self.title:
                axes.set_title(self.title)
            axes.legend(frameon=False)
            return self._fig_to_svg(figure)
        except Exception as e:
            raise CurvePlotterError(f"Failed to render curves: {str(e)}") from e

    def save(self, curves: Sequence[CurveTable], path: Union[str, Path]) -> Path:
        path = Path(path)
        svg = self.render_svg(curves)
        try:
            path.write_text(svg, encoding="utf-8")
        except OSError as e:
            raise CurvePlotterError(f"Failed to write {path}: {str(e)}") from e
        self.logger.info(f"Wrote {path}")
        return path

    def _fig_to_svg(self, figure: Figure) -> str:
        """Serialize a figure as SVG text."""
        buf = StringIO()
        figure.savefig(buf, format="svg")
        return buf.getvalue()

    def __repr__(self) -> str:
        """Provide a string representation of the CurvePlotter."""
        return f"CurvePlotter(title='{self.title}')"
