"""Tiny deterministic SVG writer for the run plots.

Writing the vector output directly (instead of going through a plotting
package) keeps repeated runs byte-identical, which the export contract
requires.
"""

from __future__ import annotations

import io


def _f(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".")


class SvgCanvas:
    """Fixed-size canvas with a world-coordinate viewport (y up)."""

    def __init__(self, width: int, height: int, world, margin: int = 40):
        self.width = width
        self.height = height
        (x0, y0), (x1, y1) = world
        self._wx0, self._wy0, self._wx1, self._wy1 = x0, y0, x1, y1
        self._m = margin
        sx = (width - 2 * margin) / (x1 - x0)
        sy = (height - 2 * margin) / (y1 - y0)
        self._s = min(sx, sy)
        self._buf = io.StringIO()
        self._buf.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">\n'
        )
        self._buf.write(f'<rect width="{width}" height="{height}" fill="white"/>\n')

    def tx(self, x: float, y: float) -> tuple[float, float]:
        px = self._m + (x - self._wx0) * self._s
        py = self.height - self._m - (y - self._wy0) * self._s
        return px, py

    def polyline(self, pts, color: str, width: float = 1.0, opacity: float = 1.0,
                 dash: str | None = None):
        if len(pts) < 2:
            return
        coords = " ".join(f"{_f(px)},{_f(py)}" for px, py in (self.tx(x, y) for x, y in pts))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self._buf.write(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{_f(width)}" stroke-opacity="{_f(opacity)}"{extra}/>\n'
        )

    def line(self, a, b, color: str, width: float = 1.0, dash: str | None = None):
        self.polyline([a, b], color, width, dash=dash)

    def circle(self, center, r_px: float, color: str, fill: str = "none"):
        px, py = self.tx(*center)
        self._buf.write(
            f'<circle cx="{_f(px)}" cy="{_f(py)}" r="{_f(r_px)}" stroke="{color}" '
            f'fill="{fill}"/>\n'
        )

    def cross(self, center, r_px: float, color: str, width: float = 1.2):
        px, py = self.tx(*center)
        self._buf.write(
            f'<path d="M {_f(px - r_px)} {_f(py - r_px)} L {_f(px + r_px)} {_f(py + r_px)} '
            f'M {_f(px - r_px)} {_f(py + r_px)} L {_f(px + r_px)} {_f(py - r_px)}" '
            f'stroke="{color}" stroke-width="{_f(width)}" fill="none"/>\n'
        )

    def text(self, pos, s: str, size: int = 12, color: str = "#333333", anchor: str = "start"):
        px, py = self.tx(*pos)
        self._buf.write(
            f'<text x="{_f(px)}" y="{_f(py)}" font-size="{size}" fill="{color}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>\n'
        )

    def text_px(self, px: float, py: float, s: str, size: int = 12,
                color: str = "#333333", anchor: str = "start"):
        self._buf.write(
            f'<text x="{_f(px)}" y="{_f(py)}" font-size="{size}" fill="{color}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{s}</text>\n'
        )

    def to_string(self) -> str:
        return self._buf.getvalue() + "</svg>\n"

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_string())
