"""Minimal deterministic SVG line plots (no plotting library, stable bytes)."""

from __future__ import annotations

from typing import Sequence

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

_WIDTH, _HEIGHT = 640, 480
_MARGIN = 56


def _sx(x: float) -> float:
    return _MARGIN + x * (_WIDTH - 2 * _MARGIN)


def _sy(y: float) -> float:
    return _HEIGHT - _MARGIN - y * (_HEIGHT - 2 * _MARGIN)


def _fmt(v: float) -> str:
    return f"{v:.4f}".rstrip("0").rstrip(".")


def line_plot_svg(
    curves: Sequence[tuple[str, Sequence[tuple[float, float]]]],
    title: str,
    x_label: str,
    y_label: str,
    diagonal: bool = False,
) -> str:
    """Render named unit-square curves into a self-contained SVG document."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:g}" y="24" text-anchor="middle" font-size="16">{title}</text>',
    ]
    # Axes box and gridlines at 0.25 steps.
    for i in range(5):
        t = i / 4
        parts.append(
            f'<line x1="{_fmt(_sx(t))}" y1="{_fmt(_sy(0))}" x2="{_fmt(_sx(t))}" '
            f'y2="{_fmt(_sy(1))}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{_fmt(_sx(0))}" y1="{_fmt(_sy(t))}" x2="{_fmt(_sx(1))}" '
            f'y2="{_fmt(_sy(t))}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(_sx(t))}" y="{_fmt(_sy(0) + 18)}" text-anchor="middle" '
            f'font-size="11">{t:g}</text>'
        )
        parts.append(
            f'<text x="{_fmt(_sx(0) - 8)}" y="{_fmt(_sy(t) + 4)}" text-anchor="end" '
            f'font-size="11">{t:g}</text>'
        )
    parts.append(
        f'<rect x="{_fmt(_sx(0))}" y="{_fmt(_sy(1))}" width="{_fmt(_sx(1) - _sx(0))}" '
        f'height="{_fmt(_sy(0) - _sy(1))}" fill="none" stroke="#333333"/>'
    )
    if diagonal:
        parts.append(
            f'<line x1="{_fmt(_sx(0))}" y1="{_fmt(_sy(0))}" x2="{_fmt(_sx(1))}" '
            f'y2="{_fmt(_sy(1))}" stroke="#999999" stroke-dasharray="5,4"/>'
        )
    parts.append(
        f'<text x="{_WIDTH / 2:g}" y="{_HEIGHT - 12}" text-anchor="middle" font-size="13">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{_HEIGHT / 2:g}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {_HEIGHT / 2:g})">{y_label}</text>'
    )
    for idx, (name, points) in enumerate(curves):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(f"{_fmt(_sx(x))},{_fmt(_sy(y))}" for x, y in points)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = 40 + 18 * idx
        parts.append(
            f'<line x1="{_WIDTH - 200}" y1="{ly}" x2="{_WIDTH - 176}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_WIDTH - 170}" y="{ly + 4}" font-size="11">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(text: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
