"""Deterministic SVG summary plots (no plotting library, no timestamps).

Two modes: a horizontal bar chart of the most annotated characters, and a
scatter of two trait means with interval whiskers. Identical inputs yield
byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .stats import CharacterStats, StatsError

_FONT = "font-family=\"Helvetica, Arial, sans-serif\""
_BAR_COLOR = "#4878a8"
_POINT_COLOR = "#a84848"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def emit_summary_plot(
    stats: list[CharacterStats],
    path: str | Path,
    *,
    top_n: int = 10,
    traits: tuple[str, str] | None = None,
) -> None:
    """Write the summary SVG; ``traits`` switches to the scatter mode."""
    if not stats:
        raise StatsError("cannot plot empty statistics")
    if top_n < 1:
        raise StatsError("top_n must be >= 1")
    selected = stats[:top_n]
    if traits is None:
        svg = _bar_chart(selected)
    else:
        svg = _trait_scatter(selected, traits)
    Path(path).write_text(svg, encoding="utf-8")


def _bar_chart(stats: list[CharacterStats]) -> str:
    width = 800
    row_height = 36
    margin_top = 56
    label_width = 230
    height = margin_top + row_height * len(stats) + 24
    max_total = max(s.total for s in stats)
    bar_span = width - label_width - 90

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="20" y="32" {_FONT} font-size="20">'
        "Most annotated characters</text>",
    ]
    for i, entry in enumerate(stats):
        y = margin_top + i * row_height
        bar = bar_span * entry.total / max_total
        name = escape(entry.character)
        parts.append(
            f'<text x="{label_width - 10}" y="{y + 20}" {_FONT} font-size="14" '
            f'text-anchor="end">{name}</text>'
        )
        parts.append(
            f'<rect x="{label_width}" y="{y + 6}" width="{_fmt(bar)}" height="20" '
            f'fill="{_BAR_COLOR}"/>'
        )
        parts.append(
            f'<text x="{_fmt(label_width + bar + 8)}" y="{y + 21}" {_FONT} '
            f'font-size="13">{entry.total}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _trait_scatter(stats: list[CharacterStats], traits: tuple[str, str]) -> str:
    trait_x, trait_y = traits
    points = []
    for entry in stats:
        scores = entry.trait_scores or {}
        if trait_x in scores and trait_y in scores:
            points.append((entry.character, scores[trait_x], scores[trait_y]))
    if not points:
        raise StatsError(
            f"no character has scores for both {trait_x!r} and {trait_y!r}"
        )

    width, height = 800, 600
    margin = 70
    xs = [v for _, sx, sy in points for v in (sx.ci_low, sx.ci_high, sx.mean)]
    ys = [v for _, sx, sy in points for v in (sy.ci_low, sy.ci_high, sy.mean)]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_pad = (x_hi - x_lo) * 0.08 or 0.5
    y_pad = (y_hi - y_lo) * 0.08 or 0.5
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    def px(value: float) -> str:
        return _fmt(margin + (value - x_lo) / (x_hi - x_lo) * (width - 2 * margin))

    def py(value: float) -> str:
        return _fmt(height - margin - (value - y_lo) / (y_hi - y_lo) * (height - 2 * margin))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="20" y="30" {_FONT} font-size="18">'
        f"{escape(trait_y)} vs {escape(trait_x)} (whiskers: bootstrap interval)</text>",
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="#222"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="#222"/>',
        f'<text x="{width // 2}" y="{height - 20}" {_FONT} font-size="14" '
        f'text-anchor="middle">{escape(trait_x)}</text>',
        f'<text x="22" y="{height // 2}" {_FONT} font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 22 {height // 2})">{escape(trait_y)}</text>',
    ]
    for name, sx, sy in points:
        cx, cy = px(sx.mean), py(sy.mean)
        parts.append(
            f'<line x1="{px(sx.ci_low)}" y1="{cy}" x2="{px(sx.ci_high)}" y2="{cy}" '
            f'stroke="{_POINT_COLOR}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<line x1="{cx}" y1="{py(sy.ci_low)}" x2="{cx}" y2="{py(sy.ci_high)}" '
            f'stroke="{_POINT_COLOR}" stroke-width="1.5"/>'
        )
        parts.append(f'<circle cx="{cx}" cy="{cy}" r="4" fill="{_POINT_COLOR}"/>')
        parts.append(
            f'<text x="{_fmt(float(cx) + 7)}" y="{_fmt(float(cy) - 7)}" {_FONT} '
            f'font-size="12">{escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
