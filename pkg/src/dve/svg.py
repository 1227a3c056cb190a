"""Minimal SVG 1.1 writer: rects, lines, polylines, circles, text."""
from __future__ import annotations

from xml.sax.saxutils import escape


def _attrs(extra: dict) -> str:
    parts = []
    for key, value in extra.items():
        if value is None:
            continue
        parts.append(f'{key.rstrip("_").replace("_", "-")}="{escape(str(value))}"')
    return (" " + " ".join(parts)) if parts else ""


def _num(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


class SVG:
    def __init__(self, width: float, height: float, title: str = ""):
        self.width = width
        self.height = height
        self.parts: list[str] = []
        if title:
            self.parts.append(f"<title>{escape(title)}</title>")

    def rect(self, x, y, w, h, fill="none", **extra):
        self.parts.append(
            f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(w)}" height="{_num(h)}" '
            f'fill="{fill}"{_attrs(extra)}/>'
        )

    def line(self, x1, y1, x2, y2, stroke="black", **extra):
        self.parts.append(
            f'<line x1="{_num(x1)}" y1="{_num(y1)}" x2="{_num(x2)}" y2="{_num(y2)}" '
            f'stroke="{stroke}"{_attrs(extra)}/>'
        )

    def polyline(self, points, stroke="black", **extra):
        pts = " ".join(f"{_num(x)},{_num(y)}" for x, y in points)
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}"{_attrs(extra)}/>')

    def circle(self, cx, cy, r, fill="black", **extra):
        self.parts.append(
            f'<circle cx="{_num(cx)}" cy="{_num(cy)}" r="{_num(r)}" fill="{fill}"{_attrs(extra)}/>'
        )

    def text(self, x, y, content, size=10, anchor="start", **extra):
        self.parts.append(
            f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" text-anchor="{anchor}" '
            f'font-family="sans-serif"{_attrs(extra)}>{escape(str(content))}</text>'
        )

    def comment(self, content: str):
        self.parts.append(f"<!-- {content.replace('--', '- -')} -->")

    def open_group(self, **extra):
        self.parts.append(f"<g{_attrs(extra)}>")

    def close_group(self):
        self.parts.append("</g>")

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            '<svg version="1.1" xmlns="http://www.w3.org/2000/svg" '
            f'width="{_num(self.width)}" height="{_num(self.height)}" '
            f'viewBox="0 0 {_num(self.width)} {_num(self.height)}">\n'
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.render())
