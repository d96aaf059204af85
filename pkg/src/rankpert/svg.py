"""Static SVG emission for spectrum scans, region diagrams and curve overlays."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

from . import __version__

WIDTH = 480
HEIGHT = 480
PAD = 40


class _Frame:
    """Maps a data box onto the drawing area (y axis up)."""

    def __init__(self, xmin, xmax, ymin, ymax):
        if not xmax > xmin:
            xmax = xmin + 1.0
        if not ymax > ymin:
            ymax = ymin + 1.0
        self.box = (xmin, xmax, ymin, ymax)

    def x(self, v):
        xmin, xmax, _, _ = self.box
        return PAD + (v - xmin) / (xmax - xmin) * (WIDTH - 2 * PAD)

    def y(self, v):
        _, _, ymin, ymax = self.box
        return HEIGHT - PAD - (v - ymin) / (ymax - ymin) * (HEIGHT - 2 * PAD)

    def pt(self, z):
        return self.x(z.real), self.y(z.imag)


def _fmt(v):
    return f"{v:.3f}"


def _document(body, title):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
            f'<!-- generator: rankpert {__version__} -->\n'
            f'<title>{escape(title)}</title>\n'
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n')
    return head + "\n".join(body) + "\n</svg>\n"


def _axes(fr):
    xmin, xmax, ymin, ymax = fr.box
    out = [f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" '
           f'fill="none" stroke="#888"/>']
    if xmin < 0 < xmax:
        out.append(f'<line x1="{_fmt(fr.x(0))}" y1="{PAD}" x2="{_fmt(fr.x(0))}" '
                   f'y2="{HEIGHT - PAD}" stroke="#ccc"/>')
    if ymin < 0 < ymax:
        out.append(f'<line x1="{PAD}" y1="{_fmt(fr.y(0))}" x2="{WIDTH - PAD}" '
                   f'y2="{_fmt(fr.y(0))}" stroke="#ccc"/>')
    out.append(f'<text x="{PAD}" y="{HEIGHT - PAD / 3}" font-size="10">'
               f'x: [{xmin:.4g}, {xmax:.4g}]  y: [{ymin:.4g}, {ymax:.4g}]</text>')
    return out


def _curve_path(fr, curve, samples=256):
    pts = curve.sample(samples)
    d = " ".join(("M" if i == 0 else "L") + f"{_fmt(fr.x(z.real))},{_fmt(fr.y(z.imag))}"
                 for i, z in enumerate(pts))
    return f'<path d="{d} Z" fill="none" stroke="#2a6" stroke-width="1.5"/>'


def spectrum_svg(report, lam=(), curves=()) -> str:
    """Diagonal entries as dots, roots as crosses, excluded cells shaded."""
    xmin, xmax, ymin, ymax = report.scan_region
    fr = _Frame(xmin, xmax, ymin, ymax)
    body = _axes(fr)
    for cell in report.excluded_cells:
        a, b, c, d = cell
        body.append(f'<rect x="{_fmt(fr.x(a))}" y="{_fmt(fr.y(d))}" '
                    f'width="{_fmt(fr.x(b) - fr.x(a))}" height="{_fmt(fr.y(c) - fr.y(d))}" '
                    f'fill="#fdd" stroke="none"/>')
    for curve in curves:
        body.append(_curve_path(fr, curve))
    for z in lam:
        x, y = fr.pt(complex(z))
        body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2" fill="#36c"/>')
    for r in report.root_candidates:
        x, y = fr.pt(r.z)
        body.append(f'<path d="M{_fmt(x - 4)},{_fmt(y - 4)} L{_fmt(x + 4)},{_fmt(y + 4)} '
                    f'M{_fmt(x - 4)},{_fmt(y + 4)} L{_fmt(x + 4)},{_fmt(y - 4)}" '
                    f'stroke="#c33" stroke-width="1.5"/>')
    return _document(body, "spectrum scan")


def curve_svg(curve, points=(), box=None) -> str:
    pts = curve.sample(256)
    if box is None:
        xs = [z.real for z in pts] + [complex(z).real for z in points]
        ys = [z.imag for z in pts] + [complex(z).imag for z in points]
        box = (min(xs) - 0.1, max(xs) + 0.1, min(ys) - 0.1, max(ys) + 0.1)
    fr = _Frame(*box)
    body = _axes(fr) + [_curve_path(fr, curve)]
    for z in points:
        x, y = fr.pt(complex(z))
        body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2" fill="#36c"/>')
    return _document(body, "curve overlay")


REGION_COLORS = {"FJKP": "#9cf", "FX": "#9d9", "GG": "#fd8", "MAIN": "#f9a", "UNCOVERED": "#333"}


def region_svg(pq=None, label=None, cells: int = 120) -> str:
    """The (p, q) square (0, 2]^2 coloured by the strongest covering result."""
    from .series import theorem_region_membership

    fr = _Frame(0.0, 2.0, 0.0, 2.0)
    body = _axes(fr)
    h = 2.0 / cells
    for i in range(cells):
        for j in range(cells):
            p, q = (i + 0.5) * h, (j + 0.5) * h
            reg = theorem_region_membership(p, q)
            body.append(f'<rect x="{_fmt(fr.x(i * h))}" y="{_fmt(fr.y((j + 1) * h))}" '
                        f'width="{_fmt(fr.x(h) - fr.x(0))}" height="{_fmt(fr.y(0) - fr.y(h))}" '
                        f'fill="{REGION_COLORS[reg]}"/>')
    # the excluded edges p = 2 or q = 2 (beyond 1)
    body.append(f'<line x1="{_fmt(fr.x(2))}" y1="{_fmt(fr.y(1))}" x2="{_fmt(fr.x(2))}" '
                f'y2="{_fmt(fr.y(2))}" stroke="{REGION_COLORS["UNCOVERED"]}" stroke-width="3"/>')
    body.append(f'<line x1="{_fmt(fr.x(1))}" y1="{_fmt(fr.y(2))}" x2="{_fmt(fr.x(2))}" '
                f'y2="{_fmt(fr.y(2))}" stroke="{REGION_COLORS["UNCOVERED"]}" stroke-width="3"/>')
    for k, (name, color) in enumerate(REGION_COLORS.items()):
        body.append(f'<rect x="{WIDTH - PAD + 4}" y="{PAD + 14 * k}" width="10" height="10" '
                    f'fill="{color}"/><text x="{WIDTH - PAD - 60}" y="{PAD + 14 * k + 9}" '
                    f'font-size="9">{name}</text>')
    if pq is not None and all(math.isfinite(v) for v in pq):
        x, y = fr.x(pq[0]), fr.y(pq[1])
        text = escape(f"({pq[0]:g}, {pq[1]:g}) {label or ''}".strip())
        body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="5" fill="none" stroke="black" '
                    f'stroke-width="2"/><text x="{_fmt(x + 7)}" y="{_fmt(y - 7)}" '
                    f'font-size="11">{text}</text>')
    return _document(body, "summability regions")
