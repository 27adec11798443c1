"""Minimal SVG scatter plots of lattice points, readable back by :func:`read_scatter`."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

_NS = "http://www.w3.org/2000/svg"


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def write_scatter(path, m, n, a, b, labels=("x", "t"), title="", size=(480, 480), margin=50):
    """Scatter ``(a, b)`` with one circle per site; ``m, n`` ride along as data attributes."""
    m, n, a, b = (np.ravel(np.asarray(v)) for v in (m, n, a, b))
    W, H = size
    lo_a, hi_a = float(a.min()), float(a.max())
    lo_b, hi_b = float(b.min()), float(b.max())
    span_a = hi_a - lo_a or 1.0
    span_b = hi_b - lo_b or 1.0
    sx = lambda v: margin + (v - lo_a) / span_a * (W - 2 * margin)
    sy = lambda v: H - margin - (v - lo_b) / span_b * (H - 2 * margin)

    ET.register_namespace("", _NS)
    root = ET.Element(f"{{{_NS}}}svg", width=str(W), height=str(H), viewBox=f"0 0 {W} {H}")
    if title:
        ET.SubElement(root, f"{{{_NS}}}title").text = title
    axes = ET.SubElement(root, f"{{{_NS}}}g", {"class": "axes", "stroke": "black", "stroke-width": "1"})
    ET.SubElement(axes, f"{{{_NS}}}line", x1=str(margin), y1=str(H - margin), x2=str(W - margin), y2=str(H - margin))
    ET.SubElement(axes, f"{{{_NS}}}line", x1=str(margin), y1=str(margin), x2=str(margin), y2=str(H - margin))
    text = ET.SubElement(root, f"{{{_NS}}}g", {"class": "labels", "font-size": "11", "font-family": "sans-serif"})
    for v in _ticks(lo_a, hi_a):
        el = ET.SubElement(text, f"{{{_NS}}}text", x=f"{sx(v):.2f}", y=str(H - margin + 16), **{"text-anchor": "middle"})
        el.text = f"{v:.3g}"
    for v in _ticks(lo_b, hi_b):
        el = ET.SubElement(text, f"{{{_NS}}}text", x=str(margin - 6), y=f"{sy(v) + 4:.2f}", **{"text-anchor": "end"})
        el.text = f"{v:.3g}"
    ET.SubElement(text, f"{{{_NS}}}text", x=str(W // 2), y=str(H - 10), **{"text-anchor": "middle"}).text = labels[0]
    ET.SubElement(text, f"{{{_NS}}}text", x="14", y=str(H // 2)).text = labels[1]

    pts = ET.SubElement(root, f"{{{_NS}}}g", {"class": "points", "fill": "steelblue"})
    for mi, ni, ai, bi in zip(m, n, a, b):
        ET.SubElement(pts, f"{{{_NS}}}circle", {
            "cx": f"{sx(ai):.3f}", "cy": f"{sy(bi):.3f}", "r": "2.5",
            "data-m": str(int(mi)), "data-n": str(int(ni)),
            "data-a": repr(float(ai)), "data-b": repr(float(bi)),
        })
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)


def read_scatter(path):
    """Return ``(m, n, a, b)`` arrays from a file written by :func:`write_scatter`."""
    root = ET.parse(path).getroot()
    rows = []
    for c in root.iter(f"{{{_NS}}}circle"):
        rows.append((int(c.get("data-m")), int(c.get("data-n")), float(c.get("data-a")), float(c.get("data-b"))))
    if not rows:
        return tuple(np.zeros(0) for _ in range(4))
    m, n, a, b = zip(*rows)
    return np.array(m), np.array(n), np.array(a), np.array(b)
