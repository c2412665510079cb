"""Brute-force reference implementations used as test oracles.

These deliberately avoid numpy vectorization and the package's own helpers
so they stay independent of the code they check.
"""

from fractions import Fraction
import math


def tile_detections(pixels, height, width, channels, threshold=200, block=8):
    """Detector oracle: nested loops over every tile and pixel.

    *pixels* is a nested list ``pixels[y][x][c]``.  Returns a list of
    ``(score, (x0, y0, x1, y1))`` in row-major tile order, with the score and
    box as exact float64 values before float32 storage.
    """
    out = []
    for ty in range(height // block):
        for tx in range(width // block):
            total = 0
            for y in range(ty * block, ty * block + block):
                for x in range(tx * block, tx * block + block):
                    for c in range(channels):
                        total += pixels[y][x][c]
            mean = total / (block * block * channels)
            if mean > threshold:
                out.append((mean / 255, (tx * block / width, ty * block / height,
                                         (tx + 1) * block / width, (ty + 1) * block / height)))
    return out


def exact_stats(values):
    """Mean, median and population variance in exact rational arithmetic."""
    fr = [Fraction(v) for v in values]
    n = len(fr)
    mean = sum(fr) / n
    s = sorted(fr)
    median = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2
    var = sum((v - mean) ** 2 for v in fr) / n
    return float(mean), float(median), float(var), math.sqrt(float(var))


def border_pixels(bbox, width, height):
    """Set of (y, x) on the 1-pixel border of a normalized box.

    Rounding is half-up (floor(v + 1/2) evaluated exactly), then clamped.
    """
    def px(v, size):
        r = math.floor(Fraction(v) * size + Fraction(1, 2))
        return min(max(r, 0), size - 1)

    x0, y0, x1, y1 = (px(bbox[0], width), px(bbox[1], height), px(bbox[2], width), px(bbox[3], height))
    pts = set()
    for y in range(height):
        for x in range(width):
            inside = x0 <= x <= x1 and y0 <= y <= y1
            on_edge = x in (x0, x1) or y in (y0, y1)
            if inside and on_edge:
                pts.add((y, x))
    return pts


def nodes_on_cycles(edges, nodes):
    """Nodes that can reach themselves, by DFS from every node."""
    succ = {n: set() for n in nodes}
    for a, b in edges:
        succ[a].add(b)
    on = set()
    for start in nodes:
        seen, stack = set(), list(succ[start])
        while stack:
            v = stack.pop()
            if v == start:
                on.add(start)
                break
            if v not in seen:
                seen.add(v)
                stack.extend(succ[v])
    return on
