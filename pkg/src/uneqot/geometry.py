"""Exact planar geometry for convex domains bounded by segments and circular arcs.

A domain boundary is a counter-clockwise list of pieces.  Clipping by a
half-plane ``{x : a.x >= b}`` keeps the inside sub-pieces and closes the gaps
with chords, so the result is again a closed boundary.  Areas then follow
from Green's theorem, ``area = 1/2 \\oint (x dy - y dx)``, with no quadrature
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple, Union

Point = Tuple[float, float]
HalfPlane = Tuple[Tuple[float, ...], float]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Segment:
    p0: Point
    p1: Point

    @property
    def start(self) -> Point:
        return self.p0

    @property
    def end(self) -> Point:
        return self.p1

    def green(self) -> float:
        return 0.5 * (self.p0[0] * self.p1[1] - self.p1[0] * self.p0[1])

    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])


@dataclass(frozen=True)
class Arc:
    """Arc of the circle of given radius centred at the origin, traversed CCW."""

    radius: float
    theta0: float
    theta1: float

    @property
    def start(self) -> Point:
        return (self.radius * math.cos(self.theta0), self.radius * math.sin(self.theta0))

    @property
    def end(self) -> Point:
        return (self.radius * math.cos(self.theta1), self.radius * math.sin(self.theta1))

    def green(self) -> float:
        return 0.5 * self.radius**2 * (self.theta1 - self.theta0)

    def length(self) -> float:
        return self.radius * (self.theta1 - self.theta0)


Piece = Union[Segment, Arc]


def rectangle_boundary(x0: float, x1: float, y0: float, y1: float) -> List[Piece]:
    return [
        Segment((x0, y0), (x1, y0)),
        Segment((x1, y0), (x1, y1)),
        Segment((x1, y1), (x0, y1)),
        Segment((x0, y1), (x0, y0)),
    ]


def quarter_disk_boundary(radius: float = 1.0) -> List[Piece]:
    return [
        Segment((0.0, 0.0), (radius, 0.0)),
        Arc(radius, 0.0, 0.5 * math.pi),
        Segment((0.0, radius), (0.0, 0.0)),
    ]


def _lerp(p: Point, q: Point, t: float) -> Point:
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def _clip_segment(seg: Segment, a: Sequence[float], b: float) -> List[Piece]:
    f0 = a[0] * seg.p0[0] + a[1] * seg.p0[1] - b
    f1 = a[0] * seg.p1[0] + a[1] * seg.p1[1] - b
    if f0 >= 0.0 and f1 >= 0.0:
        return [seg]
    if f0 < 0.0 and f1 < 0.0:
        return []
    t = f0 / (f0 - f1)
    cut = _lerp(seg.p0, seg.p1, t)
    if f0 >= 0.0:
        return [Segment(seg.p0, cut)]
    return [Segment(cut, seg.p1)]


def _arc_inside_intervals(arc: Arc, a: Sequence[float], b: float) -> List[Tuple[float, float]]:
    amp = math.hypot(a[0], a[1]) * arc.radius
    if amp == 0.0:
        return [(arc.theta0, arc.theta1)] if -b >= 0.0 else []
    c = b / amp
    if c <= -1.0:
        return [(arc.theta0, arc.theta1)]
    if c > 1.0:
        return []
    phi = math.atan2(a[1], a[0])
    alpha = math.acos(c)
    out = []
    base = math.floor((arc.theta0 - phi - alpha) / TWO_PI)
    for shift in range(base - 1, base + 3):
        lo = max(arc.theta0, phi - alpha + TWO_PI * shift)
        hi = min(arc.theta1, phi + alpha + TWO_PI * shift)
        if hi > lo:
            out.append((lo, hi))
    out.sort()
    return out


def clip(pieces: Sequence[Piece], a: Sequence[float], b: float) -> List[Piece]:
    """Intersect the region bounded by ``pieces`` with ``{x : a.x >= b}``."""
    kept: List[Piece] = []
    for piece in pieces:
        if isinstance(piece, Segment):
            kept.extend(_clip_segment(piece, a, b))
        else:
            kept.extend(Arc(piece.radius, lo, hi) for lo, hi in _arc_inside_intervals(piece, a, b))
    if len(kept) == 0:
        return []
    closed: List[Piece] = []
    n = len(kept)
    for i, piece in enumerate(kept):
        closed.append(piece)
        nxt = kept[(i + 1) % n]
        if piece.end != nxt.start:
            closed.append(Segment(piece.end, nxt.start))
    return closed


def clip_many(pieces: Sequence[Piece], halfplanes: Iterable[HalfPlane]) -> List[Piece]:
    out = list(pieces)
    for a, b in halfplanes:
        if not out:
            break
        out = clip(out, a, b)
    return out


def area(pieces: Sequence[Piece]) -> float:
    return max(sum(p.green() for p in pieces), 0.0)


def linear_extremes(pieces: Sequence[Piece], a: Sequence[float]) -> Tuple[float, float]:
    """Minimum and maximum of ``x -> a.x`` over the closed region bounded by ``pieces``."""
    if not pieces:
        return math.inf, -math.inf
    values = []
    for piece in pieces:
        for p in (piece.start, piece.end):
            values.append(a[0] * p[0] + a[1] * p[1])
        if isinstance(piece, Arc):
            phi = math.atan2(a[1], a[0])
            amp = math.hypot(a[0], a[1]) * piece.radius
            for target, sign in ((phi, 1.0), (phi + math.pi, -1.0)):
                shift = math.ceil((piece.theta0 - target) / TWO_PI)
                theta = target + TWO_PI * shift
                if theta <= piece.theta1:
                    values.append(sign * amp)
    return min(values), max(values)


def line_chord(pieces: Sequence[Piece], a: Sequence[float], t: float, tol: float = 1e-13) -> Tuple[Point, Point] | None:
    """Intersection of the line ``{a.x = t}`` with the closed convex region.

    Returns the chord endpoints ordered along ``(-a2, a1)``, or ``None`` when
    the line misses the region.  A tangent line yields a degenerate chord.
    """
    norm = math.hypot(a[0], a[1])
    if norm == 0.0:
        return None
    hits: List[Point] = []
    for piece in pieces:
        if isinstance(piece, Segment):
            f0 = (a[0] * piece.p0[0] + a[1] * piece.p0[1] - t) / norm
            f1 = (a[0] * piece.p1[0] + a[1] * piece.p1[1] - t) / norm
            if abs(f0) <= tol and abs(f1) <= tol:
                hits.extend([piece.p0, piece.p1])
            elif abs(f0) <= tol:
                hits.append(piece.p0)
            elif abs(f1) <= tol:
                hits.append(piece.p1)
            elif (f0 < 0.0) != (f1 < 0.0):
                hits.append(_lerp(piece.p0, piece.p1, f0 / (f0 - f1)))
        else:
            amp = norm * piece.radius
            c = t / amp
            if c > 1.0 + tol or c < -1.0 - tol:
                continue
            c = min(1.0, max(-1.0, c))
            phi = math.atan2(a[1], a[0])
            alpha = math.acos(c)
            for target in (phi - alpha, phi + alpha):
                shift = math.ceil((piece.theta0 - target - 1e-15) / TWO_PI)
                theta = target + TWO_PI * shift
                if theta <= piece.theta1 + 1e-15:
                    hits.append((piece.radius * math.cos(theta), piece.radius * math.sin(theta)))
    if not hits:
        return None
    d = (-a[1] / norm, a[0] / norm)
    proj = [d[0] * p[0] + d[1] * p[1] for p in hits]
    i_lo = min(range(len(hits)), key=proj.__getitem__)
    i_hi = max(range(len(hits)), key=proj.__getitem__)
    return hits[i_lo], hits[i_hi]
