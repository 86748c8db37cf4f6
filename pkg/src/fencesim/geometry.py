"""2D convex hull and point-to-hull distance.

The hull is the fencing region; the fencing metric is the Euclidean
distance from the target to it (zero when the target is inside or on the
boundary). Degenerate hulls (a single point, a segment of collinear
agents) are first-class: a three-agent formation can pass arbitrarily
close to collinearity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Vec2

# Cross products of O(10)-magnitude coordinates: treat |cross| <= 1e-12
# as collinear.
COLLINEAR_TOL = 1e-12


def _cross(o: Vec2, a: Vec2, b: Vec2) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


@dataclass(frozen=True)
class Polygon:
    """Convex polygon as a counterclockwise vertex list (possibly degenerate)."""

    vertices: tuple[Vec2, ...]

    def __post_init__(self):
        if len(self.vertices) == 0:
            raise ValueError("Polygon needs at least one vertex")
        object.__setattr__(self, "vertices", tuple(self.vertices))


def convex_hull(points: list[Vec2]) -> Polygon:
    """Monotone-chain hull. One point gives a point, collinear input a segment."""
    if len(points) == 0:
        raise ValueError("convex_hull of empty point set")
    pts = sorted(set((p.x, p.y) for p in points))
    if len(pts) == 1:
        return Polygon((Vec2(*pts[0]),))
    uniq = [Vec2(x, y) for x, y in pts]

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= COLLINEAR_TOL:
                out.pop()
            out.append(p)
        return out

    lower = chain(uniq)
    upper = chain(reversed(uniq))
    verts = lower[:-1] + upper[:-1]
    if len(verts) < 2:
        # fully collinear input collapses to the two extreme points
        verts = [uniq[0], uniq[-1]]
    return Polygon(tuple(verts))


def _point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> float:
    ab = b - a
    ap = p - a
    denom = ab.x * ab.x + ab.y * ab.y
    if denom == 0.0:
        return ap.norm()
    t = (ap.x * ab.x + ap.y * ab.y) / denom
    t = min(1.0, max(0.0, t))
    return Vec2(a.x + t * ab.x - p.x, a.y + t * ab.y - p.y).norm()


def distance_to_hull(p: Vec2, hull: Polygon) -> float:
    """Distance from p to the hull; exactly zero inside or on the boundary."""
    verts = hull.vertices
    if len(verts) == 1:
        return (p - verts[0]).norm()
    if len(verts) == 2:
        return _point_segment_distance(p, verts[0], verts[1])
    inside = True
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        if _cross(a, b, p) < -COLLINEAR_TOL:
            inside = False
            break
    if inside:
        return 0.0
    return min(_point_segment_distance(p, verts[i], verts[(i + 1) % len(verts)])
               for i in range(len(verts)))
