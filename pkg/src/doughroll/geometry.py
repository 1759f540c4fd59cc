"""Point-cloud featurization of the dough surface.

Turns a table-frame point cloud into the low-dimensional observation used
everywhere else: bounding-rectangle length/width, dome height, and the planar
position of the highest point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Points closer than this to the table plane are treated as table noise.
TABLE_FILTER_MARGIN = 0.002


class DegenerateHullError(ValueError):
    """Fewer than three non-collinear points; no 2-D hull exists."""


class NoDoughError(RuntimeError):
    """Cloud is empty (or degenerate) after table filtering."""


@dataclass(frozen=True)
class DoughState:
    """Observed dough features, all in meters.

    l and w are the long and short sides of the minimum-area bounding
    rectangle of the x-y footprint (l >= w), h is the dome height above the
    table, and (x_h, y_h) is the planar position of the highest point.
    """

    l: float
    w: float
    h: float
    x_h: float
    y_h: float

    def lwh(self) -> np.ndarray:
        return np.array([self.l, self.w, self.h], dtype=float)


def convex_hull_2d(points) -> np.ndarray:
    """Counter-clockwise convex hull (Andrew's monotone chain).

    Collinear boundary points are dropped, so the result only contains the
    hull's corner vertices.  Raises DegenerateHullError for inputs whose hull
    has no area (fewer than 3 points, or all collinear).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] < 3:
        raise DegenerateHullError(f"need >= 3 points, got {pts.shape[0]}")
    # Sort lexicographically by (x, y) and deduplicate.
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(np.diff(pts, axis=0) != 0.0, axis=1)
    pts = pts[keep]
    if pts.shape[0] < 3:
        raise DegenerateHullError("fewer than 3 distinct points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise DegenerateHullError("points are collinear")
    return hull


def min_area_rect(hull) -> tuple[float, float, float, np.ndarray]:
    """Minimum-area bounding rectangle of a convex polygon.

    Returns (length, width, angle, center) with length >= width.  angle is
    the orientation of the length side in [0, pi).  Uses rotating calipers:
    the optimal rectangle is aligned with one of the hull edges, so only the
    edge directions need to be tried.  Ties in area are broken by the
    smallest angle folded into [0, pi/2).
    """
    hv = np.asarray(hull, dtype=float).reshape(-1, 2)
    if hv.shape[0] < 3:
        raise DegenerateHullError("rectangle of a degenerate hull")
    edges = np.roll(hv, -1, axis=0) - hv
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    if np.any(lengths == 0.0):
        raise DegenerateHullError("hull has zero-length edge")

    best = None  # (area, tie_angle, length, width, angle, center)
    for k in range(hv.shape[0]):
        ux, uy = edges[k] / lengths[k]
        # Coordinates in the frame aligned with this edge.
        s = hv @ np.array([ux, uy])
        t = hv @ np.array([-uy, ux])
        ext_s = s.max() - s.min()
        ext_t = t.max() - t.min()
        area = ext_s * ext_t
        theta = math.atan2(uy, ux)
        if ext_s >= ext_t:
            length, width, angle = ext_s, ext_t, theta
        else:
            length, width, angle = ext_t, ext_s, theta + 0.5 * math.pi
        angle = angle % math.pi
        tie_angle = angle % (0.5 * math.pi)
        mid_s = 0.5 * (s.max() + s.min())
        mid_t = 0.5 * (t.max() + t.min())
        center = np.array([mid_s * ux - mid_t * uy, mid_s * uy + mid_t * ux])
        cand = (area, tie_angle, length, width, angle, center)
        if best is None or area < best[0] * (1.0 - 1e-12):
            best = cand
        elif area <= best[0] * (1.0 + 1e-12) and tie_angle < best[1]:
            best = cand
    assert best is not None
    return best[2], best[3], best[4], best[5]


def featurize(cloud, table_z: float = 0.0, margin: float = TABLE_FILTER_MARGIN) -> DoughState:
    """Extract the DoughState observation from a surface point cloud.

    Points with z <= table_z + margin are discarded as table-plane noise.
    Raises NoDoughError when nothing (or a degenerate footprint) remains.
    """
    pts = np.asarray(cloud, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) cloud, got shape {pts.shape}")
    if pts.shape[0] == 0:
        raise NoDoughError("empty point cloud")
    pts = pts[pts[:, 2] > table_z + margin]
    if pts.shape[0] == 0:
        raise NoDoughError("no points above the table filter margin")

    z = pts[:, 2]
    zmax = z.max()
    top = pts[z == zmax]
    # Deterministic tie-break: lexicographically smallest (x, y).
    ti = np.lexsort((top[:, 1], top[:, 0]))[0]
    x_h, y_h = float(top[ti, 0]), float(top[ti, 1])
    h = float(zmax - table_z)

    try:
        hull = convex_hull_2d(pts[:, :2])
    except DegenerateHullError as exc:
        raise NoDoughError(f"degenerate dough footprint: {exc}") from exc
    length, width, _, _ = min_area_rect(hull)
    return DoughState(l=float(length), w=float(width), h=h, x_h=x_h, y_h=y_h)


def read_cloud_text(path) -> np.ndarray:
    """Read a whitespace-delimited "x y z" cloud file (meters)."""
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return np.array(rows, dtype=float).reshape(-1, 3)


def write_cloud_text(path, cloud) -> None:
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    with open(path, "w") as fh:
        for x, y, z in pts:
            fh.write(f"{x!r} {y!r} {z!r}\n")
