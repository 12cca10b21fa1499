"""Geodesy, elevation raster lookup, and boundary polygon containment.

Spherical earth throughout (R = 6,371,000 m); at the tens-of-meters link
scales simulated here the ellipsoidal correction is noise. Elevation data
is an ESRI-style ASCII grid with values at grid nodes, top row northernmost.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvariantViolation, NoData, OutOfBounds, ParseError

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    """WGS-84 position; altitude is meters above ground level when present."""

    lat: float
    lon: float
    alt_agl_m: float | None = None

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise InvariantViolation(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvariantViolation(f"lon {self.lon} outside [-180, 180]")
        if self.alt_agl_m is not None and self.alt_agl_m < 0:
            raise InvariantViolation(f"alt_agl_m {self.alt_agl_m} negative")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters between two points (altitude ignored)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def slant_range_m(a: GeoPoint, b: GeoPoint) -> float:
    """3-D separation: great-circle ground distance combined with the AGL delta.

    Assumes locally flat ground between the two points, which holds at the
    sub-kilometer scales this simulator operates on.
    """
    horiz = haversine_m(a, b)
    alt_a = a.alt_agl_m or 0.0
    alt_b = b.alt_agl_m or 0.0
    return math.hypot(horiz, alt_b - alt_a)


@dataclass(frozen=True)
class ElevationRaster:
    """Ground elevation (m ASL) sampled at grid nodes.

    Node (r, c) of `values` sits at lon = xll + c*cellsize and
    lat = yll + (nrows-1-r)*cellsize, i.e. row 0 is the northernmost row,
    matching the file layout.
    """

    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: tuple[float, ...]

    def __post_init__(self):
        if self.ncols < 1 or self.nrows < 1:
            raise InvariantViolation("raster dimensions must be positive")
        if self.cellsize <= 0:
            raise InvariantViolation("cellsize must be positive")
        if len(self.values) != self.ncols * self.nrows:
            raise InvariantViolation(
                f"value count {len(self.values)} != ncols*nrows {self.ncols * self.nrows}"
            )
        for v in self.values:
            if v != self.nodata and not math.isfinite(v):
                raise InvariantViolation(f"non-finite elevation {v}")

    def node(self, r: int, c: int) -> float:
        return self.values[r * self.ncols + c]


def _axis_fraction(coord: float, origin: float, cellsize: float, n: int) -> float:
    """Map a coordinate to a fractional node index, or raise OutOfBounds.

    A single-node axis degenerates to a constant over one nominal cell width,
    so a 1x1 raster still covers its footprint.
    """
    u = (coord - origin) / cellsize
    if n == 1:
        if 0.0 <= u <= 1.0:
            return 0.0
        raise OutOfBounds(f"coordinate {coord} outside single-node axis")
    if 0.0 <= u <= n - 1:
        return u
    raise OutOfBounds(f"coordinate {coord} outside node range [{origin}, {origin + (n - 1) * cellsize}]")


def ground_height_at(r: ElevationRaster, lat: float, lon: float) -> float:
    """Bilinear interpolation of the four grid nodes surrounding (lat, lon).

    Raises OutOfBounds beyond the node lattice and NoData if any of the
    surrounding nodes carries the nodata sentinel.
    """
    u = _axis_fraction(lon, r.xll, r.cellsize, r.ncols)
    v = _axis_fraction(lat, r.yll, r.cellsize, r.nrows)

    c0 = min(int(math.floor(u)), r.ncols - 2) if r.ncols > 1 else 0
    i0 = min(int(math.floor(v)), r.nrows - 2) if r.nrows > 1 else 0
    c1 = min(c0 + 1, r.ncols - 1)
    i1 = min(i0 + 1, r.nrows - 1)
    fu = u - c0
    fv = v - i0

    # v counts north from yll; rows count south from the top of the file.
    r0 = r.nrows - 1 - i0
    r1 = r.nrows - 1 - i1
    corners = (r.node(r0, c0), r.node(r0, c1), r.node(r1, c0), r.node(r1, c1))
    if any(z == r.nodata for z in corners):
        raise NoData(f"nodata cell adjacent to ({lat}, {lon})")
    z00, z01, z10, z11 = corners
    south = z00 * (1.0 - fu) + z01 * fu
    north = z10 * (1.0 - fu) + z11 * fu
    return south * (1.0 - fv) + north * fv


_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value")


def load_raster(text: str) -> ElevationRaster:
    """Parse an ASCII-grid raster; ParseError carries the 1-based line number."""
    lines = text.splitlines()
    header: dict[str, float] = {}
    for i, key in enumerate(_HEADER_KEYS):
        if i >= len(lines):
            raise ParseError(f"line {i + 1}: missing header '{key}'")
        parts = lines[i].split()
        if len(parts) != 2 or parts[0] != key:
            raise ParseError(f"line {i + 1}: expected '{key} <value>', got {lines[i]!r}")
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise ParseError(f"line {i + 1}: bad numeric value {parts[1]!r}") from None

    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols != header["ncols"] or nrows != header["nrows"]:
        raise ParseError("line 1: ncols/nrows must be integers")

    values: list[float] = []
    row_count = 0
    for lineno in range(len(_HEADER_KEYS), len(lines)):
        line = lines[lineno].strip()
        if not line:
            continue
        row = line.split()
        if len(row) != ncols:
            raise ParseError(f"line {lineno + 1}: expected {ncols} values, got {len(row)}")
        try:
            values.extend(float(tok) for tok in row)
        except ValueError:
            raise ParseError(f"line {lineno + 1}: bad numeric value") from None
        row_count += 1
    if row_count != nrows:
        raise ParseError(f"expected {nrows} data rows, got {row_count}")

    return ElevationRaster(
        ncols=ncols,
        nrows=nrows,
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cellsize=header["cellsize"],
        nodata=header["NODATA_value"],
        values=tuple(values),
    )


def emit_raster(r: ElevationRaster) -> str:
    """Canonical text form; load_raster(emit_raster(r)) == r, byte-stable."""
    out = [
        f"ncols {r.ncols}",
        f"nrows {r.nrows}",
        f"xllcorner {r.xll!r}",
        f"yllcorner {r.yll!r}",
        f"cellsize {r.cellsize!r}",
        f"NODATA_value {r.nodata!r}",
    ]
    for row in range(r.nrows):
        out.append(" ".join(repr(v) for v in r.values[row * r.ncols:(row + 1) * r.ncols]))
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class BoundaryPolygon:
    """Flight-zone fence in the lon/lat plane, implicitly closed."""

    vertices: tuple[GeoPoint, ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise InvariantViolation("polygon needs at least 3 vertices")
        if self._self_intersects():
            raise InvariantViolation("polygon is self-intersecting")

    def _self_intersects(self) -> bool:
        n = len(self.vertices)
        segs = [
            ((self.vertices[i].lon, self.vertices[i].lat),
             (self.vertices[(i + 1) % n].lon, self.vertices[(i + 1) % n].lat))
            for i in range(n)
        ]
        for i in range(n):
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue  # shared endpoint with a neighbour is fine
                if _segments_intersect(segs[i][0], segs[i][1], segs[j][0], segs[j][1]):
                    return True
        return False


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment_2d(p, q, r) -> bool:
    """q collinear with p-r: is q within the segment's bounding box?"""
    return (min(p[0], r[0]) <= q[0] <= max(p[0], r[0])
            and min(p[1], r[1]) <= q[1] <= max(p[1], r[1]))


def _segments_intersect(a, b, c, d) -> bool:
    o1 = _orient(a, b, c)
    o2 = _orient(a, b, d)
    o3 = _orient(c, d, a)
    o4 = _orient(c, d, b)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0:
        return True
    if o1 == 0 and _on_segment_2d(a, c, b):
        return True
    if o2 == 0 and _on_segment_2d(a, d, b):
        return True
    if o3 == 0 and _on_segment_2d(c, a, d):
        return True
    if o4 == 0 and _on_segment_2d(c, b, d):
        return True
    return False


def point_in_polygon(poly: BoundaryPolygon, q: GeoPoint) -> bool:
    """Ray casting in the lon/lat plane; points on the boundary count as inside."""
    x, y = q.lon, q.lat
    pts = [(p.lon, p.lat) for p in poly.vertices]
    n = len(pts)
    inside = False
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        if _orient((x1, y1), (x2, y2), (x, y)) == 0 and _on_segment_2d((x1, y1), (x, y), (x2, y2)):
            return True
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside
