"""Uniform grids, convex domains, zero extension and star-shape geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import InvalidArgument, ParseError

__all__ = [
    "Grid",
    "ScalarField",
    "ConvexDomain",
    "make_grid",
    "periodic_grid",
    "extend_by_zero",
    "radial_function",
    "scale_domain",
    "separation",
    "scale_field",
    "lp_norm",
    "parse_domain_record",
    "parse_domain_file",
]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid in one or two dimensions.

    Node ``i`` along axis ``k`` sits at ``box[k][0] + i * spacing[k]``. Values
    on the grid are arrays of shape ``shape`` indexed ``'ij'``.
    """

    box: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        if len(self.box) != len(self.shape) or len(self.shape) not in (1, 2):
            raise InvalidArgument("grid dimension must be 1 or 2")
        for (a, b), n in zip(self.box, self.shape):
            if not (np.isfinite(a) and np.isfinite(b)) or not b > a:
                raise InvalidArgument(f"degenerate interval [{a}, {b}]")
            if int(n) != n or n < 2:
                raise InvalidArgument(f"need at least 2 points per axis, got {n}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for (a, b), n in zip(self.box, self.shape))

    @property
    def weight(self) -> float:
        """Node weight ``prod(h_k)`` used by every discrete integral."""
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, k: int) -> np.ndarray:
        a = self.box[k][0]
        return a + np.arange(self.shape[k]) * self.spacing[k]

    @property
    def axes(self) -> list[np.ndarray]:
        return [self.axis(k) for k in range(self.dim)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    def points(self) -> np.ndarray:
        """Node coordinates as a ``(size, dim)`` array in lexicographic order."""
        return self.coords().reshape(self.dim, -1).T

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def same_as(self, other: "Grid", rtol: float = 1e-12) -> bool:
        if self.shape != other.shape:
            return False
        return bool(np.allclose(np.ravel(self.box), np.ravel(other.box), rtol=rtol, atol=0.0))

    def describe(self) -> str:
        parts = [f"[{a:g},{b:g}]x{n}" for (a, b), n in zip(self.box, self.shape)]
        return " * ".join(parts)


def make_grid(box, points_per_axis) -> Grid:
    """Build a grid from per-axis intervals and point counts.

    ``box`` may be a single ``(a, b)`` pair for 1D; ``points_per_axis`` may be
    an integer, in which case it is used on every axis.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    if box.ndim != 2 or box.shape[1] != 2:
        raise InvalidArgument("box must be a list of (a, b) intervals")
    if np.isscalar(points_per_axis):
        points_per_axis = [points_per_axis] * box.shape[0]
    pts = tuple(int(n) for n in points_per_axis)
    if any(int(n) != n for n in points_per_axis):
        raise InvalidArgument("points per axis must be integers")
    return Grid(tuple((float(a), float(b)) for a, b in box), pts)


def periodic_grid(box, points_per_axis) -> Grid:
    """Grid sampling the torus ``box`` with the right endpoint dropped.

    The period along axis k is ``b_k - a_k`` and the spacing is
    ``(b_k - a_k) / N_k``.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    if np.isscalar(points_per_axis):
        points_per_axis = [points_per_axis] * box.shape[0]
    new_box = []
    for (a, b), n in zip(box, points_per_axis):
        new_box.append((a, b - (b - a) / n))
    return make_grid(new_box, points_per_axis)


def lp_norm(values: np.ndarray, grid: Grid, p: float = 2.0, mask: np.ndarray | None = None) -> float:
    """Node-weight L^p norm. ``p = inf`` gives the max norm."""
    v = np.abs(np.asarray(values, dtype=float))
    if mask is not None:
        v = np.where(mask, v, 0.0)
    if np.isinf(p):
        return float(v.max(initial=0.0))
    return float((grid.weight * np.sum(v**p)) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Grid values together with the mask of nodes lying in the domain."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise InvalidArgument("field values must be finite")
        if self.mask is None:
            mask = np.ones(self.grid.shape, dtype=bool)
        else:
            mask = np.array(self.mask, dtype=bool, copy=True).reshape(self.grid.shape)
        vals.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mask", mask)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.mask)

    def zero_extended(self) -> "ScalarField":
        """The field with every off-mask node set to zero."""
        return self.with_values(np.where(self.mask, self.values, 0.0))

    def vanishes_off_mask(self) -> bool:
        return not np.any(self.values[~self.mask])

    def norm(self, p: float = 2.0, on_mask: bool = False) -> float:
        return lp_norm(self.values, self.grid, p, self.mask if on_mask else None)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return self.with_values(self.values - other.values)

    def __mul__(self, a: float) -> "ScalarField":
        return self.with_values(a * self.values)

    __rmul__ = __mul__


def extend_by_zero(f: ScalarField, target: Grid, rtol: float = 1e-9) -> ScalarField:
    """Embed ``f`` into a larger grid with matching spacing and alignment."""
    if f.grid.dim != target.dim:
        raise InvalidArgument("dimension mismatch")
    slices = []
    for k in range(target.dim):
        hs, ht = f.grid.spacing[k], target.spacing[k]
        if abs(hs - ht) > rtol * ht:
            raise InvalidArgument(f"spacing mismatch on axis {k}: {hs} vs {ht}")
        off = (f.grid.box[k][0] - target.box[k][0]) / ht
        i0 = int(round(off))
        if abs(off - i0) > 1e-6 or i0 < 0 or i0 + f.grid.shape[k] > target.shape[k]:
            raise InvalidArgument(f"source nodes are not target nodes on axis {k}")
        slices.append(slice(i0, i0 + f.grid.shape[k]))
    vals = np.zeros(target.shape)
    mask = np.zeros(target.shape, dtype=bool)
    vals[tuple(slices)] = f.values
    mask[tuple(slices)] = f.mask
    return ScalarField(target, vals, mask)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """Interval, axis-aligned rectangle or convex polygon.

    Polygon vertices are stored counterclockwise. Rectangles are kept as
    four-vertex polygons with ``kind == "rect"``.
    """

    kind: str
    vertices: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float, copy=True)
        c = np.array(self.center, dtype=float, copy=True).reshape(-1)
        if self.kind == "interval":
            v = np.sort(v.reshape(-1))[:, None]
            if v.shape[0] != 2 or not v[1, 0] > v[0, 0]:
                raise InvalidArgument("interval needs two distinct endpoints")
        elif self.kind in ("rect", "polygon"):
            if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
                raise InvalidArgument("polygon needs at least three 2D vertices")
            edges = np.roll(v, -1, axis=0) - v
            turn = _cross(edges, np.roll(edges, -1, axis=0))
            if np.all(turn <= 0):
                v = v[::-1].copy()
                edges = np.roll(v, -1, axis=0) - v
                turn = _cross(edges, np.roll(edges, -1, axis=0))
            scale = np.max(np.abs(v)) ** 2 + 1.0
            if np.any(turn < -1e-12 * scale) or not np.any(turn > 0):
                raise InvalidArgument("polygon is not convex")
        else:
            raise InvalidArgument(f"unknown domain kind {self.kind!r}")
        if c.shape[0] != v.shape[1]:
            raise InvalidArgument("center dimension does not match vertices")
        v.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "center", c)
        if not self.contains(c[None, :], strict=True)[0]:
            raise InvalidArgument("center must lie strictly inside the domain")

    # constructors -----------------------------------------------------
    @classmethod
    def interval(cls, a: float, b: float, center: float | None = None) -> "ConvexDomain":
        c = 0.5 * (a + b) if center is None else center
        return cls("interval", np.array([[a], [b]]), np.array([c]))

    @classmethod
    def rectangle(cls, x0: float, x1: float, y0: float, y1: float, center=None) -> "ConvexDomain":
        v = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
        c = v.mean(axis=0) if center is None else center
        return cls("rect", v, c)

    @classmethod
    def polygon(cls, vertices, center=None) -> "ConvexDomain":
        v = np.asarray(vertices, dtype=float)
        c = v.mean(axis=0) if center is None else center
        return cls("polygon", v, c)

    @classmethod
    def regular_polygon(cls, k: int, radius: float = 1.0, center=(0.0, 0.0)) -> "ConvexDomain":
        t = 2 * np.pi * np.arange(k) / k
        c = np.asarray(center, dtype=float)
        v = c + radius * np.stack([np.cos(t), np.sin(t)], axis=1)
        return cls("polygon", v, c)

    # geometry ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def bounds(self) -> np.ndarray:
        """Bounding box as a ``(dim, 2)`` array."""
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)], axis=1)

    def contains(self, points: np.ndarray, strict: bool = False, tol: float = 1e-12) -> np.ndarray:
        """Membership test for an ``(m, dim)`` array of points.

        The closed domain is used unless ``strict`` is set; ``tol`` is an
        absolute slack on the boundary test in both cases.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if self.kind == "interval":
            a, b = self.vertices[0, 0], self.vertices[1, 0]
            x = pts[:, 0]
            if strict:
                return (x > a + tol) & (x < b - tol)
            return (x >= a - tol) & (x <= b + tol)
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(e, axis=1)
        # signed distance to every edge line, positive inside
        d = _cross(e[None, :, :], pts[:, None, :] - v[None, :, :]) / lengths
        if strict:
            return np.all(d > tol, axis=1)
        return np.all(d >= -tol, axis=1)

    def mask(self, grid: Grid, tol: float | None = None) -> np.ndarray:
        """Boolean node mask of the closed domain on ``grid``."""
        if grid.dim != self.dim:
            raise InvalidArgument("grid and domain dimensions differ")
        if tol is None:
            tol = 1e-9 * max(grid.spacing)
        return self.contains(grid.points(), tol=tol).reshape(grid.shape)

    def recentered(self) -> "ConvexDomain":
        """Translate so that the center sits at the origin."""
        return ConvexDomain(self.kind, self.vertices - self.center, np.zeros(self.dim))

    def inradius(self) -> float:
        """Distance from the center to the boundary."""
        if self.kind == "interval":
            return float(min(self.center[0] - self.vertices[0, 0], self.vertices[1, 0] - self.center[0]))
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        d = _cross(e, self.center - v) / np.linalg.norm(e, axis=1)
        return float(d.min())


def radial_function(domain: ConvexDomain, direction) -> float | np.ndarray:
    """Distance from the domain center to its boundary along ``direction``.

    ``direction`` is a unit vector, or an ``(m, dim)`` stack of them, in
    which case an array of ``m`` values is returned.
    """
    u = np.asarray(direction, dtype=float)
    single = u.ndim <= 1
    u = u.reshape(-1, domain.dim)
    norms = np.linalg.norm(u, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise InvalidArgument("direction must be a unit vector")
    c = domain.center
    if domain.kind == "interval":
        a, b = domain.vertices[0, 0], domain.vertices[1, 0]
        lam = np.where(u[:, 0] > 0, b - c[0], c[0] - a)
    else:
        p = domain.vertices - c
        e = np.roll(p, -1, axis=0) - p
        denom = _cross(u[:, None, :], e[None, :, :])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = _cross(p[None, :, :], e[None, :, :]) / denom
            s = _cross(p[None, :, :], u[:, None, :]) / denom
        ok = (np.abs(denom) > 1e-300) & (s >= -1e-12) & (s <= 1 + 1e-12) & (t > 0)
        lam = np.where(ok, t, np.inf).min(axis=1)
    return float(lam[0]) if single else lam


def scale_domain(domain: ConvexDomain, rho: float) -> ConvexDomain:
    """The dilated domain ``rho * domain`` (all coordinates multiplied by ``rho``)."""
    if not rho > 0:
        raise InvalidArgument("scaling factor must be positive")
    return ConvexDomain(domain.kind, rho * domain.vertices, rho * domain.center)


def _boundary(domain: ConvexDomain, theta: np.ndarray, rho: float) -> np.ndarray:
    u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return rho * radial_function(domain, u)[:, None] * u


def _min_pair(b1: np.ndarray, b2: np.ndarray, chunk: int = 256) -> tuple[float, int, int]:
    best, bi, bj = np.inf, 0, 0
    for s in range(0, b1.shape[0], chunk):
        blk = b1[s : s + chunk]
        d2 = np.sum((blk[:, None, :] - b2[None, :, :]) ** 2, axis=-1)
        k = int(np.argmin(d2))
        i, j = divmod(k, b2.shape[0])
        if d2[i, j] < best:
            best, bi, bj = float(d2[i, j]), s + i, j
    return math.sqrt(best), bi, bj


def separation(
    domain: ConvexDomain,
    rho1: float,
    rho2: float,
    n_dirs: int = 4096,
    refinements: int = 3,
    return_residual: bool = False,
):
    """Distance between the boundaries of ``rho1 * Omega`` and ``rho2 * Omega``.

    Both boundaries are parametrized by the radial function about the
    domain center. In 2D the infimum over boundary pairs is approximated by
    sampling ``n_dirs`` angles per boundary and then refining ``refinements``
    times in a shrinking window around the best pair. The value is an upper
    bound for the true infimum; with ``return_residual`` the change made by
    the last refinement round is returned as well.
    """
    if not (0 < rho1 < rho2):
        raise InvalidArgument("need 0 < rho1 < rho2")
    dom = domain.recentered()
    if dom.dim == 1:
        lam = {s: radial_function(dom, np.array([s])) for s in (-1.0, 1.0)}
        best = min(abs(rho1 * lam[x] * x - rho2 * lam[y] * y) for x in lam for y in lam)
        return (best, 0.0) if return_residual else best

    theta = 2 * np.pi * np.arange(n_dirs) / n_dirs
    best, i, j = _min_pair(_boundary(dom, theta, rho1), _boundary(dom, theta, rho2))
    t1, t2 = theta[i], theta[j]
    width = 2 * np.pi / n_dirs
    prev, residual = best, 0.0
    for _ in range(refinements):
        local = np.linspace(-width, width, 65)
        val, a, b = _min_pair(_boundary(dom, t1 + local, rho1), _boundary(dom, t2 + local, rho2))
        if val < best:
            best = val
            t1, t2 = t1 + local[a], t2 + local[b]
        residual = prev - best
        prev = best
        width /= 16
    if return_residual:
        return best, residual
    return best


def scale_field(f: ScalarField, rho: float, target: Grid | None = None) -> ScalarField:
    """Dilate ``f`` about the origin: the result at ``x`` is ``f(x / rho)``.

    Values are multilinear interpolants; points that map outside the source
    box read 0.
    """
    if not rho > 0:
        raise InvalidArgument("scaling factor must be positive")
    if rho == 1.0 and (target is None or target.same_as(f.grid)):
        return f
    target = f.grid if target is None else target
    pts = target.points() / rho
    interp = RegularGridInterpolator(f.grid.axes, f.values, method="linear", bounds_error=False, fill_value=0.0)
    vals = interp(pts).reshape(target.shape)
    mask_interp = RegularGridInterpolator(
        f.grid.axes, f.mask.astype(float), method="nearest", bounds_error=False, fill_value=0.0
    )
    mask = mask_interp(pts).reshape(target.shape) > 0.5
    return ScalarField(target, vals, mask)


# domain description files ----------------------------------------------

def _floats(text: str, what: str, offset: int) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ParseError(f"bad number in {what}: {text!r}", offset) from None


def parse_domain_record(line: str, offset: int = 0) -> ConvexDomain:
    """Parse one ``kind=... vertices=... center=...`` record."""
    fields: dict[str, tuple[str, int]] = {}
    pos = 0
    for token in line.split():
        pos = line.index(token, pos)
        if "=" not in token:
            raise ParseError(f"expected key=value, got {token!r}", offset + pos)
        key, value = token.split("=", 1)
        if key not in ("kind", "vertices", "center"):
            raise ParseError(f"unknown key {key!r}", offset + pos)
        fields[key] = (value, offset + pos)
        pos += len(token)
    if "kind" not in fields or "vertices" not in fields:
        raise ParseError("record needs kind= and vertices=", offset)
    kind = fields["kind"][0]
    vtext, voff = fields["vertices"]
    verts = [_floats(v, "vertices", voff) for v in vtext.split(";") if v.strip()]
    center = None
    if "center" in fields:
        center = np.array(_floats(fields["center"][0], "center", fields["center"][1]))
    try:
        if kind == "interval":
            flat = [x for v in verts for x in v]
            if len(flat) != 2:
                raise ParseError("interval needs two endpoints", voff)
            return ConvexDomain.interval(flat[0], flat[1], None if center is None else center[0])
        if kind == "rect":
            v = np.array(verts)
            if v.shape == (2, 2):
                return ConvexDomain.rectangle(v[0, 0], v[1, 0], v[0, 1], v[1, 1], center)
            if v.ndim != 2 or v.shape[1] != 2:
                raise ParseError("rect needs 2D corners", voff)
            lo, hi = v.min(axis=0), v.max(axis=0)
            return ConvexDomain.rectangle(lo[0], hi[0], lo[1], hi[1], center)
        if kind == "polygon":
            return ConvexDomain.polygon(np.array(verts), center)
    except InvalidArgument as exc:
        raise ParseError(str(exc), offset) from None
    raise ParseError(f"unknown kind {kind!r}", fields["kind"][1])


def parse_domain_file(path: str | Path) -> list[ConvexDomain]:
    """Read a domain description file, one record per line.

    Blank lines and lines starting with ``#`` are ignored.
    """
    raw = Path(path).read_bytes()
    out = []
    offset = 0
    for line in raw.decode("utf-8").splitlines(keepends=True):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            lead = len(line) - len(line.lstrip())
            out.append(parse_domain_record(stripped, offset + lead))
        offset += len(line.encode("utf-8"))
    return out
