"""Mollifiers, cutoffs and the constructive density pipelines.

The pipelines turn a feasible test field into a smooth compactly supported
one that is close in the graph norm

    |Phi|_X = (|Phi|_q^q + |div Phi|_{q,Omega}^q)^(1/q)

without leaving the feasible ball. Every stage is a convex averaging or a
multiplication by a profile in ``[0, 1]``, so the sup norm never grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, ndimage, signal
from scipy.interpolate import RegularGridInterpolator

from .errors import InvalidArgument, ResolutionFailure
from .gagliardo import NonlocalField, _dot_kernel, gag_divergence, gagliardo_seminorm
from .grid import ConvexDomain, Grid, ScalarField, separation
from .riesz import RieszVectorField, riesz_operator

__all__ = [
    "Mollifier",
    "Cutoff",
    "mollify",
    "pair_mollify",
    "riesz_x_norm",
    "gagliardo_x_norm",
    "PipelineReport",
    "density_pipeline_riesz",
    "density_pipeline_gagliardo",
    "RecoveryTrace",
    "recovery_sequence",
]


def _bump(r2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r2)
    inside = r2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=4)
def _bump_second_moment(dim: int) -> float:
    """``int eta z_1^2 / int eta`` for the unit bump in ``dim`` dimensions."""
    if dim == 1:
        num = integrate.quad(lambda z: z**2 * np.exp(-1 / (1 - z**2)), -1, 1)[0]
        den = integrate.quad(lambda z: np.exp(-1 / (1 - z**2)), -1, 1)[0]
        return num / den
    # radial: z_1^2 averages to r^2 / 2 over the circle
    num = integrate.quad(lambda r: 0.5 * r**3 * np.exp(-1 / (1 - r**2)), 0, 1)[0]
    den = integrate.quad(lambda r: r * np.exp(-1 / (1 - r**2)), 0, 1)[0]
    return num / den


@dataclass(frozen=True, eq=False)
class Mollifier:
    """Discrete symmetric mollifier of radius ``eps`` on a grid.

    ``stencil`` holds kernel values on node offsets, normalized so that
    ``sum(weight * stencil) == 1``. When ``eps`` is below two grid spacings the
    bump is not resolvable and a nearest-neighbour stencil with the bump's
    second moment is used instead (``resolved`` is then false); it is still
    a nonnegative unit-mass average.
    """

    eps: float
    grid: Grid
    stencil: np.ndarray
    resolved: bool

    @classmethod
    def build(cls, grid: Grid, eps: float, allow_subgrid: bool = False) -> "Mollifier":
        h = np.array(grid.spacing)
        w = grid.weight
        if eps < 0:
            raise InvalidArgument("mollifier radius must be nonnegative")
        if eps >= 2 * h.max():
            radius = [int(np.floor(eps / hk)) for hk in h]
            offs = np.meshgrid(*[np.arange(-r, r + 1) * hk for r, hk in zip(radius, h)], indexing="ij")
            st = _bump(sum(o**2 for o in offs) / eps**2)
            st /= w * st.sum()
            return cls(float(eps), grid, st, True)
        if not allow_subgrid:
            raise InvalidArgument(f"eps={eps:g} is below two grid spacings ({2 * h.max():g})")
        st = np.zeros((3,) * grid.dim)
        sigma2 = _bump_second_moment(grid.dim) * eps**2
        centre = (1,) * grid.dim
        st[centre] = 1.0
        for k in range(grid.dim):
            t = sigma2 / (2 * h[k] ** 2)
            for side in (0, 2):
                idx = list(centre)
                idx[k] = side
                st[tuple(idx)] = t
            st[centre] -= 2 * t
        if st[centre] < 0:
            raise InvalidArgument("subgrid stencil would not be nonnegative")
        st /= w
        return cls(float(eps), grid, st, False)

    @property
    def radius_nodes(self) -> tuple[int, ...]:
        return tuple((n - 1) // 2 for n in self.stencil.shape)

    def apply(self, values: np.ndarray, boundary: str = "zero") -> np.ndarray:
        k = self.grid.weight * self.stencil
        if boundary == "periodic":
            return ndimage.convolve(values, k, mode="wrap")
        if boundary != "zero":
            raise InvalidArgument(f"unknown boundary mode {boundary!r}")
        if k.size <= 64:
            return ndimage.convolve(values, k, mode="constant", cval=0.0)
        return signal.fftconvolve(values, k, mode="same")


@dataclass(frozen=True)
class Cutoff:
    """Radial profile equal to 1 inside radius ``m`` and 0 beyond ``2m``.

    The transition is a clamped smoothstep, Lipschitz with constant
    ``1.5 / m``.
    """

    m: float
    center: tuple[float, ...] = (0.0,)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        r = np.linalg.norm(np.atleast_2d(points) - c, axis=-1)
        t = np.clip((r - self.m) / self.m, 0.0, 1.0)
        return 1.0 - t * t * (3.0 - 2.0 * t)

    def on_grid(self, grid: Grid) -> np.ndarray:
        return self(grid.points()).reshape(grid.shape)

    @property
    def lipschitz(self) -> float:
        return 1.5 / self.m


def mollify(f: ScalarField, eps: float, boundary: str = "zero") -> ScalarField:
    """Convolution with the normalized bump of radius ``eps`` (at least ``2h``).

    ``boundary='zero'`` treats ``f`` as zero outside the box, ``'periodic'``
    wraps around.
    """
    mol = Mollifier.build(f.grid, eps)
    return f.with_values(mol.apply(f.values, boundary))


def _pair_shift_sum(A: np.ndarray, grid: Grid, mol: Mollifier) -> np.ndarray:
    """``sum_s w eta(s) A[i + s, j + s]`` with zeros outside the box."""
    shape = grid.shape
    R = mol.radius_nodes
    A4 = A.reshape(shape + shape)
    pad = [(r, r) for r in R] * 2
    P = np.pad(A4, pad)
    out = np.zeros_like(A4)
    w = grid.weight
    for idx in np.ndindex(mol.stencil.shape):
        c = w * mol.stencil[idx]
        if c == 0.0:
            continue
        s = [i - r for i, r in zip(idx, R)]
        sl = tuple(slice(r + sk, r + sk + N) for r, sk, N in zip(R, s, shape)) * 2
        out += c * P[sl]
    return out.reshape(grid.size, grid.size)


def _support_margin_ok(support: np.ndarray, radius: tuple[int, ...]) -> bool:
    idx = np.argwhere(support)
    if idx.size == 0:
        return True
    shape = np.array(support.shape)
    r = np.array(radius)
    return bool(np.all(idx.min(axis=0) >= r) and np.all(idx.max(axis=0) <= shape - 1 - r))


def _pair_active_nodes(F: NonlocalField) -> np.ndarray:
    nz = np.any(F.values != 0, axis=0) | np.any(F.values != 0, axis=1)
    return nz.reshape(F.grid.shape)


def pair_mollify(F: NonlocalField, eps: float, allow_subgrid: bool = False,
                 _mollifier: Mollifier | None = None) -> NonlocalField:
    """Mollify a pair field along the diagonal direction.

    The input is first replaced by its antisymmetric part. The result at
    ``(x, y)`` averages the field over ``(x + z, y + z)`` with the bump
    weights, so it stays antisymmetric and never exceeds the input in sup
    norm. Nodes carrying nonzero pairs must keep a margin of the kernel
    radius from the box edge.
    """
    mol = _mollifier or Mollifier.build(F.grid, eps, allow_subgrid)
    A = 0.5 * (F.values - F.values.T)
    active = _pair_active_nodes(F)
    if not _support_margin_ok(active, mol.radius_nodes):
        raise InvalidArgument("pair field support is too close to the box edge for this radius")
    out = _pair_shift_sum(A, F.grid, mol)
    out = 0.5 * (out - out.T)
    support = ndimage.binary_dilation(F.support, structure=np.ones(mol.stencil.shape, bool))
    return NonlocalField(F.grid, out, support, F.truncation_radius)


# graph norms ------------------------------------------------------------

def riesz_x_norm(F: np.ndarray, grid: Grid, mask: np.ndarray, op, q: float = 2.0) -> float:
    """``(|F|_q^q + |Div F|_{q, mask}^q)^(1/q)`` with the adjoint divergence."""
    w = grid.weight
    pw = np.sqrt(np.sum(np.asarray(F) ** 2, axis=0))
    div = op.adjoint_divergence(np.asarray(F))
    return float((w * np.sum(pw**q) + w * np.sum(np.abs(div[mask]) ** q)) ** (1.0 / q))


def gagliardo_x_norm(F: NonlocalField, alpha: float, mask: np.ndarray, q: float = 2.0) -> float:
    """Pair ``L^q`` norm against ``h^(2n) |x - y|^-n`` plus ``|div F|_{q, mask}``."""
    g = F.grid
    pair = g.weight**2 * float(np.sum(np.abs(F.values) ** q * _dot_kernel(g)))
    div = gag_divergence(F, alpha).values
    return float((pair + g.weight * np.sum(np.abs(div[mask]) ** q)) ** (1.0 / q))


# pipelines --------------------------------------------------------------

@dataclass
class PipelineReport:
    """Stage-by-stage distances of a density pipeline."""

    stages: list[str]
    distances: list[float]
    total: float
    rho: float
    delta: float
    separation: float
    delta_resolved: bool
    sup_norm: float
    cutoff_radius: float = float("nan")
    extras: dict = field(default_factory=dict)

    def rows(self) -> list[tuple[str, float]]:
        return list(zip(self.stages, self.distances)) + [("total", self.total)]


def _scale_vector_field(F: np.ndarray, grid: Grid, rho: float, center: np.ndarray) -> np.ndarray:
    if rho == 1.0:
        return np.array(F, copy=True)
    pts = center + (grid.points() - center) / rho
    out = []
    for comp in F:
        it = RegularGridInterpolator(grid.axes, comp, bounds_error=False, fill_value=0.0)
        out.append(it(pts).reshape(grid.shape))
    return np.stack(out)


def _scale_pair_field(A: np.ndarray, grid: Grid, rho: float, center: np.ndarray) -> np.ndarray:
    if rho == 1.0:
        return np.array(A, copy=True)
    shape = grid.shape
    pts = center + (grid.points() - center) / rho
    it = RegularGridInterpolator(grid.axes + grid.axes, A.reshape(shape + shape),
                                 bounds_error=False, fill_value=0.0)
    m = pts.shape[0]
    # evaluate every ordered pair of mapped points
    X = np.repeat(pts, m, axis=0)
    Y = np.tile(pts, (m, 1))
    out = it(np.hstack([X, Y])).reshape(m, m)
    return 0.5 * (out - out.T)


def _check_delta(delta: float | None, D: float) -> float:
    if delta is None:
        return D / 200.0
    if delta >= D / 100.0:
        raise InvalidArgument(f"delta={delta:g} must stay below D/100 = {D / 100:g}")
    return float(delta)


def density_pipeline_riesz(Phi: RieszVectorField, domain: ConvexDomain, beta: float, eps_target: float,
                           alpha: float, q: float = 2.0, backend: str = "quadrature",
                           rho: float | None = None, delta: float | None = None, op=None):
    """Cutoff, outward dilation and mollification of a feasible Riesz test field.

    Returns ``(Theta, report)``. The cutoff radius doubles from the domain
    radius plus one until its stage is within ``eps_target / 3``; the
    dilation factor is bisected toward 1 under the same budget; the
    mollification radius is ``D / 200`` with ``D`` the separation of the
    domain from the boundary of its dilation.
    """
    grid = Phi.grid
    F0 = np.asarray(Phi.components)
    if Phi.sup_norm() > beta + 1e-12:
        raise InvalidArgument("input field is not feasible")
    mask = domain.mask(grid)
    op = op or riesz_operator(grid, alpha, backend)
    c = domain.center

    def dist(A, B):
        return riesz_x_norm(A - B, grid, mask, op, q)

    budget = eps_target / 3.0
    # stage 1: cutoff
    pts = grid.points()
    reach = float(np.max(np.linalg.norm(pts - c, axis=1)))
    m = float(np.max(np.linalg.norm(domain.vertices - c, axis=1))) + 1.0
    while True:
        zeta = Cutoff(m, tuple(c)).on_grid(grid)
        F1 = F0 * zeta
        d1 = dist(F1, F0)
        if d1 <= budget or m >= reach:
            break
        m *= 2.0
    # stage 2: dilation about the center
    if rho is None:
        excess = 0.5
        for _ in range(60):
            F2 = _scale_vector_field(F1, grid, 1.0 + excess, c)
            d2 = dist(F2, F1)
            if d2 <= budget:
                break
            excess /= 2.0
        rho = 1.0 + excess
    else:
        if rho < 1.0:
            raise InvalidArgument("outward dilation needs rho >= 1")
        F2 = _scale_vector_field(F1, grid, rho, c)
        d2 = dist(F2, F1)
    # stage 3: mollification
    if rho > 1.0:
        D = float(separation(domain, 1.0, rho))
        delta = _check_delta(delta, D)
    else:
        D, delta = 0.0, 0.0 if delta is None else delta
    if delta > 0:
        mol = Mollifier.build(grid, delta, allow_subgrid=True)
        F3 = np.stack([mol.apply(comp) for comp in F2])
        resolved = mol.resolved
    else:
        F3, resolved = F2, True
    d3 = dist(F3, F2)
    total = dist(F3, F0)
    Theta = RieszVectorField(grid, F3)
    report = PipelineReport(["cutoff", "dilation", "mollification"], [d1, d2, d3], total, float(rho),
                            float(delta), D, resolved, Theta.sup_norm(), m)
    if total > d1 + d2 + d3 + 1e-12:
        raise AssertionError("stage distances violate the triangle inequality")
    if total > eps_target:
        raise ResolutionFailure(f"reached X-distance {total:.3e} > {eps_target:.3e}", total)
    return Theta, report


def density_pipeline_gagliardo(Phi: NonlocalField, domain: ConvexDomain, beta: float, eps_target: float,
                               alpha: float, q: float = 2.0, rho: float | None = None,
                               delta: float | None = None):
    """Inward dilation and diagonal mollification of a feasible pair field.

    Returns ``(Theta, report)``. The input is replaced by its antisymmetric
    part, the dilation factor ``rho < 1`` is bisected toward 1 until its stage
    is within ``eps_target / 3``, and the mollification radius is ``D / 200``
    with ``D`` the separation of the shrunk domain from the boundary.
    """
    grid = Phi.grid
    mask = domain.mask(grid)
    A0 = 0.5 * (Phi.values - Phi.values.T)
    if np.abs(A0).max(initial=0.0) > beta + 1e-12:
        raise InvalidArgument("input field is not feasible")
    c = domain.center

    def as_field(A):
        return NonlocalField(grid, A, mask)

    def dist(A, B):
        return gagliardo_x_norm(as_field(A - B), alpha, mask, q)

    F0 = as_field(A0)
    A0 = F0.values
    budget = eps_target / 3.0
    if rho is None:
        excess = 0.5
        for _ in range(60):
            A1 = as_field(_scale_pair_field(A0, grid, 1.0 - excess, c)).values
            d1 = dist(A1, A0)
            if d1 <= budget:
                break
            excess /= 2.0
        rho = 1.0 - excess
    else:
        if not 0 < rho <= 1.0:
            raise InvalidArgument("inward dilation needs 0 < rho <= 1")
        A1 = as_field(_scale_pair_field(A0, grid, rho, c)).values
        d1 = dist(A1, A0)
    if rho < 1.0:
        D = float(separation(domain, rho, 1.0))
        delta = _check_delta(delta, D)
    else:
        D, delta = 0.0, 0.0 if delta is None else delta
    if delta > 0:
        mol = Mollifier.build(grid, delta, allow_subgrid=True)
        A2 = pair_mollify(as_field(A1), delta, _mollifier=mol).values
        resolved = mol.resolved
    else:
        A2, resolved = A1, True
    Theta = as_field(A2)
    leaked = float(np.abs(A2 - Theta.values).max(initial=0.0))
    d2 = dist(Theta.values, A1)
    total = dist(Theta.values, A0)
    report = PipelineReport(["dilation", "mollification"], [d1, d2], total, float(rho), float(delta), D,
                            resolved, Theta.sup_norm(), extras={"leaked": leaked})
    if total > d1 + d2 + 1e-12:
        raise AssertionError("stage distances violate the triangle inequality")
    if total > eps_target:
        raise ResolutionFailure(f"reached X-distance {total:.3e} > {eps_target:.3e}", total)
    return Theta, report


# recovery sequence ------------------------------------------------------

@dataclass(frozen=True)
class RecoveryTrace:
    eps: tuple[float, ...]
    values: tuple[float, ...]
    bound: float

    @property
    def bounded(self) -> bool:
        return max(self.values, default=0.0) <= self.bound * 1.01 + 1e-12


def _distance_to(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    if targets.shape[0] == 0:
        return np.full(points.shape[0], np.inf)
    out = np.full(points.shape[0], np.inf)
    for s in range(0, targets.shape[0], 512):
        d = np.sqrt(np.sum((points[:, None, :] - targets[None, s : s + 512, :]) ** 2, axis=-1))
        out = np.minimum(out, d.min(axis=1))
    return out


def recovery_sequence(f: ScalarField, mask: np.ndarray, interior: np.ndarray, eps: Sequence[float],
                      alpha: float) -> RecoveryTrace:
    """Seminorms on ``interior`` of the cut-off and mollified ``f`` at each scale.

    The cutoff equals 1 within ``max(eps)`` of ``interior`` and vanishes
    before leaving ``mask``. The returned trace also carries the seminorm
    of ``f`` on ``mask`` as the bound it should respect.
    """
    grid = f.grid
    Om = np.asarray(mask, dtype=bool).reshape(grid.shape)
    G = np.asarray(interior, dtype=bool).reshape(grid.shape)
    if not G.any() or np.any(G & ~Om):
        raise InvalidArgument("interior set must be a nonempty subset of the domain")
    pts = grid.points()
    e_max = max(eps)
    gpts = pts[G.reshape(-1)]
    # distance from the interior set to the complement of the domain, box exterior included
    lo = np.array([a for a, _ in grid.box]) - 0.5 * np.array(grid.spacing)
    hi = np.array([b for _, b in grid.box]) + 0.5 * np.array(grid.spacing)
    to_box = np.min(np.minimum(gpts - lo, hi - gpts), axis=1)
    to_out = _distance_to(gpts, pts[~Om.reshape(-1)])
    margin = float(min(to_box.min(), to_out.min()))
    if margin <= e_max + min(grid.spacing):
        raise InvalidArgument(f"the {e_max:g}-neighbourhood of the interior set leaves the domain")
    dG = _distance_to(pts, gpts).reshape(grid.shape)
    t = np.clip((dG - e_max) / (margin - e_max), 0.0, 1.0)
    zeta = np.where(Om, 1.0 - t * t * (3.0 - 2.0 * t), 0.0)
    fz = f.with_values(f.values * zeta)
    values = tuple(gagliardo_seminorm(mollify(fz, e), G, alpha) for e in eps)
    bound = gagliardo_seminorm(f, Om, alpha)
    return RecoveryTrace(tuple(float(e) for e in eps), values, bound)
