"""Riesz and Gagliardo fractional variations, evaluated through their dual forms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument
from .gagliardo import DENSE_LIMIT, NonlocalField, gag_divergence, gagliardo_seminorm
from .grid import ScalarField, lp_norm
from .riesz import RieszVectorField, SpectralConfig, riesz_operator

__all__ = [
    "VariationResult",
    "var_riesz",
    "var_gagliardo",
    "riesz_pairing",
    "gagliardo_pairing",
    "projected_ascent_oracle",
    "EquivalenceReport",
    "theorem_equivalence_check",
    "lsc_check",
    "embedding_exponent",
    "embedding_check",
]


@dataclass(frozen=True, eq=False)
class VariationResult:
    """Value of a variation and, when available, a maximizing test field."""

    value: float
    method: str
    certificate: RieszVectorField | NonlocalField | None = None


def var_riesz(f: ScalarField, alpha: float, backend: str = "quadrature", spectral: SpectralConfig | None = None,
              op=None) -> VariationResult:
    """Riesz variation of the zero extension of ``f``.

    With the exact-adjoint divergence the dual supremum over fields with
    pointwise norm at most one is attained at ``-D f / |D f|``, so the value is
    ``sum_i w |(D^alpha f)_i|``. ``op`` may supply a prebuilt operator pair.
    """
    if not f.vanishes_off_mask():
        raise InvalidArgument("the Riesz variation needs f to vanish off its mask")
    op = op or riesz_operator(f.grid, alpha, backend, spectral)
    G = op.gradient(f.values)
    nrm = np.sqrt(np.sum(G**2, axis=0))
    value = f.grid.weight * float(np.sum(nrm))
    safe = np.where(nrm > 0, nrm, 1.0)
    phi = np.where(nrm > 0, -G / safe, 0.0)
    return VariationResult(value, "gradient-L1", RieszVectorField(f.grid, phi))


def riesz_pairing(f: ScalarField, phi: RieszVectorField, alpha: float, backend: str = "quadrature",
                  spectral: SpectralConfig | None = None, op=None) -> float:
    """``<f, Div phi>`` with the adjoint divergence."""
    op = op or riesz_operator(f.grid, alpha, backend, spectral)
    return f.grid.weight * float(np.sum(f.values * op.adjoint_divergence(np.asarray(phi.components))))


def var_gagliardo(f: ScalarField, mask: np.ndarray | None, alpha: float, certificate: bool = True) -> VariationResult:
    """Gagliardo variation of ``f`` on the node set ``mask``.

    The pairing with ``div`` is separable over pairs, so the supremum is
    attained at ``phi_ij = -sign(f_i - f_j)`` and equals the discrete
    seminorm. The certificate is only built when the grid fits dense pair
    storage.
    """
    value = gagliardo_seminorm(f, mask, alpha)
    cert = None
    if certificate and max(f.grid.shape) <= DENSE_LIMIT[f.grid.dim]:
        v = f.values.reshape(-1)
        cert = NonlocalField(f.grid, -np.sign(v[:, None] - v[None, :]), mask)
    return VariationResult(value, "dual-closed-form", cert)


def gagliardo_pairing(f: ScalarField, phi: NonlocalField, alpha: float) -> float:
    """``<f, div phi>`` with node weights."""
    return f.grid.weight * float(np.sum(f.values * gag_divergence(phi, alpha).values))


def _dense_operator(apply, n_in: int, shape_in) -> np.ndarray:
    cols = []
    for k in range(n_in):
        e = np.zeros(n_in)
        e[k] = 1.0
        cols.append(np.ravel(apply(e.reshape(shape_in))))
    return np.stack(cols, axis=1)


def projected_ascent_oracle(f: ScalarField, alpha: float, variant: str = "riesz", restarts: int = 8,
                            iterations: int = 200, seed: int = 0, mask: np.ndarray | None = None,
                            backend: str = "quadrature") -> float:
    """Brute-force dual value by projected gradient ascent from random starts.

    Meant for tiny grids only: the divergence is assembled column by column
    and ``<f, div phi>`` is maximized over the constraint set directly.
    """
    rng = np.random.default_rng(seed)
    w = f.grid.weight
    if variant == "riesz":
        op = riesz_operator(f.grid, alpha, backend)
        shape = (f.grid.dim,) + f.grid.shape
        M = _dense_operator(op.adjoint_divergence, int(np.prod(shape)), shape)

        def project(x):
            x = x.reshape(shape)
            nrm = np.sqrt(np.sum(x**2, axis=0))
            return (x / np.maximum(nrm, 1.0)).reshape(-1)
    elif variant == "gagliardo":
        size = f.grid.size
        m = np.ones(size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
        pairs = [(i, j) for i in range(size) for j in range(size) if i != j and m[i] and m[j]]

        def apply(x):
            P = np.zeros((size, size))
            for val, (i, j) in zip(np.ravel(x), pairs):
                P[i, j] = val
            return gag_divergence(NonlocalField(f.grid, P), alpha).values

        M = _dense_operator(apply, len(pairs), (len(pairs),))

        def project(x):
            return np.clip(x, -1.0, 1.0)
    else:
        raise InvalidArgument(f"unknown variant {variant!r}")
    c = w * (M.T @ f.values.reshape(-1))
    step = 1.0 / max(np.abs(c).max(), 1e-300)
    best = 0.0
    for _ in range(restarts):
        x = project(rng.uniform(-1, 1, size=c.size))
        for _ in range(iterations):
            x = project(x + step * c)
        best = max(best, float(c @ x))
    return best


@dataclass(frozen=True)
class EquivalenceReport:
    """Direct residual plus the optional mollification route."""

    residual: float
    value: float
    eps: tuple[float, ...] = ()
    trace: tuple[float, ...] = ()
    interior_value: float = float("nan")
    bracket_ok: bool = True
    tolerance: float = 0.01
    notes: list[str] = field(default_factory=list)


def _erode(mask: np.ndarray, grid, radius: float) -> np.ndarray:
    """Nodes of ``mask`` whose distance to every node outside it exceeds ``radius``."""
    pts = grid.points()
    flat = mask.reshape(-1)
    inside, outside = pts[flat], pts[~flat]
    keep = np.zeros(flat.shape, dtype=bool)
    if outside.shape[0] == 0:
        keep[flat] = True
        return keep.reshape(grid.shape)
    dmin = np.full(inside.shape[0], np.inf)
    for s in range(0, outside.shape[0], 512):
        d = np.sqrt(np.sum((inside[:, None, :] - outside[None, s : s + 512, :]) ** 2, axis=-1))
        dmin = np.minimum(dmin, d.min(axis=1))
    keep[np.flatnonzero(flat)[dmin > radius]] = True
    return keep.reshape(grid.shape)


def theorem_equivalence_check(f: ScalarField, mask: np.ndarray | None, alpha: float,
                              eps: Sequence[float] | None = None, interior: np.ndarray | None = None,
                              tolerance: float = 0.01) -> EquivalenceReport:
    """Compare the dual variation with the seminorm, optionally also by mollification.

    The direct residual is ``|var - [f]| / max(1, [f])``. If ``eps`` is given,
    ``f`` is cut off and mollified at each scale and the seminorm on the
    interior set (default: ``mask`` eroded by ``2 max(eps)``) is recorded. The
    bracket holds when the trace never exceeds the full value by more than
    ``tolerance`` and does not decrease as the scale shrinks (up to the same
    tolerance).
    """
    from .approx import recovery_sequence

    m = np.ones(f.grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(f.grid.shape)
    semi = gagliardo_seminorm(f, m, alpha)
    var = var_gagliardo(f, m, alpha, certificate=False).value
    residual = abs(var - semi) / max(1.0, semi)
    if not eps:
        return EquivalenceReport(residual, var)
    eps = tuple(sorted((float(e) for e in eps), reverse=True))
    G = _erode(m, f.grid, 2 * max(eps)) if interior is None else np.asarray(interior, dtype=bool)
    trace = recovery_sequence(f, m, G, eps, alpha).values
    inner = gagliardo_seminorm(f, G, alpha)
    upper = max(trace) <= var * (1 + tolerance) + 1e-12
    monotone = all(b >= a * (1 - tolerance) - 1e-12 for a, b in zip(trace, trace[1:]))
    return EquivalenceReport(residual, var, eps, tuple(trace), inner, upper and monotone, tolerance)


def _functional(kind: str, alpha: float, mask, backend: str):
    if kind == "riesz":
        def value(g: ScalarField) -> VariationResult:
            return var_riesz(g, alpha, backend)

        def pairing(g: ScalarField, cert) -> float:
            return riesz_pairing(g, cert, alpha, backend)

        def div_sup(g: ScalarField, cert) -> float:
            op = riesz_operator(g.grid, alpha, backend)
            return float(np.abs(op.adjoint_divergence(np.asarray(cert.components))).max())
    elif kind == "gagliardo":
        def value(g: ScalarField) -> VariationResult:
            return var_gagliardo(g, mask, alpha)

        def pairing(g: ScalarField, cert) -> float:
            return gagliardo_pairing(g, cert, alpha)

        def div_sup(g: ScalarField, cert) -> float:
            return float(np.abs(gag_divergence(cert, alpha).values).max())
    else:
        raise InvalidArgument(f"unknown functional {kind!r}")
    return value, pairing, div_sup


def lsc_check(f_seq: Sequence[ScalarField], f: ScalarField, functional: str, alpha: float,
              mask: np.ndarray | None = None, l1_tol: float = 1e-8, backend: str = "quadrature",
              return_details: bool = False):
    """Lower semicontinuity along an L1-convergent sequence.

    The limit's certificate ``phi`` gives ``F(f) = <f, div phi>``. Each term
    satisfies ``<f_k, div phi> <= F(f_k)`` (weak duality), and the pairing
    moves by at most ``|div phi|_inf * |f_k - f|_1``. The check passes when
    weak duality holds on every term and

        F(f) <= F(f_K) + |div phi|_inf * |f_K - f|_1 + 1e-8 * scale

    for the last term ``f_K``, where ``scale = max(1, F(f))``.
    """
    if len(f_seq) == 0:
        raise InvalidArgument("empty sequence")
    dist = [lp_norm(g.values - f.values, f.grid, 1.0) for g in f_seq]
    if any(b > a * (1 + 1e-12) + 1e-15 for a, b in zip(dist, dist[1:])) or dist[-1] > l1_tol:
        raise InvalidArgument(f"sequence does not converge in L1 (distances {dist[0]:.3e} .. {dist[-1]:.3e})")
    value, pairing, div_sup = _functional(functional, alpha, mask, backend)
    res = value(f)
    if res.certificate is None:
        raise InvalidArgument("grid too large for a dense certificate")
    scale = max(1.0, res.value)
    vals = [value(g).value for g in f_seq]
    pairs = [pairing(g, res.certificate) for g in f_seq]
    weak = all(p <= v + 1e-10 * scale for p, v in zip(pairs, vals))
    slack = div_sup(f, res.certificate) * dist[-1]
    ok = weak and res.value <= vals[-1] + slack + 1e-8 * scale
    if return_details:
        return ok, {"limit": res.value, "values": vals, "pairings": pairs, "distances": dist, "slack": slack}
    return ok


def embedding_exponent(dim: int, alpha: float) -> float:
    if dim == 2:
        return 2.0 / (2.0 - alpha)
    return min(2.0, 1.0 / (1.0 - alpha) - 0.1)


def embedding_check(f: ScalarField, alpha: float, variant: str, mask: np.ndarray | None = None,
                    backend: str = "quadrature") -> float:
    """``|f|_p / (|f|_1 + variation)`` with the exponent of :func:`embedding_exponent`."""
    p = embedding_exponent(f.grid.dim, alpha)
    num = lp_norm(f.values, f.grid, p)
    if num == 0.0:
        return 0.0
    if variant == "riesz":
        var = var_riesz(f, alpha, backend).value
    elif variant == "gagliardo":
        var = gagliardo_seminorm(f, mask, alpha)
    else:
        raise InvalidArgument(f"unknown variant {variant!r}")
    return num / (lp_norm(f.values, f.grid, 1.0) + var)
