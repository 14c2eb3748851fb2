"""Quick invariant suite behind ``fracbv verify``.

Each check is small enough to run in a few seconds and returns whether it
passed together with a one-line detail.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .approx import density_pipeline_gagliardo, density_pipeline_riesz, mollify, pair_mollify
from .denoise import DenoiseProblem, recover_primal, solve_predual, vi_residual
from .gagliardo import NonlocalField, gag_divergence, gag_gradient, gagliardo_seminorm, pair_inner
from .grid import ConvexDomain, Grid, ScalarField, make_grid, periodic_grid, radial_function, scale_field, separation
from .riesz import RieszVectorField, SpectralConfig, SpectralRiesz, riesz_operator
from .variation import var_gagliardo, var_riesz

__all__ = ["CheckResult", "CHECKS", "run_checks"]


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str
    seconds: float


def _adjoint_riesz(rng) -> tuple[bool, str]:
    worst = 0.0
    for g in (make_grid([(-1, 1)], 64), make_grid([(-1, 1), (-1, 1)], 16)):
        op = riesz_operator(g, 0.4)
        for _ in range(5):
            f = rng.standard_normal(g.shape)
            F = rng.standard_normal((g.dim,) + g.shape)
            a = g.weight * np.sum(F * op.gradient(f))
            b = g.weight * np.sum(op.adjoint_divergence(F) * f)
            worst = max(worst, abs(a + b) / max(abs(a), abs(b)))
    return worst <= 1e-12, f"max relative defect {worst:.2e}"


def _adjoint_gagliardo(rng) -> tuple[bool, str]:
    worst = 0.0
    for g in (make_grid([(-1, 1)], 64), make_grid([(-1, 1), (-1, 1)], 16)):
        for _ in range(5):
            f = ScalarField(g, rng.standard_normal(g.shape))
            A = rng.standard_normal((g.size, g.size))
            F = NonlocalField(g, A - A.T)
            d = gag_gradient(f, 0.4)
            a = pair_inner(F, d)
            b = g.weight * np.sum(gag_divergence(F, 0.4).values * f.values)
            worst = max(worst, abs(a + b) / max(abs(a), abs(b)))
    return worst <= 1e-12, f"max relative defect {worst:.2e}"


def _spectral(rng) -> tuple[bool, str]:
    g = periodic_grid([(0, 2 * np.pi)], 64)
    x = g.coords()[0]
    op = SpectralRiesz(g, 0.6, SpectralConfig(periodic=True))
    e1 = np.abs(op.laplacian(np.cos(x), 0.6) - np.cos(x)).max()
    f = np.sin(3 * x) + 0.5 * np.cos(5 * x)
    e2 = np.abs(op.adjoint_divergence(op.gradient(f)) + op.laplacian(f, 1.2)).max()
    e3 = np.abs(op.laplacian(op.potential(f, 0.6), 0.6) - f).max()
    worst = max(e1, e2, e3)
    return worst <= 1e-10, f"max identity error {worst:.2e}"


def _duality(rng) -> tuple[bool, str]:
    h = 1 / 12
    g = Grid(((h / 2, 1 - h / 2), (h / 2, 1 - h / 2)), (12, 12))
    u = ScalarField(g, rng.random(g.shape))
    out = []
    ok = True
    for variant in ("gagliardo", "riesz"):
        prob = DenoiseProblem(u, variant, 0.5, 0.1)
        phi, rep = solve_predual(prob, tol=1e-6, max_iter=5000)
        vi = vi_residual(phi, recover_primal(phi, prob), prob)
        ok &= rep.converged and vi <= 1e-6 * rep.scale
        out.append(f"{variant} gap {rep.relative_gap:.1e} in {rep.iterations} it")
    return ok, "; ".join(out)


def _equivalence(rng) -> tuple[bool, str]:
    g = make_grid([(-1, 1)], 96)
    x = g.coords()[0]
    mask = np.abs(x) < 0.9
    worst = 0.0
    for f in (np.where(np.abs(x) < 0.5, 1.0, 0.0), np.exp(-8 * x**2), rng.standard_normal(g.shape)):
        sf = ScalarField(g, f)
        a = var_gagliardo(sf, mask, 0.4, certificate=False).value
        b = gagliardo_seminorm(sf, mask, 0.4)
        worst = max(worst, abs(a - b) / max(1.0, b))
    return worst <= 1e-12, f"residual {worst:.1e}"


def _distinction(rng) -> tuple[bool, str]:
    g = make_grid([(-2, 2)], 81)
    dom = ConvexDomain.interval(-1, 1)
    m = dom.mask(g)
    chi = ScalarField(g, m.astype(float), m)
    vg = var_gagliardo(chi, m, 0.5, certificate=False).value
    vr = var_riesz(chi, 0.5).value
    return vg == 0.0 and vr > 0, f"gagliardo {vg:g}, riesz {vr:.3f}"


def _density(rng) -> tuple[bool, str]:
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    g = make_grid([(-2, 2), (-2, 2)], 25)
    X, Y = g.coords()
    comp = np.stack([np.exp(-(X**2 + Y**2)), np.exp(-((X - 0.3) ** 2 + Y**2))])
    comp *= 0.5 / np.sqrt((comp**2).sum(0)).max()
    _, r1 = density_pipeline_riesz(RieszVectorField(g, comp), sq, 0.5, 1e-2, 0.5)
    g2 = make_grid([(-1.5, 1.5), (-1.5, 1.5)], 13)
    m = sq.mask(g2)
    P = g2.points()
    A = np.outer(np.cos(P[:, 0]), np.sin(P[:, 1]))
    A = (A - A.T) * np.outer(m.ravel(), m.ravel())
    A *= 0.5 / np.abs(A).max()
    _, r2 = density_pipeline_gagliardo(NonlocalField(g2, A, m), sq, 0.5, 1e-2, 0.5)
    ok = max(r1.sup_norm, r2.sup_norm) <= 0.5 + 1e-12
    return ok, f"riesz {r1.total:.1e}, gagliardo {r2.total:.1e}"


def _commutation(rng) -> tuple[bool, str]:
    g = make_grid([(-1, 1)], 65)
    x = g.coords()[0]
    s = np.abs(x) < 0.5
    B = np.outer(np.exp(-(x**2)), x)
    F = NonlocalField(g, (B - B.T) * np.outer(s, s), s)
    lhs = gag_divergence(pair_mollify(F, 0.1), 0.4).values
    rhs = mollify(gag_divergence(F, 0.4), 0.1).values
    err = float(np.abs(lhs - rhs).max())
    return err <= 1e-10, f"max defect {err:.1e}"


def _domain_geometry(rng) -> tuple[bool, str]:
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    lam = radial_function(sq, np.array([[1.0, 0.0], [1.0, 1.0]]) / np.array([[1.0], [np.sqrt(2)]]))
    e1 = max(abs(lam[0] - 1), abs(lam[1] - np.sqrt(2)))
    sep = separation(sq, 1.0, 1.5)
    g = make_grid([(-1, 3)], 4001)
    x = g.coords()[0]
    f = ScalarField(g, ((x >= 0) & (x <= 1)).astype(float))
    d = float(g.weight * np.abs(scale_field(f, 1.1).values - f.values).sum())
    ok = e1 <= 1e-12 and abs(sep - 0.5) <= 1e-3 and abs(d - 0.1) <= g.spacing[0]
    return ok, f"lambda {e1:.1e}, separation {sep:.4f}, L1 {d:.4f}"


CHECKS: list[tuple[str, str, Callable]] = [
    ("adjointness", "riesz", _adjoint_riesz),
    ("adjointness", "gagliardo", _adjoint_gagliardo),
    ("spectral", "identities", _spectral),
    ("duality", "gap", _duality),
    ("equivalence", "seminorm", _equivalence),
    ("equivalence", "model distinction", _distinction),
    ("density", "pipelines", _density),
    ("density", "commutation", _commutation),
    ("domain", "geometry", _domain_geometry),
]


def run_checks(seed: int = 0, report: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    results = []
    for suite, name, fn in CHECKS:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(suite, name, bool(ok), detail, time.perf_counter() - t0)
        if report:
            report(res)
        results.append(res)
    return results
