"""Fractional-variation denoising through the predual problem.

For a datum ``u_N`` on a convex domain the primal problem is

    min_u  (gamma / p) |u - u_N|_p^p + beta Var(u)

with ``Var`` the Riesz variation of the zero extension or the Gagliardo
variation on the domain. Dividing by ``gamma`` leaves the minimizer unchanged,
so every solve runs with ``gamma = 1`` and ``beta / gamma``; reported energies
are multiplied back by ``gamma``.

Write ``K = Lambda^*`` for the map from ``u`` to its fractional gradient and
``Lambda = -Div`` restricted to the domain. The predual problem

    min_{|Phi| <= beta}  (1/q) |Lambda Phi|_q^q - <u_N, Lambda Phi>

is smooth over a compact convex set, and its minimizer gives the denoised
image as ``u = u_N + |Div Phi|^(q-2) Div Phi``. The sum of the two energies is
the duality gap, which is nonnegative and vanishes at optimal pairs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidArgument, Unsupported
from .grid import ConvexDomain, Grid, ScalarField
from .gagliardo import DENSE_LIMIT, NonlocalField, _distances
from .riesz import RieszVectorField, riesz_operator
from .variation import var_gagliardo, var_riesz

__all__ = [
    "DenoiseProblem",
    "DualVariable",
    "SolveReport",
    "PrimalReference",
    "primal_energy",
    "predual_energy",
    "project_feasible",
    "power_iteration",
    "solve_predual",
    "recover_primal",
    "vi_residual",
    "solve_primal_reference",
]

log = logging.getLogger(__name__)

FEAS_TOL = 1e-12


# operator models --------------------------------------------------------

def _shrink_factor(nrm: np.ndarray, radius: float) -> np.ndarray:
    # vectors already on the sphere up to rounding are left alone, so projecting twice changes nothing
    outside = nrm > radius * (1 + 4 * np.finfo(float).eps)
    return np.where(outside, radius / np.where(outside, nrm, 1.0), 1.0)


class _RieszModel:
    """Riesz calculus on a box enlarged around the image grid.

    The dual variable lives on every node of the enlarged box. The image
    occupies the central block.
    """

    def __init__(self, grid: Grid, mask: np.ndarray, alpha: float, backend: str, pad: tuple[int, ...]):
        h = grid.spacing
        box = tuple((a - pk * hk, b + pk * hk) for (a, b), pk, hk in zip(grid.box, pad, h))
        shape = tuple(N + 2 * pk for N, pk in zip(grid.shape, pad))
        self.grid = grid
        self.box_grid = Grid(box, shape)
        self.block = tuple(slice(pk, pk + N) for pk, N in zip(pad, grid.shape))
        self.mask = mask
        self.op = riesz_operator(self.box_grid, alpha, backend)
        self.w = grid.weight
        self.dual_shape = (grid.dim,) + shape

    def embed(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(self.box_grid.shape)
        out[self.block][self.mask] = u
        return out

    def K(self, u: np.ndarray) -> np.ndarray:
        return self.op.gradient(self.embed(u))

    def Kt(self, F: np.ndarray) -> np.ndarray:
        return self.op.gradient_transpose(F)[self.block][self.mask]

    def inner(self, F: np.ndarray, G: np.ndarray) -> float:
        return self.w * float(np.sum(F * G))

    def pointwise(self, F: np.ndarray) -> np.ndarray:
        return np.sqrt(np.sum(F * F, axis=0))

    def dual_norm_sum(self, F: np.ndarray) -> float:
        return self.w * float(np.sum(self.pointwise(F)))

    def project(self, F: np.ndarray, radius: float) -> np.ndarray:
        return F * _shrink_factor(self.pointwise(F), radius)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dual_shape)

    def row_bound(self) -> float:
        """``max_i sum_j |(K e_i)_j|``, the sup-to-sup norm of ``Lambda``."""
        M = int(self.mask.sum())
        best = 0.0
        for i in range(M):
            e = np.zeros(M)
            e[i] = 1.0
            best = max(best, float(np.sum(self.pointwise(self.K(e)))))
        return best

    def wrap(self, F: np.ndarray) -> RieszVectorField:
        return RieszVectorField(self.box_grid, F)

    def unwrap(self, phi) -> np.ndarray:
        if not isinstance(phi, RieszVectorField) or not phi.grid.same_as(self.box_grid):
            raise InvalidArgument("dual variable does not live on the problem's box grid")
        return np.asarray(phi.components)

    def variation(self, u: np.ndarray) -> float:
        f = ScalarField(self.box_grid, self.embed(u))
        return var_riesz(f, self.op.alpha, op=self.op).value


class _GagliardoModel:
    """Gagliardo calculus on the pairs of domain nodes.

    Pair fields are dense antisymmetric matrices over the ``M`` domain nodes
    with the metric ``sum h^(2n) |x - y|^(-n) F G``.
    """

    def __init__(self, grid: Grid, mask: np.ndarray, alpha: float):
        if max(grid.shape) > DENSE_LIMIT[grid.dim]:
            raise Unsupported(f"dense pair storage is limited to {DENSE_LIMIT[grid.dim]} nodes per axis")
        self.grid = grid
        self.mask = mask
        self.alpha = alpha
        self.idx = np.flatnonzero(mask.reshape(-1))
        n = grid.dim
        r = _distances(grid)[np.ix_(self.idx, self.idx)].copy()
        np.fill_diagonal(r, 1.0)
        self.q_alpha = r ** (-alpha)
        np.fill_diagonal(self.q_alpha, 0.0)
        self.node_kernel = grid.weight * r ** (-n - alpha)
        np.fill_diagonal(self.node_kernel, 0.0)
        self.metric = grid.weight**2 * r ** (-n)
        np.fill_diagonal(self.metric, 0.0)
        self.w = grid.weight
        self.dual_shape = (self.idx.size, self.idx.size)

    def K(self, u: np.ndarray) -> np.ndarray:
        return (u[:, None] - u[None, :]) * self.q_alpha

    def Kt(self, F: np.ndarray) -> np.ndarray:
        # the kernel is symmetric, so the transpose term is a column sum
        P = F * self.node_kernel
        return P.sum(axis=1) - P.sum(axis=0)

    def inner(self, F: np.ndarray, G: np.ndarray) -> float:
        return float(np.sum(self.metric * F * G))

    def pointwise(self, F: np.ndarray) -> np.ndarray:
        return np.abs(F)

    def dual_norm_sum(self, F: np.ndarray) -> float:
        return float(np.sum(self.metric * np.abs(F)))

    def project(self, F: np.ndarray, radius: float) -> np.ndarray:
        return np.clip(F, -radius, radius)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.dual_shape)

    def row_bound(self) -> float:
        return 2.0 * float(self.node_kernel.sum(axis=1).max())

    def wrap(self, F: np.ndarray) -> NonlocalField:
        full = np.zeros((self.grid.size, self.grid.size))
        full[np.ix_(self.idx, self.idx)] = F
        return NonlocalField(self.grid, full, self.mask)

    def unwrap(self, phi) -> np.ndarray:
        if not isinstance(phi, NonlocalField) or not phi.grid.same_as(self.grid):
            raise InvalidArgument("dual variable does not live on the problem grid")
        return np.asarray(phi.values)[np.ix_(self.idx, self.idx)]

    def variation(self, u: np.ndarray) -> float:
        vals = np.zeros(self.grid.size)
        vals[self.idx] = u
        return var_gagliardo(ScalarField(self.grid, vals.reshape(self.grid.shape)), self.mask, self.alpha,
                             certificate=False).value


# problem ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DenoiseProblem:
    """Data and parameters of one denoising problem.

    ``domain`` defaults to the mask of ``u_N``. For the Riesz variant the
    dual variable lives on a box enlarged by ``pad`` nodes per side (half the
    grid by default) so that the nonlocal reach of the zero extension is
    represented.
    """

    u_N: ScalarField
    variant: str = "gagliardo"
    alpha: float = 0.5
    beta: float = 0.1
    gamma: float = 1.0
    p: float = 2.0
    domain: ConvexDomain | None = None
    backend: str = "quadrature"
    pad: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.variant not in ("riesz", "gagliardo"):
            raise InvalidArgument(f"unknown variant {self.variant!r}")
        if not 0 < self.alpha < 1:
            raise InvalidArgument("alpha must lie in (0, 1)")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise InvalidArgument("beta must be nonnegative")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise InvalidArgument("gamma must be positive")
        if not self.p > 1:
            raise InvalidArgument("p must exceed 1")
        if self.domain is not None and self.domain.dim != self.u_N.grid.dim:
            raise InvalidArgument("domain and grid dimensions differ")
        if not self.mask.any():
            raise InvalidArgument("the domain contains no grid node")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def grid(self) -> Grid:
        return self.u_N.grid

    @cached_property
    def mask(self) -> np.ndarray:
        if self.domain is None:
            return np.array(self.u_N.mask)
        return self.domain.mask(self.u_N.grid)

    @property
    def radius(self) -> float:
        """Feasibility radius of the normalized dual variable."""
        return self.beta / self.gamma

    @property
    def continuum_admissible(self) -> bool:
        """Whether ``p`` lies in the open interval ``(1, n / (n - alpha))``."""
        n = self.grid.dim
        return 1 < self.p < n / (n - self.alpha)

    @cached_property
    def model(self):
        if self.variant == "riesz":
            pad = self.pad or tuple(N // 2 for N in self.grid.shape)
            return _RieszModel(self.grid, self.mask, self.alpha, self.backend, tuple(pad))
        return _GagliardoModel(self.grid, self.mask, self.alpha)

    @cached_property
    def data(self) -> np.ndarray:
        return np.asarray(self.u_N.values)[self.mask]

    def with_params(self, **kw) -> "DenoiseProblem":
        args = dict(u_N=self.u_N, variant=self.variant, alpha=self.alpha, beta=self.beta, gamma=self.gamma,
                    p=self.p, domain=self.domain, backend=self.backend, pad=self.pad)
        args.update(kw)
        return DenoiseProblem(**args)


@dataclass(frozen=True, eq=False)
class DualVariable:
    """Normalized dual field of a problem; feasible when bounded by ``radius``.

    Riesz fields are bounded in pointwise Euclidean norm, Gagliardo fields
    pairwise.
    """

    variant: str
    field: RieszVectorField | NonlocalField
    radius: float

    def sup_norm(self) -> float:
        return self.field.sup_norm()

    @property
    def feasible(self) -> bool:
        return self.sup_norm() <= self.radius + FEAS_TOL


@dataclass
class SolveReport:
    """Terminal diagnostics of :func:`solve_predual`.

    Energies are in the units of the original (unnormalized) problem.
    ``recovery_residual`` is the norm of the projected-gradient step, which
    vanishes exactly at predual minimizers. ``history`` holds one row
    ``(k, primal, predual, gap, vi_residual, step)`` per logged iteration.
    """

    iterations: int
    primal_energy: float
    predual_energy: float
    duality_gap: float
    vi_residual: float
    recovery_residual: float
    step_size: float
    operator_norm_estimate: float
    converged: bool
    accelerated: bool = True
    restarts: int = 0
    recovery_sign: int = 1
    history: list[tuple[int, float, float, float, float, float]] = field(default_factory=list)

    @property
    def scale(self) -> float:
        return 1.0 + abs(self.primal_energy)

    @property
    def relative_gap(self) -> float:
        return self.duality_gap / self.scale


# energies ---------------------------------------------------------------

def _on_domain(u: ScalarField, prob: DenoiseProblem) -> np.ndarray:
    if not u.grid.same_as(prob.grid):
        raise InvalidArgument("field and problem grids differ")
    return np.asarray(u.values)[prob.mask]


def _fidelity(v: np.ndarray, prob: DenoiseProblem) -> float:
    return prob.grid.weight * float(np.sum(np.abs(v) ** prob.p)) / prob.p


def _normalized_primal(u: np.ndarray, prob: DenoiseProblem) -> float:
    val = _fidelity(u - prob.data, prob)
    if prob.radius > 0:
        val += prob.radius * prob.model.variation(u)
    return val


def _normalized_predual(F: np.ndarray, prob: DenoiseProblem, r: np.ndarray | None = None) -> float:
    r = prob.model.Kt(F) if r is None else r
    w = prob.grid.weight
    q = prob.q
    return w * float(np.sum(np.abs(r) ** q)) / q - w * float(np.dot(prob.data, r))


def primal_energy(u: ScalarField, prob: DenoiseProblem) -> float:
    """``(gamma/p) |u - u_N|_p^p + beta Var(u)`` on the domain."""
    return prob.gamma * _normalized_primal(_on_domain(u, prob), prob)


def predual_energy(phi: DualVariable, prob: DenoiseProblem) -> float:
    """``(1/q) |Div phi|_q^q + <u_N, Div phi>`` on the domain, times ``gamma``.

    Returns ``inf`` when ``phi`` leaves the feasible ball.
    """
    if phi.sup_norm() > prob.radius + FEAS_TOL:
        return math.inf
    return prob.gamma * _normalized_predual(prob.model.unwrap(phi.field), prob)


def project_feasible(phi: DualVariable, beta: float | None = None) -> DualVariable:
    """Nearest feasible field: radial shrink for Riesz, pairwise clamp for Gagliardo."""
    radius = phi.radius if beta is None else float(beta)
    if isinstance(phi.field, RieszVectorField):
        F = np.asarray(phi.field.components)
        scale = _shrink_factor(np.sqrt(np.sum(F * F, axis=0)), radius)
        return DualVariable(phi.variant, phi.field.with_components(F * scale), radius)
    A = 0.5 * (phi.field.values - phi.field.values.T)
    return DualVariable(phi.variant, phi.field.with_values(np.clip(A, -radius, radius)), radius)


def recover_primal(phi: DualVariable, prob: DenoiseProblem) -> ScalarField:
    """``u = u_N + |Div phi|^(q-2) Div phi`` on the domain, ``u_N`` elsewhere."""
    r = prob.model.Kt(prob.model.unwrap(phi.field))
    return _recover(r, prob)


def _recover(r: np.ndarray, prob: DenoiseProblem) -> ScalarField:
    q = prob.q
    step = r if q == 2 else np.abs(r) ** (q - 2) * r
    vals = np.array(prob.u_N.values)
    vals[prob.mask] = prob.data - step
    return prob.u_N.with_values(vals)


def _vi(Ku: np.ndarray, F: np.ndarray, prob: DenoiseProblem) -> float:
    m = prob.model
    return max(0.0, prob.radius * m.dual_norm_sum(Ku) - m.inner(Ku, F))


def vi_residual(phi: DualVariable, u: ScalarField, prob: DenoiseProblem) -> float:
    """``max_{|psi| <= beta} <K u, psi - phi>`` in closed form, times ``gamma``."""
    Ku = prob.model.K(_on_domain(u, prob))
    return prob.gamma * _vi(Ku, prob.model.unwrap(phi.field), prob)


# solvers ----------------------------------------------------------------

def power_iteration(apply, x0: np.ndarray, iterations: int = 50, tol: float = 1e-8) -> tuple[float, int]:
    """Largest eigenvalue of a positive semidefinite map by the power method.

    Stops once the Rayleigh quotient changes by less than ``tol`` relatively.
    Returns the estimate and the number of iterations used.
    """
    x = np.asarray(x0, dtype=float)
    nx = np.linalg.norm(x)
    if nx == 0:
        raise InvalidArgument("power iteration needs a nonzero start")
    x = x / nx
    lam = 0.0
    for k in range(1, iterations + 1):
        y = apply(x)
        new = float(np.dot(x, y))
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0, k
        x = y / ny
        if k > 1 and abs(new - lam) <= tol * abs(new):
            return new, k
        lam = new
    return lam, iterations


def _lipschitz(prob: DenoiseProblem, safety: float = 1.01) -> float:
    m = prob.model
    M = prob.data.size
    x0 = 1.0 + 0.1 * np.random.default_rng(0).standard_normal(M)
    lam, _ = power_iteration(lambda u: m.Kt(m.K(u)), x0)
    return safety * lam


def _state(F: np.ndarray, prob: DenoiseProblem):
    """Normalized energies, gap and VI residual at a dual iterate."""
    m = prob.model
    r = m.Kt(F)
    u = _recover(r, prob)
    uv = np.asarray(u.values)[prob.mask]
    Ku = m.K(uv)
    fid = _fidelity(uv - prob.data, prob)
    P = fid + prob.radius * m.dual_norm_sum(Ku)
    Q = _normalized_predual(F, prob, r)
    return P, Q, P + Q, _vi(Ku, F, prob), r


def solve_predual(prob: DenoiseProblem, tol: float = 1e-6, max_iter: int = 5000, accelerate: bool = True,
                  log_every: int = 1) -> tuple[DualVariable, SolveReport]:
    """Projected gradient (optionally FISTA) on the predual problem.

    Starts from zero with step ``1/L``, ``L`` an upper estimate of the
    gradient's Lipschitz constant. Accelerated runs restart the momentum
    whenever the predual energy increases, so every iterate is feasible.
    Stops once the gap falls to ``tol * (1 + |primal|)``.
    """
    m = prob.model
    q = prob.q
    radius = prob.radius
    if q < 2:
        raise Unsupported("the predual gradient is not Lipschitz for q < 2 (p > 2)")
    g = prob.gamma
    F = m.zeros()
    if radius == 0:
        P, Q, gap, vi, _ = _state(F, prob)
        rep = SolveReport(0, g * P, g * Q, g * gap, g * vi, 0.0, 0.0, 0.0, True, accelerate)
        return DualVariable(prob.variant, m.wrap(F), radius), rep
    L2 = _lipschitz(prob)
    if q == 2:
        L = L2
    else:
        # the q-power objective has curvature at most (q-1) V^(q-2) on the ball
        accelerate = False
        V = radius * m.row_bound()
        L = (q - 1) * V ** (q - 2) * L2
    step = 1.0 / L
    history = []
    Y, t = F.copy(), 1.0
    restarts = 0
    P, Q, gap, vi, r = _state(F, prob)
    k = 0
    converged = gap <= tol * (1 + abs(g * P)) / g
    if log_every:
        history.append((0, g * P, g * Q, g * gap, g * vi, step))
    grad_map = 0.0
    while not converged and k < max_iter:
        k += 1
        rY = m.Kt(Y) if accelerate else r
        resid = rY if q == 2 else np.abs(rY) ** (q - 2) * rY
        grad = m.K(resid - prob.data)
        F_new = m.project(Y - step * grad, radius)
        grad_map = L * math.sqrt(max(m.inner(F_new - Y, F_new - Y), 0.0))
        P_new, Q_new, gap, vi, r = _state(F_new, prob)
        if accelerate:
            if Q_new > Q:
                restarts += 1
                t = 1.0
                Y = F_new
            else:
                t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
                Y = F_new + ((t - 1.0) / t_new) * (F_new - F)
                t = t_new
        else:
            Y = F_new
        F, P, Q = F_new, P_new, Q_new
        converged = gap <= tol * (1 + abs(g * P)) / g
        if log_every and (k % log_every == 0 or converged or k == max_iter):
            history.append((k, g * P, g * Q, g * gap, g * vi, step))
    if not converged:
        log.warning("predual solver stopped after %d iterations with gap %.3e", k, g * gap)
    rep = SolveReport(k, g * P, g * Q, g * gap, g * vi, grad_map, step, L2, converged, accelerate, restarts,
                      1, history)
    return DualVariable(prob.variant, m.wrap(F), radius), rep


@dataclass
class PrimalReference:
    """Result of the primal-dual reference solver."""

    u: ScalarField
    duality_gap: float
    iterations: int
    converged: bool


def solve_primal_reference(prob: DenoiseProblem, tol: float = 1e-6, max_iter: int = 50000) -> PrimalReference:
    """Accelerated primal-dual iteration on the saddle form (``p = 2`` only).

    Uses the same operator pair as :func:`solve_predual` and the strong
    convexity of the fidelity term to shrink the primal step. Stops once the
    gap between the primal iterate and the dual iterate is below
    ``tol * (1 + |primal|)``.
    """
    if prob.p != 2:
        raise Unsupported("the reference solver handles p = 2 only")
    m = prob.model
    g = prob.gamma
    radius = prob.radius
    u = prob.data.copy()
    if radius == 0:
        return PrimalReference(prob.u_N, 0.0, 0, True)
    L = _lipschitz(prob)
    tau = sigma = 1.0 / math.sqrt(L)
    F = m.zeros()
    ubar = u.copy()
    gap = math.inf
    k = 0
    converged = False
    while k < max_iter:
        k += 1
        F = m.project(F + sigma * m.K(ubar), radius)
        u_new = (u - tau * m.Kt(F) + tau * prob.data) / (1.0 + tau)
        theta = 1.0 / math.sqrt(1.0 + 2.0 * tau)
        tau *= theta
        sigma /= theta
        ubar = u_new + theta * (u_new - u)
        u = u_new
        if k % 10 == 0:
            P = _normalized_primal(u, prob)
            gap = P + _normalized_predual(F, prob)
            if gap <= tol * (1 + abs(g * P)) / g:
                converged = True
                break
    vals = np.array(prob.u_N.values)
    vals[prob.mask] = u
    if not converged:
        log.warning("reference solver stopped after %d iterations with gap %.3e", k, g * gap)
    return PrimalReference(prob.u_N.with_values(vals), g * gap, k, converged)
