"""Small hand-checkable cases, mostly closed forms and degenerate inputs."""

import numpy as np
import pytest

from fracbv.approx import density_pipeline_gagliardo, density_pipeline_riesz, mollify, recovery_sequence
from fracbv.denoise import (
    DenoiseProblem,
    DualVariable,
    predual_energy,
    primal_energy,
    project_feasible,
    recover_primal,
    solve_predual,
    solve_primal_reference,
    vi_residual,
)
from fracbv.errors import InvalidArgument
from fracbv.gagliardo import (
    NonlocalField,
    field_dot,
    frac_perimeter,
    gag_composition_check,
    gag_gradient,
    gagliardo_seminorm,
    scalar_field_product,
)
from fracbv.grid import (
    ConvexDomain,
    ScalarField,
    extend_by_zero,
    make_grid,
    periodic_grid,
    radial_function,
    scale_domain,
    scale_field,
    separation,
)
from fracbv.riesz import RieszVectorField, SpectralConfig, SpectralRiesz, frac_laplacian, riesz_gradient
from fracbv.variation import gagliardo_pairing, var_gagliardo, var_riesz

# grids and domains ---------------------------------------------------------


def test_grid_coordinates():
    assert make_grid([(0, 1)], 2).coords()[0].tolist() == [0.0, 1.0]
    g = make_grid([(-1, 1), (-1, 1)], 3)
    assert g.size == 9 and g.spacing == (1.0, 1.0)
    assert make_grid([(0, 2)], 5).coords()[0][3] == 1.5


def test_extension_cases():
    small, big = make_grid([(0, 1)], 5), make_grid([(-1, 2)], 13)
    x = big.coords()[0]
    assert np.array_equal(extend_by_zero(ScalarField(small, np.ones(5)), big).values, ((x >= 0) & (x <= 1)) * 1.0)
    assert not extend_by_zero(ScalarField(small, np.zeros(5)), big).values.any()
    spike = np.zeros(5)
    spike[2] = 3.0
    out = extend_by_zero(ScalarField(small, spike), big).values
    assert np.flatnonzero(out).tolist() == [6] and out[6] == 3.0


def test_interval_radial_function():
    assert radial_function(ConvexDomain.interval(-2, 3, center=0.0), np.array([1.0])) == pytest.approx(3.0)


def test_scale_domain_cases():
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    assert np.allclose(np.abs(scale_domain(sq, 2).vertices), 2)
    assert np.array_equal(scale_domain(sq, 1).vertices, sq.vertices)
    assert scale_domain(ConvexDomain.interval(-1, 1), 0.5).vertices.ravel().tolist() == [-0.5, 0.5]


def test_separation_of_polygonal_disk():
    disk = ConvexDomain.regular_polygon(64)
    # the gap between homothetic 64-gons is their inradius difference
    assert separation(disk, 1.0, 2.0) == pytest.approx(np.cos(np.pi / 64), abs=1e-3)


def test_separation_is_continuous_at_equal_radii():
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    d = separation(sq, 2 - 1e-6, 2.0)
    assert 0 < d <= 1e-6 * np.sqrt(2) + 1e-9


def test_scale_field_cases():
    g = make_grid([(-4, 4)], 8001)
    x = g.coords()[0]
    f = ScalarField(g, ((x >= 0) & (x <= 1)).astype(float))
    assert scale_field(f, 1.0) is f
    d = g.weight * np.abs(scale_field(f, 1.1).values - f.values).sum()
    assert abs(d - 0.1) <= g.spacing[0]
    g2 = make_grid([(-1, 1)], 21)
    c = scale_field(ScalarField(g2, np.full(21, 2.5)), 1.3)
    assert np.allclose(c.values, 2.5, rtol=1e-15, atol=0)


# Riesz ---------------------------------------------------------------------


def test_periodic_trivial_cases():
    g = periodic_grid([(0, 2 * np.pi)], [32])
    x = g.coords()[0]
    op = SpectralRiesz(g, 0.4, SpectralConfig(periodic=True))
    assert np.abs(op.potential(np.cos(x)) - np.cos(x)).max() <= 1e-12
    assert np.abs(op.laplacian(np.full(32, 4.0))).max() <= 1e-12
    assert np.abs(op.gradient(np.full(32, 4.0))).max() <= 1e-12
    assert np.abs(op.gradient(np.sin(x))[0] - np.cos(x)).max() <= 1e-12
    assert np.abs(op.potential(np.zeros(32))).max() == 0


def test_gradient_of_odd_function_is_even():
    g = make_grid([(-3, 3)], 121)
    x = g.coords()[0]
    G = riesz_gradient(ScalarField(g, x * np.exp(-x**2)), 0.6).components[0]
    assert np.abs(G - G[::-1]).max() <= 1e-13 * np.abs(G).max()


def test_gradient_approaches_derivative_as_order_grows():
    g = make_grid([(-16, 16)], 1024)
    x = g.coords()[0]
    f = ScalarField(g, np.sin(x) * np.exp(-(x**2) / 8))
    df = np.gradient(f.values, x, edge_order=2)
    errs = [np.linalg.norm(riesz_gradient(f, a).components[0] - df) for a in (0.7, 0.8, 0.9)]
    assert errs[0] > errs[1] > errs[2]


def test_laplacian_of_zero():
    g = make_grid([(-1, 1)], 32)
    for backend in ("spectral", "quadrature"):
        assert not frac_laplacian(ScalarField(g, np.zeros(32)), 0.5, backend).values.any()


# Gagliardo -----------------------------------------------------------------


def test_difference_quotient_formulas():
    g = make_grid([(0, 1)], 6)
    x = g.coords()[0]
    assert not gag_gradient(ScalarField(g, np.full(6, 2.0)), 0.5).values.any()
    spike = np.zeros(6)
    spike[2] = 1.0
    D = gag_gradient(ScalarField(g, spike), 0.5).values
    j = np.arange(6) != 2
    assert np.allclose(D[2, j], np.abs(x[2] - x[j]) ** -0.5) and np.allclose(D[j, 2], -D[2, j])
    L = gag_gradient(ScalarField(g, x), 0.3).values
    dx = x[:, None] - x[None, :]
    assert np.allclose(L, np.sign(dx) * np.abs(dx) ** 0.7)


def test_field_dot_properties():
    g = make_grid([(0, 1)], 7)
    rng = np.random.default_rng(0)
    F, G = (NonlocalField(g, rng.standard_normal((7, 7))) for _ in range(2))
    assert np.all(field_dot(F, F).values >= 0)
    assert np.allclose(field_dot(F, G).values, field_dot(G, F).values)
    one = np.zeros((7, 7))
    one[1, 4] = one[4, 1] = 0.3
    h = g.spacing[0]
    assert field_dot(*(NonlocalField(g, one),) * 2).values[1] == pytest.approx(h * 0.09 / (3 * h))


def test_product_with_constants():
    g = make_grid([(0, 1)], 5)
    F = NonlocalField(g, np.random.default_rng(1).standard_normal((5, 5)))
    assert np.array_equal(scalar_field_product(ScalarField(g, np.ones(5)), F).values, F.values)
    assert not scalar_field_product(ScalarField(g, np.zeros(5)), F).values.any()


def test_seminorm_of_domain_indicator_on_domain():
    g = make_grid([(-1, 2)], 61)
    x = g.coords()[0]
    om = (x > 0) & (x < 1)
    assert gagliardo_seminorm(ScalarField(g, om * 1.0), om, 0.5) == 0.0


def test_perimeter_cases():
    g = make_grid([(-4, 4)], 801)
    x = g.coords()[0]
    assert frac_perimeter(np.zeros(801, bool), g, 0.5).total == 0.0
    h = g.spacing[0]
    totals = [frac_perimeter((x >= -1 + k * h - 1e-9) & (x <= k * h + 1e-9), g, 0.5).total for k in (0, 1, 10, 50)]
    # the box-truncated part alone moves with the distance to the box edge; the analytic tail compensates
    assert max(totals) - min(totals) <= 1e-8 * totals[0]


def test_composition_check_on_cosine():
    fits = []
    for N in (256, 512, 1024):
        g = periodic_grid([(0, 2 * np.pi)], [N])
        fits.append(gag_composition_check(ScalarField(g, np.cos(g.coords()[0])), 0.25))
    assert fits[1].residual <= 5e-2
    assert max(r.c for r in fits) <= 1.05 * min(r.c for r in fits)
    g = periodic_grid([(0, 2 * np.pi)], [64])
    assert gag_composition_check(ScalarField(g, np.full(64, 3.0)), 0.25).residual == 0.0
    f = ScalarField(g, np.cos(2 * g.coords()[0]) + np.sin(g.coords()[0]))
    assert gag_composition_check(f.with_values(-3 * f.values), 0.25).residual == pytest.approx(
        gag_composition_check(f, 0.25).residual, rel=1e-12)


# variations ----------------------------------------------------------------


def test_variation_decreases_under_mollification():
    g = make_grid([(-2, 3)], 501)
    x = g.coords()[0]
    chi = ScalarField(g, ((x >= 0) & (x <= 1)).astype(float))
    vals = [var_riesz(chi, 0.5).value] + [var_riesz(mollify(chi, e), 0.5).value for e in (0.05, 0.1, 0.2)]
    assert all(np.isfinite(vals)) and all(b < a for a, b in zip(vals, vals[1:]))


def test_gagliardo_certificate_is_pairwise_optimal():
    g = make_grid([(0, 1)], 12)
    f = ScalarField(g, np.random.default_rng(2).standard_normal(12))
    res = var_gagliardo(f, None, 0.5)
    rng = np.random.default_rng(3)
    for _ in range(20):
        A = rng.uniform(-1, 1, (12, 12))
        assert gagliardo_pairing(f, NonlocalField(g, A), 0.5) <= res.value + 1e-12
    assert var_gagliardo(f.with_values(np.zeros(12)), None, 0.5).value == 0.0


def test_checkerboard_value_and_seminorm_agree():
    g = make_grid([(-1, 1)], 200)
    f = ScalarField(g, (-1.0) ** np.arange(200))
    v, s = var_gagliardo(f, None, 0.5, certificate=False).value, gagliardo_seminorm(f, None, 0.5)
    assert v / s == 1.0 and v > 100


# approximation --------------------------------------------------------------


def test_mollifier_cases():
    g = make_grid([(-2, 3)], 1001)
    x = g.coords()[0]
    chi = ScalarField(g, ((x >= 0) & (x <= 1)).astype(float))
    m = mollify(chi, 0.1).values
    assert np.all(m[(x < -0.1 - 1e-9) | (x > 1.1 + 1e-9)] == 0)
    assert g.weight * np.abs(m - chi.values).sum() <= 0.1
    assert np.abs(m).max() <= 1.0 + 1e-15
    assert np.allclose(mollify(ScalarField(g, np.full(1001, 2.0)), 0.1, "periodic").values, 2.0)


def test_degenerate_pipelines():
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    g = make_grid([(-2, 2), (-2, 2)], 17)
    Theta, rep = density_pipeline_riesz(RieszVectorField(g, np.zeros((2, 17, 17))), sq, 0.0, 1e-2, 0.5)
    assert not Theta.components.any() and rep.total == 0
    g2 = make_grid([(-1.5, 1.5), (-1.5, 1.5)], 9)
    m = sq.mask(g2)
    S = np.outer(m.ravel(), m.ravel()) * 0.1
    Theta, rep = density_pipeline_gagliardo(NonlocalField(g2, S, m), sq, 0.1, 1e-2, 0.5, rho=1.0, delta=0.0)
    # a symmetric input has zero antisymmetric part
    assert rep.total == 0 and not Theta.values.any()
    A = np.triu(S, 1)
    Theta, rep = density_pipeline_gagliardo(NonlocalField(g2, A, m), sq, 0.1, 1e-2, 0.5, rho=1.0, delta=0.0)
    assert rep.total == 0 and Theta.antisymmetric
    assert np.array_equal(Theta.values, 0.5 * (A - A.T))


def test_recovery_trace_cases():
    g = make_grid([(-3, 4)], 281)
    x = g.coords()[0]
    om, G = (x > -2) & (x < 3), (x > -1) & (x < 2)
    chi = ScalarField(g, ((x >= 0) & (x <= 1)).astype(float))
    tr = recovery_sequence(chi, om, G, [0.2, 0.1, 0.05], 0.5)
    assert tr.bounded and list(tr.values) == sorted(tr.values)
    flat = recovery_sequence(chi.with_values(np.full(281, 2.0)), om, G, [0.2, 0.1], 0.5)
    assert max(flat.values) == 0.0
    with pytest.raises(InvalidArgument):
        recovery_sequence(chi, om, om, [0.1], 0.5)


# denoising -----------------------------------------------------------------


def _image(n=10, seed=0):
    h = 1.0 / n
    g = make_grid([(h / 2, 1 - h / 2)] * 2, n)
    return ScalarField(g, np.random.default_rng(seed).random(g.shape))


def test_energy_cases():
    u = _image()
    flat = u.with_values(np.full(u.values.shape, 0.4))
    prob = DenoiseProblem(flat, "gagliardo", 0.5, 0.1)
    assert primal_energy(flat, prob) == 0.0
    g = u.grid
    inner = ConvexDomain.rectangle(0.2, 0.8, 0.2, 0.8)
    chi = ScalarField(g, inner.mask(g) * 1.0, inner.mask(g))
    assert primal_energy(chi, DenoiseProblem(chi, "riesz", 0.5, 0.1)) > 0
    pr = DenoiseProblem(u, "riesz", 0.5, 0.1)
    zero = DualVariable("riesz", pr.model.wrap(pr.model.zeros()), pr.radius)
    assert predual_energy(zero, pr) == 0.0
    assert np.array_equal(recover_primal(zero, pr).values, u.values)
    assert primal_energy(u, DenoiseProblem(u, "riesz", 0.5, 0.0)) == 0.0


def test_riesz_projection_of_long_vector():
    prob = DenoiseProblem(_image(), "riesz", 0.5, 0.1)
    F = prob.model.zeros()
    F[:, 3, 4] = [0.12, 0.16]
    out = prob.model.unwrap(project_feasible(DualVariable("riesz", prob.model.wrap(F), 0.1)).field)
    assert np.hypot(*out[:, 3, 4]) == pytest.approx(0.1, rel=1e-15)
    assert out[1, 3, 4] / out[0, 3, 4] == pytest.approx(0.16 / 0.12)
    inside = DualVariable("riesz", prob.model.wrap(0.5 * out), 0.1)
    assert np.array_equal(prob.model.unwrap(project_feasible(inside).field), 0.5 * out)


def test_constant_datum_needs_no_dual():
    u = _image()
    prob = DenoiseProblem(u.with_values(np.full(u.values.shape, 0.7)), "gagliardo", 0.5, 0.1)
    phi, rep = solve_predual(prob)
    assert rep.duality_gap == 0.0 and rep.iterations == 0
    assert not prob.model.unwrap(phi.field).any()


def test_recovery_is_affine_for_quadratic_fidelity():
    prob = DenoiseProblem(_image(), "gagliardo", 0.5, 0.1)
    A = np.random.default_rng(4).uniform(-0.05, 0.05, (100, 100))
    F = prob.model.wrap(A - A.T)
    u1 = recover_primal(DualVariable("gagliardo", F, 0.1), prob).values
    u3 = recover_primal(DualVariable("gagliardo", F.with_values(-3 * F.values), 0.1), prob).values
    d = prob.u_N.values
    assert np.allclose(u3 - d, -3 * (u1 - d), atol=1e-14)


def test_vi_residual_cases():
    u = _image()
    p0 = DenoiseProblem(u, "riesz", 0.5, 0.0)
    zero = DualVariable("riesz", p0.model.wrap(p0.model.zeros()), 0.0)
    assert vi_residual(zero, u, p0) == 0.0
    rng = np.random.default_rng(5)
    for variant in ("riesz", "gagliardo"):
        prob = DenoiseProblem(u, variant, 0.5, 0.1)
        F = rng.uniform(-0.05, 0.05, prob.model.zeros().shape)
        if variant == "gagliardo":
            F = F - F.T
        phi = project_feasible(DualVariable(variant, prob.model.wrap(F), prob.radius))
        assert vi_residual(phi, recover_primal(phi, prob), prob) > 0


def test_large_beta_flattens_gagliardo_solution():
    u = _image(8)
    prob = DenoiseProblem(u, "gagliardo", 0.5, 1e3)
    ref = solve_primal_reference(prob, 1e-9, 200000)
    assert np.abs(ref.u.values - u.values.mean()).max() <= 1e-3
    assert solve_primal_reference(prob.with_params(beta=0.0)).u is u
