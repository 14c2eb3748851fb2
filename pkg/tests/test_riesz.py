import numpy as np
import pytest
from scipy.special import gamma, hyp1f1

from fracbv.errors import InvalidArgument, Unsupported
from fracbv.grid import ScalarField, make_grid, periodic_grid
from fracbv.riesz import (
    RieszVectorField,
    SpectralConfig,
    SpectralRiesz,
    calibrate_constants,
    closed_form_constants,
    frac_laplacian,
    laplacian_constant,
    riesz_divergence,
    riesz_gradient,
    riesz_operator,
    riesz_potential,
)


def gaussian_laplacian(r2, s, n):
    """Closed form of |D|^s exp(-|x|^2) in n dimensions."""
    return 2**s * gamma((n + s) / 2) / gamma(n / 2) * hyp1f1((n + s) / 2, n / 2, -r2)


def test_half_laplacian_constant_in_1d():
    # |D| on the line has kernel 1 / (pi |x - y|^2)
    assert laplacian_constant(1.0, 1) == pytest.approx(1 / np.pi, rel=1e-14)


def test_constants_share_gradient_and_divergence_value():
    c = closed_form_constants(0.3, 2)
    assert c.c2 == c.c3 > 0
    assert c.c1 > 0


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.9])
def test_spectral_laplacian_of_gaussian_2d(alpha):
    g = make_grid([(-12, 12), (-12, 12)], 192)
    r2 = sum(x**2 for x in g.coords())
    out = SpectralRiesz(g, alpha).laplacian(np.exp(-r2))
    ref = gaussian_laplacian(r2, alpha, 2)
    assert np.abs(out - ref).max() <= 2e-3 * np.abs(ref).max()


def test_quadrature_laplacian_of_gaussian_1d():
    g = make_grid([(-16, 16)], 1024)
    x = g.coords()[0]
    out = frac_laplacian(ScalarField(g, np.exp(-x**2)), 0.4, backend="quadrature").values
    ref = gaussian_laplacian(x**2, 0.4, 1)
    assert np.linalg.norm(out - ref) <= 1e-5 * np.linalg.norm(ref)


def test_periodic_gradient_of_cosine_is_minus_sine():
    g = periodic_grid([(0, 2 * np.pi)], [64])
    x = g.coords()[0]
    G = SpectralRiesz(g, 0.3, SpectralConfig(periodic=True)).gradient(np.cos(x))
    assert np.abs(G[0] + np.sin(x)).max() <= 1e-12


def test_adjoint_divergence_is_minus_transpose():
    g = make_grid([(-1, 1)], 24)
    op = riesz_operator(g, 0.6)
    G = np.stack([op.gradient(e)[0] for e in np.eye(24)], axis=1)
    D = np.stack([op.adjoint_divergence(e[None, :]) for e in np.eye(24)], axis=1)
    assert np.abs(D + G.T).max() <= 1e-12 * np.abs(G).max()


def test_formula_divergence_close_to_adjoint_for_smooth_fields():
    g = make_grid([(-10, 10)], 512)
    x = g.coords()[0]
    F = RieszVectorField(g, (x * np.exp(-x**2))[None, :])
    adj = riesz_divergence(F, 0.5).values
    direct = riesz_divergence(F, 0.5, backend="spectral").values
    assert np.linalg.norm(adj - direct) <= 1e-2 * np.linalg.norm(direct)


def test_gradient_backends_agree():
    g = make_grid([(-12, 12)], 768)
    x = g.coords()[0]
    f = ScalarField(g, np.exp(-x**2))
    a = riesz_gradient(f, 0.5).components
    b = riesz_gradient(f, 0.5, backend="spectral").components
    assert np.linalg.norm(a - b) <= 1e-4 * np.linalg.norm(b)


def _bump(x, r=0.5):
    z = x**2 / r**2
    out = np.zeros_like(x)
    out[z < 1] = np.exp(-1 / (1 - z[z < 1]))
    return out


def test_inverse_pair_recovers_mean_zero_bump():
    g = make_grid([(-1, 1)], 512)
    x = g.coords()[0]
    d = np.gradient(_bump(x), x)
    op = SpectralRiesz(g, 0.5, SpectralConfig(padding_factor=4))
    assert np.abs(op.inverse_pair(d) - d)[np.abs(x) < 0.6].max() <= 1e-6


def test_inverse_pair_bias_is_padded_mean():
    g = make_grid([(-1, 1)], 512)
    b = _bump(g.coords()[0])
    op = SpectralRiesz(g, 0.5, SpectralConfig(padding_factor=4))
    assert np.abs(op.inverse_pair(b) - (b - b.sum() / 2048)).max() <= 1e-12


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_calibration_keeps_closed_form(alpha):
    c = calibrate_constants(alpha)
    assert not c.fitted
    assert c.residual <= 1e-6


def test_divergence_of_compact_field_bounded_as_box_grows():
    h = 0.05
    sup, l1 = [], []
    for L in (4, 8, 16, 32):
        g = make_grid([(-L, L)], int(round(2 * L / h)) + 1)
        x = g.coords()[0]
        F = (x * np.exp(-4 * x**2) * (np.abs(x) < 1))[None]
        d = riesz_operator(g, 0.5).adjoint_divergence(F)
        sup.append(np.abs(d).max())
        l1.append(g.weight * np.abs(d).sum())
    assert max(sup) - min(sup) <= 1e-12 * max(sup)
    # the L1 norm picks up more of the decaying tail, by shrinking increments
    inc = np.diff(l1)
    assert np.all(inc >= 0) and np.all(inc[1:] < 0.5 * inc[:-1])


def test_potential_requires_support_inside_mask():
    g = make_grid([(-1, 1)], 16)
    mask = np.zeros(16, bool)
    mask[4:12] = True
    with pytest.raises(InvalidArgument):
        riesz_potential(ScalarField(g, np.ones(16), mask), 0.5)


def test_quadrature_rejects_order_one():
    g = make_grid([(-1, 1)], 16)
    with pytest.raises(Unsupported):
        frac_laplacian(ScalarField(g, np.zeros(16)), 1.0, backend="quadrature")


def test_spectral_config_validation():
    with pytest.raises(InvalidArgument):
        SpectralConfig(padding_factor=1)


def test_unknown_backend():
    with pytest.raises(InvalidArgument):
        riesz_operator(make_grid([(0, 1)], 8), 0.5, "fmm")
