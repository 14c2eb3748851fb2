import warnings

import numpy as np
import pytest

from fracbv.errors import InvalidArgument, TruncationWarning, Unsupported
from fracbv.gagliardo import (
    NonlocalField,
    field_dot,
    frac_perimeter,
    gag_composition_check,
    gag_divergence,
    gag_gradient,
    gagliardo_seminorm,
    pair_inner,
    scalar_field_product,
)
from fracbv.grid import ScalarField, make_grid, periodic_grid
from fracbv.riesz import laplacian_constant


def brute_seminorm(f, alpha):
    P = f.grid.points()
    v = f.values.reshape(-1)
    total = 0.0
    for i in range(len(v)):
        for j in range(len(v)):
            if i != j:
                total += abs(v[i] - v[j]) * np.linalg.norm(P[i] - P[j]) ** (-f.grid.dim - alpha)
    return total * f.grid.weight**2


def test_seminorm_matches_double_loop_2d():
    g = make_grid([(0, 1), (0, 1)], 7)
    f = ScalarField(g, np.random.default_rng(0).random(g.shape))
    assert gagliardo_seminorm(f, None, 0.4) == pytest.approx(brute_seminorm(f, 0.4), rel=1e-12)


def test_seminorm_independent_of_chunking():
    g = make_grid([(-1, 1)], 300)
    f = ScalarField(g, np.sin(3 * g.coords()[0]))
    assert gagliardo_seminorm(f, chunk=7) == pytest.approx(gagliardo_seminorm(f), rel=1e-12)


def test_divergence_of_gradient_by_hand():
    g = make_grid([(0, 1)], 9)
    v = np.random.default_rng(1).standard_normal(9)
    x = g.coords()[0]
    out = gag_divergence(gag_gradient(ScalarField(g, v), 0.3), 0.3).values
    h = g.spacing[0]
    ref = [-2 * h * sum((v[i] - v[j]) / abs(x[i] - x[j]) ** 1.6 for j in range(9) if j != i) for i in range(9)]
    assert np.allclose(out, ref, rtol=1e-12)


def test_divergence_ignores_symmetric_part():
    g = make_grid([(0, 1)], 10)
    S = np.random.default_rng(2).random((10, 10))
    assert np.abs(gag_divergence(NonlocalField(g, S + S.T), 0.5).values).max() <= 1e-12


def test_field_dot_integrates_to_pair_inner():
    g = make_grid([(0, 1), (0, 1)], 6)
    rng = np.random.default_rng(3)
    F, G = (NonlocalField(g, rng.standard_normal((36, 36))) for _ in range(2))
    assert g.weight * field_dot(F, G).values.sum() == pytest.approx(pair_inner(F, G), rel=1e-12)


def test_scalar_field_product_keeps_antisymmetry():
    g = make_grid([(0, 1)], 8)
    A = np.random.default_rng(4).standard_normal((8, 8))
    out = scalar_field_product(ScalarField(g, np.arange(8.0)), NonlocalField(g, A - A.T))
    assert out.antisymmetric


def test_nonlocal_field_support_and_truncation():
    g = make_grid([(0, 1)], 5)
    sup = np.array([1, 1, 1, 0, 1], bool)
    F = NonlocalField(g, np.ones((5, 5)), sup, truncation_radius=0.3)
    assert np.all(F.values[3] == 0) and np.all(np.diag(F.values) == 0)
    assert F.values[0, 1] == 1 and F.values[0, 2] == 0


def test_dense_storage_limit():
    with pytest.raises(InvalidArgument):
        NonlocalField(make_grid([(0, 1)], 129), np.zeros((129, 129)))


def test_order_one_is_unsupported():
    g = make_grid([(0, 1)], 4)
    with pytest.raises(Unsupported):
        gag_gradient(ScalarField(g, np.zeros(4)), 1.0)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
def test_perimeter_of_unit_interval(alpha):
    g = make_grid([(-6, 7)], 4096)
    x = g.coords()[0]
    res = frac_perimeter((x >= 0) & (x <= 1), g, alpha, diagonal_correction=True)
    assert res.total == pytest.approx(4 / (alpha * (1 - alpha)), rel=5e-3)


def test_perimeter_tail_warning():
    g = make_grid([(-1.5, 2.5)], 200)
    x = g.coords()[0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = frac_perimeter((x >= 0) & (x <= 1), g, 0.5, tail_bound=1e-3)
    assert res.tail > 1e-3
    assert any(issubclass(w.category, TruncationWarning) for w in caught)


def test_composition_converges_to_laplacian_of_double_order():
    fits = []
    for N in (64, 128, 256, 512):
        g = periodic_grid([(0, 2 * np.pi)], [N])
        fits.append(gag_composition_check(ScalarField(g, np.exp(np.cos(g.coords()[0]))), 0.3))
    res = [r.residual for r in fits]
    assert all(b < 0.5 * a for a, b in zip(res, res[1:]))
    assert res[-1] <= 1e-4
    # div d^alpha = -2 x the punctured integral, so c tends to half the constant of |D|^(2 alpha)
    assert fits[-1].c == pytest.approx(laplacian_constant(0.6, 1) / 2, rel=1e-3)


def test_composition_rejects_large_order():
    g = periodic_grid([(0, 2 * np.pi)], [16])
    with pytest.raises(InvalidArgument):
        gag_composition_check(ScalarField(g, np.zeros(16)), 0.6)
