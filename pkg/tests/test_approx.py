import numpy as np
import pytest

from fracbv.approx import (
    Cutoff,
    Mollifier,
    density_pipeline_gagliardo,
    density_pipeline_riesz,
    mollify,
    pair_mollify,
    recovery_sequence,
)
from fracbv.errors import InvalidArgument, ResolutionFailure
from fracbv.gagliardo import NonlocalField, gag_divergence, gagliardo_seminorm
from fracbv.grid import ConvexDomain, ScalarField, make_grid
from fracbv.riesz import RieszVectorField


@pytest.mark.parametrize("shape", [(101,), (41, 41)])
def test_mollifier_has_unit_mass(shape):
    g = make_grid([(-1, 1)] * len(shape), list(shape))
    mol = Mollifier.build(g, 0.2)
    assert mol.resolved
    assert g.weight * mol.stencil.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(mol.stencil >= 0)


def test_subgrid_mollifier_needs_permission():
    g = make_grid([(-1, 1)], 101)
    with pytest.raises(InvalidArgument):
        Mollifier.build(g, 0.01)
    mol = Mollifier.build(g, 0.01, allow_subgrid=True)
    assert not mol.resolved
    assert g.weight * mol.stencil.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(mol.stencil >= 0)


def test_subgrid_stencil_matches_bump_second_moment():
    g = make_grid([(-1, 1)], 201)
    h = g.spacing[0]
    fine = Mollifier.build(make_grid([(-1, 1)], 20001), 0.015)
    offs = (np.arange(fine.stencil.size) - fine.radius_nodes[0]) * fine.grid.spacing[0]
    target = fine.grid.weight * np.sum(fine.stencil * offs**2)
    coarse = Mollifier.build(g, 0.015, allow_subgrid=True)
    got = g.weight * np.sum(coarse.stencil * (np.array([-1, 0, 1]) * h) ** 2)
    assert got == pytest.approx(target, rel=1e-4)


def test_periodic_mollification_preserves_mean_and_constants():
    g = make_grid([(0, 1)], 128)
    v = np.random.default_rng(0).random(128)
    out = mollify(ScalarField(g, v), 0.05, boundary="periodic").values
    assert out.mean() == pytest.approx(v.mean(), rel=1e-12)
    assert np.allclose(mollify(ScalarField(g, np.ones(128)), 0.05, "periodic").values, 1.0)


def test_mollification_does_not_increase_seminorm():
    g = make_grid([(-2, 2)], 257)
    x = g.coords()[0]
    f = ScalarField(g, ((x > -0.5) & (x < 0.5)).astype(float))
    assert gagliardo_seminorm(mollify(f, 0.1), None, 0.5) <= gagliardo_seminorm(f, None, 0.5)


def test_cutoff_profile_and_lipschitz_bound():
    c = Cutoff(1.0)
    r = np.linspace(0, 3, 3001)[:, None]
    v = c(r)
    assert np.all(v[r[:, 0] <= 1] == 1) and np.all(v[r[:, 0] >= 2] == 0)
    assert np.abs(np.diff(v)).max() / (r[1, 0] - r[0, 0]) <= c.lipschitz * (1 + 1e-6)


def _pair_field(n=41, seed=0):
    g = make_grid([(-1, 1)], n)
    x = g.coords()[0]
    s = np.abs(x) < 0.5
    B = np.random.default_rng(seed).standard_normal((n, n))
    return NonlocalField(g, (B - B.T) * np.outer(s, s), s)


def test_pair_mollify_antisymmetric_and_contracting():
    F = _pair_field()
    out = pair_mollify(F, 0.1)
    assert np.abs(out.values + out.values.T).max() == 0
    assert out.sup_norm() <= F.sup_norm()


def test_pair_mollify_commutes_with_divergence():
    F = _pair_field(seed=1)
    lhs = gag_divergence(pair_mollify(F, 0.1), 0.4).values
    rhs = mollify(gag_divergence(F, 0.4), 0.1).values
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_pair_mollify_needs_margin():
    F = _pair_field()
    with pytest.raises(InvalidArgument):
        pair_mollify(F, 0.8)


def _riesz_input(beta):
    g = make_grid([(-2, 2), (-2, 2)], 25)
    X, Y = g.coords()
    comp = np.stack([np.exp(-(X**2 + Y**2)), X * np.exp(-(X**2 + Y**2))])
    return RieszVectorField(g, comp * beta / np.sqrt((comp**2).sum(0)).max())


def test_riesz_pipeline_report():
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    Theta, rep = density_pipeline_riesz(_riesz_input(0.3), sq, 0.3, 1e-2, 0.5)
    assert rep.total <= 1e-2 and rep.rho > 1
    assert rep.delta == pytest.approx(rep.separation / 200)
    assert Theta.sup_norm() <= 0.3 + 1e-12
    assert [s for s, _ in rep.rows()] == ["cutoff", "dilation", "mollification", "total"]


def test_pipeline_refuses_coarse_delta():
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    with pytest.raises(InvalidArgument):
        density_pipeline_riesz(_riesz_input(0.3), sq, 0.3, 1e-2, 0.5, rho=1.2, delta=0.5)


def test_pipeline_reports_unreachable_target():
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    with pytest.raises(ResolutionFailure):
        density_pipeline_riesz(_riesz_input(0.3), sq, 0.3, 1e-6, 0.5, rho=1.5)


def test_pipelines_reject_infeasible_input():
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    with pytest.raises(InvalidArgument):
        density_pipeline_riesz(_riesz_input(0.3), sq, 0.1, 1e-2, 0.5)
    g = make_grid([(-1.5, 1.5), (-1.5, 1.5)], 9)
    A = np.triu(np.ones((81, 81)), 1)
    with pytest.raises(InvalidArgument):
        density_pipeline_gagliardo(NonlocalField(g, A - A.T), sq, 0.5, 1e-2, 0.5)


def test_gagliardo_pipeline_keeps_support_in_domain():
    sq = ConvexDomain.rectangle(-1, 1, -1, 1)
    g = make_grid([(-1.5, 1.5), (-1.5, 1.5)], 13)
    m = sq.mask(g)
    P = g.points()
    A = np.outer(np.cos(P[:, 0]), np.sin(P[:, 1]))
    A = (A - A.T) * np.outer(m.ravel(), m.ravel())
    Theta, rep = density_pipeline_gagliardo(NonlocalField(g, 0.2 * A / np.abs(A).max(), m), sq, 0.2, 1e-2, 0.5)
    assert rep.rho < 1 and rep.extras["leaked"] <= 1e-10
    assert Theta.sup_norm() <= 0.2 + 1e-12
    assert Theta.antisymmetric


def test_recovery_sequence_bounded_by_full_seminorm():
    g = make_grid([(-1.5, 2.5)], 161)
    x = g.coords()[0]
    f = ScalarField(g, ((x >= 0) & (x <= 1)).astype(float))
    trace = recovery_sequence(f, np.abs(x - 0.5) < 1.9, np.abs(x - 0.5) < 1.2, [0.2, 0.1, 0.05], 0.5)
    assert trace.bounded
    assert trace.values[-1] >= trace.values[0]


def test_recovery_sequence_checks_margin():
    g = make_grid([(-1, 1)], 81)
    x = g.coords()[0]
    f = ScalarField(g, np.exp(-x**2))
    with pytest.raises(InvalidArgument):
        recovery_sequence(f, np.abs(x) < 0.9, np.abs(x) < 0.8, [0.2], 0.5)
