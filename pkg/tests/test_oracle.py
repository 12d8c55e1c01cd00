"""Analytic benchmarks and the independent PDHG / dual-ascent solvers."""

import numpy as np
import pytest

from fracmk import GridSpec, interval
from fracmk.forms import constant_source, constant_threshold, isotropic_operator
from fracmk.oracle import (
    analytic_mk_1d,
    analytic_torsion_1d,
    brute_force_qp,
    direct_linear_solve,
    pdhg_solve,
)
from fracmk.penalty import SolverConfig, continuation_solve


def grid_1d(n=128, L=4.0):
    return GridSpec(dim=1, box_side=L, points_per_axis=n, omega=interval(1.0), buffer=0.6)


def rel_l2(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- analytic benchmarks ---------------------------------------------------------


def test_torsion_parameter_validation():
    with pytest.raises(ValueError):
        analytic_torsion_1d(0.0, 1.0)
    with pytest.raises(ValueError):
        analytic_torsion_1d(1.0, -2.0)
    with pytest.raises(ValueError):
        analytic_mk_1d(0.0)


def test_torsion_elastic_regime():
    a0 = 1.0
    bench = analytic_torsion_1d(a0, a0 / 2)
    x = np.linspace(-0.999, 0.999, 1001)
    assert np.all(bench.lam(x) == 0.0)
    assert np.max(np.abs(bench.uprime(x))) <= 0.5 + 1e-12
    # parabola value
    assert bench.u(np.array([0.0]))[0] == pytest.approx(0.25)


def test_torsion_plastic_regime_frozen_values():
    # f = 2 a0: plastic region |x| > 1/2; lambda(3/4) = a0/2 per the formula
    # lambda = (f|x| - a0)^+, confirmed against the QP oracle below
    a0 = 1.0
    bench = analytic_torsion_1d(a0, 2 * a0)
    assert bench.lam(np.array([0.75]))[0] == pytest.approx(0.5 * a0, rel=1e-14)
    assert bench.lam(np.array([0.49]))[0] == 0.0
    assert bench.lam(np.array([0.51]))[0] > 0.0
    x = np.linspace(-0.999, 0.999, 1001)
    assert np.max(np.abs(bench.uprime(x))) <= 1.0 + 1e-12
    assert bench.u(np.array([1.0]))[0] == pytest.approx(0.0, abs=1e-14)


def test_benchmarks_satisfy_their_pde_by_substitution():
    # the flux (a0 + lambda) u' equals -f x in both regimes, which encodes
    # -((a0+lambda)u')' = f distributionally; verified nodewise to 1e-12
    x = np.linspace(-0.999, 0.999, 2001)
    for bench in (analytic_torsion_1d(1.0, 0.5), analytic_torsion_1d(1.0, 2.0), analytic_mk_1d(1.0)):
        flux = bench.flux(x)
        assert np.max(np.abs(flux + bench.f * x)) <= 1e-12
        # complementarity holds pointwise exactly
        comp = bench.lam(x) * (np.abs(bench.uprime(x)) - 1.0)
        assert np.max(np.abs(comp)) <= 1e-12


def test_mk_distance_potential_values():
    bench = analytic_mk_1d(1.0)
    assert bench.u(np.array([0.0]))[0] == 1.0
    assert bench.u(np.array([1.0]))[0] == 0.0
    assert bench.u(np.array([-1.0]))[0] == 0.0
    assert bench.lam(np.array([0.5]))[0] == pytest.approx(0.5)


# -- pdhg -------------------------------------------------------------------------


def test_pdhg_zero_source():
    g = grid_1d(64)
    op = isotropic_operator(g, a=1.0)
    sol = pdhg_solve(op, constant_source(g, 0.0), constant_threshold(g, 1.0), 1.0, tol=1e-10)
    assert np.max(np.abs(sol.u.values)) <= 1e-10


def test_pdhg_rejects_nonsymmetric_input():
    g = grid_1d(64)
    rng = np.random.default_rng(0)
    mask = g.masks().inside
    bv = np.where(mask, rng.normal(size=g.shape), 0.0)[None]
    op = isotropic_operator(g, a=1.0, b=bv)
    with pytest.raises(ValueError):
        pdhg_solve(op, constant_source(g, 1.0), constant_threshold(g, 1.0), 1.0)


def test_pdhg_unconstrained_matches_linear_solve():
    g = grid_1d(128)
    op = isotropic_operator(g, a=1.0)
    src = constant_source(g, 2.0)
    thr = constant_threshold(g, 1e3)  # never active
    sol = pdhg_solve(op, src, thr, 1.0, tol=0.0, max_iters=30_000)
    u_lin = direct_linear_solve(op, src, 1.0)
    assert rel_l2(sol.u.values, u_lin.values) <= 1e-8
    assert np.max(np.abs(sol.lam.values)) == 0.0


def test_pdhg_matches_analytic_torsion():
    g = grid_1d(512)
    op = isotropic_operator(g, a=1.0)
    src = constant_source(g, 2.0)
    thr = constant_threshold(g, 1.0)
    sol = pdhg_solve(op, src, thr, 1.0, tol=1e-8)
    u_ex = analytic_torsion_1d(1.0, 2.0).sample(g)[0]
    assert np.max(np.abs(sol.u.values - u_ex.values)) <= 1e-3


# -- brute-force QP ---------------------------------------------------------------


def test_qp_unconstrained_matches_linear_solve_exactly():
    g = grid_1d(64)
    op = isotropic_operator(g, a=1.0)
    src = constant_source(g, 2.0)
    sol = brute_force_qp(op, src, constant_threshold(g, 1e3), 1.0, tol=1e-10)
    u_lin = direct_linear_solve(op, src, 1.0)
    # with the constraint never active the first inner solve is already exact
    assert rel_l2(sol.u.values, u_lin.values) <= 1e-12


def test_qp_torsion_matches_closed_form_to_order_h():
    g = grid_1d(64)
    op = isotropic_operator(g, a=1.0)
    src = constant_source(g, 2.0)
    thr = constant_threshold(g, 1.0)
    sol = brute_force_qp(op, src, thr, 1.0, tol=1e-8)
    u_ex = analytic_torsion_1d(1.0, 2.0).sample(g)[0]
    assert np.max(np.abs(sol.u.values - u_ex.values)) <= 2 * g.spacing


def test_qp_multiplier_matches_transport_density():
    # flux balance gives lambda(1/2) = f/2 for the degenerate benchmark
    g = grid_1d(64)
    op = isotropic_operator(g, a=0.0)
    src = constant_source(g, 1.0)
    thr = constant_threshold(g, 1.0)
    sol = brute_force_qp(op, src, thr, 1.0, tol=1e-6, max_outer=120_000)
    x = g.axis()
    lam_half = sol.lam.values[np.argmin(np.abs(x - 0.5))]
    assert lam_half == pytest.approx(0.5, abs=0.05)
    bench = analytic_mk_1d(1.0)
    assert np.max(np.abs(sol.u.values - bench.sample(g)[0].values)) <= 3 * g.spacing


def test_oracle_triangle_small_fractional():
    # penalty continuation, PDHG and the QP agree pairwise on one small
    # fractional instance (the full-size triangle lives in the acceptance run)
    g = grid_1d(64)
    op = isotropic_operator(g, a=1.0)
    src = constant_source(g, 2.0)
    thr = constant_threshold(g, 1.0)
    s = 0.7
    pen = continuation_solve(op, src, thr, s, SolverConfig(eps_schedule=(0.1, 0.03, 0.01, 3e-3, 1e-3)))[-1][1]
    pd = pdhg_solve(op, src, thr, s, tol=1e-8)
    qp = brute_force_qp(op, src, thr, s, tol=1e-8)
    assert rel_l2(pen.u.values, pd.u.values) <= 1e-3
    assert rel_l2(pen.u.values, qp.u.values) <= 1e-3
    assert rel_l2(pd.u.values, qp.u.values) <= 1e-3
