"""Experiment orchestration: run configs, sweeps, persistence, verification.

A run is described by a JSON-style mapping (grid, fractional order(s),
operator/source/threshold presets, solver controls) and produces a
self-describing directory: a deterministic manifest (config echo, seed,
versions, output checksums), binary field dumps with text headers, CSV
tables, and a separate timings file.  Identical config + seed reproduces
every artifact bit for bit; wall-clock timings are quarantined in
timings.json so the manifest stays comparable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .forms import (
    OperatorData,
    SourceData,
    Threshold,
    coercivity_margin,
    estimate_constants,
    operator_from_preset,
    source_from_preset,
    threshold_from_preset,
)
from .grid import GridSpec, ScalarField, ball, bump, interval, lp_norm, random_bumps, rectangle, write_field
from .oracle import analytic_mk_1d, analytic_torsion_1d, brute_force_qp, pdhg_solve
from .penalty import KKTReport, SolverConfig, Solution, continuation_solve
from .riesz import (
    adjointness_residual,
    frac_gradient_direct,
    frac_gradient_spectral,
    gamma_coeff,
    kernel_norm_ball,
    kernel_norm_tail,
    localization_error,
    mu_coeff,
    poincare_check,
    sphere_area,
)
from .grid import VectorField


@dataclass(frozen=True)
class RunConfig:
    """Validated run description; `raw` echoes the source mapping."""

    grid: GridSpec
    s_list: tuple[float, ...]
    operator_cfg: dict
    source_cfg: dict
    threshold_cfg: dict
    solver: SolverConfig
    seed: int
    output_dir: str | None
    dependence_cfg: dict = field(default_factory=dict)
    integrability: dict = field(default_factory=dict)  # documentation only
    raw: dict = field(default_factory=dict)

    @property
    def s(self) -> float:
        return self.s_list[0]

    def build_operator(self) -> OperatorData:
        return operator_from_preset(self.grid, self.operator_cfg)

    def build_source(self) -> SourceData:
        return source_from_preset(self.grid, self.source_cfg)

    def build_threshold(self) -> Threshold:
        return threshold_from_preset(self.grid, self.threshold_cfg)


def _omega_from_mapping(m: dict):
    kind = m.get("shape", m.get("kind", "interval"))
    if kind == "interval":
        return interval(m.get("halfwidth", 1.0))
    if kind == "rectangle":
        return rectangle(*m["halfwidths"])
    if kind == "ball":
        return ball(m["radius"])
    raise ValueError(f"unknown Omega shape {kind!r}")


def config_from_mapping(cfg: dict) -> RunConfig:
    """Validate a config mapping; every module-level invariant is enforced
    here before any solve starts."""
    gm = cfg["grid"]
    grid = GridSpec(
        dim=int(gm.get("dim", 1)),
        box_side=float(gm["box_side"]),
        points_per_axis=int(gm["points_per_axis"]),
        omega=_omega_from_mapping(gm.get("omega", {})),
        buffer=float(gm.get("buffer", 0.5)),
    )
    if "s_list" in cfg:
        s_list = tuple(float(s) for s in cfg["s_list"])
    else:
        s_list = (float(cfg.get("s", 0.5)),)
    for s in s_list:
        if not 0 < s <= 1:
            raise ValueError(f"s={s} outside (0, 1]")
    sm = dict(cfg.get("solver", {}))
    solver = SolverConfig(
        eps=float(sm.get("eps", 1e-2)),
        q=sm.get("q"),
        eps_schedule=tuple(sm.get("eps_schedule", ())),
        newton_tol=float(sm.get("newton_tol", 1e-8)),
        max_iters=int(sm.get("max_iters", 120)),
        damping=float(sm.get("damping", 1e-11)),
        min_step=float(sm.get("min_step", 1e-7)),
        seed=int(sm.get("seed", cfg.get("seed", 0))),
    )
    rc = RunConfig(
        grid=grid,
        s_list=s_list,
        operator_cfg=dict(cfg.get("operator", {"a": 1.0})),
        source_cfg=dict(cfg.get("source", {"f_sharp": 1.0})),
        threshold_cfg=dict(cfg.get("threshold", {"g": 1.0})),
        solver=solver,
        seed=int(cfg.get("seed", 0)),
        output_dir=cfg.get("output_dir"),
        dependence_cfg=dict(cfg.get("dependence", {})),
        integrability=dict(cfg.get("integrability", {})),
        raw=cfg,
    )
    rc.build_operator()
    rc.build_source()
    rc.build_threshold()
    return rc


def load_config(path: str | Path) -> RunConfig:
    return config_from_mapping(json.loads(Path(path).read_text()))


# -- persistence ------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(outdir: Path, cfg_raw: dict, seed: int, extra: dict | None = None) -> None:
    outputs = {}
    for p in sorted(outdir.iterdir()):
        if p.name in ("manifest.json", "timings.json") or p.is_dir():
            continue
        outputs[p.name] = _sha256(p)
    manifest = {
        "config": cfg_raw,
        "seed": seed,
        "versions": {"fracmk": __version__, "numpy": np.__version__},
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    outdir.joinpath("manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _kkt_row(eps: float, sol: Solution, rep: KKTReport) -> list:
    return [
        eps,
        sol.iterations,
        sol.residual_norm,
        rep.violation_sup,
        rep.complementarity,
        rep.equation_residual,
        rep.penalized_residual_sup,
        rep.v_measure,
        rep.k_l1,
        rep.psi_l1,
        rep.dsu_lr,
        rep.r_exponent,
    ]


_KKT_HEADER = [
    "eps",
    "iterations",
    "residual_norm",
    "violation_sup",
    "complementarity",
    "equation_residual",
    "penalized_residual_sup",
    "v_measure",
    "k_l1",
    "psi_l1",
    "dsu_lr",
    "r_exponent",
]


def run_solve(cfg: RunConfig, outdir: str | Path) -> list[tuple[float, Solution, KKTReport]]:
    """Continuation solve (or single eps) with full run-directory output."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    op, src, thr = cfg.build_operator(), cfg.build_source(), cfg.build_threshold()
    stages = continuation_solve(op, src, thr, cfg.s, cfg.solver)
    t1 = time.perf_counter()
    eps_f, sol, rep = stages[-1]
    write_field(sol.u, outdir / "u", s=cfg.s)
    write_field(sol.lam, outdir / "lambda", s=cfg.s)
    write_field(sol.psi, outdir / "psi", s=cfg.s)
    _write_csv(outdir / "kkt.csv", _KKT_HEADER, [_kkt_row(e, s_, r_) for e, s_, r_ in stages])
    _write_manifest(outdir, cfg.raw, cfg.seed)
    outdir.joinpath("timings.json").write_text(json.dumps({"solve_seconds": t1 - t0}) + "\n")
    return stages


def weak_battery(grid: GridSpec, count: int = 8) -> list[ScalarField]:
    """Fixed battery of L^inf test functions on Omega: smooth bumps at
    spread centers plus low-order polynomials restricted to Omega."""
    mask = grid.masks().inside
    pts = grid.coords()
    out = []
    if grid.omega.kind == "ball":
        radius = grid.omega.radius
    else:
        radius = min(grid.omega.halfwidths)
    centers = np.linspace(-0.5 * radius, 0.5 * radius, max(count - 4, 4))
    for c0 in centers:
        center = (c0,) * grid.dim
        out.append(bump(grid, radius=radius / 2, center=center))
    for k0 in range(4):
        poly = np.where(mask, pts[0] ** k0, 0.0)
        out.append(ScalarField(grid, poly))
    return out


def _weak_lambda_error(lam_a, lam_b, grid: GridSpec, battery) -> float:
    """max over the battery of |<lam_a - lam_b, phi>_Omega| / ||phi||_inf."""
    mask = grid.masks().inside
    hd = grid.cell_volume
    diff = (lam_a - lam_b) * mask
    worst = 0.0
    for phi in battery:
        sup = float(np.max(np.abs(phi.values)))
        if sup == 0:
            continue
        worst = max(worst, abs(hd * float(np.sum(diff * phi.values))) / sup)
    return worst


def run_localize(cfg: RunConfig, outdir: str | Path | None = None) -> list[dict]:
    """Localization sweep: solve at each s in s_list plus s = 1, compare.

    Reports sup error, an H^sigma surrogate error (spectral sigma-gradient
    at sigma = 0.5), and weak multiplier errors against the test battery,
    all measured against the classical s = 1 solution.
    """
    s_values = [s for s in cfg.s_list if s < 1.0]
    op, src, thr = cfg.build_operator(), cfg.build_source(), cfg.build_threshold()
    sol_1 = continuation_solve(op, src, thr, 1.0, cfg.solver)[-1][1]
    battery = weak_battery(cfg.grid)

    # sweep points are independent deterministic solves over immutable
    # fields; run them concurrently and join in sweep order
    def point(s):
        return continuation_solve(op, src, thr, s, cfg.solver)[-1][1]

    with ThreadPoolExecutor(max_workers=min(4, max(1, len(s_values)))) as pool:
        sols = list(pool.map(point, s_values))
    rows = []
    for s, sol in zip(s_values + [1.0], sols + [sol_1]):
        diff = ScalarField(cfg.grid, sol.u.values - sol_1.u.values)
        rows.append(
            {
                "s": s,
                "sup_error": float(np.max(np.abs(diff.values))),
                "h_sigma_error": lp_norm(frac_gradient_spectral(diff, 0.5), 2.0),
                "weak_lambda_error": _weak_lambda_error(sol.lam.values, sol_1.lam.values, cfg.grid, battery),
            }
        )
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(
            outdir / "localize.csv",
            ["s", "sup_error", "h_sigma_error", "weak_lambda_error"],
            [[r["s"], r["sup_error"], r["h_sigma_error"], r["weak_lambda_error"]] for r in rows],
        )
        _write_manifest(outdir, cfg.raw, cfg.seed)
    return rows


def run_dependence(cfg: RunConfig, outdir: str | Path | None = None) -> list[dict]:
    """Continuous-dependence ratios in the coercive regime.

    Source perturbations are compared against the a-priori bound
    (C_*/delta)||df||_{L^{2#}} + (1/delta)||df_vec||_2 with the empirical
    Sobolev constant; threshold perturbations against an empirically
    calibrated C_1 ||dg||_inf bound (calibrated at the largest shift with a
    1.5 safety factor, then tested on the others).  VI solutions come from
    the certified PDHG oracle.
    """
    s = cfg.s
    grid = cfg.grid
    op, src, thr = cfg.build_operator(), cfg.build_source(), cfg.build_threshold()
    consts = estimate_constants(grid, s, samples=32, seed=cfg.seed)
    report = coercivity_margin(op, s, consts)
    if not report.coercive:
        raise ValueError("dependence study requires a coercive operator (delta > 0)")
    delta = report.delta
    mask = grid.masks().inside
    hd = grid.cell_volume
    d = grid.dim
    two_sharp = 2 * d / (d + 2 * s) if s < d / 2 else 1.0

    tol = float(cfg.dependence_cfg.get("tol", 1e-9))
    base = pdhg_solve(op, src, thr, s, tol=tol)
    rows = []

    def h_s_norm(a, b):
        diff = ScalarField(grid, a - b)
        return lp_norm(frac_gradient_spectral(diff, s), 2.0)

    for shift in cfg.dependence_cfg.get("source_shifts", (0.1, 0.05, 0.2)):
        f_hat = np.where(mask, src.f_sharp + shift, 0.0)
        src_hat = SourceData(grid, f_hat, src.f_vec)
        sol_hat = pdhg_solve(op, src_hat, thr, s, tol=tol)
        measured = h_s_norm(sol_hat.u.values, base.u.values)
        df = ScalarField(grid, np.where(mask, f_hat - src.f_sharp, 0.0))
        bound = report.c_star / delta * lp_norm(df, two_sharp, region=mask)
        rows.append(
            {"kind": "source", "shift": float(shift), "measured": measured, "bound": bound,
             "ratio": measured / bound if bound > 0 else 0.0}
        )

    g_shifts = sorted(cfg.dependence_cfg.get("threshold_shifts", (0.1, 0.05)), reverse=True)
    if g_shifts:
        cal = g_shifts[0]
        sols = {}
        for shift in g_shifts:
            thr_hat = Threshold(grid, thr.g + shift, thr.g_star + shift, thr.g_upper + shift)
            sols[shift] = pdhg_solve(op, src, thr_hat, s, tol=tol)
        m_cal = h_s_norm(sols[cal].u.values, base.u.values)
        c1 = 1.5 * m_cal**2 / cal
        for shift in g_shifts:
            measured = h_s_norm(sols[shift].u.values, base.u.values)
            bound2 = c1 * shift
            rows.append(
                {"kind": "threshold", "shift": float(shift), "measured": measured**2,
                 "bound": bound2, "ratio": measured**2 / bound2 if bound2 > 0 else 0.0,
                 "calibration": shift == cal}
            )

    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(
            outdir / "dependence.csv",
            ["kind", "shift", "measured", "bound", "ratio"],
            [[r["kind"], r["shift"], r["measured"], r["bound"], r["ratio"]] for r in rows],
        )
        _write_manifest(outdir, cfg.raw, cfg.seed)
    return rows


# -- verification suite ---------------------------------------------------------


def _verify_kernel_norms(rows, rng):
    from scipy.integrate import quad

    param_grid = [
        (d, alpha, R)
        for d in (1, 2)
        for alpha in (0.2, 0.5, 0.8)
        for R in (0.7, 1.5)
    ]
    for d, alpha, R in param_grid:
        closed = kernel_norm_ball(d, alpha, R)
        oracle = quad(lambda r: sphere_area(d) * gamma_coeff(d, alpha) * r ** (alpha - 1), 0, R)[0]
        err = abs(closed - oracle) / oracle
        rows.append(("kernel_ball", f"d={d},alpha={alpha},R={R}", err, 1e-6, err <= 1e-6))
    tail_grid = [(1, 0.25, 2.0, 1.0), (1, 0.3, 2.5, 1.5), (2, 0.5, 3.0, 1.0), (2, 0.2, 2.0, 0.7)]
    for d, alpha, p, R in tail_grid:
        pp = p / (p - 1)
        closed = kernel_norm_tail(d, alpha, p, R)
        dens = lambda r: sphere_area(d) * (gamma_coeff(d, alpha) * r ** (alpha - d)) ** pp * r ** (d - 1)
        oracle = quad(dens, R, np.inf)[0] ** (1 / pp)
        err = abs(closed - oracle) / oracle
        rows.append(("kernel_tail", f"d={d},alpha={alpha},p={p},R={R}", err, 1e-6, err <= 1e-6))
    balls = [kernel_norm_ball(1, a, 1.0) for a in (0.4, 0.2, 0.1, 0.05)]
    mono = all(a > b for a, b in zip(balls, balls[1:])) and abs(balls[-1] - 1) < 0.05
    rows.append(("kernel_ball_limit", "alpha->0", balls[-1], 1.05, mono))
    tails = [kernel_norm_tail(1, a, 2.0, 1.0) for a in (0.4, 0.2, 0.1, 0.05)]
    mono_t = all(a > b for a, b in zip(tails, tails[1:]))
    rows.append(("kernel_tail_limit", "alpha->0", tails[-1], tails[0], mono_t))


def _verify_adjointness(rows, rng, s_offset):
    for dim, n in ((1, 1024), (2, 128)):
        omega = interval(1.0) if dim == 1 else ball(1.0)
        grid = GridSpec(dim=dim, box_side=8.0, points_per_axis=n, omega=omega, buffer=1.0)
        worst = 0.0
        for _ in range(100):
            u = ScalarField(grid, rng.normal(size=grid.shape))
            xi = VectorField(grid, rng.normal(size=(dim,) + grid.shape))
            s = rng.uniform(0.2, 1.0)
            worst = max(worst, adjointness_residual(u, xi, s, div_s_offset=s_offset))
        rows.append(("adjointness", f"d={dim},n={n},pairs=100", worst, 1e-12, worst <= 1e-12))


def _verify_two_path(rows):
    grid = GridSpec(dim=1, box_side=4.0, points_per_axis=256, omega=interval(1.0), buffer=0.75)
    u = bump(grid)
    mask = grid.masks().buffer_inside
    for s in (0.3, 0.5, 0.7, 0.9):
        spec = frac_gradient_spectral(u, s).values[0][mask]
        direct = frac_gradient_direct(u, s, eval_mask=mask, periodic=True).values[0][mask]
        rel = float(np.linalg.norm(spec - direct) / np.linalg.norm(spec))
        rows.append(("two_path_gradient", f"s={s},n=256", rel, 1e-3, rel <= 1e-3))


def _verify_localization(rows):
    grid = GridSpec(dim=1, box_side=8.0, points_per_axis=512, omega=interval(1.0), buffer=1.0)
    errs = localization_error(bump(grid), [0.7, 0.9, 0.99])
    ok = bool(errs[0] > errs[1] > errs[2] and errs[2] <= 5e-2)
    rows.append(("operator_localization", "s=0.7,0.9,0.99", float(errs[2]), 5e-2, ok))


def _verify_tails(rows):
    grid = GridSpec(dim=1, box_side=8.0, points_per_axis=256, omega=interval(1.0), buffer=1.0)
    u = bump(grid)
    from .riesz import tail_decay_check

    for p in (1.0, 2.0):
        res = tail_decay_check(u, 0.7, p, [1.0, 1.5, 2.0])
        ratio = max(res["ratio"])
        decreasing = all(a > b for a, b in zip(res["tail"], res["tail"][1:]))
        rows.append((f"tail_decay_p{int(p)}", "R=1,1.5,2", ratio, 1.0, bool(ratio <= 1.0 and decreasing)))
    dist = grid.omega_distance()
    outside = dist > 0
    l1 = grid.cell_volume * float(np.sum(np.abs(u.values)))
    worst = 0.0
    for s in (0.3, 0.7):
        dv = frac_gradient_direct(u, s, eval_mask=outside).magnitude()[outside]
        envelope = mu_coeff(1, s) * l1 / dist[outside] ** (1 + s)
        worst = max(worst, float(np.max(dv / envelope)))
    rows.append(("far_field_bound", "s=0.3,0.7", worst, 1.0, worst <= 1.0))


def _verify_poincare(rows):
    grid = GridSpec(dim=1, box_side=8.0, points_per_axis=256, omega=interval(1.0), buffer=1.0)
    ens = random_bumps(grid, 16, seed=11)
    vals = []
    for p in (1.0, 2.0, np.inf):
        for s in (0.5, 0.7, 0.9):
            vals.append(max(poincare_check(u, s, p) for u in ens) * s)
    spread = max(vals) / min(vals)
    rows.append(("poincare_scaled_ratio", "p=1,2,inf;s=0.5,0.7,0.9", spread, 3.0, spread <= 3.0))


def _verify_oracle_triangle(rows):
    from .forms import constant_source, constant_threshold, isotropic_operator

    grid = GridSpec(dim=1, box_side=4.0, points_per_axis=64, omega=interval(1.0), buffer=0.6)
    op = isotropic_operator(grid, a=1.0)
    src = constant_source(grid, 2.0)
    thr = constant_threshold(grid, 1.0)
    for s in (1.0, 0.7):
        pen = continuation_solve(op, src, thr, s, SolverConfig(eps_schedule=(0.1, 0.03, 0.01, 3e-3, 1e-3)))[-1][1]
        pd = pdhg_solve(op, src, thr, s, tol=1e-8)
        qp = brute_force_qp(op, src, thr, s, tol=1e-8)
        worst = 0.0
        for a, b in ((pen, pd), (pen, qp), (pd, qp)):
            worst = max(worst, float(np.linalg.norm(a.u.values - b.u.values) / np.linalg.norm(b.u.values)))
        rows.append(("oracle_triangle", f"s={s},n=64", worst, 1e-3, worst <= 1e-3))


_VERIFY_CHECKS = {
    "kernels": _verify_kernel_norms,
    "adjointness": _verify_adjointness,
    "two-path": _verify_two_path,
    "localization": _verify_localization,
    "tails": _verify_tails,
    "poincare": _verify_poincare,
    "oracle-triangle": _verify_oracle_triangle,
}


def run_verify(
    outdir: str | Path | None = None,
    seed: int = 0,
    selection: list[str] | None = None,
    adjoint_s_offset: float = 0.0,
) -> tuple[list[tuple], bool]:
    """Run the kernel-identity suite plus the oracle agreement triangle.

    Returns (rows, all_pass); each row is (check, params, measured, bound,
    pass).  `selection` restricts to named checks (empty list = no checks,
    vacuously passing); `adjoint_s_offset` is the fault-injection hook that
    perturbs s on the divergence side of the adjointness identity.
    """
    rng = np.random.default_rng(seed)
    names = list(_VERIFY_CHECKS) if selection is None else list(selection)
    rows: list[tuple] = []
    for name in names:
        if name not in _VERIFY_CHECKS:
            raise ValueError(f"unknown check {name!r}")
        fn = _VERIFY_CHECKS[name]
        if name == "kernels":
            fn(rows, rng)
        elif name == "adjointness":
            fn(rows, rng, adjoint_s_offset)
        else:
            fn(rows)
    ok = all(r[4] for r in rows)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        _write_csv(
            outdir / "verify.csv",
            ["check", "params", "measured", "bound", "pass"],
            [list(r) for r in rows],
        )
        _write_manifest(outdir, {"selection": names, "adjoint_s_offset": adjoint_s_offset}, seed)
    return rows, ok


def run_oracle(cfg: RunConfig, outdir: str | Path) -> dict:
    """Dump benchmark fields and penalty-vs-analytic comparison tables."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid
    results = {}
    rows = []
    for name, bench in (
        ("torsion", analytic_torsion_1d(1.0, 2.0)),
        ("mk", analytic_mk_1d(1.0)),
    ):
        u_ex, lam_ex = bench.sample(grid)
        write_field(u_ex, outdir / f"{name}_u_exact")
        write_field(lam_ex, outdir / f"{name}_lambda_exact")
        op_cfg = {"a": bench.a0, "a_star": bench.a0}
        op = operator_from_preset(grid, op_cfg)
        src = source_from_preset(grid, {"f_sharp": bench.f})
        thr = threshold_from_preset(grid, {"g": 1.0})
        stages = continuation_solve(op, src, thr, 1.0, cfg.solver)
        sol = stages[-1][1]
        write_field(sol.u, outdir / f"{name}_u_penalty", s=1.0)
        write_field(sol.lam, outdir / f"{name}_lambda_penalty", s=1.0)
        sup_u = float(np.max(np.abs(sol.u.values - u_ex.values)))
        weak = _weak_lambda_error(sol.lam.values, lam_ex.values, grid, weak_battery(grid))
        rows.append([name, sup_u, weak])
        results[name] = {"sup_u": sup_u, "weak_lambda": weak}
    _write_csv(outdir / "oracle.csv", ["benchmark", "sup_u_error", "weak_lambda_error"], rows)
    _write_manifest(outdir, cfg.raw, cfg.seed)
    return results
