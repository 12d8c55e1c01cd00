"""Penalized-regularized solver for the constrained transport system.

The constrained problem is approximated by: find u supported in Omega with

    L(u, v) + int k_eps(|D^s u| - g) D^s u . D^s v
            + eps int |D^s u|^(q-2) D^s u . D^s v  =  F(v)

for all v supported in Omega, with the exponential penalty

    k_eps(t) = 0 (t <= 0),  e^(t/eps) - 1 (0 < t <= 1/eps),
    e^(1/eps^2) - 1 (t >= 1/eps),

and q > 1 + d/s.  The multiplier estimate is lambda = k_eps(|D^s u|-g)
itself, the flux is Psi = lambda D^s u, and eps-continuation drives the
KKT diagnostics to the complementarity system.

Unknowns are the values of u at the Omega-interior nodes, so membership in
the zero-extension space is enforced strongly.  The fractional gradient of
the nodal basis is assembled once per (grid, s) as a dense matrix (the
spectral operator is a lattice convolution, so columns are shifts of one
kernel); Newton systems are then small dense solves.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import ceil

import numpy as np

from .forms import OperatorData, SourceData, Threshold
from .grid import GridSpec, ScalarField, VectorField, random_bumps
from .riesz import EXP_CAP, _as_s, frac_gradient_spectral, riesz_symbol


@dataclass(frozen=True)
class SolverConfig:
    """Penalty parameter, regularization power and iteration controls."""

    eps: float = 1e-2
    q: float | None = None  # default ceil(1 + d/s) + 1
    eps_schedule: tuple[float, ...] = ()
    newton_tol: float = 1e-8
    max_iters: int = 120
    damping: float = 1e-11
    min_step: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.q is not None and self.q <= 2:
            raise ValueError("q must exceed 2")
        sched = tuple(float(e) for e in self.eps_schedule)
        if sched:
            if any(not 0 < e < 1 for e in sched):
                raise ValueError("schedule entries must lie in (0, 1)")
            if any(a <= b for a, b in zip(sched, sched[1:])):
                raise ValueError("schedule must be strictly decreasing")
        object.__setattr__(self, "eps_schedule", sched)


def default_q(d: int, s: float) -> float:
    return float(ceil(1 + d / s) + 1)


@dataclass(frozen=True)
class PenaltyFn:
    """The exponential penalty k_eps and its primitives.

    The argument of every exponential is clamped at EXP_CAP so transient
    Newton overshoots stay finite; for eps >= 1/sqrt(EXP_CAP) the clamp
    never engages and the function is exactly the saturated exponential.
    """

    eps: float

    @property
    def t_cap(self) -> float:
        return min(1.0 / self.eps, EXP_CAP * self.eps)

    @property
    def k_sat(self) -> float:
        return float(np.expm1(min(1.0 / self.eps**2, EXP_CAP)))

    def value(self, t):
        t = np.asarray(t, dtype=float)
        arg = np.minimum(t / self.eps, min(1.0 / self.eps**2, EXP_CAP))
        return np.where(t > 0, np.expm1(arg), 0.0)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        on = (t > 0) & (t < self.t_cap)
        arg = np.minimum(t / self.eps, EXP_CAP)
        return np.where(on, np.exp(arg) / self.eps, 0.0)

    def antiderivative_radial(self, r, g):
        """pi(r) = int_0^r tau k_eps(tau - g) dtau, the convex radial energy."""
        r = np.asarray(r, dtype=float)
        g = np.asarray(g, dtype=float)
        eps, tc, ks = self.eps, self.t_cap, self.k_sat
        T = np.clip(r - g, 0.0, tc)
        eT = np.exp(np.minimum(T / eps, EXP_CAP))
        core = eps * (T + g) * eT - eps**2 * eT - eps * g + eps**2 - T**2 / 2 - g * T
        out = np.where(r > g, core, 0.0)
        over = r - g > tc
        if np.any(over):
            out = out + np.where(over, ks * (r**2 - (g + tc) ** 2) / 2, 0.0)
        return out


def penalty_value(eps: float, t):
    """k_eps(t) and its derivative (vectorized)."""
    fn = PenaltyFn(eps)
    return fn.value(t), fn.derivative(t)


@dataclass(frozen=True)
class Solution:
    """Potential u, multiplier field lam, flux psi, and solve diagnostics."""

    u: ScalarField
    lam: ScalarField
    psi: VectorField
    eps: float
    q: float
    s: float
    converged: bool
    iterations: int
    residual_norm: float
    energy_history: tuple[float, ...] = ()
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class KKTReport:
    violation_sup: float
    complementarity: float
    equation_residual: float  # residual of the limit system (no eps term)
    penalized_residual_sup: float  # residual of the solved penalized equation
    v_measure: float
    k_l1: float
    psi_l1: float
    dsu_lr: float
    r_exponent: float


_GRAD_CACHE: dict = {}


def _gradient_matrix(grid: GridSpec, s: float) -> np.ndarray:
    """Dense D^s of the Omega-node basis: shape (d, n^d, m), via kernel shifts."""
    key = (grid, round(float(s), 12))
    hit = _GRAD_CACHE.get(key)
    if hit is not None:
        return hit
    mask = grid.masks().inside
    n, d = grid.points_per_axis, grid.dim
    m = riesz_symbol(grid, s)
    idx = np.flatnonzero(mask.ravel())
    N = n**d
    if d * N * idx.size > 6e7:
        raise ValueError("dense gradient matrix would be too large for this grid")
    cols = np.zeros((d, N, idx.size))
    if d == 1:
        for j in range(1):
            kern = np.fft.ifft(m[0]).real
            rows = (np.arange(n)[:, None] - idx[None, :]) % n
            cols[0] = kern[rows]
    else:
        kern = np.stack([np.fft.ifftn(m[j]).real for j in range(d)])
        ix, jx = np.divmod(np.arange(N), n)
        ii, ji = np.divmod(idx, n)
        r0 = (ix[:, None] - ii[None, :]) % n
        r1 = (jx[:, None] - ji[None, :]) % n
        for j in range(d):
            cols[j] = kern[j][r0, r1]
    cols.flags.writeable = False
    _GRAD_CACHE[key] = cols
    return cols


def _assemble_rhs(src: SourceData, G: np.ndarray, mask: np.ndarray, hd: float) -> np.ndarray:
    f_vec_flat = src.f_vec.reshape(G.shape[0], -1)
    rhs = src.f_sharp[mask] + np.einsum("aNi,aN->i", G, f_vec_flat)
    return hd * rhs


class _PenaltyProblem:
    """Residual/energy/Jacobian of the penalized weak form over Omega nodes."""

    def __init__(self, op: OperatorData, src: SourceData, thr: Threshold, s: float, eps: float, q: float):
        grid = op.grid
        self.grid = grid
        self.mask = grid.masks().inside
        self.hd = grid.cell_volume
        self.G = _gradient_matrix(grid, s)  # (d, N, m)
        self.d, self.N, self.m = self.G.shape
        self.op = op
        self.thr = thr
        self.s = s
        self.eps = eps
        self.q = q
        self.fn = PenaltyFn(eps)
        self.g_flat = thr.g.ravel()
        self.rhs = _assemble_rhs(src, self.G, self.mask, self.hd)
        self.A_flat = op.A.reshape(self.d, self.d, -1)
        self.b_at = op.b[:, self.mask]  # (d, m)
        self.dvec_flat = op.dvec.reshape(self.d, -1)
        self.c_at = op.c[self.mask]
        mask_flat = self.mask.ravel()
        self.unk_box_index = np.flatnonzero(mask_flat)
        self.symmetric = bool(
            np.allclose(op.b, op.dvec) and np.allclose(op.A, np.swapaxes(op.A, 0, 1))
        )

    def grad(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("aNi,i->aN", self.G, u)

    def flux_coeff(self, mag: np.ndarray):
        k = self.fn.value(mag - self.g_flat)
        apen = k + self.eps * np.maximum(mag, 1e-150) ** (self.q - 2)
        return k, apen

    def residual(self, u: np.ndarray) -> np.ndarray:
        p = self.grad(u)
        mag = np.sqrt(np.sum(p**2, axis=0))
        _, apen = self.flux_coeff(mag)
        flux = np.einsum("ab N,bN->aN", self.A_flat, p) + apen[None] * p
        flux = flux + self.dvec_flat * _scatter(u, self.unk_box_index, self.N)[None]
        out = np.einsum("aNi,aN->i", self.G, flux)
        out = out + np.sum(self.b_at * p[:, self.unk_box_index], axis=0) + self.c_at * u
        return self.hd * out - self.rhs

    def energy(self, u: np.ndarray) -> float:
        p = self.grad(u)
        mag = np.sqrt(np.sum(p**2, axis=0))
        quad = 0.5 * np.sum(np.einsum("abN,bN->aN", self.A_flat, p) * p)
        conv = np.sum(self.dvec_flat[:, self.unk_box_index] * p[:, self.unk_box_index] * u[None])
        low = 0.5 * np.sum(self.c_at * u**2)
        pen = np.sum(self.fn.antiderivative_radial(mag, self.g_flat))
        reg = (self.eps / self.q) * np.sum(np.maximum(mag, 0.0) ** self.q)
        return float(self.hd * (quad + conv + low + pen + reg) - self.rhs @ u)

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        p = self.grad(u)
        mag = np.sqrt(np.sum(p**2, axis=0))
        magf = np.maximum(mag, 1e-150)
        k = self.fn.value(mag - self.g_flat)
        kp = self.fn.derivative(mag - self.g_flat)
        apen = k + self.eps * magf ** (self.q - 2)
        aniso = kp / magf + self.eps * (self.q - 2) * magf ** (self.q - 4)
        J = np.zeros((self.m, self.m))
        for a in range(self.d):
            for b in range(self.d):
                coeff = self.A_flat[a, b] + aniso * p[a] * p[b]
                if a == b:
                    coeff = coeff + apen
                J += self.G[a].T @ (coeff[:, None] * self.G[b])
        # d/du of the convection term G^T (dvec u)
        for a in range(self.d):
            J += self.G[a][self.unk_box_index].T * self.dvec_flat[a, self.unk_box_index][None, :]
        for a in range(self.d):
            J += self.b_at[a][:, None] * self.G[a][self.unk_box_index]
        J[np.diag_indices_from(J)] += self.c_at
        return self.hd * J


def _scatter(u: np.ndarray, idx: np.ndarray, N: int) -> np.ndarray:
    out = np.zeros(N)
    out[idx] = u
    return out


def penalized_residual(
    u: ScalarField,
    op: OperatorData,
    src: SourceData,
    thr: Threshold,
    s,
    cfg: SolverConfig,
) -> ScalarField:
    """Weak residual of the penalized equation against the nodal basis.

    The returned field holds, at each Omega node, the partial derivative of
    the discrete energy with respect to that nodal value (zero elsewhere);
    it vanishes at the solution.
    """
    sv = _as_s(s)
    q = cfg.q if cfg.q is not None else default_q(op.grid.dim, sv)
    prob = _PenaltyProblem(op, src, thr, sv, cfg.eps, q)
    mask = op.grid.masks().inside
    r = prob.residual(u.values[mask])
    if not np.isfinite(r).all():
        raise FloatingPointError("non-finite penalized flux")
    out = np.zeros(op.grid.shape)
    out[mask] = r
    return ScalarField(op.grid, out)


def discrete_energy(
    u: ScalarField,
    op: OperatorData,
    src: SourceData,
    thr: Threshold,
    s,
    cfg: SolverConfig,
) -> float:
    """Discrete energy whose gradient is the penalized weak residual
    (meaningful as a merit function in the symmetric case)."""
    sv = _as_s(s)
    q = cfg.q if cfg.q is not None else default_q(op.grid.dim, sv)
    prob = _PenaltyProblem(op, src, thr, sv, cfg.eps, q)
    return prob.energy(u.values[op.grid.masks().inside])


def _run_newton(prob: _PenaltyProblem, u0: np.ndarray, cfg: SolverConfig):
    u = u0.copy()
    scale = 1.0 + float(np.linalg.norm(prob.rhs))
    hist = []
    damping = cfg.damping
    r = prob.residual(u)
    rnorm = float(np.linalg.norm(r))
    energy = prob.energy(u) if prob.symmetric else None
    it = 0
    best, since_best = rnorm, 0
    while rnorm > cfg.newton_tol * scale and it < cfg.max_iters:
        # stagnation at the floating-point floor of the stiff penalty
        if since_best >= 15:
            break
        it += 1
        J = prob.jacobian(u)
        J[np.diag_indices_from(J)] += damping * (1.0 + np.abs(J.diagonal()))
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            damping = max(damping * 100, 1e-8)
            continue
        t = 1.0
        accepted = False
        slope = float(r @ step)
        while t >= cfg.min_step:
            cand = u + t * step
            r_new = prob.residual(cand)
            rn = float(np.linalg.norm(r_new))
            if not np.isfinite(rn):
                t *= 0.5
                continue
            if prob.symmetric:
                # Armijo on the convex energy keeps the iteration monotone;
                # once energy differences fall below float granularity the
                # residual-decrease fallback takes over
                e_new = prob.energy(cand)
                tiny = 1e-12 * (1 + abs(energy))
                ok = e_new <= energy + 1e-4 * t * slope + 0.1 * tiny
                ok = ok or (rn <= (1 - 1e-4 * t) * rnorm and e_new <= energy + tiny)
            else:
                ok = rn <= (1 - 1e-4 * t) * rnorm or rn <= 0.5 * cfg.newton_tol * scale
            if ok:
                u, r, rnorm = cand, r_new, rn
                accepted = True
                break
            t *= 0.5
        if not accepted:
            damping = max(damping * 100, 1e-8)
            if damping > 1e6:
                break
            continue
        damping = max(cfg.damping, damping / 10)
        if prob.symmetric:
            energy = prob.energy(u)
            hist.append(energy)
        if rnorm < 0.99 * best:
            best, since_best = rnorm, 0
        else:
            since_best += 1
    return u, rnorm <= cfg.newton_tol * scale, it, rnorm, tuple(hist)


def solve_fixed_eps(
    op: OperatorData,
    src: SourceData,
    thr: Threshold,
    s,
    cfg: SolverConfig,
    warm_start: Solution | None = None,
) -> Solution:
    """Solve the penalized problem at the configured eps.

    Damped Newton with an energy line search when the form is symmetric
    (Armijo on the convex discrete energy), residual-reduction line search
    otherwise.  A cold start at small eps first walks a short internal
    geometric eps chain down from 0.1, since the exponential wall defeats
    plain Newton from zero.  Returns the best iterate with converged=False
    if the iteration budget runs out.
    """
    sv = _as_s(s)
    grid = op.grid
    q = cfg.q if cfg.q is not None else default_q(grid.dim, sv)
    if warm_start is None and cfg.eps < 0.1:
        e = 0.1
        while e > cfg.eps * 1.0001:
            warm_start = solve_fixed_eps(op, src, thr, s, replace(cfg, eps=e, eps_schedule=()), warm_start)
            e = max(cfg.eps, 0.25 * e)
    prob = _PenaltyProblem(op, src, thr, sv, cfg.eps, q)
    mask = grid.masks().inside
    if warm_start is not None:
        u0 = warm_start.u.values[mask]
    else:
        u0 = np.zeros(int(mask.sum()))
    u, ok, iters, rnorm, hist = _run_newton(prob, u0, cfg)

    u_field = ScalarField(grid, _scatter(u, prob.unk_box_index, prob.N).reshape(grid.shape))
    du = frac_gradient_spectral(u_field, sv)
    lam = PenaltyFn(cfg.eps).value(du.magnitude() - thr.g)
    psi = lam[None] * du.values
    return Solution(
        u=u_field,
        lam=ScalarField(grid, lam),
        psi=VectorField(grid, psi),
        eps=cfg.eps,
        q=q,
        s=sv,
        converged=bool(ok),
        iterations=iters,
        residual_norm=rnorm,
        energy_history=hist,
    )


def continuation_solve(
    op: OperatorData,
    src: SourceData,
    thr: Threshold,
    s,
    cfg: SolverConfig,
) -> list[tuple[float, Solution, KKTReport]]:
    """Warm-started continuation along the decreasing eps schedule."""
    schedule = cfg.eps_schedule if cfg.eps_schedule else (cfg.eps,)
    out = []
    warm = None
    for eps in schedule:
        stage_cfg = replace(cfg, eps=eps, eps_schedule=())
        sol = solve_fixed_eps(op, src, thr, s, stage_cfg, warm_start=warm)
        if not sol.converged:
            raise RuntimeError(f"continuation stage eps={eps} failed to converge")
        out.append((eps, sol, kkt_report(sol, op, src, thr, s)))
        warm = sol
    return out


def kkt_battery(grid: GridSpec, count: int = 32, seed: int = 2024) -> list[ScalarField]:
    """Fixed battery of test fields: random bumps plus low-frequency modes."""
    from .grid import bump

    fields = random_bumps(grid, count, seed=seed)
    window = bump(grid)
    pts = grid.coords()
    L = grid.box_side
    for j in range(grid.dim):
        for k0 in (1, 2):
            fields.append(ScalarField(grid, window.values * np.cos(2 * np.pi * k0 * pts[j] / L)))
            fields.append(ScalarField(grid, window.values * pts[j] ** k0))
    return fields


def kkt_report(
    sol: Solution,
    op: OperatorData,
    src: SourceData,
    thr: Threshold,
    s,
    battery: list[ScalarField] | None = None,
) -> KKTReport:
    """Constraint violation, complementarity and residual diagnostics."""
    from .forms import bilinear_apply, linear_apply

    sv = _as_s(s)
    grid = op.grid
    hd = grid.cell_volume
    du = frac_gradient_spectral(sol.u, sv)
    mag = du.magnitude()
    slack = mag - thr.g
    violation = float(np.max(np.maximum(slack, 0.0)))
    comp = hd * float(np.sum(sol.lam.values * slack))
    v_measure = hd * float(np.count_nonzero(slack > np.sqrt(sol.eps)))
    k_l1 = hd * float(np.sum(np.abs(sol.lam.values)))
    psi_l1 = hd * float(np.sum(np.sqrt(np.sum(sol.psi.values**2, axis=0))))

    if battery is None:
        battery = kkt_battery(grid)
    eq_res = 0.0
    pen_res = 0.0
    # oracle solutions carry eps = 0 (no regularization term)
    if sol.eps > 0:
        eps_coeff = sol.eps * np.maximum(mag, 1e-150) ** (sol.q - 2)
    else:
        eps_coeff = np.zeros_like(mag)
    for v in battery:
        dv = frac_gradient_spectral(v, sv)
        norm_v = np.sqrt(hd * np.sum(dv.values**2))
        if norm_v == 0:
            continue
        base = (
            bilinear_apply(op, sol.u, v, sv)
            + hd * float(np.sum(sol.lam.values * np.sum(du.values * dv.values, axis=0)))
            - linear_apply(src, v, sv)
        )
        eq_res = max(eq_res, abs(base) / norm_v)
        full = base + hd * float(np.sum(eps_coeff * np.sum(du.values * dv.values, axis=0)))
        pen_res = max(pen_res, abs(full) / norm_v)

    r = max(sol.q - 1.0, 1.0)
    from .grid import lp_norm

    return KKTReport(
        violation_sup=violation,
        complementarity=comp,
        equation_residual=eq_res,
        penalized_residual_sup=pen_res,
        v_measure=v_measure,
        k_l1=k_l1,
        psi_l1=psi_l1,
        dsu_lr=lp_norm(du, r),
        r_exponent=r,
    )
