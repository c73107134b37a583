"""Inequality and identity checkers for discrete trajectories.

Every checker is a pure function of a trajectory (or densities) and returns
a CheckReport with per-step left/right-hand sides, the worst measured
violation and a pass flag.  Inequalities that hold only at exact minimizers
are checked with a multiplicative slack plus an absolute floor; the raw
violations are part of the report so a tightened inner solver can be shown
to shrink them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .jko import JkoConfig, Trajectory, interpolant, run
from .measure import (
    GridDensity,
    VectorField,
    entropy,
    heat_semigroup,
    pushforward,
    second_moment,
    spike_density,
)
from .spectral import (
    fractional_laplacian,
    sobolev_norm_sq,
    spectral_divergence,
    spectral_gradient,
)
from .transport import w2_exact_1d


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one checker: series of (k, lhs, rhs), violation, verdict."""

    name: str
    tolerance: float
    ks: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    max_violation: float
    passed: bool
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_series(cls, name, ks, lhs, rhs, tolerance, extra=None):
        ks = np.asarray(ks)
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        violation = float(np.max(lhs - rhs)) if len(lhs) else 0.0
        return cls(
            name=name,
            tolerance=float(tolerance),
            ks=ks,
            lhs=lhs,
            rhs=rhs,
            max_violation=violation,
            passed=bool(violation <= tolerance),
            extra=dict(extra or {}),
        )

    @property
    def positive_violation(self) -> float:
        """Measured violation clipped at zero (for tightening protocols)."""
        return max(0.0, self.max_violation)

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "tolerance": self.tolerance,
            "max_violation": self.max_violation,
            "passed": self.passed,
            "series": [
                {"k": int(k), "lhs": float(l), "rhs": float(r)}
                for k, l, r in zip(self.ks, self.lhs, self.rhs)
            ],
        }
        if self.extra:
            doc["extra"] = self.extra
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# the nonlinear form N


def operator_N(v: np.ndarray, grid, eta: np.ndarray, s: float) -> float:
    """Weak-form pairing N(v, eta) with the case split at m = floor(s/2).

    For s in [2m, 2m+1] (closed right endpoint) the integrand is
    (L_{s-m} v) * L_m(div(eta v)); for s in (2m+1, 2m+2) it is
    grad(L_{s-m-1} v) . grad(L_m(div(eta v))).  Products eta*v are formed
    pointwise; all derivatives are spectral.
    """
    if s <= 0 or not np.isfinite(s):
        raise ValueError(f"operator order must satisfy s > 0, got {s}")
    v = np.asarray(v, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (grid.dim,) + grid.shape:
        raise ValueError(
            f"vector field values must have shape {(grid.dim,) + grid.shape}, got {eta.shape}"
        )
    m = int(math.floor(s / 2.0))
    div_ev = spectral_divergence(eta * v[None], grid)
    hvol = grid.cell_volume
    if 2 * m <= s <= 2 * m + 1:
        a = fractional_laplacian(v, grid, s - m)
        b = fractional_laplacian(div_ev, grid, m) if m > 0 else div_ev
        return float(hvol * np.sum(a * b))
    a = spectral_gradient(fractional_laplacian(v, grid, s - m - 1), grid)
    b = spectral_gradient(fractional_laplacian(div_ev, grid, m) if m > 0 else div_ev, grid)
    return float(hvol * np.sum(a * b))


def operator_N_density(v: GridDensity, eta: VectorField, s: float) -> float:
    """`operator_N` with the field sampled at the grid nodes."""
    pts = np.stack([c.ravel() for c in v.grid.coords], axis=1)
    vals = eta(pts).T.reshape((v.grid.dim,) + v.grid.shape)
    return operator_N(v.values, v.grid, vals, s)


def derivative_identity_check(
    v: GridDensity, eta: VectorField, s: float, t_fd: float = 1e-3
) -> CheckReport:
    """Centered finite difference of F_s along the flow against -N(v, eta).

    Richardson consistency: a third evaluation at t_fd/2 estimates the
    quadratic truncation constant; pass when the relative error stays
    within max(1e-3, C_est * t_fd^2).
    """
    from .spectral import energy as _energy

    fp = _energy(pushforward(v, eta, t_fd), s)
    fm = _energy(pushforward(v, eta, -t_fd), s)
    fd_full = (fp - fm) / (2.0 * t_fd)
    fp2 = _energy(pushforward(v, eta, t_fd / 2), s)
    fm2 = _energy(pushforward(v, eta, -t_fd / 2), s)
    fd_half = (fp2 - fm2) / t_fd
    nval = operator_N_density(v, eta, s)
    target = -nval
    scale = max(abs(target), 1e-300)
    rel = abs(fd_full - target) / scale
    c_est = abs(fd_full - fd_half) / (0.75 * t_fd ** 2)
    tol = max(1e-3, c_est * t_fd ** 2 / scale)
    return CheckReport.from_series(
        "derivative_identity",
        [0],
        [rel],
        [tol],
        tolerance=0.0,
        extra={
            "s": s,
            "finite_difference": fd_full,
            "minus_N": target,
            "relative_error": rel,
            "richardson_constant": c_est,
        },
    )


# ---------------------------------------------------------------------------
# trajectory checkers


def _traj_energies(traj: Trajectory):
    from .spectral import energy_of_values

    cfg = traj.config
    e0 = energy_of_values(traj.initial.values, cfg.grid, cfg.s)
    return e0, np.array([rec.energy for rec in traj.steps])


def check_energy_estimate(traj: Trajectory, rel_tol: float = 1e-8) -> CheckReport:
    """Telescoped one-step minimality: for every prefix N,

        F_s(u^N) + (1/2) sum_{k<=N} W^2_k / tau  <=  F_s(u0) (1 + rel_tol).
    """
    cfg = traj.config
    e0, energies = _traj_energies(traj)
    w2s = np.array([rec.w2_sq_to_prev for rec in traj.steps])
    dissipation = np.cumsum(w2s) / (2.0 * cfg.tau)
    lhs = np.concatenate([[e0], energies + dissipation])
    rhs = np.full(len(lhs), e0)
    return CheckReport.from_series(
        "energy_estimate",
        np.arange(len(lhs)),
        lhs,
        rhs,
        tolerance=rel_tol * max(e0, 1e-300),
        extra={"initial_energy": e0},
    )


def check_moment_bound(traj: Trajectory, horizon: Optional[float] = None, abs_tol: float = 1e-6) -> CheckReport:
    """Second-moment bound M(u^N) <= 2 T F_s(u0) + 2 M(u0) for N tau <= T.

    In one dimension the series also carries the triangle/Jensen chain rows
    W^2(u^N, spike) <= 2 N tau sum_k W^2_k / tau + 2 W^2(u0, spike), an
    exact inequality of the discrete metric (rows indexed past the steps).
    """
    cfg = traj.config
    e0, _ = _traj_energies(traj)
    m0 = second_moment(traj.initial)
    if horizon is None:
        horizon = traj.num_steps * cfg.tau
    bound = 2.0 * horizon * e0 + 2.0 * m0
    ks, lhs, rhs = [0], [m0], [bound]
    included = []
    for rec in traj.steps:
        if rec.index * cfg.tau > horizon * (1 + 1e-12):
            break
        included.append(rec)
        ks.append(rec.index)
        lhs.append(rec.second_moment)
        rhs.append(bound)
    extra = {"initial_moment": m0, "initial_energy": e0, "horizon": horizon}
    if cfg.grid.dim == 1:
        spike = spike_density(cfg.grid)
        w0 = w2_exact_1d(traj.initial, spike, want_potential=False).w2_squared
        acc = 0.0
        offset = traj.num_steps
        for rec in included:
            acc += rec.w2_sq_to_prev / cfg.tau
            wn = w2_exact_1d(rec.density, spike, want_potential=False).w2_squared
            ks.append(offset + rec.index)
            lhs.append(wn)
            rhs.append(2.0 * rec.index * cfg.tau * acc + 2.0 * w0)
        extra["chain_reference_w2"] = float(w0)
    return CheckReport.from_series("moment_bound", ks, lhs, rhs, tolerance=abs_tol, extra=extra)


def check_entropy_dissipation(
    traj: Trajectory, mult_slack: float = 0.05, abs_slack: float = 1e-3
) -> CheckReport:
    """Regularity gain from the heat-flow interchange:

        ||u^k||^2_{H^{1+s},hom} <= (H(u^{k-1}) - H(u^k))/tau

    with multiplicative slack for inexact minimizers, plus the
    time-integrated bound with the reconstructed dimensional constant.
    """
    cfg = traj.config
    lhs, rhs, ks = [], [], []
    ent_prev = entropy(traj.initial)
    for rec in traj.steps:
        ks.append(rec.index)
        lhs.append(sobolev_norm_sq(rec.density.values, cfg.grid, 1.0 + cfg.s, homogeneous=True))
        rhs.append((ent_prev - rec.entropy) / cfg.tau)
        ent_prev = rec.entropy
    lhs = np.array(lhs)
    rhs = np.array(rhs)
    # integrated form: sum tau ||u^k||^2 <= H(u0) + C (1 + T F(u0) + M(u0)),
    # C reconstructed from the entropy lower bound constants
    e0, _ = _traj_energies(traj)
    h0 = entropy(traj.initial)
    m0 = second_moment(traj.initial)
    horizon = traj.num_steps * cfg.tau
    c_dim = max(1.0 / np.e + 0.5 * cfg.grid.dim * np.log(4.0 * np.pi), 0.5)
    integrated_lhs = float(cfg.tau * np.sum(lhs))
    integrated_rhs = float(h0 + c_dim * (1.0 + horizon * e0 + m0))
    return CheckReport.from_series(
        "entropy_dissipation",
        ks,
        lhs,
        rhs * (1.0 + mult_slack),
        tolerance=abs_slack,
        extra={
            "raw_violation": float(np.max(lhs - rhs)) if len(lhs) else 0.0,
            "integrated_lhs": integrated_lhs,
            "integrated_rhs": integrated_rhs,
            "integrated_ok": bool(integrated_lhs <= integrated_rhs + abs_slack),
            "reconstructed_constant": float(c_dim),
        },
    )


def check_evi_entropy(
    u: GridDensity,
    v: GridDensity,
    t_list: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    mono_tol: float = 1e-12,
) -> CheckReport:
    """Evolution variational inequality of the entropy (a 0-flow):

        (W^2(S_t u, v) - W^2(u, v)) / (2t)  <=  H(v) - H(u) + eps(t)

    with the measured slack eps(t) required nonincreasing along the given
    decreasing t list.
    """
    ts = list(t_list)
    if any(t <= 0 for t in ts) or any(a <= b for a, b in zip(ts, ts[1:])):
        raise ValueError("t_list must be positive and strictly decreasing")
    w2_uv = w2_exact_1d(u, v, want_potential=False).w2_squared
    rhs_val = entropy(v) - entropy(u)
    lhs = []
    for t in ts:
        w2_t = w2_exact_1d(heat_semigroup(u, t), v, want_potential=False).w2_squared
        lhs.append((w2_t - w2_uv) / (2.0 * t))
    slack = np.maximum(0.0, np.array(lhs) - rhs_val)
    # rows: slack(t_{i+1}) vs slack(t_i) -- nonincreasing along decreasing t
    return CheckReport.from_series(
        "evi_entropy",
        np.arange(1, len(ts)),
        slack[1:],
        slack[:-1],
        tolerance=mono_tol,
        extra={
            "t_list": ts,
            "quotients": [float(x) for x in lhs],
            "entropy_difference": float(rhs_val),
            "slack": [float(x) for x in slack],
        },
    )


def check_weak_form_step(
    traj: Trajectory,
    phi,
    mult_slack: float = 0.05,
    abs_slack: float = 1e-6,
    lam: Optional[float] = None,
) -> CheckReport:
    """Two-sided discrete weak form from the potential-flow interchange:

        |<phi(t_n), u^n - u^{n-1}> - tau N(u^n, grad phi(t_n))|
            <= (lam/2) W^2(u^n, u^{n-1}) (1 + slack) + abs_slack,

    phi sampled at the right endpoint t_n = n tau.  The report appends two
    synthetic rows: the time-integrated residual against (lam/2) sum W^2,
    and the vanishing bound (1/2) sum W^2 <= tau F_s(u0).
    """
    cfg = traj.config
    grid = cfg.grid
    lam_val = float(lam if lam is not None else phi.hessian_sup)
    pts = np.stack([c.ravel() for c in grid.coords], axis=1)
    hvol = grid.cell_volume
    ks, lhs, rhs = [], [], []
    resid_sum = 0.0
    w2_sum = 0.0
    u_prev = traj.initial
    for rec in traj.steps:
        tn = rec.index * cfg.tau
        phi_vals = phi.value(tn, pts).reshape(grid.shape)
        eta_vals = phi.grad(tn, pts).T.reshape((grid.dim,) + grid.shape)
        pairing = hvol * float(np.sum(phi_vals * (rec.density.values - u_prev.values)))
        nval = operator_N(rec.density.values, grid, eta_vals, cfg.s)
        resid = pairing - cfg.tau * nval
        ks.append(rec.index)
        lhs.append(abs(resid))
        rhs.append(0.5 * lam_val * rec.w2_sq_to_prev * (1.0 + mult_slack))
        resid_sum += resid
        w2_sum += rec.w2_sq_to_prev
        u_prev = rec.density
    e0, _ = _traj_energies(traj)
    # integrated residual (discrete weak formulation): per-step absolute
    # slack accumulates coherently over the horizon, hence the (N-1) factor
    nsteps = len(traj.steps)
    ks.append(nsteps + 1)
    lhs.append(abs(resid_sum))
    rhs.append(0.5 * lam_val * w2_sum * (1.0 + mult_slack) + max(nsteps - 1, 0) * abs_slack)
    # vanishing bound: (1/2) sum W^2 <= tau F_s(u0)
    ks.append(nsteps + 2)
    lhs.append(0.5 * w2_sum)
    rhs.append(cfg.tau * e0 * (1.0 + mult_slack))
    raw = [l - r / (1.0 + mult_slack) for l, r in zip(lhs, rhs)]
    return CheckReport.from_series(
        "weak_form",
        ks,
        lhs,
        rhs,
        tolerance=abs_slack,
        extra={
            "lambda": lam_val,
            "raw_violation": float(np.max(raw)),
            "integrated_residual": float(abs(resid_sum)),
            "w2_sum": float(w2_sum),
        },
    )


# ---------------------------------------------------------------------------
# tau refinement


@dataclass(frozen=True)
class TauRefinementReport:
    taus: List[float]
    l2h_gaps: List[float]  # consecutive-pair integral H^{1+r} gaps
    sup_gaps: List[float]  # consecutive-pair sup-in-time H^r gaps
    rates: List[float]
    cauchy_monotone: bool
    horizon: float
    r: float

    def to_dict(self) -> dict:
        return {
            "taus": self.taus,
            "l2h_gaps": self.l2h_gaps,
            "sup_gaps": self.sup_gaps,
            "rates": self.rates,
            "cauchy_monotone": self.cauchy_monotone,
            "horizon": self.horizon,
            "r": self.r,
        }


def _merged_breakpoints(tau1: float, tau2: float, horizon: float):
    ks1 = np.arange(0, math.ceil(horizon / tau1) + 1) * tau1
    ks2 = np.arange(0, math.ceil(horizon / tau2) + 1) * tau2
    bks = np.union1d(np.union1d(ks1, ks2), [horizon])
    return bks[bks <= horizon * (1 + 1e-12)]


def pairwise_gap(
    t1: Trajectory, t2: Trajectory, horizon: float, r: float
):
    """Integral of the squared H^{1+r} gap and the sup H^r gap in time."""
    grid = t1.config.grid
    bks = _merged_breakpoints(t1.config.tau, t2.config.tau, horizon)
    total = 0.0
    sup_gap = 0.0
    for a, b in zip(bks[:-1], bks[1:]):
        if b - a <= 1e-15:
            continue
        mid = 0.5 * (a + b)
        d = interpolant(t1, mid).values - interpolant(t2, mid).values
        total += (b - a) * sobolev_norm_sq(d, grid, 1.0 + r, homogeneous=False)
        sup_gap = max(sup_gap, math.sqrt(sobolev_norm_sq(d, grid, r, homogeneous=False)))
    return total, sup_gap


def tau_refinement_study(
    u0: GridDensity,
    cfg_base: JkoConfig,
    tau_list: Sequence[float] = (4e-3, 2e-3, 1e-3, 5e-4),
    horizon: float = 0.05,
    r: float = 0.5,
) -> TauRefinementReport:
    """Cauchy study over a decreasing tau list.

    Runs one trajectory per tau, measures consecutive-pair distances in
    L^2((0,T); H^{1+r}) and sup_t H^r, and reports whether the gaps decrease
    monotonically.  No limit object is claimed.
    """
    taus = list(tau_list)
    if any(t <= 0 for t in taus) or any(a <= b for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be positive and strictly decreasing")
    if r >= cfg_base.s:
        raise ValueError(f"refinement order r must satisfy r < s, got r={r}, s={cfg_base.s}")
    from dataclasses import replace as _replace

    trajs = []
    for tau in taus:
        cfg = _replace(cfg_base, tau=tau)
        nsteps = math.ceil(horizon / tau)
        traj = run(u0, cfg, nsteps)
        if traj.status != "ok":
            raise RuntimeError(f"refinement run at tau={tau} failed: {traj.status}")
        trajs.append(traj)
    gaps, sups = [], []
    for t1, t2 in zip(trajs[:-1], trajs[1:]):
        g, sgap = pairwise_gap(t1, t2, horizon, r)
        gaps.append(float(g))
        sups.append(float(sgap))
    rates = [
        math.log(gaps[i] / gaps[i + 1], 2.0) if gaps[i + 1] > 0 else math.inf
        for i in range(len(gaps) - 1)
    ]
    monotone = all(gaps[i] > gaps[i + 1] for i in range(len(gaps) - 1))
    return TauRefinementReport(
        taus=taus,
        l2h_gaps=gaps,
        sup_gaps=sups,
        rates=rates,
        cauchy_monotone=bool(monotone) if len(gaps) > 1 else True,
        horizon=horizon,
        r=r,
    )
