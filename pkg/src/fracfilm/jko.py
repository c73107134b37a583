"""Minimizing-movement scheme: proximal steps, trajectories, interpolant.

Each step minimizes  E(u) = F_s(u) + W^2(u, u_prev)/(2 tau)  over the grid
simplex by mirror descent: multiplicative updates u <- u exp(-alpha G) with
G = L_s u + phi/tau, phi the exact first-variation potential of the
transport term, recomputed every inner iteration.  Updates keep mass one
and positivity exactly, which is the whole point of the parameterization.

The inner loop runs in two phases.  The first is Nesterov-extrapolated
mirror descent with Armijo backtracking on the objective; once objective
decrements fall below double-precision resolution (long before the
stationarity residual is exhausted) it hands over to a polish phase that
accepts steps on strict residual decrease instead.  The residual ignores
cells whose mass share is below `degenerate_share`: those cells relax only
logarithmically under multiplicative updates while their influence on any
functional of the iterate is bounded by their total mass, orders below
every tolerance in the verification suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .errors import StagnationError
from .measure import GridDensity, boundary_shell_mass, entropy, second_moment
from .spectral import PeriodicGrid, energy_of_values, fractional_laplacian
from .transport import TransportConfig, w2

_OBJ_NOISE = 32 * np.finfo(float).eps


@dataclass(frozen=True)
class InnerConfig:
    """Inner (proximal) solver settings."""

    max_iters: int = 20000
    grad_tol: float = 1e-8
    obj_tol: float = 1e-12
    alpha0: Optional[float] = None  # None: start from tau
    shrink: float = 0.5
    armijo: float = 1e-4
    alpha_min: float = 1e-12
    potential_refresh: int = 1  # >1: stale-potential speed mode
    momentum: bool = True
    degenerate_share: float = 1e-8

    def __post_init__(self):
        if self.max_iters < 1 or self.grad_tol <= 0 or self.obj_tol < 0:
            raise ValueError("inner solver tolerances must be positive")
        if not (0 < self.shrink < 1):
            raise ValueError(f"shrink factor must lie in (0,1), got {self.shrink}")
        if self.potential_refresh < 1:
            raise ValueError("potential refresh period must be >= 1")


@dataclass(frozen=True)
class JkoConfig:
    """One minimizing-movement run: equation order s, step tau, grid, solvers."""

    grid: PeriodicGrid
    s: float
    tau: float
    inner: InnerConfig = field(default_factory=InnerConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)

    def __post_init__(self):
        if self.s <= 0 or not np.isfinite(self.s):
            raise ValueError(f"equation order must satisfy s > 0, got {self.s}")
        if self.tau <= 0 or not np.isfinite(self.tau):
            raise ValueError(f"time step must satisfy tau > 0, got {self.tau}")


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics of one proximal step."""

    index: int
    density: GridDensity
    w2_sq_to_prev: float
    energy: float
    entropy: float
    second_moment: float
    inner_iterations: int
    kkt_residual: float
    objective_value: float
    boundary_mass: float


@dataclass(frozen=True)
class Trajectory:
    config: JkoConfig
    initial: GridDensity
    steps: List[StepRecord]
    status: str = "ok"

    def __post_init__(self):
        for k, rec in enumerate(self.steps, start=1):
            if rec.index != k:
                raise ValueError(f"step indices must be contiguous from 1, found {rec.index} at {k}")

    def density_at_step(self, k: int) -> GridDensity:
        return self.initial if k == 0 else self.steps[k - 1].density

    @property
    def num_steps(self) -> int:
        return len(self.steps)


def interpolant(traj: Trajectory, t: float) -> GridDensity:
    """Piecewise-constant interpolant: value u^k on ((k-1) tau, k tau].

    t = 0 returns the initial datum; t = k tau lands on u^k (right-closed
    intervals).  A one-ulp guard keeps exact multiples of tau from drifting
    into the next interval under floating division.
    """
    if t < 0:
        raise ValueError(f"interpolant time must be nonnegative, got {t}")
    tau = traj.config.tau
    horizon = traj.num_steps * tau
    if t > horizon * (1 + 1e-12):
        raise ValueError(f"time {t} beyond trajectory horizon {horizon}")
    if t == 0:
        return traj.initial
    ratio = t / tau
    k = int(math.ceil(ratio * (1.0 - 4 * np.finfo(float).eps)))
    return traj.density_at_step(min(max(k, 1), traj.num_steps))


def _mirror_candidate(base: np.ndarray, exponent: np.ndarray, cell_volume: float) -> np.ndarray:
    e = exponent - np.max(exponent)
    w = base * np.exp(e)
    return w / (np.sum(w) * cell_volume)


def _extrapolate(u: np.ndarray, u_old: np.ndarray, beta: float, cell_volume: float) -> np.ndarray:
    # geometric extrapolation: the mirror-space analogue of y = u + beta (u - u_old)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(u_old > 0, u / np.where(u_old > 0, u_old, 1.0), 1.0)
    w = u * ratio ** beta
    return w / (np.sum(w) * cell_volume)


class _ProxState:
    """Bookkeeping for one proximal solve."""

    __slots__ = ("u", "u_old", "obj", "alpha", "tmom", "accepted", "phase2",
                 "noise_streak", "polish_failures")

    def __init__(self, u0, obj0, alpha0):
        self.u = u0
        self.u_old = u0
        self.obj = obj0
        self.alpha = alpha0
        self.tmom = 1.0
        self.accepted = 0
        self.phase2 = False
        self.noise_streak = 0
        self.polish_failures = 0


def jko_step(u_prev: GridDensity, cfg: JkoConfig) -> StepRecord:
    """One proximal step from u_prev; see the module docstring for the solver."""
    grid = u_prev.grid
    if not grid.same_as(cfg.grid):
        raise ValueError("density grid does not match the configured grid")
    s, tau, inner = cfg.s, cfg.tau, cfg.inner
    hvol = grid.cell_volume
    alpha0 = inner.alpha0 if inner.alpha0 is not None else tau

    def objective(values: np.ndarray) -> float:
        dens = GridDensity(grid, values)
        tr = w2(dens, u_prev, cfg.transport, want_potential=False)
        return energy_of_values(values, grid, s) + tr.w2_squared / (2 * tau)

    pot_cache = {"phi": None, "age": 0}

    def gradient(values: np.ndarray, allow_stale: bool = True):
        if (
            allow_stale
            and inner.potential_refresh > 1
            and pot_cache["phi"] is not None
            and pot_cache["age"] < inner.potential_refresh
        ):
            pot_cache["age"] += 1
            phi, w2sq = pot_cache["phi"]
        else:
            dens = GridDensity(grid, values)
            tr = w2(dens, u_prev, cfg.transport, want_potential=True)
            phi, w2sq = tr.potential, tr.w2_squared
            pot_cache["phi"] = (phi, w2sq)
            pot_cache["age"] = 1
        g = fractional_laplacian(values, grid, s) + phi / tau
        return g, w2sq

    def residual(values: np.ndarray, g: np.ndarray):
        mask = values > inner.degenerate_share * np.max(values)
        p = values[mask] * hvol
        gm = g[mask]
        gbar = float(np.sum(p * gm) / np.sum(p))
        return float(np.sqrt(np.sum(p * (gm - gbar) ** 2))), gbar

    st = _ProxState(u_prev.values.copy(), energy_of_values(u_prev.values, grid, s), alpha0)
    kkt = float("inf")
    it = 0
    while it < inner.max_iters:
        it += 1
        beta = (st.tmom - 1.0) / (st.tmom + 2.0) if (inner.momentum and not st.phase2) else 0.0
        y = _extrapolate(st.u, st.u_old, beta, hvol) if beta > 0 else st.u

        g, w2_y = gradient(y)
        kkt, gbar = residual(y, g)
        if kkt <= inner.grad_tol:
            st.u = y
            break
        obj_y = energy_of_values(y, grid, s) + w2_y / (2 * tau)

        if not st.phase2:
            st.alpha = min(2 * st.alpha, alpha0)
            accepted = False
            obj_c, cand = None, None
            while st.alpha >= inner.alpha_min:
                cand = _mirror_candidate(y, -st.alpha * (g - gbar), hvol)
                obj_c = objective(cand)
                if obj_c <= obj_y - inner.armijo * st.alpha * kkt * kkt + _OBJ_NOISE * max(1.0, abs(obj_y)):
                    accepted = True
                    break
                st.alpha *= inner.shrink
            if not accepted:
                if st.accepted == 0:
                    raise StagnationError(
                        f"no descent step above alpha_min={inner.alpha_min} "
                        f"(kkt residual {kkt:.3e})",
                        last_iterate=GridDensity(grid, st.u),
                    )
                st.phase2, st.tmom = True, 1.0
                continue
            if obj_c <= st.obj + _OBJ_NOISE * max(1.0, abs(st.obj)):
                decrease = st.obj - obj_c
                st.u_old, st.u, st.obj = st.u, cand, obj_c
                st.tmom += 1.0
                st.accepted += 1
                if inner.obj_tol > 0 and 0 <= decrease <= inner.obj_tol * abs(st.obj):
                    break
                # objective progress at the floating-point noise floor for a
                # sustained stretch: hand over to the residual-driven polish
                if decrease <= 8 * np.finfo(float).eps * max(1.0, abs(st.obj)):
                    st.noise_streak += 1
                    if st.noise_streak >= 10:
                        st.phase2, st.tmom = True, 1.0
                else:
                    st.noise_streak = 0
            else:
                st.tmom, st.u_old = 1.0, st.u  # momentum overshoot: restart
        else:
            # polish: accept on strict residual decrease; backtrack patiently
            accepted = False
            fails = 0
            while st.alpha >= inner.alpha_min / 10 and fails < 40:
                cand = _mirror_candidate(y, -st.alpha * (g - gbar), hvol)
                cand_g, _ = gradient(cand, allow_stale=False)
                kkt_c, _ = residual(cand, cand_g)
                if kkt_c < kkt:
                    accepted = True
                    break
                st.alpha *= 0.7
                fails += 1
            if not accepted:
                st.polish_failures += 1
                if st.polish_failures >= 3:
                    st.u = y
                    break  # floating-point floor of the residual
                st.alpha = alpha0 * 2.0 ** -6
                continue
            st.polish_failures = 0
            st.u_old, st.u = st.u, cand
            st.accepted += 1
            st.alpha = min(st.alpha * 1.2, alpha0)

    final = GridDensity(grid, st.u)
    tr_final = w2(final, u_prev, cfg.transport, want_potential=True)
    g_final = fractional_laplacian(st.u, grid, s) + tr_final.potential / tau
    kkt_final, _ = residual(st.u, g_final)
    e_final = energy_of_values(st.u, grid, s)
    return StepRecord(
        index=0,  # caller assigns
        density=final,
        w2_sq_to_prev=tr_final.w2_squared,
        energy=e_final,
        entropy=entropy(final),
        second_moment=second_moment(final),
        inner_iterations=st.accepted,
        kkt_residual=kkt_final,
        objective_value=e_final + tr_final.w2_squared / (2 * tau),
        boundary_mass=boundary_shell_mass(final),
    )


def run(u0: GridDensity, cfg: JkoConfig, num_steps: int) -> Trajectory:
    """Iterate `jko_step`; on a step failure the trajectory stops early with
    the failing step recorded in `status`."""
    if num_steps < 0:
        raise ValueError(f"number of steps must be nonnegative, got {num_steps}")
    steps: List[StepRecord] = []
    u = u0
    for k in range(1, num_steps + 1):
        try:
            rec = jko_step(u, cfg)
        except Exception as exc:  # noqa: BLE001 - recorded, not swallowed silently
            return Trajectory(cfg, u0, steps, status=f"failed:step={k}:{type(exc).__name__}:{exc}")
        rec = replace(rec, index=k)
        steps.append(rec)
        u = rec.density
    return Trajectory(cfg, u0, steps)
