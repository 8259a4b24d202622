"""IMEX time loop: phase update, then implicit temperature solve.

Per step k the phase field is advanced first using the previous temperature
through the explicitly-lagged coupling m(theta^{k-1}) (the system is
triangular: u^k depends on theta^{k-1} only, theta^k on u^k), then the
temperature solves

    (M + tau D K) theta^k = M theta^{k-1} + L M (u^k - u^{k-1}),

which conserves the discrete enthalpy sum m_j (theta_j - L u_j) exactly.

Variant dispatch:
  nonlocal_CH    active-set solve of the coupled (u, w) system (beta > 0)
  nonlocal_AC    direct nodal projection, no linear or nonlinear solve
  local_obstacle active-set solve with eps^2 K stiffness
  local_regular  semi-implicit solve, nonlinearity explicit, no constraints
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .config import RunConfig
from .grid import Grid, build_grid, cached_stiffness
from .kernel import c_gamma_closed_form
from .nonlocal_ops import (
    ConvolutionStencil,
    build_stencil,
    convolve,
    exterior_flux_solve,
)
from .pdas import (
    PdasConfig,
    PdasResult,
    pdas_step_CH,
    pdas_step_local_obstacle,
    verify_complementarity,
)
from .physics import ModelParams, coupling_m, objective_Jk, regular_potential_dF

__all__ = [
    "State",
    "RunResult",
    "AdmissibilityReport",
    "step_temperature",
    "step_phase_AC",
    "step_phase_CH",
    "step_phase_local_regular",
    "run",
    "timestep_admissibility",
]


@dataclass
class State:
    """Immutable snapshot of the fields at one time level.

    theta, w, lam live on interior nodes; u on all nodes (interior +
    exterior layer).  w/lam are None on paths that do not produce them.
    """

    k: int
    t: float
    theta: np.ndarray
    u: np.ndarray
    w: np.ndarray | None = None
    lam: np.ndarray | None = None


@dataclass
class RunResult:
    """Trajectory snapshots plus per-step diagnostics of one simulation."""

    config: RunConfig
    grid: Grid
    states: list
    diagnostics: dict
    n_steps: int
    t_mismatch: float
    snapshot_levels: list
    runtime_seconds: float = 0.0
    stencil: ConvolutionStencil | None = None

    @property
    def non_converged_steps(self) -> list:
        conv = self.diagnostics.get("pdas_converged")
        if conv is None:
            return []
        return [int(k) + 1 for k in np.flatnonzero(~conv)]


def _heat_solver(grid: Grid, D: float, tau: float):
    cache = grid.__dict__.setdefault("_heat_cache", {})
    key = (D, tau)
    solver = cache.get(key)
    if solver is None:
        M = sp.diags_array(grid.mass_interior).tocsr()
        A = (M + tau * D * cached_stiffness(grid)).tocsc()
        solver = factorized(A)
        cache[key] = solver
    return solver


def step_temperature(
    grid: Grid,
    params: ModelParams,
    tau: float,
    theta_prev: np.ndarray,
    u_new: np.ndarray,
    u_prev: np.ndarray,
) -> np.ndarray:
    """Backward-Euler heat step with the latent-heat source L (u^k - u^{k-1}).

    u_new/u_prev may be full-domain or interior fields; only interior values
    enter.  Direct sparse factorization, reused across steps.
    """
    ids = grid.interior_ids
    u_new_I = np.asarray(u_new, dtype=float)
    u_prev_I = np.asarray(u_prev, dtype=float)
    if u_new_I.shape == (grid.n_nodes,):
        u_new_I = u_new_I[ids]
    if u_prev_I.shape == (grid.n_nodes,):
        u_prev_I = u_prev_I[ids]
    mI = grid.mass_interior
    rhs = mI * (np.asarray(theta_prev, dtype=float) + params.L * (u_new_I - u_prev_I))
    return _heat_solver(grid, params.D, tau)(rhs)


def _ac_update(
    grid: Grid,
    stencil: ConvolutionStencil,
    params: ModelParams,
    tau: float,
    u_prev: np.ndarray,
    m_prev: np.ndarray,
):
    """Projection update for beta = 0; returns (u_full, lam)."""
    ids = grid.interior_ids
    c_F = params.c_F
    r = params.mu / tau
    denom = r + stencil.c_gamma_h[ids] - c_F
    if np.any(denom <= 0.0):
        raise ValueError(
            "mu/tau + c_gamma_h - c_F must be > 0 at every node; "
            "tau is too large relative to mu/(c_F - c_gamma_h)"
        )
    conv_prev = convolve(stencil, u_prev)
    g = r * u_prev[ids] + conv_prev[ids] + c_F * m_prev - 0.5 * c_F
    u_I = np.clip(g / denom, 0.0, 1.0)
    lam = g - denom * u_I
    u_full = np.empty(grid.n_nodes)
    u_full[ids] = u_I
    ext = grid.exterior_ids
    u_full[ext] = conv_prev[ext] / stencil.c_gamma_h[ext]
    return u_full, lam


def step_phase_AC(
    grid: Grid,
    stencil: ConvolutionStencil,
    params: ModelParams,
    tau: float,
    u_prev: np.ndarray,
    theta_prev: np.ndarray,
) -> np.ndarray:
    """Direct nodal projection step for the beta = 0 nonlocal model.

    No linear or nonlinear solve: u at each interior node is the clamp of
    g / (mu/tau + c_gamma_h - c_F) with g built from the previous level;
    the exterior layer is closed explicitly.
    """
    m_prev = coupling_m(params, theta_prev)
    u_full, _ = _ac_update(grid, stencil, params, tau, u_prev, m_prev)
    return u_full


def step_phase_CH(
    grid: Grid,
    stencil: ConvolutionStencil,
    params: ModelParams,
    tau: float,
    u_prev: np.ndarray,
    theta_prev: np.ndarray,
    config: PdasConfig,
    init_sets=None,
    w0=None,
) -> PdasResult:
    """Constrained Cahn-Hilliard phase step; delegates to the active-set solver."""
    m_prev = coupling_m(params, theta_prev)
    return pdas_step_CH(
        grid, stencil, params, tau, u_prev, m_prev, config, init_sets=init_sets, w0=w0
    )


def _local_regular_solver(grid: Grid, params: ModelParams, tau: float, eps: float):
    cache = grid.__dict__.setdefault("_locreg_cache", {})
    key = (params.mu, tau, eps)
    solver = cache.get(key)
    if solver is None:
        M = sp.diags_array(grid.mass_interior).tocsr()
        A = ((params.mu / tau) * M + eps**2 * cached_stiffness(grid)).tocsc()
        solver = factorized(A)
        cache[key] = solver
    return solver


def step_phase_local_regular(
    grid: Grid,
    params: ModelParams,
    tau: float,
    eps_interface: float,
    u_prev: np.ndarray,
    theta_prev: np.ndarray,
) -> np.ndarray:
    """Semi-implicit local step with the smooth double well (unconstrained).

    Stiffness implicit, potential derivative explicit:
    (mu/tau M + eps^2 K) u = mu/tau M u_prev - M dF(u_prev, m(theta_prev)).
    """
    ids = grid.interior_ids
    u_prev = np.asarray(u_prev, dtype=float)
    u_prev_I = u_prev[ids] if u_prev.shape == (grid.n_nodes,) else u_prev
    m_prev = coupling_m(params, theta_prev)
    mI = grid.mass_interior
    rhs = mI * ((params.mu / tau) * u_prev_I - regular_potential_dF(u_prev_I, m_prev))
    return _local_regular_solver(grid, params, tau, eps_interface)(rhs)


@dataclass
class AdmissibilityReport:
    """Advisory step-size check against the uniqueness conditions.

    Never blocks a run; the beta > 0 bound involves kernel-mollifier
    constants that the theory does not make computable, so it is reported
    only when the user supplies them.
    """

    beta: float
    tau: float
    bound: float | None
    status: str  # "pass" | "warn" | "unconditional" | "not_computable"
    message: str


def timestep_admissibility(
    config: RunConfig,
    C_I: float = 0.0,
    C_eta: float | None = None,
    C_hat_eta: float | None = None,
) -> AdmissibilityReport:
    """Check tau against the uniqueness step-size bounds (advisory only).

    beta = 0: tau < mu / (C_gamma (1 + C_I^2) - xi) with the user-supplied
    exterior constant C_I (default 0); a nonpositive denominator makes the
    bound vacuous ("unconditional").  beta > 0: requires C_eta and C_hat_eta
    as well; otherwise reported as not computable.
    """
    m = config.model
    if not config.is_nonlocal:
        return AdmissibilityReport(
            m.beta, config.tau, None, "not_computable",
            "admissibility bound applies to the nonlocal variants only",
        )
    spec = config.kernel_spec()
    C_gamma = c_gamma_closed_form(spec)
    xi_val = C_gamma - m.c_F
    if C_I < 0:
        raise ValueError("C_I must be >= 0")
    if m.beta == 0:
        denom = C_gamma * (1.0 + C_I**2) - xi_val
        if denom <= 0:
            return AdmissibilityReport(
                m.beta, config.tau, None, "unconditional",
                "denominator nonpositive: bound vacuous",
            )
        bound = m.mu / denom
        ok = config.tau < bound
        return AdmissibilityReport(
            m.beta, config.tau, bound, "pass" if ok else "warn",
            f"tau = {config.tau:.4g} vs bound {bound:.4g} (C_I = {C_I:g})",
        )
    if C_eta is None or C_hat_eta is None:
        return AdmissibilityReport(
            m.beta, config.tau, None, "not_computable",
            "beta > 0 bound needs user-supplied C_eta and C_hat_eta",
        )
    if xi_val <= 0:
        return AdmissibilityReport(
            m.beta, config.tau, None, "warn", "xi <= 0: outside uniqueness regime"
        )
    bound = 2.0 * xi_val * m.mu / ((C_eta**2 + m.beta * C_hat_eta**2) * (1.0 + C_I**2))
    ok = config.tau < bound
    return AdmissibilityReport(
        m.beta, config.tau, bound, "pass" if ok else "warn",
        f"tau = {config.tau:.4g} vs bound {bound:.4g}",
    )


def initial_state(config: RunConfig, grid: Grid, stencil: ConvolutionStencil | None) -> State:
    """Build (theta^0, u^0); nonlocal u^0 is extended by the explicit flux closure."""
    ids = grid.interior_ids
    coords = grid.coords()
    init = config.init
    if init.kind == "file":
        from .fields_io import read_field

        _, vals = read_field(init.path)
        if vals.size == grid.n_interior:
            u_I = vals
        elif vals.size == grid.n_nodes:
            u_I = vals[ids]
        else:
            raise ValueError(
                f"initial field has {vals.size} values; expected "
                f"{grid.n_interior} (interior) or {grid.n_nodes} (all nodes)"
            )
    elif init.kind == "step":
        x0 = init.params[0]
        u_I = (coords[ids, 0] <= x0 + 1e-12).astype(float)
    elif init.kind in ("box", "frame"):
        a, b = init.params
        inside = np.ones(len(ids), dtype=bool)
        for d in range(grid.dim):
            c = coords[ids, d]
            inside &= (c >= a - 1e-12) & (c <= b + 1e-12)
        u_I = inside.astype(float)
        if init.kind == "frame":
            u_I = 1.0 - u_I
    else:
        raise ValueError(f"unknown init kind {init.kind!r}")

    u_full = np.zeros(grid.n_nodes)
    u_full[ids] = u_I
    if stencil is not None and grid.exterior_ids.size:
        u_full[grid.exterior_ids] = exterior_flux_solve(stencil, u_full, mode="explicit")

    if isinstance(init.theta0, str):
        from .fields_io import read_field

        _, theta = read_field(init.theta0)
        if theta.size != grid.n_interior:
            raise ValueError("theta0 field size does not match interior nodes")
    else:
        theta = np.full(grid.n_interior, float(init.theta0))
    return State(k=0, t=0.0, theta=theta, u=u_full)


def run(config: RunConfig) -> RunResult:
    """Execute the full time loop and collect snapshots plus diagnostics.

    Records, per step: active-set iterations and convergence, complementarity
    residual, bound range of u over all nodes, enthalpy, and (on implicit
    nonlocal-CH paths, or when record_energy is set) the per-step objective
    at the new and previous iterates and the projection-formula residual.
    """
    t0 = _time.perf_counter()
    config.validate()
    params = config.model
    tau = config.tau
    grid = build_grid(config.dim, config.h, config.delta if config.is_nonlocal else 0.0)
    stencil = build_stencil(grid, config.kernel_spec()) if config.is_nonlocal else None

    n_steps = int(round(config.T_final / tau))
    n_steps = max(n_steps, 1)
    t_mismatch = abs(n_steps * tau - config.T_final)
    snap_levels = sorted(
        {min(max(int(round(t / tau)), 0), n_steps) for t in config.snapshots}
    )

    record_energy = config.record_energy
    if record_energy is None:
        record_energy = (
            config.variant == "nonlocal_CH"
            and config.pdas.convolution_mode == "implicit"
        )

    state = initial_state(config, grid, stencil)
    ids = grid.interior_ids
    mI = grid.mass_interior
    enthalpy0 = float(np.dot(mI, state.theta - params.L * state.u[ids]))
    enthalpy_scale = 1.0 + abs(float(np.dot(mI, state.theta)))

    diag = {
        "pdas_iters": np.zeros(n_steps, dtype=int),
        "pdas_converged": np.ones(n_steps, dtype=bool),
        "comp_residual": np.full(n_steps, np.nan),
        "bound_min": np.full(n_steps, np.nan),
        "bound_max": np.full(n_steps, np.nan),
        "enthalpy_drift": np.zeros(n_steps),
        "energy_J_new": np.full(n_steps, np.nan),
        "energy_J_prev": np.full(n_steps, np.nan),
        "proj_residual": np.full(n_steps, np.nan),
        "enthalpy_scale": enthalpy_scale,
    }

    states = []
    if 0 in snap_levels:
        states.append(state)

    prev_sets = None
    w_warm = None
    xi_vec = None
    if stencil is not None:
        xi_vec = stencil.c_gamma_h[ids] - params.c_F

    u = state.u
    theta = state.theta
    for k in range(1, n_steps + 1):
        m_prev = coupling_m(params, theta)
        w = lam = None
        if config.variant == "nonlocal_CH":
            res = pdas_step_CH(
                grid, stencil, params, tau, u, m_prev, config.pdas,
                init_sets=prev_sets, w0=w_warm,
            )
            u_new, w, lam = res.u, res.w, res.lam
            prev_sets, w_warm = res.sets, res.w
            diag["pdas_iters"][k - 1] = res.iters
            diag["pdas_converged"][k - 1] = res.converged
        elif config.variant == "nonlocal_AC":
            u_new, lam = _ac_update(grid, stencil, params, tau, u, m_prev)
        elif config.variant == "local_obstacle":
            res = pdas_step_local_obstacle(
                grid, params, tau, config.epsilon, u, m_prev, config.pdas,
                init_sets=prev_sets,
            )
            u_new, w, lam = res.u, res.w, res.lam
            prev_sets = res.sets
            diag["pdas_iters"][k - 1] = res.iters
            diag["pdas_converged"][k - 1] = res.converged
        elif config.variant == "local_regular":
            u_new = step_phase_local_regular(
                grid, params, tau, config.epsilon, u, theta
            )
        else:  # pragma: no cover - validate() forbids this
            raise ValueError(f"unknown variant {config.variant}")

        # every path yields a full-domain field (local grids have no exterior)
        assert u_new.shape == (grid.n_nodes,)
        if lam is not None:
            diag["comp_residual"][k - 1] = verify_complementarity(u_new[ids], lam)
        if config.is_obstacle:
            diag["bound_min"][k - 1] = float(u_new.min())
            diag["bound_max"][k - 1] = float(u_new.max())

        if record_energy and stencil is not None:
            diag["energy_J_new"][k - 1] = objective_Jk(
                grid, stencil, params, tau, u_new, u, m_prev
            )
            diag["energy_J_prev"][k - 1] = objective_Jk(
                grid, stencil, params, tau, u, u, m_prev
            )
        if (
            config.variant == "nonlocal_CH"
            and config.pdas.convolution_mode == "implicit"
        ):
            g = (
                w
                + convolve(stencil, u_new)[ids]
                + params.c_F * m_prev
                - 0.5 * params.c_F
            )
            diag["proj_residual"][k - 1] = float(
                np.abs(u_new[ids] - np.clip(g / xi_vec, 0.0, 1.0)).max()
            )

        theta_new = step_temperature(grid, params, tau, theta, u_new, u)
        enthalpy = float(np.dot(mI, theta_new - params.L * u_new[ids]))
        diag["enthalpy_drift"][k - 1] = abs(enthalpy - enthalpy0)

        u = u_new
        theta = theta_new
        if k in snap_levels:
            states.append(
                State(k=k, t=k * tau, theta=theta.copy(), u=u.copy(),
                      w=None if w is None else w.copy(),
                      lam=None if lam is None else lam.copy())
            )

    return RunResult(
        config=config,
        grid=grid,
        states=states,
        diagnostics=diag,
        n_steps=n_steps,
        t_mismatch=t_mismatch,
        snapshot_levels=snap_levels,
        runtime_seconds=_time.perf_counter() - t0,
        stencil=stencil,
    )
