"""Primal-dual active-set solvers for the per-step complementarity systems.

Each time step of an obstacle variant requires a bound-constrained solve: the
phase value is pinned to 1 on an upper active set, to 0 on a lower active
set, and satisfies a linear equation on the inactive remainder, with the
multiplier carrying the complementarity.  The active sets are iterated with
the standard test

    upper <- { lambda + c (u - 1) > 0 },    lower <- { lambda + c u < 0 },

until they repeat.  Warm-starting from the previous time level's sets makes
the iteration converge in one to three sweeps once the interface moves only
a few cells per step.

Solvers:
  * pdas_step_CH             coupled (u, w) step, beta > 0, explicit or
                             implicit convolution
  * pdas_step_AC_nonlocal    beta = 0 nonlocal step (diagonal rows); exists
                             to cross-check the direct projection fast path
  * pdas_step_local_obstacle backward-Euler local obstacle step (beta >= 0)

The explicit-convolution CH step reduces to one SPD solve per sweep in the
chemical potential w: on the inactive set u = (w + q)/xi is eliminated
nodewise, giving the system (mu/xi) M_inactive + tau (M + beta K).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, factorized, spsolve

from .grid import Grid, cached_stiffness
from .nonlocal_ops import ConvolutionStencil, conv_rows, convolve
from .physics import ModelParams

__all__ = [
    "ActiveSets",
    "PdasConfig",
    "PdasResult",
    "pdas_step_CH",
    "pdas_step_AC_nonlocal",
    "pdas_step_local_obstacle",
    "verify_complementarity",
    "sets_from_bounds",
]

#: Problem size below which inner solves go straight to a direct factorization.
_DIRECT_SOLVE_MAX = 500


@dataclass
class PdasConfig:
    """Active-set iteration parameters.

    c_penalty: dimensionless multiplier (> 0) of the set-update threshold.
    Each solver scales the test constant to its natural multiplier magnitude
    (mu/tau plus the operator's nodal scale); with a constant that is too
    small relative to the multipliers, pinned nodes can flip directly
    between the bounds and the iteration 2-cycles.
    """

    c_penalty: float = 1.0
    max_iters: int = 50
    lin_tol: float = 1e-12
    convolution_mode: str = "explicit"

    def __post_init__(self):
        if self.c_penalty <= 0:
            raise ValueError("c_penalty must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.convolution_mode not in ("explicit", "implicit"):
            raise ValueError(f"unknown convolution_mode {self.convolution_mode!r}")


@dataclass
class ActiveSets:
    """Partition of the interior nodes: pinned-at-1, pinned-at-0, free."""

    upper: np.ndarray
    lower: np.ndarray

    @property
    def inactive(self) -> np.ndarray:
        return ~(self.upper | self.lower)

    def same_as(self, other: "ActiveSets") -> bool:
        return bool(
            np.array_equal(self.upper, other.upper)
            and np.array_equal(self.lower, other.lower)
        )


@dataclass
class PdasResult:
    """Converged (or best) iterate of one PDAS solve.

    u is the full-domain field (exterior closed for nonlocal steps), w and
    lam live on interior nodes; w is None for beta = 0 local/nonlocal paths.
    """

    u: np.ndarray
    w: np.ndarray | None
    lam: np.ndarray
    sets: ActiveSets
    iters: int
    converged: bool


def sets_from_bounds(u_interior: np.ndarray, tol: float = 1e-9) -> ActiveSets:
    """Initial active sets from a field's own bound pattern."""
    u_interior = np.asarray(u_interior, dtype=float)
    return ActiveSets(upper=u_interior >= 1.0 - tol, lower=u_interior <= tol)


def _pdas_iterate(solve_for_sets, init_sets: ActiveSets, c: float, max_iters: int):
    """Drive the active-set fixed point; returns (u_I, lam, extra, sets, iters, ok).

    If the warm-started iteration does not settle within max_iters (a cold
    start from an all-pinned state opens a wide inactive band only a couple
    of nodes per sweep), it is restarted once from the all-inactive estimate,
    whose first unconstrained solve pins near-final sets immediately.
    """
    n = init_sets.upper.shape[0]
    attempts = [init_sets]
    if init_sets.upper.any() or init_sets.lower.any():
        attempts.append(
            ActiveSets(np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))
        )
    u_I = lam = extra = sets = None
    iters_used = 0
    for start in attempts:
        sets = ActiveSets(start.upper.copy(), start.lower.copy())
        for _ in range(max_iters):
            iters_used += 1
            u_I, lam, extra = solve_for_sets(sets.upper, sets.lower)
            new = ActiveSets(
                upper=lam + c * (u_I - 1.0) > 0.0,
                lower=lam + c * u_I < 0.0,
            )
            if new.same_as(sets):
                return u_I, lam, extra, sets, iters_used, True
            sets = new
    return u_I, lam, extra, sets, iters_used, False


def _phase_matrix(grid: Grid, beta: float, tau: float) -> sp.csr_matrix:
    """tau * (M + beta K) on interior nodes, cached per grid."""
    cache = grid.__dict__.setdefault("_phase_matrix_cache", {})
    key = (beta, tau)
    A = cache.get(key)
    if A is None:
        M = sp.diags_array(grid.mass_interior).tocsr()
        A = (tau * (M + beta * cached_stiffness(grid))).tocsr()
        cache[key] = A
    return A


def _spd_solve(A: sp.csr_matrix, b: np.ndarray, x0, lin_tol: float) -> np.ndarray:
    """SPD solve: direct for small systems, Jacobi-preconditioned CG otherwise."""
    n = A.shape[0]
    if n <= _DIRECT_SOLVE_MAX:
        return spsolve(A.tocsc(), b)
    M = sp.diags_array(1.0 / A.diagonal()).tocsr()
    x, info = cg(A, b, x0=x0, M=M, rtol=lin_tol, atol=0.0, maxiter=20 * n)
    if info != 0:
        x = spsolve(A.tocsc(), b)
    return x


def _check_feasible(u_interior: np.ndarray, slack: float = 1e-9) -> None:
    lo = float(u_interior.min(initial=0.0))
    hi = float(u_interior.max(initial=1.0))
    if lo < -slack or hi > 1.0 + slack:
        raise ValueError(
            f"previous phase field infeasible: range [{lo}, {hi}] outside [0, 1]"
        )


def pdas_step_CH(
    grid: Grid,
    stencil: ConvolutionStencil,
    params: ModelParams,
    tau: float,
    u_prev: np.ndarray,
    m_prev: np.ndarray,
    config: PdasConfig,
    init_sets: ActiveSets | None = None,
    w0: np.ndarray | None = None,
) -> PdasResult:
    """One constrained Cahn-Hilliard-type step (beta > 0).

    Solves the coupled system

        mu M (u - u_prev) + tau (M + beta K) w = 0
        xi u - gamma(*)u - w + lambda = c_F m_prev - c_F/2   (+ complementarity)

    with the convolution taken at the previous level (explicit mode, rows
    become diagonal in u) or at the current level (implicit mode, one sparse
    solve of the full (u_int, u_ext, w) system per sweep).  The exterior
    layer is closed by the zero-flux condition, explicitly or as part of the
    coupled solve respectively.
    """
    if params.beta <= 0:
        raise ValueError("pdas_step_CH requires beta > 0")
    ids = grid.interior_ids
    mI = grid.mass_interior
    c_F = params.c_F
    mu = params.mu
    xi_vec = stencil.c_gamma_h[ids] - c_F
    if np.any(xi_vec <= 0.0):
        raise ValueError(
            "discrete xi = c_gamma_h - c_F must be > 0 on interior nodes "
            "for the constrained Cahn-Hilliard step"
        )
    u_prev = np.asarray(u_prev, dtype=float)
    m_prev = np.asarray(m_prev, dtype=float)
    u_prev_I = u_prev[ids]
    _check_feasible(u_prev_I)
    if init_sets is None:
        init_sets = sets_from_bounds(u_prev_I)
    c_eff = config.c_penalty * (mu / tau + stencil.c_gamma_h_interior + 1.0)

    if config.convolution_mode == "explicit":
        conv_prev = convolve(stencil, u_prev)
        q = conv_prev[ids] + c_F * m_prev - 0.5 * c_F
        A0 = _phase_matrix(grid, params.beta, tau)
        w_start = w0 if w0 is not None else np.zeros(grid.n_interior)
        warm = {"w": np.asarray(w_start, dtype=float)}

        def solve_for_sets(upper, lower):
            inactive = ~(upper | lower)
            ubar = upper.astype(float)
            A = A0 + sp.diags_array(np.where(inactive, mu * mI / xi_vec, 0.0))
            rhs = mu * mI * (
                u_prev_I - np.where(inactive, q / xi_vec, ubar)
            )
            w = _spd_solve(A.tocsr(), rhs, warm["w"], config.lin_tol)
            warm["w"] = w
            u_I = np.where(inactive, (w + q) / xi_vec, ubar)
            lam = np.where(inactive, 0.0, w + q - xi_vec * u_I)
            return u_I, lam, w

        u_I, lam, w, sets, iters, ok = _pdas_iterate(
            solve_for_sets, init_sets, c_eff, config.max_iters
        )
        u_full = np.empty(grid.n_nodes)
        u_full[ids] = u_I
        u_full[grid.exterior_ids] = conv_prev[grid.exterior_ids] / np.maximum(
            stencil.c_gamma_h[grid.exterior_ids], 1e-300
        )
        return PdasResult(u_full, w, lam, sets, iters, ok)

    # Implicit convolution: one sparse solve of the full coupled system per
    # sweep.  Unknown ordering [u_int, u_ext, w].
    ext = grid.exterior_ids
    n_i, n_e = grid.n_interior, ext.size
    Wm = conv_rows(stencil, np.arange(grid.n_nodes))
    W_II = Wm[ids][:, ids]
    W_IE = Wm[ids][:, ext]
    W_EI = Wm[ext][:, ids]
    W_EE = Wm[ext][:, ext]
    A_w = _phase_matrix(grid, params.beta, tau)
    M_I = sp.diags_array(mI).tocsr()
    S_E = sp.diags_array(stencil.c_gamma_h[ext]).tocsr() - W_EE
    rhs_R2_inactive = c_F * m_prev - 0.5 * c_F
    I_i = sp.eye_array(n_i, format="csr")
    Z_ie = sp.csr_matrix((n_i, n_e))
    Z_ee = sp.csr_matrix((n_e, n_i))

    def solve_for_sets(upper, lower):
        inactive = ~(upper | lower)
        ubar = upper.astype(float)
        # Phase rows: identity on active nodes, operator rows elsewhere.
        D_in = sp.diags_array(inactive.astype(float)).tocsr()
        D_act = sp.diags_array((~inactive).astype(float)).tocsr()
        R2_uI = D_in @ (sp.diags_array(xi_vec).tocsr() - W_II) + D_act
        R2_uE = D_in @ (-W_IE)
        R2_w = D_in @ (-I_i)
        rhs2 = np.where(inactive, rhs_R2_inactive, ubar)
        A = sp.bmat(
            [
                [mu * M_I, Z_ie, A_w],
                [R2_uI, R2_uE, R2_w],
                [-W_EI, S_E, Z_ee],
            ],
            format="csc",
        )
        rhs = np.concatenate([mu * mI * u_prev_I, rhs2, np.zeros(n_e)])
        x = spsolve(A, rhs)
        u_I = x[:n_i]
        u_E = x[n_i : n_i + n_e]
        w = x[n_i + n_e :]
        conv_I = W_II @ u_I + W_IE @ u_E
        lam = np.where(
            inactive, 0.0, w + conv_I + c_F * m_prev - 0.5 * c_F - xi_vec * u_I
        )
        return u_I, lam, (w, u_E)

    u_I, lam, extra, sets, iters, ok = _pdas_iterate(
        solve_for_sets, init_sets, c_eff, config.max_iters
    )
    w, u_E = extra
    u_full = np.empty(grid.n_nodes)
    u_full[ids] = u_I
    u_full[ext] = u_E
    return PdasResult(u_full, w, lam, sets, iters, ok)


def pdas_step_AC_nonlocal(
    grid: Grid,
    stencil: ConvolutionStencil,
    params: ModelParams,
    tau: float,
    u_prev: np.ndarray,
    m_prev: np.ndarray,
    config: PdasConfig,
    init_sets: ActiveSets | None = None,
) -> PdasResult:
    """beta = 0 nonlocal step via the active-set loop (explicit convolution).

    The rows are diagonal in u, so this is equivalent to the direct
    projection evaluation; it exists as an independently-iterated route for
    the fast-path equivalence checks.
    """
    if params.beta != 0:
        raise ValueError("pdas_step_AC_nonlocal requires beta = 0")
    ids = grid.interior_ids
    c_F = params.c_F
    r = params.mu / tau
    xi_vec = stencil.c_gamma_h[ids] - c_F
    denom = r + xi_vec
    if np.any(denom <= 0.0):
        raise ValueError("mu/tau + c_gamma_h - c_F must be > 0 at every node")
    u_prev = np.asarray(u_prev, dtype=float)
    u_prev_I = u_prev[ids]
    _check_feasible(u_prev_I)
    conv_prev = convolve(stencil, u_prev)
    g = r * u_prev_I + conv_prev[ids] + c_F * np.asarray(m_prev) - 0.5 * c_F
    if init_sets is None:
        init_sets = sets_from_bounds(u_prev_I)
    c_eff = config.c_penalty * (float(denom.max()) + 1.0)

    def solve_for_sets(upper, lower):
        inactive = ~(upper | lower)
        ubar = upper.astype(float)
        u_I = np.where(inactive, g / denom, ubar)
        lam = np.where(inactive, 0.0, g - denom * u_I)
        return u_I, lam, None

    u_I, lam, _, sets, iters, ok = _pdas_iterate(
        solve_for_sets, init_sets, c_eff, config.max_iters
    )
    u_full = np.empty(grid.n_nodes)
    u_full[ids] = u_I
    u_full[grid.exterior_ids] = conv_prev[grid.exterior_ids] / np.maximum(
        stencil.c_gamma_h[grid.exterior_ids], 1e-300
    )
    return PdasResult(u_full, None, lam, sets, iters, ok)


def pdas_step_local_obstacle(
    grid: Grid,
    params: ModelParams,
    tau: float,
    eps_interface: float,
    u_prev: np.ndarray,
    m_prev: np.ndarray,
    config: PdasConfig,
    init_sets: ActiveSets | None = None,
) -> PdasResult:
    """Backward-Euler local obstacle step: mu du/dt with eps^2 K stiffness.

    For beta = 0 the chemical potential is eliminated and each sweep is one
    reduced SPD solve on the inactive set with the fixed matrix
    (mu/tau - c_F) M + eps^2 K (mu/tau > c_F is required for definiteness).
    For beta > 0 the same (M + beta K) w-equation as in the nonlocal step is
    kept and the coupled (u, w) system is solved sparsely.
    """
    if grid.layer != 0:
        raise ValueError("local steps expect a grid without interaction layer")
    ids = grid.interior_ids
    mI = grid.mass_interior
    c_F = params.c_F
    r = params.mu / tau
    u_prev = np.asarray(u_prev, dtype=float)
    m_prev = np.asarray(m_prev, dtype=float)
    u_prev_I = u_prev[ids]
    _check_feasible(u_prev_I)
    if init_sets is None:
        init_sets = sets_from_bounds(u_prev_I)
    K = cached_stiffness(grid)
    c_eff = config.c_penalty * (
        r + c_F + eps_interface**2 * float((K.diagonal() / mI).max()) + 1.0
    )

    if params.beta == 0.0:
        if r <= c_F:
            raise ValueError(
                f"mu/tau = {r} must exceed c_F = {c_F} for the local obstacle "
                "step (shrink tau)"
            )
        A = (sp.diags_array((r - c_F) * mI) + eps_interface**2 * K).tocsr()
        b = mI * (r * u_prev_I - 0.5 * c_F + c_F * m_prev)

        def solve_for_sets(upper, lower):
            inactive = ~(upper | lower)
            u_I = upper.astype(float)
            idx = np.flatnonzero(inactive)
            if idx.size:
                act = np.flatnonzero(~inactive)
                rhs = b[idx]
                if act.size:
                    rhs = rhs - A[idx][:, act] @ u_I[act]
                u_I[idx] = _solve_reduced(A, idx, rhs, config.lin_tol)
            lam = np.where(inactive, 0.0, (b - A @ u_I) / mI)
            return u_I, lam, None

        u_I, lam, _, sets, iters, ok = _pdas_iterate(
            solve_for_sets, init_sets, c_eff, config.max_iters
        )
        return PdasResult(u_I, None, lam, sets, iters, ok)

    # beta > 0: coupled (u, w) system, unknowns [u, w].
    n_i = grid.n_interior
    M_I = sp.diags_array(mI).tocsr()
    A_w = _phase_matrix(grid, params.beta, tau)
    L_u = (eps_interface**2 * K - c_F * M_I).tocsr()
    I_i = sp.eye_array(n_i, format="csr")
    rhs2_inactive = mI * (c_F * m_prev - 0.5 * c_F)

    def solve_for_sets(upper, lower):
        inactive = ~(upper | lower)
        ubar = upper.astype(float)
        D_in = sp.diags_array(inactive.astype(float)).tocsr()
        D_act = sp.diags_array((~inactive).astype(float)).tocsr()
        R2_u = D_in @ L_u + D_act
        R2_w = D_in @ (-M_I)
        rhs2 = np.where(inactive, rhs2_inactive, ubar)
        A = sp.bmat([[params.mu * M_I, A_w], [R2_u, R2_w]], format="csc")
        rhs = np.concatenate([params.mu * mI * u_prev_I, rhs2])
        x = spsolve(A, rhs)
        u_I = x[:n_i]
        w = x[n_i:]
        lam = np.where(
            inactive,
            0.0,
            w - (L_u @ u_I) / mI - 0.5 * c_F + c_F * m_prev,
        )
        return u_I, lam, w

    u_I, lam, w, sets, iters, ok = _pdas_iterate(
        solve_for_sets, init_sets, c_eff, config.max_iters
    )
    return PdasResult(u_I, w, lam, sets, iters, ok)


def _solve_reduced(A: sp.csr_matrix, idx: np.ndarray, rhs: np.ndarray, lin_tol: float):
    """Solve the principal submatrix system A[idx, idx] x = rhs."""
    sub = A[idx][:, idx].tocsc()
    if idx.size <= _DIRECT_SOLVE_MAX:
        return spsolve(sub, rhs)
    try:
        return factorized(sub)(rhs)
    except RuntimeError:
        M = sp.diags_array(1.0 / sub.diagonal()).tocsr()
        x, info = cg(sub, rhs, M=M, rtol=lin_tol, atol=0.0, maxiter=20 * idx.size)
        if info != 0:
            raise
        return x


def verify_complementarity(u, lam, tol: float | None = None) -> float:
    """Max complementarity/bound residual of a (u, lambda) pair.

    Splits lambda into nonnegative parts and returns the largest of
    |min(lambda_+, 1-u)|, |min(lambda_-, u)| and the bound violations.
    With ``tol`` given, raises if the residual exceeds it.
    """
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lam_p = np.maximum(lam, 0.0)
    lam_m = np.maximum(-lam, 0.0)
    res = 0.0
    if u.size:
        res = max(
            float(np.abs(np.minimum(lam_p, 1.0 - u)).max()),
            float(np.abs(np.minimum(lam_m, u)).max()),
            float(np.maximum(-u, 0.0).max()),
            float(np.maximum(u - 1.0, 0.0).max()),
        )
    if tol is not None and res > tol:
        raise RuntimeError(f"complementarity residual {res:.3e} exceeds {tol:.3e}")
    return res
