"""Desk-scale self-verification: constants, quadratures and solver oracles.

Every check recomputes its expected value through an independent route
(quadrature instead of closed form, dense matrices instead of stencils,
exhaustive active-set enumeration instead of the iterative solver) and
compares at a stated tolerance.  Used by the ``verify`` CLI command.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .grid import build_grid
from .kernel import (
    KernelSpec,
    c_gamma_closed_form,
    c_gamma_quadrature,
    kernel_eval,
    second_moment_check,
    xi,
)
from .nonlocal_ops import build_stencil, convolve, exterior_flux_solve
from .pdas import PdasConfig, pdas_step_AC_nonlocal, pdas_step_CH
from .physics import ModelParams, coupling_m, project_unit
from .stepper import step_phase_AC

__all__ = ["run_all_checks", "Check"]

EX1_KERNEL = KernelSpec(epsilon=0.02, delta=0.1540, dim=1)
EX3_KERNEL = KernelSpec(epsilon=0.01, delta=0.0826, dim=2)


@dataclass
class Check:
    name: str
    value: float
    tol: float
    ok: bool
    detail: str = ""


def _dense_conv_matrix(grid, spec):
    """Dense gamma(|x_i - x_j|) * m_j matrix straight from coordinates."""
    coords = grid.coords()
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    return kernel_eval(spec, dist) * grid.lumped_mass[None, :]


def _check(name, value, tol, detail="") -> Check:
    return Check(name=name, value=float(value), tol=tol, ok=bool(value <= tol),
                 detail=detail)


def run_all_checks() -> list:
    checks = []
    specs = [
        EX1_KERNEL,
        EX3_KERNEL,
        KernelSpec(epsilon=1.0, delta=1.0, dim=1),
        KernelSpec(epsilon=0.31, delta=0.07, dim=2),
    ]

    for spec in specs:
        closed = c_gamma_closed_form(spec)
        quad = c_gamma_quadrature(spec)
        rel = abs(closed - quad) / closed
        checks.append(_check(
            f"c_gamma closed-form vs quadrature (eps={spec.epsilon:g}, "
            f"delta={spec.delta:g}, n={spec.dim})", rel, 1e-8,
            f"closed = {closed:.10g}, quadrature = {quad:.10g}"))
        checks.append(_check(
            f"second moment = 2n eps^2 (eps={spec.epsilon:g}, "
            f"delta={spec.delta:g}, n={spec.dim})",
            second_moment_check(spec), 1e-8))

    xi1 = xi(EX1_KERNEL, 1.0 / 6.0)
    checks.append(_check("xi(ex1 kernel) = 0.002 +- 5e-5", abs(xi1 - 0.002), 5e-5,
                         f"xi = {xi1:.6g}"))
    xi3 = xi(EX3_KERNEL, 1.0 / 6.0)
    checks.append(_check("xi(ex3 kernel) = 0.0093 +- 2e-4", abs(xi3 - 0.0093), 2e-4,
                         f"xi = {xi3:.6g}"))

    # Stencil consistency and dense-oracle agreement, 1D and 2D.
    rng = np.random.default_rng(7)
    for dim, h in ((1, 1.0 / 48), (2, 1.0 / 9)):
        spec = KernelSpec(epsilon=0.5, delta=3.4 * h, dim=dim)
        grid = build_grid(dim, h, spec.delta)
        stencil = build_stencil(grid, spec)
        ones = np.ones(grid.n_nodes)
        cons = np.abs(convolve(stencil, ones) - stencil.c_gamma_h).max()
        checks.append(_check(f"convolve(1) == c_gamma_h ({dim}D)", cons, 1e-14))
        W = _dense_conv_matrix(grid, spec)
        u = rng.random(grid.n_nodes)
        err = np.abs(convolve(stencil, u) - W @ u).max()
        checks.append(_check(f"stencil convolution vs dense matrix ({dim}D)",
                             err, 1e-12))
        uc = u.copy()
        uc[grid.exterior_ids] = exterior_flux_solve(stencil, u, mode="implicit")
        c_ext = stencil.c_gamma_h[grid.exterior_ids]
        resid = np.abs(c_ext * uc[grid.exterior_ids]
                       - (W @ uc)[grid.exterior_ids]).max() / c_ext.max()
        checks.append(_check(f"implicit exterior closure residual ({dim}D)",
                             resid, 1e-11))

    # Projection map case table.
    s = 0.35
    got = project_unit(np.array([-1.0, 0.3 * s, 2.0 * s]), s)
    checks.append(_check("projection clamp cases (-1, 0.3 s, 2 s) -> (0, 0.3, 1)",
                         np.abs(got - np.array([0.0, 0.3, 1.0])).max(), 1e-15))

    # Fast projection path vs active-set route (beta = 0).
    params0 = ModelParams(mu=0.0012, L=0.5, D=1.0, beta=0.0)
    h = 1.0 / 24
    spec = KernelSpec(epsilon=0.05, delta=3.2 * h, dim=1)
    grid = build_grid(1, h, spec.delta)
    stencil = build_stencil(grid, spec)
    cfg = PdasConfig()
    worst = 0.0
    for _ in range(20):
        u_prev = np.clip(rng.random(grid.n_nodes), 0.0, 1.0)
        theta_prev = rng.normal(scale=0.5, size=grid.n_interior) + 1.0
        u_fast = step_phase_AC(grid, stencil, params0, 3e-4, u_prev, theta_prev)
        res = pdas_step_AC_nonlocal(
            grid, stencil, params0, 3e-4, u_prev,
            coupling_m(params0, theta_prev), cfg)
        worst = max(worst, float(np.abs(u_fast - res.u).max()))
    checks.append(_check("AC projection fast path vs active-set route", worst,
                         1e-10, "20 random steps"))

    # Constrained CH step vs exhaustive active-set enumeration (small 1D).
    params = ModelParams(mu=0.0012, L=0.5, D=1.0, beta=0.02)
    h = 1.0 / 5
    spec = KernelSpec(epsilon=0.35, delta=2.6 * h, dim=1)
    grid = build_grid(1, h, spec.delta)
    stencil = build_stencil(grid, spec)
    tau = 3e-4
    u_prev = np.clip(rng.random(grid.n_nodes), 0.0, 1.0)
    m_prev = rng.uniform(-0.4, 0.4, grid.n_interior)
    res = pdas_step_CH(grid, stencil, params, tau, u_prev, m_prev, cfg)
    u_oracle = _enumerate_CH_explicit(grid, stencil, params, tau, u_prev, m_prev)
    err = np.abs(res.u[grid.interior_ids] - u_oracle).max()
    checks.append(_check(
        "CH active-set solve vs exhaustive enumeration (6 nodes)", err, 1e-9))
    return checks


def _enumerate_CH_explicit(grid, stencil, params, tau, u_prev, m_prev):
    """Brute-force KKT solve of the explicit-convolution CH step.

    Tries every {lower, inactive, upper} assignment of the interior nodes,
    solves the resulting dense linear system and returns the feasible one.
    """
    from .grid import assemble_stiffness

    ids = grid.interior_ids
    n = grid.n_interior
    mI = grid.mass_interior
    c_F = params.c_F
    xi_vec = stencil.c_gamma_h[ids] - c_F
    conv_prev = convolve(stencil, u_prev)
    q = conv_prev[ids] + c_F * m_prev - 0.5 * c_F
    Aw = tau * (np.diag(mI) + params.beta * assemble_stiffness(grid).toarray())
    tol = 1e-9
    for assign in itertools.product((0, 1, 2), repeat=n):
        assign = np.array(assign)
        lower = assign == 0
        inact = assign == 1
        upper = assign == 2
        # Unknowns [u, w]; rows: phase rows then w rows.
        A = np.zeros((2 * n, 2 * n))
        b = np.zeros(2 * n)
        for j in range(n):
            if inact[j]:
                A[j, j] = xi_vec[j]
                A[j, n + j] = -1.0
                b[j] = q[j]
            else:
                A[j, j] = 1.0
                b[j] = 1.0 if upper[j] else 0.0
        A[n:, :n] = params.mu * np.diag(mI)
        A[n:, n:] = Aw
        b[n:] = params.mu * mI * u_prev[ids]
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            continue
        u, w = x[:n], x[n:]
        lam = q + w - xi_vec * u
        lam[inact] = 0.0
        if (
            np.all(u[inact] >= -tol) and np.all(u[inact] <= 1 + tol)
            and np.all(lam[upper] >= -tol) and np.all(lam[lower] <= tol)
        ):
            return u
    raise RuntimeError("enumeration found no feasible active-set assignment")
