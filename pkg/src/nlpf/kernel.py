"""Radial interaction kernels and their closed-form constants.

The solver uses a compactly supported polynomial kernel

    gamma(r) = eps^2 * C(delta) * max(0, 1 - r^2/delta^2),    r = |x - y|,

whose scaling constant C(delta) is fixed so that the second moment of the
kernel equals 2*n*eps^2 in n space dimensions.  That normalization makes the
nonlocal diffusion operator consistent with -eps^2 * Laplace in the limit of
vanishing interaction radius.  Closed forms:

    C(delta) = 15/(2 delta^3)        (n = 1)
    C(delta) = 24/(pi delta^4)       (n = 2)

    c_gamma  = integral of gamma     = 10 eps^2/delta^2   (n = 1)
                                     = 12 eps^2/delta^2   (n = 2)

The interface parameter of the constrained model is xi = c_gamma - c_F.
Smaller xi gives sharper interfaces; xi = 0 is the sharp-interface threshold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import fixed_quad

__all__ = [
    "KernelSpec",
    "kernel_eval",
    "scaling_constant",
    "second_moment_check",
    "c_gamma_closed_form",
    "c_gamma_quadrature",
    "xi",
]

#: Simpson panel count for 1D cross-check quadratures.  The integrands are
#: low-degree polynomials on [0, delta], so this makes 1e-8 agreement trivial.
SIMPSON_PANELS = 10_000

#: Gauss-Legendre order for the radial 2D quadratures (exact for the
#: polynomial integrands used here).
GAUSS_ORDER = 60


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of one radial kernel. Immutable and safe to share.

    epsilon : interface-scaling coefficient (> 0)
    delta   : interaction radius (> 0)
    dim     : spatial dimension, 1 or 2
    family  : kernel family tag; only "polynomial" is implemented, the tag
              exists so other integrable families can be added later without
              touching consumers
    """

    epsilon: float
    delta: float
    dim: int
    family: str = "polynomial"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.family != "polynomial":
            raise ValueError(f"unknown kernel family {self.family!r}")

    @property
    def scaling(self) -> float:
        """C(delta) for this spec."""
        return scaling_constant(self.dim, self.delta)


def scaling_constant(dim: int, delta: float) -> float:
    """Normalization C(delta) giving second moment 2*n*eps^2.

    Raises ValueError for unsupported dimensions.
    """
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if dim == 1:
        return 15.0 / (2.0 * delta**3)
    if dim == 2:
        return 24.0 / (math.pi * delta**4)
    raise ValueError(f"unsupported dimension {dim}")


def kernel_eval(spec: KernelSpec, r):
    """Evaluate gamma at distance(s) r >= 0.

    Accepts scalars or arrays; returns the same shape.  Exactly zero for
    r >= delta (compact support), nonnegative everywhere.
    """
    r = np.asarray(r, dtype=float)
    amp = spec.epsilon**2 * spec.scaling
    out = amp * np.maximum(0.0, 1.0 - (r / spec.delta) ** 2)
    return float(out) if out.ndim == 0 else out


def _radial_integral(spec: KernelSpec, moment: int) -> float:
    """Integral of |z|^moment * gamma(|z|) over R^n by radial quadrature.

    1D uses composite Simpson on [0, delta] (times 2 for symmetry); 2D uses
    Gauss-Legendre with the 2*pi*r surface weight.
    """
    if spec.dim == 1:
        r = np.linspace(0.0, spec.delta, SIMPSON_PANELS + 1)
        vals = r**moment * kernel_eval(spec, r)
        from scipy.integrate import simpson

        return 2.0 * float(simpson(vals, x=r))
    # dim == 2
    val, _ = fixed_quad(
        lambda r: 2.0 * math.pi * r ** (moment + 1) * kernel_eval(spec, r),
        0.0,
        spec.delta,
        n=GAUSS_ORDER,
    )
    return float(val)


def second_moment_check(spec: KernelSpec) -> float:
    """Relative error of the kernel's second moment against 2*n*eps^2.

    A correctly normalized kernel returns <= 1e-8; larger values signal a
    broken kernel implementation (wrong C(delta) or support handling).
    """
    target = 2.0 * spec.dim * spec.epsilon**2
    got = _radial_integral(spec, moment=2)
    if not math.isfinite(got):
        raise ArithmeticError("second-moment quadrature did not converge")
    return abs(got - target) / target


def c_gamma_quadrature(spec: KernelSpec) -> float:
    """Integral of gamma over R^n by quadrature (cross-check path)."""
    return _radial_integral(spec, moment=0)


def c_gamma_closed_form(spec: KernelSpec) -> float:
    """c_gamma = integral of gamma: 10 eps^2/delta^2 (1D), 12 eps^2/delta^2 (2D)."""
    if spec.dim == 1:
        return 10.0 * spec.epsilon**2 / spec.delta**2
    if spec.dim == 2:
        return 12.0 * spec.epsilon**2 / spec.delta**2
    raise ValueError(f"unsupported dimension {spec.dim}")


def xi(spec: KernelSpec, c_F: float) -> float:
    """Nonlocal interface parameter xi = c_gamma - c_F.

    Emits a warning when xi < 0: the constrained Cahn-Hilliard analysis
    assumes xi >= 0, so negative values are outside the analyzed regime
    (the value is still returned).
    """
    if c_F <= 0:
        raise ValueError(f"c_F must be > 0, got {c_F}")
    val = c_gamma_closed_form(spec) - c_F
    if val < 0:
        warnings.warn(
            f"xi = c_gamma - c_F = {val:.6g} < 0: outside the analyzed "
            "regime (uniqueness/projection results need xi >= 0)",
            stacklevel=2,
        )
    return val
