"""Coherence evolution in the rotating frame and closed-form predictions.

The coherence s obeys

    ds/dt = [-i (w_z + b_z) - ((w_x + b_x)^2 + (w_y + b_y)^2) Lambda(w_z + b_z)] s

with Lambda the kernel integral from :mod:`envberry.kernel`, and
s(t_p) = exp(-i phi_total - d_total) s(0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from . import kernel as K
from .errors import ConfigurationError, IntegrationError
from .geometry import FrameField, LoopSpec, frame_field, time_integral
from .spectral import FLAG_GAUSSIAN_KERNEL, SpectralModel, coupling_constants

KERNEL_METHODS = ("auto", "gaussian", "exact", "none")
S0 = 0.5 + 0j


@dataclass(frozen=True)
class RunConfig:
    model: SpectralModel
    loop: LoopSpec
    b_lab: tuple[float, float, float] = (0.0, 0.0, 0.0)
    kernel_method: str = "auto"
    integrator_tolerance: float = 1e-10

    def __post_init__(self):
        if self.kernel_method not in KERNEL_METHODS:
            raise ConfigurationError(f"unknown kernel_method {self.kernel_method!r}")
        if not 0 < self.integrator_tolerance <= 1e-3:
            raise ConfigurationError("integrator_tolerance must lie in (0, 1e-3]")
        object.__setattr__(self, "b_lab", tuple(float(v) for v in self.b_lab))
        if len(self.b_lab) != 3:
            raise ConfigurationError("b_lab must have three components")

    @property
    def t_p(self) -> float:
        return self.loop.t_p

    def with_tp(self, t_p: float) -> "RunConfig":
        return replace(self, loop=self.loop.with_tp(t_p))

    def resolved_kernel_method(self) -> str:
        if self.kernel_method != "auto":
            return self.kernel_method
        ok = FLAG_GAUSSIAN_KERNEL in coupling_constants(self.model).validity
        return "gaussian" if ok else "exact"


@dataclass
class RunResult:
    s_plus_final: complex
    phi_total: float
    d_total: float
    prediction_phi: float
    prediction_d: float
    kernel_method: str
    trace: np.ndarray | None = field(default=None, repr=False)


def rate_function(cfg: RunConfig):
    method = cfg.resolved_kernel_method()
    if method == "none":
        return lambda w: 0j
    if method == "exact":
        return K.ExactRate(cfg.model)
    consts = coupling_constants(cfg.model)
    return lambda w: K.gaussian_rate(consts, w)


def _rhs_factory(cfg: RunConfig, lam):
    b = np.asarray(cfg.b_lab)
    loop = cfg.loop

    def rate(t):
        ff = frame_field(loop, b, min(max(t, 0.0), loop.t_p))
        wz = float(ff.total_z)
        return -1j * wz - float(ff.total_perp_sq) * lam(wz)

    return rate


def integrate_coherence(cfg: RunConfig, keep_trace: bool = False) -> RunResult:
    """Adaptive Runge-Kutta (DOP853) integration of the coherence equation.

    The phase is unwrapped by summing the argument increments between
    accepted steps; the step size is capped so that each increment stays
    well below pi.
    """
    lam = rate_function(cfg)
    rate = _rhs_factory(cfg, lam)
    t_p = cfg.t_p
    probe = frame_field(cfg.loop, cfg.b_lab, np.linspace(0.0, t_p, 257))
    w_max = float(np.max(np.abs(probe.total_z))) + float(np.max(probe.total_perp_sq)) * abs(lam(0.0))
    max_step = t_p / 16 if w_max == 0 else min(t_p / 16, 1.0 / w_max)
    tol = cfg.integrator_tolerance
    sol = solve_ivp(lambda t, y: rate(t) * y, (0.0, t_p), np.array([S0]), method="DOP853",
                    rtol=tol, atol=tol * 1e-3, max_step=max_step)
    if not sol.success:
        last = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f"coherence integration failed: {sol.message}", last)
    s = sol.y[0]
    dphi = np.angle(s[1:] / s[:-1])
    phi = -float(np.sum(dphi))
    d = -math.log(abs(s[-1]) / abs(S0))
    pred = predict_closed_form(cfg)
    trace = None
    if keep_trace:
        ff = frame_field(cfg.loop, cfg.b_lab, sol.t)
        trace = np.column_stack([sol.t, s.real, s.imag, ff.omega_z, ff.omega_perp])
    return RunResult(complex(s[-1]), phi, d, pred.phi_total, pred.d_total,
                     cfg.resolved_kernel_method(), trace)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ClosedForm:
    phi_total: float
    d_total: float
    residual_bound: float
    gamma1: float
    gamma2: float
    dephasing_rate: float  # gamma1 times the exponential suppression factor


def closed_form_rates(cfg: RunConfig, rates: str = "reference") -> tuple[float, float, float]:
    """(gamma1, gamma2, dephasing constant) under the chosen rate convention.

    ``reference``: gamma1 = (2 pi / G)^{1/2}/W with the factor exp(-G chi_1^2/2), and
    the regime-specific gamma2.  ``kernel``: the constants read off the
    small-frequency expansion of the kernel integral actually used by the
    integrator.
    """
    c = coupling_constants(cfg.model)
    if rates == "reference":
        return c.gamma1, c.gamma2, c.gamma1 * c.suppression
    if rates == "kernel":
        rc = K.kernel_rate_constants(c)
        return c.gamma1, rc.gamma2, rc.dephasing
    raise ValueError(f"unknown rate convention {rates!r}")


def predict_closed_form(cfg: RunConfig, rates: str = "reference") -> ClosedForm:
    """Phi = int[(w_z+b_z) - g2 |w+b|_perp^2 (w_z+b_z)] dt and D = int g1' |w+b|_perp^2 dt."""
    g1, g2, dep = closed_form_rates(cfg, rates)
    b = cfg.b_lab
    phi = time_integral(cfg.loop, lambda f: f.total_z - g2 * f.total_perp_sq * f.total_z, b)
    d = time_integral(cfg.loop, lambda f: dep * f.total_perp_sq, b)
    resid = time_integral(cfg.loop, lambda f: g1**2 * f.total_perp_sq ** 1.5, b)
    return ClosedForm(phi, d, resid, g1, g2, dep)


def closed_form_components(cfg: RunConfig, rates: str = "reference") -> dict[str, float]:
    """Split the closed forms into parts scaling as t_p^1, t_p^0, t_p^-1, t_p^-2.

    Each entry is the value of that part at the configured t_p.
    """
    _, g2, dep = closed_form_rates(cfg, rates)
    b = cfg.b_lab

    def ti(fn):
        return time_integral(cfg.loop, fn, b)

    def bw(f: FrameField):
        return f.b_x * f.omega_x + f.b_y * f.omega_y

    def bperp2(f):
        return f.b_x**2 + f.b_y**2

    def wperp2(f):
        return f.omega_x**2 + f.omega_y**2

    return {
        "phi_dyn": ti(lambda f: f.b_z - g2 * bperp2(f) * f.b_z),
        "phi_bp": ti(lambda f: f.omega_z - g2 * (bperp2(f) * f.omega_z + 2 * bw(f) * f.b_z)),
        "phi_na1": ti(lambda f: -g2 * (2 * bw(f) * f.omega_z + wperp2(f) * f.b_z)),
        "phi_na2": ti(lambda f: -g2 * wperp2(f) * f.omega_z),
        "d_dyn": ti(lambda f: dep * bperp2(f)),
        "d_bp": ti(lambda f: 2 * dep * bw(f)),
        "d_na1": ti(lambda f: dep * wperp2(f)),
    }
