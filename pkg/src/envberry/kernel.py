"""Bath correlation kernels, the I(b) integral and the complex rate entering the coherence equation.

Times are handled through the dimensionless s = omega_m * tau.

The Gaussian kernel used here is 1/2 exp[-G (s^2 + 2i chi_1 s)], which is the exact
second-order expansion of 1/2 exp[2(f(s) - F)].  ``complex_rate`` returns the
bracketed kernel integral int_0^inf A_even^sym(tau) exp(-i w tau) dtau; the
coherence equation multiplies it by the full omega_perp^2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, KernelError, RegimeError
from .spectral import CouplingConstants, SpectralModel, coupling_constants, integrate_density

SQRT_PI = math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# f(tau)
# ---------------------------------------------------------------------------
def _f_weights(model: SpectralModel):
    """Weight functions c(x), d(x) with f(s) = int j [c cos(xs) - i d sin(xs)]."""
    if model.regime == "classical":
        return (lambda x: np.asarray(x, float) ** -2.0), None
    beta = model.beta_omega_m
    if math.isinf(beta):
        c = lambda x: np.asarray(x, float) ** -2.0  # noqa: E731
    else:
        c = lambda x: np.asarray(x, float) ** -2.0 / np.tanh(0.5 * beta * np.asarray(x, float))  # noqa: E731
    return c, (lambda x: np.asarray(x, float) ** -2.0)


def f_exact(model: SpectralModel, tau, omega_m: float | None = None):
    """f(tau) by adaptive quadrature over x (one quad call per tau value).

    Quantum: f = int j/x^2 [coth(beta x/2) cos(x s) - i sin(x s)] dx.
    Classical: f = int j_cl/x^2 cos(x s) dx (real).
    """
    om = model.omega_m if omega_m is None else omega_m
    c, d = _f_weights(model)
    tau = np.asarray(tau, float)
    out = np.empty(tau.shape, complex)
    for idx, t in np.ndenumerate(tau):
        s = om * t
        re = integrate_density(model, lambda x: c(x) * np.cos(x * s))
        im = 0.0 if d is None else -integrate_density(model, lambda x: d(x) * np.sin(x * s))
        out[idx] = re + 1j * im
    return complex(out) if out.ndim == 0 else out


class FNodes:
    """Fixed Gauss-Legendre discretisation of f(s) for fast evaluation on grids."""

    def __init__(self, model: SpectralModel, panels: int = 96, order: int = 16):
        self.model = model
        c, d = _f_weights(model)
        if model.is_point_mass:
            x = np.array([model.center])
            w = np.array([model.scale * model.weight * model.center**model.x_power])
        else:
            a, b = model.support()
            parts = [np.linspace(a, b, panels + 1), [p for p in model.breakpoints() if a < p < b]]
            if a > 0 and b / a > 10:
                # inverse powers of x are steep near a small lower edge
                parts.append(np.geomspace(a, b, panels + 1))
            edges = np.unique(np.concatenate(parts))
            gx, gw = np.polynomial.legendre.leggauss(order)
            lo, hi = edges[:-1, None], edges[1:, None]
            x = (0.5 * (hi - lo) * gx + 0.5 * (hi + lo)).ravel()
            w = (0.5 * (hi - lo) * gw).ravel() * model.density(x)
        self.x = x
        self.cw = w * c(x)
        self.dw = None if d is None else w * d(x)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        ph = np.multiply.outer(s, self.x)
        re = np.cos(ph) @ self.cw
        if self.dw is None:
            return re.astype(complex)
        return re - 1j * (np.sin(ph) @ self.dw)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class KernelEvaluation:
    tau: np.ndarray
    a_even_sym: np.ndarray
    a_even_asym: np.ndarray
    a_odd_sym: np.ndarray
    a_odd_asym: np.ndarray
    method: str

    def rows(self):
        cols = np.broadcast_arrays(self.tau, self.a_even_sym, self.a_even_asym,
                                   self.a_odd_sym, self.a_odd_asym)
        for r in zip(*(np.ravel(c) for c in cols)):
            yield (*map(float, r), self.method)


def _exact_from_f(f, F: float):
    # e^{-2F}(cosh 2f - 1) and e^{-2F} sinh 2f, written to avoid overflow
    p = 0.5 * np.exp(2.0 * (f - F))
    m = 0.5 * np.exp(-2.0 * (f + F))
    even = p + m - math.exp(-2.0 * F)
    odd = p - m
    return even, odd


def kernel_exact(model: SpectralModel, tau, fnodes: FNodes | None = None) -> KernelEvaluation:
    """Exact trace kernels from f(tau); F is taken as f(0)."""
    tau = np.asarray(tau, float)
    fn = fnodes if fnodes is not None else FNodes(model)
    F = float(np.real(fn(0.0)))
    f = fn(model.omega_m * tau)
    even, odd = _exact_from_f(f, F)
    return KernelEvaluation(tau, even.real, even.imag, odd.real, odd.imag, "exact_trace")


def gaussian_exponent(constants: CouplingConstants, tau):
    s = constants.omega_m * np.asarray(tau, float)
    return -constants.g_dis * (s * s + 2j * constants.chi[1] * s)


def kernel_gaussian(constants: CouplingConstants, tau) -> KernelEvaluation:
    """A^sym = 1/2 Re exp[-G(s^2 + 2i chi_1 s)], A^asym = 1/2 Im of the same; even = odd."""
    tau = np.asarray(tau, float)
    e = 0.5 * np.exp(gaussian_exponent(constants, tau))
    return KernelEvaluation(tau, e.real, e.imag, e.real.copy(), e.imag.copy(), "gaussian")


# ---------------------------------------------------------------------------
# I(b)
# ---------------------------------------------------------------------------
def _half_gauss_fourier(a: float, c):
    """int_0^inf exp(-a s^2 - i c s) ds via the Faddeeva function."""
    return SQRT_PI / (2.0 * math.sqrt(a)) * special.wofz(-np.asarray(c, float) / (2.0 * math.sqrt(a)))


def i_integral(constants: CouplingConstants, b, method: str = "quad", g: float | None = None):
    """I(b) = int_0^inf dtau exp[-G/2 ((W tau)^2 + 2i(chi_1 + b) W tau)].

    ``method='quad'`` integrates numerically (real and imaginary parts as
    Fourier integrals); ``'faddeeva'`` uses the error-function closed form.
    ``g`` overrides G in the exponent.
    """
    G = constants.g_dis if g is None else g
    om = constants.omega_m
    chi = constants.chi[1]
    b_arr = np.asarray(b, float)
    if method == "faddeeva":
        out = _half_gauss_fourier(0.5 * G, G * (chi + b_arr)) / om
        return complex(out) if out.ndim == 0 else out
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    s_max = math.sqrt(2.0 * 45.0 / G)
    out = np.empty(b_arr.shape, complex)
    with warnings.catch_warnings():
        # quad's roundoff warnings fire near machine precision; accuracy is tested separately
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for idx, bb in np.ndenumerate(b_arr):
            out[idx] = _i_quad(G, chi, float(bb), s_max) / om
    return complex(out) if out.ndim == 0 else out


def _i_quad(G: float, chi: float, bb: float, s_max: float) -> complex:
    k = G * (chi + bb)
    env = lambda s: math.exp(-0.5 * G * s * s)  # noqa: E731
    lim = int(200 + 20 * abs(k) * s_max / (2 * math.pi))
    if k == 0:
        return integrate.quad(env, 0.0, s_max, epsabs=1e-15, epsrel=1e-13, limit=lim)[0] + 0j
    re = integrate.quad(env, 0.0, s_max, weight="cos", wvar=k,
                        epsabs=1e-15, epsrel=1e-13, limit=lim)[0]
    im = -integrate.quad(env, 0.0, s_max, weight="sin", wvar=k,
                         epsabs=1e-15, epsrel=1e-13, limit=lim)[0]
    return re + 1j * im


def re_closed(constants: CouplingConstants, b):
    """Completed-square formula for Re I(b): sqrt(pi) e^{-G(chi+b)^2/2} / (W (G/2)^{1/2})."""
    G, chi, om = constants.g_dis, constants.chi[1], constants.omega_m
    b = np.asarray(b, float)
    return SQRT_PI * np.exp(-0.5 * G * (chi + b) ** 2) / (om * math.sqrt(0.5 * G))


def im_closed(constants: CouplingConstants, b):
    """Leading large-G chi_1 form -1/(W G (chi+b)); classical small-b form 2b/(W G)."""
    G, chi, om = constants.g_dis, constants.chi[1], constants.omega_m
    b = np.asarray(b, float)
    if constants.regime == "classical":
        return 2.0 * b / (om * G)
    if np.any(chi + b == 0):
        raise DomainError("im_closed has a pole at chi_1 + b = 0")
    return -1.0 / (om * G * (chi + b))


# ---------------------------------------------------------------------------
# Complex rate
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ComplexRate:
    omega_z: float
    value: complex
    method: str


def gaussian_rate(constants: CouplingConstants, omega):
    """int_0^inf A_even^sym(tau) e^{-i w tau} dtau for the Gaussian kernel (vectorised)."""
    G, chi, om = constants.g_dis, constants.chi[1], constants.omega_m
    w = np.asarray(omega, float) / om
    c0 = 2.0 * G * chi
    val = 0.25 * (_half_gauss_fourier(G, c0 + w) + np.conj(_half_gauss_fourier(G, c0 - w))) / om
    return complex(val) if np.ndim(val) == 0 else val


def gaussian_rate_derivative(constants: CouplingConstants, omega=0.0):
    """d/dw of :func:`gaussian_rate`, from w'(z) = -2 z w(z) + 2i/sqrt(pi)."""
    G, chi, om = constants.g_dis, constants.chi[1], constants.omega_m
    w = np.asarray(omega, float) / om
    c0 = 2.0 * G * chi
    sa = math.sqrt(G)

    def dfour(c):
        z = -c / (2 * sa)
        dw = -2 * z * special.wofz(z) + 2j / SQRT_PI
        return SQRT_PI / (2 * sa) * dw * (-1.0 / (2 * sa))

    val = 0.25 * (dfour(c0 + w) - np.conj(dfour(c0 - w))) / om**2
    return complex(val) if np.ndim(val) == 0 else val


class ExactRate:
    """Kernel integral for the exact trace kernel, tabulated once on a tau grid."""

    def __init__(self, model: SpectralModel, tail: float = 40.0, s_cap: float = 400.0,
                 order: int = 16):
        self.model = model
        fn = FNodes(model)
        F = float(np.real(fn(0.0)))
        consts = coupling_constants(model)
        G = consts.g_dis
        # find where |A| stays below e^-tail times its initial value for good
        s_scan = np.arange(0.0, s_cap, 0.05)
        scan_even, _ = _exact_from_f(fn(s_scan), F)
        mag = np.abs(scan_even)
        live = np.nonzero(mag > math.exp(-tail) * mag[0])[0]
        if live[-1] >= len(s_scan) - 1:
            raise KernelError("exact kernel does not decay within the scan window")
        s_max = max(s_scan[live[-1] + 1], math.sqrt(2 * tail / G))
        x_max = float(np.max(fn.x))
        h = min(0.25 / math.sqrt(G), 2.0 / (2 * G * abs(consts.chi[1]) + x_max + 1.0))
        n_pan = max(int(math.ceil(s_max / h)), 8)
        edges = np.linspace(0.0, s_max, n_pan + 1)
        gx, gw = np.polynomial.legendre.leggauss(order)
        lo, hi = edges[:-1, None], edges[1:, None]
        s = (0.5 * (hi - lo) * gx + 0.5 * (hi + lo)).ravel()
        ws = (0.5 * (hi - lo) * gw).ravel()
        even, _ = _exact_from_f(fn(s), F)
        self.s = s
        self.weights = ws * even.real / model.omega_m
        self.s_max = s_max

    def __call__(self, omega):
        w = np.asarray(omega, float) / self.model.omega_m
        val = np.exp(-1j * np.multiply.outer(w, self.s)) @ self.weights
        return complex(val) if np.ndim(val) == 0 else val


def complex_rate(constants: CouplingConstants, omega_z: float, method: str = "gaussian",
                 model: SpectralModel | None = None) -> ComplexRate:
    """Kernel integral at frequency omega_z.

    For the Gaussian kernel this equals 1/4 [I'(b) + I'^*(-b)] with
    b = omega_z / (2 G W), where I' is I(b) evaluated with 2G in place of G.
    """
    if method == "gaussian":
        return ComplexRate(float(omega_z), gaussian_rate(constants, omega_z), method)
    if method == "exact":
        if model is None:
            raise ValueError("exact rate needs the spectral model")
        return ComplexRate(float(omega_z), ExactRate(model)(omega_z), method)
    if method == "none":
        return ComplexRate(float(omega_z), 0j, method)
    raise ValueError(f"unknown kernel method {method!r}")


@dataclass(frozen=True)
class RateConstants:
    """Small-frequency expansion of the kernel integral, Lambda(w) ~ dephasing - i*gamma2*w."""

    dephasing: float  # Re Lambda(0)
    gamma2: float     # -Im Lambda'(0)

    def as_dict(self):
        return {"dephasing": self.dephasing, "gamma2": self.gamma2}


def kernel_rate_constants(constants: CouplingConstants) -> RateConstants:
    lam0 = gaussian_rate(constants, 0.0)
    d = gaussian_rate_derivative(constants, 0.0)
    return RateConstants(float(lam0.real), float(-d.imag))


# ---------------------------------------------------------------------------
# Oscillator overlaps
# ---------------------------------------------------------------------------
def mode_overlap(m: int, alpha: float, delta_m: int) -> float:
    """Overlap of displaced oscillator states to first order in alpha (second for delta_m=0)."""
    if m < 0:
        raise DomainError("occupation m must be non-negative")
    if delta_m == 0:
        return 1.0 - (m + 0.5) * alpha**2
    if delta_m == -1:
        return math.sqrt(m) * alpha
    if delta_m == 1:
        return -math.sqrt(m + 1) * alpha
    raise DomainError("delta_m must be -1, 0 or +1")


def require_quantum(model: SpectralModel):
    if model.regime != "quantum":
        raise RegimeError("operation needs a quantum model")
