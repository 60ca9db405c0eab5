"""Monte-Carlo ground truth: a spin driven by explicit classical noise along a moving axis.

Each realization of the noise is xi(t) = sum_j a_j cos(W_j t + p_j).  The
Schroedinger equation i dpsi/dt = -1/2 [xi(t) e(t) + B].sigma psi is integrated in
the lab frame with a fourth-order Magnus scheme; only the readout uses the
rotating frame.

Readout convention: the coherence is reported in the noise-dressed frame,
i.e. multiplied by exp(+i Theta) with Theta = int_0^t_p xi dt.  The bare lab
coherence is dephased completely by this random along-axis phase; the
environment-dressed states are the ones whose phase the analytic chain
describes.  ``dressed=False`` gives the bare value.

Calibration: a mode carrying the fraction w_j of the classical weight G gets
<a_j^2> = NOISE_POWER_FACTOR * w_j * W_m^2, so the total noise power is
4 G W_m^2 and C(0) = 2 G W_m^2.  With this value the static-axis coherence
decays as exp(-G (W_m t)^2) at short times, matching the second-order
expansion of the classical kernel exp[2(f - F)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.stats import truncnorm

from .errors import ConfigurationError, IntegrationError, RegimeError
from .geometry import LoopSpec, frame_unitary, solid_angle, wrap_angle
from .spectral import SpectralModel, g_dis

NOISE_POWER_FACTOR = 4.0
NORM_TOL = 1e-8
_C1 = 0.5 - math.sqrt(3.0) / 6.0
_C2 = 0.5 + math.sqrt(3.0) / 6.0


@dataclass(frozen=True)
class NoiseRealization:
    omegas: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    seed: int
    index: int = 0

    @property
    def modes(self):
        return list(zip(self.omegas.tolist(), self.amplitudes.tolist(), self.phases.tolist()))

    def xi(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        return np.cos(np.multiply.outer(t, self.omegas) + self.phases) @ self.amplitudes


@dataclass
class EnsembleEstimate:
    mean_s_plus: complex
    phi_mc: float
    d_mc: float
    stderr_phi: float
    stderr_d: float
    n_realizations: int
    n_modes: int
    dt: float
    samples: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {"mean_s_plus": [self.mean_s_plus.real, self.mean_s_plus.imag],
                "phi_mc": self.phi_mc, "d_mc": self.d_mc, "stderr_phi": self.stderr_phi,
                "stderr_d": self.stderr_d, "n_realizations": self.n_realizations,
                "n_modes": self.n_modes, "dt": self.dt}


# ---------------------------------------------------------------------------
# Noise generation
# ---------------------------------------------------------------------------
def _rng(seed: int, index: int) -> np.random.Generator:
    # counter-based stream per realization: order-independent and reproducible
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


class ModeSampler:
    """Stratified inverse-CDF sampler of mode frequencies for a classical density.

    The support is split into ``n_modes`` strata of equal spectral weight; each
    mode frequency is drawn within its stratum, so every mode carries weight
    G / n_modes.
    """

    def __init__(self, model: SpectralModel, n_modes: int = 64, grid: int = 20001):
        if model.regime != "classical":
            raise RegimeError("the noise oracle needs a classical model")
        if n_modes < 1:
            raise ConfigurationError("n_modes must be positive")
        self.model = model
        self.weight = g_dis(model) if model.weight > 0 else 0.0
        if model.is_point_mass:
            n_modes = 1
        self.n_modes = n_modes
        self._ppf = None
        if not model.is_point_mass and self.weight > 0:
            if model.kind == "gaussian_bump" and model.x_power == 0:
                a, b = model.support()
                lo, hi = (a - model.center) / model.width, (b - model.center) / model.width
                dist = truncnorm(lo, hi, loc=model.center, scale=model.width)
                self._ppf = dist.ppf
            else:
                a, b = model.support()
                x = np.linspace(a, b, grid)
                j = model.density(x)
                cdf = np.concatenate([[0.0], np.cumsum(0.5 * (j[1:] + j[:-1]) * np.diff(x))])
                cdf /= cdf[-1]
                keep = np.concatenate([[True], np.diff(cdf) > 0])
                xk, ck = x[keep], cdf[keep]
                self._ppf = lambda u: np.interp(u, ck, xk)

    @property
    def variance_per_mode(self) -> float:
        om = self.model.omega_m
        return NOISE_POWER_FACTOR * self.weight / self.n_modes * om**2

    def sample(self, seed: int, index: int = 0) -> NoiseRealization:
        rng = _rng(seed, index)
        n = self.n_modes
        om = self.model.omega_m
        u = rng.random(n)
        if self._ppf is None:
            x = np.full(n, self.model.center)
        else:
            x = self._ppf((np.arange(n) + u) / n)
        amps = rng.standard_normal(n) * math.sqrt(self.variance_per_mode)
        phases = rng.random(n) * 2 * math.pi
        return NoiseRealization(x * om, amps, phases, int(seed), int(index))


def sample_realization(model: SpectralModel, n_modes: int = 64, seed: int = 0,
                       index: int = 0) -> NoiseRealization:
    return ModeSampler(model, n_modes).sample(seed, index)


def noise_autocorrelation(real: NoiseRealization, tau) -> np.ndarray:
    """Exact ensemble autocorrelation 1/2 sum <a_j^2> cos(W_j tau) for the realization's grid."""
    tau = np.asarray(tau, float)
    return 0.5 * np.cos(np.multiply.outer(tau, real.omegas)) @ (real.amplitudes**2)


# ---------------------------------------------------------------------------
# Integrator
# ---------------------------------------------------------------------------
@nb.njit(cache=True)
def _magnus_batch(om, amp, phs, evec, bvec, h, nsteps, psi0):  # pragma: no cover - jitted
    m_tot, n = om.shape
    out = np.empty((m_tot, 2), np.complex128)
    s3 = math.sqrt(3.0) / 12.0
    c1 = 0.5 - math.sqrt(3.0) / 6.0
    c2 = 0.5 + math.sqrt(3.0) / 6.0
    bx, by, bz = bvec[0], bvec[1], bvec[2]
    z1 = np.empty(n, np.complex128)
    z2 = np.empty(n, np.complex128)
    r = np.empty(n, np.complex128)
    for m in range(m_tot):
        for j in range(n):
            z1[j] = amp[m, j] * np.exp(1j * (om[m, j] * c1 * h + phs[m, j]))
            z2[j] = amp[m, j] * np.exp(1j * (om[m, j] * c2 * h + phs[m, j]))
            r[j] = np.exp(1j * om[m, j] * h)
        a = psi0[0]
        b = psi0[1]
        for k in range(nsteps):
            x1 = 0.0
            x2 = 0.0
            for j in range(n):
                x1 += z1[j].real
                x2 += z2[j].real
                z1[j] *= r[j]
                z2[j] *= r[j]
            e1 = evec[2 * k]
            e2 = evec[2 * k + 1]
            v1x = x1 * e1[0] + bx
            v1y = x1 * e1[1] + by
            v1z = x1 * e1[2] + bz
            v2x = x2 * e2[0] + bx
            v2y = x2 * e2[1] + by
            v2z = x2 * e2[2] + bz
            wx = 0.5 * h * (v1x + v2x) + s3 * h * h * (v1y * v2z - v1z * v2y)
            wy = 0.5 * h * (v1y + v2y) + s3 * h * h * (v1z * v2x - v1x * v2z)
            wz = 0.5 * h * (v1z + v2z) + s3 * h * h * (v1x * v2y - v1y * v2x)
            nw = math.sqrt(wx * wx + wy * wy + wz * wz)
            if nw > 0.0:
                c = math.cos(0.5 * nw)
                s = math.sin(0.5 * nw) / nw
                wx *= s
                wy *= s
                wz *= s
                # exp(i W.sigma / 2)
                na = c * a + 1j * (wz * a + (wx - 1j * wy) * b)
                nb_ = c * b + 1j * ((wx + 1j * wy) * a - wz * b)
                a = na
                b = nb_
        out[m, 0] = a
        out[m, 1] = b
    return out


def default_dt(sampler: ModeSampler) -> float:
    """0.05 / max(largest mode frequency, rms noise amplitude)."""
    om = sampler.model.omega_m
    wmax = sampler.model.support()[1] * om
    xi_rms = math.sqrt(0.5 * sampler.variance_per_mode * sampler.n_modes)
    return 0.05 / max(wmax, xi_rms, 1e-300)


def _axis_at_nodes(loop: LoopSpec, h: float, nsteps: int) -> np.ndarray:
    t0 = np.arange(nsteps) * h
    t = np.empty(2 * nsteps)
    t[0::2] = t0 + _C1 * h
    t[1::2] = t0 + _C2 * h
    return np.ascontiguousarray(loop.axis(np.minimum(t, loop.t_p)))


def _initial_state(loop: LoopSpec) -> tuple[np.ndarray, np.ndarray]:
    th, ph, _, _ = loop.angles(np.array([0.0, loop.t_p]))
    u0 = frame_unitary(float(th[0]), float(ph[0]))
    u1 = frame_unitary(float(th[1]), float(ph[1]))
    psi0 = u0.conj().T @ (np.array([1.0, 1.0], complex) / math.sqrt(2.0))
    return psi0, u1


def _coherence(psi: np.ndarray, u_end: np.ndarray) -> np.ndarray:
    rot = psi @ u_end.T
    return rot[:, 1] * np.conj(rot[:, 0])


def _accumulated_phase(om, amp, phs, t_p) -> np.ndarray:
    return np.sum(amp / om * (np.sin(om * t_p + phs) - np.sin(phs)), axis=-1)


def _run(reals: list[NoiseRealization], loop: LoopSpec, b_lab, dt_max: float,
         dressed: bool) -> np.ndarray:
    n = max(len(r.omegas) for r in reals)
    m = len(reals)
    om = np.ones((m, n))
    amp = np.zeros((m, n))
    phs = np.zeros((m, n))
    for i, r in enumerate(reals):
        k = len(r.omegas)
        om[i, :k], amp[i, :k], phs[i, :k] = r.omegas, r.amplitudes, r.phases
    nsteps = max(int(math.ceil(loop.t_p / dt_max)), 1)
    h = loop.t_p / nsteps
    evec = _axis_at_nodes(loop, h, nsteps)
    psi0, u_end = _initial_state(loop)
    psi = _magnus_batch(om, amp, phs, evec, np.asarray(b_lab, float), h, nsteps, psi0)
    drift = np.abs(np.sum(np.abs(psi) ** 2, axis=1) - 1.0)
    if np.max(drift) > NORM_TOL:
        raise IntegrationError(f"norm drift {np.max(drift):.2e} exceeds {NORM_TOL}", loop.t_p)
    s = _coherence(psi, u_end)
    if dressed:
        s = s * np.exp(1j * _accumulated_phase(om, amp, phs, loop.t_p))
    return s


def integrate_realization(real: NoiseRealization, loop: LoopSpec, b_lab=(0.0, 0.0, 0.0),
                          dt_max: float = 0.005, dressed: bool = True) -> complex:
    """Rotating-frame coherence s'_+ at t_p for one noise realization (initially 1/2)."""
    return complex(_run([real], loop, b_lab, dt_max, dressed)[0])


def _phi_d(mean: complex) -> tuple[float, float]:
    return -math.atan2(mean.imag, mean.real), -math.log(abs(mean) / 0.5)


def ensemble_average(model: SpectralModel, loop: LoopSpec, b_lab=(0.0, 0.0, 0.0),
                     n_modes: int = 64, n_realizations: int = 4000, base_seed: int = 0,
                     dt_max: float | None = None, n_bootstrap: int = 200,
                     chunk: int = 250, dressed: bool = True,
                     keep_samples: bool = False) -> EnsembleEstimate:
    """Average s'_+ over realizations; phase and dephasing with bootstrap errors.

    phi_mc is reported in (-pi, pi].
    """
    if n_realizations < 100:
        raise ConfigurationError("n_realizations must be at least 100")
    sampler = ModeSampler(model, n_modes)
    dt = default_dt(sampler) if dt_max is None else float(dt_max)
    s = np.empty(n_realizations, complex)
    for start in range(0, n_realizations, chunk):
        idx = range(start, min(start + chunk, n_realizations))
        reals = [sampler.sample(base_seed, i) for i in idx]
        s[start:start + len(reals)] = _run(reals, loop, b_lab, dt, dressed)
    mean = complex(np.mean(s))
    phi, d = _phi_d(mean)
    boot = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(base_seed),
                                                                       spawn_key=(2**32,))))
    bm = np.array([np.mean(s[boot.integers(0, n_realizations, n_realizations)])
                   for _ in range(n_bootstrap)])
    dphi = np.angle(bm / mean)
    dd = -np.log(np.abs(bm) / abs(mean))
    return EnsembleEstimate(mean, float(wrap_angle(phi)), d, float(np.std(dphi, ddof=1)),
                            float(np.std(dd, ddof=1)), n_realizations, sampler.n_modes, dt,
                            s if keep_samples else None)


def zero_noise_control(loop: LoopSpec, b_lab=(0.0, 0.0, 0.0), dt_max: float = 0.01) -> dict:
    """Coherence with the environment switched off; the spin does not follow the axis."""
    real = NoiseRealization(np.array([1.0]), np.array([0.0]), np.array([0.0]), 0)
    s = integrate_realization(real, loop, b_lab, dt_max)
    phase = -math.atan2(s.imag, s.real)
    area = solid_angle(loop)
    return {"s_plus": s, "phase": phase, "solid_angle": area,
            "deviation": abs(wrap_angle(phase - area))}
