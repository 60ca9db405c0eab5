"""Closed loops of the coupling axis and the rotating-frame fields they induce."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import ClosureError, ConfigurationError, DomainError

LOOP_KINDS = ("cap", "wobble", "piecewise_table", "static")
_CLOSURE_TOL = 1e-9


@dataclass(frozen=True)
class LoopSpec:
    """Path of the unit vector e(t) = (sin th cos ph, sin th sin ph, cos th).

    ``cap`` keeps theta fixed while phi runs once around; ``wobble`` adds
    ``wobble_amplitude * sin(wobble_harmonic * phi)`` to theta.  ``static`` holds
    the axis at (theta0, phi0).  ``piecewise_table`` interpolates rows
    (u, theta, phi) with u = t/t_p in [0, 1] by monotone cubics.
    ``direction = -1`` traverses the loop backwards.
    """

    kind: str = "cap"
    theta0: float = math.pi / 3
    t_p: float = 100.0
    wobble_amplitude: float = 0.0
    wobble_harmonic: int = 0
    phi0: float = 0.0
    direction: int = 1
    samples: tuple[tuple[float, float, float], ...] | None = None

    def __post_init__(self):
        if self.kind not in LOOP_KINDS:
            raise ConfigurationError(f"unknown loop kind {self.kind!r}")
        if not self.t_p > 0:
            raise ConfigurationError("t_p must be positive")
        if self.direction not in (1, -1):
            raise ConfigurationError("direction must be +1 or -1")
        if self.kind == "piecewise_table":
            self._check_table()
        else:
            lo = self.theta0 - abs(self.wobble_amplitude) if self.kind == "wobble" else self.theta0
            hi = self.theta0 + abs(self.wobble_amplitude) if self.kind == "wobble" else self.theta0
            if lo < 0 or hi > math.pi:
                raise ConfigurationError("theta must stay within [0, pi]")

    def _check_table(self):
        if self.samples is None or len(self.samples) < 3:
            raise ConfigurationError("piecewise_table loop needs at least three samples")
        arr = np.asarray(self.samples, float)
        u, th, ph = arr.T
        if abs(u[0]) > 1e-12 or abs(u[-1] - 1) > 1e-12 or np.any(np.diff(u) <= 0):
            raise ConfigurationError("table times must increase strictly from 0 to 1")
        if np.any(th < 0) or np.any(th > math.pi):
            raise ConfigurationError("theta must stay within [0, pi]")
        if abs(th[-1] - th[0]) > _CLOSURE_TOL:
            raise ClosureError("theta(t_p) != theta(0)")
        k = (ph[-1] - ph[0]) / (2 * math.pi)
        if abs(k - round(k)) > _CLOSURE_TOL:
            raise ClosureError("phi(t_p) - phi(0) is not a multiple of 2 pi")

    def with_tp(self, t_p: float) -> "LoopSpec":
        return replace(self, t_p=float(t_p))

    def reversed(self) -> "LoopSpec":
        return replace(self, direction=-self.direction)

    def shape_key(self) -> tuple:
        """Everything except t_p; loops with equal keys are time-rescalings."""
        return (self.kind, self.theta0, self.wobble_amplitude, self.wobble_harmonic,
                self.phi0, self.direction, self.samples)

    # -- parametrisation ----------------------------------------------------
    def angles(self, t):
        """Return theta, phi and their time derivatives at times t."""
        t = np.asarray(t, float)
        tol = 1e-12 * self.t_p
        if np.any(t < -tol) or np.any(t > self.t_p + tol):
            raise DomainError(f"t outside [0, t_p={self.t_p}]")
        u = np.clip(t / self.t_p, 0.0, 1.0)
        if self.direction < 0:
            u = 1.0 - u
        d = float(self.direction)
        if self.kind == "piecewise_table":
            th_i, ph_i = _table_interpolants(self.samples)
            th, ph = th_i(u), ph_i(u)
            thd = d * th_i.derivative()(u) / self.t_p
            phd = d * ph_i.derivative()(u) / self.t_p
            return th, ph, thd, phd
        if self.kind == "static":
            z = np.zeros_like(u)
            return z + self.theta0, z + self.phi0, z, z
        rate = 2 * math.pi / self.t_p
        ph = self.phi0 + 2 * math.pi * u
        phd = np.full_like(u, d * rate)
        if self.kind == "cap":
            return np.full_like(u, self.theta0), ph, np.zeros_like(u), phd
        k, a = self.wobble_harmonic, self.wobble_amplitude
        th = self.theta0 + a * np.sin(k * (ph - self.phi0))
        thd = a * k * np.cos(k * (ph - self.phi0)) * phd
        return th, ph, thd, phd

    def axis(self, t) -> np.ndarray:
        th, ph, _, _ = self.angles(t)
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)


_INTERP_CACHE: dict = {}


def _table_interpolants(samples):
    key = samples
    if key not in _INTERP_CACHE:
        arr = np.asarray(samples, float)
        _INTERP_CACHE[key] = (PchipInterpolator(arr[:, 0], arr[:, 1]),
                              PchipInterpolator(arr[:, 0], arr[:, 2]))
    return _INTERP_CACHE[key]


def load_loop_table(path: str | Path) -> tuple[tuple[float, float, float], ...]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append(tuple(float(v) for v in rec[:3]))
            except ValueError:
                if rows:
                    raise ConfigurationError(f"bad row in {path}: {rec}")
    return tuple(rows)


@dataclass(frozen=True)
class FrameField:
    omega_x: np.ndarray
    omega_y: np.ndarray
    omega_z: np.ndarray
    b_x: np.ndarray
    b_y: np.ndarray
    b_z: np.ndarray

    @property
    def omega_perp(self) -> np.ndarray:
        return np.hypot(self.omega_x, self.omega_y)

    @property
    def total_perp_sq(self) -> np.ndarray:
        """(omega_x + b_x)^2 + (omega_y + b_y)^2."""
        return (self.omega_x + self.b_x) ** 2 + (self.omega_y + self.b_y) ** 2

    @property
    def total_z(self) -> np.ndarray:
        return self.omega_z + self.b_z


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(a), np.ones_like(a)
    return np.stack([np.stack([c, -s, z], -1), np.stack([s, c, z], -1),
                     np.stack([z, z, o], -1)], -2)


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    z, o = np.zeros_like(a), np.ones_like(a)
    return np.stack([np.stack([c, z, s], -1), np.stack([z, o, z], -1),
                     np.stack([-s, z, c], -1)], -2)


def frame_rotation(theta, phi) -> np.ndarray:
    """SO(3) matrix carrying e(theta, phi) onto z: R_z(phi) R_y(-theta) R_z(-phi)."""
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    return _rz(phi) @ _ry(-theta) @ _rz(-phi)


def frame_unitary(theta: float, phi: float) -> np.ndarray:
    """The 2x2 unitary exp(-i phi sz/2) exp(i theta sy/2) exp(i phi sz/2)."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    zm = np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])
    zp = zm.conj()
    ry = np.array([[c, s], [-s, c]], complex)
    return zm @ ry @ zp


def frame_field(loop: LoopSpec, b_lab=(0.0, 0.0, 0.0), t=0.0) -> FrameField:
    """Rotating-frame angular velocity and field at time(s) t."""
    th, ph, thd, phd = loop.angles(t)
    st, ct = np.sin(th), np.cos(th)
    sp, cp = np.sin(ph), np.cos(ph)
    wx = -phd * st * cp - thd * sp
    wy = -phd * st * sp + thd * cp
    wz = -phd * (1.0 - ct)
    b = np.asarray(b_lab, float)
    if b.shape != (3,):
        raise ConfigurationError("b_lab must be a 3-vector")
    if np.any(b != 0):
        rb = frame_rotation(th, ph) @ b
        bx, by, bz = rb[..., 0], rb[..., 1], rb[..., 2]
    else:
        bx = by = bz = np.zeros_like(wz)
    return FrameField(wx, wy, wz, bx, by, bz)


def solid_angle(loop: LoopSpec) -> float:
    """Signed integral of (1 - cos theta) dphi around the loop."""
    if loop.kind == "static":
        return 0.0
    if loop.kind == "cap":
        return loop.direction * 2 * math.pi * (1 - math.cos(loop.theta0))

    def f(t):
        th, _, _, phd = loop.angles(t)
        return float((1 - np.cos(th)) * phd)

    pts = None
    if loop.kind == "piecewise_table":
        pts = [r[0] * loop.t_p for r in loop.samples[1:-1]]
        if loop.direction < 0:
            pts = [loop.t_p - p for p in pts]
    val, _ = integrate.quad(f, 0.0, loop.t_p, points=pts, epsabs=1e-13,
                            epsrel=1e-12, limit=1000)
    return float(val)


def berry_phase(loop: LoopSpec) -> float:
    """Geometric phase accumulated by the coherence, integral of omega_z dt = -solid angle."""
    return -solid_angle(loop)


def wrap_angle(x):
    """Map angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, float) + math.pi, 2 * math.pi) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def time_integral(loop: LoopSpec, func, b_lab=(0.0, 0.0, 0.0)) -> float:
    """Integral over one period of func(FrameField) (vectorised Gauss-Legendre panels)."""
    n_panels = 64 if loop.kind != "piecewise_table" else 8 * (len(loop.samples) - 1)
    edges = np.linspace(0.0, loop.t_p, n_panels + 1)
    if loop.kind == "piecewise_table":
        knots = np.array([r[0] for r in loop.samples]) * loop.t_p
        if loop.direction < 0:
            knots = loop.t_p - knots[::-1]
        edges = np.unique(np.concatenate([edges, knots]))
    x, w = np.polynomial.legendre.leggauss(16)
    lo, hi = edges[:-1, None], edges[1:, None]
    t = (0.5 * (hi - lo) * x + 0.5 * (hi + lo)).ravel()
    wt = (0.5 * (hi - lo) * w).ravel()
    ff = frame_field(loop, b_lab, t)
    return float(np.sum(wt * func(ff)))


def loop_from_dict(d: dict, base_dir: str | Path | None = None) -> LoopSpec:
    d = dict(d)
    unknown = set(d) - set(LoopSpec.__dataclass_fields__)
    if unknown:
        raise ConfigurationError(f"unknown loop keys: {sorted(unknown)}")
    s = d.get("samples")
    if isinstance(s, str):
        p = Path(s)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        d["samples"] = load_loop_table(p)
    elif s is not None:
        d["samples"] = tuple(tuple(float(v) for v in r) for r in s)
    return LoopSpec(**d)


def loop_to_dict(loop: LoopSpec) -> dict:
    out = {name: getattr(loop, name) for name in LoopSpec.__dataclass_fields__}
    if out["samples"] is not None:
        out["samples"] = [list(r) for r in out["samples"]]
    return out
