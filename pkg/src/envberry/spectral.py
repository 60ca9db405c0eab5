"""Spectral densities of the environment and the coupling constants derived from them.

Frequencies are measured in units of ``omega_m``; the density j(x) lives on the
dimensionless axis x = Omega / Omega_m.  Quantum models carry an inverse
temperature ``beta_omega_m`` (``inf`` means zero temperature); classical models
describe noise power and always have ``beta_omega_m == 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import ConfigurationError, NonIntegrableMomentError, RegimeError

KINDS = ("gaussian_bump", "lorentzian_bump", "tabulated")
REGIMES = ("quantum", "classical")

# default window half-widths, in units of the bump width
DEFAULT_CUTOFF = {"gaussian_bump": 12.0, "lorentzian_bump": 8.0}
# a bump window never reaches below this fraction of its centre
_EDGE_FRACTION = 1e-3

_EPSABS = 1e-13
_EPSREL = 1e-12

FLAG_GAUSSIAN_KERNEL = "gaussian_kernel_ok"
FLAG_SUPPRESSION = "exponential_dephasing_suppression_ok"
FLAG_FRANCK_CONDON = "franck_condon_large"
WARN_WEAK_COUPLING = "weak_coupling"


@dataclass(frozen=True)
class SpectralModel:
    """Coupling density j(x) = scale * x**x_power * base(x).

    ``base`` is a bump (or a table) normalised so that its integral is ``weight``.
    The extra ``scale`` and ``x_power`` factors exist so that the
    quantum/classical substitution j = beta*x*j_cl can be done exactly.
    A gaussian bump of zero width is a point mass at ``center``.

    Bump windows are ``center +- cutoff*width`` but are pulled in so the lower
    edge stays above ``1e-3*center``; the bump is renormalised over the window.
    """

    kind: str = "gaussian_bump"
    center: float = 1.0
    width: float = 0.1
    weight: float = 1.0
    omega_m: float = 1.0
    beta_omega_m: float = math.inf
    regime: str = "quantum"
    table: tuple[tuple[float, float], ...] | None = None
    cutoff: float | None = None
    x_power: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown spectral kind {self.kind!r}")
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if not self.omega_m > 0:
            raise ConfigurationError("omega_m must be positive")
        if self.weight < 0 or self.scale < 0:
            raise ConfigurationError("weight and scale must be non-negative")
        if self.regime == "classical" and self.beta_omega_m != 0:
            raise ConfigurationError("classical models must have beta_omega_m == 0")
        if self.regime == "quantum" and not self.beta_omega_m > 0:
            raise ConfigurationError("quantum models need beta_omega_m > 0")
        if self.kind == "tabulated":
            if self.table is None or len(self.table) < 2:
                raise ConfigurationError("tabulated model needs at least two (x, j) rows")
            xs = np.array([r[0] for r in self.table], float)
            js = np.array([r[1] for r in self.table], float)
            if np.any(xs < 0) or np.any(np.diff(xs) <= 0):
                raise ConfigurationError("tabulated abscissae must be non-negative and strictly increasing")
            if np.any(js < 0) or not np.all(np.isfinite(js)):
                raise ConfigurationError("tabulated density must be finite and non-negative")
        else:
            if not self.center > 0:
                raise ConfigurationError("bump center must be positive")
            if self.width < 0:
                raise ConfigurationError("bump width must be non-negative")
            if self.kind == "lorentzian_bump" and self.width == 0:
                raise ConfigurationError("lorentzian bump needs a positive width")

    # -- geometry of the support -------------------------------------------
    @property
    def is_point_mass(self) -> bool:
        return self.kind == "gaussian_bump" and self.width == 0

    def support(self) -> tuple[float, float]:
        if self.kind == "tabulated":
            xs, js = self._table_arrays()
            nz = np.nonzero(js)[0]
            if nz.size == 0:
                return float(xs[0]), float(xs[-1])
            lo = max(nz[0] - 1, 0)
            hi = min(nz[-1] + 1, len(xs) - 1)
            return float(xs[lo]), float(xs[hi])
        if self.is_point_mass:
            return self.center, self.center
        half = self._half_window()
        return self.center - half, self.center + half

    def _half_window(self) -> float:
        k = self.cutoff if self.cutoff is not None else DEFAULT_CUTOFF[self.kind]
        return min(k * self.width, self.center * (1.0 - _EDGE_FRACTION))

    def _table_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        arr = np.asarray(self.table, float)
        return arr[:, 0], arr[:, 1]

    def breakpoints(self) -> list[float]:
        """Points where the density has a kink (useful for quadrature)."""
        if self.kind == "tabulated":
            a, b = self.support()
            xs, _ = self._table_arrays()
            return [float(x) for x in xs if a < x < b]
        return [self.center]

    def _bump_mass(self) -> float:
        h = self._half_window()
        if self.kind == "gaussian_bump":
            return float(special.erf(h / (self.width * math.sqrt(2.0))))
        return float(2.0 / math.pi * math.atan(h / self.width))

    def base(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.kind == "tabulated":
            xs, js = self._table_arrays()
            out = np.interp(x, xs, js, left=0.0, right=0.0)
            return np.where(x > 0, out, 0.0)
        if self.is_point_mass:
            return np.zeros_like(x)
        a, b = self.support()
        u = (x - self.center) / self.width
        if self.kind == "gaussian_bump":
            shape = np.exp(-0.5 * u * u) / (self.width * math.sqrt(2.0 * math.pi))
        else:
            shape = 1.0 / (math.pi * self.width * (1.0 + u * u))
        inside = (x >= a) & (x <= b) & (x > 0)
        return np.where(inside, self.weight * shape / self._bump_mass(), 0.0)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = self.scale * np.where(x > 0, np.abs(x) ** self.x_power, 0.0)
        return np.where(x > 0, fac * self.base(x), 0.0)

    def _leading_power(self) -> int | None:
        """Power m with j ~ x**m as x -> 0+, or None when j vanishes near 0."""
        a, _ = self.support()
        if a > 0 or self.is_point_mass:
            return None
        if self.kind == "tabulated":
            _, js = self._table_arrays()
            return self.x_power + (0 if js[0] > 0 else 1)
        return self.x_power


def eval_density(model: SpectralModel, x) -> np.ndarray | float:
    """j(x); zero for x <= 0."""
    out = model.density(x)
    return float(out) if np.ndim(out) == 0 else out


def load_table(path: str | Path) -> tuple[tuple[float, float], ...]:
    """Read a two-column (x, j) CSV; a header row is allowed."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise ConfigurationError(f"bad row in {path}: {rec}")
    if len(rows) < 2:
        raise ConfigurationError(f"{path}: need at least two rows")
    return tuple(rows)


def _coth_half(beta: float, x):
    if math.isinf(beta):
        return np.ones_like(np.asarray(x, float))
    return 1.0 / np.tanh(0.5 * beta * np.asarray(x, float))


def integrate_density(model: SpectralModel, g: Callable[[np.ndarray], np.ndarray]) -> float:
    """Integral of j(x) g(x) over the support."""
    if model.is_point_mass:
        x0 = model.center
        return float(model.scale * model.weight * x0**model.x_power * g(np.array(x0)))
    a, b = model.support()
    if b <= a:
        return 0.0

    def f(x):
        return float(model.density(x) * g(np.array(x)))

    if model.kind == "tabulated":
        xs, _ = model._table_arrays()
        nodes = [a] + [float(x) for x in xs if a < x < b] + [b]
        return float(sum(
            integrate.quad(f, lo, hi, epsabs=_EPSABS, epsrel=_EPSREL, limit=200)[0]
            for lo, hi in zip(nodes[:-1], nodes[1:])
        ))
    pts = [p for p in model.breakpoints() if a < p < b]
    val, _ = integrate.quad(f, a, b, points=pts or None, epsabs=_EPSABS,
                            epsrel=_EPSREL, limit=500)
    return float(val)


def _moment_weight(model: SpectralModel, n: int):
    """Weight function x**(n-2) [bracket] for chi_n, and its small-x power."""
    quantum_even = model.regime == "quantum" and n % 2 == 0
    finite_t = quantum_even and not math.isinf(model.beta_omega_m)
    extra = -1 if finite_t else 0
    beta = model.beta_omega_m

    def w(x):
        out = np.asarray(x, float) ** (n - 2)
        if quantum_even:
            out = out * _coth_half(beta, x)
        return out

    return w, n - 2 + extra


def _raw_moment(model: SpectralModel, n: int) -> float:
    if model.regime == "classical" and n % 2 == 1:
        return 0.0
    w, power = _moment_weight(model, n)
    lead = model._leading_power()
    if lead is not None and model.weight > 0 and power + lead <= -1:
        raise NonIntegrableMomentError(n, power + lead)
    return integrate_density(model, w)


def g_dis(model: SpectralModel) -> float:
    """Dimensionless coupling: integral of j coth(beta x/2) (quantum) or of j_cl (classical)."""
    return _raw_moment(model, 2)


def chi_moment(model: SpectralModel, n: int) -> float:
    if n not in range(5):
        raise ConfigurationError("chi moments are defined for n in 0..4")
    if model.regime == "classical" and n % 2 == 1:
        return 0.0
    g = g_dis(model)
    if g <= 0:
        raise ConfigurationError("density has zero weight; chi moments undefined")
    return _raw_moment(model, n) / g


@dataclass(frozen=True)
class CouplingConstants:
    g_dis: float
    chi: tuple[float, float, float, float, float]
    franck_condon_f: float
    gamma1: float
    gamma2: float
    omega_m: float
    regime: str
    validity: frozenset = field(default_factory=frozenset)
    warnings: tuple[str, ...] = ()

    @property
    def chi1(self) -> float:
        return self.chi[1]

    @property
    def suppression(self) -> float:
        """Exponential factor exp(-G chi_1^2 / 2) multiplying the dephasing rate."""
        return math.exp(-0.5 * self.g_dis * self.chi[1] ** 2)

    def as_dict(self) -> dict:
        return {
            "g_dis": self.g_dis,
            "chi": list(self.chi),
            "franck_condon_f": self.franck_condon_f,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "omega_m": self.omega_m,
            "regime": self.regime,
            "validity": {flag: flag in self.validity for flag in
                         (FLAG_GAUSSIAN_KERNEL, FLAG_SUPPRESSION, FLAG_FRANCK_CONDON)},
            "warnings": list(self.warnings),
        }


def coupling_constants(model: SpectralModel) -> CouplingConstants:
    g = g_dis(model)
    if not g > 0:
        raise ConfigurationError("g_dis must be positive")
    chi = tuple(_raw_moment(model, n) / g for n in range(5))
    om = model.omega_m
    gamma1 = math.sqrt(2.0 * math.pi / g) / om
    if model.regime == "quantum":
        gamma2 = (2.0 * om * g * chi[1]) ** -2
    else:
        gamma2 = 1.0 / (2.0 * om**2 * g**2)
    fc = chi[0] * g

    flags = set()
    if model.regime == "quantum":
        if chi[3] <= 0.3 * math.sqrt(g):
            flags.add(FLAG_GAUSSIAN_KERNEL)
    elif chi[4] <= 0.3 * g:
        flags.add(FLAG_GAUSSIAN_KERNEL)
    if g * chi[1] ** 2 >= 20:
        flags.add(FLAG_SUPPRESSION)
    if fc >= 10:
        flags.add(FLAG_FRANCK_CONDON)
    warnings = (WARN_WEAK_COUPLING,) if g <= 1 else ()
    return CouplingConstants(g, chi, fc, gamma1, gamma2, om, model.regime,
                             frozenset(flags), warnings)


def classical_limit(model: SpectralModel) -> SpectralModel:
    """Classical twin with j_cl(x) = j(x) / (beta x), evaluated at the stored beta."""
    if model.regime != "quantum":
        raise RegimeError("classical_limit expects a quantum model")
    if math.isinf(model.beta_omega_m):
        raise RegimeError("classical limit undefined at zero temperature")
    return replace(model, regime="classical", beta_omega_m=0.0,
                   scale=model.scale / model.beta_omega_m, x_power=model.x_power - 1)


def quantum_from_classical(model: SpectralModel, beta_omega_m: float) -> SpectralModel:
    """Quantum model with j(x) = beta x j_cl(x); inverse of :func:`classical_limit`."""
    if model.regime != "classical":
        raise RegimeError("expected a classical model")
    return replace(model, regime="quantum", beta_omega_m=beta_omega_m,
                   scale=model.scale * beta_omega_m, x_power=model.x_power + 1)


def discrete_continuum_ratios(couplings: Sequence[float], freqs: Sequence[float],
                              beta_omega_m: float = math.inf,
                              omega_m: float = 1.0) -> dict[str, float]:
    """Ratio of the discrete-mode definitions of G_dis and F to the continuum ones.

    Discrete: G = sum K^2 coth / Omega_m^2 and F = (1/2) sum (K/Omega)^2 coth.
    Continuum: the same sums after replacing sum pi K^2 (...) by an integral
    over J.  The ratios come out as 1/pi and 1/(2 pi) for every mode set.
    """
    k = np.asarray(couplings, float)
    w = np.asarray(freqs, float)
    coth = _coth_half(beta_omega_m, w / omega_m)
    g_disc = np.sum(k**2 * coth) / omega_m**2
    f_disc = 0.5 * np.sum((k / w) ** 2 * coth)
    g_cont = math.pi * np.sum(k**2 * coth) / omega_m**2
    f_cont = math.pi * np.sum(k**2 * coth / w**2)
    return {"g_dis": float(g_disc / g_cont), "franck_condon_f": float(f_disc / f_cont)}


def point_mass(weight: float, regime: str = "quantum", center: float = 1.0,
               omega_m: float = 1.0, beta_omega_m: float | None = None) -> SpectralModel:
    if beta_omega_m is None:
        beta_omega_m = 0.0 if regime == "classical" else math.inf
    return SpectralModel("gaussian_bump", center=center, width=0.0, weight=weight,
                         omega_m=omega_m, beta_omega_m=beta_omega_m, regime=regime)


def from_dict(d: dict, base_dir: str | Path | None = None) -> SpectralModel:
    """Build a model from a config table; ``table`` may name a CSV file."""
    d = dict(d)
    allowed = {f for f in SpectralModel.__dataclass_fields__}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(f"unknown model keys: {sorted(unknown)}")
    if "beta_omega_m" in d:
        d["beta_omega_m"] = _parse_beta(d["beta_omega_m"])
    elif d.get("regime") == "classical":
        d["beta_omega_m"] = 0.0
    tab = d.get("table")
    if isinstance(tab, str):
        p = Path(tab)
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        d["table"] = load_table(p)
    elif tab is not None:
        d["table"] = tuple((float(a), float(b)) for a, b in tab)
    return SpectralModel(**d)


def _parse_beta(v) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity"):
            return math.inf
        return float(v)
    return float(v)


def to_dict(model: SpectralModel) -> dict:
    out = {}
    for name in SpectralModel.__dataclass_fields__:
        v = getattr(model, name)
        if name == "beta_omega_m" and math.isinf(v):
            v = "inf"
        if name == "table" and v is not None:
            v = [list(r) for r in v]
        out[name] = v
    return out

