"""Scaling regressions over the loop period t_p and labelling of phase/dephasing parts.

A family of runs shares one loop shape and differs only in t_p.  Each
observable is fitted in the basis {t_p, 1, 1/t_p, 1/t_p^2}; the coefficients
are then read as dynamic, geometric and first/second non-adiabatic parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import FamilyMismatchError, FitError

EXPONENTS = (1, 0, -1, -2)
PHI_LABELS = {1: "phi_dyn", 0: "phi_bp", -1: "phi_na1", -2: "phi_na2"}
D_LABELS = {1: "d_dyn", 0: "d_bp", -1: "d_na1", -2: "d_na2"}


def _design(tp: np.ndarray, exponents, scale: float) -> np.ndarray:
    u = tp / scale
    return np.column_stack([u**k for k in exponents])


class PowerBasisRegressor(RegressorMixin, BaseEstimator):
    """Least squares in a basis of powers of a single positive feature.

    The feature is rescaled by its geometric mean before building the design
    matrix, which keeps the normal equations well conditioned; reported
    coefficients refer to the unscaled feature.
    """

    def __init__(self, exponents=EXPONENTS):
        self.exponents = exponents

    def fit(self, X, y, sample_weight=None):
        tp = np.asarray(X, float).reshape(-1)
        y = np.asarray(y, float).reshape(-1)
        exps = tuple(self.exponents)
        if tp.shape != y.shape:
            raise FitError("X and y lengths differ")
        if np.any(tp <= 0):
            raise FitError("t_p must be positive")
        n, p = len(np.unique(tp)), len(exps)
        if n < p:
            raise FitError(f"underdetermined: {n} distinct points for {p} basis functions")
        scale = float(np.exp(np.mean(np.log(tp))))
        A = _design(tp, exps, scale)
        w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, float)
        sw = np.sqrt(w)
        Aw, yw = A * sw[:, None], y * sw
        coef_s, _, _, sv = np.linalg.lstsq(Aw, yw, rcond=None)
        resid = yw - Aw @ coef_s
        dof = len(y) - p
        rss = float(resid @ resid)
        sigma2 = rss / dof if dof > 0 else 0.0
        cov_s = sigma2 * np.linalg.pinv(Aw.T @ Aw)
        conv = np.array([scale ** (-k) for k in exps])
        self.coef_ = coef_s * conv
        self.stderr_ = np.sqrt(np.clip(np.diag(cov_s), 0.0, None)) * conv
        self.rss_ = rss
        self.residual_ = math.sqrt(rss / len(y))
        self.condition_number_ = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
        self.scale_ = scale
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        tp = np.asarray(X, float).reshape(-1)
        return np.column_stack([tp**k for k in self.exponents]) @ self.coef_


@dataclass(frozen=True)
class ScalingFit:
    coefficients: dict[int, float]
    stderr: dict[int, float]
    residual: float
    tp_grid: tuple[float, ...]
    condition_number: float
    nuisance: tuple[int, ...] = ()

    def as_dict(self) -> dict:
        return {
            "coefficients": {str(k): v for k, v in self.coefficients.items()},
            "stderr": {str(k): v for k, v in self.stderr.items()},
            "residual": self.residual,
            "tp_grid": list(self.tp_grid),
            "condition_number": self.condition_number,
            "nuisance": list(self.nuisance),
        }


def fit_scaling(values, exponents=EXPONENTS, sigma=None, nuisance=()) -> ScalingFit:
    """Fit y(t_p) = sum_k c_k t_p^k.  ``values`` is a sequence of (t_p, y) pairs.

    ``nuisance`` adds higher inverse powers that are fitted but not labelled;
    they soak up the next order of a truncated expansion so it does not leak
    into the labelled coefficients.  ``sigma`` gives per-point uncertainties.
    """
    arr = np.asarray(values, float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("values must be (t_p, y) pairs")
    if len(arr) < 4:
        raise FitError("need at least 4 points")
    exps = tuple(exponents) + tuple(nuisance)
    weight = None if sigma is None else 1.0 / np.asarray(sigma, float) ** 2
    reg = PowerBasisRegressor(exps).fit(arr[:, 0], arr[:, 1], sample_weight=weight)
    return ScalingFit(dict(zip(exps, map(float, reg.coef_))),
                      dict(zip(exps, map(float, reg.stderr_))),
                      reg.residual_, tuple(map(float, arr[:, 0])), reg.condition_number_,
                      tuple(nuisance))


def precision_floor(tp, y, rel_precision: float) -> dict[int, float]:
    """Smallest coefficient per exponent resolvable with data known to rel_precision."""
    tp = np.asarray(tp, float)
    ymax = float(np.max(np.abs(y)))
    return {k: rel_precision * ymax / float(np.max(tp**k)) for k in (1, 0, -1, -2, -3, -4)}


@dataclass(frozen=True)
class PowerLaw:
    exponent: float
    exponent_stderr: float
    prefactor: float


def fit_power_law(tp, y) -> PowerLaw:
    """Slope of log|y| against log t_p by ordinary least squares."""
    x = np.log(np.asarray(tp, float))
    ly = np.log(np.abs(np.asarray(y, float)))
    if len(x) < 3:
        raise FitError("need at least 3 points for a power law")
    A = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    r = ly - A @ coef
    s2 = float(r @ r) / (len(x) - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    return PowerLaw(float(coef[0]), float(math.sqrt(cov[0, 0])), float(math.exp(coef[1])))


@dataclass
class Decomposition:
    phi: dict[str, float]
    phi_stderr: dict[str, float]
    d: dict[str, float]
    d_stderr: dict[str, float]
    berry_reference: float | None
    checks: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def as_dict(self) -> dict:
        return {"phi": self.phi, "phi_stderr": self.phi_stderr, "d": self.d,
                "d_stderr": self.d_stderr, "berry_reference": self.berry_reference,
                "checks": self.checks, "notes": self.notes, "ok": self.ok}


def _within(value: float, target: float, err: float, k: float, wrap: bool = False) -> bool:
    diff = value - target
    if wrap:
        diff = (diff + math.pi) % (2 * math.pi) - math.pi
    return abs(diff) <= k * err


def decompose_phases(phi_fit: ScalingFit, d_fit: ScalingFit, b_is_zero: bool = True,
                     berry_reference: float | None = None, k_sigma: float = 2.0,
                     phi_floor: dict[int, float] | None = None,
                     d_floor: dict[int, float] | None = None) -> Decomposition:
    """Label fit coefficients and check the zero-field expectations.

    The t_p^1 coefficient is a rate, so the labelled dynamic parts are
    coefficient times t_p (reported per unit t_p here).  The optional floors
    widen a check on exponent k to max(k_sigma*stderr, floor[k]); they matter
    for noise-free data whose fit residual sits at integrator precision.
    """
    phi_floor = phi_floor or {}
    d_floor = d_floor or {}
    def labelled(fit, labels, attr):
        return {labels[k]: v for k, v in getattr(fit, attr).items()
                if k in labels and k not in fit.nuisance}

    phi = labelled(phi_fit, PHI_LABELS, "coefficients")
    phi_se = labelled(phi_fit, PHI_LABELS, "stderr")
    d = labelled(d_fit, D_LABELS, "coefficients")
    d_se = labelled(d_fit, D_LABELS, "stderr")
    out = Decomposition(phi, phi_se, d, d_se, berry_reference)

    def check(name, val, target, err, floor=0.0, wrap=False):
        tol = max(k_sigma * err, floor)
        passed = _within(val, target, tol, 1.0, wrap)
        out.checks.append({"name": name, "value": val, "target": target,
                           "tolerance": tol, "pass": bool(passed)})

    if b_is_zero:
        check("phi_dyn == 0", phi.get("phi_dyn", 0.0), 0.0, phi_se.get("phi_dyn", 0.0),
              phi_floor.get(1, 0.0))
        check("phi_na1 == 0", phi.get("phi_na1", 0.0), 0.0, phi_se.get("phi_na1", 0.0),
              phi_floor.get(-1, 0.0))
        check("d_dyn == 0", d.get("d_dyn", 0.0), 0.0, d_se.get("d_dyn", 0.0), d_floor.get(1, 0.0))
        check("d_bp == 0", d.get("d_bp", 0.0), 0.0, d_se.get("d_bp", 0.0), d_floor.get(0, 0.0))
    else:
        out.notes.append("finite field: the t_p^0 phase coefficient carries O(gamma2 B^2) terms")
    if berry_reference is not None:
        check("phi_bp == berry phase (mod 2 pi)", phi.get("phi_bp", 0.0), berry_reference,
              phi_se.get("phi_bp", 0.0), phi_floor.get(0, 0.0), wrap=True)
    return out


def check_family(records) -> None:
    """Raise if records do not share one loop shape and field."""
    keys = {(r.get("method"), r["config_hash"]) for r in records}
    if len(keys) != 1:
        raise FamilyMismatchError(f"records come from {len(keys)} different loop families")


PHI_NUISANCE = (-3, -4)
D_NUISANCE = (-2, -3)


def _nuisance(n_points: int, n_labelled: int, extra) -> tuple[int, ...]:
    # keep at least two residual degrees of freedom
    return tuple(extra[: max(0, n_points - n_labelled - 2)])


def decompose_records(records, k_sigma: float = 2.0) -> dict:
    """Fit phase and dephasing of a run family (JSON records) and label them."""
    from .geometry import berry_phase, loop_from_dict

    records = sorted(records, key=lambda r: r["t_p"])
    if not records:
        raise FitError("no records")
    check_family(records)
    cfg = records[0]["config"]
    loop = loop_from_dict(cfg["loop"])
    b_zero = not any(cfg.get("field", {}).get("b_lab", [0, 0, 0]))
    ref = berry_phase(loop)
    tp = np.array([r["t_p"] for r in records])
    phi = np.unwrap(np.array([r["phi_total"] for r in records]))
    # align the unwrapped branch with the geometric reference
    phi += 2 * math.pi * round((ref - phi[-1]) / (2 * math.pi))
    dd = np.array([r["d_total"] for r in records])
    sig_phi = sig_d = None
    phi_floor = d_floor = None
    if all(r.get("stderr_phi") for r in records):
        sig_phi = [r["stderr_phi"] for r in records]
        sig_d = [r["stderr_d"] for r in records]
    else:
        prec = max(r.get("precision", 1e-10) for r in records)
        phi_floor = precision_floor(tp, phi, prec)
        d_floor = precision_floor(tp, dd, prec)
    n = len(np.unique(tp))
    pf = fit_scaling(np.column_stack([tp, phi]), sigma=sig_phi,
                     nuisance=_nuisance(n, 4, PHI_NUISANCE))
    dfit = fit_scaling(np.column_stack([tp, dd]), exponents=(1, 0, -1), sigma=sig_d,
                       nuisance=_nuisance(n, 3, D_NUISANCE))
    dec = decompose_phases(pf, dfit, b_is_zero=b_zero, berry_reference=ref, k_sigma=k_sigma,
                           phi_floor=phi_floor, d_floor=d_floor)
    return {"method": records[0].get("method"), "config_hash": records[0].get("config_hash"),
            "phi_fit": pf.as_dict(), "d_fit": dfit.as_dict(), "decomposition": dec.as_dict()}
