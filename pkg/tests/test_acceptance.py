"""Acceptance criteria, each run at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line (plus indented diagnostics),
which pytest prints in an "acceptance criteria" summary section, and then
asserts.  Run ``python tests/test_acceptance.py`` for the summary alone.
Some criteria fail by design of the implementation: the reference constants
they compare against do not match the kernel the integrator uses.  Those
tests are left failing rather than loosened.
"""

import math
import time

import numpy as np
import pytest

from envberry.decompose import fit_power_law, fit_scaling
from envberry.evolve import (
    RunConfig, closed_form_components, integrate_coherence, predict_closed_form,
)
from envberry.geometry import LoopSpec, berry_phase, solid_angle, time_integral, wrap_angle
from envberry.kernel import FNodes, f_exact, i_integral, im_closed, re_closed
from envberry.oracle import ensemble_average, zero_noise_control
from envberry.spectral import (
    CouplingConstants, SpectralModel, chi_moment, coupling_constants, point_mass,
)

CAP = LoopSpec("cap", theta0=math.pi / 3, t_p=300.0)
CL25 = point_mass(25.0, regime="classical")
TP_GRID = np.geomspace(100.0, 1000.0, 8)


# collected lines are printed in the terminal summary by conftest.py
RESULTS: dict[int, list[str]] = {}


def report(number, title, passed, detail, diagnostics=()):
    lines = [f"AC{number} {'PASS' if passed else 'FAIL'} {title}: {detail}"]
    lines += [f"    {d}" for d in diagnostics]
    RESULTS[number] = lines
    print("\n".join(lines))
    return passed


def geometric_offset(phi, loop):
    return wrap_angle(phi - berry_phase(loop))


# ---------------------------------------------------------------------------
def test_ac1_berry_phase_recovery():
    cfg = RunConfig(CL25, CAP)
    t0 = time.perf_counter()
    res = integrate_coherence(cfg)
    elapsed = time.perf_counter() - t0
    na2 = closed_form_components(cfg)["phi_na2"]
    dev = abs(wrap_angle(res.phi_total - (math.pi + na2)))
    ok = dev <= 0.2 * abs(na2) and elapsed < 10.0
    kern = closed_form_components(cfg, rates="kernel")["phi_na2"]
    report(1, "Berry phase recovery", ok,
           f"|phi - (pi + Phi_NA2)| = {dev:.3e} vs tol {0.2 * abs(na2):.3e}; {elapsed:.2f} s",
           [f"redfield phi_total = {res.phi_total:.10f} (mod 2pi offset from pi: "
            f"{wrap_angle(res.phi_total - math.pi):.4e})",
            f"Phi_NA2 with reference gamma2 = {na2:.4e}; with kernel gamma2 = {kern:.4e}",
            f"kernel-consistent check: |phi - (pi + Phi_NA2_kernel)| = "
            f"{abs(wrap_angle(res.phi_total - math.pi - kern)):.3e}"])
    assert ok


def _redfield_family(model, loop, b=(0.0, 0.0, 0.0), grid=TP_GRID):
    phi, d = [], []
    for tp in grid:
        r = integrate_coherence(RunConfig(model, loop.with_tp(tp), b))
        phi.append(r.phi_total)
        d.append(r.d_total)
    return np.array(phi), np.array(d)


def test_ac2_scaling_exponents():
    t0 = time.perf_counter()
    phi, d = _redfield_family(CL25, CAP)
    elapsed = time.perf_counter() - t0
    off = np.array([geometric_offset(p, CAP) for p in phi])
    pl_phi = fit_power_law(TP_GRID, off)
    pl_d = fit_power_law(TP_GRID, d)
    aligned = berry_phase(CAP) + off
    fit = fit_scaling(np.column_stack([TP_GRID, aligned]), nuisance=(-3, -4))
    c, se = fit.coefficients, fit.stderr
    dyn_ok = abs(c[1]) <= 2 * se[1]
    na1_ok = abs(c[-1]) <= 2 * se[-1]
    ok = (abs(pl_phi.exponent + 2) <= 0.15 and abs(pl_d.exponent + 1) <= 0.10
          and dyn_ok and na1_ok and elapsed < 60.0)
    report(2, "scaling exponents", ok,
           f"exp(phi - A) = {pl_phi.exponent:.5f}, exp(d) = {pl_d.exponent:.5f}; "
           f"{elapsed:.2f} s",
           [f"Phi_dyn coef = {c[1]:.3e} +- {se[1]:.3e} ({'ok' if dyn_ok else 'not within 2 SE'})",
            f"Phi_NA1 coef = {c[-1]:.3e} +- {se[-1]:.3e} ({'ok' if na1_ok else 'not within 2 SE'})",
            "fit basis t_p^(1,0,-1,-2) plus unlabelled t_p^-3, t_p^-4 columns"])
    assert ok


@pytest.mark.slow
def test_ac3_monte_carlo_agreement():
    model = SpectralModel(width=0.2, weight=25.0, regime="classical", beta_omega_m=0.0)
    cfg = RunConfig(model, CAP)
    t0 = time.perf_counter()
    est = ensemble_average(model, CAP, n_modes=64, n_realizations=4000, base_seed=2024)
    elapsed = time.perf_counter() - t0
    pred = predict_closed_form(cfg)
    area = solid_angle(CAP)
    dphi = abs(wrap_angle(est.phi_mc - pred.phi_total))
    phi_ok = dphi <= 3 * est.stderr_phi and dphi <= 0.02 * area
    d_ref = pred.d_total  # gamma1 times the integral of omega_perp^2
    dd = abs(est.d_mc - d_ref)
    d_ok = dd <= 3 * est.stderr_d and dd <= 0.05 * d_ref
    kern = predict_closed_form(cfg, rates="kernel")
    red = integrate_coherence(cfg)
    report(3, "Monte-Carlo agreement", phi_ok and d_ok,
           f"|dphi| = {dphi:.3e} (3se {3 * est.stderr_phi:.3e}, 2%A {0.02 * area:.3e}) "
           f"{'ok' if phi_ok else 'FAIL'}; |dd| = {dd:.3e} (3se {3 * est.stderr_d:.3e}, "
           f"5% {0.05 * d_ref:.3e}) {'ok' if d_ok else 'FAIL'}",
           [f"oracle: phi = {est.phi_mc:.6f} +- {est.stderr_phi:.2e}, "
            f"d = {est.d_mc:.5f} +- {est.stderr_d:.2e}, M = {est.n_realizations}, "
            f"dt = {est.dt:.4g}, {elapsed:.1f} s",
            f"reference closed form: d = {d_ref:.5f}",
            f"kernel-consistent closed form: d = {kern.d_total:.5f} "
            f"({abs(est.d_mc - kern.d_total) / est.stderr_d:.2f} se from oracle)",
            f"redfield: phi = {red.phi_total:.6f}, d = {red.d_total:.5f} "
            f"({abs(est.d_mc - red.d_total) / est.stderr_d:.2f} se from oracle)"])
    assert phi_ok and d_ok


def test_ac4_headline_numbers():
    # integrated noise power G W_m^2 with G = 25, W_m = 1: sqrt(G) W_m t_p = 31
    t_p = 31.0 / 5.0
    theta0 = math.asin(1.0 / (2 * math.pi))  # omega_perp t_p = 1
    loop = LoopSpec("cap", theta0=theta0, t_p=t_p)
    cfg = RunConfig(CL25, loop)
    d = predict_closed_form(cfg).d_total
    target = 10 ** -1.5
    mag_ok = target / 2 <= d <= 2 * target
    sup_ok = 0.96 <= math.exp(-d) <= 0.98
    kd = predict_closed_form(cfg, rates="kernel").d_total
    report(4, "headline numbers", mag_ok and sup_ok,
           f"D = {d:.4f} vs 10^-1.5 = {target:.4f} (x2 band {'ok' if mag_ok else 'missed'}); "
           f"exp(-D) = {math.exp(-d):.4f} ({'in' if sup_ok else 'outside'} [0.96, 0.98])",
           [f"omega_perp t_p = {time_integral(loop, lambda f: f.omega_perp) :.4f}, "
            f"sqrt(G) W_m t_p = {math.sqrt(25.0) * t_p:.1f}",
            f"kernel-consistent D = {kd:.4f}, exp(-D) = {math.exp(-kd):.4f}"])
    assert mag_ok and sup_ok


def test_ac5_kernel_identities():
    c9 = coupling_constants(point_mass(9.0))
    re_err = max(abs(i_integral(c9, b).real / re_closed(c9, b) - 1) for b in (0.0, 0.05, -0.05))
    re_ok = re_err <= 1e-4

    im_worst = 0.0
    im_ok = True
    for G, chi in [(9.0, 1.0), (5.0, 1.0), (25.0, 1.0), (12.0, 1.5), (50.0, 1.2)]:
        cc = CouplingConstants(G, (1.0, chi, 1.0, 1.0, 1.0), G, 1.0, 0.0, 1.0, "quantum")
        for b in (0.0, 0.05, -0.05):
            r = abs(i_integral(cc, b).imag / im_closed(cc, b) - 1)
            bound = 2 / (G * chi)
            im_worst = max(im_worst, r / bound)
            im_ok &= r <= bound

    rng = np.random.default_rng(5)
    chi2_err = 0.0
    for _ in range(20):
        m = SpectralModel(kind=str(rng.choice(["gaussian_bump", "lorentzian_bump"])),
                          center=float(rng.uniform(0.5, 3.0)), width=float(rng.uniform(0.01, 0.4)),
                          weight=float(rng.uniform(0.5, 40.0)), omega_m=float(rng.uniform(0.2, 5)),
                          beta_omega_m=float(rng.choice([math.inf, rng.uniform(0.5, 20.0)])))
        chi2_err = max(chi2_err, abs(chi_moment(m, 2) - 1))
    chi2_ok = chi2_err <= 1e-8

    models = [SpectralModel(width=0.1, weight=9.0),
              SpectralModel(width=0.3, weight=9.0, beta_omega_m=1.5),
              SpectralModel(width=0.3, weight=9.0, regime="classical", beta_omega_m=0.0)]
    f0_err = max(abs(f_exact(m, 0.0) - coupling_constants(m).franck_condon_f) for m in models)
    f0_ok = f0_err <= 1e-10
    exp_err = 0.0
    for m in models:
        cm = coupling_constants(m)
        fn = FNodes(m)
        h = 1e-3
        d1 = (fn(h) - fn(-h)) / (2 * h)
        d2 = (fn(h) - 2 * fn(0.0) + fn(-h)) / h**2
        # f ~ F - i G chi_1 s - G s^2 / 2
        g_from_f = -d2.real
        chi1_from_f = -d1.imag / g_from_f
        exp_err = max(exp_err, abs(g_from_f / cm.g_dis - 1), abs(chi1_from_f - cm.chi[1]))
    exp_ok = exp_err <= 1e-6

    ok = re_ok and im_ok and chi2_ok and f0_ok and exp_ok
    report(5, "kernel identities", ok,
           f"ReI {'ok' if re_ok else 'FAIL'} (rel err {re_err:.3e}); "
           f"ImI {'ok' if im_ok else 'FAIL'} (worst {im_worst:.2f} of bound); "
           f"chi2 {'ok' if chi2_ok else 'FAIL'} ({chi2_err:.1e}); "
           f"f(0) {'ok' if f0_ok else 'FAIL'} ({f0_err:.1e}); "
           f"expansion {'ok' if exp_ok else 'FAIL'} ({exp_err:.1e})",
           [f"Re I quadrature / closed form at b=0: "
            f"{i_integral(c9, 0.0).real / re_closed(c9, 0.0):.8f} "
            f"(closed form equals the full-line integral)"])
    assert ok


def test_ac6_quantum_suppression():
    q = point_mass(50.0)  # G chi_1^2 = 50
    cl = point_mass(50.0, regime="classical")
    q_na1 = [closed_form_components(RunConfig(q, CAP.with_tp(tp)))["d_na1"] for tp in TP_GRID]
    q_ok = max(q_na1) <= 1e-9
    d_cl = [predict_closed_form(RunConfig(cl, CAP.with_tp(tp))).d_total for tp in TP_GRID]
    fit = fit_scaling(np.column_stack([TP_GRID, d_cl]), exponents=(1, 0, -1))
    g1 = coupling_constants(cl).gamma1
    ref = g1 * time_integral(CAP, lambda f: f.omega_perp**2) * CAP.t_p
    rel = abs(fit.coefficients[-1] / ref - 1)
    cl_ok = rel <= 0.05
    report(6, "quantum dephasing suppression", q_ok and cl_ok,
           f"max quantum D_NA1 = {max(q_na1):.3e} (<= 1e-9); classical D_NA1 coef "
           f"{fit.coefficients[-1]:.5f} vs {ref:.5f} (rel {rel:.1e})")
    assert q_ok and cl_ok


def test_ac7_finite_field_ledger():
    loop = LoopSpec("static", theta0=0.7, phi0=0.4, t_p=300.0)
    bz = 0.5 / 300.0
    b = tuple(bz * loop.axis(0.0))
    phi, _ = _redfield_family(CL25, loop, b)
    fit = fit_scaling(np.column_stack([TP_GRID, phi]))
    dyn_rel = abs(fit.coefficients[1] * 300.0 / 0.5 - 1)
    dyn_ok = dyn_rel <= 0.01

    b_tilt = (0.004, 0.0, 0.008)
    _, d = _redfield_family(CL25, CAP, b_tilt)
    dfit = fit_scaling(np.column_stack([TP_GRID, d]), exponents=(1, 0, -1), nuisance=(-2, -3))
    d_bp, se = dfit.coefficients[0], dfit.stderr[0]
    ref = closed_form_components(RunConfig(CL25, CAP, b_tilt))["d_bp"]
    kref = closed_form_components(RunConfig(CL25, CAP, b_tilt), rates="kernel")["d_bp"]
    bp_ok = abs(d_bp - ref) <= 2 * se
    report(7, "finite-field ledger", dyn_ok and bp_ok,
           f"Phi_dyn t_p/0.5 - 1 = {dyn_rel:.1e} ({'ok' if dyn_ok else 'FAIL'}); "
           f"fitted D_BP = {d_bp:.5e} +- {se:.1e} vs quadrature {ref:.5e} "
           f"({'ok' if bp_ok else 'FAIL'})",
           [f"kernel-constant D_BP quadrature = {kref:.5e} "
            f"(relative difference from fit {abs(d_bp / kref - 1):.1e})"])
    assert dyn_ok and bp_ok


def test_ac8_negative_control():
    out = zero_noise_control(CAP)
    ok = out["deviation"] > 0.3
    report(8, "negative control", ok,
           f"noise-free phase {out['phase']:.4f}, |phase - A| = {out['deviation']:.4f} (> 0.3)")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
