"""Command-line interface: ``envberry <subcommand> -c config.toml``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import OUTPUT_ENV, Config, load_config
from .decompose import decompose_records
from .errors import EnvBerryError
from .evolve import integrate_coherence, predict_closed_form
from .geometry import wrap_angle
from .kernel import kernel_exact, kernel_gaussian
from .oracle import ensemble_average
from .spectral import (FLAG_FRANCK_CONDON, FLAG_GAUSSIAN_KERNEL, WARN_WEAK_COUPLING,
                       coupling_constants)

log = logging.getLogger("envberry")

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2
METHODS = ("redfield", "closed_form", "oracle")


def _out_path(name: str | None) -> Path | None:
    if name is None:
        return None
    p = Path(name)
    base = os.environ.get(OUTPUT_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(payload, path: Path | None):
    text = json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def validity_problems(cfg: Config) -> list[str]:
    c = coupling_constants(cfg.model)
    problems = [w for w in c.warnings if w == WARN_WEAK_COUPLING]
    for flag in (FLAG_GAUSSIAN_KERNEL, FLAG_FRANCK_CONDON):
        if flag not in c.validity:
            problems.append(f"{flag} not satisfied")
    return problems


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------
def run_method(cfg: Config, method: str, t_p: float) -> dict:
    rc = cfg.run_config(t_p)
    rec = {"config_hash": cfg.config_hash(), "method": method, "t_p": float(t_p),
           "seed": None, "stderr_phi": None, "stderr_d": None}
    if method == "redfield":
        r = integrate_coherence(rc)
        rec.update(phi_total=r.phi_total, d_total=r.d_total,
                   precision=rc.integrator_tolerance, kernel_method=r.kernel_method)
    elif method == "closed_form":
        rates = cfg.section("sweep")["rates"]
        p = predict_closed_form(rc, rates)
        rec.update(phi_total=p.phi_total, d_total=p.d_total, precision=1e-12, rates=rates,
                   residual_bound=p.residual_bound)
    elif method == "oracle":
        o = cfg.section("oracle")
        e = ensemble_average(rc.model, rc.loop, rc.b_lab, int(o["n_modes"]),
                             int(o["n_realizations"]), int(o["seed"]), o["dt_max"],
                             int(o["n_bootstrap"]), dressed=bool(o["dressed"]))
        rec.update(phi_total=e.phi_mc, d_total=e.d_mc, stderr_phi=e.stderr_phi,
                   stderr_d=e.stderr_d, seed=int(o["seed"]), dt=e.dt)
    else:
        raise EnvBerryError(f"unknown method {method!r}")
    rec["config"] = json.loads(cfg.canonical())
    rec["timestamp"] = datetime.now(timezone.utc).isoformat()
    return rec


def _tp_grid(cfg: Config) -> np.ndarray:
    s = cfg.section("sweep")
    return np.geomspace(float(s["tp_min"]), float(s["tp_max"]), int(s["n_points"]))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_constants(cfg: Config, args) -> int:
    from .kernel import kernel_rate_constants

    c = coupling_constants(cfg.model)
    payload = c.as_dict()
    payload["kernel_rates"] = kernel_rate_constants(c).as_dict()
    _emit(payload, _out_path(args.output))
    return EXIT_OK


def cmd_kernel(cfg: Config, args) -> int:
    model = cfg.model
    tau = np.linspace(0.0, args.tau_max / model.omega_m, args.points)
    evals = []
    if args.method in ("gaussian", "both"):
        evals.append(kernel_gaussian(coupling_constants(model), tau))
    if args.method in ("exact", "both"):
        evals.append(kernel_exact(model, tau))
    path = _out_path(args.output)
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["tau", "a_even_sym", "a_even_asym", "a_odd_sym", "a_odd_asym", "method"])
        for ev in evals:
            for row in ev.rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if path:
            fh.close()
    return EXIT_OK


def cmd_evolve(cfg: Config, args) -> int:
    rc = cfg.run_config()
    r = integrate_coherence(rc, keep_trace=bool(args.trace))
    payload = {"config_hash": cfg.config_hash(), "t_p": rc.t_p,
               "s_plus_final": r.s_plus_final, "phi_total": r.phi_total,
               "d_total": r.d_total, "prediction_phi": r.prediction_phi,
               "prediction_d": r.prediction_d, "kernel_method": r.kernel_method}
    _emit(payload, _out_path(args.output))
    if args.trace:
        np.savetxt(_out_path(args.trace), r.trace, delimiter=",", fmt="%.17g",
                   header="t,re_s,im_s,omega_z,omega_perp", comments="")
    return EXIT_OK


def cmd_oracle(cfg: Config, args) -> int:
    rc = cfg.run_config()
    o = cfg.section("oracle")
    e = ensemble_average(rc.model, rc.loop, rc.b_lab, int(o["n_modes"]),
                         int(o["n_realizations"]), int(o["seed"]), o["dt_max"],
                         int(o["n_bootstrap"]), dressed=bool(o["dressed"]),
                         keep_samples=bool(args.samples))
    payload = {"config_hash": cfg.config_hash(), "t_p": rc.t_p, "seed": int(o["seed"])}
    payload.update(e.as_dict())
    _emit(payload, _out_path(args.output))
    if args.samples:
        idx = np.arange(len(e.samples))
        np.savetxt(_out_path(args.samples),
                   np.column_stack([idx, e.samples.real, e.samples.imag]),
                   delimiter=",", fmt=["%d", "%.17g", "%.17g"], header="index,re_s,im_s",
                   comments="")
    return EXIT_OK


def cmd_sweep(cfg: Config, args) -> int:
    methods = args.methods or cfg.section("sweep")["methods"]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise EnvBerryError(f"unknown methods {bad}")
    path = _out_path(args.output)
    fh = open(path, "a" if args.append else "w") if path else sys.stdout
    try:
        for m in methods:
            for tp in _tp_grid(cfg):
                rec = run_method(cfg, m, float(tp))
                fh.write(json.dumps(_plain(rec), sort_keys=True) + "\n")
                fh.flush()
                log.info("%s t_p=%g phi=%.10g d=%.6g", m, tp, rec["phi_total"], rec["d_total"])
    finally:
        if path:
            fh.close()
    return EXIT_OK


def _read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def cmd_decompose(cfg: Config | None, args) -> int:
    records = _read_jsonl(args.input)
    groups: dict[tuple, list] = {}
    for r in records:
        groups.setdefault((r["method"], r["config_hash"]), []).append(r)
    reports = [decompose_records(g) for _, g in sorted(groups.items())]
    _emit({"reports": reports}, _out_path(args.output))
    return EXIT_OK if all(r["decomposition"]["ok"] for r in reports) else EXIT_WARN


def compare_records(records: list[dict], phi_tol: float, d_tol: float,
                    k_sigma: float) -> list[dict]:
    by_tp: dict[float, dict[str, dict]] = {}
    for r in records:
        by_tp.setdefault(round(r["t_p"], 9), {})[r["method"]] = r
    rows = []
    for tp in sorted(by_tp):
        recs = by_tp[tp]
        present = [m for m in METHODS if m in recs]
        for i, a in enumerate(present):
            for b in present[i + 1:]:
                ra, rb = recs[a], recs[b]
                dphi = abs(wrap_angle(ra["phi_total"] - rb["phi_total"]))
                dd = abs(ra["d_total"] - rb["d_total"])
                se_phi = math.hypot(ra.get("stderr_phi") or 0.0, rb.get("stderr_phi") or 0.0)
                se_d = math.hypot(ra.get("stderr_d") or 0.0, rb.get("stderr_d") or 0.0)
                tphi = max(phi_tol, k_sigma * se_phi)
                td = max(d_tol, k_sigma * se_d)
                rows.append({"t_p": tp, "pair": f"{a}-{b}", "dphi": dphi, "dd": dd,
                             "phi_tol": tphi, "d_tol": td,
                             "status": "PASS" if dphi <= tphi and dd <= td else "FAIL"})
    return rows


def cmd_compare(cfg: Config, args) -> int:
    c = cfg.section("compare")
    records = [r for r in _read_jsonl(args.input) if r["config_hash"] == cfg.config_hash()]
    if not records:
        raise EnvBerryError("no records for this configuration family")
    rows = compare_records(records, float(c["phi_tol"]), float(c["d_tol"]), float(c["k_sigma"]))
    out = sys.stdout
    out.write(f"{'t_p':>12} {'pair':<24} {'|dphi|':>12} {'|dd|':>12} status\n")
    for r in rows:
        out.write(f"{r['t_p']:12.6g} {r['pair']:<24} {r['dphi']:12.4e} {r['dd']:12.4e} {r['status']}\n")
    if args.output:
        _emit({"rows": rows}, _out_path(args.output))
    return EXIT_OK if all(r["status"] == "PASS" for r in rows) else EXIT_ERROR


COMMANDS = {
    "constants": cmd_constants, "kernel": cmd_kernel, "evolve": cmd_evolve,
    "oracle": cmd_oracle, "sweep": cmd_sweep, "decompose": cmd_decompose,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="envberry", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("-c", "--config", required=needs_config, help="TOML run configuration")
        sp.add_argument("-s", "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a configuration value")
        sp.add_argument("-o", "--output", help="output file (default: stdout)")
        sp.add_argument("--force", action="store_true", help="do not exit 2 on validity warnings")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("constants", help="coupling constants and validity flags"))
    k = common(sub.add_parser("kernel", help="dump bath kernels as CSV"))
    k.add_argument("--tau-max", type=float, default=2.0, help="largest omega_m*tau")
    k.add_argument("--points", type=int, default=201)
    k.add_argument("--method", choices=("gaussian", "exact", "both"), default="both")
    e = common(sub.add_parser("evolve", help="integrate the coherence equation"))
    e.add_argument("--trace", help="per-step trace CSV")
    o = common(sub.add_parser("oracle", help="Monte-Carlo ensemble"))
    o.add_argument("--samples", help="per-realization CSV")
    s = common(sub.add_parser("sweep", help="run a t_p family, write JSONL"))
    s.add_argument("--methods", nargs="+", choices=METHODS)
    s.add_argument("--append", action="store_true")
    d = common(sub.add_parser("decompose", help="fit a JSONL family"), needs_config=False)
    d.add_argument("-i", "--input", required=True)
    c = common(sub.add_parser("compare", help="cross-check methods in a JSONL store"))
    c.add_argument("-i", "--input", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, overrides=args.set) if args.config else None
        problems = validity_problems(cfg) if cfg is not None else []
        if problems and not args.force:
            sys.stderr.write("WARNING: validity checks failed: " + "; ".join(problems) + "\n")
        status = COMMANDS[args.command](cfg, args)
    except EnvBerryError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR
    if status == EXIT_OK and problems and not args.force:
        return EXIT_WARN
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
