"""Sweeps, tables and the command-line front end.

All numeric output uses 9 significant digits and LF line endings, and is
written in grid order by a single collector, so reruns are byte-identical.
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bd
from .channel_core import channel_from_dict, load_channel, validate_channel
from .maxvar import TABLE1, DiscreteInput, max_trace, pmf_as_dict, total_variation, trace_cov
from .mi_numeric import N_FINAL, N_SEARCH, N_STARTS, k_point_lower_bound
from .zonotope_signaling import (build_decomposition, cell_vertices, lp_oracle_min_energy,
                                 min_energy_input)

BOUND_COLUMNS = ["lb_uniform", "lb_exp", "ub_peak", "ub_mu", "ub_mu_delta", "ub_trace", "nu"]


def fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def write_text(path, lines):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("".join(line + "\n" for line in lines))


@dataclass
class SweepConfig:
    channel: object            # path to channel JSON, or a ChannelModel
    alphas: list
    amin_db: float
    amax_db: float
    steps: int
    out_dir: str = None
    seed: int = 0
    threads: int = 1
    bounds: list = field(default_factory=lambda: list(BOUND_COLUMNS))

    def grid(self):
        if self.steps < 2:
            raise ValueError("steps must be at least 2")
        if not self.amax_db > self.amin_db:
            raise ValueError("grid must be strictly increasing")
        if any(a <= 0 for a in self.alphas) or not self.alphas:
            raise ValueError("alpha values must be positive")
        return np.linspace(self.amin_db, self.amax_db, self.steps)

    def model(self):
        if isinstance(self.channel, (str, os.PathLike)):
            return load_channel(self.channel)
        return self.channel


def _cell(args):
    H, alpha, A_dB, nu_value, trace_value = args
    model = validate_channel(H, 1.0, alpha)
    decomp = build_decomposition(model)
    return bd.bound_report(model, decomp, A_dB, alpha, nu_value, trace_value)


def _run_cells(tasks, threads):
    """Evaluate cells; failures are returned as exceptions in place."""
    def safe(fn, t):
        try:
            return fn(t)
        except Exception as exc:  # recorded, not fatal
            return exc
    if threads <= 1:
        return [safe(_cell, t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_cell, t) for t in tasks]
        out = []
        for f in futures:
            try:
                out.append(f.result())
            except Exception as exc:
                out.append(exc)
        return out


def manifest_base(extra=None):
    doc = {
        "units": "nats",
        "dB_convention": "A_dB = 10*log10(A)",
        "inf_sup_relaxation": True,
        "inf_sup_note": "bounds with an outer infimum over dual parameters are evaluated as "
                        "inf over parameters of sup over cell weights",
        "tolerances": {
            "tol_rank": 1e-10, "tol_det": 1e-12, "tol_tie": 1e-9, "tol_box": 1e-9,
            "tol_box_loose": 1e-6, "golden": bd.GOLDEN_TOL, "lambda_inset": bd.LAMBDA_INSET,
            "kkt": 1e-10,
        },
        "solver": {
            "log_mu_range": list(bd.LOG_MU_RANGE), "coordinate_descent_rounds": bd.CD_ROUNDS,
            "coordinate_descent_tol": bd.CD_TOL,
        },
        "number_format": "9 significant digits",
    }
    if extra:
        doc.update(extra)
    return doc


def run_sweep(config: SweepConfig):
    """One BoundReport per (alpha, A) pair; writes CSV, .dat files and a manifest."""
    grid = config.grid()
    model = config.model()
    decomp = build_decomposition(model)
    failures = []
    reports = []
    for alpha in config.alphas:
        a_used = min(alpha, model.n_T / 2.0)
        trace_value = max_trace(model.with_amplitude(1.0).with_alpha(a_used)).value
        nu_value = bd.nu(decomp, a_used) if a_used < decomp.alpha_th else None
        tasks = [(model.H.tolist(), alpha, float(db), nu_value, trace_value) for db in grid]
        results = _run_cells(tasks, config.threads)
        rows = []
        for db, r in zip(grid, results):
            if isinstance(r, Exception):
                failures.append({"alpha": alpha, "A_dB": float(db),
                                 "error": f"{type(r).__name__}: {r}"})
                continue
            rows.append(r)
        reports.extend(rows)
        if config.out_dir:
            _write_bounds(config.out_dir, alpha, rows, config.bounds)
    if config.out_dir:
        man = manifest_base({
            "command": "bounds", "H": model.H.tolist(), "alphas": list(config.alphas),
            "grid_dB": [config.amin_db, config.amax_db, config.steps], "seed": config.seed,
            "alpha_th": decomp.alpha_th, "V_H": decomp.V_H, "failures": failures,
            "bounds": list(config.bounds),
        })
        write_text(os.path.join(config.out_dir, "manifest.json"),
                   [json.dumps(man, indent=2, sort_keys=True)])
    return reports, failures


def _alpha_tag(alpha):
    return f"alpha{fmt(alpha)}"


def _write_bounds(out_dir, alpha, rows, selected):
    os.makedirs(out_dir, exist_ok=True)
    cols = [c for c in BOUND_COLUMNS if c in selected]
    lines = [",".join(["A_dB"] + cols)]
    for r in rows:
        lines.append(",".join([fmt(r.A_dB)] + [fmt(getattr(r, c)) for c in cols]))
    tag = _alpha_tag(alpha)
    write_text(os.path.join(out_dir, f"bounds_{tag}.csv"), lines)
    for c in cols:
        write_text(os.path.join(out_dir, f"{c}_{tag}.dat"),
                   [f"{fmt(r.A_dB)} {fmt(getattr(r, c))}" for r in rows])


def run_table1():
    rows = []
    for H, alpha, reference, reference_pmf in TABLE1:
        model = validate_channel(H, 1.0, alpha)
        sol = max_trace(model)
        pmf = pmf_as_dict(sol.input)
        pts = np.array([[float(ch) for ch in key] for key in reference_pmf])
        reference_trace = trace_cov(model, DiscreteInput(pts, np.array(list(reference_pmf.values()))))
        rows.append({
            "H": H, "alpha": alpha,
            "value": sol.value, "reference_value": reference,
            "rel_error": abs(sol.value - reference) / reference,
            "pmf": pmf, "reference_pmf": reference_pmf,
            "support_match": set(pmf) == set(reference_pmf),
            "tv": total_variation(pmf, reference_pmf),
            "reference_pmf_trace": reference_trace,
            "ordering": [i + 1 for i in sol.ordering],
        })
    return rows


def format_table1(rows):
    lines = ["alpha  computed      reference     rel_err    TV        support  trace_of_reference_pmf"]
    for r in rows:
        lines.append(f"{r['alpha']:<6} {fmt(r['value']):<13} {r['reference_value']:<11} "
                     f"{r['rel_error']:.2e}   {r['tv']:.2e}  "
                     f"{'same' if r['support_match'] else 'DIFF':<8} {fmt(r['reference_pmf_trace'])}")
        lines.append(f"       computed PMF {json.dumps({k: round(v, 4) for k, v in r['pmf'].items()})}")
    return lines


def run_nu_curve(channel, alpha_grid):
    model = channel if not isinstance(channel, (str, os.PathLike)) else load_channel(channel)
    decomp = build_decomposition(model)
    return [(float(a), bd.nu(decomp, float(a))) for a in alpha_grid]


def run_kpoint_sweep(model, alphas, grid_db, k, n_samples, seed, n_search=None, budget=600,
                     n_starts=None):
    decomp = build_decomposition(model)
    out = {}
    for alpha in alphas:
        rows = []
        for db in grid_db:
            d = decomp.with_amplitude(bd.db_to_linear(db))
            kw = {} if n_search is None else {"n_search": n_search}
            if n_starts is not None:
                kw["n_starts"] = n_starts
            est, inp = k_point_lower_bound(d, alpha, k, budget=budget, seed=seed,
                                           n_final=n_samples, **kw)
            rows.append((float(db), est))
        out[alpha] = rows
    return out


# -- CLI ---------------------------------------------------------------------

def _model_from_args(args, need=True):
    if args.channel is None:
        if need:
            raise SystemExit("--channel is required")
        return None
    with open(args.channel) as fh:
        doc = json.load(fh)
    return channel_from_dict(doc), doc


def _emit(args, name, lines):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_text(os.path.join(args.out, name), lines)
    else:
        sys.stdout.write("".join(line + "\n" for line in lines))


def cmd_decompose(args):
    model, _ = _model_from_args(args)
    d = build_decomposition(model)
    doc = {
        "V_H": d.V_H, "alpha_th": d.alpha_th, "A": d.A,
        "cells": [{"U": [i + 1 for i in c.U], "g": c.g.tolist(), "v": c.v.tolist(), "s": c.s,
                   "q": c.q, "sigma": c.sigma.tolist(), "det_abs": c.det_abs}
                  for c in d.cells],
    }
    _emit(args, "decomposition.json", [json.dumps(doc, indent=2)])
    if args.tikz_data:
        for i, c in enumerate(d.cells):
            V = cell_vertices(d, i)
            V = np.vstack([V, V[:1]])
            tag = "".join(str(j + 1) for j in c.U)
            _emit(args, f"cell_{tag}.dat", [" ".join(fmt(x) for x in row) for row in V])


def cmd_minenergy(args):
    model, _ = _model_from_args(args)
    d = build_decomposition(model)
    xbar = np.array([float(v) for v in args.xbar.split(",")])
    r = min_energy_input(d, xbar)
    _, lp = lp_oracle_min_energy(model, xbar)
    doc = {"x_min": r.x_min.tolist(), "U": [i + 1 for i in d.cells[r.cell_index].U],
           "beta": r.beta.tolist(), "energy": r.energy, "lp_energy": lp}
    _emit(args, "minenergy.json", [json.dumps(doc, indent=2)])


def cmd_maxvar(args):
    if args.table1:
        return cmd_table1(args)
    model, _ = _model_from_args(args)
    if args.alpha:
        model = model.with_alpha(args.alpha[0])
    sol = max_trace(model.with_amplitude(1.0))
    doc = {"value_A2": sol.value, "alpha": model.alpha, "ordering": [i + 1 for i in sol.ordering],
           "pmf": pmf_as_dict(sol.input), "support_bound_holds": sol.support_bound_holds}
    _emit(args, "maxvar.json", [json.dumps(doc, indent=2)])


def cmd_table1(args):
    rows = run_table1()
    _emit(args, "table1.txt", format_table1(rows))


def cmd_bounds(args):
    model, doc = _model_from_args(args)
    alphas = args.alpha or [doc.get("alpha", model.alpha)]
    cfg = SweepConfig(model, alphas, args.amin_db, args.amax_db, args.steps,
                      args.out, args.seed, args.threads)
    reports, failures = run_sweep(cfg)
    if not args.out:
        for alpha in alphas:
            sys.stdout.write(",".join(["A_dB"] + BOUND_COLUMNS) + "\n")
            for r in reports:
                if r.alpha_used == min(alpha, model.n_T / 2.0):
                    sys.stdout.write(",".join([fmt(r.A_dB)] + [fmt(getattr(r, c))
                                                               for c in BOUND_COLUMNS]) + "\n")
    if failures:
        sys.stderr.write(f"{len(failures)} cells failed; see manifest\n")


def cmd_kpoint(args):
    model, doc = _model_from_args(args)
    alphas = args.alpha or [doc.get("alpha", model.alpha)]
    cfg = SweepConfig(model, alphas, args.amin_db, args.amax_db, args.steps, args.out, args.seed)
    grid = cfg.grid()
    res = run_kpoint_sweep(model, alphas, grid, args.k, args.samples, args.seed,
                           n_search=args.search_samples, budget=args.budget,
                           n_starts=args.starts)
    col = f"kpoint_k{args.k}"
    for alpha, rows in res.items():
        tag = _alpha_tag(alpha)
        lines = [f"A_dB,{col},std_error"] + [f"{fmt(db)},{fmt(e.value)},{fmt(e.std_error)}"
                                             for db, e in rows]
        _emit(args, f"{col}_{tag}.csv", lines)
        if args.out:
            write_text(os.path.join(args.out, f"{col}_{tag}.dat"),
                       [f"{fmt(db)} {fmt(e.value)}" for db, e in rows])
    if args.out:
        man = manifest_base({"command": "kpoint", "k": args.k, "samples": args.samples,
                             "search_samples": args.search_samples or N_SEARCH,
                             "budget": args.budget, "starts": args.starts or N_STARTS,
                             "seed": args.seed, "alphas": alphas,
                             "optimizer": "multi-start Nelder-Mead, one point pinned at 0",
                             "estimator": "antithetic, stratified over mass points, "
                                          "moment-matched noise"})
        write_text(os.path.join(args.out, "manifest_kpoint.json"),
                   [json.dumps(man, indent=2, sort_keys=True)])


def cmd_nu_curve(args):
    model, _ = _model_from_args(args)
    d = build_decomposition(model)
    hi = args.alpha_max if args.alpha_max is not None else d.alpha_th - 0.01
    grid = np.arange(args.alpha_min, hi + 1e-12, args.alpha_step)
    pairs = run_nu_curve(model, grid)
    _emit(args, "nu.dat", [f"{fmt(a)} {fmt(v)}" for a, v in pairs])


def build_parser():
    p = argparse.ArgumentParser(prog="imdd-capacity",
                                description="Capacity bounds for MIMO intensity channels")
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    for parser, default in ((p, None), (common, argparse.SUPPRESS)):
        parser.add_argument("--channel", default=default, help="channel JSON file")
        parser.add_argument("--out", default=default, help="output directory (default: stdout)")
        parser.add_argument("--seed", type=int, default=0 if default is None else default)
        parser.add_argument("--threads", type=int, default=1 if default is None else default)
    sub = p.add_subparsers(dest="command", required=True)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    s = sub.add_parser("decompose", help="minimum-energy tiling as JSON")
    s.add_argument("--tikz-data", action="store_true", help="also emit per-cell vertex lists")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("minenergy", help="minimum-energy preimage of a point")
    s.add_argument("--xbar", required=True, help="comma-separated noiseless output")
    s.set_defaults(func=cmd_minenergy)

    s = sub.add_parser("maxvar", help="maximum covariance trace and its PMF")
    s.add_argument("--alpha", type=float, nargs="*")
    s.add_argument("--table1", action="store_true", help="run the seven reference configurations")
    s.set_defaults(func=cmd_maxvar)

    for name, func in (("bounds", cmd_bounds), ("kpoint", cmd_kpoint)):
        s = sub.add_parser(name)
        s.add_argument("--amin-db", type=float, required=True)
        s.add_argument("--amax-db", type=float, required=True)
        s.add_argument("--steps", type=int, required=True)
        s.add_argument("--alpha", type=float, nargs="*")
        if name == "kpoint":
            s.add_argument("--k", type=int, default=2)
            s.add_argument("--samples", type=int, default=N_FINAL, help="final estimate")
            s.add_argument("--search-samples", type=int, help="per evaluation during search")
            s.add_argument("--budget", type=int, default=600, help="evaluations per start")
            s.add_argument("--starts", type=int, help="Nelder-Mead restarts")
        s.set_defaults(func=func)

    s = sub.add_parser("nu-curve", help="nu as a function of alpha")
    s.add_argument("--alpha-min", type=float, default=0.05)
    s.add_argument("--alpha-max", type=float)
    s.add_argument("--alpha-step", type=float, default=0.01)
    s.set_defaults(func=cmd_nu_curve)

    s = sub.add_parser("table1", help="maximum-trace reference table")
    s.set_defaults(func=cmd_table1)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0
