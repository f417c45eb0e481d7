"""``pam`` command line: check | kernels | moments | simulate | regularity | verify.

Exit codes: 0 pass, 1 invariant failure, 2 configuration error,
3 numerical failure. Nothing is written unless the command completes.
"""
from __future__ import annotations

import argparse
import math
import sys

from . import __version__
from . import chaos_moments as cm
from . import config as config_mod
from . import kernels as kn
from . import noise_sim as ns
from . import regularity as rg
from . import spectral_models as sp
from ._io import csv_text, json_text, write_outputs
from .errors import (ConfigError, MemoryBudgetError, QuadratureError, SeriesTruncationError,
                     UnsupportedError)

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class Run:
    """Collects output files and the provenance of every emitted quantity."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.files = {}
        self.provenance = {}
        self.failures = []
        m = cfg["model"]
        self.smodel = sp.SpatialSpectralModel(m["dim"], m["alpha"])
        self.tmodel = sp.TemporalCovarianceModel(m["beta"])
        self.quad = sp.QuadratureSpec(**cfg["quadrature"])
        self._table = None

    def emit(self, name, text, operations):
        kind = name.rsplit(".", 1)[-1]
        if kind in self.cfg["report"]["formats"]:
            self.files[name] = text
            self.provenance[name] = operations

    def fail(self, what):
        self.failures.append(what)

    def table(self, n_max=None):
        k = self.cfg["kernels"]
        need = max(k["n_max"], k["series_n_max"], n_max or 0)
        if self._table is None or self._table.n_max < need:
            self._table = kn.h_n_table(self.smodel, need, self.cfg["horizon"], k["n_grid"], self.quad)
        return self._table

    def manifest(self):
        return {"command": self.command, "package_version": __version__,
                "seed": self.cfg["simulation"]["seed"], "config": self.cfg,
                "outputs": self.provenance, "failures": self.failures,
                "status": "pass" if not self.failures else "fail"}


def _model_params(run):
    return {"dim": run.smodel.dim, "alpha": run.smodel.alpha, "beta": run.tmodel.beta}


# ---------------------------------------------------------------------------

def do_check(run: Run):
    sm, tm = run.smodel, run.tmodel
    dal = sp.dalang_integral(sm, run.quad)
    etas = [(i + 0.5) / 20.0 for i in range(20)]
    grid = []
    agree = True
    for e in etas:
        hi = sp.holder_integral(sm, e, run.quad)
        ck = kn.cond_k_integral(sm, e, run.quad)
        same = math.isfinite(hi) == math.isfinite(ck)
        agree &= same
        grid.append({"eta": e, "holder_integral": hi, "cond_k_integral": ck, "agree": same})
    th = rg.theory_exponents(sm)
    report = {"model": _model_params(run), "dalang_integral": dal,
              "dalang": "PASS" if math.isfinite(dal) else "FAIL",
              "minimal_eta": th["eta_star"], "theta1_max": th["theta1_max"],
              "theta2_max": th["theta2_max"], "holder_grid": grid,
              "holder_cond_k_agree": agree,
              "gamma_capital_T": sp.gamma_capital(tm, run.cfg["horizon"])}
    if not math.isfinite(dal):
        run.fail("dalang")
    if not agree:
        run.fail("holder_vs_cond_k")
    run.emit("check.json", json_text(report), [
        {"field": "dalang_integral", "operation": "spectral_models.dalang_integral"},
        {"field": "holder_grid.holder_integral", "operation": "spectral_models.holder_integral",
         "parameters": {"eta": etas}},
        {"field": "holder_grid.cond_k_integral", "operation": "kernels.cond_k_integral",
         "parameters": {"eta": etas}},
        {"field": "minimal_eta", "operation": "spectral_models.minimal_eta"},
        {"field": "gamma_capital_T", "operation": "spectral_models.gamma_capital",
         "parameters": {"t": run.cfg["horizon"]}}])
    return report


def do_kernels(run: Run):
    kc = run.cfg["kernels"]
    table = run.table()
    run.emit("kernels.csv", table.to_csv(n_max=kc["n_max"]), [
        {"columns": ["t", "k"], "operation": "kernels.k_eval"},
        {"columns": [f"h{n}" for n in range(1, table.n_max + 1)], "operation": "kernels.h_n_table",
         "parameters": {"n_max": kc["n_max"], "horizon": table.horizon, "n_grid": table.n_grid}}])
    rows = []
    for t, g in kc["series_points"]:
        h = kn.big_H(table, t, g, kc["series_tol"])
        ht = kn.big_H_tilde(table, t, g, kc["series_tol"])
        rows.append((float(t), float(g), h.value, h.truncation_index, h.tail_bound,
                     ht.value, ht.truncation_index, ht.tail_bound))
    run.emit("series.csv", csv_text(["t", "gamma", "H", "H_terms", "H_tail", "H_tilde",
                                     "H_tilde_terms", "H_tilde_tail"], rows), [
        {"columns": ["H", "H_terms", "H_tail"], "operation": "kernels.big_H",
         "parameters": {"tol": kc["series_tol"], "n_max": table.n_max}},
        {"columns": ["H_tilde", "H_tilde_terms", "H_tilde_tail"], "operation": "kernels.big_H_tilde",
         "parameters": {"tol": kc["series_tol"]}}])
    T = table.horizon
    self_rows = []
    worst = 0.0
    for t in (0.25 * T, 0.5 * T, T):
        h = table.h_at(t)
        for n in range(1, min(5, table.n_max) + 1):
            ref = float(kn.h_n_closed_form(run.smodel, n, t))
            err = abs(h[n] / ref - 1.0)
            worst = max(worst, err)
            self_rows.append((t, n, float(h[n]), ref, err))
    if worst > 1e-6:
        run.fail("kernel_selftest")
    run.emit("kernels_selftest.csv", csv_text(["t", "n", "table", "closed_form", "rel_err"], self_rows),
             [{"columns": ["table"], "operation": "KernelTable.h_at"},
              {"columns": ["closed_form"], "operation": "kernels.h_n_closed_form"}])
    return {"selftest_max_rel_err": worst}


def do_simulate(run: Run, workers=None):
    sc, bc = run.cfg["simulation"], run.cfg["basis"]
    if run.smodel.dim != 1:
        raise UnsupportedError("simulation supports d = 1 only")
    basis = ns.build_noise_basis(run.smodel, run.tmodel, run.cfg["horizon"],
                                 run.cfg["domain_length"], bc["J"], bc["M"], bc.get("n_cells"))
    conf = ns.ChaosSampleConfig(sc["seed"], sc["replicates"], sc["chaos_order"],
                                tuple(tuple(p) for p in sc["points"]),
                                workers if workers is not None else sc["workers"])
    budget = int(bc["memory_budget_mib"] * 2 ** 20)
    samples = ns.sample_u_truncated(basis, conf, budget)
    table = run.table()
    per_point = []
    for k, (t, x) in enumerate(samples.points):
        j1 = samples.j1[:, k]
        u = samples.u[:, k]
        n = u.shape[0]
        entry = {"t": t, "x": x}
        entry["mean_u"], entry["mean_u_stderr"] = float(u.mean()), float(u.std(ddof=1) / math.sqrt(n))
        v1 = j1 ** 2
        entry["var_j1"], entry["var_j1_stderr"] = float(v1.mean()), float(v1.std(ddof=1) / math.sqrt(n))
        entry["var_j1_basis"] = ns.j1_basis_variance(basis, t)
        a1 = cm.alpha_n_exact(run.smodel, run.tmodel, 1, t, run.quad).value
        entry["alpha1"] = a1
        entry["deficit_j1"] = a1 - entry["var_j1_basis"]
        ok = abs(entry["mean_u"] - 1.0) <= 4 * entry["mean_u_stderr"] + 1e-15
        ok &= abs(entry["var_j1"] - entry["var_j1_basis"]) <= 3 * entry["var_j1_stderr"] + 1e-15
        for p in (2, 4):
            est, err = ns.mc_moment(u, p)
            bound = (cm.second_moment_bound(table, run.tmodel, t) if p == 2
                     else cm.p_moment_bound(table, run.tmodel, t, p) ** p)
            entry[f"moment_p{p}"], entry[f"moment_p{p}_stderr"] = est, err
            entry[f"moment_p{p}_bound"] = bound
            ok &= est <= bound + 3 * err
        if samples.j2 is not None:
            j2 = samples.j2[:, k]
            v2 = j2 ** 2
            entry["var_j2"], entry["var_j2_stderr"] = float(v2.mean()), float(v2.std(ddof=1) / math.sqrt(n))
            C = ns.j2_coefficients(basis, t, x, budget)
            entry["var_j2_basis"] = ns.j2_basis_variance(C)
            c12 = j1 * j2
            entry["cov_j1_j2"], entry["cov_j1_j2_stderr"] = float(c12.mean()), float(c12.std(ddof=1) / math.sqrt(n))
            ok &= abs(entry["cov_j1_j2"]) <= 4 * entry["cov_j1_j2_stderr"] + 1e-15
            ok &= abs(entry["var_j2"] - entry["var_j2_basis"]) <= 3 * entry["var_j2_stderr"] + 1e-15
        entry["pass"] = bool(ok)
        if not ok:
            run.fail(f"simulation_point_{k}")
        per_point.append(entry)
    report = {"basis": basis.manifest(), "seed": sc["seed"], "replicates": sc["replicates"],
              "chaos_order": sc["chaos_order"], "points": per_point,
              "parseval_rel_err": basis.eigval_sum / basis.operator_trace - 1.0}
    if sc["dump_samples"]:
        run.emit("samples.csv", samples.to_csv(), [
            {"columns": ["u_value"], "operation": "noise_sim.sample_u_truncated",
             "parameters": {"master_seed": sc["seed"], "replicates": sc["replicates"],
                            "chaos_order": sc["chaos_order"], **basis.manifest()}}])
    run.emit("simulate.json", json_text(report), [
        {"field": "points[].var_j1_basis", "operation": "noise_sim.j1_basis_variance"},
        {"field": "points[].var_j2_basis", "operation": "noise_sim.j2_basis_variance"},
        {"field": "points[].alpha1", "operation": "chaos_moments.alpha_n_exact", "parameters": {"n": 1}},
        {"field": "points[].moment_p*", "operation": "noise_sim.mc_moment"},
        {"field": "points[].moment_p2_bound", "operation": "chaos_moments.second_moment_bound"},
        {"field": "points[].moment_p4_bound", "operation": "chaos_moments.p_moment_bound",
         "parameters": {"p": 4, "power": 4}}])
    return report


def do_moments(run: Run, workers=None):
    mc = run.cfg["moments"]
    sm, tm = run.smodel, run.tmodel
    table = run.table(mc["bound_orders"])
    seed = run.cfg["simulation"]["seed"]
    rep = cm.MomentReport()
    for t in mc["times"]:
        exact = {}
        for n in mc["orders"]:
            if n > 2 or (n == 2 and sm.dim != 1):
                continue
            e = cm.alpha_n_exact(sm, tm, n, t, run.quad, qmc_points=mc["qmc_points"],
                                 replications=mc["replications"], seed=seed)
            exact[n] = e
            rep.add("alpha", n, t, 0.0, e.value, e.stderr, cm.alpha_n_bound(table, tm, n, t))
        for n in range(max(mc["orders"] + [0]) + 1, mc["bound_orders"] + 1):
            b = cm.alpha_n_bound(table, tm, n, t)
            rep.add("alpha_bound", n, t, 0.0, b, 0.0, b)
        partial = 1.0 + sum(e.value / math.factorial(n) for n, e in exact.items())
        perr = math.sqrt(sum((e.stderr / math.factorial(n)) ** 2 for n, e in exact.items()))
        rep.add("second_moment_partial", max(exact, default=0), t, 0.0, partial, perr,
                cm.second_moment_bound(table, tm, t))
        for p in mc["p_values"]:
            b = cm.p_moment_bound(table, tm, t, p)
            rep.add(f"p_moment_bound_p{p:g}", 0, t, 0.0, b, 0.0, b)
    for t in mc["increment_times"]:
        for h in mc["increment_lags"]:
            if t + h > run.cfg["horizon"] * 4:
                continue
            v = cm.j1_time_increment(sm, tm, t, t + h, run.quad)
            b = cm.j1_time_increment_bound(sm, tm, t, h, mc["eta"], run.quad)
            rep.add("j1_time_increment", 1, t, h, v, 0.0, b.total)
    bad = rep.violations()
    if bad:
        run.fail("moment_bound_domination")
    consts = {}
    for p in mc["p_values"]:
        c = cm.holder_constants(sm, tm, table, run.cfg["horizon"], p, mc["eta"], run.quad)
        consts[f"p={p:g}"] = {"time_a": c.time_a, "time_b": c.time_b, "space": c.space,
                               "theta": c.theta}
    run.emit("moments.csv", rep.to_csv(), [
        {"kind": "alpha", "value": "chaos_moments.alpha_n_exact", "bound": "chaos_moments.alpha_n_bound",
         "parameters": {"qmc_points": mc["qmc_points"], "replications": mc["replications"],
                        "seed": seed}},
        {"kind": "alpha_bound", "value": "chaos_moments.alpha_n_bound"},
        {"kind": "second_moment_partial", "value": "1 + sum_n alpha_n_exact / n!",
         "bound": "chaos_moments.second_moment_bound"},
        {"kind": "p_moment_bound_p*", "value": "chaos_moments.p_moment_bound"},
        {"kind": "j1_time_increment", "value": "chaos_moments.j1_time_increment",
         "bound": "chaos_moments.j1_time_increment_bound", "parameters": {"eta": mc["eta"]}}])
    summary = {"rows": len(rep.rows), "violations": len(bad), "holder_constants": consts,
               "seed": seed}
    if run.cfg["simulation"]["enabled"] and sm.dim == 1:
        summary["simulation"] = do_simulate(run, workers)
    run.emit("moments.json", json_text(summary), [
        {"field": "holder_constants", "operation": "chaos_moments.holder_constants",
         "parameters": {"horizon": run.cfg["horizon"], "eta": mc["eta"]}}])
    return summary


def do_regularity(run: Run):
    rc = run.cfg["regularity"]
    sm, tm = run.smodel, run.tmodel
    th = rg.theory_exponents(sm)
    sc = rg.scaling_exponents(sm, tm.beta)
    t0 = rc["t0"]
    fit_t = rg.fit_holder_exponent(lambda h: cm.j1_time_increment(sm, tm, t0, t0 + h, run.quad),
                                   "time", t0, rc["time_lags"], th["time"], margin=rc["margin"],
                                   proximity=rc["proximity"], scaling_exponent=sc["time"])
    fit_s = rg.fit_holder_exponent(lambda z: cm.j1_space_increment(sm, tm, t0, z, run.quad),
                                   "space", t0, rc["space_lags"], th["space"], margin=rc["margin"],
                                   proximity=rc["proximity"], scaling_exponent=sc["space"])
    for f in (fit_t, fit_s):
        if f.verdict != "PASS":
            run.fail(f"holder_fit_{f.direction}")
    checks = []
    for t in rc["bound_times"]:
        checks.append(rg.verify_shift_sup(sm, t, quad_spec=run.quad))
        checks.append(rg.verify_time_smoothing_bound(sm, t, rc["bound_lags"], rc.get("etas"),
                                            quad_spec=run.quad, slack_limit=rc["slack_limit"]))
        checks.append(rg.verify_space_smoothing_bound(sm, t, rc["bound_lags"], rc.get("etas"),
                                             quad_spec=run.quad, slack_limit=rc["slack_limit"]))
    for c in checks:
        if not c.passed:
            run.fail(f"{c.name}")
    ineq = rg.verify_scalar_inequalities(rc["inequality_samples"], run.cfg["simulation"]["seed"])
    if not ineq.passed:
        run.fail("scalar_inequalities")
    eta = run.cfg["moments"]["eta"]
    chain = []
    chain_ok = True
    for t in (0.25, 0.5, 1.0):
        for k in range(4, 13):
            h = 2.0 ** -k
            v = cm.j1_time_increment(sm, tm, t, t + h, run.quad)
            b = cm.j1_time_increment_bound(sm, tm, t, h, eta, run.quad).total
            chain.append((t, h, v, b, v / b))
            chain_ok &= v <= b
    if not chain_ok:
        run.fail("time_increment_bound_chain")
    report = {"model": _model_params(run), "theory": th, "scaling_exponents": sc,
              "time_fit": fit_t.to_dict(), "space_fit": fit_s.to_dict(),
              "checks": [c.to_dict() for c in checks], "scalar_inequalities": ineq.to_dict(),
              "bound_chain_pass": chain_ok, "bound_chain_max_ratio": max(r[4] for r in chain)}
    run.emit("regularity.json", json_text(report), [
        {"field": "time_fit", "operation": "regularity.fit_holder_exponent",
         "parameters": {"moment_fn": "chaos_moments.j1_time_increment", "t0": t0}},
        {"field": "space_fit", "operation": "regularity.fit_holder_exponent",
         "parameters": {"moment_fn": "chaos_moments.j1_space_increment", "t0": t0}},
        {"field": "checks", "operation": "regularity.verify_shift_sup / verify_time_smoothing_bound / "
                                         "verify_space_smoothing_bound"},
        {"field": "scalar_inequalities", "operation": "regularity.verify_scalar_inequalities",
         "parameters": {"sample_count": rc["inequality_samples"],
                        "seed": run.cfg["simulation"]["seed"]}}])
    run.emit("regularity_time.csv", fit_t.to_csv(),
             [{"operation": "chaos_moments.j1_time_increment", "parameters": {"t0": t0}}])
    run.emit("regularity_space.csv", fit_s.to_csv(),
             [{"operation": "chaos_moments.j1_space_increment", "parameters": {"t0": t0}}])
    rows = [(c.name, r[0].replace(",", ";"), r[1], r[2], r[3]) for c in checks for r in c.rows]
    run.emit("smoothing_bounds.csv", csv_text(["check", "case", "lhs", "rhs", "ratio"], rows),
             [{"operation": "regularity.verify_shift_sup / verify_time_smoothing_bound / verify_space_smoothing_bound"}])
    run.emit("bound_chain.csv", csv_text(["t", "h", "increment", "bound", "ratio"], chain),
             [{"columns": ["increment"], "operation": "chaos_moments.j1_time_increment"},
              {"columns": ["bound"], "operation": "chaos_moments.j1_time_increment_bound",
               "parameters": {"eta": eta}}])
    return report


def do_verify(run: Run, workers=None):
    out = {"check": do_check(run), "kernels": do_kernels(run)}
    summary = do_moments(run, workers)
    out["moments_violations"] = summary["violations"]
    reg = do_regularity(run)
    out["time_fit"] = reg["time_fit"]["verdict"]
    out["space_fit"] = reg["space_fit"]["verdict"]
    out["failures"] = list(run.failures)
    run.emit("verify.json", json_text(out), [{"operation": "composition of all subcommands"}])
    return out


COMMANDS = {"check": do_check, "kernels": do_kernels, "moments": do_moments,
            "simulate": do_simulate, "regularity": do_regularity, "verify": do_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="pam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        s.add_argument("--out", help="output directory (overrides report.out_dir)")
        s.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        s.add_argument("--workers", type=int, help="worker threads for sampling (does not affect results)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg["simulation"]["seed"] = args.seed
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.out:
            cfg["report"]["out_dir"] = args.out
        run = Run(args.command, cfg)
        fn = COMMANDS[args.command]
        if args.command in ("simulate", "moments", "verify"):
            fn(run, args.workers)
        else:
            fn(run)
    except (ConfigError, UnsupportedError) as exc:
        print(f"pam: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, SeriesTruncationError, MemoryBudgetError, FloatingPointError) as exc:
        print(f"pam: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    files = dict(run.files)
    files["manifest.json"] = json_text(run.manifest())
    write_outputs(cfg["report"]["out_dir"], files)
    status = EXIT_INVARIANT if run.failures else EXIT_OK
    print(f"pam {args.command}: {'PASS' if status == 0 else 'FAIL ' + ', '.join(run.failures)}"
          f" -> {cfg['report']['out_dir']}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
