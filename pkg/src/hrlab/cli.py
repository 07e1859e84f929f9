"""Experiment runner: five subcommands over one configuration format.

    hrlab simulate       --config cfg  [--out DIR]   trajectory CSV + snapshots
    hrlab constants      --config cfg                JSON constants report
    hrlab verify         --config cfg  [--strict]    monitor reports
    hrlab pullback       --config cfg                attractor fiber artifacts
    hrlab oracle-compare --config cfg                uniform PDE vs ODE oracle

Exit codes: 0 success, 1 validation error, 2 numerical fault (blow-up
guard), 3 monitor violations found (verify --strict only).  Outputs are a
pure function of the configuration: fixed seeds, no wall clock anywhere.
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import ConfigError, build_initial, parse_config, resolved_json_safe
from .estimates import (EPS_ABS, EPS_MON, attach_measured, compute_constants,
                        compute_TB, constants_report, evolve_pairs,
                        measure_rho, measure_semigroup_constants,
                        measure_smoothing, monitor_absorbing, monitor_energy,
                        monitor_gronwall, monitor_lipschitz_series,
                        monitor_time_holder)
from .grid import StateField, random_smooth_state, save_state_binary
from .model import translation_bound
from .pullback import (approximate_attractor, attraction_rate,
                       box_counting_dimension, export_cloud, pullback_evolve,
                       sample_absorbing_set, sample_ball, semihausdorff)
from .solver import BlowUpError, evolve, evolve_many, evolve_ode, \
    save_trajectory_csv


class _Parser(argparse.ArgumentParser):
    # usage problems are validation errors: exit code 1, not argparse's 2
    def error(self, message):
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


def _parallel_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _write_manifest(out_dir, subcommand, cfg, outputs, extra=None):
    manifest = {
        "artifact": "hrlab",
        "version": __version__,
        "subcommand": subcommand,
        "config": resolved_json_safe(cfg.resolved),
        "outputs": sorted(outputs),
    }
    if extra:
        manifest["summary"] = extra
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _base_constants(cfg, with_semigroup=False):
    exp = cfg.experiment
    rho = measure_rho(cfg.grid, exp["rho_samples"], seed=exp["seed"])
    p_bound = translation_bound(cfg.forcing, cfg.grid)
    constants = compute_constants(cfg.params, cfg.grid.measure, p_bound,
                                  exp["T_Mstar"], rho=rho)
    if with_semigroup:
        c0, c1 = measure_semigroup_constants(
            cfg.grid, cfg.params.diffusivities,
            t_max=max(1.0, exp["T_Mstar"]))
        constants = attach_measured(constants, C0_hat=c0, C1_hat=c1)
    return constants


def run_simulate(cfg, out_dir):
    exp = cfg.experiment
    g0 = build_initial(cfg)
    tau = exp["tau"]
    snapshot_stride = exp["snapshot_stride"] or None
    traj = evolve(g0, tau, tau + exp["horizon"], cfg.params, cfg.forcing,
                  cfg.grid, cfg.solver, stride=exp["stride"],
                  snapshot_stride=snapshot_stride)
    outputs = ["trajectory.csv"]
    save_trajectory_csv(traj, os.path.join(out_dir, "trajectory.csv"))
    if snapshot_stride:
        for i, (t, snap) in enumerate(zip(traj.snapshot_times, traj.snapshots)):
            name = "snapshot_%05d.bin" % i
            save_state_binary(snap, os.path.join(out_dir, name))
            outputs.append(name)
    _write_manifest(out_dir, "simulate", cfg, outputs,
                    {"samples": int(len(traj.times)),
                     "final_h_norm_sq": float(traj.h_norm_sq()[-1])})
    print("simulate: %d samples -> %s" % (len(traj.times), out_dir))
    return 0


def run_constants(cfg, out_dir):
    exp = cfg.experiment
    constants = _base_constants(cfg, with_semigroup=True)
    report = constants_report(constants)
    if exp["B_norm_sq"] > 0.0:
        tb = compute_TB(constants, exp["B_norm_sq"])
        report["T_B"] = {"value": tb, "provenance": "formula",
                         "B_norm_sq": exp["B_norm_sq"]}
    path = os.path.join(out_dir, "constants.json")
    with open(path, "w") as fh:
        json.dump(_json_safe(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, "constants", cfg, ["constants.json"])
    print("constants: K1=%.6g delta=%.6g -> %s"
          % (constants.K1, constants.delta, out_dir))
    return 0


def _verify_energy_runs(cfg, constants, out_dir, outputs):
    exp = cfg.experiment
    rng = np.random.default_rng(exp["seed"])
    lo, hi = exp["norm_sq_range"]
    reports = []
    for run in range(exp["n_runs"]):
        norm_sq = float(np.exp(rng.uniform(np.log(max(lo, 1e-12)),
                                           np.log(max(hi, lo)))))
        g0 = random_smooth_state(cfg.grid, rng, norm_sq=norm_sq)
        traj = evolve(g0, exp["tau"], exp["tau"] + exp["horizon"], cfg.params,
                      cfg.forcing, cfg.grid, cfg.solver)
        if exp["corrupt_sample"] >= 0:
            # self-check fixture: scale the stored u-norm series mid-run and
            # confirm the monitors flag it
            k = min(exp["corrupt_sample"], len(traj.times) - 1)
            traj.series["norm_u_sq"][k] *= 1e12
        reports.append(("energy_run%d" % run, monitor_energy(traj, constants)))
        reports.append(("gronwall_run%d" % run,
                        monitor_gronwall(traj, constants)))
    return reports


def _verify_lipschitz(cfg, constants):
    exp = cfg.experiment
    rng = np.random.default_rng(exp["seed"] + 1)
    pairs = []
    for _ in range(exp["pair_count"]):
        base = random_smooth_state(cfg.grid, rng, norm_sq=1.0)
        direction = random_smooth_state(cfg.grid, rng, norm_sq=1.0)
        eps = exp["pair_distance"]
        mate = StateField(base.u + eps * direction.u,
                          base.v + eps * direction.v,
                          base.w + eps * direction.w)
        pairs.append((base, mate))
    times, diff_sq, _, _ = evolve_pairs(
        pairs, exp["tau"], exp["tau"] + exp["horizon"], cfg.params,
        cfg.forcing, cfg.grid, cfg.solver, stride=max(1, exp["stride"]))
    reports = []
    for pi in range(diff_sq.shape[1]):
        reports.append(("lipschitz_pair%d" % pi,
                        monitor_lipschitz_series(times, diff_sq[:, pi],
                                                 constants)))
    return reports


def _verify_absorbing(cfg, constants):
    exp = cfg.experiment
    reports = []
    for bi, mult in enumerate(exp["ball_k1_multiples"]):
        b_norm_sq = mult * constants.K1
        ens = sample_ball(cfg.grid, exp["members"], b_norm_sq,
                          seed=exp["seed"] + 10 + bi)
        for ti, tau in enumerate(exp["taus"]):
            _, times, series = pullback_evolve(
                ens, tau, exp["horizon"], cfg.params, cfg.forcing, cfg.grid,
                cfg.solver, record=("h",))
            reports.append(
                ("absorbing_ball%d_tau%d" % (bi, ti),
                 monitor_absorbing(times, series["h"], constants, b_norm_sq)))
    return reports


def run_verify(cfg, out_dir, strict=False, threads=1):
    exp = cfg.experiment
    checks = exp["checks"].split()
    constants = _base_constants(cfg, with_semigroup=True)
    outputs = []
    reports = []
    if "energy" in checks or "gronwall" in checks:
        reports.extend(_verify_energy_runs(cfg, constants, out_dir, outputs))
    if "lipschitz" in checks:
        reports.extend(_verify_lipschitz(cfg, constants))
    if "absorbing" in checks:
        reports.extend(_verify_absorbing(cfg, constants))
    if "smoothing" in checks:
        rng = np.random.default_rng(exp["seed"] + 2)
        pairs = []
        for _ in range(exp["pair_count"]):
            base = random_smooth_state(cfg.grid, rng, norm_sq=4.0)
            direction = random_smooth_state(cfg.grid, rng, norm_sq=1.0)
            eps = exp["pair_distance"]
            pairs.append((base, StateField(base.u + eps * direction.u,
                                           base.v + eps * direction.v,
                                           base.w + eps * direction.w)))
        rep = measure_smoothing(pairs, exp["taus"], exp["T_Mstar"],
                                cfg.params, cfg.forcing, cfg.grid, cfg.solver)
        constants = attach_measured(constants, kappa_hat=rep.kappa_hat)
    summary = {}
    total_violations = 0
    for name, rep in reports:
        total_violations += len(rep.violations)
        summary[name] = {"checked": rep.n_checked,
                         "violations": len(rep.violations)}
        if rep.violations:
            path = os.path.join(out_dir, "violations_%s.csv" % name)
            rep.write_csv(path)
            outputs.append("violations_%s.csv" % name)
    summary_all = {
        "monitors": summary,
        "total_violations": total_violations,
        "kappa_hat": _json_safe(constants.kappa_hat),
    }
    path = os.path.join(out_dir, "verify_summary.json")
    with open(path, "w") as fh:
        json.dump(_json_safe(summary_all), fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append("verify_summary.json")
    _write_manifest(out_dir, "verify", cfg, outputs,
                    {"total_violations": total_violations})
    print("verify: %d monitors, %d violations -> %s"
          % (len(reports), total_violations, out_dir))
    if strict and total_violations > 0:
        return 3
    return 0


def run_pullback(cfg, out_dir, threads=1):
    exp = cfg.experiment
    if exp["members"] < 1:
        raise ConfigError("experiment.members must be at least 1")
    constants = _base_constants(cfg)
    level = min(constants.K1, exp["radius_cap"])
    m_sample = sample_absorbing_set(cfg.grid, max(8, exp["members"]),
                                    constants.K1, seed=exp["seed"],
                                    radius_cap=exp["radius_cap"])
    outputs = []
    summaries = []

    def _one_fiber(item):
        ti, tau = item
        cloud = approximate_attractor(tau, exp["horizons"], cfg.params,
                                      cfg.forcing, cfg.grid, cfg.solver,
                                      m_sample, tol_attr=exp["tol_attr"])
        return ti, tau, cloud

    fibers = _parallel_map(_one_fiber, list(enumerate(exp["taus"])), threads)
    for ti, tau, cloud in fibers:
        ball = sample_ball(cfg.grid, exp["members"], level,
                           seed=exp["seed"] + 77)
        dists = []
        for h in exp["horizons"]:
            pulled = pullback_evolve(ball, tau, h, cfg.params, cfg.forcing,
                                     cfg.grid, cfg.solver)
            dists.append(semihausdorff(pulled, cloud, cfg.grid))
        fit = attraction_rate(exp["horizons"], dists)
        dim = box_counting_dimension(cloud, cfg.grid)
        sub = "fiber_%02d" % ti
        export_cloud(cloud, cfg.grid, os.path.join(out_dir, sub), extras={
            "dim_hat": _json_safe(dim.dim_hat),
            "sigma_hat": _json_safe(fit.sigma_hat if fit.ok else None),
            "attraction_distances": _json_safe(list(zip(exp["horizons"],
                                                        dists))),
        })
        outputs.append(sub + "/manifest.json")
        summaries.append({"tau": tau, "converged": cloud.converged,
                          "dim_hat": _json_safe(dim.dim_hat),
                          "sigma_hat": _json_safe(
                              fit.sigma_hat if fit.ok else None)})
    _write_manifest(out_dir, "pullback", cfg, outputs, {"fibers": summaries})
    print("pullback: %d fibers -> %s" % (len(summaries), out_dir))
    return 0


def run_oracle_compare(cfg, out_dir):
    exp = cfg.experiment
    if cfg.initial["kind"] not in ("zero", "constant"):
        raise ConfigError("oracle-compare needs spatially uniform initial "
                          "data (kind zero or constant), got %r"
                          % cfg.initial["kind"])
    if not cfg.forcing.is_spatially_uniform:
        raise ConfigError("oracle-compare needs spatially uniform forcing, "
                          "got kind %r" % cfg.forcing.kind)
    g0 = build_initial(cfg)
    tau = exp["tau"]
    t_end = tau + exp["horizon"]

    def probe(X):
        idx = (0,) * cfg.grid.dim
        return np.array([X[0][(0,) + idx], X[1][(0,) + idx],
                         X[2][(0,) + idx]])

    times, series, _ = evolve_many([g0], tau, t_end, cfg.params, cfg.forcing,
                                   cfg.grid, cfg.solver,
                                   stride=exp["stride"], record=(),
                                   samplers=[("point", probe)])
    pde_vals = series["point"]
    ode_dt = cfg.solver.dt / exp["ode_dt_ratio"]
    idx0 = (0,) * cfg.grid.dim
    ode_times, ode_vals = evolve_ode(
        (g0.u[idx0], g0.v[idx0], g0.w[idx0]), tau, t_end, cfg.params,
        cfg.forcing, dt=ode_dt)
    ratio = exp["ode_dt_ratio"] * exp["stride"]
    ode_at = ode_vals[::ratio]
    n = min(len(ode_at), len(pde_vals))
    scale = float(np.max(np.abs(ode_vals))) or 1.0
    abs_err = np.max(np.abs(pde_vals[:n] - ode_at[:n]), axis=1)
    max_rel = float(abs_err.max() / scale) if n else 0.0
    path = os.path.join(out_dir, "oracle_compare.csv")
    with open(path, "w") as fh:
        fh.write("t,u_pde,v_pde,w_pde,u_ode,v_ode,w_ode,abs_err,rel_err\n")
        for k in range(n):
            row = ([times[k]] + list(pde_vals[k]) + list(ode_at[k])
                   + [abs_err[k], abs_err[k] / scale])
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    _write_manifest(out_dir, "oracle-compare", cfg, ["oracle_compare.csv"],
                    {"max_rel_err": max_rel, "scale": scale,
                     "samples": int(n)})
    print("oracle-compare: max rel err %.3e -> %s" % (max_rel, out_dir))
    return 0


def main(argv=None):
    parser = _Parser(prog="hrlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "constants", "verify", "pullback",
                 "oracle-compare"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed-override", type=int, default=None)
        if name == "verify":
            sp.add_argument("--strict", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config, seed_override=args.seed_override)
        out_dir = args.out or cfg.output_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "simulate":
            return run_simulate(cfg, out_dir)
        if args.command == "constants":
            return run_constants(cfg, out_dir)
        if args.command == "verify":
            return run_verify(cfg, out_dir, strict=args.strict,
                              threads=args.threads)
        if args.command == "pullback":
            return run_pullback(cfg, out_dir, threads=args.threads)
        return run_oracle_compare(cfg, out_dir)
    except ConfigError as exc:
        print("hrlab: config error: %s" % exc, file=sys.stderr)
        return 1
    except BlowUpError as exc:
        print("hrlab: numerical fault: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
