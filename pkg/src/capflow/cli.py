"""Command-line front end: verification suites and experiment drivers.

One binary, subcommand style::

    capflow verify {core,potential,flows,variational,collapse} [--trials N]
    capflow cap --process FILE --A 0 --B 4 [--routes dirichlet,escape,adjoint]
    capflow ising --K 5 --L 6 --mode {barrier,structure,f0,psi0,exact,ek-report}
    capflow zrp --sites 3 --alpha 2 --p 0.7 --mode {capacity,rates,conditions,order-mc}
    capflow simulate --process FILE --start 0 --hit 4 --reps 100000

Every run emits one JSON report (schema ``reportVersion: 1``) with the
command, parameters, results, named checks (each stating its tolerance),
timings and seed; floats print at full round-trip precision.  Exit code 0
means all checks passed, 1 means some check failed, 2 is a usage error.
Flags win over the optional TOML config file; ``--csv`` writes plot-ready
side tables where a mode offers one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

REPORT_VERSION = 1


def _pmap(fn, items, threads):
    """Order-preserving map, threaded when asked; pure functions only."""
    items = list(items)
    if threads and threads > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _load_config(path):
    if path is None:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve(args, config, command, name, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    section = config.get(command, {})
    if name in section:
        return section[name]
    return default


def _emit(report, args):
    text = json.dumps(report, indent=2, default=_jsonable)
    if getattr(args, "json", None):
        with open(args.json, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, frozenset):
        return sorted(map(repr, obj))
    return repr(obj)


def _exit_code(checks) -> int:
    return 0 if all(c["pass"] for c in checks.values()) else 1


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")


def _parse_states(text):
    out = []
    for token in str(text).split(","):
        token = token.strip()
        try:
            out.append(int(token))
        except ValueError:
            out.append(token)
    return out


# -- subcommands -----------------------------------------------------------


def cmd_verify(args, config) -> int:
    from .suites import run_suite

    trials = int(_resolve(args, config, "verify", "trials", 25))
    seed = int(_resolve(args, config, "verify", "seed", 0))
    t0 = time.time()
    out = run_suite(args.suite, trials=trials, seed=seed)
    report = {
        "reportVersion": REPORT_VERSION,
        "command": "verify",
        "parameters": {"suite": args.suite, "trials": trials},
        "seed": seed,
        "results": {"worst_margins": {k: v["margin"] for k, v in out["checks"].items()}},
        "checks": out["checks"],
        "timings": {"total_s": time.time() - t0},
    }
    _emit(report, args)
    return _exit_code(out["checks"])


def cmd_cap(args, config) -> int:
    from .errors import CapflowError
    from .markov import adjoint, process_from_json
    from .potential import capacity, capacity_via_escape

    routes = _resolve(args, config, "cap", "routes", "dirichlet,escape").split(",")
    t0 = time.time()
    try:
        with open(args.process) as fh:
            P = process_from_json(fh.read())
        A = _parse_states(args.A)
        B = _parse_states(args.B)
        values = {}
        if "dirichlet" in routes:
            values["dirichlet"] = capacity(P, A, B).value
        if "escape" in routes:
            values["escape"] = capacity_via_escape(P, A, B).value
        if "adjoint" in routes:
            values["adjoint"] = capacity(adjoint(P), A, B).value
    except (CapflowError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    vals = list(values.values())
    spread = (max(vals) - min(vals)) / max(max(vals), 1e-300)
    checks = {
        "route_agreement": {"pass": spread <= 1e-9, "margin": spread, "tolerance": 1e-9}
    }
    report = {
        "reportVersion": REPORT_VERSION,
        "command": "cap",
        "parameters": {"process": args.process, "A": A, "B": B, "routes": routes},
        "seed": None,
        "results": {"capacity": values, "cross_route_residual": spread},
        "checks": checks,
        "timings": {"total_s": time.time() - t0},
    }
    _emit(report, args)
    return _exit_code(checks)


def cmd_ising(args, config) -> int:
    from . import ising

    K = int(_resolve(args, config, "ising", "K", 5))
    L = int(_resolve(args, config, "ising", "L", 6))
    betas = [float(b) for b in str(_resolve(args, config, "ising", "beta_grid", "4,6,8")).split(",")]
    mode = args.mode
    t0 = time.time()
    checks = {}
    results = {}
    model = ising.IsingModel(K, L)

    if mode == "barrier":
        gamma = ising.energy_barrier(model)
        results["Gamma"] = gamma
        if model.assumptions_ok:
            checks["barrier_formula"] = {
                "pass": gamma == 2 * K + 2,
                "margin": float(abs(gamma - (2 * K + 2))),
                "tolerance": 0.0,
            }
    elif mode in ("structure", "f0", "psi0", "ek-report"):
        st = ising.typical_structure(K, L)
        results["constants"] = {
            "Gamma": st.gamma,
            "b": st.b_const,
            "e": st.e_const,
            "kappa": st.kappa,
        }
        if mode in ("structure", "ek-report"):
            ver = st.verify()
            results["set_identities"] = ver
            for name, ok in ver.items():
                checks[name] = {"pass": bool(ok), "margin": 0.0 if ok else 1.0, "tolerance": 0.0}
        if mode in ("f0", "ek-report"):
            rows = [ising.dirichlet_of_f0(st, b) for b in betas]
            results["f0"] = rows
            devs = [abs(r["scaled_times_2kappa"] - 1.0) for r in rows]
            checks["f0_scaled_monotone"] = {
                "pass": all(a > b for a, b in zip(devs, devs[1:])),
                "margin": devs[-1],
                "tolerance": 0.15,
            }
            checks["f0_scaled_final"] = {"pass": devs[-1] < 0.15, "margin": devs[-1], "tolerance": 0.15}
        if mode in ("psi0", "ek-report"):
            fc = ising.flow_checks(st, betas)
            results["psi0"] = fc
            for name in ("div_zero_bulk", "div_zero_boundary_rows", "div_zero_plateau"):
                checks[name] = {"pass": fc[name] <= 1e-12, "margin": fc[name], "tolerance": 1e-12}
            checks["div_unit_source"] = {
                "pass": abs(fc["div_sum_minus"] - 1.0) <= 1e-12,
                "margin": abs(fc["div_sum_minus"] - 1.0),
                "tolerance": 1e-12,
            }
            devs = [abs(r["scaled_over_2kappa"] - 1.0) for r in fc["norms"]]
            checks["psi0_scaled_monotone"] = {
                "pass": all(a > b for a, b in zip(devs, devs[1:])) and devs[-1] < 0.15,
                "margin": devs[-1],
                "tolerance": 0.15,
            }
        if mode == "ek-report" and args.csv:
            rows = []
            f_rows = {r["beta"]: r for r in results["f0"]}
            n_rows = {r["beta"]: r for r in results["psi0"]["norms"]}
            for b in betas:
                upper = f_rows[b]["scaled_dirichlet"]
                lower = 1.0 / n_rows[b]["scaled_norm_sq"]
                rows.append((b, upper, lower))
            _write_csv(args.csv, ["beta", "scaledUpper", "scaledLower"], rows)
    elif mode == "exact":
        import math

        values = _pmap(lambda b: ising.exact_small_lattice(K, L, b).value, betas, args.threads)
        caps = dict(zip(betas, values))
        results["capacities"] = caps
        gamma = ising.energy_barrier(model)
        results["Gamma"] = gamma
        bs = sorted(betas)
        slope = -(math.log(caps[bs[-1]]) - math.log(caps[bs[-2]])) / (bs[-1] - bs[-2])
        results["neg_log_slope"] = slope
        checks["log_slope_matches_barrier"] = {
            "pass": abs(slope - gamma) / gamma < 0.10,
            "margin": abs(slope - gamma) / gamma,
            "tolerance": 0.10,
        }
        if args.csv:
            _write_csv(args.csv, ["beta", "capacity"], sorted(caps.items()))
    report = {
        "reportVersion": REPORT_VERSION,
        "command": "ising",
        "parameters": {"K": K, "L": L, "mode": mode, "beta_grid": betas},
        "seed": None,
        "results": results,
        "checks": checks,
        "timings": {"total_s": time.time() - t0},
    }
    _emit(report, args)
    return _exit_code(checks)


def cmd_zrp(args, config) -> int:
    from . import zrp

    sites = int(_resolve(args, config, "zrp", "sites", 3))
    alpha = float(_resolve(args, config, "zrp", "alpha", 2.0))
    p = float(_resolve(args, config, "zrp", "p", 0.7))
    n_grid = [int(n) for n in str(_resolve(args, config, "zrp", "n_grid", "10,20,30")).split(",")]
    pairs = str(_resolve(args, config, "zrp", "pairs", "0:1"))
    seed = int(_resolve(args, config, "zrp", "seed", 0))
    mode = args.mode
    t0 = time.time()
    checks = {}
    results = {}

    if mode == "capacity":
        a_txt, b_txt = pairs.split(":")
        A = [int(x) for x in a_txt.split(",")]
        B = [int(x) for x in b_txt.split(",")]
        scan = zrp.zrp_capacity_scan(sites, alpha, p, A, B, n_grid)
        results["scan"] = scan
        errs = [row["rel_err"] for row in scan["rows"]]
        checks["scaled_capacity_error_decreasing"] = {
            "pass": all(a > b for a, b in zip(errs, errs[1:])),
            "margin": errs[-1],
            "tolerance": float("inf"),
        }
        checks["sector_sandwich"] = {
            "pass": all(row["sandwich_ok"] for row in scan["rows"]),
            "margin": 0.0,
            "tolerance": 1e-10,
        }
        if args.csv:
            _write_csv(
                args.csv,
                ["N", "scaledCap", "capY", "relErr"],
                [(r["N"], r["scaled_cap"], r["cap_Y"], r["rel_err"]) for r in scan["rows"]],
            )
    elif mode == "rates":
        def one(N):
            model = zrp.build_zrp(sites, N, alpha, p)
            out = zrp.mean_jump_rates(model)
            out["N"] = N
            return out

        rows = _pmap(one, n_grid, args.threads)
        for out in rows:
            N = out["N"]
            checks[f"holding_identity_N{N}"] = {
                "pass": out["holding_identity_residual"] < 1e-8,
                "margin": out["holding_identity_residual"],
                "tolerance": 1e-8,
            }
            checks[f"split_identity_N{N}"] = {
                "pass": out["split_identity_residual"] < 1e-8,
                "margin": out["split_identity_residual"],
                "tolerance": 1e-8,
            }
        results["rates"] = rows
    elif mode == "conditions":
        out = zrp.martingale_conditions(sites, alpha, p, n_grid)
        results["conditions"] = out
        for key in ("H0", "H1", "H2", "H3_hitting_bound", "H3_stationarity_bound"):
            vals = [row[key] for row in out["rows"]]
            checks[f"{key}_decreasing"] = {
                "pass": all(a > b for a, b in zip(vals, vals[1:])),
                "margin": vals[-1],
                "tolerance": float("inf"),
            }
        if args.csv:
            _write_csv(
                args.csv,
                ["N", "H0", "H1", "H2", "H3hit", "H3stat"],
                [
                    (r["N"], r["H0"], r["H1"], r["H2"], r["H3_hitting_bound"], r["H3_stationarity_bound"])
                    for r in out["rows"]
                ],
            )
    elif mode == "order-mc":
        import math

        from .markov import cycle_walk
        from .potential import capacity

        N = n_grid[-1]
        transitions = int(_resolve(args, config, "zrp", "transitions", 2000))
        model = zrp.build_zrp(sites, N, alpha, p)
        stats = zrp.order_chain_statistics(model, transitions, seed=seed)
        walk = cycle_walk(sites, p)
        caps = np.array([capacity(walk, [0], [y]).value for y in range(1, sites)])
        target = caps / caps.sum()
        emp = stats["first_jump_from_0"][1:]
        n0 = int(stats["jump_counts"][0].sum())
        worst = 0.0
        for t_val, e_val in zip(target, emp):
            se = math.sqrt(t_val * (1 - t_val) / n0)
            worst = max(worst, abs(e_val - t_val) / (3 * se))
        results["order_mc"] = {
            "N": N,
            "transitions": stats["transitions"],
            "empirical_first_jump": emp,
            "limit_first_jump": target,
            "mean_sojourn_trace": stats["mean_sojourn_trace"],
            "delta_time_fraction": stats["delta_time_fraction"],
        }
        checks["first_jump_within_3se"] = {
            "pass": worst <= 1.0,
            "margin": worst,
            "tolerance": 1.0,
        }
    report = {
        "reportVersion": REPORT_VERSION,
        "command": "zrp",
        "parameters": {
            "sites": sites,
            "alpha": alpha,
            "p": p,
            "n_grid": n_grid,
            "pairs": pairs,
            "mode": mode,
        },
        "seed": seed,
        "results": results,
        "checks": checks,
        "timings": {"total_s": time.time() - t0},
    }
    _emit(report, args)
    return _exit_code(checks)


def cmd_simulate(args, config) -> int:
    from .errors import CapflowError
    from .markov import process_from_json
    from .montecarlo import estimate_hitting_time
    from .potential import direct_mean_hitting_time

    reps = int(_resolve(args, config, "simulate", "reps", 100_000))
    seed = int(_resolve(args, config, "simulate", "seed", 0))
    t0 = time.time()
    try:
        with open(args.process) as fh:
            P = process_from_json(fh.read())
        start = _parse_states(args.start)[0] if args.start is not None else P.states[0]
        hit = _parse_states(args.hit)
    except (CapflowError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    start_measure = np.zeros(P.n)
    start_measure[P.index[start]] = 1.0
    mean, se = estimate_hitting_time(P, start_measure, hit, replications=reps, seed=seed)
    exact = direct_mean_hitting_time(P, hit)[P.index[start]]
    gap = abs(mean - exact)
    checks = {
        "hitting_time_within_3se": {
            "pass": gap <= 3 * se,
            "margin": gap / se if se > 0 else 0.0,
            "tolerance": 3.0,
        }
    }
    report = {
        "reportVersion": REPORT_VERSION,
        "command": "simulate",
        "parameters": {"process": args.process, "start": start, "hit": hit, "reps": reps},
        "seed": seed,
        "results": {"mean": mean, "stderr": se, "exact": exact},
        "checks": checks,
        "timings": {"total_s": time.time() - t0},
    }
    _emit(report, args)
    return _exit_code(checks)


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capflow",
        description="Potential theory of finite-state Markov processes.",
    )
    parser.add_argument("--config", help="TOML config file; flags take precedence")
    parser.add_argument("--json", help="also write the JSON report to this path")
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count(),
        help="worker threads for embarrassingly parallel sections",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run a module verification suite")
    p.add_argument("suite", choices=["core", "potential", "flows", "variational", "collapse"])
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("cap", help="capacity of a serialized process")
    p.add_argument("--process", required=True)
    p.add_argument("--A", required=True)
    p.add_argument("--B", required=True)
    p.add_argument("--routes")
    p.set_defaults(func=cmd_cap)

    p = sub.add_parser("ising", help="Ising model experiments")
    p.add_argument("--K", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--beta-grid", dest="beta_grid")
    p.add_argument(
        "--mode",
        required=True,
        choices=["barrier", "structure", "f0", "psi0", "exact", "ek-report"],
    )
    p.add_argument("--csv")
    p.set_defaults(func=cmd_ising)

    p = sub.add_parser("zrp", help="zero-range process experiments")
    p.add_argument("--sites", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--n-grid", dest="n_grid")
    p.add_argument("--pairs")
    p.add_argument("--seed", type=int)
    p.add_argument("--transitions", type=int)
    p.add_argument(
        "--mode", required=True, choices=["capacity", "rates", "conditions", "order-mc"]
    )
    p.add_argument("--csv")
    p.set_defaults(func=cmd_zrp)

    p = sub.add_parser("simulate", help="Monte Carlo hitting-time cross-check")
    p.add_argument("--process", required=True)
    p.add_argument("--start", help="start state; defaults to the first state in the file")
    p.add_argument("--hit", required=True)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return args.func(args, config)


if __name__ == "__main__":
    sys.exit(main())
