"""Command-line front end.

Subcommands::

    gen         write a synthetic scenario (manifest + rasters)
    recovery    build and save the safe-recovery policy
    plan        plan once; write the tree as JSON plus energy and risk profiles
    simulate    one seeded online trial with its full trace
    montecarlo  seeded campaign; write the report JSON
    evaluate    oracle cross-checks of a plan (and exact optimum on micro scenarios)

Exit codes: 0 success, 2 invalid input, 3 infeasible planning, 4 internal
invariant breach, 5 plan found but the waypoint list had to be shortened.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path
from typing import List, Optional

from .envmodel import Scenario, ScenarioError, load_scenario, save_scenario
from .executive import ZETA, run_campaign, run_online, trial_rng
from .oracle import (MicroBoundsError, LatticeCCDP, check_micro, energy_shortfall,
                     exact_tree_risk, medium_micro)
from .recovery import (LatticeError, RecoveryPolicy, StateLattice, build_recovery, load_policy,
                       save_policy)
from .synthetic import PRESETS, SynthSpec, generate_synthetic, psr_mask
from .treeplan import InfeasibleError, PartialPolicyTree, Planner, PlannerConfig

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_INVARIANT = 4
EXIT_TRUNCATED = 5

RISK_TOL = 1e-9
ENERGY_TOL = 1e-6


class InvariantError(RuntimeError):
    pass


# -- helpers ------------------------------------------------------------------

def _scenario_path(arg: str) -> Path:
    p = Path(arg)
    return p / "manifest.json" if p.is_dir() else p


def _load(args) -> Scenario:
    s = load_scenario(_scenario_path(args.scenario))
    s.validate()
    return s


def _lattice(args, s: Scenario) -> StateLattice:
    return StateLattice.for_scenario(s, args.time_res, args.energy_res)


def _policy(args, s: Scenario) -> RecoveryPolicy:
    if getattr(args, "recovery_in", None):
        return load_policy(args.recovery_in, s)
    return build_recovery(s, _lattice(args, s))


def _check_beta(beta: float) -> None:
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _spec_from(args) -> SynthSpec:
    spec = PRESETS[args.preset]
    if args.spec:
        raw = json.loads(Path(args.spec).read_text())
        fields = {f.name for f in dataclasses.fields(SynthSpec)}
        unknown = set(raw) - fields
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        conv = {}
        for k, v in raw.items():
            if isinstance(v, list):
                v = tuple(tuple(e) if isinstance(e, list) else e for e in v)
            conv[k] = v
        spec = dataclasses.replace(spec, **conv)
    return spec


def tree_to_json(tree: PartialPolicyTree, s: Scenario) -> dict:
    nodes = []
    for n in tree.nodes:
        nodes.append({
            "cell": list(n.cell), "time": n.time, "next_wp": n.next_wp,
            "min_energy_req": n.min_energy_req, "exec_risk": n.exec_risk,
            "action": None if n.action is None else str(n.action),
            "fault_branches": [
                {"label": f.label, "probability": f.probability, "risk": f.risk,
                 "cell": list(f.state.cell), "time": f.state.time, "energy": f.state.energy}
                for f in n.fault_branches],
        })
    return {
        "scenario_hash": s.digest(), "beta": tree.beta, "exec_risk": tree.exec_risk,
        "first_wp": tree.first_wp, "n_waypoints": tree.n_waypoints,
        "requested": tree.requested, "truncated": tree.truncated,
        "traverse_time": tree.traverse_time, "expansions": tree.expansions, "nodes": nodes,
    }


def write_profiles(tree: PartialPolicyTree, s: Scenario, out: Path) -> None:
    with open(out / "energy_profile.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "elapsed_h", "row", "col", "next_wp", "action", "min_energy_req"])
        for n in tree.nodes:
            w.writerow([repr(n.time), repr((n.time - s.t_min) / 3600.0), n.cell[0], n.cell[1],
                        n.next_wp, "" if n.action is None else str(n.action), repr(n.min_energy_req)])
    with open(out / "risk_profile.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "elapsed_h", "exec_risk"])
        for n in tree.nodes:
            w.writerow([repr(n.time), repr((n.time - s.t_min) / 3600.0), repr(n.exec_risk)])


def check_tree(tree: PartialPolicyTree, s: Scenario, pol: RecoveryPolicy, beta: float) -> dict:
    """Oracle checks on a plan; raises InvariantError on a breach."""
    exact = exact_tree_risk(tree, s, pol)
    shortfall = energy_shortfall(tree, s)
    result = {"exec_risk": tree.exec_risk, "exact_tree_risk": exact,
              "risk_gap": abs(exact - tree.exec_risk), "energy_shortfall": shortfall}
    if tree.exec_risk > beta + RISK_TOL:
        raise InvariantError(f"plan risk {tree.exec_risk} exceeds beta {beta}")
    if abs(exact - tree.exec_risk) > RISK_TOL:
        raise InvariantError(f"planner risk {tree.exec_risk} disagrees with exact {exact}")
    if shortfall > ENERGY_TOL:
        raise InvariantError(f"fault-free run falls {shortfall} Wh short of a node requirement")
    return result


# -- subcommands ----------------------------------------------------------------

def cmd_gen(args) -> int:
    spec = _spec_from(args)
    s = generate_synthetic(spec, args.seed)
    s.validate()
    out = Path(args.out)
    save_scenario(s, out)
    n_psr = int(psr_mask(s.illum.frames).sum())
    print(f"scenario {s.digest()[:16]}  grid {s.terrain.height}x{s.terrain.width}  "
          f"waypoints {s.n_waypoints}  havens {len(s.havens)}  PSR cells {n_psr}")
    if args.preset == "medium" and not args.spec:
        mi = medium_micro(s)
        save_scenario(mi, out / "micro")
        print(f"embedded micro scenario {mi.digest()[:16]} -> {out / 'micro'}")
    return EXIT_OK


def cmd_recovery(args) -> int:
    s = _load(args)
    lat = _lattice(args, s)
    t0 = time.perf_counter()
    pol = build_recovery(s, lat)
    dt = time.perf_counter() - t0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_policy(pol, out)
    print(f"lattice {lat.height}x{lat.width} cells x {lat.n_time} times x {lat.n_energy} energies "
          f"({lat.size} points), built in {dt:.1f} s -> {out}")
    print(f"start-state risk {pol.risk(s.start):.6g}")
    return EXIT_OK


def _plan(args, s, pol) -> PartialPolicyTree:
    planner = Planner(s, pol, args.beta, PlannerConfig(time_class=args.time_class))
    if pol.risk(s.start) > args.beta:
        raise InfeasibleError(f"recovery risk {pol.risk(s.start):.6g} at the start exceeds beta")
    return planner.plan(s.start)


def cmd_plan(args) -> int:
    _check_beta(args.beta)
    s = _load(args)
    pol = _policy(args, s)
    tree = _plan(args, s, pol)
    checks = check_tree(tree, s, pol, args.beta)
    out = Path(args.out)
    obj = tree_to_json(tree, s)
    obj["checks"] = checks
    _write_json(out / "plan.json", obj)
    write_profiles(tree, s, out)
    print(f"plan: waypoints {tree.first_wp}..{tree.first_wp + tree.n_waypoints - 1} "
          f"({tree.n_waypoints} of {tree.requested}), exec_risk {tree.exec_risk:.6g}, "
          f"traverse {tree.traverse_time / 3600.0:.2f} h, {len(tree.nodes) - 1} actions -> {out}")
    return EXIT_TRUNCATED if tree.truncated else EXIT_OK


def cmd_simulate(args) -> int:
    _check_beta(args.beta)
    s = _load(args)
    pol = _policy(args, s)
    planner = Planner(s, pol, args.beta, PlannerConfig(time_class=args.time_class))
    rec = run_online(s.start, s, pol, args.beta, trial_rng(args.seed, 0), planner=planner,
                     seed=(args.seed, 0))
    trace = [{"cell": list(st.state.cell), "time": st.state.time, "energy": st.state.energy,
              "next_wp": st.state.next_wp, "action": str(st.action), "outcome": st.outcome}
             for st in rec.steps]
    out = rec.summary()
    fs = rec.final_state
    out.update(scenario_hash=s.digest(), beta=args.beta, trace=trace,
               final_state={"cell": list(fs.cell), "time": fs.time, "energy": fs.energy,
                            "next_wp": fs.next_wp})
    _write_json(Path(args.out), out)
    print(f"trial seed {args.seed}: {rec.status}, waypoints {rec.waypoints}, faults {rec.faults}, "
          f"replans {rec.replans}, reward {rec.reward:.4f}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    _check_beta(args.beta)
    if args.trials < 1:
        raise ValueError("--trials must be >= 1")
    s = _load(args)
    pol = _policy(args, s)
    stats, _ = run_campaign(args.trials, args.seed, s.start, s, pol, args.beta,
                            threads=args.threads, config=PlannerConfig(time_class=args.time_class))
    report = stats.report(scenario_hash=s.digest(), beta=args.beta, base_seed=args.seed,
                          zeta=ZETA)
    _write_json(Path(args.out), report)
    print(f"n {stats.n}  mean reward {stats.mean_reward:.4f}  failure rate "
          f"{100 * stats.failure_rate:.2f}%  (99% CI +/- {100 * stats.ci_half_width:.2f}%)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _check_beta(args.beta)
    s = _load(args)
    lat = _lattice(args, s)
    pol = load_policy(args.recovery_in, s) if args.recovery_in else build_recovery(s, lat)
    report = {"scenario_hash": s.digest(), "beta": args.beta}
    try:
        tree = _plan(args, s, pol)
        report["plan"] = {"n_waypoints": tree.n_waypoints, "truncated": tree.truncated,
                          **check_tree(tree, s, pol, args.beta)}
    except InfeasibleError as exc:
        report["plan"] = {"infeasible": str(exc)}
    try:
        check_micro(s, pol.lattice)
    except MicroBoundsError as exc:
        report["micro"] = {"skipped": str(exc)}
    else:
        dp = LatticeCCDP(s, pol.lattice)
        reward, risk, k = dp.optimum(s.start, args.beta)
        micro = {"optimum_reward": reward, "optimum_risk": risk}
        if k >= 0:
            r2, p2 = dp.replay(dp.key_of(s.start), k)
            micro.update(replay_reward=r2, replay_risk=p2)
            if p2 > args.beta + RISK_TOL or abs(r2 - reward) > 1e-9:
                raise InvariantError(f"oracle policy replay ({r2}, {p2}) disagrees with its front")
        report["micro"] = micro
    _write_json(Path(args.out), report)
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK


# -- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccmission", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, beta=True, policy=True):
        sp.add_argument("--scenario", required=True, help="manifest.json or its directory")
        sp.add_argument("--time-res", type=float, default=1800.0, help="lattice time step (s)")
        sp.add_argument("--energy-res", type=float, default=150.0, help="lattice energy step (Wh)")
        if policy:
            sp.add_argument("--recovery-in", help="saved recovery policy (built on the fly if omitted)")
        if beta:
            sp.add_argument("--beta", type=float, default=0.02, help="risk bound")
            sp.add_argument("--time-class", type=float, default=1800.0,
                            help="planner resolution-pruning time class (s)")

    g = sub.add_parser("gen", help="write a synthetic scenario")
    g.add_argument("--preset", choices=sorted(PRESETS), default="medium")
    g.add_argument("--spec", help="JSON file of SynthSpec field overrides")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("recovery", help="build the safe-recovery policy")
    common(r, beta=False, policy=False)
    r.add_argument("--out", "--recovery-out", dest="out", required=True)
    r.add_argument("--threads", type=int, default=0, help="accepted for symmetry; the sweep is vectorised")
    r.set_defaults(func=cmd_recovery)

    pl = sub.add_parser("plan", help="plan once and write the tree and profiles")
    common(pl)
    pl.add_argument("--out", required=True, help="output directory")
    pl.set_defaults(func=cmd_plan)

    sm = sub.add_parser("simulate", help="one seeded online trial with trace")
    common(sm)
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--out", required=True, help="trace JSON path")
    sm.set_defaults(func=cmd_simulate)

    mc = sub.add_parser("montecarlo", help="seeded Monte Carlo campaign")
    common(mc)
    mc.add_argument("--trials", type=int, default=10000)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--threads", type=int, default=0, help="worker processes (0: all cores)")
    mc.add_argument("--out", required=True, help="report JSON path")
    mc.set_defaults(func=cmd_montecarlo)

    ev = sub.add_parser("evaluate", help="oracle cross-checks")
    common(ev)
    ev.add_argument("--out", required=True, help="report JSON path")
    ev.set_defaults(func=cmd_evaluate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InvariantError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ScenarioError, LatticeError, MicroBoundsError, FileNotFoundError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
