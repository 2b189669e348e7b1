"""Sweep the risk bound on the island scenario, whose last waypoint is walled off.

Looser bounds keep every reachable waypoint; tighter ones shorten the list.
The bound applies at every node of the chain, not only the root, so a plan
whose root risk sits under a bound can still be rejected by it.
"""
from pathlib import Path

from ccmission import InfeasibleError, build_recovery, load_scenario, plan_mission

ROOT = Path(__file__).resolve().parent.parent
s = load_scenario(ROOT / "scenarios" / "island" / "manifest.json")
pol = build_recovery(s)
for beta in (0.2, 0.05, 0.02, 0.005, 0.001):
    try:
        tree = plan_mission(s.start, s, pol, beta)
        print(f"beta={beta:<6} waypoints {tree.n_waypoints}/{tree.requested}  "
              f"exec risk {tree.exec_risk:.4f}  "
              f"max node risk {max(n.exec_risk for n in tree.nodes):.4f}")
    except InfeasibleError as err:
        print(f"beta={beta:<6} infeasible: {err}")
