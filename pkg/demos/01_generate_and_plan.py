"""Generate the medium crater scenario, build the recovery policy and plan one mission.

Prints the nominal chain with each node's minimum energy requirement and
execution risk, so the trade between waypoint coverage and risk is visible.
"""
from ccmission import build_recovery, plan_mission
from ccmission.synthetic import PRESETS, generate_synthetic

s = generate_synthetic(PRESETS["medium"], seed=0)
print(f"grid {s.terrain.elevation.shape}, {s.n_waypoints} waypoints, {len(s.havens)} havens")

pol = build_recovery(s)
print(f"recovery risk at the start state: {pol.risk(s.start):.4f}")

tree = plan_mission(s.start, s, pol, beta=0.02)
print(f"plan covers {tree.n_waypoints}/{tree.requested} waypoints, "
      f"exec risk {tree.exec_risk:.4f}, {tree.traverse_time / 3600:.1f} h")
waits = 0
for node in tree.nodes:
    if node.action is not None and str(node.action) == "wait":
        waits += 1
        continue
    if waits:
        print(f"  ... {waits} wait steps")
        waits = 0
    hours = (node.time - s.t_min) / 3600
    print(f"  t+{hours:5.1f} h  cell {node.cell}  need {node.min_energy_req:7.1f} Wh  "
          f"risk {node.exec_risk:.4f}  {node.action or 'end'}")
