"""Monte-Carlo campaign on the shipped medium scenario.

Runs seeded missions with online replanning and reports the empirical failure
rate against the risk bound, plus how many waypoints each mission reached.
"""
import sys
from pathlib import Path

from ccmission import build_recovery, load_scenario, run_campaign

ROOT = Path(__file__).resolve().parent.parent
trials = int(sys.argv[1]) if len(sys.argv) > 1 else 1000

s = load_scenario(ROOT / "scenarios" / "medium" / "manifest.json")
pol = build_recovery(s)
stats, _ = run_campaign(trials, 0, s.start, s, pol, beta=0.02)
rep = stats.report()
print(f"{trials} trials: failure rate {rep['failure_rate']:.4f} "
      f"(99% CI +/- {rep['ci']['half_width']:.4f}), mean reward {rep['mean_reward']:.3f}")
print("waypoints reached:", dict(sorted(stats.histogram.items())))
