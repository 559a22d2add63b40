"""Certify a few Kostlan curves against the barrier cubic and see what is missing.

Each trial splits the random curve into a multiple of the barrier polynomial
plus an independent remainder.  ``a_required`` is the amplitude the barrier
would need for every condition to hold given the remainder that was drawn.
"""
from kostlan_lab.barrier import run_trials
from kostlan_lab.config import ExperimentConfig
from kostlan_lab.systole_lab import trial_context

cfg = ExperimentConfig(mode="certify", d=30, trials=200, seed=0)
ctx = trial_context(cfg)
records, summary = run_trials(cfg, ctx.setup)
print(summary.to_json())
for rec in records[:5]:
    print(f"trial {rec.trial_index}: |a| = {abs(rec.a):.3f}, needed {rec.a_required:.3g}, "
          f"g C^1 norm {rec.g_norms[1].certified_upper:.3g}, mu C^0 {rec.mu_c0:.3f}")
