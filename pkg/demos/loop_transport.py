"""Carry the base loop of the cubic into nearby curves along the isotopy flow.

The pairs are built to satisfy the flow hypotheses exactly, so the loop
always survives; its intrinsic diameter barely moves.
"""
import numpy as np

from kostlan_lab.moser import FlowConfig, IsotopyField, flow_mesh, intrinsic_diameter
from kostlan_lab.systole_lab import build_loop, build_sigma, random_certified_pair

sigma = build_sigma(2.0)
loop = build_loop(sigma, 0.3, 128)
print(f"margin {sigma.eta:.4f}, loop length {loop.loop.length():.5f}, loop diameter {loop.loop_diameter:.5f}")

rng = np.random.default_rng(0)
for _ in range(5):
    pair = random_certified_pair(rng, sigma, loop)
    res = flow_mesh(pair["loop"], IsotopyField(pair["f"], pair["g"], pair["eta"]), FlowConfig())
    print(f"residual {res.residual:.1e}, displacement {res.max_displacement:.4f}, "
          f"diameter ratio {intrinsic_diameter(res.mesh) / loop.loop_diameter:.5f}")
