"""How the homogenized norm of a fixed polynomial scales with the degree.

For ``p = 1`` in one variable the ratio is exactly ``sqrt(d / (d + 1))``; for
a cubic it approaches the same limit at rate ``1/d``.
"""
import math

from kostlan_lab.kostlan import norm_ratio_series
from kostlan_lab.poly_core import AffinePolynomialMap

degrees = [25, 100, 400, 1600]
one = AffinePolynomialMap.constant(1, 1.0)
cubic = AffinePolynomialMap.from_terms(2, {(3, 0): 1.0, (0, 3): 1.0, (0, 0): -1.0})

for d, r1, r3 in zip(degrees, norm_ratio_series(one, 1.0, degrees), norm_ratio_series(cubic, 0.7, degrees)):
    print(f"d={d:5d}  p=1: {r1:.6f} (exact {math.sqrt(d / (d + 1)):.6f})  cubic: {r3:.6f}")
