"""The Fubini-Study area of a plane curve of degree d is d times that of a line."""
import math

from kostlan_lab.systole_lab import cubic_mesh, fs_area, line_mesh, richardson_area

for R in (2.0, 5.0, 10.0):
    print(f"R={R:4.1f}  line {fs_area(line_mesh(R)):.5f}  cubic {fs_area(cubic_mesh(R)):.5f}")
line, cubic = richardson_area(line_mesh, 10.0), richardson_area(cubic_mesh, 10.0)
print(f"extrapolated: line {line:.5f} (pi = {math.pi:.5f}), cubic/line {cubic / line:.4f}")
