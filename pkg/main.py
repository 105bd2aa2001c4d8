"""
Точка входу ricci-forge.

Usage:
    python main.py verify-curvature --family n-open --n 4 --c 0.01 --grid 0.01:50:0.001
    python main.py converge --c auto --i 2,4,8,16 --points 2000 --seed 7
"""
import sys

from ricci_forge.cli import run

if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
