"""Linking number of a long 2-knot in R^4 with a few loops.

The flat knot is the plane R^2 x {0}; a small circle in the normal plane
links it once. Moving the circle away unlinks it, and reversing it flips
the sign with the same random samples.
"""
import numpy as np

from longknot.geometry import LoopCurve, make_knot
from longknot.invariants import linking_number

N = 400_000


def show(label, est):
    print(f"{label:<34} {est.value:+.4f} ± {est.stderr:.4f}")


def main():
    flat = make_knot("flat", 4)
    show("flat, unit meridian", linking_number(flat, LoopCurve.meridian(4, 1.0), N, seed=1))
    show("flat, meridian reversed", linking_number(flat, LoopCurve.meridian(4, 1.0).reversed(), N, seed=1))
    show("flat, wide meridian at (0.7,-0.3)", linking_number(flat, LoopCurve.meridian(4, 2.0, at=[0.7, -0.3]), N, seed=2))

    far = np.zeros(4)
    far[2] = 10.0
    show("flat, circle at distance 10", linking_number(flat, LoopCurve.circle(far, 1.0, [0, 0, 1, 0], [0, 0, 0, 1]), N, seed=3))

    # a bumped knot: the meridian has to clear the bump to stay disjoint
    bump = make_knot("bump", 4)
    show("bump, meridian of radius 3", linking_number(bump, LoopCurve.meridian(4, 3.0, at=[2.5, 0.0]), N, seed=4))


if __name__ == "__main__":
    main()
