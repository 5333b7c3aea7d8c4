"""Θ₂ along an isotopy in R^5 and the anomaly of Θ₁ in R^4.

The bump knot is unknotted, so Θ₂ should read 0 at every point of the
path that scales its amplitude from 0 to 1. Θ₁ is not an invariant: its
derivative along the path is a boundary term that we evaluate directly
and compare with a finite difference.
"""
from longknot.geometry import IsotopyPath, make_knot
from longknot.invariants import dtheta1_probe, theta2

N = 100_000


def main():
    path = IsotopyPath(make_knot("bump", 5))
    for t in (0.0, 0.5, 1.0):
        printed = theta2(path.at(t), N, seed=5).total
        compact = theta2(path.at(t), N, seed=6, form="compact").total
        print(f"t={t:<4} Θ₂ printed {printed.value:+.2e} ± {printed.stderr:.1e}   "
              f"compact {compact.value:+.2e} ± {compact.stderr:.1e}")

    lhs, rhs = dtheta1_probe(IsotopyPath(make_knot("bump", 4)), 0.5, n=400_000, seed=7)
    print(f"\ndΘ₁/dt at t=0.5: finite difference {lhs.value:.3e} ± {lhs.stderr:.1e}, "
          f"boundary formula {rhs.value:.3e} ± {rhs.stderr:.1e}")


if __name__ == "__main__":
    main()
