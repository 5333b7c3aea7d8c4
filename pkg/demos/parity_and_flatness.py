"""Pointwise structure of the Θ integrands before any integration.

For each diagram we look for relabelings of its vertices that map the
integrand to minus itself. When one exists, the integral vanishes; this
is how Θ₁ and Θ₃ die in odd dimension and Θ₂ in even dimension.
"""
import numpy as np

from longknot.configspace import probe_configurations
from longknot.diagrams import compile_integrand, enumerate_connected, parity_report
from longknot.geometry import make_knot


def report(order, m, points=40):
    knot = make_knot("bump", m)
    rng = np.random.default_rng(order * 10 + m)
    verdicts = []
    for d in enumerate_connected(order):
        cfg = probe_configurations(d.s, d.t, m, knot, rng, points)
        rep = parity_report(d, m, knot, cfg)
        verdicts.append("0" if rep.vanishes else ("odd" if rep.odd else "-"))
    return verdicts


def main():
    print("per-term verdicts: 0 = identically zero, odd = has an odd involution, - = neither")
    for order in (1, 2, 3):
        for m in (4, 5, 6):
            v = report(order, m)
            dead = all(x != "-" for x in v)
            print(f"Θ{order} m={m}: {' '.join(v):<28} {'integral vanishes' if dead else ''}")

    print("\nflat knot: largest |integrand| over 100 configurations")
    for order in (1, 2, 3):
        flat = make_knot("flat", 4)
        worst = 0.0
        for d in enumerate_connected(order):
            cfg = probe_configurations(d.s, d.t, 4, flat, np.random.default_rng(0), 100)
            worst = max(worst, float(np.abs(compile_integrand(d, 4, flat)(cfg)).max()))
        print(f"Θ{order}: {worst:.1e}")


if __name__ == "__main__":
    main()
