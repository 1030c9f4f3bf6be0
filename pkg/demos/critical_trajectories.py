"""Joining two phase-space points with a log-oscillating forcing, and why the
cheaper-looking polynomial connection is not good enough.

Run: python3 demos/critical_trajectories.py
"""

import numpy as np

from kinetraj.audit import PowerExpansion, audit_forcing_pair
from kinetraj.geometry import PhasePoint
from kinetraj.trajectory import (
    ForcingPair,
    connect,
    criticality_profile,
    endpoint_residual,
    eval_states,
    kinetic_residual,
)


def show_connection():
    start, end = PhasePoint(0.0, [0.0], [0.0]), PhasePoint(1.0, [0.0], [1.0])
    traj = connect(start, end)
    print(f"forcing weights m1={traj.m1[0]:.3f} m2={traj.m2[0]:.3f}")
    r = np.geomspace(1e-6, 1.0, 7)
    s = eval_states(traj, r)
    print("      r         x          v      sqrt(r)|dv/dr|")
    for ri, x, v, dv in zip(r, s["x"][:, 0], s["v"][:, 0], s["dv"][:, 0]):
        print(f"{ri:9.1e} {x:10.3e} {v:10.3e} {np.sqrt(ri) * abs(dv):10.4f}")
    # the last column stays bounded: the velocity forcing blows up exactly like r^(-1/2)
    print(f"endpoint residual {endpoint_residual(traj):.1e}, kinetic residual {kinetic_residual(traj, r):.1e}\n")


def compare_families():
    for name, family in (("log-oscillating", ForcingPair.critical()), ("action minimizer", ForcingPair.action_minimizer())):
        rep = criticality_profile(1.0, forcing=family)
        print(
            f"{name:17s} det slope {rep.det_exponent_fit:.3f}  column exponent {rep.inverse_column_exponent:+.3f}"
            f"  sup {rep.inverse_column_sup:.3g}  -> {'critical' if rep.critical else 'not critical'}"
        )
    print()


def pure_powers_never_work():
    # no finite sum of powers next to r^(3/2) gets the column down to r^(-1/2)
    for extra in ((1.0, 1.6), (1.0, 2.0), (-0.5, 2.5)):
        g = PowerExpansion(((0.0, 1.5), extra))
        rep = audit_forcing_pair(g)
        print(f"g2 = {extra[0]:+.1f} r^{extra[1]}: column ~ r^{rep.inverse_column_leading_exponent:+.2f}")


if __name__ == "__main__":
    show_connection()
    compare_families()
    pure_powers_never_work()
