"""Fault-on swing dynamics of a single machine against an infinite bus.

Walks through the physics layer: an equilibrium before the disturbance,
the equal-area threshold on the post-disturbance mechanical power, and what
trajectories look like on either side of it.
"""
import numpy as np

from psno import smib
from psno.smib import MachineState, SmibParams, critical_angle, pm1_max

# a machine running at Pm = 0.4 p.u. sits at delta0 = asin(Pm / Pmax)
p = SmibParams.reference(Pm=0.4, Pm1=0.0)
print(f"Pmax = {p.pmax:.4f} p.u., delta0 = {p.delta0:.4f} rad")

# undamped: equal areas give the critical angle, and from it the largest
# post-disturbance power the machine survives
dc = critical_angle(p.delta0)
threshold = pm1_max(p)
print(f"critical angle {dc:.4f} rad, Pm1 threshold {threshold:.6f} p.u.")

# integrate just below and just above the threshold
grid = smib.uniform_grid(0.0, 3.1, 0.1)
for pm1 in (threshold - 0.02, threshold + 0.02):
    q = p.with_pm1(pm1)
    delta, omega = smib.solve(q, MachineState(q.delta0, 0.0), 3.1)(grid)
    label = "unstable" if smib.is_unstable(q) else "stable"
    print(f"Pm1 = {pm1:.4f}: {label:8s} max delta {delta.max():7.3f} rad, "
          f"max omega {np.abs(omega).max():7.3f} rad/s")

# without damping the energy function is conserved along a trajectory
q = p.with_pm1(1.0)
delta, omega = smib.solve(q, MachineState(q.delta0, 0.0), 3.1)(smib.label_grid())
drift = np.ptp(smib.energy(delta, omega, q))
print(f"energy drift over 3.1 s: {drift:.2e}")

# damping moves the threshold up; bisection on simulations finds it
d = SmibParams.reference(Pm=0.4, Pm1=0.0, D=0.05)
print(f"damped (D = 0.05) threshold {smib.instability_lower_bound(d):.6f} p.u.")
