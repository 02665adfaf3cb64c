"""
Why executing one step of an M-step plan is safe
================================================

On linear-quadratic problems the receding-horizon story is exactly
solvable, so the training scheme's two stability claims can be checked
against closed forms: the finite-horizon feedback converges to the
infinite-horizon one as the Riccati differential equation settles, and
the closed loop it induces decays exponentially with a rate approaching
the infinite-horizon margin.
"""

import numpy as np

from npc.lintheory import (double_integrator, fit_decay_rate,
                           infinite_closed_loop, integrate_rde,
                           mpc_closed_loop, scalar_model, solve_are)

# scalar benchmark: dx/dt = u, cost x^2 + u^2
model = scalar_model(0.0)
are = solve_are(model)
print(f"scalar ARE: P = {are.p[0, 0]:.12f} (closed form 1), loop pole "
      f"{are.a_closed[0, 0]:+.6f}, residual {are.residual:.1e}")

# the finite-horizon weight follows p(s) = tanh(s) exactly
s, p_path = integrate_rde(model, 6.0, p_terminal=np.zeros((1, 1)))
worst = np.max(np.abs(p_path[:, 0, 0] - np.tanh(s)))
print(f"RDE vs tanh(s) on [0, 6]: max gap {worst:.2e}")
gap = np.abs(p_path[:, 0, 0] - 1.0)
rate, _ = fit_decay_rate(s, gap, ref=1.0)
print(f"fitted decay of |p(s) - P|: {rate:.4f} (theory: 2 mu_inf = "
      f"{2 * are.margin:.4f})")

# plan T ahead, execute tau, re-plan; the loop still decays
print("\nreceding-horizon loops, x0 = 1:")
for horizon in (1.0, 2.0, 4.0, 8.0):
    t, xs = mpc_closed_loop(model, horizon, 0.5, [1.0], 12.0,
                            p_terminal=np.zeros((1, 1)))
    mu_hat, _ = fit_decay_rate(t, np.abs(xs[:, 0]))
    print(f"  T = {horizon:3g}: fitted mu = {mu_hat:.4f} "
          f"(mu_inf = {are.margin:.4f})")

# and the trajectory itself converges to the infinite-horizon one
t_inf, x_inf = infinite_closed_loop(model, [1.0], 12.0, step=0.01)
print("\nsup |x_T - x_inf| shrinks as the horizon doubles:")
for horizon in (1.0, 2.0, 4.0, 8.0):
    t, xs = mpc_closed_loop(model, horizon, 0.5, [1.0], 12.0,
                            p_terminal=np.zeros((1, 1)))
    k = min(len(t), len(t_inf))
    disc = np.max(np.abs(xs[:k, 0] - x_inf[:k, 0]))
    print(f"  T = {horizon:3g}: {disc:.3e}")

# same exercise on a genuinely 2nd-order plant
di = double_integrator()
are2 = solve_are(di)
print(f"\ndouble integrator: P =\n{np.round(are2.p, 6)}")
print(f"(closed form [[sqrt2, 1], [1, sqrt2]]), margin {are2.margin:.4f}")
t, xs = mpc_closed_loop(di, 8.0, 0.5, [1.0, 0.0], 16.0,
                        p_terminal=np.zeros((2, 2)))
mu_hat, _ = fit_decay_rate(t, np.linalg.norm(xs, axis=1))
print(f"T=8 receding-horizon decay: {mu_hat:.4f} vs mu_inf {are2.margin:.4f}")
