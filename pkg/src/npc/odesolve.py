"""Fixed-step differentiable ODE solvers (euler, rk4).

Integration is unrolled onto the autodiff tape, so d(solution)/d(inputs)
is the exact derivative of the discrete scheme (discretize then optimize).
Each interval between requested evaluation times is covered by `substeps`
uniform steps.  Interval endpoints may be floats or (B, 1) arrays, which
lets a batch of series with different clocks integrate in lockstep; time
enters the derivative callback in the same form.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

METHODS = ("euler", "rk4")


class BlowupError(FloatingPointError):
    """Raised when the state stops being finite; carries the time."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"non-finite state at t={t}")


@dataclass
class TimeGrid:
    """Strictly increasing evaluation times plus per-interval substeps."""

    eval_times: list
    substeps: int = 10

    def __post_init__(self):
        self.eval_times = [float(t) for t in self.eval_times]
        if len(self.eval_times) < 2:
            raise ValueError("TimeGrid needs at least two evaluation times")
        if any(b <= a for a, b in zip(self.eval_times, self.eval_times[1:])):
            raise ValueError("TimeGrid times must be strictly increasing")
        if self.substeps < 1:
            raise ValueError("TimeGrid substeps must be >= 1")


@dataclass
class Trajectory:
    times: list
    states: list = field(repr=False)


def _rep(t):
    # representative float for blow-up reporting when t is an array
    return float(np.min(t)) if isinstance(t, np.ndarray) else float(t)


def _check_finite(state, t):
    if not np.all(np.isfinite(state.value)):
        raise BlowupError(_rep(t))


def _step(f, h, t, dt, method):
    if method == "euler":
        return ad.add(h, ad.mul_const(f(h, t), dt))
    k1 = f(h, t)
    tm = t + dt / 2.0
    k2 = f(ad.add(h, ad.mul_const(k1, dt / 2.0)), tm)
    k3 = f(ad.add(h, ad.mul_const(k2, dt / 2.0)), tm)
    k4 = f(ad.add(h, ad.mul_const(k3, dt)), t + dt)
    acc = ad.add(ad.add(k1, k4), ad.mul_const(ad.add(k2, k3), 2.0))
    return ad.add(h, ad.mul_const(acc, dt / 6.0))


def integrate_span(f, h, t0, t1, substeps, method, interior=()):
    """Advance h from t0 to t1; also report states at `interior` times.

    interior must be sorted and strictly inside (t0, t1); it is honored by
    splitting substeps at those exact times, so reported states carry no
    interpolation error beyond the scheme itself.  Returns
    (list of (t, state) for interior times, end state).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    scalar_time = not isinstance(t0, np.ndarray)
    if scalar_time:
        cuts = sorted(set(np.linspace(t0, t1, substeps + 1)[1:-1]).union(interior))
        points = [t0, *cuts, t1]
        wanted = set(interior)
    else:
        if interior:
            raise ValueError("interior sampling requires scalar interval times")
        fracs = np.linspace(0.0, 1.0, substeps + 1)
        points = [t0 + (t1 - t0) * fr for fr in fracs]
        wanted = set()

    out = []
    for a, b in zip(points, points[1:]):
        h = _step(f, h, a, b - a, method)
        _check_finite(h, b)
        if scalar_time and b in wanted:
            out.append((b, h))
    return out, h


def ode_solve(derivative, h0, grid, method="rk4"):
    """Integrate dh/dt = derivative(h, t) across grid.eval_times.

    h0 may be a Node or an array; states[k] is the solution at
    eval_times[k], with states[0] == h0.
    """
    h = h0 if isinstance(h0, ad.Node) else ad.constant(h0)
    _check_finite(h, grid.eval_times[0])
    states = [h]
    for a, b in zip(grid.eval_times, grid.eval_times[1:]):
        _, h = integrate_span(derivative, h, a, b, grid.substeps, method)
        states.append(h)
    return Trajectory(times=list(grid.eval_times), states=states)


def ode_solve_controlled(derivative, h0, actions, grid, method="rk4"):
    """Like ode_solve but with one action held constant per interval.

    derivative(h, u, t) sees actions[k] throughout
    [eval_times[k], eval_times[k+1]].  len(actions) must equal the number
    of intervals.
    """
    n_int = len(grid.eval_times) - 1
    if len(actions) != n_int:
        raise ValueError(
            f"need exactly {n_int} actions for {n_int} intervals, got {len(actions)}"
        )
    h = h0 if isinstance(h0, ad.Node) else ad.constant(h0)
    _check_finite(h, grid.eval_times[0])
    states = [h]
    for k, (a, b) in enumerate(zip(grid.eval_times, grid.eval_times[1:])):
        u = actions[k]
        _, h = integrate_span(lambda s, t: derivative(s, u, t), h, a, b,
                              grid.substeps, method)
        states.append(h)
    return Trajectory(times=list(grid.eval_times), states=states)
