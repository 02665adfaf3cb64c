"""Continuous-time hidden-state models driven by planned actions.

Two backends evolve a hidden state h across the action sequence's span:

* ode_rnn: between anchors, dh/dt = f(h, u_k, t) with the interval's
  action held constant; at each interval end a GRU jump folds in the next
  action.  f is an MLP over concat(h, u, t) with tanh hidden layers.
* cde: the actions (with time appended as an extra channel) are knots of
  a natural cubic spline U(t); dh/dt = F(h, t) dU/dt where F maps the
  state to an H x (D_u + 1) matrix, bounded by a final tanh.

Both are integrated by the fixed-step solvers on the tape, so gradients
flow into the actions (through the spline for the cde) and into the phi
parameters.  States are (B, H); interval times may be shared floats or
per-series (B, 1) arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .layers import GRUCell, Linear, MLP
from .odesolve import BlowupError, integrate_span
from .spline import CubicPath

BACKENDS = ("ode_rnn", "cde")


@dataclass
class ContinuousConfig:
    obs_dim: int
    action_dim: int
    hidden: int = 16
    backend: str = "ode_rnn"
    fdepth: int = 2              # hidden layers in the dynamics nets
    fwidth: int = 0              # 0 means 2 * hidden
    jumps: bool = True           # ode_rnn cell jumps at interval ends
    cde_tanh: bool = True        # bound the cde matrix output
    readout_dim: int = 2         # classes or observation dim

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.fwidth <= 0:
            self.fwidth = 2 * self.hidden
        if self.fdepth < 0:
            raise ValueError("fdepth must be >= 0")


@dataclass
class HiddenTrajectory:
    """States h(t_{i+1}) .. h(t_{i+M'}) for one window."""

    times: np.ndarray
    states: list = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.shape[-1] != len(self.states):
            raise ValueError(
                f"{len(self.states)} states need matching times, got {times.shape}"
            )
        self.times = times


def _tcol(t, batch):
    if isinstance(t, np.ndarray):
        return ad.constant(np.broadcast_to(t.reshape(-1, 1), (batch, 1)).copy())
    return ad.constant(np.full((batch, 1), float(t)))


class ContinuousModel:
    def __init__(self, cfg):
        self.cfg = cfg
        h, du = cfg.hidden, cfg.action_dim
        self.encoder = Linear("enc", cfg.obs_dim, h)
        dims = [h + du + 1] + [cfg.fwidth] * cfg.fdepth + [h]
        self.fnet = MLP("f", dims)
        self.jump_cell = GRUCell("jump", du, h)
        cde_dims = [h + 1] + [cfg.fwidth] * cfg.fdepth + [h * (du + 1)]
        self.cde_net = MLP("cde", cde_dims, out_tanh=cfg.cde_tanh)
        self.readout_layer = Linear("readout", h, cfg.readout_dim)

    def init(self, store, rng):
        self.encoder.init(store, "phi", rng)
        if self.cfg.backend == "ode_rnn":
            self.fnet.init(store, "phi", rng)
            self.jump_cell.init(store, "phi", rng)
        else:
            self.cde_net.init(store, "phi", rng)
        self.readout_layer.init(store, "phi", rng)

    # -- pieces --------------------------------------------------------------

    def encode_initial(self, store, x):
        """First observation (B, D) -> initial hidden state (B, H)."""
        x = x if isinstance(x, ad.Node) else ad.constant(x)
        return ad.tanh(self.encoder.apply(store, x))

    def f(self, store, h, u, t):
        inp = ad.concat([h, u, _tcol(t, h.value.shape[0])], axis=1)
        return self.fnet.apply(store, inp)

    def cde_matrix(self, store, h, t):
        b = h.value.shape[0]
        inp = ad.concat([h, _tcol(t, b)], axis=1)
        flat = self.cde_net.apply(store, inp)
        return ad.reshape(flat, (b, self.cfg.hidden, self.cfg.action_dim + 1))

    def readout(self, store, h):
        return self.readout_layer.apply(store, h)

    # -- window evolution ------------------------------------------------------

    def evolve(self, store, h0, seq, substeps=10, method="rk4"):
        """Evolve h across the whole action window.

        h0: Node or array (B, H) at seq.anchor_times[0].  Returns a
        HiddenTrajectory with one post-transition state per horizon.
        """
        if self.cfg.backend == "ode_rnn":
            return self._evolve_ode_rnn(store, h0, seq, substeps, method)
        return self._evolve_cde(store, h0, seq, substeps, method)

    def _interval_times(self, seq, k):
        times = seq.anchor_times
        if times.ndim == 1:
            return float(times[k]), float(times[k + 1])
        return times[:, k : k + 1], times[:, k + 1 : k + 2]

    def _evolve_ode_rnn(self, store, h0, seq, substeps, method):
        h = h0 if isinstance(h0, ad.Node) else ad.constant(h0)
        states = []
        for k in range(seq.horizon):
            t0, t1 = self._interval_times(seq, k)
            u = seq.actions[k]
            _, h = integrate_span(lambda s, t: self.f(store, s, u, t),
                                  h, t0, t1, substeps, method)
            if self.cfg.jumps:
                h = self.jump_cell.step(store, h, seq.actions[k + 1])
            states.append(h)
        times = seq.anchor_times[..., 1:]
        return HiddenTrajectory(times=times, states=states)

    def _cde_knots(self, seq):
        """Stack actions with the time channel: (B, K, D_u + 1) node."""
        b = seq.actions[0].value.shape[0]
        k = len(seq.actions)
        rows = [ad.reshape(a, (b, 1, self.cfg.action_dim)) for a in seq.actions]
        act = ad.concat(rows, axis=1)
        times = seq.anchor_times
        if times.ndim == 1:
            tch = np.broadcast_to(times[None, :, None], (b, k, 1)).copy()
        else:
            tch = times[:, :, None].copy()
        return ad.concat([act, ad.constant(tch)], axis=2)

    def _cde_derivative_rows(self, seq, substeps):
        """Constant spline-derivative weights at every rk4 stage time.

        Returns (weights, stage_times): weights is (S, K) for a shared
        clock or (B, S, K) ragged; stage row 3*(k*substeps+j)+q holds the
        start/mid/end stage of substep j in interval k.
        """
        times = seq.anchor_times
        tmat = times[None, :] if times.ndim == 1 else times
        all_w, all_t = [], []
        for row in tmat:
            stages = []
            for k in range(row.size - 1):
                grid = np.linspace(row[k], row[k + 1], substeps + 1)
                for j in range(substeps):
                    stages.extend((grid[j], 0.5 * (grid[j] + grid[j + 1]), grid[j + 1]))
            stages = np.asarray(stages)
            path = CubicPath(row, np.zeros((row.size, 1)))
            all_w.append(path.derivative_weights(stages))
            all_t.append(stages)
        if times.ndim == 1:
            return all_w[0], all_t[0]
        return np.stack(all_w), np.stack(all_t)

    def _evolve_cde(self, store, h0, seq, substeps, method, first_only=False):
        h = h0 if isinstance(h0, ad.Node) else ad.constant(h0)
        b = h.value.shape[0]
        knots = self._cde_knots(seq)
        weights, stage_times = self._cde_derivative_rows(seq, substeps)
        du_rows = ad.matmul(ad.constant(weights), knots)   # (B, S, C)

        def du_at(idx):
            row = ad.narrow(du_rows, 1, idx, 1)
            return ad.reshape(row, (b, self.cfg.action_dim + 1))

        def stage_t(idx):
            if stage_times.ndim == 1:
                return float(stage_times[idx])
            return stage_times[:, idx : idx + 1]

        def rhs(state, t, idx):
            return ad.bmatvec(self.cde_matrix(store, state, t), du_at(idx))

        states = []
        row = 0
        n_intervals = 1 if first_only else seq.horizon
        for k in range(n_intervals):
            t0, t1 = self._interval_times(seq, k)
            dt = (t1 - t0) / substeps
            for j in range(substeps):
                ia, im, ib = row, row + 1, row + 2
                row += 3
                if method == "euler":
                    h = ad.add(h, ad.mul_const(rhs(h, stage_t(ia), ia), dt))
                else:
                    k1 = rhs(h, stage_t(ia), ia)
                    k2 = rhs(ad.add(h, ad.mul_const(k1, dt / 2.0)), stage_t(im), im)
                    k3 = rhs(ad.add(h, ad.mul_const(k2, dt / 2.0)), stage_t(im), im)
                    k4 = rhs(ad.add(h, ad.mul_const(k3, dt)), stage_t(ib), ib)
                    acc = ad.add(ad.add(k1, k4), ad.mul_const(ad.add(k2, k3), 2.0))
                    h = ad.add(h, ad.mul_const(acc, dt / 6.0))
                if not np.all(np.isfinite(h.value)):
                    raise BlowupError(float(np.min(t1)) if isinstance(t1, np.ndarray) else t1)
            states.append(h)
        times = seq.anchor_times[..., 1 : n_intervals + 1]
        return HiddenTrajectory(times=times, states=states)

    # -- committed step --------------------------------------------------------

    def commit_step(self, store, h, seq, substeps=10, method="rk4", queries=()):
        """Advance the committed state across the window's first interval.

        Uses the emitted window exactly as the planner shaped it: the
        ode_rnn flows with the first action and jumps on the second; the
        cde integrates the window spline restricted to its first leg.
        queries are times strictly inside the interval at which pre-jump
        states are also reported.  Returns (list of (t, state), end state).
        """
        t0, t1 = self._interval_times(seq, 0)
        if self.cfg.backend == "ode_rnn":
            u = seq.actions[0]
            out, h = integrate_span(lambda s, t: self.f(store, s, u, t),
                                    h, t0, t1, substeps, method, interior=queries)
            if self.cfg.jumps:
                h = self.jump_cell.step(store, h, seq.actions[1])
            return out, h

        times = seq.anchor_times
        if times.ndim == 2:
            if queries:
                raise ValueError("interior queries need a shared clock")
            traj = self._evolve_cde(store, h, seq, substeps, method, first_only=True)
            return [], traj.states[-1]

        knots = self._cde_knots(seq)
        b = h.value.shape[0]
        path = CubicPath(times, np.zeros((times.size, 1)))

        def deriv(state, t):
            w = path.derivative_weights([float(t)])
            du = ad.matmul(ad.constant(w), knots)
            du = ad.reshape(du, (b, self.cfg.action_dim + 1))
            return ad.bmatvec(self.cde_matrix(store, state, t), du)

        return integrate_span(deriv, h, float(times[0]), float(times[1]),
                              substeps, method, interior=queries)
