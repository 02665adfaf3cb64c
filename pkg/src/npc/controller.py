"""Discrete planning side: GRU state tracker plus an action-sequence head.

The controller consumes observations one at a time (with the elapsed time
since the previous one appended) and keeps a hidden state z.  At an anchor
it emits M+1 action vectors covering the current time plus M future
horizons; a linear readout maps any single action back to label logits or
target values, which is what the action regularizer trains against.

All tensors are batched: states (B, H), observations (B, D), actions
(B, D_u).  Parameters carry the 'psi' tag.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .layers import GRUCell, Linear, MLP


@dataclass
class ControllerConfig:
    obs_dim: int
    hidden: int = 16
    action_dim: int = 8
    horizon: int = 5
    head_width: int = 0          # 0 means 2 * hidden
    readout_dim: int = 2         # classes for classification, D for regression

    def __post_init__(self):
        if self.head_width <= 0:
            self.head_width = 2 * self.hidden
        if min(self.obs_dim, self.hidden, self.action_dim, self.readout_dim) < 1:
            raise ValueError("controller dims must be positive")
        if self.horizon < 1:
            raise ValueError("horizon M must be >= 1")


@dataclass
class ControllerState:
    z: ad.Node

    @property
    def batch(self):
        return self.z.value.shape[0]


@dataclass
class ActionSequence:
    """Actions u_i .. u_{i+M'} anchored at observation index `anchor`.

    actions[k] has shape (B, D_u) and is in force on
    [anchor_times[k], anchor_times[k+1]]; anchor_times has M'+1 entries
    and may be a (M'+1,) vector or a (B, M'+1) matrix for ragged batches.
    """

    actions: list = field(repr=False)
    anchor: int = 0
    anchor_times: np.ndarray = None

    def __post_init__(self):
        if len(self.actions) < 2:
            raise ValueError("an action sequence needs at least two actions")
        times = np.asarray(self.anchor_times, dtype=np.float64)
        if times.shape[-1] != len(self.actions):
            raise ValueError(
                f"{len(self.actions)} actions need {len(self.actions)} anchor "
                f"times, got {times.shape}"
            )
        if np.any(np.diff(times, axis=-1) <= 0):
            raise ValueError("anchor times must be strictly increasing")
        self.anchor_times = times

    @property
    def horizon(self):
        return len(self.actions) - 1


class Controller:
    def __init__(self, cfg):
        self.cfg = cfg
        self.cell = GRUCell("ctrl.gru", cfg.obs_dim + 1, cfg.hidden)
        out = (cfg.horizon + 1) * cfg.action_dim
        self.head = MLP("ctrl.head", [cfg.hidden, cfg.head_width, out])
        self.readout_layer = Linear("ctrl.readout", cfg.action_dim, cfg.readout_dim)

    def init(self, store, rng, with_head=True):
        """Create parameters.  with_head=False builds only the state
        tracker, for reference models that use z itself as the action."""
        self.cell.init(store, "psi", rng)
        if with_head:
            self.head.init(store, "psi", rng)
            self.readout_layer.init(store, "psi", rng)

    def initial_state(self, batch=1):
        return ControllerState(ad.constant(np.zeros((batch, self.cfg.hidden))))

    def step(self, store, state, x, dt):
        """Advance z with observation x (B, D) seen dt after the previous one.

        dt is a float or (B, 1) array of nonnegative gaps and enters as an
        extra input channel.
        """
        b = state.batch
        dt = np.broadcast_to(np.asarray(dt, dtype=np.float64).reshape(-1, 1), (b, 1))
        if np.any(dt < 0):
            raise ValueError("observation gaps must be nonnegative")
        x = x if isinstance(x, ad.Node) else ad.constant(x)
        inp = ad.concat([x, ad.constant(dt.copy())], axis=1)
        return ControllerState(self.cell.step(store, state.z, inp))

    def emit(self, store, state, anchor, anchor_times, horizon=None):
        """Emit the action sequence for `horizon` intervals (default M).

        A shorter horizon (series tail) uses the leading slice of the full
        head output, so truncated windows stay consistent with full ones.
        """
        m = self.cfg.horizon if horizon is None else horizon
        if not 1 <= m <= self.cfg.horizon:
            raise ValueError(f"horizon must be in [1, {self.cfg.horizon}], got {m}")
        flat = self.head.apply(store, state.z)
        du = self.cfg.action_dim
        actions = [ad.narrow(flat, 1, k * du, du) for k in range(m + 1)]
        return ActionSequence(actions=actions, anchor=anchor, anchor_times=anchor_times)

    def readout(self, store, action):
        return self.readout_layer.apply(store, action)
