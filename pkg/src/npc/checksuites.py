"""Composed-model finite-difference suites for the grad-check registry.

Each suite packs a real model's parameters into one flat vector, rebuilds
the forward pass through a store view onto that vector, and hands the
scalar objective to gradcheck.check_function.  That exercises the full
tape (controller replay, emission, both continuous backends, every cost)
against the same 1e-4 oracle as the individual ops.

Importing this module registers the suites; npc/__init__ does so.
"""

import numpy as np

from . import autodiff as ad
from . import gradcheck
from . import objective as obj
from .continuous import ContinuousConfig, ContinuousModel
from .controller import Controller, ControllerConfig
from .params import ParamStore


class _VectorStore:
    """Read-only store view where every parameter is a slice of one leaf."""

    def __init__(self, template):
        self._layout = {}
        offset = 0
        chunks = []
        for name in template.names():
            v = template.value(name)
            self._layout[name] = (offset, v.shape)
            chunks.append(v.ravel())
            offset += v.size
        self.flat0 = np.concatenate(chunks)
        self._leaf = None

    def bind(self, leaf):
        self._leaf = leaf

    def node(self, name):
        off, shape = self._layout[name]
        size = int(np.prod(shape))
        return ad.reshape(ad.narrow(self._leaf, 0, off, size), shape)

    def new_tape(self):
        pass


def _build(task, backend, seed):
    ccfg = ControllerConfig(obs_dim=2, hidden=3, action_dim=2, horizon=2,
                            head_width=3,
                            readout_dim=2)
    mcfg = ContinuousConfig(obs_dim=2, action_dim=2, hidden=3,
                            backend=backend, fdepth=1, fwidth=3,
                            readout_dim=2)
    store = ParamStore()
    rng = np.random.default_rng(seed)
    ctrl = Controller(ccfg)
    model = ContinuousModel(mcfg)
    ctrl.init(store, rng)
    model.init(store, rng)
    return ctrl, model, store


def _window(ctrl, model, vstore, leaf, task, times, values, labels,
            substeps=2):
    """One full planning window: replay, emit, evolve, cost + regularizer."""
    vstore.bind(leaf)
    z = ctrl.initial_state(batch=values.shape[0])
    dts = np.diff(times, prepend=times[0])
    for j in range(len(times) - 2):
        z = ctrl.step(vstore, z, values[:, j], dts[j])
    anchor = len(times) - 3
    seq = ctrl.emit(vstore, z, anchor, times[anchor : anchor + 3], horizon=2)
    h0 = model.encode_initial(vstore, values[:, 0])
    traj = model.evolve(vstore, h0, seq, substeps=substeps, method="rk4")
    if task == "classification":
        cost = obj.classification_cost(model, vstore, traj, labels)
        reg = obj.action_regularizer(ctrl, vstore, seq, labels, task)
    else:
        states = [h0] + traj.states
        targets = [values[:, anchor + k] for k in range(3)]
        cost = obj.regression_cost(model, vstore, states, targets)
        reg = obj.action_regularizer(ctrl, vstore, seq, targets, task)
    return obj.total_objective(cost, reg, 0.3)


def _suite(task, backend):
    def run(seed=0):
        ctrl, model, store = _build(task, backend, seed)
        rng = np.random.default_rng(seed + 1)
        times = np.array([0.0, 0.3, 0.7, 1.0, 1.6])
        values = rng.normal(size=(2, 5, 2))
        labels = np.array([0, 1])
        vstore = _VectorStore(store)

        def f(leaf):
            return _window(ctrl, model, vstore, leaf, task, times, values,
                           labels)

        name = f"{backend}.{task}"
        err = gradcheck.check_function(f, vstore.flat0, name=name)
        return {name: err}

    return run


def _costs_suite(seed=0):
    """Each cost in isolation on the ode_rnn pipeline."""
    rng = np.random.default_rng(seed + 2)
    times = np.array([0.0, 0.4, 0.9, 1.5, 2.0])
    values = rng.normal(size=(2, 5, 2))
    labels = np.array([1, 0])
    out = {}
    for task in ("classification", "regression"):
        ctrl, model, store = _build(task, "ode_rnn", seed)
        vstore = _VectorStore(store)

        def f(leaf, task=task, ctrl=ctrl, model=model, vstore=vstore):
            return _window(ctrl, model, vstore, leaf, task, times, values,
                           labels)

        out[f"cost.{task}"] = gradcheck.check_function(
            f, vstore.flat0, name=f"cost.{task}")

    # regularizer alone: psi-only graph, phi part must stay untouched
    ctrl, model, store = _build("classification", "ode_rnn", seed)
    vstore = _VectorStore(store)

    def f_reg(leaf):
        vstore.bind(leaf)
        z = ctrl.initial_state(batch=2)
        for j in range(3):
            z = ctrl.step(vstore, z, values[:, j], 0.4)
        seq = ctrl.emit(vstore, z, 2, times[2:5], horizon=2)
        return obj.action_regularizer(ctrl, vstore, seq, labels,
                                      "classification")

    out["cost.regularizer"] = gradcheck.check_function(
        f_reg, vstore.flat0, name="cost.regularizer")
    return out


def _controller_suite(seed=0):
    """Replay + emission + controller readout, no continuous model."""
    ctrl, _, store = _build("classification", "ode_rnn", seed)
    rng = np.random.default_rng(seed + 3)
    values = rng.normal(size=(2, 4, 2))
    times = np.array([0.0, 0.5, 1.0, 1.5, 2.1, 2.4])
    vstore = _VectorStore(store)

    def f(leaf):
        vstore.bind(leaf)
        z = ctrl.initial_state(batch=2)
        for j in range(4):
            z = ctrl.step(vstore, z, values[:, j], 0.5)
        seq = ctrl.emit(vstore, z, 3, times[3:6], horizon=2)
        total = None
        for u in seq.actions:
            term = ad.mean_(ad.square(ctrl.readout(vstore, u)))
            total = term if total is None else ad.add(total, term)
        return total

    err = gradcheck.check_function(f, vstore.flat0, name="controller")
    return {"controller": err}


gradcheck.register("controller", _controller_suite)
gradcheck.register("ode_rnn", _suite("classification", "ode_rnn"))
gradcheck.register("cde", _suite("regression", "cde"))
gradcheck.register("costs", _costs_suite)
