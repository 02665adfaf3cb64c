import numpy as np
import pytest

import npc.autodiff as ad
from npc.controller import ActionSequence, Controller, ControllerConfig
from npc.params import ParamStore


def _controller(m=3, with_head=True, seed=0):
    cfg = ControllerConfig(obs_dim=2, hidden=4, action_dim=3, horizon=m,
                           readout_dim=2)
    ctrl = Controller(cfg)
    store = ParamStore()
    ctrl.init(store, np.random.default_rng(seed), with_head=with_head)
    return ctrl, store


def test_emit_full_horizon_shapes():
    ctrl, store = _controller(m=3)
    z = ctrl.initial_state(batch=5)
    times = np.array([0.0, 0.5, 1.0, 1.5])
    seq = ctrl.emit(store, z, 0, times)
    assert seq.horizon == 3
    assert len(seq.actions) == 4
    assert all(a.value.shape == (5, 3) for a in seq.actions)


def test_truncated_horizon_is_leading_slice():
    ctrl, store = _controller(m=3)
    rng = np.random.default_rng(1)
    z = ctrl.initial_state(batch=2)
    z = ctrl.step(store, z, rng.normal(size=(2, 2)), 0.3)
    full = ctrl.emit(store, z, 0, np.array([0.0, 1.0, 2.0, 3.0]))
    short = ctrl.emit(store, z, 0, np.array([0.0, 1.0, 2.0]), horizon=2)
    for k in range(3):
        np.testing.assert_array_equal(short.actions[k].value,
                                      full.actions[k].value)


def test_horizon_bounds_checked():
    ctrl, store = _controller(m=3)
    z = ctrl.initial_state()
    with pytest.raises(ValueError):
        ctrl.emit(store, z, 0, np.array([0.0]), horizon=0)
    with pytest.raises(ValueError):
        ctrl.emit(store, z, 0, np.arange(6.0), horizon=5)


def test_step_rejects_negative_gap():
    ctrl, store = _controller()
    z = ctrl.initial_state(batch=2)
    with pytest.raises(ValueError):
        ctrl.step(store, z, np.zeros((2, 2)), -0.1)


def test_step_broadcasts_dt():
    ctrl, store = _controller()
    z = ctrl.initial_state(batch=3)
    x = np.random.default_rng(2).normal(size=(3, 2))
    scalar = ctrl.step(store, z, x, 0.5)
    vector = ctrl.step(store, z, x, np.full((3, 1), 0.5))
    np.testing.assert_array_equal(scalar.z.value, vector.z.value)
    assert scalar.batch == 3


def test_dt_changes_state():
    ctrl, store = _controller()
    z = ctrl.initial_state(batch=1)
    x = np.ones((1, 2))
    a = ctrl.step(store, z, x, 0.1)
    b = ctrl.step(store, z, x, 2.0)
    assert not np.allclose(a.z.value, b.z.value)


def test_with_head_false_builds_only_the_cell():
    _, store = _controller(with_head=False)
    assert all(n.startswith("ctrl.gru.") for n in store.names())
    _, full = _controller(with_head=True)
    heads = [n for n in full.names() if n.startswith("ctrl.head.")]
    reads = [n for n in full.names() if n.startswith("ctrl.readout.")]
    assert heads and reads


def test_readout_shape():
    ctrl, store = _controller()
    out = ctrl.readout(store, ad.constant(np.zeros((4, 3))))
    assert out.value.shape == (4, 2)


def test_init_deterministic_by_seed():
    _, s1 = _controller(seed=7)
    _, s2 = _controller(seed=7)
    for name in s1.names():
        np.testing.assert_array_equal(s1.value(name), s2.value(name))


def test_action_sequence_validation():
    a = [ad.constant(np.zeros((1, 2)))] * 2
    with pytest.raises(ValueError):
        ActionSequence(actions=a[:1], anchor=0, anchor_times=np.array([0.0]))
    with pytest.raises(ValueError):
        ActionSequence(actions=a, anchor=0, anchor_times=np.array([0.0]))
    with pytest.raises(ValueError):
        ActionSequence(actions=a, anchor=0, anchor_times=np.array([1.0, 1.0]))
    seq = ActionSequence(actions=a, anchor=3,
                         anchor_times=np.array([1.0, 2.0]))
    assert seq.horizon == 1


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(obs_dim=0, hidden=4, action_dim=3)
    with pytest.raises(ValueError):
        ControllerConfig(obs_dim=1, hidden=4, action_dim=3, horizon=0)
    cfg = ControllerConfig(obs_dim=1, hidden=5, action_dim=2, head_width=0)
    assert cfg.head_width == 10
