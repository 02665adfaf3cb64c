"""
Toy classification under distribution shift
===========================================

Two training classes: a level-7 wave and a centered wave.  The test set
replaces part of every class-0 series with parabolic deviations of
growing size, so a classifier that stakes everything on the final value
breaks while one that commits to a decision early survives.

The planner trains on M-step windows and executes one interval at a
time; the reference model scores one whole-series rollout.  A few epochs
are enough to separate them (the acceptance protocol trains 20).
"""

import time

from npc.datagen import gen_toy_test, gen_toy_train
from npc.trainer import ModelBundle, TrainConfig, evaluate_classification, train


def fit(algorithm, epochs=8, seed=0):
    series, norm = gen_toy_train(seed=seed, return_normalizer=True)
    bundle = ModelBundle.build(
        task="classification", obs_dim=1, algorithm=algorithm,
        backend="ode_rnn", m=5, window=4, lam=0.2, action_dim=8,
        ctrl_hidden=16, model_hidden=16, substeps=2, seed=seed,
        normalizer=norm)
    t0 = time.time()
    report = train(bundle, series,
                   TrainConfig(epochs=epochs, batch=32, lr=1e-3, seed=seed))
    print(f"  {algorithm}: loss {report.epoch_losses[0]:.3f} -> "
          f"{report.epoch_losses[-1]:.3f} in {time.time() - t0:.0f}s")
    return bundle


print("training both models on 100 series...")
npc_bundle = fit("npc")
ref_bundle = fit("single_horizon")

test = gen_toy_test(seed=0)
print(f"\nscoring {len(test)} deviated test series...")
acc_npc = evaluate_classification(npc_bundle, test)["accuracy"]
acc_ref = evaluate_classification(ref_bundle, test)["accuracy"]
print(f"  planner accuracy:   {acc_npc:.4f}")
print(f"  reference accuracy: {acc_ref:.4f}")
print("\nthe acceptance suite runs the full 3-seed protocol at 20 epochs")
print("(pytest tests/test_acceptance.py -s)")
