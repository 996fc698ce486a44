"""Train a small regressor and stream a held-out trace through it.

Run with ``python demos/02_train_and_stream.py`` (about half a minute).
"""

import numpy as np

from procest import ModelConfig, OnlineEstimator, ProgressRegressor, SimulatorConfig, TrainConfig
from procest import classification_report, fit_gmm, generate_dataset, label_completeness
from procest import split_dataset, train, two_set_many

cfg = SimulatorConfig(seed=3, num_traces=16, num_phases=4, feature_dim=6,
                      phase_duration_means=[10, 15, 15, 10])
traces = generate_dataset(cfg)
train_set, test_set = split_dataset(traces, 0.25, seed=3)
print(f"{len(train_set)} training traces, {len(test_set)} held out")

gmm = fit_gmm(train_set, equal_variance=True)
model = ProgressRegressor(ModelConfig(feature_dim=6, hidden=16, encoder_dims=(16,), fc_dims=(16, 16), seed=3))
model, history = train(model, train_set, gmm, TrainConfig(max_epochs=60, learning_rate=0.005, seed=3))
print(f"trained {len(history)} epochs, final loss {history[-1].total:.4f}")

# Stream one held-out trace frame by frame, as a live monitor would.
trace = test_set[0]
est = OnlineEstimator(model, gmm)
labels = label_completeness(trace)
print("   t      est   label  phase       remaining")
for i, (frame, label) in enumerate(zip(trace.frames, labels)):
    rep = est.step(frame)
    if i % 5 == 0 or i == len(labels) - 1:
        rem = "unknown" if rep.remaining_s is None else f"{rep.remaining_s:5.1f} s"
        print(f"{rep.timestamp:6.1f}  {rep.completeness:.3f}  {label:.3f}  {rep.phase:<10}  {rem}")

# The same model scored over every held-out trace.
gt = [t.phase_per_frame() for t in test_set]
pred = [np.array([r.phase_index for r in OnlineEstimator(model, gmm).run(t.frames)]) for t in test_set]
print(classification_report(np.concatenate(gt), np.concatenate(pred)))
print(two_set_many(gt, pred))
