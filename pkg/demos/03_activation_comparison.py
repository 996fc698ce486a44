"""Rectified tanh against sigmoid on the output unit, from the same start.

Run with ``python demos/03_activation_comparison.py`` (about a minute).
"""

import numpy as np

from procest import ModelConfig, ProgressRegressor, SimulatorConfig, TrainConfig
from procest import compare_activations, fit_gmm, generate_dataset, split_dataset
from procest.nn import rtanh, rtanh_grad, sigmoid, sigmoid_grad

# rtanh is zero for negative inputs and follows tanh above zero. Near zero its
# slope is 1, four times the largest slope of the sigmoid.
z = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
print("z          ", z)
print("rtanh      ", np.round(rtanh(z), 3), "slope", np.round(rtanh_grad(z), 3))
print("sigmoid    ", np.round(sigmoid(z), 3), "slope", np.round(sigmoid_grad(z), 3))

cfg = SimulatorConfig(seed=1, num_traces=20, num_phases=5, feature_dim=8,
                      phase_duration_means=[10, 20, 20, 20, 10], boundary_start=True, boundary_end=True)
train_set, test_set = split_dataset(generate_dataset(cfg), 0.25, seed=1)
gmm = fit_gmm(train_set, equal_variance=True)
model = ProgressRegressor(ModelConfig(feature_dim=8, hidden=16, encoder_dims=(16,), fc_dims=(16, 16), seed=1))

# Both runs start from identical weights and get the same epoch budget.
result = compare_activations(model, train_set, test_set, gmm, TrainConfig(max_epochs=60, seed=1))
print(f"epochs to converge: rtanh {result.rtanh_epochs}, sigmoid {result.sigmoid_epochs}")
print(f"held-out MAE:       rtanh {result.rtanh_mae:.4f}, sigmoid {result.sigmoid_mae:.4f}")
print(f"relative epoch saving of rtanh: {result.speedup:+.0%}")
