"""Mapping completeness to phases with a one-dimensional mixture.

Run with ``python demos/01_phase_mixture.py``.
"""

import numpy as np

from procest import PhaseGMM, PhaseSchema, conditional_loss, fit_gmm, predict_phases
from procest import SimulatorConfig, generate_dataset

# A small synthetic dataset: four phases, the first one a pre-start phase.
cfg = SimulatorConfig(seed=1, num_traces=30, num_phases=4, feature_dim=4,
                      phase_duration_means=[5, 20, 40, 20], boundary_start=True)
traces = generate_dataset(cfg)
print("phases:", traces[0].schema.phases)

# Fit one kernel per interior phase on the completeness labels.
gmm = fit_gmm(traces, equal_variance=True)
print("kernel means:", np.round(gmm.means, 3))
print("shared std:  ", np.round(gmm.stds, 3))

# With equal weights and a shared std the decision regions are ordered
# intervals, so a non-decreasing completeness never skips or revisits a phase.
x = np.linspace(0, 1, 21)
print("completeness -> phase")
for xi, p in zip(x, predict_phases(gmm, x)):
    print(f"  {xi:.2f} -> {traces[0].schema.phases[p]}")

# Ties go to the earlier phase: midway between two equal kernels.
schema = PhaseSchema(("a", "b"))
tie = PhaseGMM(schema, [0.5, 0.5], [0.25, 0.75], [0.1, 0.1])
print("tie at 0.5 ->", schema.phases[int(predict_phases(tie, 0.5))])

# The phase loss is zero when the phase is right and otherwise the
# distance to the mean of the true phase's kernel.
for xi, true in ((0.2, 0), (0.6, 0)):
    loss, _ = conditional_loss(tie, xi, true)
    pred = schema.phases[int(predict_phases(tie, xi))]
    print(f"x={xi}, true={schema.phases[true]}: predicted {pred}, loss {loss:.2f}")
