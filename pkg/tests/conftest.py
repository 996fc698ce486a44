import numpy as np
import pytest

from procest.simulator import SimulatorConfig, generate_dataset
from procest.trace import PhaseSchema, ProcessTrace


def make_trace(times, phase_marks=((0, 0),), duration=None, features=None, schema=None, id="t0"):
    times = np.asarray(times, dtype=np.float64)
    if features is None:
        features = np.zeros((len(times), 2))
    if schema is None:
        schema = PhaseSchema(("a", "b", "c"))
    if duration is None:
        duration = float(times[-1])
    return ProcessTrace(id, schema, times, features, tuple(phase_marks), duration)


@pytest.fixture(scope="session")
def small_dataset():
    cfg = SimulatorConfig(seed=3, num_traces=8, num_phases=4, feature_dim=5,
                          phase_duration_means=[6, 8, 8, 6], phase_duration_stds=[1, 1, 1, 1])
    return generate_dataset(cfg)
