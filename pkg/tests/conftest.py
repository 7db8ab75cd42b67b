# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Pytest configuration and shared fixtures for Envelopes tests.
"""

import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
import yaml


@dataclass(frozen=True)
class StatsSettings:
    """Shared thresholds for statistical tests."""
    significance: float = 1e-3
    samples: int = 100_000
    seed: int = 20240613


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def stats_settings():
    """Significance level, sample size and seed for chi-square checks."""
    return StatsSettings()


@pytest.fixture
def small_space():
    """Five right-aligned cells of width 1 on (0, 5]."""
    from src.measure_core import make_uniform_grid

    return make_uniform_grid(0.0, 5.0, 5, align="right")


@pytest.fixture
def lattice_model():
    """Exact-lift envelope model on the integer lattice 1..30."""
    from src.envelope_models import build_envelope_pair
    from src.measure_core import make_uniform_grid

    return build_envelope_pair(make_uniform_grid(0.0, 30.0, 30, align="right"))


@pytest.fixture(scope="session")
def exponential_bayes():
    """Bayesian envelope model with an Exp(1) prior on the default grid."""
    from src.envelope_models import DensitySpec, build_bayesian_envelope

    return build_bayesian_envelope(DensitySpec("expon"), 0.0, 30.0, 30000)


@pytest.fixture
def sample_config_dict():
    """Return a minimal valid flat config dictionary."""
    return {
        "command": "envelope-lln",
        "v1": 10.0,
        "v2": 20.0,
        "trials": 1000,
        "seed": 7,
        "chunk_size": 256,
    }


@pytest.fixture
def sample_config_yaml(temp_dir, sample_config_dict):
    """Create a sample config YAML file."""
    config_path = temp_dir / "envelopes.yaml"
    with open(config_path, 'w') as f:
        yaml.dump(sample_config_dict, f)
    return config_path


def _enumerate_posterior(points, weights, density, alpha, step):
    """
    Posterior at alpha by enumerating every (state, branch, outcome bin).

    Branch 1 pays w, branch 2 pays 2w; each branch has probability 1/2 and
    spreads the image of cell (w - step, w] uniformly over bins of width step.
    """
    masses = np.array([density(w) * nu for w, nu in zip(points, weights)])
    masses = masses / masses.sum()
    j_alpha = int(round(alpha / step))

    joint = np.zeros(len(points))
    for i, w in enumerate(points):
        for scale in (1, 2):
            a = scale * (w - step) / step
            c = scale * w / step
            for j in range(int(np.floor(a + 1e-9)) + 1, int(np.ceil(c - 1e-9)) + 1):
                if j != j_alpha:
                    continue
                share = (min(c, j) - max(a, j - 1)) / (c - a)
                joint[i] += masses[i] * 0.5 * share
    return joint / joint.sum()


@pytest.fixture
def brute_force_posterior():
    """Oracle posterior at alpha for the cell-resolved envelope model."""
    return _enumerate_posterior
