import numpy as np
import pytest

import hybridann as ha

# populated by the acceptance suite; echoed after the run since per-test
# prints are swallowed by output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_dataset():
    """n=600, m=12, L=3, pool=3 — shared by graph/router unit tests."""
    features = ha.generate_synthetic(600, 12, "gaussian", seed=11)
    schema, attrs = ha.generate_attributes(600, 3, 3, seed=12)
    stats = ha.sample_statistics(features, attrs, 300, seed=13)
    config = ha.compute_alpha(stats, features.shape[0], schema.l)
    return features, schema, attrs, config


@pytest.fixture(scope="session")
def small_graph(small_dataset):
    features, schema, attrs, config = small_dataset
    params = ha.BuildParams(gamma=24, gamma_new=24, seed=3)
    return ha.build(features, attrs, schema, params, config)


@pytest.fixture(scope="session")
def small_queries(small_dataset):
    features, schema, attrs, config = small_dataset
    return ha.generate_queries(features, attrs, 20, 3, min_matches=5, seed=14)
