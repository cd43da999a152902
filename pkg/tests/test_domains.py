import json
import math

import numpy as np
import pytest

from hubats.domains import (
    COVID_GRIDS,
    REC_GRIDS,
    CovidConfig,
    build_covid_instance,
    build_model,
    generate_recommendation_suite,
    load_suite,
    rec_constraint_violations,
    rec_hub,
    save_suite,
    validate_suite,
)
from hubats.errors import GeneratorExhaustedError, InvalidParameterError
from hubats.hub import validate_hub


@pytest.fixture(scope="module")
def suite():
    return generate_recommendation_suite(20, np.random.default_rng(0))


def test_grid_sizes():
    # utility grid 6^3, simplex resolution 4 has 15 points in 3 dims
    assert REC_GRIDS.num_states(3, 3) == 6 ** 3 * 15 ** 3 == 729_000
    assert COVID_GRIDS.num_states(3, 3) == 10 ** 3 * 15 ** 3


def test_suite_is_valid_and_distinct(suite):
    assert len(suite) == 20
    assert validate_suite(suite) == []
    for hub in suite.hubs:
        v = hub.arm_values
        assert v[0] > v[1] >= v[2]
        assert hub.best_arm == 0
        assert not np.any(hub.arm_matrix == 1.0)
        assert set(hub.utility.values) <= set(REC_GRIDS.levels)
        assert [t.beta for t in hub.teachers] == [0.0, 0.01, 50.0]
        assert hub.gamma == 0.99


def test_suite_deterministic(suite):
    again = generate_recommendation_suite(20, np.random.default_rng(0))
    assert [t.hub for t in again.tasks] == suite.hubs
    assert [t.seed for t in again.tasks] == [t.seed for t in suite.tasks]


def test_save_load_round_trip(suite, tmp_path):
    path = save_suite(suite, tmp_path)
    loaded = load_suite(tmp_path)
    assert loaded.hubs == suite.hubs
    assert json.loads(path.read_text())["violations"] == []
    assert load_suite(path).hubs == suite.hubs


def test_constraint_violations_named():
    bad = rec_hub((0, 10, 0), [(0.5, 0.25, 0.25), (0.25, 0.5, 0.25), (0.5, 0.25, 0.25)])
    msgs = rec_constraint_violations(bad)
    assert any("arm 0" in m for m in msgs)
    assert any("identical" in m for m in msgs)
    det = rec_hub((10, 0, 0), [(1.0, 0, 0), (0.5, 0.5, 0), (0.25, 0.25, 0.5)])
    assert any("deterministic" in m for m in rec_constraint_violations(det))


def test_generator_exhaustion():
    with pytest.raises(GeneratorExhaustedError):
        generate_recommendation_suite(5, np.random.default_rng(0), max_attempts=3)
    with pytest.raises(InvalidParameterError):
        generate_recommendation_suite(0, np.random.default_rng(0))


def test_covid_instance():
    hub = build_covid_instance()
    assert validate_hub(hub) == []
    assert [t.name for t in hub.teachers] == ["Survey", "Antigen", "RT-PCR"]
    betas = [t.beta for t in hub.teachers]
    assert betas == sorted(betas)
    assert betas[0] == pytest.approx(math.log(0.7 / 0.3) / 9)
    assert [t.cost for t in hub.teachers] == pytest.approx([-0.06, -2.1, -3.1])
    assert hub.best_arm == 0
    assert hub.arm_values == pytest.approx([8.0, 6.0, 4.0])


def test_covid_config_validation():
    with pytest.raises(InvalidParameterError):
        build_covid_instance(CovidConfig(cost_scale=0.0))
    with pytest.raises(InvalidParameterError):
        build_covid_instance(CovidConfig(sensitivities={"Survey": 0.7}))


def test_covid_model_is_larger():
    hub = build_covid_instance()
    assert build_model(hub, COVID_GRIDS).num_states > 4 * REC_GRIDS.num_states(3, 3)
