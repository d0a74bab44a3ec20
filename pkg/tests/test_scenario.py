import json

import numpy as np
import pytest

from mammobot.scenario import STREAM_FORCE, STREAM_US, ScenarioConfig, rng_for


def test_json_round_trip(tmp_path, scenario):
    p = tmp_path / "s.json"
    scenario.save(p)
    back = ScenarioConfig.load(p)
    assert back == scenario
    assert back.to_dict() == scenario.to_dict()
    assert json.loads(p.read_text())["seed"] == scenario.seed


def test_partial_and_unknown_fields():
    sc = ScenarioConfig.from_dict({"seed": 3, "control": {"f_target": 4.0}})
    assert sc.seed == 3 and sc.control.f_target == 4.0 and sc.control.v_t == 7.27
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"sede": 3})
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"noise": {"bogus": 1}})


def test_noiseless_and_seed(scenario):
    q = scenario.noiseless()
    assert q.noise.marker_trans_mm == 0 and q.noise.us_px == 0 and q.us.noise_sigma == 0
    assert q.noise.visibility_halfwidth_mm == scenario.noise.visibility_halfwidth_mm
    assert scenario.with_seed(99).seed == 99


def test_rng_streams_are_independent_and_repeatable():
    a = rng_for(7, STREAM_US, 0).normal(size=5)
    assert np.array_equal(a, rng_for(7, STREAM_US, 0).normal(size=5))
    assert not np.array_equal(a, rng_for(7, STREAM_FORCE, 0).normal(size=5))
    assert not np.array_equal(a, rng_for(7, STREAM_US, 1).normal(size=5))
    assert not np.array_equal(a, rng_for(8, STREAM_US, 0).normal(size=5))


def test_derived_views(scenario):
    assert scenario.plate.is_valid()
    markers = scenario.marker_poses()
    assert len(markers) == 4
    local = scenario.plate.inverse().apply(np.array([m.translation for m in markers]))
    assert np.allclose(local[:, :2], scenario.marker_layout) and np.allclose(local[:, 2], 0)
    assert scenario.obstacle_array().shape == (1, 6)
    assert scenario.lesion_points().shape == (2, 3)
