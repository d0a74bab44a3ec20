import warnings
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mammobot.errors import RankDeficient
from mammobot.forcecalib import (
    BiasModel,
    ExtrapolationWarning,
    Wrench,
    bernstein_basis,
    compensate,
    fit_bias_model,
    pose_vector,
)
from mammobot.geometry import RigidTransform
from mammobot.pipeline import calibrate_force
from mammobot.scenario import STREAM_FORCE, TOOL_DOWN, rng_for
from mammobot.simworld import force_dataset, gravity_wrench


def test_bernstein_endpoints_and_midpoint():
    assert np.array_equal(bernstein_basis(0.0, 3), [1, 0, 0, 0])
    assert np.array_equal(bernstein_basis(1.0, 3), [0, 0, 0, 1])
    assert np.allclose(bernstein_basis(0.5, 2), [0.25, 0.5, 0.25], atol=0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 12))
def test_bernstein_partition_of_unity_and_formula(u, n):
    b = bernstein_basis(u, n)
    assert abs(b.sum() - 1.0) < 1e-12
    assert np.all(b >= 0)
    # direct evaluation term by term
    ref = [comb(n, k) * u**k * (1 - u) ** (n - k) for k in range(n + 1)]
    assert np.allclose(b, ref, rtol=1e-12, atol=1e-15)


def test_bernstein_clamps_with_warning():
    with pytest.warns(ExtrapolationWarning):
        b = bernstein_basis([-0.2, 1.3], 2)
    assert np.array_equal(b[0], [1, 0, 0]) and np.array_equal(b[1], [0, 0, 1])


def test_fit_recovers_polynomial_exactly():
    # any cubic in each coordinate is spanned by the degree-3 tensor basis
    rng = np.random.default_rng(5)
    poses = rng.uniform(-0.5, 0.5, size=(200, 6))

    def truth(p):
        x, y, z = p[:3]
        return np.array([x**3 - y, x * y * z, 2.0 + z**2, y**3 * x, -x, 0.5 * z**3 * y**2])

    samples = [(p, Wrench.from_vector(truth(p))) for p in poses]
    model = fit_bias_model(samples, degree=3)
    assert model.dims == (0, 1, 2) and model.basis_size == 64
    assert model.train_rms < 1e-10
    test = rng.uniform(-0.4, 0.4, size=(20, 6))
    for p in test:
        assert np.allclose(model.predict(p), truth(p), atol=1e-9)


def test_wrench_arithmetic_and_compensate_identities():
    a = Wrench.from_vector([1, 2, 3, 4, 5, 6])
    assert np.array_equal((a - a).vector(), np.zeros(6))
    assert np.array_equal((a + Wrench.zero()).vector(), a.vector())
    rng = np.random.default_rng(0)
    poses = rng.uniform(0, 1, size=(80, 6))
    zero = fit_bias_model([(p, Wrench.zero()) for p in poses], degree=2)
    assert np.allclose(compensate(zero, poses[3], a).vector(), a.vector(), atol=1e-12)
    const = fit_bias_model([(p, a) for p in poses], degree=2)
    assert np.allclose(compensate(const, poses[3], a).vector(), 0, atol=1e-10)


def test_gravity_wrench_closed_form():
    # tool pointing straight down: sensor z is base -z, so gravity reads +z in the sensor
    w = gravity_wrench(1.0, (0.0, 0.0, 50.0), TOOL_DOWN)
    assert np.allclose(w.force, [0, 0, 9.81])
    assert np.allclose(w.torque, 0)
    w = gravity_wrench(1.0, (10.0, 0.0, 0.0), np.eye(3))
    assert np.allclose(w.force, [0, 0, -9.81]) and np.allclose(w.torque, [0, 98.1, 0])
    with pytest.raises(ValueError):
        gravity_wrench(-1, (0, 0, 0), np.eye(3))


def test_pose_vector_reference_chart():
    t = RigidTransform(TOOL_DOWN, (1, 2, 3))
    assert np.allclose(pose_vector(t, TOOL_DOWN), [0, 0, 0, 1, 2, 3])
    assert np.isclose(np.linalg.norm(pose_vector(t)[:3]), np.pi)


def test_model_serialisation(scenario):
    data = force_dataset(scenario, rng_for(1, STREAM_FORCE, 0), 200)
    model = fit_bias_model(data, degree=2)
    back = BiasModel.from_dict(model.to_dict())
    p = data[0][0]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert np.allclose(compensate(back, p, data[0][1]).vector(), compensate(model, p, data[0][1]).vector())


def test_rank_deficient():
    poses = np.random.default_rng(0).uniform(0, 1, size=(20, 6))
    with pytest.raises(RankDeficient):
        fit_bias_model([(p, Wrench.zero()) for p in poses], degree=3)
    same = [(np.zeros(6), Wrench.zero())] * 100
    with pytest.raises(RankDeficient):
        fit_bias_model(same, degree=3)
    with pytest.raises(ValueError):
        fit_bias_model(same, degree=-1)


def test_simulated_calibration_quality(scenario):
    _, m = calibrate_force(scenario)
    assert m["heldout_ratio"]["value"] <= 0.10
    assert m["sweep_ratio"]["value"] < 0.10
    assert m["test_samples"]["value"] == 100
