"""Certified-constant property tests for the registered drift models."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsync import ContractViolationError
from fracsync.drift import DiffusionMatrix, drift_names, make_drift


def _pairs(rng, n, d, radius):
    return (
        radius * rng.standard_normal((n, d)),
        radius * rng.standard_normal((n, d)),
    )


@pytest.mark.parametrize("name,dim", [("example_sec5", 2), ("example_sec5", 3),
                                      ("cubic", 1), ("cubic", 2),
                                      ("linear", 3), ("ou", 2)])
def test_one_sided_dissipativity_sampled(name, dim):
    drift = make_drift(name, dim)
    c = drift.constants
    rng = np.random.default_rng(0)
    x, y = _pairs(rng, 2000, dim, 3.0)
    inner = np.sum((drift.evaluate(y) - drift.evaluate(x)) * (y - x), axis=1)
    u = np.sum((y - x) ** 2, axis=1)
    bound = np.minimum(c.c1f - c.c2f * u, c.c3f * u)
    assert np.all(inner <= bound + 1e-9)


@pytest.mark.parametrize("name,dim", [("example_sec5", 2), ("cubic", 3), ("linear", 2)])
def test_eventual_strict_monotonicity_sampled(name, dim):
    drift = make_drift(name, dim)
    c = drift.constants
    rng = np.random.default_rng(1)
    # sample pairs with both points outside the monotonicity ball
    raw_x, raw_y = _pairs(rng, 3000, dim, 4.0)
    norm_x = np.linalg.norm(raw_x, axis=1, keepdims=True)
    norm_y = np.linalg.norm(raw_y, axis=1, keepdims=True)
    x = raw_x * (c.r_mono / norm_x) * (1.0 + rng.random((3000, 1)) * 3.0)
    y = raw_y * (c.r_mono / norm_y) * (1.0 + rng.random((3000, 1)) * 3.0)
    inner = np.sum((drift.evaluate(y) - drift.evaluate(x)) * (y - x), axis=1)
    u = np.sum((y - x) ** 2, axis=1)
    assert np.all(inner <= -c.c4f * u + 1e-9)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=60, deadline=None)
def test_growth_bound_sampled(seed):
    rng = np.random.default_rng(seed)
    for name, dim in (("example_sec5", 2), ("cubic", 2), ("linear", 2)):
        drift = make_drift(name, dim)
        c = drift.constants
        x = 10.0 ** rng.uniform(-2, 1.5) * rng.standard_normal(dim)
        f = drift.evaluate(x)
        bound = c.c_growth * (1.0 + np.linalg.norm(x)) ** c.n_growth
        assert np.linalg.norm(f) <= bound * (1.0 + 1e-12)
        jac = drift.jacobian(x)
        assert np.linalg.norm(jac, 2) <= bound * (1.0 + 1e-12)


@pytest.mark.parametrize("name,dim", [("example_sec5", 3), ("cubic", 2), ("linear", 4)])
def test_jacobian_matches_finite_differences(name, dim):
    drift = make_drift(name, dim)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(dim)
    jac = drift.jacobian(x)
    eps = 1e-6
    fd = np.empty((dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = eps
        fd[:, j] = (drift.evaluate(x + e) - drift.evaluate(x - e)) / (2 * eps)
    assert np.allclose(jac, fd, atol=1e-6)


def test_jacobian_apply_consistent():
    drift = make_drift("example_sec5", 3)
    rng = np.random.default_rng(4)
    x = rng.standard_normal((5, 3))
    v = rng.standard_normal((5, 3))
    direct = np.einsum("bij,bj->bi", drift.jacobian(x), v)
    assert np.allclose(drift.apply_jacobian(x, v), direct, atol=1e-12)


def test_jacobian_norm_bound_valid():
    drift = make_drift("example_sec5", 2)
    rng = np.random.default_rng(5)
    for r in (0.5, 2.0, 10.0, 100.0):
        pts = rng.standard_normal((200, 2))
        pts *= r / np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1e-12)
        norms = [np.linalg.norm(drift.jacobian(p), 2) for p in pts]
        assert max(norms) <= drift.jacobian_norm_on_ball(r) * (1 + 1e-9)


def test_registry_contents_and_errors():
    assert set(drift_names()) >= {"example_sec5", "linear", "ou", "cubic"}
    with pytest.raises(ContractViolationError):
        make_drift("no_such_drift", 2)
    with pytest.raises(ContractViolationError):
        make_drift("example_sec5", 0)


def test_linear_requires_stable_symmetric_part():
    with pytest.raises(ContractViolationError):
        make_drift("linear", 2, matrix=[[1.0, 0.0], [0.0, -1.0]])
    a = [[-1.0, 2.0], [-2.0, -1.0]]  # rotation + decay: fine
    drift = make_drift("linear", 2, matrix=a)
    assert drift.constants.c2f == pytest.approx(1.0)


def test_diffusion_matrix_checks():
    sig = DiffusionMatrix.isotropic(2.0, 3)
    assert sig.op_norm == pytest.approx(2.0)
    assert sig.inv_op_norm == pytest.approx(0.5)
    with pytest.raises(ContractViolationError):
        DiffusionMatrix.from_matrix([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ContractViolationError):
        DiffusionMatrix.isotropic(-1.0, 2)
    with pytest.raises(ContractViolationError):
        DiffusionMatrix.from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
