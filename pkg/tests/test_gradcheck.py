import numpy as np
import pytest

from semhash.gradcheck import (check_instance, make_instance, numeric_gradient,
                               relative_errors, run_trials)
from semhash.head import CodeBatch
from semhash.losses import quantization_loss


def test_numeric_gradient_on_quadratic():
    A = np.array([[2.0, 1.0], [1.0, 3.0]])

    def f(x):
        return float(x.ravel() @ A @ x.ravel())

    x = np.array([0.7, -1.2])
    grad = numeric_gradient(f, x, eps=1e-5)
    assert np.allclose(grad, 2 * A @ x, rtol=1e-8)


def test_smooth_loss_beats_tight_tolerance():
    report = run_trials("j3", trials=25, seed=1, eps=1e-5)
    assert report.max_rel_error < 1e-6


def test_piecewise_linear_interior_is_exact():
    # one linear piece of the quantization penalty: gradient is a constant,
    # central differences recover it to roundoff
    b = np.full((1, 4), 0.75)
    codes = CodeBatch.from_relaxed(b)
    _, analytic = quantization_loss(codes, alpha=1.0)

    def f(x):
        return quantization_loss(CodeBatch.from_relaxed(x), alpha=1.0)[0]

    numeric = numeric_gradient(f, b, eps=1e-5)
    assert np.array_equal(analytic, np.full((1, 4), -2.0))
    assert relative_errors(analytic, numeric).max() < 1e-9


def test_sign_flip_reports_error_of_two():
    g = np.array([0.5, -1.5, 2.0])
    rel = relative_errors(-g, g)
    assert np.allclose(rel, 2.0)


def test_zero_gradients_count_as_exact():
    rel = relative_errors(np.zeros(3), np.full(3, 1e-12))
    assert rel.max() == 0.0


def test_unknown_selector_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="selector"):
        make_instance("j9", rng)


def test_instances_are_kink_excluded():
    rng = np.random.default_rng(2)
    for _ in range(20):
        inst = make_instance("j2", rng)
        b = inst["b"]
        for kink in (0.0, 0.5, 1.0):
            assert np.abs(b - kink).min() > 1e-3


def test_composed_head_instance_checks_out():
    rng = np.random.default_rng(3)
    report = check_instance("head", make_instance("head", rng))
    assert report.max_rel_error < 1e-4
    assert report.coords > 0
