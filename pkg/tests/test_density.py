import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gti.density import (
    EvalCounter,
    LogDensity,
    SignedFunction,
    TargetProblem,
    TemperedPath,
    branch_path,
    eval_log_density,
    restrict,
    tempered_log_density,
)
from gti.errors import ConfigurationError, DomainError


def std_normal(dim):
    return LogDensity(lambda X: -0.5 * np.sum(X * X, axis=1) - 0.5 * dim * math.log(2 * math.pi), dim)


def test_eval_log_density_examples(banana):
    assert eval_log_density(std_normal(2), np.zeros(2)) == pytest.approx(-math.log(2 * math.pi))
    assert eval_log_density(banana.density(), [0.0, 0.0]) == pytest.approx(-4.5)
    assert eval_log_density(banana.density(), [30.0, 0.0]) == -math.inf


def test_dimension_mismatch_is_configuration_error():
    with pytest.raises(ConfigurationError):
        eval_log_density(std_normal(2), np.zeros(3))


def test_evaluations_are_counted():
    d = std_normal(2)
    d.log_prob(np.zeros((7, 2)))
    eval_log_density(d, np.zeros(2))
    d.log_prob(np.zeros((3, 2)), count=False)
    assert d.counter.count == 8


def test_counter_is_thread_safe():
    c = EvalCounter()

    def work():
        for _ in range(1000):
            c.add(1)

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert c.count == 8000


def test_restrict_examples(banana):
    pi = banana.density()
    upper = restrict(pi, lambda X: X[:, 1] > -10)
    assert eval_log_density(restrict(pi, lambda X: np.ones(len(X), bool)), [1.0, 2.0]) == pi([1.0, 2.0])
    assert eval_log_density(upper, [0.0, -20.0]) == -math.inf
    assert eval_log_density(upper, [0.0, 0.0]) == pytest.approx(-4.5)
    assert upper.counter is pi.counter


def test_restricted_predicate_short_circuits_model():
    calls = []

    def fn(X):
        calls.append(len(X))
        return np.zeros(len(X))

    d = restrict(LogDensity(fn, 1), lambda X: X[:, 0] > 0)
    out = d.log_prob(np.array([[-1.0], [1.0], [-2.0]]))
    assert out.tolist() == [-np.inf, 0.0, -np.inf]
    assert calls == [1]


def test_restrict_idempotent(rng, banana):
    s = lambda X: X[:, 0] + X[:, 1] > 0  # noqa: E731
    once = restrict(banana.density(), s)
    twice = restrict(once, s)
    X = rng.uniform(-30, 30, size=(1000, 2))
    np.testing.assert_array_equal(once.log_prob(X), twice.log_prob(X))


def test_signed_function_support_consistency(rng):
    f = SignedFunction.from_real(lambda X: X[:, 0], 1)
    X = np.vstack([rng.normal(size=(200, 1)), [[0.0]]])
    sign, _ = f.eval_batch(X)
    np.testing.assert_array_equal(f.pos_support(X), sign == 1)
    np.testing.assert_array_equal(f.neg_support(X), sign == -1)
    assert f(np.array([-2.0])).to_real() == pytest.approx(-2.0)


def test_constant_function():
    f = SignedFunction.constant(-2.0, 3)
    assert f.declared_sign == "strictly-negative"
    v = f(np.zeros(3))
    assert v.sign == -1 and v.log_mag == math.log(2.0)


def test_tempered_path_endpoints(rng, gauss, banana):
    for problem in (gauss.problem(), banana.problem()):
        X = rng.normal(scale=5.0, size=(1000, problem.dim))
        for part in ("pos", "abs"):
            path = branch_path(problem, part)
            base = path.base.log_prob(X)
            lp0, sign, lm = path.evaluate(X, 0.0)
            np.testing.assert_array_equal(lp0, base)
            lp1, _, _ = path.evaluate(X, 1.0)
            w = np.where(sign != 0, lm, -np.inf)
            with np.errstate(invalid="ignore"):
                expected = np.where(np.isfinite(base) & np.isfinite(w), base + w, -np.inf)
            np.testing.assert_allclose(lp1, expected, rtol=0, atol=1e-12)


def test_tempered_examples(banana):
    path = branch_path(banana.problem(), "pos", restricted=False)
    below = np.array([0.0, -20.0])
    assert tempered_log_density(path, below, 0.0) == pytest.approx(float(banana.density()(below)))
    assert tempered_log_density(path, below, 0.5) == -math.inf
    x = np.array([0.0, 0.0])
    assert tempered_log_density(path, x, 1.0) == pytest.approx(-4.5 + math.log(10.0) - 156.25)


def test_beta_outside_unit_interval():
    path = TemperedPath(std_normal(1), SignedFunction.constant(2.0, 1))
    for beta in (-0.1, 1.5, float("nan")):
        with pytest.raises(DomainError):
            tempered_log_density(path, np.zeros(1), beta)
    with pytest.raises(DomainError):
        path.chain_target([0.0, 1.2])


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(0, 1), st.floats(0, 1))
def test_monotone_in_beta(x, b1, b2):
    f = SignedFunction.from_real(lambda X: np.exp(X[:, 0]), 1, declared_sign="strictly-positive")
    path = TemperedPath(std_normal(1), f, "pos")
    lo, hi = sorted((b1, b2))
    a = tempered_log_density(path, np.array([x]), lo)
    b = tempered_log_density(path, np.array([x]), hi)
    # weight log f = x: increasing in beta when x > 0, decreasing when x < 0
    if x > 0:
        assert b >= a
    elif x < 0:
        assert b <= a


def test_branch_path_restriction_rules(gauss, banana):
    p = gauss.problem()
    assert branch_path(p, "pos").base is p.density
    b = banana.problem()
    assert branch_path(b, "pos").base is not b.density
    assert branch_path(b, "abs", restricted=False).base is b.density


def test_target_problem_checks_dimensions():
    with pytest.raises(ConfigurationError):
        TargetProblem(std_normal(2), SignedFunction.constant(1.0, 3))
