import math

import numpy as np
import pytest
from scipy import stats

from gti.density import TemperedPath, branch_path
from gti.errors import ConfigurationError
from gti.models import (
    BananaModel,
    ConjugateNormalModel,
    ExactGaussianSampler,
    GaussianModel,
    banana_eval,
    banana_truth,
    gaussian_node_expectation_exact,
    gaussian_tempered,
    gaussian_truth,
)


def test_tempered_parameters():
    m = GaussianModel(2.0, 10)
    assert gaussian_tempered(m, 0.0) == (-0.5, 0.5)
    assert gaussian_tempered(m, 1.0) == (0.25, 0.25)
    coeff, var = gaussian_tempered(m, 0.5)
    assert coeff == 0.0 and var == pytest.approx(1 / 3)


def test_truth_values():
    assert gaussian_truth(GaussianModel(0.0, 4)) == pytest.approx((2 * math.pi) ** -2)
    # the quoted 4-digit values are rounded loosely: exact values are 1.13442e-6 and 1.76805e-3
    assert gaussian_truth(GaussianModel(2.0, 10)) == pytest.approx(1.1343e-6, rel=5e-4)
    assert gaussian_truth(GaussianModel(2.0, 2)) == pytest.approx(1.7675e-3, rel=5e-4)
    assert gaussian_truth(GaussianModel(2.0, 2)) == pytest.approx(math.exp(-4.5) / (2 * math.pi), rel=1e-14)
    # the truth is a normal density: N(a 1 | -a/2 1, I)
    m = GaussianModel(2.0, 10)
    ref = stats.multivariate_normal(mean=np.full(10, -m.a / 2)).pdf(np.full(10, m.a))
    assert m.truth() == pytest.approx(ref, rel=1e-12)


def test_node_expectation_closed_form():
    m = GaussianModel(2.0, 10)
    assert gaussian_node_expectation_exact(m, 1.0) == pytest.approx(-10.47365, abs=1e-5)
    assert gaussian_node_expectation_exact(m, 0.0) == pytest.approx(-19.72365, abs=1e-5)
    z = GaussianModel(0.0, 3)
    for beta in (0.0, 0.3, 1.0):
        assert gaussian_node_expectation_exact(z, beta) == pytest.approx(
            -1.5 * math.log(math.pi) - 3 * gaussian_tempered(z, beta)[1]
        )


def test_closed_form_matches_geometric_path(rng):
    # beta log f + log pi - log N(x | tempered params) is constant in x
    m = GaussianModel(1.3, 4)
    X = rng.normal(scale=2.0, size=(10_000, 4))
    for beta in rng.uniform(0, 1, size=20):
        coeff, var = gaussian_tempered(m, beta)
        ref = stats.multivariate_normal(mean=np.full(4, coeff * m.a), cov=var * np.eye(4)).logpdf(X)
        diff = beta * m.log_f(X) + m.log_posterior(X) - ref
        assert np.ptp(diff) < 1e-10


@pytest.mark.parametrize("beta", [0.0, 0.1, 0.5, 1.0])
def test_exact_sampler_matches_node_expectation(beta):
    m = GaussianModel(2.0, 10)
    path = branch_path(m.problem(), "pos")
    draw = ExactGaussianSampler(m).draw_path(path, [beta], 100_000, [beta_seed(beta)], [0])[0][0]
    v = draw.log_values
    assert abs(v.mean() - gaussian_node_expectation_exact(m, beta)) <= 3 * v.std(ddof=1) / math.sqrt(len(v))
    assert draw.n_evals == 100_000 and path.base.counter.count == 100_000


def beta_seed(beta):
    return int(beta * 1000) + 17


def test_exact_sampler_rejects_negative_branch():
    m = GaussianModel(1.0, 2)
    path = TemperedPath(m.problem().density, m.problem().f, "neg")
    with pytest.raises(ConfigurationError):
        ExactGaussianSampler(m).draw_path(path, [0.0], 10, [0], [0])


def test_banana_eval_examples():
    lp, f = banana_eval([0.0, 0.0])
    assert lp == pytest.approx(-4.5)
    assert f.sign == 1 and f.log_mag == pytest.approx(math.log(10) - 156.25)
    assert f.log_mag == pytest.approx(-153.9474, abs=1e-4)
    lp, f = banana_eval([0.0, -20.0])
    assert math.isfinite(lp) and f.sign == 0
    assert banana_eval([30.0, 0.0])[0] == -math.inf


def test_banana_f_nonnegative_on_grid():
    g = np.linspace(-25, 25, 1000)
    h = np.linspace(-40, 20, 1000)
    X = np.column_stack([np.repeat(g, 1000), np.tile(h, 1000)])
    sign, _ = BananaModel().function().eval_batch(X)
    assert set(np.unique(sign).tolist()) <= {0, 1}
    np.testing.assert_array_equal(sign == 1, X[:, 1] > -10)


def test_banana_oracle_is_converged_and_frozen():
    oracle = banana_truth(4000)
    assert oracle.rel_error < 1e-6
    assert oracle.evidence > 0 and math.isfinite(oracle.evidence)
    assert oracle.value == pytest.approx(BananaModel.REFERENCE_TRUTH, rel=1e-12)
    assert oracle.evidence == pytest.approx(BananaModel.REFERENCE_KERNEL_INTEGRAL, rel=1e-12)
    coarse = banana_truth(2000)
    assert abs(coarse.value - oracle.value) <= coarse.error + oracle.error


def test_banana_oracle_against_scipy():
    # independent check of the reference with adaptive 2D quadrature
    from scipy import integrate

    from gti.models import _banana_f, _banana_log_kernel

    def pi(x2, x1):
        return math.exp(_banana_log_kernel(np.array([[x1, x2]]))[0])

    def fpi(x2, x1):
        s, lm = _banana_f(np.array([[x1, x2]]))
        return 0.0 if s[0] == 0 else math.exp(lm[0]) * pi(x2, x1)

    den = integrate.dblquad(pi, -25, 25, -40, 20, epsabs=1e-10, epsrel=1e-10)[0]
    num = integrate.dblquad(fpi, -25, 25, -10, 20, epsabs=1e-14, epsrel=1e-10)[0]
    assert num / den == pytest.approx(BananaModel.REFERENCE_TRUTH, rel=1e-5)


def test_banana_oracle_config_errors():
    with pytest.raises(ConfigurationError):
        banana_truth(500)


def test_conjugate_model():
    m = ConjugateNormalModel(1.0)
    assert m.log_evidence() == pytest.approx(stats.norm(0, math.sqrt(2)).logpdf(1.0))
    assert m.log_evidence() == pytest.approx(-1.5155, abs=1e-4)
    assert m.power_posterior(1.0) == (0.5, 0.5)
