import numpy as np
import pytest
from scipy import integrate

from phasefit import iph, ph
from phasefit.exceptions import DomainError, NumericalUnderflowError
from phasefit.transforms import GEV, Gompertz, Pareto, Weibull

from oracles import ks_band

T3 = np.array([[-1.0, 0.5, 0.0], [0.2, -2.0, 0.8], [1.0, 1.0, -5.0]])
PI3 = np.array([1.0, 0.0, 0.0])

GEV_MODEL = iph.matrix_gev(PI3, T3, 2.0, 0.5, 0.4)


def scalar(lam, transform):
    return iph.IPHModel(ph.PHModel([1.0], [[-lam]]), transform)


class TestScalarClosedForms:
    def test_pareto_density_point(self):
        m = scalar(1.0, Pareto([1.0]))
        assert abs(iph.iph_density(m, 1.0) - 0.25) < 1e-14

    def test_weibull_density_point(self):
        m = scalar(1.0, Weibull([2.0]))
        assert abs(iph.iph_density(m, 1.0) - 2.0 * np.exp(-1.0)) < 1e-14

    def test_pareto_survival_point(self):
        m = scalar(2.0, Pareto([1.0]))
        assert abs(iph.iph_survival(m, 3.0) - 0.0625) < 1e-14

    @pytest.mark.parametrize("lam,beta", [(1.0, 0.5), (2.0, 1.7)])
    def test_weibull_grid(self, lam, beta):
        m = scalar(lam, Weibull([beta]))
        xs = np.linspace(0.05, 4.0, 100)
        f = lam * beta * xs ** (beta - 1) * np.exp(-lam * xs ** beta)
        s = np.exp(-lam * xs ** beta)
        assert np.abs(iph.iph_density(m, xs) - f).max() < 1e-12
        assert np.abs(iph.iph_survival(m, xs) - s).max() < 1e-12

    def test_gompertz_grid(self):
        lam, beta = 1.3, 0.6
        m = scalar(lam, Gompertz([beta]))
        xs = np.linspace(0.05, 3.0, 100)
        s = np.exp(-lam * np.expm1(beta * xs) / beta)
        f = lam * np.exp(beta * xs) * s
        assert np.abs(iph.iph_density(m, xs) - f).max() < 1e-12
        assert np.abs(iph.iph_survival(m, xs) - s).max() < 1e-12

    def test_gev_grid(self):
        lam, mu, sigma, xi = 1.0, 0.5, 2.0, 0.3
        m = scalar(lam, GEV([mu, sigma, xi]))
        xs = np.linspace(mu - sigma / xi + 0.1, 8.0, 100)
        u = (1 + xi * (xs - mu) / sigma) ** (-1 / xi)
        s = 1.0 - np.exp(-lam * u)
        f = lam * np.exp(-lam * u) * u ** (1 + xi) / sigma
        assert np.abs(iph.iph_density(m, xs) - f).max() < 1e-12
        assert np.abs(iph.iph_survival(m, xs) - s).max() < 1e-12


class TestGenericVsSpecialized:
    MODELS = [
        iph.matrix_pareto(PI3, T3, 0.8),
        iph.matrix_weibull(PI3, T3, 1.6),
        iph.matrix_gompertz(PI3, T3, 0.5),
        GEV_MODEL,
        iph.IPHModel(ph.PHModel(PI3, T3), Pareto([2.0])),
    ]

    @pytest.mark.parametrize("m", MODELS, ids=lambda m: m.transform.name)
    def test_two_code_paths_agree(self, m):
        lo = 0.05
        if m.transform.name == "gev":
            mu, sigma, xi = m.transform.params
            lo = mu - sigma / xi + 0.05
        xs = np.linspace(lo, lo + 5.0, 37)
        assert np.abs(np.asarray(iph.iph_density(m, xs))
                      - np.asarray(iph.specialized_density(m, xs))).max() < 1e-10
        assert np.abs(np.asarray(iph.iph_survival(m, xs))
                      - np.asarray(iph.specialized_survival(m, xs))).max() < 1e-10


class TestGEVExample:
    def test_quadrature_moments(self):
        lo = 2.0 - 0.5 / 0.4 + 1e-9
        mass, _ = integrate.quad(lambda x: iph.iph_density(GEV_MODEL, x),
                                 lo, np.inf, limit=200)
        m1, _ = integrate.quad(lambda x: x * iph.iph_density(GEV_MODEL, x),
                               lo, np.inf, limit=200)
        m2, _ = integrate.quad(lambda x: x * x * iph.iph_density(GEV_MODEL, x),
                               lo, np.inf, limit=200)
        assert abs(mass - 1.0) < 1e-8
        assert abs(m1 - 2.2524) < 1e-2
        assert abs(np.sqrt(m2 - m1 ** 2) - 1.4423) < 1e-2

    def test_density_matches_survival_derivative(self):
        h = 1e-6
        for x in (1.5, 2.0, 3.5):
            fd = (iph.iph_survival(GEV_MODEL, x - h)
                  - iph.iph_survival(GEV_MODEL, x + h)) / (2 * h)
            assert abs(fd - iph.iph_density(GEV_MODEL, x)) < 1e-6


class TestSampling:
    @pytest.mark.parametrize("m", [iph.matrix_weibull(PI3, T3, 1.5),
                                   GEV_MODEL], ids=lambda m: m.transform.name)
    def test_sample_matches_survival_ks(self, m):
        n = 20_000
        xs = np.sort(iph.iph_sample_many(m, n, np.random.default_rng(3)))
        emp_cdf = np.arange(1, n + 1) / n
        model_cdf = 1.0 - iph.iph_survival(m, xs)
        assert np.abs(emp_cdf - model_cdf).max() < ks_band(n)

    def test_single_draw_in_support(self):
        rng = np.random.default_rng(0)
        x = iph.iph_sample(GEV_MODEL, rng)
        assert GEV_MODEL.transform.in_support(np.array([x]))[0]


class TestErrors:
    def test_out_of_support_raises(self):
        with pytest.raises(DomainError):
            iph.iph_density(GEV_MODEL, 0.5)  # below mu - sigma/xi = 0.75

    def test_loglik_underflow_names_observation(self):
        m = scalar(50.0, Weibull([1.0]))
        with pytest.raises(NumericalUnderflowError, match="observation"):
            iph.iph_log_likelihood(m.base, m.transform, np.array([1.0, 200.0]))

    def test_gradient_matches_analytic_exponential(self):
        # weibull p=1: d/dbeta log f = 1/beta + log x - lam x^beta log x
        lam, beta = 1.0, 1.5
        m = scalar(lam, Weibull([beta]))
        xs = np.array([0.7, 1.9])
        grad = iph.transform_log_density_gradient(m, xs)
        ref = sum(1 / beta + np.log(x) - lam * x ** beta * np.log(x) for x in xs)
        assert abs(grad[0] - ref) < 1e-5
