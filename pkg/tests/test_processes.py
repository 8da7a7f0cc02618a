import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mellin_deconv.errors import ConfigurationError, DomainError
from mellin_deconv.mellin import ErrorDensity
from mellin_deconv.processes import (
    CirParams,
    MDependentParams,
    NoiseSpec,
    autocorrelation,
    contaminate,
    gamma_invariant_params,
    make_rng,
    simulate_cir,
    simulate_m_dependent,
    simulate_noise,
)
from mellin_deconv.series import ObservationSeries, read_series, sidecar_path, write_series


@pytest.fixture(scope="module")
def long_cir():
    return simulate_cir(CirParams(), 100_000, seed=(11, 0, 0))


@pytest.fixture(scope="module")
def long_mdep():
    return simulate_m_dependent(MDependentParams(), 100_000, seed=(11, 0, 2))


class TestCir:
    def test_invariant_params(self):
        assert gamma_invariant_params(CirParams(1, 0.5, 1)) == (2.0, 1.0)
        assert gamma_invariant_params(CirParams(1, 1, 1)) == (2.0, 2.0)
        shape, rate = gamma_invariant_params(CirParams(0.5, 0.5, 0.9))
        assert shape == pytest.approx(1 / 0.81, rel=1e-14)
        assert rate == pytest.approx(1 / 0.81, rel=1e-14)
        assert shape == pytest.approx(1.2346, abs=1e-4)

    def test_feller_violation(self):
        with pytest.raises(ConfigurationError, match="Feller"):
            CirParams(theta1=0.4, theta2=0.5, theta3=1.0)

    def test_nonpositive_parameter(self):
        with pytest.raises(ConfigurationError):
            CirParams(delta=0.0)

    def test_moments(self, long_cir):
        v = long_cir.values
        assert v.mean() == pytest.approx(2.0, rel=0.05)
        assert v.var() == pytest.approx(2.0, rel=0.10)

    def test_ks_to_gamma(self, long_cir):
        assert stats.kstest(long_cir.values, "gamma", args=(2.0, 0.0, 1.0)).statistic <= 0.01

    def test_lag_one_correlation(self, long_cir):
        # Corr(X_t, X_{t+delta}) = exp(-theta2 delta)
        rho = autocorrelation(long_cir.values, 1)[1]
        assert rho == pytest.approx(math.exp(-0.5), abs=0.02)

    @pytest.mark.parametrize("seed", range(10))
    def test_positive(self, seed):
        p = CirParams(theta1=0.6, theta2=2.0, theta3=1.0, delta=0.1)
        assert np.all(simulate_cir(p, 2000, seed).values > 0)

    def test_single_draw(self):
        s = simulate_cir(CirParams(), 1, seed=3)
        assert len(s) == 1 and s.values[0] > 0

    @pytest.mark.parametrize("n", [0, -3, 2.5])
    def test_bad_length(self, n):
        with pytest.raises(DomainError):
            simulate_cir(CirParams(), n, seed=1)

    def test_deterministic(self):
        a = simulate_cir(CirParams(), 500, seed=(5, 3, 0))
        b = simulate_cir(CirParams(), 500, seed=(5, 3, 0))
        assert a.values.tobytes() == b.values.tobytes()
        c = simulate_cir(CirParams(), 500, seed=(5, 3, 1))
        assert not np.array_equal(a.values, c.values)

    def test_euler_agrees_in_mean(self):
        v = simulate_cir(CirParams(), 3000, seed=2, method="euler", euler_substeps=20).values
        assert v.mean() == pytest.approx(2.0, rel=0.15)

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            simulate_cir(CirParams(), 10, seed=1, method="milstein")

    def test_metadata(self):
        s = simulate_cir(CirParams(delta=0.5), 5, seed=(7, 0, 0))
        assert s.delta == 0.5
        assert s.meta["generator"] == "cir"
        assert s.meta["seed"] == [7, 0, 0]


class TestMDependent:
    def test_iid_weibull_mean(self):
        v = simulate_m_dependent(MDependentParams(recycle_prob=0.0), 100_000, seed=4).values
        assert v.mean() == pytest.approx(5 * math.gamma(1.5), rel=0.02)

    def test_marginal_is_weibull(self, long_mdep):
        assert stats.kstest(long_mdep.values, "weibull_min", args=(2.0, 0.0, 5.0)).statistic <= 0.015

    def test_correlation_structure(self, long_mdep):
        n = len(long_mdep)
        acf = autocorrelation(long_mdep.values, 80)
        assert acf[1] > 0
        assert abs(acf[60]) <= 3 / math.sqrt(n)
        assert np.max(np.abs(acf[31:])) <= 4 / math.sqrt(n)

    def test_value_scheme_pure_recycling_is_constant(self):
        s = simulate_m_dependent(MDependentParams(m_dep=1, recycle_prob=1.0, scheme="value"), 50, seed=9)
        assert np.all(s.values == s.values[0])

    def test_innovation_scheme_pure_recycling_is_shifted_iid(self):
        # every point copies the fresh draw one step back, so the series is i.i.d.
        s = simulate_m_dependent(MDependentParams(m_dep=1, recycle_prob=1.0), 2000, seed=9)
        assert len(np.unique(s.values)) == 2000

    @pytest.mark.parametrize("kw", [dict(m_dep=0), dict(recycle_prob=1.5), dict(shape=-1.0), dict(scheme="x")])
    def test_bad_params(self, kw):
        with pytest.raises(ConfigurationError):
            MDependentParams(**kw)

    def test_deterministic(self):
        a = simulate_m_dependent(MDependentParams(), 1000, seed=(1, 2, 0))
        b = simulate_m_dependent(MDependentParams(), 1000, seed=(1, 2, 0))
        assert a.values.tobytes() == b.values.tobytes()


class TestNoise:
    def test_uniform_mean(self):
        v = simulate_noise(NoiseSpec(ErrorDensity.uniform(0, 1)), 100_000, seed=1).values
        assert v.mean() == pytest.approx(0.5, rel=0.01)
        assert v.min() > 0

    def test_beta22_moments(self):
        v = simulate_noise(NoiseSpec(ErrorDensity.beta(2, 2)), 100_000, seed=2).values
        assert v.mean() == pytest.approx(0.5, rel=0.05)
        assert v.var() == pytest.approx(0.05, rel=0.05)

    def test_shifted_uniform_support(self):
        v = simulate_noise(NoiseSpec(ErrorDensity.uniform(0.5, 1.5)), 100_000, seed=3).values
        assert v.min() >= 0.5 and v.max() <= 1.5

    def test_in_support_all_families(self, family):
        v = simulate_noise(NoiseSpec(family), 5000, seed=4).values
        lo, hi = family.support
        assert v.min() > 0 and v.min() >= lo and v.max() <= hi

    def test_m_dependent_noise(self):
        spec = NoiseSpec(ErrorDensity.beta(2, 1), dependence="m_dependent", m_dep=5)
        v = simulate_noise(spec, 50_000, seed=5).values
        acf = autocorrelation(v, 10)
        assert acf[1] > 0.02
        assert np.max(np.abs(acf[6:])) <= 4 / math.sqrt(len(v))
        assert v.mean() == pytest.approx(2 / 3, rel=0.02)

    def test_degenerate_noise(self):
        assert np.all(simulate_noise(NoiseSpec(ErrorDensity.degenerate()), 10, seed=1).values == 1.0)

    def test_bad_dependence(self):
        with pytest.raises(ConfigurationError):
            NoiseSpec(ErrorDensity.uniform(0, 1), dependence="garch")


class TestContaminate:
    def test_identity_noise(self):
        X = ObservationSeries(np.array([1.5, 2.5, 0.1]))
        U = ObservationSeries(np.ones(3))
        np.testing.assert_array_equal(contaminate(X, U).values, X.values)

    def test_arithmetic(self):
        Y = contaminate(ObservationSeries(np.array([2.0, 3.0])), ObservationSeries(np.array([0.5, 2.0])))
        np.testing.assert_array_equal(Y.values, [1.0, 6.0])

    def test_length_mismatch(self):
        with pytest.raises(DomainError, match="length"):
            contaminate(ObservationSeries(np.ones(2)), ObservationSeries(np.ones(3)))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_log_identity(self, seed):
        X = simulate_cir(CirParams(), 20, seed=(seed, 0, 0))
        U = simulate_noise(NoiseSpec(ErrorDensity.beta(1, 2)), 20, seed=(seed, 0, 1))
        Y = contaminate(X, U)
        assert np.all(Y.values > 0)
        np.testing.assert_allclose(Y.log_values, X.log_values + U.log_values, rtol=0, atol=1e-12)


class TestSeeds:
    def test_forms(self):
        a = make_rng((3, 1, 0)).random()
        b = make_rng(np.random.SeedSequence(3, spawn_key=(1, 0))).random()
        assert a == b
        assert make_rng(3).random() == make_rng(3).random()

    def test_bad_seed(self):
        with pytest.raises(ConfigurationError):
            make_rng(-1)
        with pytest.raises(ConfigurationError):
            make_rng("seven")


class TestSeries:
    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError, match="observation 2"):
            ObservationSeries(np.array([1.0, 2.0, 0.0]))

    def test_log_cache_read_only(self):
        s = ObservationSeries(np.array([1.0, math.e]))
        np.testing.assert_allclose(s.log_values, [0.0, 1.0])
        with pytest.raises(ValueError):
            s.log_values[0] = 5.0

    def test_round_trip(self, tmp_path):
        s = simulate_cir(CirParams(delta=0.25), 200, seed=(1, 0, 0))
        path = write_series(s, tmp_path / "x.csv")
        back = read_series(path)
        assert back.values.tobytes() == s.values.tobytes()
        assert back.delta == 0.25
        assert sidecar_path(path).exists()
        assert path.read_text().splitlines()[0] == "value"

    def test_read_errors(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("value\n1.0\n-2.0\n")
        with pytest.raises(DomainError, match="row 2"):
            read_series(p)
        p.write_text("value\n")
        with pytest.raises(DomainError, match="no observations"):
            read_series(p)
