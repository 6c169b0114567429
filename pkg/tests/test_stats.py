import numpy as np
import pytest

from dynperc.stats import Estimate, Moments, RngStream, fit_power_law, mc_mean, run_chunks


def test_stream_reproducible_and_distinct():
    a = RngStream(5).generator().random(4)
    b = RngStream(5).generator().random(4)
    c = RngStream(5, 1).generator().random(4)
    d = RngStream(5).spawn(0).generator().random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)


def test_stream_rejects_bad_seed():
    with pytest.raises(ValueError):
        RngStream(-1)


def test_run_chunks_independent_of_threads():
    work = lambda size, gen: gen.random(size).sum()
    one = run_chunks(work, 10_000, RngStream(3), chunk=1000, threads=1)
    four = run_chunks(work, 10_000, RngStream(3), chunk=1000, threads=4)
    assert one == four


def test_moments_match_numpy():
    x = np.random.default_rng(1).normal(size=1001)
    est = Moments.of(x[:400]).merge(Moments.of(x[400:])).estimate()
    assert est.mean == pytest.approx(x.mean())
    assert est.std_error == pytest.approx(x.std(ddof=1) / np.sqrt(len(x)))


def test_estimate_flags():
    assert Estimate(0.0, 0.0, 10).zero
    assert not Estimate.exact_value(0.0).zero
    assert Estimate(1.0, 0.1, 10).within(1.25)


def test_mc_mean_uniform():
    est = mc_mean(lambda k, g: g.random(k), 40_000, RngStream(9))
    assert abs(est.mean - 0.5) < 4 * est.std_error


def test_power_fit_exact():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_power_law(x, 3.0 * x ** -1.5)
    assert fit.slope == pytest.approx(-1.5)
    assert fit.intercept == pytest.approx(np.log(3.0))


def test_power_fit_drops_zeros():
    fit = fit_power_law([1, 2, 4], [Estimate(0.5, 0.1, 10), Estimate(0.25, 0.1, 10), Estimate(0.0, 0.0, 10)])
    assert fit.dropped == 1 and fit.slope == pytest.approx(-1.0)
