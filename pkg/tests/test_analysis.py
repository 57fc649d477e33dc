import numpy as np
import pytest
from conftest import gaussian_model, make_gaussian_spectrum
from hypothesis import given, settings
from hypothesis import strategies as st

from tweezersim.analysis import (
    agresti_coull_stderr,
    aggregate_signals,
    fit_double_gaussian_with_offset,
    fit_heating_sideband,
    nbar_from_ratio,
    nonthermal_correction,
    optimize_threshold,
    optimize_threshold_analytic,
    profile_likelihood_cooling_peak,
    ratio_from_nbar,
    temperature_from_spectrum,
)
from tweezersim.errors import DegenerateWidthError, ValidationError
from tweezersim.protocols import SidebandSpectrum


def _noiseless_spectrum(a_blue=0.8, a_red=0.0, center=35e3, width=2e3, offset=0.0,
                        n_side=15, span=7e3, stderr=1e-3):
    side = np.linspace(center - span, center + span, n_side)
    f = np.concatenate([-side[::-1], side])
    p = gaussian_model(f, a_blue, a_red, center, width, offset)
    return SidebandSpectrum(
        detuning_hz=f,
        p_exc=p,
        stderr=np.full(f.size, stderr),
        shots=np.zeros(f.size),
    )


class TestHeatingFit:
    def test_exact_recovery_on_noiseless_data(self):
        spec = _noiseless_spectrum(a_blue=0.8)
        fit = fit_heating_sideband(spec)
        assert fit.height == pytest.approx(0.8, abs=1e-6)
        assert fit.center_hz == pytest.approx(35e3, abs=1e-6 * 35e3)
        assert fit.width_hz == pytest.approx(2e3, abs=1e-6 * 2e3)

    def test_flat_spectrum_raises_degenerate_width(self):
        side = np.linspace(28e3, 42e3, 15)
        f = np.concatenate([-side[::-1], side])
        spec = SidebandSpectrum(
            detuning_hz=f,
            p_exc=np.full(f.size, 0.1),
            stderr=np.full(f.size, 0.02),
            shots=np.zeros(f.size),
        )
        with pytest.raises(DegenerateWidthError):
            fit_heating_sideband(spec)

    def test_coverage_of_three_sigma_band(self):
        # 500 binomial synthetics at 200 shots/point: each parameter within
        # 3 sigma of truth in at least 99% of datasets
        rng = np.random.default_rng(42)
        truth = {"height": 0.9, "center": 35e3, "width": 2e3}
        hits = np.zeros(3)
        n_sets = 500
        for _ in range(n_sets):
            spec = make_gaussian_spectrum(0.0, rng, shots_per_point=200)
            fit = fit_heating_sideband(spec)
            vals = np.array([fit.height, fit.center_hz, fit.width_hz])
            ref = np.array([truth["height"], truth["center"], truth["width"]])
            hits += np.abs(vals - ref) <= 3 * fit.stderr
        assert np.all(hits / n_sets >= 0.99)

    def test_needs_enough_points(self):
        spec = _noiseless_spectrum(n_side=3)
        with pytest.raises(ValidationError):
            fit_heating_sideband(spec)


class TestProfileLikelihood:
    def test_cold_spectrum_recovery(self):
        rng = np.random.default_rng(3)
        nbar = 0.002
        spec = make_gaussian_spectrum(nbar, rng, shots_per_point=300)
        est = temperature_from_spectrum(spec)
        lo, hi = est.nbar_ci
        assert lo >= 0.0
        assert hi > lo
        # interval magnitudes comparable to a few-per-mille determination
        assert 1e-4 < hi - est.nbar < 1e-2
        assert est.nbar < 0.02

    def test_zero_amplitude_gives_one_sided_interval(self):
        spec = _noiseless_spectrum(a_blue=0.8, a_red=0.0)
        blue = fit_heating_sideband(spec)
        prof = profile_likelihood_cooling_peak(spec, blue)
        assert prof.a_red == pytest.approx(0.0, abs=1e-9)
        assert prof.ci_lo == 0.0
        assert prof.one_sided

    def test_profile_curve_is_convex_with_unit_crossings(self):
        # oracle: rebuild chi2(a1) with offset re-minimized in closed form
        rng = np.random.default_rng(9)
        spec = make_gaussian_spectrum(0.05, rng)
        blue = fit_heating_sideband(spec)
        prof = profile_likelihood_cooling_peak(spec, blue)

        f = spec.detuning_hz
        w = 1.0 / spec.stderr**2
        g = np.exp(-((f + blue.center_hz) ** 2) / (2 * blue.width_hz**2))
        y = spec.p_exc - blue.height * np.exp(
            -((f - blue.center_hz) ** 2) / (2 * blue.width_hz**2)
        )

        def chi2(a1):
            d = np.sum(w * (y - a1 * g)) / np.sum(w)
            return np.sum(w * (y - a1 * g - d) ** 2)

        a_grid = prof.a_red + np.linspace(-1.5, 1.5, 9) * prof.stderr
        a_grid = a_grid[a_grid >= 0]
        curve = np.array([chi2(a) for a in a_grid])
        coeffs = np.polyfit(a_grid, curve, 2)
        assert coeffs[0] > 0  # convex near the minimum
        # the interval endpoints sit on the Delta-chi2 = 1 level of the
        # same construction the estimator used (measured-weight oracle
        # is a cruder weighting, so only require monotone enclosure)
        assert prof.ci_lo <= prof.a_red <= prof.ci_hi

    def test_interval_brackets_truth_typically(self):
        rng = np.random.default_rng(11)
        nbar = 0.05
        hits = 0
        for _ in range(60):
            spec = make_gaussian_spectrum(nbar, rng)
            est = temperature_from_spectrum(spec)
            lo, hi = est.nbar_ci
            hits += lo <= nbar <= hi
        assert 0.5 < hits / 60 < 0.9


class TestConversions:
    def test_reference_points(self):
        assert nbar_from_ratio(0.5) == pytest.approx(1.0, abs=1e-12)
        assert nbar_from_ratio(0.0) == 0.0
        assert ratio_from_nbar(0.002) == pytest.approx(0.0019960079840319364, rel=1e-12)

    def test_ratio_matches_thermal_populations(self):
        # independent check: r = p1/p0 of the thermal distribution
        from tweezersim.states import ThermalSpec, thermal_distribution

        p = thermal_distribution(ThermalSpec(nbar=0.002, n_max=12))
        assert ratio_from_nbar(0.002) == pytest.approx(p[1] / p[0], rel=1e-9)

    @given(st.floats(0.0, 0.99))
    @settings(max_examples=100, deadline=None)
    def test_roundtrip(self, r):
        assert nbar_from_ratio(ratio_from_nbar(nbar_from_ratio(r))) == pytest.approx(
            nbar_from_ratio(r), abs=1e-12
        )

    def test_rejects_nonthermal_ratio(self):
        with pytest.raises(ValidationError):
            nbar_from_ratio(1.0)
        with pytest.raises(ValidationError):
            nbar_from_ratio(-0.1)


class TestDoubleGaussianFit:
    def test_offset_recovery_within_three_sigma(self):
        rng = np.random.default_rng(21)
        ok = 0
        for _ in range(30):
            spec = make_gaussian_spectrum(
                0.3, rng, shots_per_point=400, offset=0.073
            )
            fit = fit_double_gaussian_with_offset(spec)
            ok += abs(fit.offset - 0.073) <= 3 * fit.stderr[4]
        assert ok >= 27

    def test_zero_offset_reduces_to_baseline(self):
        spec = _noiseless_spectrum(a_blue=0.8, a_red=0.2, offset=0.0)
        fit = fit_double_gaussian_with_offset(spec)
        base = fit_heating_sideband(spec)
        assert fit.offset == pytest.approx(0.0, abs=1e-5)
        assert fit.a_blue == pytest.approx(base.height, abs=1e-4)
        assert fit.center_hz == pytest.approx(base.center_hz, rel=1e-4)
        assert fit.ground_state_fraction == pytest.approx(0.75, abs=1e-4)


class TestEstimatorAgreement:
    def test_profile_interval_contains_least_squares_estimate(self):
        # on well-conditioned spectra the 5-parameter least-squares red
        # height falls inside the profile-likelihood interval
        rng = np.random.default_rng(33)
        for _ in range(10):
            spec = make_gaussian_spectrum(0.3, rng, shots_per_point=2000)
            blue = fit_heating_sideband(spec)
            prof = profile_likelihood_cooling_peak(spec, blue)
            lsq = fit_double_gaussian_with_offset(spec)
            assert prof.ci_lo <= lsq.a_red <= prof.ci_hi


class TestNonthermalCorrection:
    def test_reference_endpoints(self):
        assert nonthermal_correction(0.08, 0.764) == pytest.approx(0.005, abs=5e-4)
        assert nonthermal_correction(0.24, 0.764) == pytest.approx(0.028, abs=5e-4)
        assert nonthermal_correction(0.0, 0.764) == 0.0

    def test_overestimation_bound_against_ladder_oracle(self):
        # treating a one-quantum-removed distribution as thermal
        # overestimates p0 by at most r^(3/2)(1-t12) + O(r^2)
        from tweezersim.dynamics import sideband_rabi
        from tweezersim.protocols import DEFAULT_TRAP, sideband_peak_ratio
        from tweezersim.states import ThermalSpec, remove_one_quantum, thermal_distribution

        eta, rabi = DEFAULT_TRAP.eta, 2 * np.pi * 2e3
        t12 = np.sin(
            sideband_rabi(1, 2, eta, rabi) / sideband_rabi(0, 1, eta, rabi) * np.pi / 2
        ) ** 2
        for q in np.linspace(0.1, 0.7, 13):
            nbar = q / (1 - q)
            dist = remove_one_quantum(thermal_distribution(ThermalSpec(nbar=nbar, n_max=40)))
            r = sideband_peak_ratio(dist)
            p0_true = dist[0]
            p0_est = 1.0 - r
            over = p0_est - p0_true
            assert over >= 0.0
            assert over <= nonthermal_correction(r, t12) + 0.25 * r**2

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            nonthermal_correction(1.2, 0.7)
        with pytest.raises(ValidationError):
            nonthermal_correction(0.1, 1.5)


class TestThresholds:
    def test_analytic_reference_case(self):
        res = optimize_threshold_analytic(4.0, 1.0, 0.0, 1.0, p1=0.5)
        assert res.threshold == pytest.approx(2.0, abs=1e-9)
        assert res.fidelity == pytest.approx(0.977249868, abs=1e-6)

    def test_perfectly_separated_samples(self):
        res = optimize_threshold(np.array([10.0, 11.0, 12.0]), np.array([0.0, 1.0]), p1=0.5)
        assert res.fidelity == 1.0
        assert res.f1 == 1.0 and res.f0 == 1.0

    def test_identity_decomposition(self):
        rng = np.random.default_rng(5)
        res = optimize_threshold(rng.normal(3, 1, 500), rng.normal(0, 1, 500), p1=0.7)
        assert res.fidelity == pytest.approx(0.7 * res.f1 + 0.3 * res.f0, abs=1e-12)

    def test_empirical_matches_analytic(self):
        rng = np.random.default_rng(6)
        n = 200_000
        res = optimize_threshold(rng.normal(4, 1, n), rng.normal(0, 1, n), p1=0.5)
        ref = optimize_threshold_analytic(4.0, 1.0, 0.0, 1.0, p1=0.5)
        assert res.fidelity == pytest.approx(ref.fidelity, abs=0.002)
        assert res.threshold == pytest.approx(2.0, abs=0.15)

    def test_inverted_orientation_autodetected(self):
        rng = np.random.default_rng(7)
        res = optimize_threshold(rng.normal(0, 1, 2000), rng.normal(4, 1, 2000), p1=0.5)
        assert res.orientation == -1
        assert res.fidelity > 0.95

    def test_degenerate_prior_warns(self):
        with pytest.warns(UserWarning):
            optimize_threshold(np.array([1.0]), np.array([0.0]), p1=1.0)

    def test_tie_breaks_toward_lower_threshold(self):
        res = optimize_threshold(np.array([2.0, 3.0]), np.array([0.0, 1.0]), p1=0.5)
        assert res.threshold < 2.0


class TestAggregation:
    def test_single_round_identity(self):
        sig = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(aggregate_signals(sig, 1), [1.0, 3.0])

    def test_zeros(self):
        np.testing.assert_array_equal(aggregate_signals(np.zeros((3, 4)), 4), np.zeros(3))

    def test_variance_scales_with_rounds(self):
        rng = np.random.default_rng(8)
        sig = rng.normal(0, 1.0, size=(20000, 4))
        v4 = aggregate_signals(sig, 4).var()
        assert v4 == pytest.approx(4.0, rel=0.05)

    def test_llr_mode_orders_like_sum_for_equal_widths(self):
        class Spec:
            bright_mean, bright_std, dark_mean, dark_std = 3.0, 1.0, 0.0, 1.0

        rng = np.random.default_rng(9)
        sig = rng.normal(1.5, 1.0, size=(50, 3))
        llr = aggregate_signals(sig, 3, mode="llr", imaging=Spec)
        total = aggregate_signals(sig, 3)
        assert np.all(np.argsort(llr) == np.argsort(total))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            aggregate_signals(np.zeros((3, 2)), 3)


class TestAggregatedReadoutMonotonicity:
    def test_fidelity_nondecreasing_on_gaussian_sum_model(self):
        # analytic model: aggregated sums of n i.i.d. normal signals keep
        # the same per-round separation, so F(n) = Phi(sqrt(n) d / 2)
        # rises monotonically when the threshold is re-optimized per n
        from scipy.stats import norm

        d = 2.5631  # single-round separation for F ~ 0.90
        prev = 0.0
        for n in range(1, 8):
            res = optimize_threshold_analytic(
                n * d, np.sqrt(n), 0.0, np.sqrt(n), p1=0.5, n_cyc=n
            )
            assert res.fidelity >= prev - 1e-12
            assert res.fidelity == pytest.approx(norm.cdf(np.sqrt(n) * d / 2), abs=1e-9)
            prev = res.fidelity


class TestAgrestiCoull:
    def test_floors_zero_counts(self):
        se = agresti_coull_stderr(0.0, 300)
        assert se > 0
        assert se == pytest.approx(np.sqrt((0.5 / 301) * (1 - 0.5 / 301) / 301), rel=1e-12)

    def test_matches_binomial_at_moderate_p(self):
        se = agresti_coull_stderr(0.5, 400)
        assert se == pytest.approx(np.sqrt(0.25 / 400), rel=0.01)
