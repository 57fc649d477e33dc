"""Spectrum fitting, thermometry, and detection-threshold statistics.

Sideband spectra are fit with weighted least squares: the heating
(positive-detuning) peak with a plain Gaussian, the cooling peak with a
profile likelihood over its amplitude a1 where the background offset d
is a nuisance parameter re-minimized at every a1, and the 1-sigma
interval is the Delta-chi2 <= 1 region. Weights use binomial standard
errors with an Agresti-Coull floor so p = 0 or 1 points keep finite
weight.

Detection fidelity follows F = P1*F1 + (1-P1)*F0 with the threshold
optimized against F, either on samples (candidates at sample midpoints)
or analytically for normal signal distributions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .errors import (
    DegenerateWidthError,
    FitConvergenceError,
    ValidationError,
)

MAX_FIT_ITERATIONS = 4000


# ---------------------------------------------------------------------------
# result containers


@dataclass
class GaussianPeakFit:
    """Single-Gaussian fit of the heating sideband."""

    height: float
    center_hz: float
    width_hz: float
    chi2: float
    covariance: np.ndarray = None
    stderr: np.ndarray = None


@dataclass
class ProfileLikelihoodResult:
    """Profile-likelihood estimate of the cooling-peak amplitude."""

    a_red: float
    ci_lo: float
    ci_hi: float  # math.inf when the Delta-chi2 = 1 level is never crossed
    offset: float
    chi2_min: float
    stderr: float
    one_sided: bool
    unbounded_above: bool


@dataclass
class DoubleGaussianFit:
    """Two same-width Gaussians at +/- center plus a global offset."""

    a_blue: float
    a_red: float
    center_hz: float
    width_hz: float
    offset: float
    chi2: float
    covariance: np.ndarray = None
    stderr: np.ndarray = None

    @property
    def ratio(self) -> float:
        return self.a_red / self.a_blue

    @property
    def ground_state_fraction(self) -> float:
        return 1.0 - self.ratio

    @property
    def wrong_state_fraction(self) -> float:
        return self.offset


@dataclass
class TemperatureEstimate:
    """Mean occupation nbar with asymmetric 1-sigma confidence interval."""

    nbar: float
    nbar_ci: tuple
    ratio: float
    ratio_ci: tuple
    method: str


@dataclass
class DetectionResult:
    """Threshold-optimized detection fidelity at prior P1.

    F = P1*F1 + (1-P1)*F0 holds exactly by construction. orientation is
    +1 when present-class signals lie above the threshold.
    """

    threshold: float
    fidelity: float
    f1: float
    f0: float
    p1: float
    n_cyc: int = None
    orientation: int = 1

    def __post_init__(self):
        assert abs(self.fidelity - (self.p1 * self.f1 + (1 - self.p1) * self.f0)) < 1e-12


# ---------------------------------------------------------------------------
# spectrum plumbing


def agresti_coull_stderr(p, shots):
    """Binomial standard error with the Agresti-Coull floor (z = 1)."""
    p = np.asarray(p, dtype=float)
    shots = np.asarray(shots, dtype=float)
    k = p * shots
    p_tilde = (k + 0.5) / (shots + 1.0)
    return np.sqrt(p_tilde * (1.0 - p_tilde) / (shots + 1.0))


def _spectrum_arrays(spectrum):
    """Coerce a SidebandSpectrum-like object or array tuple to arrays.

    Returns (f, p, stderr, shots); shots is None when per-point counts
    are unavailable, in which case the supplied stderr is used as-is.
    """
    shots = None
    if hasattr(spectrum, "detuning_hz"):
        f = np.asarray(spectrum.detuning_hz, dtype=float)
        p = np.asarray(spectrum.p_exc, dtype=float)
        raw = getattr(spectrum, "shots", None)
        if raw is not None and np.all(np.asarray(raw) > 0):
            shots = np.asarray(raw, dtype=float)
            se = agresti_coull_stderr(p, shots)
        else:
            se = np.asarray(spectrum.stderr, dtype=float)
    else:
        f, p, se = (np.asarray(a, dtype=float) for a in spectrum)
    if not (f.shape == p.shape == se.shape) or f.ndim != 1:
        raise ValidationError("spectrum arrays must be 1-d with matching shapes")
    if np.any(se <= 0):
        raise ValidationError("standard errors must be positive")
    return f, p, se, shots


def _model_reweight(se, shots, p_model):
    """Binomial errors evaluated at the model prediction (bias-reducing
    reweighting pass); falls back to the measured errors without counts.

    Plain binomial errors apply here (the Agresti-Coull floor is only
    needed against zero-weight measured points); a 0.3-count variance
    floor keeps the weights stable against noise in the fitted model
    where its prediction approaches zero. The floor value was calibrated
    so profile-likelihood intervals cover at their nominal rate down to
    sub-count peak amplitudes.
    """
    if shots is None:
        return se
    p_eff = np.clip(p_model, 0.3 / shots, 1.0 - 0.3 / shots)
    return np.sqrt(p_eff * (1.0 - p_eff) / shots)


def _gaussian(f, height, center, width):
    return height * np.exp(-((f - center) ** 2) / (2.0 * width**2))


def _weighted_chi2(y, model, se):
    r = (y - model) / se
    return float(np.dot(r, r))


def _chi2_covariance(fun, params, scale=1e-5):
    """Covariance from the numerical Hessian of chi2/2 at the optimum."""
    n = len(params)
    h = np.abs(params) * scale + 1e-12
    hess = np.zeros((n, n))
    f0 = fun(params)
    for i in range(n):
        for j in range(i, n):
            pp = np.array(params, dtype=float)
            pp[i] += h[i]
            pp[j] += h[j]
            fpp = fun(pp)
            pp[j] -= 2 * h[j]
            fpm = fun(pp)
            pp[i] -= 2 * h[i]
            fmm = fun(pp)
            pp[j] += 2 * h[j]
            fmp = fun(pp)
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4 * h[i] * h[j])
    try:
        cov = np.linalg.inv(hess / 2.0)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(hess / 2.0)
    return cov


def _fwhm_width_guess(f, p, base, spacing, span):
    """Width guess from the half-maximum crossings around the main peak.

    Robust against sidelobes and broad baselines that spoil a moment
    estimate.
    """
    i_pk = int(np.argmax(p))
    half = base + (p[i_pk] - base) / 2.0
    left = i_pk
    while left > 0 and p[left - 1] > half:
        left -= 1
    right = i_pk
    while right < p.size - 1 and p[right + 1] > half:
        right += 1
    fwhm = max(float(f[right] - f[left]), spacing)
    return min(max(fwhm / 2.355, spacing / 2.0), span)


def _simplex_fit(chi2_fun, x0, bounds):
    """Bounded Nelder-Mead on internally rescaled parameters.

    Parameters are normalized to order one (mixing Hz-scale centers with
    probability-scale heights otherwise defeats the absolute simplex
    tolerances).
    """
    scales = np.array(
        [max(abs(x), 0.05 * (hi - lo), 1e-12) for x, (lo, hi) in zip(x0, bounds)]
    )
    res = minimize(
        lambda u: chi2_fun(u * scales),
        np.asarray(x0) / scales,
        method="Nelder-Mead",
        bounds=[(lo / s, hi / s) for (lo, hi), s in zip(bounds, scales)],
        options={
            "maxiter": MAX_FIT_ITERATIONS,
            "maxfev": MAX_FIT_ITERATIONS,
            "xatol": 1e-9,
            "fatol": 1e-12,
        },
    )
    if not res.success:
        raise FitConvergenceError(f"simplex did not converge: {res.message}")
    res.x = res.x * scales
    return res


def _simplex_fit_multistart(chi2_fun, starts, bounds):
    """Best converged simplex over several initial guesses.

    Strongly mis-specified lineshapes (coherent sidelobes under a
    Gaussian model) create local minima; a small width-scan of starting
    points keeps the fit on the main peak.
    """
    best = None
    last_error = None
    for x0 in starts:
        try:
            res = _simplex_fit(chi2_fun, x0, bounds)
        except FitConvergenceError as exc:
            last_error = exc
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise last_error
    return best


# ---------------------------------------------------------------------------
# sideband fits


def fit_heating_sideband(spectrum) -> GaussianPeakFit:
    """Weighted least-squares Gaussian fit of the heating (blue) peak.

    Uses the positive-detuning points, a moment-based initial guess, a
    bounded Nelder-Mead refinement, and one model-based reweighting pass
    (binomial errors re-evaluated at the fitted curve) to remove the
    low bias of measured-count weights. Raises DegenerateWidthError when
    no peak stands above the noise or the width collapses below the grid
    spacing, FitConvergenceError past the iteration cap.
    """
    f, p, se, shots = _spectrum_arrays(spectrum)
    mask = f > 0
    f, p, se = f[mask], p[mask], se[mask]
    shots = shots[mask] if shots is not None else None
    if f.size < 5:
        raise ValidationError("need at least 5 points spanning the heating peak")
    order = np.argsort(f)
    f, p, se = f[order], p[order], se[order]
    shots = shots[order] if shots is not None else None
    spacing = float(np.min(np.diff(f)))
    span = float(f[-1] - f[0])

    base = float(np.min(p))
    h0 = float(np.max(p) - base)
    if h0 < 3.0 * float(np.median(se)):
        raise DegenerateWidthError("no peak resolvable above the noise floor")
    mu0 = float(f[np.argmax(p)])
    sig0 = _fwhm_width_guess(f, p, base, spacing, span)

    bounds = [(0.0, 2.0), (f[0], f[-1]), (spacing / 4.0, 2.0 * span)]
    starts = [
        np.array([h0, mu0, s0])
        for s0 in (sig0, max(sig0 / 2, spacing / 2), min(2 * sig0, span))
    ]
    w = 1.0 / se**2
    chi2 = None
    for _ in range(2):  # fit, reweight at the model, refit

        def chi2(params, w=w):
            return float(np.sum(w * (p - _gaussian(f, *params)) ** 2))

        res = _simplex_fit_multistart(chi2, starts, bounds)
        starts = [res.x]
        if shots is None:
            break
        w = 1.0 / _model_reweight(se, shots, _gaussian(f, *res.x)) ** 2

    height, center, width = res.x
    if width < spacing:
        raise DegenerateWidthError(
            f"fitted width {width:.3g} Hz below the grid spacing {spacing:.3g} Hz"
        )
    # n/(n-k) small-sample factor compensates the data-estimated weights
    cov = _chi2_covariance(chi2, res.x) * f.size / max(f.size - 3, 1)
    return GaussianPeakFit(
        height=float(height),
        center_hz=float(center),
        width_hz=float(width),
        chi2=float(res.fun),
        covariance=cov,
        stderr=np.sqrt(np.clip(np.diag(cov), 0, None)),
    )


def profile_likelihood_cooling_peak(
    spectrum,
    blue_fit: GaussianPeakFit,
    n_grid: int = 400,
    refine_tol: float = 1e-7,
) -> ProfileLikelihoodResult:
    """Cooling-peak amplitude with a Delta-chi2 <= 1 confidence interval.

    The cooling peak is constrained to the mirrored blue-peak geometry
    (center at -center_hz, same width). For every scanned amplitude a1
    the background offset d is re-minimized in closed form (weighted
    mean of the shape-subtracted residuals); the interval is located on
    the scan grid and polished by bisection well past the 1e-4 absolute
    contract.
    """
    f, p, se, shots = _spectrum_arrays(spectrum)
    g_red = _gaussian(f, 1.0, -blue_fit.center_hz, blue_fit.width_hz)
    blue_curve = _gaussian(f, blue_fit.height, blue_fit.center_hz, blue_fit.width_hz)
    resid = p - blue_curve

    w = 1.0 / se**2
    for _ in range(2):  # profile, reweight at the model, re-profile
        wsum = float(np.sum(w))

        def chi2_at(a1, w=w, wsum=wsum):
            d = float(np.sum(w * (resid - a1 * g_red))) / wsum
            r = resid - a1 * g_red - d
            return float(np.sum(w * r * r)), d

        # the model is linear in a1, so the profile is an exact parabola;
        # still scan per the stated procedure and use the curvature as stderr
        c2 = float(np.sum(w * g_red**2) - np.sum(w * g_red) ** 2 / wsum)
        if c2 <= 0:
            raise ValidationError("cooling-peak shape carries no weight on this grid")
        stderr = 1.0 / math.sqrt(c2)
        c1 = float(np.sum(w * resid * g_red) - np.sum(w * resid) * np.sum(w * g_red) / wsum)
        a_unconstrained = c1 / c2
        a_hat = min(max(a_unconstrained, 0.0), 1.0)
        if shots is None:
            break
        d_hat = chi2_at(a_hat)[1]
        model = blue_curve + a_hat * g_red + d_hat
        w = 1.0 / _model_reweight(se, shots, model) ** 2
    hi_edge = min(1.0, 3.0 * a_hat + 5.0 * stderr)
    grid = np.linspace(0.0, max(hi_edge, 10.0 * stderr if a_hat == 0 else hi_edge), n_grid)
    chi2_grid = np.array([chi2_at(a)[0] for a in grid])
    i_min = int(np.argmin(chi2_grid))
    if chi2_grid[i_min] > chi2_at(a_hat)[0]:
        a_min = a_hat
    else:
        a_min = float(grid[i_min])
        a_min = a_hat if abs(chi2_at(a_hat)[0] - chi2_grid[i_min]) < 1e-12 else a_min
    chi2_min, d_min = chi2_at(a_hat)

    def delta(a1):
        return chi2_at(a1)[0] - chi2_min

    def bisect(lo, hi):
        # delta(lo) - 1 and delta(hi) - 1 have opposite signs
        flo = delta(lo) - 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fmid = delta(mid) - 1.0
            if abs(hi - lo) < refine_tol:
                break
            if (fmid > 0) == (flo > 0):
                lo, flo = mid, fmid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    one_sided = False
    if delta(0.0) <= 1.0:
        ci_lo = 0.0
        one_sided = True
    else:
        ci_lo = bisect(0.0, a_hat)

    unbounded_above = False
    if delta(1.0) <= 1.0:
        ci_hi = math.inf
        unbounded_above = True
    else:
        hi_bracket = a_hat
        step = max(stderr, 1e-6)
        while delta(hi_bracket) <= 1.0:
            hi_bracket = min(hi_bracket + step, 1.0)
            step *= 2
        ci_hi = bisect(a_hat, hi_bracket)

    return ProfileLikelihoodResult(
        a_red=float(a_hat),
        ci_lo=float(ci_lo),
        ci_hi=float(ci_hi),
        offset=float(d_min),
        chi2_min=float(chi2_min),
        stderr=float(stderr),
        one_sided=one_sided,
        unbounded_above=unbounded_above,
    )


def nbar_from_ratio(r: float) -> float:
    """Thermal conversion nbar = r / (1 - r) for the sideband ratio r."""
    if not 0.0 <= r < 1.0:
        raise ValidationError(
            f"sideband ratio {r} outside [0, 1): not a thermal signal"
        )
    return r / (1.0 - r)


def ratio_from_nbar(nbar: float) -> float:
    """Inverse conversion r = nbar / (nbar + 1)."""
    if nbar < 0:
        raise ValidationError(f"nbar must be >= 0, got {nbar}")
    return nbar / (nbar + 1.0)


def temperature_from_spectrum(spectrum, method: str = "profile-likelihood") -> TemperatureEstimate:
    """Full thermometry pipeline: blue-peak fit, cooling-peak estimate, nbar.

    The blue-height uncertainty is propagated into the ratio interval in
    quadrature with the profile-likelihood amplitude interval.
    """
    blue = fit_heating_sideband(spectrum)
    if method == "profile-likelihood":
        prof = profile_likelihood_cooling_peak(spectrum, blue)
        a1, lo, hi = prof.a_red, prof.ci_lo, prof.ci_hi
    elif method == "least-squares":
        fit = fit_double_gaussian_with_offset(spectrum)
        a1 = fit.a_red
        sig = fit.stderr[1] if fit.stderr is not None else 0.0
        lo, hi = max(a1 - sig, 0.0), a1 + sig
        blue = GaussianPeakFit(fit.a_blue, fit.center_hz, fit.width_hz, fit.chi2,
                               stderr=np.array([fit.stderr[0] if fit.stderr is not None else 0.0]))
    else:
        raise ValidationError(f"unknown thermometry method {method!r}")

    ab = blue.height
    sab = float(blue.stderr[0]) if blue.stderr is not None else 0.0
    r_hat = a1 / ab
    blue_term = r_hat * sab / ab  # blue-height error mapped to the ratio

    def widen(endpoint, side):
        if math.isinf(endpoint):
            return math.inf
        half = abs(endpoint / ab - r_hat)
        return r_hat + side * math.sqrt(half**2 + blue_term**2)

    r_lo = max(widen(lo, -1), 0.0)
    r_hi = widen(hi, +1)
    if r_hat >= 1.0:
        raise ValidationError(f"fitted ratio {r_hat} >= 1: not a thermal spectrum")
    nbar = nbar_from_ratio(r_hat)
    nbar_lo = nbar_from_ratio(min(r_lo, 1 - 1e-15))
    nbar_hi = math.inf if (math.isinf(r_hi) or r_hi >= 1.0) else nbar_from_ratio(r_hi)
    return TemperatureEstimate(
        nbar=nbar,
        nbar_ci=(nbar_lo, nbar_hi),
        ratio=r_hat,
        ratio_ci=(r_lo, r_hi),
        method=method,
    )


def fit_double_gaussian_with_offset(spectrum) -> DoubleGaussianFit:
    """Simultaneous fit of both sidebands: two same-width Gaussians at
    +/- center plus a global offset reflecting wrong-electronic-state
    population."""
    f, p, se, shots = _spectrum_arrays(spectrum)
    if not (np.any(f > 0) and np.any(f < 0)):
        raise ValidationError("spectrum must span both sidebands")
    order = np.argsort(f)
    f, p, se = f[order], p[order], se[order]
    shots = shots[order] if shots is not None else None
    spacing = float(np.min(np.diff(f)))

    pos = f > 0
    d0 = float(np.min(p))
    hb0 = float(np.max(p[pos]) - d0)
    if hb0 < 3.0 * float(np.median(se)):
        raise DegenerateWidthError("no heating peak resolvable above the noise floor")
    mu0 = float(f[pos][np.argmax(p[pos])])
    hr0 = max(float(np.max(p[~pos]) - d0), 0.0)
    sig0 = _fwhm_width_guess(f[pos], p[pos], d0, spacing, float(f[-1] - f[0]))

    def model(params):
        ab, ar, mu, sig, d = params
        return _gaussian(f, ab, mu, sig) + _gaussian(f, ar, -mu, sig) + d

    bounds = [
        (0.0, 2.0),
        (0.0, 2.0),
        (spacing, float(f[-1])),
        (spacing / 4.0, float(f[-1] - f[0])),
        (0.0, 1.0),
    ]
    starts = [
        np.array([hb0, hr0, mu0, s0, d0])
        for s0 in (sig0, max(sig0 / 2, spacing / 2), min(2 * sig0, float(f[-1] - f[0])))
    ]
    w = 1.0 / se**2
    chi2 = None
    for _ in range(2):  # fit, reweight at the model, refit

        def chi2(params, w=w):
            return float(np.sum(w * (p - model(params)) ** 2))

        res = _simplex_fit_multistart(chi2, starts, bounds)
        starts = [res.x]
        if shots is None:
            break
        w = 1.0 / _model_reweight(se, shots, model(res.x)) ** 2

    ab, ar, mu, sig, d = res.x
    if sig < spacing:
        raise DegenerateWidthError(
            f"fitted width {sig:.3g} Hz below the grid spacing {spacing:.3g} Hz"
        )
    cov = _chi2_covariance(chi2, res.x) * f.size / max(f.size - 5, 1)
    return DoubleGaussianFit(
        a_blue=float(ab),
        a_red=float(ar),
        center_hz=float(mu),
        width_hz=float(sig),
        offset=float(d),
        chi2=float(res.fun),
        covariance=cov,
        stderr=np.sqrt(np.clip(np.diag(cov), 0, None)),
    )


def nonthermal_correction(r_est: float, t12: float) -> float:
    """Upper bound r^(3/2) * (1 - t12) on the thermal-assumption bias.

    Treating a one-quantum-removed distribution as thermal overestimates
    the ground-state population by at most this amount (to leading order
    in the measured sideband ratio r), with t12 the 1->2 sideband
    transfer probability of the thermometry pulse.
    """
    if not 0.0 <= r_est < 1.0:
        raise ValidationError(f"r_est must be in [0, 1), got {r_est}")
    if not 0.0 <= t12 <= 1.0:
        raise ValidationError(f"t12 must be in [0, 1], got {t12}")
    return r_est**1.5 * (1.0 - t12)


# ---------------------------------------------------------------------------
# detection statistics


def optimize_threshold(signals_present, signals_absent, p1: float, n_cyc: int = None) -> DetectionResult:
    """Empirical threshold maximizing F = P1*F1 + (1-P1)*F0.

    Candidate thresholds sit at the midpoints of adjacent pooled samples
    (plus sentinels outside the data range), which realize every value
    the piecewise-constant objective can take; ties break toward the
    lower threshold.
    """
    sp = np.sort(np.asarray(signals_present, dtype=float))
    sa = np.sort(np.asarray(signals_absent, dtype=float))
    if not 0.0 <= p1 <= 1.0:
        raise ValidationError(f"p1 must be in [0, 1], got {p1}")
    if sp.size == 0 or sa.size == 0:
        raise ValidationError("need at least one sample per class")
    if p1 in (0.0, 1.0):
        warnings.warn(
            "degenerate prior: classifying everything as the prior class is optimal",
            stacklevel=2,
        )
    present_higher = np.mean(sp) >= np.mean(sa)
    pooled = np.unique(np.concatenate([sp, sa]))
    span = max(pooled[-1] - pooled[0], 1.0)
    mids = (pooled[:-1] + pooled[1:]) / 2.0
    cands = np.concatenate([[pooled[0] - 0.5 * span], mids, [pooled[-1] + 0.5 * span]])
    # P(signal > x) per class, vectorized over candidates
    above_p = 1.0 - np.searchsorted(sp, cands, side="right") / sp.size
    above_a = 1.0 - np.searchsorted(sa, cands, side="right") / sa.size
    if present_higher:
        f1, f0 = above_p, 1.0 - above_a
    else:
        f1, f0 = 1.0 - above_p, above_a
    f = p1 * f1 + (1 - p1) * f0
    best = int(np.argmax(f))  # first max = lowest threshold
    return DetectionResult(
        threshold=float(cands[best]),
        fidelity=float(f[best]),
        f1=float(f1[best]),
        f0=float(f0[best]),
        p1=p1,
        n_cyc=n_cyc,
        orientation=1 if present_higher else -1,
    )


def optimize_threshold_analytic(
    bright_mean: float,
    bright_std: float,
    dark_mean: float,
    dark_std: float,
    p1: float,
    n_cyc: int = None,
) -> DetectionResult:
    """Threshold from the density-crossing condition for normal signals.

    Solves p1 * pdf_bright(x) = (1 - p1) * pdf_dark(x) and returns the
    solution maximizing F; bright is the present class.
    """
    if bright_std <= 0 or dark_std <= 0:
        raise ValidationError("signal standard deviations must be positive")
    if not 0.0 <= p1 <= 1.0:
        raise ValidationError(f"p1 must be in [0, 1], got {p1}")
    if p1 in (0.0, 1.0):
        warnings.warn("degenerate prior: threshold is unconstrained", stacklevel=2)
    # quadratic a x^2 + b x + c = 0 from equating log densities
    a = 0.5 / dark_std**2 - 0.5 / bright_std**2
    b = bright_mean / bright_std**2 - dark_mean / dark_std**2
    c = (
        0.5 * dark_mean**2 / dark_std**2
        - 0.5 * bright_mean**2 / bright_std**2
        + math.log(max(p1, 1e-300) / max(1 - p1, 1e-300))
        + math.log(dark_std / bright_std)
    )
    if abs(a) < 1e-300:
        roots = [-c / b] if b != 0 else []
    else:
        disc = b * b - 4 * a * c
        roots = [] if disc < 0 else [(-b + s * math.sqrt(disc)) / (2 * a) for s in (-1, 1)]
    lo = min(dark_mean, bright_mean) - 20 * max(dark_std, bright_std)
    hi = max(dark_mean, bright_mean) + 20 * max(dark_std, bright_std)
    cands = sorted(set(float(r) for r in roots if lo <= r <= hi) | {lo, hi})

    def fidelity(x):
        f1 = 1.0 - norm.cdf(x, bright_mean, bright_std)
        f0 = norm.cdf(x, dark_mean, dark_std)
        return p1 * f1 + (1 - p1) * f0, f1, f0

    best_x, (best_f, best_f1, best_f0) = cands[0], fidelity(cands[0])
    for x in cands[1:]:
        fx = fidelity(x)
        if fx[0] > best_f + 1e-15:
            best_x, (best_f, best_f1, best_f0) = x, fx
    return DetectionResult(
        threshold=float(best_x),
        fidelity=float(best_f),
        f1=float(best_f1),
        f0=float(best_f0),
        p1=p1,
        n_cyc=n_cyc,
    )


def aggregate_signals(signals, n: int, mode: str = "sum", imaging=None) -> np.ndarray:
    """Aggregate per-round signals over the first n rounds of each shot.

    mode="sum" is the unweighted cumulative sum; mode="llr" (off by
    default elsewhere) sums per-round log-likelihood ratios under the
    normal signal model of ``imaging`` (an object with bright_mean,
    bright_std, dark_mean, dark_std).
    """
    arr = np.asarray(signals, dtype=float)
    if arr.ndim != 2:
        raise ValidationError("signals must be a 2-d (shots, rounds) array")
    if not 1 <= n <= arr.shape[1]:
        raise ValidationError(
            f"n = {n} outside the recorded round count {arr.shape[1]}"
        )
    if mode == "sum":
        return arr[:, :n].sum(axis=1)
    if mode != "llr":
        raise ValidationError(f"mode must be 'sum' or 'llr', got {mode!r}")
    if imaging is None:
        raise ValidationError("llr aggregation needs the imaging signal model")
    s = arr[:, :n]
    llr = norm.logpdf(s, imaging.bright_mean, imaging.bright_std) - norm.logpdf(
        s, imaging.dark_mean, imaging.dark_std
    )
    return llr.sum(axis=1)
