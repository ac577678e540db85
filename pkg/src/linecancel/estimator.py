"""Weighted least-squares extraction of modulation and heating parameters.

Four fits, all driven by the same Levenberg-Marquardt core:

* fit_amplitude: phase-averaged contrast vs wait time -> modulation amplitude
  and heating rate.  The model is the heating envelope times
  J0((A/omega_m) F_n(omega_m tau)); the envelope comes from the cached master
  curve in quantum_sim, so each fit iteration costs an interpolation, not a
  density-matrix integration.
* fit_phase: line-triggered echo signal vs wait time -> amplitude, modulation
  phase at the sequence start, heating rate.  Multi-start over initial phases;
  the model is periodic in phi_d and local minima are real.
* fit_phase_slope: unwrapped modulation phase vs trigger delay -> slope, the
  actual noise frequency in rad/s.
* fit_gaussian_envelope: short-time contrast decay -> Gaussian time constant.

Uncertainties are 1-sigma from inv(J^T J) with shot-noise-scaled residuals;
no reduced-chi-square rescaling is applied (see levmar module docstring).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bessel import bessel_j0
from .levmar import levenberg_marquardt, weighted_linear_fit
from .model_core import TWO_PI, CPSequence, RamseyTrace, filter_F, filter_F_general
from .quantum_sim import DEFAULT_FOCK_CUTOFF, cached_heating_envelope

__all__ = [
    "FitResult",
    "SlopeFit",
    "shot_noise_sigma",
    "fit_amplitude",
    "fit_phase",
    "fit_phase_slope",
    "fit_gaussian_envelope",
]

# Coarse grid for the fit_amplitude starting point.  J0 oscillates, so a
# gradient descent from one fixed guess can lock onto the wrong lobe; a cheap
# scan over amplitude x heating-rate picks the right basin first.
_AMP_SCAN_HZ = np.linspace(0.0, 120.0, 25)
_RATE_SCAN = np.linspace(0.0, 30.0, 7)
_PHASE_STARTS = 8


@dataclass(frozen=True)
class FitResult:
    """Converged (or best-effort) weighted fit.

    params/sigmas are keyed by name: "A_over_2pi" (Hz), "nbar_dot" (/s), and
    "phi_d" (rad) where the model has a phase.  sigmas are 1-sigma from the
    fit covariance.
    """

    params: dict
    sigmas: dict
    chi2_reduced: float
    converged: bool
    n_iterations: int


@dataclass(frozen=True)
class SlopeFit:
    """Weighted straight-line fit of unwrapped phase vs trigger delay.

    ambiguous is set when some successive unwrapped gap still reaches pi, i.e.
    the delay sampling is too sparse to pin the branch; the numbers are then
    the continuous-branch guess and should not be trusted silently.
    """

    slope: float
    sigma: float
    intercept: float
    intercept_sigma: float
    ambiguous: bool


def shot_noise_sigma(signal, shots):
    """Binomial standard error of a signal estimated from `shots` two-outcome shots.

    Clipped below at 1/(2*shots) so points that happened to land exactly on
    +-1 keep a finite weight.
    """
    s = np.clip(np.asarray(signal, dtype=float), -1.0, 1.0)
    shots = np.asarray(shots, dtype=float)
    sig = np.sqrt((1.0 - s * s) / shots)
    out = np.maximum(sig, 1.0 / (2.0 * shots))
    return float(out) if out.ndim == 0 else out


def _check_weights(trace):
    if not np.any(np.isfinite(trace.sigma)):
        raise ValueError("all sigma values are infinite; nothing to fit")


def _filter_values(n, omega, tau):
    if n <= 3:
        return filter_F(n, omega * tau)
    return np.array([filter_F_general(CPSequence(n, float(t)), omega) for t in tau])


def _revival_period(n, f_m):
    # first wait time where the filter returns to zero (full contrast revival)
    firsts = {0: 1.0, 1: 2.0, 2: 2.0, 3: 0.5}
    return firsts.get(n, 2.0) / f_m


def fit_amplitude(trace, n, f_m, fock_cutoff=DEFAULT_FOCK_CUTOFF):
    """Fit phase-averaged contrast: envelope times J0((A/omega_m) F_n).

    Free parameters: A_over_2pi (Hz) and nbar_dot (/s).  Requires >= 8 points
    spanning at least one contrast revival of the n-pulse filter.
    """
    if f_m <= 0.0:
        raise ValueError(f"f_m must be > 0, got {f_m}")
    if trace.tau.size < 8:
        raise ValueError(f"need >= 8 points, got {trace.tau.size}")
    span = trace.tau[-1] - trace.tau[0]
    if span < _revival_period(n, f_m) * (1.0 - 1e-9):
        raise ValueError(
            f"trace spans {span:.4g} s, less than one revival period "
            f"{_revival_period(n, f_m):.4g} s"
        )
    _check_weights(trace)

    omega = TWO_PI * f_m
    fvals = _filter_values(n, omega, trace.tau)
    sig = trace.sigma

    def model(a_hz, nbar_dot):
        env = cached_heating_envelope(n, nbar_dot, trace.tau, fock_cutoff)
        return env * bessel_j0((a_hz / f_m) * fvals)

    # coarse basin scan
    best = None
    for g in _RATE_SCAN:
        env = cached_heating_envelope(n, g, trace.tau, fock_cutoff)
        pred = env * bessel_j0((_AMP_SCAN_HZ[:, None] / f_m) * fvals[None, :])
        chi2 = np.nansum(((trace.signal - pred) / sig) ** 2, axis=1)
        k = int(np.argmin(chi2))
        if best is None or chi2[k] < best[0]:
            best = (chi2[k], _AMP_SCAN_HZ[k], g)
    _, a0, g0 = best

    def resid(x):
        return (trace.signal - model(x[0], x[1])) / sig

    res = levenberg_marquardt(resid, np.array([a0, g0]), floor=np.array([1.0, 1.0]))
    a_hz, nbar_dot = res.x
    dof = max(trace.tau.size - 2, 1)
    return FitResult(
        params={"A_over_2pi": abs(a_hz), "nbar_dot": nbar_dot},
        sigmas={
            "A_over_2pi": math.sqrt(max(res.cov[0, 0], 0.0)),
            "nbar_dot": math.sqrt(max(res.cov[1, 1], 0.0)),
        },
        chi2_reduced=res.cost / dof,
        converged=res.converged,
        n_iterations=res.n_iterations,
    )


def fit_phase(trace, f_m, fock_cutoff=DEFAULT_FOCK_CUTOFF):
    """Fit a line-triggered echo trace for (A, phi_d, nbar_dot).

    The accumulated phase of the two-segment echo has the closed form
    (A/omega) * 4 sin^2(omega tau/4) * sin(omega tau/2 + phi_d), with phi_d
    the modulation phase at the first pi/2 pulse.  The signal model is
    envelope * cos(that phase).  Multi-started over 8 initial phases and two
    amplitude scales.

    Because the readout is a cosine of the accumulated phase, phi_d and
    phi_d + pi produce identical signals at every tau: a single-delay trace
    determines the phase only modulo pi.  The canonical representative in
    [0, pi) is reported; delay sweeps must unwrap with period pi (see
    fit_phase_slope).
    """
    if f_m <= 0.0:
        raise ValueError(f"f_m must be > 0, got {f_m}")
    _check_weights(trace)
    omega = TWO_PI * f_m
    tau = trace.tau
    sig = trace.sigma
    half = np.sin(omega * tau / 4.0) ** 2 * 4.0

    def resid(x):
        a_hz, phi_d, nbar_dot = x
        acc = (a_hz / f_m) * half * np.sin(omega * tau / 2.0 + phi_d)
        env = cached_heating_envelope(1, nbar_dot, tau, fock_cutoff)
        return (trace.signal - env * np.cos(acc)) / sig

    best = None
    floor = np.array([1.0, 1.0, 1.0])
    for phi0 in np.linspace(0.0, TWO_PI, _PHASE_STARTS, endpoint=False):
        for a0 in (25.0, 60.0):
            res = levenberg_marquardt(resid, np.array([a0, phi0, 5.0]), floor=floor)
            if best is None or res.cost < best.cost:
                best = res
    a_hz, phi_d, nbar_dot = best.x
    if a_hz < 0.0:
        # A -> -A equals phi_d -> phi_d + pi in this model
        a_hz = -a_hz
        phi_d += math.pi
    phi_d %= math.pi  # mod-pi degeneracy; canonical representative
    dof = max(tau.size - 3, 1)
    return FitResult(
        params={"A_over_2pi": a_hz, "phi_d": phi_d, "nbar_dot": nbar_dot},
        sigmas={
            "A_over_2pi": math.sqrt(max(best.cov[0, 0], 0.0)),
            "phi_d": math.sqrt(max(best.cov[1, 1], 0.0)),
            "nbar_dot": math.sqrt(max(best.cov[2, 2], 0.0)),
        },
        chi2_reduced=best.cost / dof,
        converged=best.converged,
        n_iterations=best.n_iterations,
    )


def fit_phase_slope(delays, period=TWO_PI):
    """Weighted linear fit of unwrapped phase vs trigger delay.

    delays: iterable of (t_d seconds, phi_d radians, sigma radians).  The
    phases are unwrapped to the branch continuous with the previous point,
    with the first point normalized into [0, period); any remaining
    successive gap >= period/2 sets the ambiguous flag instead of being
    silently bridged.  Pass period=pi when the phases come from fit_phase,
    which pins them only modulo pi.
    """
    arr = np.asarray([(t, p, s) for t, p, s in delays], dtype=float)
    if arr.shape[0] < 2:
        raise ValueError("need at least two delay points")
    order = np.argsort(arr[:, 0])
    t_d, phi, sig = arr[order].T
    if np.any(np.diff(t_d) <= 0.0):
        raise ValueError("delay values must be distinct")
    phi = np.unwrap(phi, period=period)
    phi -= period * math.floor(phi[0] / period)  # first point into [0, period)
    ambiguous = bool(np.any(np.abs(np.diff(phi)) >= period / 2.0))
    (a, b), cov = weighted_linear_fit(t_d, phi, sig)
    return SlopeFit(
        slope=float(b),
        sigma=math.sqrt(max(cov[1, 1], 0.0)),
        intercept=float(a),
        intercept_sigma=math.sqrt(max(cov[0, 0], 0.0)),
        ambiguous=ambiguous,
    )


def fit_gaussian_envelope(trace):
    """Fit c0 * exp(-(tau/T_g)^2) to short-time contrast decay.

    Returns (T_g, sigma_T_g) in seconds.
    """
    _check_weights(trace)
    tau = trace.tau
    sig = trace.sigma
    c0_guess = max(float(np.max(trace.signal)), 0.1)
    # log-linear moment for the time-constant start
    keep = trace.signal > 0.2 * c0_guess
    if keep.sum() >= 2:
        slope = np.polyfit(tau[keep] ** 2, np.log(trace.signal[keep]), 1)[0]
        tg0 = 1.0 / math.sqrt(-slope) if slope < 0.0 else tau[-1]
    else:
        tg0 = tau[-1]

    def resid(x):
        c0, tg = x
        return (trace.signal - c0 * np.exp(-((tau / tg) ** 2))) / sig

    res = levenberg_marquardt(
        resid, np.array([c0_guess, tg0]), floor=np.array([1.0, max(tau[-1] / 10.0, 1e-6)])
    )
    tg = abs(res.x[1])
    return tg, math.sqrt(max(res.cov[1, 1], 0.0))
