"""Acceptance gate: ten numbered criteria, one test (and one -v line) each.

Every test states its tolerance inline and fails loudly rather than loosening
anything.  Criterion 5 is expected to fail: the envelope-times-contrast
product is a fitting convenience that the pulse physics genuinely breaks at
the tested parameters (see the assertion message and notes in the repo's
decision log); the tolerance is asserted as stated anyway.
"""
import dataclasses
import math
import time

import numpy as np
import pytest

import linecancel.cli as cli
from linecancel.estimator import fit_amplitude, fit_gaussian_envelope, fit_phase, fit_phase_slope
from linecancel.model_core import (
    TWO_PI,
    CPSequence,
    HeatingModel,
    ModulationParams,
    analytic_signal,
    filter_F,
    filter_F_general,
)
from linecancel.phase_oracle import phase_averaged_signal
from linecancel.phasor_cancel import Phasor, TrialRecord, solve_phasor
from linecancel.quantum_sim import (
    SequenceSpec,
    cached_heating_envelope,
    check_density_matrix,
    free_evolution,
    initial_state,
    mean_phonon,
    phase_averaged_sequence,
    product_model_check,
    sideband_pulse,
)
from linecancel.simlab import SimLab, reference_truth

# Free-running contrast-scan parameter sets (n, A/2pi Hz, nbar_dot /s) and the
# echo phase-scan set, with the published 1-sigma reference uncertainties used
# for combined-sigma comparisons.
CONTRAST_SET = {"n": 1, "a_hz": 53.9, "nbar": 6.4, "sig_a": 1.1, "sig_nbar": 0.8}
PHASE_SET = {"a_hz": 56.8, "phi_d": 0.913 * math.pi, "nbar": 15.5,
             "sig_a": 0.7, "sig_phi": 0.003 * math.pi, "sig_nbar": 0.8}
AMPLITUDE_SETS = ((1, 53.9), (2, 40.4), (3, 45.5))
PRODUCT_SETS = ((0, 53.9), (1, 53.9), (2, 40.4))

F_LINE = 60.0
TRACE_TAU = np.linspace(0.1 / 80, 0.1, 80)


def test_criterion_01_oracle_equivalence():
    """1000 random draws: closed form vs 4096-point phase average, <= 1e-9, < 10 s."""
    rng = np.random.default_rng(2026)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(0, 6))
        seq = CPSequence(n, float(rng.uniform(1e-4, 0.2)))
        mod = ModulationParams.from_hz(float(rng.uniform(1.0, 200.0)),
                                       float(rng.uniform(40.0, 80.0)))
        diff = abs(analytic_signal(seq, mod) - phase_averaged_signal(seq, mod, n_phases=4096))
        worst = max(worst, diff)
    elapsed = time.monotonic() - t0
    print(f"[criterion 1] worst |closed - averaged| = {worst:.3e} in {elapsed:.1f} s")
    assert worst <= 1e-9
    assert elapsed < 10.0


def test_criterion_02_closed_form_filters():
    """Closed-form F_1..F_3 vs segment construction (1e-10, 100 random theta
    each) and exact echo revivals at 60 Hz.
    """
    rng = np.random.default_rng(7)
    worst = 0.0
    for n in (1, 2, 3):
        for _ in range(100):
            tau = float(rng.uniform(1e-3, 0.2))
            theta = float(rng.uniform(1e-3, 40.0 * math.pi))
            diff = abs(abs(filter_F(n, theta)) - filter_F_general(CPSequence(n, tau), theta / tau))
            worst = max(worst, diff)
    print(f"[criterion 2] worst closed-vs-general difference = {worst:.3e}")
    assert worst <= 1e-10
    for k in range(1, 6):
        revival = analytic_signal(CPSequence(1, k / 30.0), ModulationParams.from_hz(50.0, F_LINE))
        assert revival == 1.0, f"k={k}: {revival!r}"


def test_criterion_03_density_matrix_vs_analytic():
    """Heating-free simulated sequences, phase-grid averaged, within 1e-5 of
    the closed form across the contrast-scan parameter sets; state invariants
    hold at every segment.  < 5 min.
    """
    t0 = time.monotonic()
    worst = 0.0
    for n, a_hz in AMPLITUDE_SETS:
        mod = ModulationParams.from_hz(a_hz, F_LINE)
        for tau in np.linspace(0.013, 0.1, 6):
            spec = SequenceSpec(CPSequence(n, float(tau)), mod)
            sim = phase_averaged_sequence(spec, n_phases=64)
            ref = analytic_signal(spec.seq, mod)
            worst = max(worst, abs(sim - ref))

    # invariants along one full sequence, segment by segment
    mod = ModulationParams.from_hz(53.9, F_LINE, phase=0.9)
    seq = CPSequence(2, 0.05)
    edges = seq.segment_edges()
    rho = sideband_pulse(initial_state(), math.pi / 2.0)
    check_density_matrix(rho)
    for i in range(len(edges) - 1):
        rho = free_evolution(rho, edges[i + 1] - edges[i], mod=mod, t_start=edges[i])
        check_density_matrix(rho)
        if i < len(edges) - 2:
            rho = sideband_pulse(rho, math.pi)
            check_density_matrix(rho)

    elapsed = time.monotonic() - t0
    print(f"[criterion 3] worst |sim - closed form| = {worst:.3e} in {elapsed:.1f} s")
    assert worst <= 1e-5
    assert elapsed < 300.0


def test_criterion_04_heating_rate():
    """Ground-state heating at 6/s: <n>(t) = 6t within 2% out to 50 ms."""
    heating = HeatingModel(6.0)
    rho = initial_state()
    t = 0.0
    worst = 0.0
    for _ in range(5):
        rho = free_evolution(rho, 0.010, heating=heating, t_start=t)
        t += 0.010
        check_density_matrix(rho)
        worst = max(worst, abs(mean_phonon(rho) - 6.0 * t) / (6.0 * t))
    print(f"[criterion 4] worst relative <n> deviation = {worst:.3e}")
    assert worst <= 0.02


def test_criterion_05_product_model():
    """Full simulation vs heating-envelope times contrast, <= 0.02 over
    tau in (0, 0.1] for the product-scan sets (n = 0, 1, 2) at 6/s.

    KNOWN RED.  The free evolution factorizes exactly (pinned elsewhere at
    integrator error), but the pulses do not: heated population is
    over-rotated by the sqrt(n+1) carrier scaling, and population relaxing
    into the sideband-dark |up, 0> state stops toggling entirely.  Both paths
    then interfere with the intended sequence, and the deviation reaches a
    few tenths.  Softening the pulse model to n-independent rotations (the
    ideal_pulses ablation) roughly halves the deviation but cannot remove
    the dark-state path, and breaks the measured coherence-time physics that
    criteria 4 and 9 pin down.  The bound is asserted as stated rather than
    weakened; see the repository decision log for the full analysis.
    """
    heating = HeatingModel(6.0)
    tau_grid = np.linspace(0.01, 0.1, 10)
    devs = {}
    for n, a_hz in PRODUCT_SETS:
        mod = ModulationParams.from_hz(a_hz, F_LINE)
        devs[n] = product_model_check(CPSequence(n, 1.0), mod, heating, tau_grid, n_phases=64)
    print(f"[criterion 5] max |C_tot - C_heat*C_mod| by n: "
          + ", ".join(f"n={n}: {d:.4f}" for n, d in devs.items()))
    worst = max(devs.values())
    assert worst <= 0.02, (
        f"product factorization deviation {worst:.3f} (per n: {devs}); the pulse "
        "physics (sqrt(n+1) over-rotation plus the sideband-dark |up, 0> state) "
        "genuinely breaks the factorization at these parameters, so this "
        "criterion fails as stated; analysis in the repository decision log"
    )


def _contrast_recovery_ok(seed):
    p = CONTRAST_SET
    truth = reference_truth(seed=seed, noise_mv=p["a_hz"] * 0.38, nbar_dot=p["nbar"])
    trace = SimLab(truth).trace("X", p["n"], TRACE_TAU, shots=500)
    res = fit_amplitude(trace, p["n"], F_LINE)
    sig_a = math.hypot(res.sigmas["A_over_2pi"], p["sig_a"])
    sig_n = math.hypot(res.sigmas["nbar_dot"], p["sig_nbar"])
    return (abs(res.params["A_over_2pi"] - p["a_hz"]) <= 3.0 * sig_a
            and abs(res.params["nbar_dot"] - p["nbar"]) <= 3.0 * sig_n)


def _phase_recovery_ok(seed):
    p = PHASE_SET
    t_d = 0.002
    angle = (p["phi_d"] - TWO_PI * F_LINE * t_d) % TWO_PI
    truth = reference_truth(seed=seed, noise_mv=p["a_hz"] * 0.38, noise_angle=angle,
                            nbar_dot=p["nbar"])
    trace = SimLab(truth).trace("X", 1, TRACE_TAU, shots=500, t_d=t_d)
    res = fit_phase(trace, F_LINE)
    sig_a = math.hypot(res.sigmas["A_over_2pi"], p["sig_a"])
    sig_p = math.hypot(res.sigmas["phi_d"], p["sig_phi"])
    sig_n = math.hypot(res.sigmas["nbar_dot"], p["sig_nbar"])
    dphi = abs(res.params["phi_d"] - p["phi_d"]) % math.pi
    dphi = min(dphi, math.pi - dphi)
    return (abs(res.params["A_over_2pi"] - p["a_hz"]) <= 3.0 * sig_a
            and dphi <= 3.0 * sig_p
            and abs(res.params["nbar_dot"] - p["nbar"]) <= 3.0 * sig_n)


def test_criterion_06_fit_recovery():
    """Synthetic 80-point, 500-shot datasets: parameters recovered within 3
    combined sigma (fit plus reference) in >= 90% of 50 seeds, for both the
    contrast-scan truth and the phase-scan truth.  < 10 min.
    """
    t0 = time.monotonic()
    contrast_wins = sum(_contrast_recovery_ok(seed) for seed in range(50))
    phase_wins = sum(_phase_recovery_ok(seed) for seed in range(50))
    elapsed = time.monotonic() - t0
    print(f"[criterion 6] contrast {contrast_wins}/50, phase {phase_wins}/50 "
          f"in {elapsed:.0f} s")
    assert contrast_wins >= 45
    assert phase_wins >= 45
    assert elapsed < 600.0


def _delay_sweep_slope(f_line, seed):
    delays = np.array([0.0, 1.0, 2.5, 4.0, 5.5, 7.0, 8.5, 10.0, 12.0]) * 1e-3
    truth = dataclasses.replace(
        reference_truth(seed=seed, noise_mv=56.8 * 0.38, noise_angle=1.2, nbar_dot=15.5),
        f_line=f_line)
    lab = SimLab(truth)
    pts = []
    for t_d in delays:
        res = fit_phase(lab.trace("X", 1, TRACE_TAU, shots=500, t_d=float(t_d)), f_line)
        pts.append((float(t_d), res.params["phi_d"], res.sigmas["phi_d"]))
    return fit_phase_slope(pts, period=math.pi)


def test_criterion_07_phase_slope():
    """Delay sweeps at line frequencies 60 and 66.7 Hz recover the slope
    within 3 sigma (phases unwrapped with period pi).
    """
    for f_line in (60.0, 66.7):
        fit = _delay_sweep_slope(f_line, seed=3)
        err = abs(fit.slope - TWO_PI * f_line)
        print(f"[criterion 7] f_line={f_line}: slope/2pi = {fit.slope / TWO_PI:.3f} "
              f"+- {fit.sigma / TWO_PI:.3f} Hz")
        assert not fit.ambiguous
        assert err <= 3.0 * fit.sigma, f"f_line={f_line}: off by {err / fit.sigma:.1f} sigma"


def test_criterion_08_phasor_solver():
    """Truth V=14 mV at 102 deg, r=0.38 mV/Hz; 4 trials with 5% amplitude
    noise; recovery within (3 mV, 10 deg, 0.04 mV/Hz) in >= 80 of 100 seeds.
    """
    noise = Phasor(14.0, math.radians(102.0))
    comp = noise.rotated(math.pi)
    injections = [Phasor(0.0, 0.0)] + [Phasor(15.0, math.radians(a)) for a in (0.0, 120.0, 240.0)]
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        trials = []
        for inj in injections:
            amp = abs(inj.z - comp.z) / 0.38
            meas = max(amp * (1.0 + 0.05 * rng.standard_normal()), 0.0)
            trials.append(TrialRecord(inj, meas, max(0.05 * amp, 1e-3)))
        sol = solve_phasor(trials)
        dv = abs(sol.noise_phasor.magnitude - 14.0)
        da = abs((sol.noise_phasor.angle - math.radians(102.0) + math.pi) % TWO_PI - math.pi)
        dr = abs(sol.scale_r - 0.38)
        wins += dv <= 3.0 and da <= math.radians(10.0) and dr <= 0.04
    print(f"[criterion 8] {wins}/100 seeds within the quoted uncertainties")
    assert wins >= 80


def test_criterion_09_end_to_end_cancellation():
    """Closed-loop cancellation on the default scenario lifts the echo 1/e
    coherence time from 10 ms (+-30%) to 35 ms (+-30%), the after value
    consistent with the heating-only envelope at 15/s.
    """
    summary, _, _, _ = cli._run_cancel(
        reference_truth(seed=7), "X", 1, F_LINE, n_trials=4, trial_mv=15.0,
        shots=400, points=40, tau_max=0.05,
        verify_shots=600, verify_points=80, verify_tau_max=0.08,
        min_apply_mv=1.0, threshold=math.exp(-1.0),
    )
    before = summary["coherence_before_s"]
    after = summary["coherence_after_s"]
    print(f"[criterion 9] coherence {1e3 * before:.2f} ms -> {1e3 * after:.2f} ms "
          f"(applied={summary['applied']})")
    assert summary["applied"] is True
    assert 0.007 <= before <= 0.013
    assert 0.0245 <= after <= 0.0455

    # heating-only envelope at 15/s: first 1/e crossing
    tau = np.linspace(0.005, 0.06, 221)
    vals = cached_heating_envelope(1, 15.0, tau)
    j = int(np.argmax(vals < math.exp(-1.0)))
    frac = (vals[j - 1] - math.exp(-1.0)) / (vals[j - 1] - vals[j])
    crossing = tau[j - 1] + frac * (tau[j] - tau[j - 1])
    assert abs(after - crossing) <= 0.3 * crossing


def test_criterion_10_gaussian_envelope():
    """Quasi-static drift with 50 Hz frequency std gives a Gaussian contrast
    envelope with T_g = sqrt(2)/sigma (sigma in rad/s) within 5%.
    """
    sigma_f_hz = 50.0
    truth = reference_truth(seed=0, noise_mv=0.0, nbar_dot=0.0,
                            sigma_f=sigma_f_hz, tau_c=0.02)
    trace = SimLab(truth).trace("X", 0, np.linspace(0.0005, 0.009, 16), shots=3000)
    tg, _ = fit_gaussian_envelope(trace)
    tg_expected = math.sqrt(2.0) / (TWO_PI * sigma_f_hz)
    rel = abs(tg - tg_expected) / tg_expected
    print(f"[criterion 10] T_g = {1e3 * tg:.3f} ms vs {1e3 * tg_expected:.3f} ms "
          f"({100.0 * rel:.2f}% off)")
    assert rel <= 0.05
