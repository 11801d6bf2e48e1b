"""Exit criteria for the package, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible without ``-s``)
and then asserts.  Tolerances are fixed here and not tuned afterwards.
"""

import time

import numpy as np
import pytest

from thermaldip import analytic
from thermaldip.cli import main
from thermaldip.montecarlo import (Estimate, RunSpec, corrected_rates,
                                   corrected_visibility, exact_coincidence_probability,
                                   fit_dip, moment_check, pooled_accidentals, ratio,
                                   run_sweep, weighted_slope)
from thermaldip.optics import (ExperimentConfig, PulseEnvelope, SpeckleDraw, arm_fields,
                               output_intensities)

TAU = 345e-15
ETA = 0.1
N_SWEEP = 0.05
PULSES = 10**6
SEED = 20120106
DELAYS = np.linspace(-2e-12, 2e-12, 9).tolist()


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def sweep():
    cfg = ExperimentConfig(tau_p=TAU, eta=ETA, n_mean=N_SWEEP)
    start = time.perf_counter()
    results = run_sweep(RunSpec(cfg, PULSES, SEED), DELAYS)
    return results, time.perf_counter() - start


def test_c01_raw_visibility(report):
    eta, n = 0.1, 0.0267
    v = analytic.visibility(1.5 * (eta * n) ** 2, (eta * n) ** 2)
    report(1, abs(v - 0.2) <= 1e-12, f"raw visibility {v!r} vs 0.2 (tol 1e-12)")


def test_c02_corrected_dip(report):
    c0 = analytic.corrected_coincidence_rate(ETA, N_SWEEP, 0.0, TAU)
    c_far = analytic.corrected_coincidence_rate(ETA, N_SWEEP, 100 * TAU, TAU)
    v = analytic.visibility(c_far, c0)
    report(2, c0 == 0.0 and v == 1.0, f"corrected C12(0) = {c0!r}, visibility = {v!r}")


def test_c03_overlap_oracle(report):
    env = PulseEnvelope(TAU)
    ratios = np.concatenate([[0.0], np.logspace(-3, 1, 49)])
    start = time.perf_counter()
    err = max(abs(analytic.overlap_magnitude_sq_numeric(env, r * TAU)
                  - analytic.overlap_magnitude_sq(r * TAU, TAU)) for r in ratios)
    elapsed = time.perf_counter() - start
    report(3, len(ratios) == 50 and err <= 1e-9 and elapsed < 1.0,
           f"max |quadrature - closed form| = {err:.3g} over 50 delays (tol 1e-9), "
           f"{elapsed:.3f} s")


def test_c04_monte_carlo_dip(report, sweep):
    results, elapsed = sweep
    z = [r.coincidences.z_score(analytic.coincidence_rate(ETA, N_SWEEP, r.delta_t, TAU))
         for r in results]
    fit = fit_dip(DELAYS, [r.coincidences for r in results], TAU, PULSES)
    ratio_bs = fit.bottom_to_shoulder
    ok = max(z) <= 3.0 and ratio_bs.within(2 / 3, 3.0) and elapsed < 120.0
    report(4, ok, f"max z = {max(z):.2f} over 9 delays (tol 3); fitted bottom/shoulder "
                  f"{ratio_bs.value:.4f} +- {ratio_bs.se:.4f} vs 2/3 (tol 3 SE); "
                  f"sweep took {elapsed:.1f} s")


def test_c05_singles_flat(report, sweep):
    results, _ = sweep
    target = analytic.singles_rate(ETA, N_SWEEP)
    z = [s.z_score(target) for r in results for s in (r.singles_1, r.singles_2)]
    slopes = [weighted_slope(DELAYS, [getattr(r, a) for r in results])
              for a in ("singles_1", "singles_2")]
    slope_z = [s.z_score(0.0) for s in slopes]
    ok = max(z) <= 3.0 and max(slope_z) <= 3.0
    report(5, ok, f"singles max z vs eta N = {max(z):.2f} (tol 3); "
                  f"trend slope z = {slope_z[0]:.2f}, {slope_z[1]:.2f} (tol 3)")


def test_c06_accidental_subtraction(report, sweep):
    results, _ = sweep
    acc = pooled_accidentals(results)
    corrected = corrected_rates(results)
    i0 = DELAYS.index(0.0)
    raw_fit = fit_dip(DELAYS, [r.coincidences for r in results], TAU, PULSES)
    vis = corrected_visibility(raw_fit, acc)
    checks = (acc.within((ETA * N_SWEEP) ** 2, 3.0), corrected[i0].within(0.0, 3.0),
              vis.within(1.0, 3.0))
    report(6, all(checks),
           f"accidentals {acc.value:.4g} +- {acc.se:.2g} vs {(ETA * N_SWEEP) ** 2:.4g}; "
           f"corrected C12(0) {corrected[i0].value:.3g} +- {corrected[i0].se:.2g} vs 0; "
           f"corrected visibility {vis.value:.3f} +- {vis.se:.3f} vs 1 (all tol 3 SE)")


def test_c07_peak_ratio(report, sweep):
    results, _ = sweep
    fit = fit_dip(DELAYS, [r.coincidences for r in results], TAU, PULSES)
    shoulder = Estimate(fit.shoulder, float(np.sqrt(fit.covariance[0, 0])))
    singles = [s for r in results for s in (r.singles_1, r.singles_2)]
    pooled = Estimate(sum(s.value for s in singles) / len(singles),
                      float(np.sqrt(sum(s.se**2 for s in singles))) / len(singles))
    peak = ratio(shoulder, pooled)
    target = analytic.peak_ratio(ETA, N_SWEEP)
    low_flux_value = analytic.peak_ratio(0.1, 0.0267)
    ok = peak.within(target, 3.0) and abs(low_flux_value - 0.004) <= 0.004 * 0.01
    report(7, ok, f"MC shoulder/singles {peak.value:.5f} +- {peak.se:.5f} vs 3 eta N/2 = "
                  f"{target:.5f} (tol 3 SE); analytic at N=0.0267: {low_flux_value:.6f} ~ 0.004")


def test_c08_moment_factoring(report):
    start = time.perf_counter()
    m = moment_check(np.random.default_rng(SEED), 1.0, 10**6)
    elapsed = time.perf_counter() - start
    z = m.z_scores()
    ok = z["power_plus"] <= 5 and z["power2_plus"] <= 5 and elapsed < 5.0
    power = m.estimates["power_plus"].value
    report(8, ok, f"<|v|^2> = {power:.4f} (z {z['power_plus']:.2f}), "
                  f"<|v|^4> = {m.estimates['power2_plus'].value:.4f} "
                  f"(z {z['power2_plus']:.2f}), tol 5 SE, {elapsed:.2f} s")


def test_c09_oracle_chain(report):
    rel = {}
    for n in (1e-3, 1e-4):
        cfg = ExperimentConfig(tau_p=TAU, eta=1.0, n_mean=n)
        rel[n] = max(abs(exact_coincidence_probability(cfg, dt)
                         / analytic.coincidence_rate(1.0, n, dt, TAU) - 1.0)
                     for dt in (0.0, 0.5 * TAU, TAU, 3 * TAU))

    with pytest.warns(UserWarning):
        cfg = ExperimentConfig(tau_p=TAU, eta=1.0, n_mean=0.5)
        spec = RunSpec(cfg, PULSES, SEED)
    results = run_sweep(spec, [0.0, 4 * TAU], accidentals=False)
    z_exact = []
    z_closed = []
    for r in results:
        z_exact.append(r.coincidences.z_score(exact_coincidence_probability(cfg, r.delta_t)))
        z_closed.append(r.coincidences.z_score(
            analytic.coincidence_rate(1.0, 0.5, r.delta_t, TAU)))
    ok = all(rel[n] < 10 * n for n in rel) and max(z_exact) <= 3.0
    report(9, ok, f"exact vs closed form rel err {rel[1e-3]:.3g} (N=1e-3, tol 1e-2), "
                  f"{rel[1e-4]:.3g} (N=1e-4, tol 1e-3); MC vs exact at N=0.5 max z "
                  f"{max(z_exact):.2f} (tol 3); closed form there is off by "
                  f"{min(z_closed):.0f}+ SE")


def test_c10_energy_conservation(report):
    rng = np.random.default_rng(SEED)
    env = PulseEnvelope(TAU)
    g = rng.standard_normal((10_000, 4))
    dts = rng.uniform(-6, 6, 10_000) * TAU
    ts = rng.uniform(-6, 6, 10_000) * TAU
    worst = 0.0
    for (a, b, c, d), dt, t in zip(g, dts, ts):
        draw = SpeckleDraw(complex(a, b), complex(c, d))
        i1, i2 = output_intensities(env, draw, dt, t)
        ep, em = arm_fields(env, draw, dt, t)
        total = abs(ep) ** 2 + abs(em) ** 2
        worst = max(worst, abs(i1 + i2 - total) / total)
    report(10, worst <= 1e-12, f"max relative |I1 + I2 - |E+|^2 - |E-|^2| = {worst:.3g} "
                               "over 1e4 pairs (tol 1e-12)")


def test_c11_determinism(report, tmp_path):
    outputs = []
    for i, workers in enumerate(("1", "4", "1")):
        path = tmp_path / f"sim{i}.csv"
        assert main(["simulate", "--seed", "42", "--pulses", "1000000",
                     "--workers", workers, "--output", str(path)]) == 0
        outputs.append(path.read_bytes())
    ok = outputs[0] == outputs[1] == outputs[2]
    report(11, ok, f"simulate output byte-identical across runs and worker counts "
                   f"({len(outputs[0])} bytes)")
