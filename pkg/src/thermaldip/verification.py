"""Self-contained check suite behind ``thermaldip verify``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analytic
from .montecarlo import (Estimate, LowFluxWarning, RunSpec, corrected_rates,
                         corrected_visibility, exact_coincidence_probability,
                         fit_dip, moment_check, pooled_accidentals, ratio,
                         run_sweep, weighted_slope)
from .optics import (ExperimentConfig, PulseEnvelope, SpeckleDraw, TimeGrid,
                     arm_fields, output_intensities)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<40s} value={self.value:.12g}  tol: {self.tolerance}"


def analytic_checks(config: ExperimentConfig) -> list[Check]:
    eta, n, tau_p = config.eta, config.n_mean, config.tau_p
    shoulder = 1.5 * (eta * n) ** 2
    bottom = (eta * n) ** 2
    v_raw = analytic.visibility(shoulder, bottom)
    c0 = analytic.corrected_coincidence_rate(eta, n, 0.0, tau_p)
    c_far = analytic.corrected_coincidence_rate(eta, n, 50 * tau_p, tau_p)
    v_corr = analytic.visibility(c_far, c0)

    env = PulseEnvelope(tau_p)
    grid = TimeGrid.for_pulse(tau_p, 0.0)
    norm = float(np.trapezoid(env(grid.times) ** 2, grid.times))

    ratios = np.concatenate([[0.0], np.logspace(-3, 1, 49)])
    overlap_err = max(
        abs(analytic.overlap_magnitude_sq_numeric(env, r * tau_p)
            - analytic.overlap_magnitude_sq(r * tau_p, tau_p))
        for r in ratios)

    return [
        Check("raw visibility", v_raw, "|V - 0.2| <= 1e-12", abs(v_raw - 0.2) <= 1e-12),
        Check("corrected rate at zero delay", c0, "== 0", c0 == 0.0),
        Check("corrected visibility", v_corr, "|V - 1| <= 1e-12", abs(v_corr - 1.0) <= 1e-12),
        Check("envelope normalization", norm, "|int f^2 - 1| <= 1e-9", abs(norm - 1) <= 1e-9),
        Check("overlap quadrature max abs error", overlap_err, "<= 1e-9", overlap_err <= 1e-9),
    ]


def energy_check(seed: int, n_pairs: int = 10_000) -> Check:
    rng = np.random.default_rng(seed)
    tau_p = 345e-15
    env = PulseEnvelope(tau_p)
    worst = 0.0
    g = rng.standard_normal((n_pairs, 4))
    dts = rng.uniform(-5, 5, n_pairs) * tau_p
    ts = rng.uniform(-4, 4, n_pairs) * tau_p
    for (a, b, c, d), dt, t in zip(g, dts, ts):
        draw = SpeckleDraw(complex(a, b), complex(c, d))
        i1, i2 = output_intensities(env, draw, dt, t)
        ep, em = arm_fields(env, draw, dt, t)
        total = abs(ep) ** 2 + abs(em) ** 2
        if total > 0:
            worst = max(worst, abs(i1 + i2 - total) / total)
    return Check("energy conservation max rel error", worst, "<= 1e-12", worst <= 1e-12)


def moment_checks(seed: int, n_samples: int = 10**6, n_mean: float = 1.0) -> list[Check]:
    report = moment_check(np.random.default_rng(seed), n_mean, n_samples)
    z = report.z_scores()
    p2 = report.estimates["power_plus"].value / n_mean
    p4 = report.estimates["power2_plus"].value / n_mean**2
    return [
        Check("moment <|v|^2>/N", p2, f"within 5 SE (z={z['power_plus']:.2f})",
              z["power_plus"] <= 5),
        Check("moment <|v|^4>/N^2", p4, f"within 5 SE (z={z['power2_plus']:.2f})",
              z["power2_plus"] <= 5),
        Check("all speckle moments max z", max(z.values()), "<= 5", report.within(5.0)),
    ]


def oracle_checks(config: ExperimentConfig) -> list[Check]:
    out = []
    for n in (1e-3, 1e-4):
        cfg = ExperimentConfig(tau_p=config.tau_p, eta=1.0, n_mean=n, gate=config.gate)
        for dt in (0.0, config.tau_p):
            exact = exact_coincidence_probability(cfg, dt)
            approx = analytic.coincidence_rate(1.0, n, dt, config.tau_p)
            rel = abs(exact / approx - 1.0)
            out.append(Check(f"exact vs closed form N={n:g} dt={dt / config.tau_p:g}tau",
                             rel, f"< 10 N = {10 * n:g}", rel < 10 * n))
    return out


def monte_carlo_checks(config: ExperimentConfig, n_pulses: int, seed: int,
                       workers: int | None = None,
                       delays: list[float] | None = None) -> list[Check]:
    eta, n, tau_p = config.eta, config.n_mean, config.tau_p
    if delays is None:
        delays = np.linspace(-2e-12, 2e-12, 9).tolist()
    results = run_sweep(RunSpec(config, n_pulses, seed), delays, workers=workers)
    checks = []

    z_max = max(r.coincidences.z_score(r.analytic_ref.coincidence_rate) for r in results)
    checks.append(Check("MC coincidences vs closed form, max z", z_max, "<= 3", z_max <= 3))

    fit = fit_dip(delays, [r.coincidences for r in results], tau_p, n_pulses)
    r_bs = fit.bottom_to_shoulder
    checks.append(Check("MC fitted bottom/shoulder", r_bs.value,
                        f"within 3 SE ({r_bs.se:.3g}) of 2/3", r_bs.within(2 / 3)))

    singles = [r.singles_1 for r in results] + [r.singles_2 for r in results]
    z_s = max(s.z_score(analytic.singles_rate(eta, n)) for s in singles)
    checks.append(Check("MC singles vs eta N, max z", z_s, "<= 3", z_s <= 3))
    for label, attr in (("1", "singles_1"), ("2", "singles_2")):
        slope = weighted_slope(delays, [getattr(r, attr) for r in results])
        checks.append(Check(f"MC singles_{label} slope z", slope.z_score(0.0), "<= 3",
                            slope.within(0.0)))

    pooled_acc = pooled_accidentals(results)
    checks.append(Check("MC accidentals (pooled)", pooled_acc.value,
                        f"within 3 SE of (eta N)^2 = {(eta * n) ** 2:.6g}",
                        pooled_acc.within((eta * n) ** 2)))

    corrected = corrected_rates(results)
    i0 = int(np.argmin(np.abs(delays)))
    corr0 = corrected[i0]
    checks.append(Check("MC corrected rate at zero delay", corr0.value,
                        f"within 3 SE ({corr0.se:.3g}) of 0", corr0.within(0.0)))
    v_c = corrected_visibility(fit, pooled_acc)
    checks.append(Check("MC corrected visibility", v_c.value,
                        f"within 3 SE ({v_c.se:.3g}) of 1", v_c.within(1.0)))

    shoulder = Estimate(fit.shoulder, math.sqrt(fit.covariance[0, 0]))
    peak = ratio(shoulder, _pool(singles))
    target = analytic.peak_ratio(eta, n)
    checks.append(Check("MC peak ratio shoulder/singles", peak.value,
                        f"within 3 SE ({peak.se:.3g}) of 3 eta N/2 = {target:.6g}",
                        peak.within(target)))
    return checks


def high_flux_check(config: ExperimentConfig, n_pulses: int, seed: int,
                    workers: int | None = None, n_mean: float = 0.5) -> list[Check]:
    cfg = ExperimentConfig(tau_p=config.tau_p, eta=1.0, n_mean=n_mean, gate=config.gate)
    delays = [0.0, 4 * config.tau_p]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowFluxWarning)
        results = run_sweep(RunSpec(cfg, n_pulses, seed), delays, workers=workers,
                            accidentals=False)
    out = []
    for r in results:
        exact = exact_coincidence_probability(cfg, r.delta_t)
        z = r.coincidences.z_score(exact)
        out.append(Check(f"MC vs exact at N={n_mean:g}, dt={r.delta_t / config.tau_p:g}tau",
                         z, "z <= 3", z <= 3))
    return out


def _pool(estimates: list[Estimate]) -> Estimate:
    """Plain mean of independent equal-size estimates of one quantity."""
    k = len(estimates)
    value = sum(e.value for e in estimates) / k
    return Estimate(value, math.sqrt(sum(e.se**2 for e in estimates)) / k)


def run_all(config: ExperimentConfig, n_pulses: int, seed: int,
            workers: int | None = None,
            emit: Callable[[Check], None] | None = None,
            delays: list[float] | None = None) -> list[Check]:
    checks: list[Check] = []

    def add(items):
        for c in items:
            checks.append(c)
            if emit is not None:
                emit(c)

    add(analytic_checks(config))
    add([energy_check(seed)])
    add(moment_checks(seed))
    add(oracle_checks(config))
    add(monte_carlo_checks(config, n_pulses, seed, workers, delays))
    add(high_flux_check(config, max(n_pulses // 10, 10_000), seed, workers))
    return checks
