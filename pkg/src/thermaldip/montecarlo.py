"""Monte Carlo photocount simulation of the pulsed pseudothermal interferometer.

Each pulse gets an independent speckle pair ``(v+, v-)`` of circular complex
Gaussian amplitudes; given the pair, the detectors register conditionally
independent Poisson counts with means ``eta * W1`` and ``eta * W2``, where
``W1, W2`` are the gated photon numbers at the two output ports.  A click is
one or more counts, and a coincidence is a click at both detectors.

Randomness is counter based: pulses are grouped in fixed-size blocks and
every block draws from its own Philox stream keyed by
``(seed, arm tag, delta_t, block index)``.  Results therefore do not depend
on how blocks are scheduled across worker threads.
"""

from __future__ import annotations

import enum
import math
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import roots_laguerre

from .analytic import DipPrediction, dip_curve, overlap_magnitude_sq
from .optics import (ExperimentConfig, SpeckleDraw, TimeGrid, energy_gram,
                     gated_energies)

BLOCK_SIZE = 1 << 16
LOW_FLUX_LIMIT = 0.2


class LowFluxWarning(UserWarning):
    """Mean photon number is too large for the low-flux closed forms."""


class ConvergenceError(RuntimeError):
    """Node doubling failed to reach the requested quadrature accuracy."""


class BlockedArm(enum.Enum):
    NONE = "none"
    PLUS = "plus_blocked"
    MINUS = "minus_blocked"

    @property
    def tag(self) -> int:
        return {"none": 0, "plus_blocked": 1, "minus_blocked": 2}[self.value]


@dataclass(frozen=True)
class Estimate:
    """A rate (or any estimated quantity) with its standard error."""

    value: float
    se: float
    # set for raw binomial proportions only
    trials: int | None = None

    @classmethod
    def binomial(cls, successes: int, trials: int) -> Estimate:
        p = successes / trials
        return cls(p, math.sqrt(p * (1.0 - p) / trials), trials)

    def __add__(self, other: Estimate) -> Estimate:
        return Estimate(self.value + other.value, math.hypot(self.se, other.se))

    def __sub__(self, other: Estimate) -> Estimate:
        return Estimate(self.value - other.value, math.hypot(self.se, other.se))

    def z_score(self, target: float) -> float:
        """Distance to ``target`` in standard errors.

        Binomial proportions are scored with the error implied by the target
        rate itself; the observed-rate error understates the spread when a
        point holds only a few dozen counts.
        """
        diff = abs(self.value - target)
        se = self.se
        if self.trials is not None and 0.0 < target < 1.0:
            se = math.sqrt(target * (1.0 - target) / self.trials)
        if se == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / se

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return self.z_score(target) <= n_se


@dataclass(frozen=True)
class RunSpec:
    config: ExperimentConfig
    n_pulses: int
    seed: int = 0
    blocked_arm: BlockedArm = BlockedArm.NONE

    def __post_init__(self):
        if isinstance(self.n_pulses, bool) or int(self.n_pulses) != self.n_pulses \
                or self.n_pulses < 1:
            raise ValueError(f"n_pulses must be a positive integer, got {self.n_pulses!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "blocked_arm", BlockedArm(self.blocked_arm))
        if self.config.n_mean > LOW_FLUX_LIMIT:
            warnings.warn(
                f"n_mean = {self.config.n_mean:g} exceeds {LOW_FLUX_LIMIT}; the "
                "low-flux closed forms are only approximate here",
                LowFluxWarning, stacklevel=3)


@dataclass(frozen=True)
class DetectionEvent:
    counts_1: int
    counts_2: int

    @property
    def coincident(self) -> bool:
        return self.counts_1 >= 1 and self.counts_2 >= 1


@dataclass(frozen=True)
class SweepResult:
    delta_t: float
    singles_1: Estimate
    singles_2: Estimate
    coincidences: Estimate
    accidentals: Estimate | None
    analytic_ref: DipPrediction
    n_pulses: int
    seed: int

    @property
    def corrected(self) -> Estimate:
        if self.accidentals is None:
            raise ValueError("sweep was run without accidental estimation")
        return self.coincidences - self.accidentals


# -- random streams ---------------------------------------------------------

def _float_key(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x) + 0.0))[0]


def pulse_stream(seed: int, arm_tag: int, delta_t: float,
                 block: int) -> np.random.Generator:
    """Philox generator for one block of pulses."""
    ss = np.random.SeedSequence(seed, spawn_key=(arm_tag, _float_key(delta_t), block))
    return np.random.Generator(np.random.Philox(ss))


def _sample_amplitudes(stream: np.random.Generator, n_mean: float, size: int):
    g = stream.standard_normal((size, 4))
    scale = math.sqrt(n_mean / 2.0)
    v_plus = scale * (g[:, 0] + 1j * g[:, 1])
    v_minus = scale * (g[:, 2] + 1j * g[:, 3])
    return v_plus, v_minus


def sample_speckle(stream: np.random.Generator, n_mean: float) -> SpeckleDraw:
    """One circular complex Gaussian pair with E|v|^2 = n_mean per arm."""
    if not n_mean >= 0:
        raise ValueError(f"n_mean must be nonnegative, got {n_mean!r}")
    v_plus, v_minus = _sample_amplitudes(stream, n_mean, 1)
    return SpeckleDraw(complex(v_plus[0]), complex(v_minus[0]))


def _block(draw_plus, draw_minus, blocked_arm: BlockedArm):
    if blocked_arm is BlockedArm.PLUS:
        draw_plus = np.zeros_like(draw_plus)
    elif blocked_arm is BlockedArm.MINUS:
        draw_minus = np.zeros_like(draw_minus)
    return draw_plus, draw_minus


# -- single pulse -----------------------------------------------------------

def simulate_pulse(stream: np.random.Generator, config: ExperimentConfig,
                   delta_t: float | None = None,
                   blocked_arm: BlockedArm = BlockedArm.NONE,
                   grid: TimeGrid | None = None) -> DetectionEvent:
    """Draw speckle, integrate the port intensities, and draw photocounts."""
    if delta_t is None:
        delta_t = config.delta_t
    draw = sample_speckle(stream, config.n_mean)
    vp, vm = _block(np.array([draw.v_plus]), np.array([draw.v_minus]),
                    BlockedArm(blocked_arm))
    draw = SpeckleDraw(complex(vp[0]), complex(vm[0]))
    w1, w2 = gated_energies(config.envelope, draw, delta_t, grid=grid)
    means = config.eta * np.maximum([w1, w2], 0.0)
    counts = stream.poisson(means)
    return DetectionEvent(int(counts[0]), int(counts[1]))


# -- batched sweeps ---------------------------------------------------------

def _port_energies(v_plus, v_minus, gram):
    a, b, c = gram
    mean = 0.5 * (a * np.abs(v_plus) ** 2 + b * np.abs(v_minus) ** 2)
    cross = np.real(np.conj(v_plus) * v_minus * c)
    return np.maximum(mean + cross, 0.0), np.maximum(mean - cross, 0.0)


def _simulate_block(seed, blocked_arm, config, delta_t, gram, block, size):
    stream = pulse_stream(seed, blocked_arm.tag, delta_t, block)
    v_plus, v_minus = _sample_amplitudes(stream, config.n_mean, size)
    v_plus, v_minus = _block(v_plus, v_minus, blocked_arm)
    w1, w2 = _port_energies(v_plus, v_minus, gram)
    counts = stream.poisson(config.eta * np.stack([w1, w2], axis=-1))
    click = counts >= 1
    return (int(click[:, 0].sum()), int(click[:, 1].sum()),
            int((click[:, 0] & click[:, 1]).sum()))


def _blocks(n_pulses):
    n_full, rest = divmod(n_pulses, BLOCK_SIZE)
    sizes = [BLOCK_SIZE] * n_full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _count_clicks(spec: RunSpec, delta_ts: Sequence[float],
                  blocked_arm: BlockedArm, workers: int | None):
    """Integer click totals ``(singles_1, singles_2, coincidences)`` per delay."""
    config = spec.config
    grams = {dt: energy_gram(config.envelope, dt) for dt in set(delta_ts)}
    tasks = [(dt, block, size) for dt in delta_ts for block, size in _blocks(spec.n_pulses)]

    def run(task):
        dt, block, size = task
        return _simulate_block(spec.seed, blocked_arm, config, dt, grams[dt], block, size)

    if workers is None:
        workers = min(32, os.cpu_count() or 1)
    if workers <= 1:
        partials = list(map(run, tasks))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(run, tasks))

    totals = {dt: [0, 0, 0] for dt in delta_ts}
    for (dt, _, _), part in zip(tasks, partials):
        for i in range(3):
            totals[dt][i] += part[i]
    return totals


def _delays(delta_t_list: Iterable[float]) -> list[float]:
    delta_ts = [float(d) for d in delta_t_list]
    if not delta_ts:
        raise ValueError("delta_t_list is empty")
    return delta_ts


def estimate_accidentals(spec: RunSpec, delta_t_list: Iterable[float],
                         workers: int | None = None) -> list[Estimate]:
    """Sum of the plus-blocked and minus-blocked coincidence rates per delay."""
    delta_ts = _delays(delta_t_list)
    n = spec.n_pulses
    plus = _count_clicks(spec, delta_ts, BlockedArm.PLUS, workers)
    minus = _count_clicks(spec, delta_ts, BlockedArm.MINUS, workers)
    return [Estimate.binomial(plus[dt][2], n) + Estimate.binomial(minus[dt][2], n)
            for dt in delta_ts]


def run_sweep(spec: RunSpec, delta_t_list: Iterable[float],
              workers: int | None = None,
              accidentals: bool = True) -> list[SweepResult]:
    """Simulate ``spec.n_pulses`` pulses at every delay.

    Output is bit-identical for identical ``(spec, delta_t_list)`` whatever
    the value of ``workers``.
    """
    delta_ts = _delays(delta_t_list)
    n = spec.n_pulses
    totals = _count_clicks(spec, delta_ts, spec.blocked_arm, workers)
    acc = estimate_accidentals(spec, delta_ts, workers) if accidentals \
        else [None] * len(delta_ts)
    refs = dip_curve(spec.config, delta_ts)
    results = []
    for dt, ref, acc_dt in zip(delta_ts, refs, acc):
        s1, s2, cc = totals[dt]
        results.append(SweepResult(
            delta_t=dt,
            singles_1=Estimate.binomial(s1, n),
            singles_2=Estimate.binomial(s2, n),
            coincidences=Estimate.binomial(cc, n),
            accidentals=acc_dt,
            analytic_ref=ref,
            n_pulses=n,
            seed=spec.seed,
        ))
    return results


# -- curve summaries --------------------------------------------------------

@dataclass(frozen=True)
class DipFit:
    """Weighted least-squares fit of ``rate = shoulder - depth * overlap^2``."""

    shoulder: float
    depth: float
    covariance: np.ndarray

    @property
    def bottom(self) -> Estimate:
        grad = np.array([1.0, -1.0])
        return Estimate(self.shoulder - self.depth, math.sqrt(grad @ self.covariance @ grad))

    @property
    def bottom_to_shoulder(self) -> Estimate:
        s, d = self.shoulder, self.depth
        grad = np.array([d / s**2, -1.0 / s])
        return Estimate(1.0 - d / s, math.sqrt(grad @ self.covariance @ grad))

    @property
    def visibility(self) -> Estimate:
        """(max - min)/(max + min) = d / (2s - d), with propagated error."""
        s, d = self.shoulder, self.depth
        den = 2.0 * s - d
        grad = np.array([-2.0 * d / den**2, 2.0 * s / den**2])
        return Estimate(d / den, math.sqrt(grad @ self.covariance @ grad))


def corrected_visibility(fit: DipFit, accidentals: Estimate) -> Estimate:
    """Visibility of the dip after removing the accidental rate.

    ``fit`` must come from the raw (independent) coincidence points and
    ``accidentals`` from separate blocked-arm runs; the subtraction only
    moves the shoulder, so V = d / (2 (s - A) - d).
    """
    s, d, acc = fit.shoulder, fit.depth, accidentals.value
    den = 2.0 * (s - acc) - d
    cov = np.zeros((3, 3))
    cov[:2, :2] = fit.covariance
    cov[2, 2] = accidentals.se**2
    grad = np.array([-2.0 * d / den**2, 2.0 * (s - acc) / den**2, 2.0 * d / den**2])
    return Estimate(d / den, math.sqrt(grad @ cov @ grad))


def fit_dip(delta_ts: Sequence[float], rates: Sequence[Estimate], tau_p: float,
            n_pulses: int) -> DipFit:
    o = np.array([overlap_magnitude_sq(dt, tau_p) for dt in delta_ts])
    y = np.array([r.value for r in rates])
    # zero-count points still carry one-count resolution
    var = np.array([max(r.se**2, 1.0 / n_pulses**2) for r in rates])
    design = np.column_stack([np.ones_like(o), -o])
    weights = 1.0 / var
    normal = design.T @ (design * weights[:, None])
    cov = np.linalg.inv(normal)
    shoulder, depth = cov @ (design.T @ (weights * y))
    return DipFit(float(shoulder), float(depth), cov)


def pooled_accidentals(results: Sequence[SweepResult]) -> Estimate:
    """Mean accidental rate over a sweep.

    The blocked-arm rate does not depend on the delay, so averaging the
    independent per-delay estimates cuts its error by sqrt(len(results)).
    """
    accs = [r.accidentals for r in results]
    if any(a is None for a in accs):
        raise ValueError("sweep was run without accidental estimation")
    k = len(accs)
    return Estimate(sum(a.value for a in accs) / k,
                    math.sqrt(sum(a.se**2 for a in accs)) / k)


def corrected_rates(results: Sequence[SweepResult]) -> list[Estimate]:
    """Raw coincidence rates minus the pooled accidental rate.

    The pooled term is shared by every point, so the returned errors are
    correlated across delays; each error is still correct on its own.
    """
    acc = pooled_accidentals(results)
    return [r.coincidences - acc for r in results]


def ratio(num: Estimate, den: Estimate) -> Estimate:
    """num/den with first-order error propagation, inputs taken independent."""
    r = num.value / den.value
    rel = math.hypot(num.se / num.value if num.value else 0.0, den.se / den.value)
    se = abs(r) * rel if num.value else num.se / abs(den.value)
    return Estimate(r, se)


def weighted_slope(xs: Sequence[float], ys: Sequence[Estimate]) -> Estimate:
    """Slope of a weighted straight-line fit, for trend checks."""
    x = np.asarray(xs, dtype=float)
    y = np.array([e.value for e in ys])
    w = 1.0 / np.array([e.se**2 for e in ys])
    design = np.column_stack([np.ones_like(x), x])
    cov = np.linalg.inv(design.T @ (design * w[:, None]))
    coef = cov @ (design.T @ (w * y))
    return Estimate(float(coef[1]), math.sqrt(cov[1, 1]))


# -- exact ensemble averages ------------------------------------------------

_LEVELS = (16, 32, 64, 128, 256)


def _ensemble_average(fn, eta, n_plus, n_minus, gram, n_radial, n_phase):
    """E[fn(eta*W1, eta*W2)] by Gauss-Laguerre over |v+|^2, |v-|^2 and a
    uniform rule over the relative phase."""
    a, b, c = gram
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        s, w = roots_laguerre(n_radial)
    x = (n_plus * s)[:, None]
    y = (n_minus * s)[None, :]
    mean = 0.5 * eta * (a * x + b * y)
    amp = eta * abs(c) * np.sqrt(x * y)
    acc = np.zeros_like(mean)
    for phi in 2.0 * math.pi * np.arange(n_phase) / n_phase:
        cross = amp * math.cos(phi)
        acc += fn(mean + cross, mean - cross)
    return float(w @ (acc / n_phase) @ w)


def _coincidence_integrand(m1, m2):
    # expm1 keeps full relative precision at low flux
    return np.expm1(-np.maximum(m1, 0.0)) * np.expm1(-np.maximum(m2, 0.0))


def _singles_integrand(m1, m2):
    return -np.expm1(-np.maximum(m1, 0.0))


def _converged_average(fn, config, delta_t, blocked_arm, atol, rtol, grid):
    blocked_arm = BlockedArm(blocked_arm)
    n_plus = 0.0 if blocked_arm is BlockedArm.PLUS else config.n_mean
    n_minus = 0.0 if blocked_arm is BlockedArm.MINUS else config.n_mean
    if config.eta == 0 or (n_plus == 0 and n_minus == 0):
        return 0.0
    gram = energy_gram(config.envelope, delta_t, grid)
    prev = None
    for n_radial in _LEVELS:
        n_phase = min(max(n_radial, 16), 128)
        value = _ensemble_average(fn, config.eta, n_plus, n_minus, gram,
                                  n_radial, n_phase)
        if prev is not None:
            change = abs(value - prev)
            if change <= atol and change <= rtol * abs(value):
                return value
        prev = value
    raise ConvergenceError(
        f"ensemble quadrature did not converge at {_LEVELS[-1]} radial nodes "
        f"(last change {change:.3g}, atol {atol:g}); eta*N = "
        f"{config.eta * config.n_mean:g} is likely too large")


def exact_coincidence_probability(config: ExperimentConfig, delta_t: float | None = None,
                                  blocked_arm: BlockedArm = BlockedArm.NONE,
                                  atol: float = 1e-10, rtol: float = 1e-8,
                                  grid: TimeGrid | None = None) -> float:
    """E[(1 - exp(-eta W1)) (1 - exp(-eta W2))] over the speckle ensemble.

    Valid at any photon number; its low-flux limit is the closed-form
    coincidence rate.  Raises :class:`ConvergenceError` if node doubling
    cannot meet both ``atol`` and ``rtol``.
    """
    if delta_t is None:
        delta_t = config.delta_t
    return _converged_average(_coincidence_integrand, config, delta_t,
                              blocked_arm, atol, rtol, grid)


def exact_singles_probability(config: ExperimentConfig, delta_t: float | None = None,
                              blocked_arm: BlockedArm = BlockedArm.NONE,
                              atol: float = 1e-10, rtol: float = 1e-8,
                              grid: TimeGrid | None = None) -> float:
    """E[1 - exp(-eta W1)], the click probability at detector 1."""
    if delta_t is None:
        delta_t = config.delta_t
    return _converged_average(_singles_integrand, config, delta_t,
                              blocked_arm, atol, rtol, grid)


# -- moment checks ----------------------------------------------------------

@dataclass(frozen=True)
class MomentReport:
    n_mean: float
    n_samples: int
    estimates: dict
    targets: dict

    def z_scores(self) -> dict:
        out = {}
        for name, est in self.estimates.items():
            diff = abs(est.value - self.targets[name])
            out[name] = 0.0 if diff == 0 else (math.inf if est.se == 0 else diff / est.se)
        return out

    def within(self, n_se: float = 5.0) -> bool:
        return all(z <= n_se for z in self.z_scores().values())


def _mean_estimate(samples) -> Estimate:
    m = samples.mean()
    n = samples.size
    se = math.sqrt(float(np.sum(np.abs(samples - m) ** 2)) / ((n - 1) * n))
    value = complex(m) if np.iscomplexobj(samples) else float(m)
    return Estimate(value, se)


def moment_check(stream: np.random.Generator, n_mean: float,
                 n_samples: int) -> MomentReport:
    """Sample moments of the speckle amplitudes against circular-Gaussian values."""
    if n_samples < 1000:
        raise ValueError(f"n_samples must be at least 1000, got {n_samples}")
    v_plus, v_minus = _sample_amplitudes(stream, n_mean, n_samples)
    estimates = {}
    targets = {}
    for arm, v in (("plus", v_plus), ("minus", v_minus)):
        p = np.abs(v) ** 2
        estimates[f"mean_{arm}"] = _mean_estimate(v)
        estimates[f"square_{arm}"] = _mean_estimate(v**2)
        estimates[f"power_{arm}"] = _mean_estimate(p)
        estimates[f"power2_{arm}"] = _mean_estimate(p**2)
        targets.update({f"mean_{arm}": 0.0, f"square_{arm}": 0.0,
                        f"power_{arm}": n_mean, f"power2_{arm}": 2.0 * n_mean**2})
    estimates["cross"] = _mean_estimate(v_plus * np.conj(v_minus))
    targets["cross"] = 0.0
    return MomentReport(n_mean, n_samples, estimates, targets)
