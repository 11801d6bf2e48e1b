"""Closed-form singles and coincidence rates in the low-flux, long-gate regime.

Rates are per gate (one pulse per gate).  ``eta`` is the detector quantum
efficiency and ``n_mean`` the mean photon number per fiber per pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .optics import ExperimentConfig, TimeGrid, overlap_integral


class _NoSignal:
    """Sentinel for a visibility with zero denominator."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NO_SIGNAL"

    def __bool__(self):
        return False


NO_SIGNAL = _NoSignal()


@dataclass(frozen=True)
class DipPrediction:
    delta_t: float
    coincidence_rate: float
    corrected_rate: float
    singles_rate: float
    overlap_sq: float


def singles_rate(eta: float, n_mean: float) -> float:
    """Mean clicks per gate at either detector, eta*N, for any delay."""
    return eta * n_mean


def overlap_magnitude_sq(delta_t: float, tau_p: float) -> float:
    """|overlap|^2 of two Gaussian envelopes shifted by delta_t: exp(-dt^2/tau_p^2)."""
    if not tau_p > 0:
        raise ValueError(f"tau_p must be positive, got {tau_p!r}")
    return math.exp(-(delta_t / tau_p) ** 2)


def overlap_magnitude_sq_numeric(env, delta_t: float,
                                 grid: TimeGrid | None = None) -> float:
    """Quadrature value of |integral conj(f(t + dt/2)) f(t - dt/2) dt|^2.

    ``env`` may be any envelope callable with a ``tau_p`` attribute, which
    sets the resolution requirement on the grid.
    """
    return abs(overlap_integral(env, delta_t, grid)) ** 2


def coincidence_rate(eta: float, n_mean: float, delta_t: float,
                     tau_p: float) -> float:
    """Raw coincidences per gate, (eta N)^2 (3 - overlap^2) / 2."""
    scale = (eta * n_mean) ** 2 / 2.0
    return scale * (3.0 - overlap_magnitude_sq(delta_t, tau_p))


def accidental_rate(eta: float, n_mean: float) -> float:
    """Coincidences per gate with one arm blocked, (eta N)^2 / 2."""
    return (eta * n_mean) ** 2 / 2.0


def corrected_coincidence_rate(eta: float, n_mean: float, delta_t: float,
                               tau_p: float) -> float:
    """Coincidences with both blocked-arm accidental rates removed."""
    scale = (eta * n_mean) ** 2 / 2.0
    return scale * (1.0 - overlap_magnitude_sq(delta_t, tau_p))


def visibility(c_max: float, c_min: float):
    """(c_max - c_min) / (c_max + c_min), or ``NO_SIGNAL`` when both are zero."""
    if c_max < 0 or c_min < 0:
        raise ValueError("rates must be nonnegative")
    if c_max < c_min:
        raise ValueError(f"c_max={c_max!r} is below c_min={c_min!r}")
    total = c_max + c_min
    if total == 0:
        return NO_SIGNAL
    return (c_max - c_min) / total


def peak_ratio(eta: float, n_mean: float) -> float:
    """Shoulder coincidence rate over the singles rate, 3 eta N / 2."""
    return 1.5 * eta * n_mean


def dip_curve(config: ExperimentConfig,
              delta_t_list: Iterable[float]) -> list[DipPrediction]:
    delta_ts = [float(d) for d in delta_t_list]
    if not delta_ts:
        raise ValueError("delta_t_list is empty")
    eta, n, tau_p = config.eta, config.n_mean, config.tau_p
    singles = singles_rate(eta, n)
    out = []
    for dt in delta_ts:
        out.append(DipPrediction(
            delta_t=dt,
            coincidence_rate=coincidence_rate(eta, n, dt, tau_p),
            corrected_rate=corrected_coincidence_rate(eta, n, dt, tau_p),
            singles_rate=singles,
            overlap_sq=overlap_magnitude_sq(dt, tau_p),
        ))
    return out
