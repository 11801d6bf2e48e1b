"""Field-level model of one laser pulse passing through the interferometer.

Everything here is deterministic once a speckle draw is fixed.  Fields are
carried in baseband (the optical carrier cancels in every intensity) and in
sqrt(photons/s) units, so time integrals of intensities are photon numbers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_GRID_POINTS = 4096
# half-width of the integration window beyond the delayed pulse centres
SUPPORT_HALF_WIDTHS = 8.0
# coarsest spacing accepted by the quadrature routines, in units of tau_p
MAX_SPACING_FRACTION = 1.0 / 16.0


class GridError(ValueError):
    """Raised when a time grid cannot resolve or does not cover the pulse."""


class GateWarning(UserWarning):
    """The coincidence gate is not much longer than the pulse support."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Physical parameters of one simulated run (SI units throughout).

    Defaults follow the pulsed pseudothermal experiment: 345 fs pulses at
    780 nm, a 1 ns coincidence gate, eta = 0.1 and N = 0.0267.
    """

    tau_p: float = 345e-15
    delta_t: float = 0.0
    gate: float = 1e-9
    eta: float = 0.1
    n_mean: float = 0.0267
    wavelength: float = 780e-9
    source_distance: float = 0.2
    source_diameter: float = 4.5e-3

    def __post_init__(self):
        if not self.tau_p > 0:
            raise ValueError(f"tau_p must be positive, got {self.tau_p!r}")
        if not self.gate > 0:
            raise ValueError(f"gate must be positive, got {self.gate!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta!r}")
        if not self.n_mean >= 0:
            raise ValueError(f"n_mean must be nonnegative, got {self.n_mean!r}")
        if not math.isfinite(self.delta_t):
            raise ValueError(f"delta_t must be finite, got {self.delta_t!r}")
        check_gate(self.gate, self.tau_p, self.delta_t)

    @property
    def envelope(self) -> PulseEnvelope:
        return PulseEnvelope(self.tau_p)

    @property
    def carrier_frequency(self) -> float:
        """Angular carrier frequency 2*pi*c/lambda in rad/s."""
        return 2.0 * math.pi * 299_792_458.0 / self.wavelength

    @property
    def coherence_length(self) -> float:
        return coherence_length(self.wavelength, self.source_distance,
                                self.source_diameter)


def check_gate(gate: float, tau_p: float, delta_t: float) -> bool:
    """Warn when the gate is shorter than ten pulse supports.

    Returns True when the long-gate regime holds.
    """
    ok = gate >= 10.0 * (tau_p + abs(delta_t))
    if not ok:
        warnings.warn(
            f"gate {gate:g} s is not much longer than tau_p + |delta_t| = "
            f"{tau_p + abs(delta_t):g} s; closed-form rates assume it is",
            GateWarning, stacklevel=3)
    return ok


@dataclass(frozen=True)
class PulseEnvelope:
    """Transform-limited Gaussian envelope with unit energy."""

    tau_p: float

    def __post_init__(self):
        if not self.tau_p > 0:
            raise ValueError(f"tau_p must be positive, got {self.tau_p!r}")

    @property
    def peak(self) -> float:
        return (math.pi * self.tau_p**2 / 2.0) ** -0.25

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.peak * np.exp(-(t / self.tau_p) ** 2)


def envelope_eval(env: PulseEnvelope, t):
    """Evaluate ``exp(-t**2/tau_p**2) / (pi*tau_p**2/2)**(1/4)``."""
    return env(t)


@dataclass(frozen=True)
class SpeckleDraw:
    """Frozen speckle amplitudes collected by the two fibers for one pulse."""

    v_plus: complex
    v_minus: complex

    @property
    def phase_plus(self) -> float:
        return float(np.angle(self.v_plus)) % (2 * math.pi)

    @property
    def phase_minus(self) -> float:
        return float(np.angle(self.v_minus)) % (2 * math.pi)

    @property
    def phase_difference(self) -> float:
        """phi_minus - phi_plus wrapped to [0, 2*pi)."""
        return (self.phase_minus - self.phase_plus) % (2 * math.pi)

    def swapped(self) -> SpeckleDraw:
        return SpeckleDraw(self.v_minus, self.v_plus)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling of the integration window."""

    t_min: float
    t_max: float
    n_points: int = DEFAULT_GRID_POINTS
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_points < 2:
            raise GridError(f"need at least 2 grid points, got {self.n_points}")
        if not self.t_max > self.t_min:
            raise GridError(f"empty grid [{self.t_min}, {self.t_max}]")
        times = np.linspace(self.t_min, self.t_max, self.n_points)
        times.flags.writeable = False
        object.__setattr__(self, "times", times)

    @property
    def spacing(self) -> float:
        return (self.t_max - self.t_min) / (self.n_points - 1)

    @classmethod
    def for_pulse(cls, tau_p: float, delta_t: float,
                  n_points: int = DEFAULT_GRID_POINTS) -> TimeGrid:
        """Symmetric grid spanning +-(|delta_t|/2 + 8 tau_p).

        ``n_points`` is raised if needed so the spacing never exceeds
        ``tau_p/16``, which keeps very long delays usable.
        """
        half = abs(delta_t) / 2.0 + SUPPORT_HALF_WIDTHS * tau_p
        needed = math.ceil(2.0 * half / (MAX_SPACING_FRACTION * tau_p)) + 1
        return cls(-half, half, max(n_points, needed))

    def check(self, tau_p: float, delta_t: float) -> None:
        if self.spacing > MAX_SPACING_FRACTION * tau_p * (1 + 1e-12):
            raise GridError(
                f"grid spacing {self.spacing:g} s exceeds tau_p/16 = "
                f"{tau_p / 16:g} s; refine the grid")
        half = abs(delta_t) / 2.0 + SUPPORT_HALF_WIDTHS * tau_p
        slack = 1e-12 * half
        if self.t_min > -half + slack or self.t_max < half - slack:
            raise GridError(
                f"grid [{self.t_min:g}, {self.t_max:g}] s does not cover the "
                f"pulse support [{-half:g}, {half:g}] s")


def arm_fields(env: PulseEnvelope, draw: SpeckleDraw, delta_t: float, t):
    """Baseband fields entering the two fibers, ``v_pm * f(t +- delta_t/2)``."""
    t = np.asarray(t, dtype=float)
    e_plus = draw.v_plus * env(t + delta_t / 2.0)
    e_minus = draw.v_minus * env(t - delta_t / 2.0)
    return e_plus, e_minus


def output_intensities(env: PulseEnvelope, draw: SpeckleDraw, delta_t: float, t):
    """Photon-flux intensities at the two output ports of the second splitter."""
    e_plus, e_minus = arm_fields(env, draw, delta_t, t)
    e1 = (e_plus + e_minus) / math.sqrt(2.0)
    e2 = (e_plus - e_minus) / math.sqrt(2.0)
    return np.abs(e1) ** 2, np.abs(e2) ** 2


def fringe_intensities(env: PulseEnvelope, draw: SpeckleDraw, delta_t: float, t):
    """Same intensities written as mean terms plus opposite fringe terms.

    Returns ``(I1, I2, fringe)`` with ``I1 = mean + fringe`` and
    ``I2 = mean - fringe``.
    """
    t = np.asarray(t, dtype=float)
    f_plus = env(t + delta_t / 2.0)
    f_minus = env(t - delta_t / 2.0)
    mean = 0.5 * (abs(draw.v_plus) ** 2 * np.abs(f_plus) ** 2
                  + abs(draw.v_minus) ** 2 * np.abs(f_minus) ** 2)
    fringe = (abs(draw.v_plus) * abs(draw.v_minus)
              * np.real(np.conj(f_plus) * f_minus
                        * np.exp(1j * draw.phase_difference)))
    return mean + fringe, mean - fringe, fringe


def _resolve_grid(env, delta_t, grid):
    if grid is None:
        grid = TimeGrid.for_pulse(env.tau_p, delta_t)
    grid.check(env.tau_p, delta_t)
    return grid


def gated_energies(env: PulseEnvelope, draw: SpeckleDraw, delta_t: float,
                   gate: float | None = None, grid: TimeGrid | None = None):
    """Photon numbers reaching detectors 1 and 2 within one gate.

    The gate is taken to contain the whole pulse (one pulse per gate, gate
    much longer than the pulse), so only the pulse support is integrated.
    ``gate`` is accepted for the long-gate check only.
    """
    if gate is not None:
        check_gate(gate, env.tau_p, delta_t)
    grid = _resolve_grid(env, delta_t, grid)
    i1, i2 = output_intensities(env, draw, delta_t, grid.times)
    return (float(np.trapezoid(i1, grid.times)),
            float(np.trapezoid(i2, grid.times)))


def overlap_integral(env, delta_t: float, grid: TimeGrid | None = None) -> complex:
    """Trapezoid value of the integral of ``conj(f(t + dt/2)) * f(t - dt/2)``."""
    grid = _resolve_grid(env, delta_t, grid)
    t = grid.times
    integrand = np.conj(env(t + delta_t / 2.0)) * env(t - delta_t / 2.0)
    return complex(np.trapezoid(integrand, t))


def energy_gram(env, delta_t: float, grid: TimeGrid | None = None):
    """Quadratic-form coefficients ``(a, b, c)`` of the gated energies.

    For any draw, ``W1,2 = (a|v+|^2 + b|v-|^2 +- 2 Re(conj(v+) v- c)) / 2``
    with ``a``, ``b`` the gated arm energies of the envelope and ``c`` the
    overlap integral, all on the same grid as :func:`gated_energies`.
    """
    grid = _resolve_grid(env, delta_t, grid)
    t = grid.times
    f_plus = env(t + delta_t / 2.0)
    f_minus = env(t - delta_t / 2.0)
    a = float(np.trapezoid(np.abs(f_plus) ** 2, t))
    b = float(np.trapezoid(np.abs(f_minus) ** 2, t))
    c = complex(np.trapezoid(np.conj(f_plus) * f_minus, t))
    return a, b, c


def coherence_length(wavelength: float, source_distance: float,
                     source_diameter: float) -> float:
    """Transverse coherence length lambda*d/D of the diffused field."""
    for name, value in (("wavelength", wavelength),
                        ("source_distance", source_distance),
                        ("source_diameter", source_diameter)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value!r}")
    return wavelength * source_distance / source_diameter
