"""Classical-field model and Monte Carlo of the pulsed pseudothermal
coincidence dip in a Mach-Zehnder interferometer."""

from .analytic import (NO_SIGNAL, DipPrediction, coincidence_rate,
                       corrected_coincidence_rate, dip_curve, overlap_magnitude_sq,
                       overlap_magnitude_sq_numeric, peak_ratio, singles_rate,
                       visibility)
from .montecarlo import (BlockedArm, DetectionEvent, Estimate, RunSpec, SweepResult,
                         estimate_accidentals, exact_coincidence_probability,
                         moment_check, run_sweep, sample_speckle, simulate_pulse)
from .optics import (ExperimentConfig, GridError, PulseEnvelope, SpeckleDraw,
                     TimeGrid, arm_fields, coherence_length, envelope_eval,
                     gated_energies, output_intensities)

__version__ = "0.1.0"

__all__ = [
    "NO_SIGNAL", "DipPrediction", "coincidence_rate", "corrected_coincidence_rate",
    "dip_curve", "overlap_magnitude_sq", "overlap_magnitude_sq_numeric", "peak_ratio",
    "singles_rate", "visibility",
    "BlockedArm", "DetectionEvent", "Estimate", "RunSpec", "SweepResult",
    "estimate_accidentals", "exact_coincidence_probability", "moment_check",
    "run_sweep", "sample_speckle", "simulate_pulse",
    "ExperimentConfig", "GridError", "PulseEnvelope", "SpeckleDraw", "TimeGrid",
    "arm_fields", "coherence_length", "envelope_eval", "gated_energies",
    "output_intensities",
]
