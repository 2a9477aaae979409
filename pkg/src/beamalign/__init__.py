"""Active beam alignment for mmWave initial access.

Hierarchical posterior-matching beam search over a dyadic beamforming
codebook, the bisection and random-scan baselines, the 1-bit and
full-observation measurement channels, the information-theoretic bound
machinery, and a deterministic Monte Carlo sweep harness.
"""

from ._kernels import available_backends, backend_name, set_backend
from .array_channel import (AngleGrid, ArrayGeometry, ChannelState,
                            beam_gain, measure, onebit_quantize,
                            optimal_threshold, steering)
from .codebook import (HierCodebook, RandomScanBook, build_ideal,
                       build_practical, children, sample_random_beam)
from .policies import (PolicySpec, ResolutionRule, SessionTrace, StoppingRule,
                       bisection_baseline, final_beam, hiepm_select,
                       random_scan_baseline, run_hiepm_session, run_session)
from .posterior import (avg_loglik, ejs, init_uniform, js, mass, nest,
                        update_full, update_onebit)
from .sim import ExperimentConfig, MetricRow, derive_stream, run_sweep

__version__ = "0.1.0"

__all__ = [
    "AngleGrid", "ArrayGeometry", "ChannelState", "ExperimentConfig",
    "HierCodebook", "MetricRow", "PolicySpec", "RandomScanBook",
    "ResolutionRule", "SessionTrace", "StoppingRule",
    "available_backends", "avg_loglik", "backend_name", "beam_gain",
    "bisection_baseline", "build_ideal", "build_practical", "children",
    "derive_stream", "ejs", "final_beam", "hiepm_select", "init_uniform",
    "js", "mass", "measure", "nest", "onebit_quantize", "optimal_threshold",
    "random_scan_baseline", "run_hiepm_session", "run_session", "run_sweep",
    "sample_random_beam", "set_backend", "steering", "update_full",
    "update_onebit",
]
