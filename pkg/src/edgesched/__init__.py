"""Scheduling stream processing at the cloud edge by estimated size reduction."""

from .core import Document, DocumentState, IllegalTransition, LifecycleEvent, normalized_reduction, transition
from .estimator import RatioSpline
from .kernels import BACKEND
from .simulator import RunMetrics, SimConfig, run, run_many
from .workload import ProfileSpec, Workload, generate, load_manifest

__version__ = "0.1.0"
