__all__ = [
    "TimingProfile", "absorb_bubbles", "compute_bound_profile", "comm_bound_profile", "delay_regime_profile", "random_profile",
    "PipelineCase", "classify", "ssgd_iter_time", "ssd_avg_iter_time", "delta_T_k", "speedup",
    "TraceEvent", "SimulationResult", "simulate_pipeline",
]

from .profile import TimingProfile, absorb_bubbles, compute_bound_profile, comm_bound_profile, delay_regime_profile, random_profile
from .analytic import PipelineCase, classify, ssgd_iter_time, ssd_avg_iter_time, delta_T_k, speedup
from .simulator import TraceEvent, SimulationResult, simulate_pipeline
