from __future__ import annotations

import logging
from typing import Optional, Union

from subtypes import Enum

from ..errors import ConfigError
from ..optim import Strategy
from .profile import TimingProfile
from .simulator import simulate_pipeline

logger = logging.getLogger(__name__)


class PipelineCase(Enum):
    """
    CASE1: one iteration's pushes fit inside its computation (send total < forward + backward + first-layer local update).
    CASE2: they do not.
    CASE3: computation hides the pull, so the average iteration time no longer depends on k.
    UNMODELLED: a simulated pipeline that neither closed form describes and that computation does not pace.
    """
    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"
    UNMODELLED = "unmodelled"


def _case1_bracket(profile: TimingProfile) -> float:
    return profile.comm_total + profile.backward[-1] - profile.forward - 2.0 * profile.backward_total - profile.local[0]


def _closed_form(profile: TimingProfile, k: int, case: PipelineCase) -> float:
    if case == PipelineCase.CASE1:
        return profile.compute_total + _case1_bracket(profile) / k
    if case == PipelineCase.CASE2:
        send = profile.send_total
        return send + (profile.comm_total + profile.backward[-1] - profile.backward_total - send) / k
    if case == PipelineCase.CASE3:
        return profile.compute_total

    raise ConfigError(f"{case.value} has no closed form", field="case")


def classify(profile: TimingProfile, k: Optional[int] = None, simulated: Optional[float] = None, tolerance: float = 0.01) -> PipelineCase:
    """
    Without k, the case follows from the profile alone: CASE2 when the send total reaches the computation time, otherwise CASE1,
    or CASE3 when the pull chain is shorter than the computation it overlaps.

    With k, the case is checked against the simulated ssd-sgd average (simulated here unless given). The profile's own case stands when
    its closed form lies within the relative tolerance. Failing that, CASE3 is reported when the simulated average is the computation
    time, and UNMODELLED otherwise.
    """
    if profile.send_total >= profile.compute_total:
        case = PipelineCase.CASE2
    else:
        case = PipelineCase.CASE1 if _case1_bracket(profile) > 0.0 else PipelineCase.CASE3

    if k is None:
        return case

    _check_k(k)
    if simulated is None:
        simulated = simulate_pipeline(profile, Strategy.SSD_SGD, k=k, n_iters=max(12 * k, 48)).average

    def agrees(value: float) -> bool:
        return abs(value - simulated) <= tolerance * simulated

    if agrees(_closed_form(profile, k, case)):
        return case
    if agrees(profile.compute_total):
        return PipelineCase.CASE3

    logger.debug("No closed form within %.2g of the simulated %.6g at k=%d (profile reads as %s).", tolerance, simulated, k, case.value)
    return PipelineCase.UNMODELLED


def ssgd_iter_time(profile: TimingProfile) -> float:
    """Synchronous iteration time: compute-bound when the backward passes of layers before the last outlast the communication of layers after the first."""
    if profile.backward[:-1].sum() > profile.comm[1:].sum():
        return profile.forward + profile.backward_total + float(profile.comm[0])
    return profile.forward + profile.comm_total + float(profile.backward[-1])


def ssd_avg_iter_time(profile: TimingProfile, k: int, case: Optional[Union[PipelineCase, str]] = None) -> tuple[float, PipelineCase]:
    """Average iteration time over k delay-stage iterations (one pull), with the case it was computed under."""
    _check_k(k)
    case = classify(profile) if case is None else PipelineCase(case)
    return float(_closed_form(profile, k, case)), case


def delta_T_k(profile: TimingProfile, k: int, case: Union[PipelineCase, str]) -> float:
    """
    Time saved over k iterations relative to synchronous training, with the send total taken as half the communication total.
    Matches k * (ssgd - ssd) when the synchronous iteration is communication-bound.
    """
    _check_k(k)
    case = PipelineCase(case)
    forward, backward, comm, last = profile.forward, profile.backward_total, profile.comm_total, float(profile.backward[-1])

    if case == PipelineCase.CASE1:
        return (k - 1) * (comm - backward + last - float(profile.local[0])) + (forward + backward)
    if case == PipelineCase.CASE2:
        return k * forward + (k - 1) / 2 * comm + (k - 1) * last + backward

    raise ConfigError(f"time savings are only defined for {PipelineCase.CASE1.value} and {PipelineCase.CASE2.value}", field="case")


def speedup(profile: TimingProfile, k: int) -> float:
    value, _ = ssd_avg_iter_time(profile, k)
    return ssgd_iter_time(profile) / value if value else 1.0


def _check_k(k: int) -> None:
    if k < 1:
        raise ConfigError(f"must be at least 1, got {k}", field="k")
