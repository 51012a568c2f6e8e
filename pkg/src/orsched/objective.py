"""Schedule quality measures.

Utilisation counts room-occupied time (setup + surgery + cleanup) clipped
to the standard opening window [0, open_hours].  Overtime is the occupied
time falling outside that window, evaluated through its own min/max
expression so the two measures can be cross-checked independently.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import HorizonParams, Instance, Placement, PatientClass, Schedule


@dataclass(frozen=True, slots=True)
class MetricsSnapshot:
    utilisation: float
    overtime: float
    mean_nonelective_wait: float
    patients_treated: int

    def as_row(self) -> dict:
        return {
            "utilisation": self.utilisation,
            "overtime": self.overtime,
            "ne_time_to_surgery": self.mean_nonelective_wait,
            "patients_treated": self.patients_treated,
        }


def contribution(placement: Placement, horizon: HorizonParams) -> float:
    """In-hours occupied time of one placement.

    min(L, max(end + cleanup, 0)) - max(0, min(start - setup, L))
    with L the opening window length; always within [0, L].
    """
    lam = horizon.open_hours
    head = min(lam, max(placement.end + placement.cleanup, 0.0))
    tail = max(0.0, min(placement.start - placement.setup, lam))
    return head - tail


def utilisation(schedule: Schedule, instance: Instance) -> float:
    """Total in-hours occupied time over included patients."""
    hz = instance.horizon
    return sum(contribution(pl, hz) for pl in schedule.placements.values())


def overtime(schedule: Schedule, instance: Instance) -> float:
    """Total occupied time outside the opening window.

    Evaluated per placement as occupied - clipped, with the clipping
    expression written out explicitly rather than reusing contribution().
    """
    lam = instance.horizon.open_hours
    total = 0.0
    for pl in schedule.placements.values():
        occupied = (pl.end - pl.start) + pl.setup + pl.cleanup
        head = min(lam, max(pl.end + pl.cleanup, 0.0))
        tail = max(0.0, min(pl.start - pl.setup, lam))
        total += occupied - head + tail
    return total


def mean_nonelective_wait(schedule: Schedule, instance: Instance) -> float:
    """Average (start - arrival) over included non-electives; 0 if none."""
    waits = []
    for pid, pl in schedule.placements.items():
        p = instance.patient(pid)
        if p.kind is PatientClass.NON_ELECTIVE:
            waits.append(pl.start - p.arrival)
    if not waits:
        return 0.0
    return sum(waits) / len(waits)


def patients_treated(schedule: Schedule) -> int:
    return len(schedule.placements)


def snapshot(schedule: Schedule, instance: Instance) -> MetricsSnapshot:
    return MetricsSnapshot(
        utilisation=utilisation(schedule, instance),
        overtime=overtime(schedule, instance),
        mean_nonelective_wait=mean_nonelective_wait(schedule, instance),
        patients_treated=patients_treated(schedule),
    )
