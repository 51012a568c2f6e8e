"""Constructive schedule builders.

Two strategies: a block-policy constructor that honours the upstream
room/surgeon assignment and drains non-electives into reserved rooms,
and an open-policy constructor that places each patient on the
room/surgeon combination with the earliest possible start.  Both are
append-only: every placement goes after the last occupied point of its
room and surgeon timelines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .domain import (
    EPS,
    Instance,
    Patient,
    Schedule,
    UnplaceablePatientsError,
    append_lower_bound,
    placement_for,
)


@dataclass
class SchedulingState:
    """A schedule plus per-resource occupancy cursors.

    Cursors track the occupancy end (end + cleanup) of the last placement
    on each room and surgeon timeline; they are always recomputable from
    the schedule (see verify()).
    """

    schedule: Schedule
    room_free: dict[int, float] = field(default_factory=dict)
    surgeon_free: dict[int, float] = field(default_factory=dict)
    now: float = 0.0

    @classmethod
    def from_schedule(cls, schedule: Schedule, now: float) -> "SchedulingState":
        state = cls(schedule=schedule, now=now)
        for pl in schedule.placements.values():
            t = pl.occupied_until
            if state.room_free.get(pl.room, float("-inf")) < t:
                state.room_free[pl.room] = t
            if state.surgeon_free.get(pl.surgeon, float("-inf")) < t:
                state.surgeon_free[pl.surgeon] = t
        return state

    def earliest_start(self, patient: Patient, room_id: int, surgeon_id: int,
                       instance: Instance) -> float:
        return append_lower_bound(
            patient,
            self.room_free.get(room_id),
            self.surgeon_free.get(surgeon_id),
            instance.room(room_id).release,
            instance.surgeon(surgeon_id).release,
            instance.horizon,
            self.now,
        )

    def place(self, patient: Patient, room_id: int, surgeon_id: int,
              start: float) -> None:
        pl = placement_for(patient, room_id, surgeon_id, start)
        self.schedule.place(pl)
        t = pl.occupied_until
        if self.room_free.get(room_id, float("-inf")) < t:
            self.room_free[room_id] = t
        if self.surgeon_free.get(surgeon_id, float("-inf")) < t:
            self.surgeon_free[surgeon_id] = t

    def verify(self) -> None:
        rebuilt = SchedulingState.from_schedule(self.schedule, self.now)
        assert rebuilt.room_free == {k: v for k, v in self.room_free.items()
                                     if k in rebuilt.room_free}, "room cursors drifted"
        assert rebuilt.surgeon_free == {k: v for k, v in self.surgeon_free.items()
                                        if k in rebuilt.surgeon_free}, "surgeon cursors drifted"


class ComboChoice(NamedTuple):
    start: float
    room: int
    surgeon: int


def best_combo(patient: Patient, state: SchedulingState, instance: Instance,
               rooms: Optional[Iterable[int]] = None) -> Optional[ComboChoice]:
    """Earliest-start (eligible surgeon x suitable working room) pair.

    Ties break on lowest room id, then lowest surgeon id.  Returns None
    when no pair exists at all.
    """
    if rooms is None:
        candidate_rooms = instance.suitable_rooms(patient)
    else:
        wanted = set(rooms)
        candidate_rooms = [r for r in instance.suitable_rooms(patient) if r.id in wanted]
    best: Optional[ComboChoice] = None
    for room in sorted(candidate_rooms, key=lambda r: r.id):
        for hid in sorted(patient.eligible_surgeons):
            if hid not in instance._surgeon_by_id:
                continue
            z = state.earliest_start(patient, room.id, hid, instance)
            if best is None or z < best.start - EPS:
                best = ComboChoice(z, room.id, hid)
    return best


def _due_order(patients: list[Patient]) -> list[Patient]:
    return sorted(patients, key=lambda p: (p.due_date, p.id))


def block_schedule(instance: Instance, nonelective_queue: Iterable[Patient],
                   now: float) -> Schedule:
    """Initial daily schedule under the block policy.

    Room by room (ascending id), the pre-assigned electives are appended
    in ascending due-date order with their assigned surgeon.  Electives
    stranded by broken rooms are treated as urgent and re-placed on the
    earliest suitable combination.  Non-electives then drain into the
    reserved rooms per specialty, longest waiting first; any remainder
    goes wherever its preoperative wait is smallest.
    """
    state = SchedulingState(schedule=Schedule(), now=now)
    unplaceable: list[int] = []

    assigned: dict[int, list[tuple[Patient, int]]] = {}
    for pid, (rid, hid) in instance.mss_assignment.items():
        if instance.has_patient(pid):
            assigned.setdefault(rid, []).append((instance.patient(pid), hid))

    working_ids = {r.id for r in instance.working_rooms()}
    for room in sorted(instance.rooms, key=lambda r: r.id):
        if room.id not in working_ids or room.id not in assigned:
            continue
        batch = sorted(assigned[room.id], key=lambda ph: (ph[0].due_date, ph[0].id))
        for patient, hid in batch:
            z = state.earliest_start(patient, room.id, hid, instance)
            state.place(patient, room.id, hid, z)

    # Electives stranded in broken rooms become urgent: free room choice.
    for room in sorted(instance.rooms, key=lambda r: r.id):
        if room.id in working_ids or room.id not in assigned:
            continue
        for patient, _ in sorted(assigned[room.id], key=lambda ph: (ph[0].due_date, ph[0].id)):
            combo = best_combo(patient, state, instance)
            if combo is None:
                unplaceable.append(patient.id)
                continue
            state.place(patient, combo.room, combo.surgeon, combo.start)

    # Non-elective drain: reserved rooms per specialty, round-robin,
    # longest waiting (earliest arrival) first.
    queue = sorted(nonelective_queue, key=lambda p: (p.arrival, p.id))
    for spec in sorted({p.specialty for p in queue}):
        reserved = [
            r for r in instance.working_rooms()
            if r.reserved_for is not None and spec in r.reserved_for
            and spec in r.specialties
        ]
        if not reserved:
            continue
        reserved.sort(key=lambda r: r.id)
        while any(p.specialty == spec for p in queue):
            placed_any = False
            for room in reserved:
                patient = next((p for p in queue if p.specialty == spec), None)
                if patient is None:
                    break
                choice = None
                for hid in sorted(patient.eligible_surgeons):
                    if hid not in instance._surgeon_by_id:
                        continue
                    z = state.earliest_start(patient, room.id, hid, instance)
                    if choice is None or z < choice[0] - EPS:
                        choice = (z, hid)
                if choice is None:
                    unplaceable.append(patient.id)
                    queue.remove(patient)
                    continue
                state.place(patient, room.id, choice[1], choice[0])
                queue.remove(patient)
                placed_any = True
            if not placed_any:
                break

    # Remaining non-electives: minimise preoperative wait (earliest start).
    for patient in list(queue):
        combo = best_combo(patient, state, instance)
        if combo is None:
            unplaceable.append(patient.id)
            continue
        state.place(patient, combo.room, combo.surgeon, combo.start)

    if unplaceable:
        raise UnplaceablePatientsError(unplaceable)
    return state.schedule


def open_schedule(patients: Iterable[Patient], state: SchedulingState,
                  instance: Instance) -> Schedule:
    """Greedy open-policy placement in the given patient order.

    Each patient lands on the surgeon/room combination with the earliest
    possible start over all eligible pairs.
    """
    unplaceable = []
    for patient in patients:
        combo = best_combo(patient, state, instance)
        if combo is None:
            unplaceable.append(patient.id)
            continue
        state.place(patient, combo.room, combo.surgeon, combo.start)
    if unplaceable:
        raise UnplaceablePatientsError(unplaceable)
    return state.schedule


class AddOnChoice(NamedTuple):
    patient: Patient
    start: float
    room: int
    surgeon: int


def select_add_elective(waiting: Iterable[Patient], state: SchedulingState,
                        instance: Instance, now: float,
                        rooms: Optional[Iterable[int]] = None) -> Optional[AddOnChoice]:
    """Pick a waiting-list elective that fits without expected overtime.

    Candidates are ranked by earliest due date, then longest wait, then
    id; the first one admitting a start at least `notice` hours out whose
    expected end stays within opening hours wins.  Returns None when no
    candidate fits.
    """
    lam = instance.horizon.open_hours
    ranked = sorted(waiting, key=lambda p: (p.due_date, -p.days_waiting, p.id))
    for patient in ranked:
        if now + patient.notice + patient.duration > lam + EPS:
            continue
        if rooms is None:
            candidate_rooms = instance.suitable_rooms(patient)
        else:
            wanted = set(rooms)
            candidate_rooms = [r for r in instance.suitable_rooms(patient)
                               if r.id in wanted]
        best = None
        for room in sorted(candidate_rooms, key=lambda r: r.id):
            for hid in sorted(patient.eligible_surgeons):
                if hid not in instance._surgeon_by_id:
                    continue
                z = state.earliest_start(patient, room.id, hid, instance)
                z = max(z, now + patient.notice)
                if z + patient.duration > lam + EPS:
                    continue
                if best is None or z < best[0] - EPS:
                    best = (z, room.id, hid)
        if best is not None:
            return AddOnChoice(patient, best[0], best[1], best[2])
    return None
