"""Core data model for daily surgical case sequencing.

Time is measured in real-valued hours since 08:00 of the scheduling day.
Values may be negative (pre-opening urgent starts) and may exceed 24
(overnight spill-over).  A schedule is a set of placements, one per
included patient, that assigns a room, a surgeon, and expected start/end
times.  The feasibility checker validates the full constraint catalogue
(see CONSTRAINT_NAMES); constraint ids match the exported linear model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

EPS = 1e-9

SCHEMA_VERSION = "scsp-1"


class PatientClass(Enum):
    SCHEDULED_ELECTIVE = "scheduled_elective"
    UNSCHEDULED_ELECTIVE = "unscheduled_elective"
    NON_ELECTIVE = "non_elective"


# Constraint catalogue.  Ids double as names in the exported linear model
# (c17_*, c26_*, ...) and as tags in feasibility reports.
CONSTRAINT_NAMES = {
    17: "one room per included patient",
    18: "no placements in non-working rooms",
    19: "start not before room release",
    20: "start not before surgeon release",
    23: "no surgeon double-booking",
    24: "no room double-booking",
    25: "end equals start plus duration",
    26: "surgeon changeover gap (cleanup + setup)",
    27: "room changeover gap (cleanup + setup)",
    28: "room equipped for patient specialty",
    29: "surgeon eligible for patient",
    30: "one surgeon per included patient",
    31: "elective start not before day start",
    32: "scheduled electives and non-electives included",
    33: "short-notice lead time for add-on electives",
    34: "non-elective start not before arrival",
    35: "add-on electives finish within opening hours",
}


class StructuralError(ValueError):
    """Schedule references entities that do not exist in the instance."""


class UnplaceablePatientsError(RuntimeError):
    """No (suitable room x eligible surgeon) pair exists for these patients."""

    def __init__(self, patient_ids: list[int]):
        self.patient_ids = list(patient_ids)
        super().__init__(f"unplaceable patients: {self.patient_ids}")


@dataclass(frozen=True, slots=True)
class HorizonParams:
    """Scalar timing parameters for one scheduling day."""

    start: float = 0.0        # earliest elective start, hours since 08:00
    open_hours: float = 10.0  # standard opening window is [0, open_hours]
    day_hours: float = 24.0
    big_m: float = 24.0

    def __post_init__(self):
        if not (0 < self.open_hours <= self.day_hours):
            raise ValueError("require 0 < open_hours <= day_hours")
        if self.big_m < self.day_hours:
            raise ValueError("big_m must be at least day_hours")


@dataclass(frozen=True, slots=True)
class Patient:
    id: int
    kind: PatientClass
    specialty: int
    duration: float           # expected surgical duration, hours
    setup: float = 0.25
    cleanup: float = 0.25
    eligible_surgeons: frozenset[int] = frozenset()
    notice: Optional[float] = None    # required lead time, add-on electives only
    arrival: Optional[float] = None   # hours since 08:00, non-electives only
    urgency: int = 3                  # urgency category 1|2|3
    days_waiting: int = 0
    due_date: int = 0                 # days from today; may be negative (overdue)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"patient {self.id}: duration must be positive")
        if self.setup < 0 or self.cleanup < 0:
            raise ValueError(f"patient {self.id}: negative setup/cleanup")
        if not self.eligible_surgeons:
            raise ValueError(f"patient {self.id}: no eligible surgeons")
        if self.kind is PatientClass.UNSCHEDULED_ELECTIVE and self.notice is None:
            raise ValueError(f"patient {self.id}: add-on elective requires notice")
        if self.kind is PatientClass.NON_ELECTIVE and self.arrival is None:
            raise ValueError(f"patient {self.id}: non-elective requires arrival")

    @property
    def footprint(self) -> float:
        """Total room occupancy: setup + surgery + cleanup."""
        return self.setup + self.duration + self.cleanup


@dataclass(frozen=True, slots=True)
class Surgeon:
    id: int
    release: float = 0.0  # expected time the surgeon becomes available


@dataclass(frozen=True, slots=True)
class OperatingRoom:
    id: int
    working: bool = True
    release: float = 0.0
    specialties: frozenset[int] = frozenset()   # equipped specialties
    reserved_for: Optional[frozenset[int]] = None  # non-elective reservation

    def __post_init__(self):
        if self.working and not self.specialties:
            raise ValueError(f"room {self.id}: working room with no specialties")


class Instance:
    """One scheduling day: rooms, surgeons, patients, and the upstream
    room/surgeon assignment for scheduled electives."""

    def __init__(
        self,
        horizon: HorizonParams,
        rooms: list[OperatingRoom],
        surgeons: list[Surgeon],
        n_specialties: int,
        patients: Iterable[Patient] = (),
        mss_assignment: Optional[dict[int, tuple[int, int]]] = None,
    ):
        self.horizon = horizon
        self.rooms = list(rooms)
        self.surgeons = list(surgeons)
        self.n_specialties = n_specialties
        self.patients: list[Patient] = []
        self.mss_assignment: dict[int, tuple[int, int]] = dict(mss_assignment or {})
        self._room_by_id = {r.id: r for r in self.rooms}
        self._surgeon_by_id = {s.id: s for s in self.surgeons}
        self._patient_by_id: dict[int, Patient] = {}
        for p in patients:
            self.add_patient(p)

    def add_patient(self, patient: Patient) -> None:
        if patient.id in self._patient_by_id:
            raise ValueError(f"duplicate patient id {patient.id}")
        self.patients.append(patient)
        self._patient_by_id[patient.id] = patient

    def room(self, room_id: int) -> OperatingRoom:
        return self._room_by_id[room_id]

    def surgeon(self, surgeon_id: int) -> Surgeon:
        return self._surgeon_by_id[surgeon_id]

    def patient(self, patient_id: int) -> Patient:
        return self._patient_by_id[patient_id]

    def has_patient(self, patient_id: int) -> bool:
        return patient_id in self._patient_by_id

    def working_rooms(self) -> list[OperatingRoom]:
        return [r for r in self.rooms if r.working]

    def suitable_rooms(self, patient: Patient) -> list[OperatingRoom]:
        return [
            r for r in self.rooms
            if r.working and patient.specialty in r.specialties
        ]

    def validate(self) -> list[str]:
        """Structural integrity of the instance itself (not a schedule)."""
        issues = []
        if len({r.id for r in self.rooms}) != len(self.rooms):
            issues.append("duplicate room ids")
        if len({s.id for s in self.surgeons}) != len(self.surgeons):
            issues.append("duplicate surgeon ids")
        for p in self.patients:
            if not (0 <= p.specialty < self.n_specialties):
                issues.append(f"patient {p.id}: specialty out of range")
            for h in p.eligible_surgeons:
                if h not in self._surgeon_by_id:
                    issues.append(f"patient {p.id}: unknown surgeon {h}")
        for pid, (rid, hid) in self.mss_assignment.items():
            if pid not in self._patient_by_id:
                issues.append(f"assignment for unknown patient {pid}")
                continue
            p = self._patient_by_id[pid]
            if p.kind is not PatientClass.SCHEDULED_ELECTIVE:
                issues.append(f"assignment for non-scheduled patient {pid}")
            room = self._room_by_id.get(rid)
            if room is None or not room.working:
                issues.append(f"patient {pid} assigned to missing/closed room {rid}")
            elif p.specialty not in room.specialties:
                issues.append(f"patient {pid} assigned to unequipped room {rid}")
            if hid not in p.eligible_surgeons:
                issues.append(f"patient {pid} assigned ineligible surgeon {hid}")
        return issues

    # ---- serialization ----

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "horizon": {
                "start": self.horizon.start,
                "open_hours": self.horizon.open_hours,
                "day_hours": self.horizon.day_hours,
                "big_m": self.horizon.big_m,
            },
            "rooms": [
                {
                    "id": r.id,
                    "working": r.working,
                    "release": r.release,
                    "specialties": sorted(r.specialties),
                    "reserved_for": sorted(r.reserved_for) if r.reserved_for is not None else None,
                }
                for r in self.rooms
            ],
            "surgeons": [{"id": s.id, "release": s.release} for s in self.surgeons],
            "n_specialties": self.n_specialties,
            "patients": [patient_to_dict(p) for p in self.patients],
            "mss_assignment": {str(pid): list(rs) for pid, rs in sorted(self.mss_assignment.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        if data.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema: {data.get('schema')!r}")
        hz = data["horizon"]
        horizon = HorizonParams(hz["start"], hz["open_hours"], hz["day_hours"], hz["big_m"])
        rooms = [
            OperatingRoom(
                id=r["id"],
                working=r["working"],
                release=r["release"],
                specialties=frozenset(r["specialties"]),
                reserved_for=frozenset(r["reserved_for"]) if r.get("reserved_for") is not None else None,
            )
            for r in data["rooms"]
        ]
        surgeons = [Surgeon(s["id"], s["release"]) for s in data["surgeons"]]
        patients = [patient_from_dict(p) for p in data["patients"]]
        mss = {int(pid): (rs[0], rs[1]) for pid, rs in data.get("mss_assignment", {}).items()}
        return cls(horizon, rooms, surgeons, data["n_specialties"], patients, mss)


def patient_to_dict(p: Patient) -> dict:
    return {
        "id": p.id,
        "class": p.kind.value,
        "specialty": p.specialty,
        "duration": p.duration,
        "setup": p.setup,
        "cleanup": p.cleanup,
        "eligible_surgeons": sorted(p.eligible_surgeons),
        "notice": p.notice,
        "arrival": p.arrival,
        "urgency": p.urgency,
        "days_waiting": p.days_waiting,
        "due_date": p.due_date,
    }


def patient_from_dict(d: dict) -> Patient:
    return Patient(
        id=d["id"],
        kind=PatientClass(d["class"]),
        specialty=d["specialty"],
        duration=d["duration"],
        setup=d["setup"],
        cleanup=d["cleanup"],
        eligible_surgeons=frozenset(d["eligible_surgeons"]),
        notice=d.get("notice"),
        arrival=d.get("arrival"),
        urgency=d.get("urgency", 3),
        days_waiting=d.get("days_waiting", 0),
        due_date=d.get("due_date", 0),
    )


@dataclass(frozen=True, slots=True)
class Placement:
    """One patient's slot: room, surgeon, and expected start/end times.

    Setup and cleanup are copied from the patient so that occupancy math
    never needs an instance lookup.
    """

    patient: int
    room: int
    surgeon: int
    start: float
    end: float
    setup: float = 0.25
    cleanup: float = 0.25

    @property
    def occupied_from(self) -> float:
        return self.start - self.setup

    @property
    def occupied_until(self) -> float:
        return self.end + self.cleanup


def overlaps(a: Placement, b: Placement) -> bool:
    """Strict interval intersection of two surgeries.

    True iff a starts before b ends AND b starts before a ends; touching
    endpoints do not overlap.
    """
    if a.patient == b.patient:
        raise ValueError("overlap test requires distinct patients")
    return a.start < b.end and b.start < a.end


class Schedule:
    """The single mutable artifact: placements plus realization state.

    ``anaesthetised_before`` marks the instant at which a patient's
    pre-emption became forbidden (anaesthesia administered); placements
    of such patients must never be modified by repairs.
    ``realized_duration`` records actual durations once surgeries finish,
    at which point the placement's end reflects reality rather than the
    expected duration.
    """

    def __init__(self):
        self.placements: dict[int, Placement] = {}
        self.anaesthetised_before: dict[int, float] = {}
        self.realized_duration: dict[int, float] = {}

    def copy(self) -> "Schedule":
        out = Schedule()
        out.placements = dict(self.placements)
        out.anaesthetised_before = dict(self.anaesthetised_before)
        out.realized_duration = dict(self.realized_duration)
        return out

    def __len__(self) -> int:
        return len(self.placements)

    def included(self, patient_id: int) -> bool:
        return patient_id in self.placements

    def place(self, placement: Placement) -> None:
        self.placements[placement.patient] = placement

    def remove(self, patient_id: int) -> None:
        self.placements.pop(patient_id, None)

    def started(self, patient_id: int, now: float) -> bool:
        t = self.anaesthetised_before.get(patient_id)
        return t is not None and t <= now + EPS

    def mark_started(self, patient_id: int, at: float) -> None:
        self.anaesthetised_before[patient_id] = at

    def room_placements(self, room_id: int) -> list[Placement]:
        out = [pl for pl in self.placements.values() if pl.room == room_id]
        out.sort(key=lambda pl: (pl.start, pl.patient))
        return out

    def surgeon_placements(self, surgeon_id: int) -> list[Placement]:
        out = [pl for pl in self.placements.values() if pl.surgeon == surgeon_id]
        out.sort(key=lambda pl: (pl.start, pl.patient))
        return out

    def room_free_from(self, room_id: int) -> Optional[float]:
        """Occupancy end of the room (last cleanup end), or None if empty."""
        best = None
        for pl in self.placements.values():
            if pl.room == room_id:
                t = pl.occupied_until
                if best is None or t > best:
                    best = t
        return best

    def surgeon_free_from(self, surgeon_id: int) -> Optional[float]:
        best = None
        for pl in self.placements.values():
            if pl.surgeon == surgeon_id:
                t = pl.occupied_until
                if best is None or t > best:
                    best = t
        return best

    # ---- serialization ----

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "placements": [
                {
                    "patient": pl.patient,
                    "room": pl.room,
                    "surgeon": pl.surgeon,
                    "start": pl.start,
                    "end": pl.end,
                    "setup": pl.setup,
                    "cleanup": pl.cleanup,
                }
                for _, pl in sorted(self.placements.items())
            ],
            "anaesthetised_before": {str(k): v for k, v in sorted(self.anaesthetised_before.items())},
            "realized_duration": {str(k): v for k, v in sorted(self.realized_duration.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schedule":
        if data.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema: {data.get('schema')!r}")
        out = cls()
        for d in data["placements"]:
            out.place(Placement(d["patient"], d["room"], d["surgeon"],
                                d["start"], d["end"], d["setup"], d["cleanup"]))
        out.anaesthetised_before = {int(k): v for k, v in data.get("anaesthetised_before", {}).items()}
        out.realized_duration = {int(k): v for k, v in data.get("realized_duration", {}).items()}
        return out


def save_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return Instance.from_dict(json.load(fh))


def load_schedule(path) -> Schedule:
    with open(path, encoding="utf-8") as fh:
        return Schedule.from_dict(json.load(fh))


# ---- feasibility -----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Violation:
    constraint: int
    patients: tuple[int, ...]
    detail: str

    def __str__(self):
        return f"({self.constraint}) {CONSTRAINT_NAMES[self.constraint]}: {self.detail}"


@dataclass
class FeasibilityReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def constraints(self) -> set[int]:
        return {v.constraint for v in self.violations}

    def __str__(self):
        if self.ok:
            return "feasible"
        return "; ".join(str(v) for v in self.violations)


def _expected_duration(schedule: Schedule, patient: Patient) -> float:
    return schedule.realized_duration.get(patient.id, patient.duration)


def check_feasibility(schedule: Schedule, instance: Instance) -> FeasibilityReport:
    """Validate a schedule against the full constraint catalogue.

    Returns every violation found, each tagged with its constraint id.
    Dangling references (patients/rooms/surgeons not in the instance)
    raise StructuralError instead of being reported as violations.
    """
    hz = instance.horizon
    report = FeasibilityReport()
    add = report.violations.append

    for pid, pl in schedule.placements.items():
        if not instance.has_patient(pid):
            raise StructuralError(f"placement references unknown patient {pid}")
        if pl.room not in instance._room_by_id:
            raise StructuralError(f"patient {pid} placed in unknown room {pl.room}")
        if pl.surgeon not in instance._surgeon_by_id:
            raise StructuralError(f"patient {pid} assigned unknown surgeon {pl.surgeon}")

    for pid, pl in sorted(schedule.placements.items()):
        p = instance.patient(pid)
        room = instance.room(pl.room)
        surgeon = instance.surgeon(pl.surgeon)

        if not room.working:
            add(Violation(18, (pid,), f"room {room.id} is not working"))
        if pl.start < room.release - EPS:
            add(Violation(19, (pid,), f"start {pl.start} before room release {room.release}"))
        if pl.start < surgeon.release - EPS:
            add(Violation(20, (pid,), f"start {pl.start} before surgeon release {surgeon.release}"))
        dur = _expected_duration(schedule, p)
        if abs(pl.end - (pl.start + dur)) > 1e-6:
            add(Violation(25, (pid,), f"end {pl.end} != start {pl.start} + duration {dur}"))
        if p.specialty not in room.specialties:
            add(Violation(28, (pid,), f"room {room.id} not equipped for specialty {p.specialty}"))
        if pl.surgeon not in p.eligible_surgeons:
            add(Violation(29, (pid,), f"surgeon {pl.surgeon} not eligible"))
        if p.kind in (PatientClass.SCHEDULED_ELECTIVE, PatientClass.UNSCHEDULED_ELECTIVE):
            if pl.start < hz.start - EPS:
                add(Violation(31, (pid,), f"elective start {pl.start} before day start {hz.start}"))
        if p.kind is PatientClass.UNSCHEDULED_ELECTIVE:
            if pl.start < hz.start + p.notice - EPS:
                add(Violation(33, (pid,), f"start {pl.start} violates notice {p.notice}"))
            # Scheduling-act constraint: judged on the expected duration.
            # A started surgery that happens to overrun is not re-flagged.
            if pid not in schedule.realized_duration and pl.end > hz.open_hours + EPS:
                add(Violation(35, (pid,), f"expected end {pl.end} past opening hours {hz.open_hours}"))
        if p.kind is PatientClass.NON_ELECTIVE:
            if pl.start < p.arrival - EPS:
                add(Violation(34, (pid,), f"start {pl.start} before arrival {p.arrival}"))

    # Mandatory inclusion (32).
    for p in instance.patients:
        if p.kind in (PatientClass.SCHEDULED_ELECTIVE, PatientClass.NON_ELECTIVE):
            if not schedule.included(p.id):
                add(Violation(32, (p.id,), f"{p.kind.value} patient not included"))

    _check_resource_timelines(schedule, instance, report)
    return report


def _check_resource_timelines(schedule: Schedule, instance: Instance,
                              report: FeasibilityReport) -> None:
    """Overlap (23, 24) and changeover-gap (26, 27) checks, per resource."""
    by_room: dict[int, list[Placement]] = {}
    by_surgeon: dict[int, list[Placement]] = {}
    for pl in schedule.placements.values():
        by_room.setdefault(pl.room, []).append(pl)
        by_surgeon.setdefault(pl.surgeon, []).append(pl)

    for groups, overlap_c, gap_c in ((by_surgeon, 23, 26), (by_room, 24, 27)):
        for chain in groups.values():
            chain.sort(key=lambda pl: (pl.start, pl.patient))
            # Sweep for overlaps: any start before the running max end.
            max_end = None
            max_pl = None
            for pl in chain:
                if max_end is not None and pl.start < max_end - EPS:
                    report.violations.append(Violation(
                        overlap_c, (max_pl.patient, pl.patient),
                        f"[{max_pl.start}, {max_pl.end}] overlaps [{pl.start}, {pl.end}]"))
                if max_end is None or pl.end > max_end:
                    max_end, max_pl = pl.end, pl
            # Changeover gaps between consecutive placements.
            for prev, nxt in zip(chain, chain[1:]):
                required = prev.end + prev.cleanup + nxt.setup
                if nxt.start < required - EPS:
                    report.violations.append(Violation(
                        gap_c, (prev.patient, nxt.patient),
                        f"start {nxt.start} < {required} (prev end {prev.end} "
                        f"+ cleanup {prev.cleanup} + setup {nxt.setup})"))


# ---- earliest append start -------------------------------------------------

def class_lower_bound(patient: Patient, horizon: HorizonParams) -> float:
    """Class-specific earliest start: day start for electives, day start
    plus notice for add-ons, arrival for non-electives."""
    if patient.kind is PatientClass.NON_ELECTIVE:
        return patient.arrival
    if patient.kind is PatientClass.UNSCHEDULED_ELECTIVE:
        return horizon.start + patient.notice
    return horizon.start


def append_lower_bound(patient: Patient, room_free: Optional[float],
                       surgeon_free: Optional[float], room_release: float,
                       surgeon_release: float, horizon: HorizonParams,
                       now: float) -> float:
    """Smallest feasible start when appending after both timelines.

    ``room_free``/``surgeon_free`` are the occupancy ends (ends including
    cleanup) of the last placement on each timeline, or None when empty.
    """
    lb = max(room_release, surgeon_release, class_lower_bound(patient, horizon), now)
    if room_free is not None:
        lb = max(lb, room_free + patient.setup)
    if surgeon_free is not None:
        lb = max(lb, surgeon_free + patient.setup)
    return lb


def earliest_append_start(patient: Patient, surgeon: Surgeon, room: OperatingRoom,
                          schedule: Schedule, horizon: HorizonParams,
                          now: float) -> float:
    """Earliest start for appending this patient after the last placement
    on both the room's and the surgeon's timelines.

    Requires a working room equipped for the patient's specialty and an
    eligible surgeon; a finite start always exists under append-only
    semantics.
    """
    if not room.working:
        raise ValueError(f"room {room.id} is not working")
    if patient.specialty not in room.specialties:
        raise ValueError(f"room {room.id} not equipped for specialty {patient.specialty}")
    if surgeon.id not in patient.eligible_surgeons:
        raise ValueError(f"surgeon {surgeon.id} not eligible for patient {patient.id}")
    return append_lower_bound(
        patient,
        schedule.room_free_from(room.id),
        schedule.surgeon_free_from(surgeon.id),
        room.release,
        surgeon.release,
        horizon,
        now,
    )


def placement_for(patient: Patient, room_id: int, surgeon_id: int, start: float,
                  duration: Optional[float] = None) -> Placement:
    dur = patient.duration if duration is None else duration
    return Placement(patient.id, room_id, surgeon_id, start, start + dur,
                     patient.setup, patient.cleanup)
