"""Stochastic week generation: waiting list, request streams, disruptions.

The waiting-list size is Poisson; patients are split across
specialty/urgency cells by weight (multinomial thinning of the total)
and draw lognormal durations whose location varies by specialty.  The
week's room/surgeon assignment is packed greedily per specialty block,
which stands in for the upstream weekly plan.  Request streams are
Poisson processes (electives on weekdays only); cancellations and
breakdowns are independent Bernoulli draws revealed at day start.

All randomness flows through one numpy Generator, so identical
(params, seed) pairs produce byte-identical weeks.  Replication seeds
are derived by numpy SeedSequence spawning (see simulator.seed_stream).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .domain import (
    HorizonParams,
    Instance,
    OperatingRoom,
    Patient,
    PatientClass,
    Surgeon,
    patient_from_dict,
    patient_to_dict,
)

WEEK_DAYS = 7
URGENCY_LIMITS = {1: 30, 2: 90, 3: 360}  # preferred maximum days waiting

WEEK_SCHEMA = "scsp-week-1"
ADAPTER_SCHEMA = "ot-week-adapter-1"


@dataclass
class GenParams:
    """Configuration for one simulated week at the case-study scale."""

    # Theatre structure.
    n_rooms: int = 21
    n_reserved_rooms: int = 2
    n_specialties: int = 27
    n_surgeons: int = 110
    specialties_per_room: int = 4

    # Demand volumes (weekly means).
    waiting_list_mean: float = 2780.0
    elective_requests_weekly: float = 370.0
    nonelective_requests_weekly: float = 113.0
    # Fraction of non-elective arrivals falling inside opening hours
    # (emergency demand peaks in daytime).
    ne_daytime_frac: float = 0.6

    # Lognormal durations: location ramps across specialties, scale is the
    # log-sd.  Realized durations reuse the same scale, anchored at the
    # expectation (median-matching), so over- and under-runs are equally
    # likely.
    elective_median_range: tuple[float, float] = (0.7, 2.2)
    elective_sigma: float = 0.18
    nonelective_median_range: tuple[float, float] = (1.4, 2.8)
    nonelective_sigma: float = 0.24
    min_duration: float = 0.25

    # Waiting-time regression per urgency category:
    # days = clip(round(b0 + b1 * preferred_max + noise), 0, 2 * preferred_max).
    days_waiting_beta0: float = 5.0
    days_waiting_beta1: float = 0.55
    days_waiting_noise_frac: float = 0.3

    # Urgency category mix and specialty weights (decreasing ramp).
    category_probs: tuple[float, float, float] = (0.15, 0.35, 0.50)

    # Day-of-surgery disruption probabilities.
    cancellation_prob: float = 0.03
    breakdown_prob: float = 0.007

    # Short-notice add-on lead times (hours) and the fraction of the
    # waiting list willing to take a same-day call (transplant-style).
    notice_range: tuple[float, float] = (1.0, 3.0)
    addon_eligible_frac: float = 0.006

    # Surgeons not rostered on a given day can reach the theatre for an
    # emergency only after their call-in release time.
    call_in_release: tuple[float, float] = (0.5, 2.0)

    # Non-elective eligibility: smaller sets than electives, optionally
    # weighted towards surgeons who run lists this week.
    ne_eligible_min: int = 2
    ne_eligible_max: int = 3
    ne_rostered_bias: float = 0.0

    # Buffers around each surgery (hours).
    setup_hours: float = 0.25
    cleanup_hours: float = 0.25

    # Weekly plan packing: expected occupied hours per elective room-day.
    mss_fill_hours: float = 7.2
    weekday_count: int = 5

    eligible_min: int = 2
    eligible_max: int = 4

    open_hours: float = 10.0
    day_hours: float = 24.0
    big_m: float = 24.0

    seed: int = 0

    def horizon(self) -> HorizonParams:
        return HorizonParams(0.0, self.open_hours, self.day_hours, self.big_m)

    def specialty_weights(self) -> np.ndarray:
        s = self.n_specialties
        w = 1.5 - np.arange(s) / s
        return w / w.sum()

    def duration_median(self, specialty: int, kind: PatientClass) -> float:
        lo, hi = (self.nonelective_median_range
                  if kind is PatientClass.NON_ELECTIVE
                  else self.elective_median_range)
        if self.n_specialties == 1:
            return lo
        frac = specialty / (self.n_specialties - 1)
        return lo + (hi - lo) * frac

    def duration_sigma(self, specialty: int, kind: PatientClass) -> float:
        del specialty  # scale is shared across specialties by default
        if kind is PatientClass.NON_ELECTIVE:
            return self.nonelective_sigma
        return self.elective_sigma

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GenParams":
        kwargs = dict(data)
        for key in ("elective_median_range", "nonelective_median_range",
                    "notice_range", "category_probs"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def realize_duration(expected: float, params: GenParams, specialty: int,
                     kind: PatientClass, rng) -> float:
    """Actual duration drawn around the expectation.

    Lognormal with the class/specialty scale, conditioned to have median
    equal to the expectation; strictly positive, and degenerate (equal to
    the expectation) as the scale goes to zero.
    """
    if expected <= 0:
        raise ValueError("expected duration must be positive")
    sigma = params.duration_sigma(specialty, kind)
    if sigma <= 0:
        return expected
    return float(expected * np.exp(sigma * rng.standard_normal()))


@dataclass
class WeekInstance:
    """A week of demand: static theatre, waiting list, weekly plan, and
    the realization streams the simulator replays."""

    horizon: HorizonParams
    rooms: list[OperatingRoom]
    surgeons: list[Surgeon]
    n_specialties: int
    waiting_list: list[Patient]
    scheduled: list[Patient]
    week_mss: dict[int, tuple[int, int, int]]   # pid -> (day, room, surgeon)
    elective_requests: list[tuple[int, float, Patient]]
    nonelective_requests: list[tuple[int, float, Patient]]
    cancellations: dict[int, list[int]] = field(default_factory=dict)
    breakdowns: dict[int, list[int]] = field(default_factory=dict)
    addon_candidates: list[int] = field(default_factory=list)  # short-notice-capable pids
    gen: Optional[GenParams] = None

    def scheduled_for_day(self, day: int) -> list[Patient]:
        return [p for p in self.scheduled if self.week_mss[p.id][0] == day]

    def day_instance(self, day: int, broken: set[int] = frozenset(),
                     cancelled: set[int] = frozenset(),
                     room_release: Optional[dict[int, float]] = None,
                     surgeon_release: Optional[dict[int, float]] = None) -> Instance:
        """Instance view for one day.

        Surgeons rostered for a block today are on site from day start;
        the others keep their call-in release.  Optional carry-over
        releases (overnight spill from the previous day) raise both room
        and surgeon release times.
        """
        room_release = room_release or {}
        surgeon_release = surgeon_release or {}
        rostered = {v[2] for v in self.week_mss.values() if v[0] == day}
        rooms = [
            replace(r, working=r.working and r.id not in broken,
                    release=max(r.release, room_release.get(r.id, 0.0)))
            for r in self.rooms
        ]
        surgeons = [
            replace(s, release=max(0.0 if s.id in rostered else s.release,
                                   surgeon_release.get(s.id, 0.0)))
            for s in self.surgeons
        ]
        patients = [p for p in self.scheduled_for_day(day) if p.id not in cancelled]
        mss = {p.id: (self.week_mss[p.id][1], self.week_mss[p.id][2]) for p in patients}
        return Instance(self.horizon, rooms, surgeons, self.n_specialties,
                        patients, mss)

    @property
    def instance(self) -> Instance:
        """Day-0 state including the full waiting list."""
        inst = self.day_instance(0)
        for p in self.waiting_list:
            inst.add_patient(p)
        return inst

    def realization_sigma(self, specialty: int, kind: PatientClass) -> float:
        if self.gen is None:
            return 0.0
        return self.gen.duration_sigma(specialty, kind)

    def summary(self) -> dict:
        return {
            "waiting_list": len(self.waiting_list),
            "scheduled": len(self.scheduled),
            "elective_requests": len(self.elective_requests),
            "nonelective_requests": len(self.nonelective_requests),
            "cancellations": sum(len(v) for v in self.cancellations.values()),
            "breakdowns": sum(len(v) for v in self.breakdowns.values()),
        }

    # ---- serialization ----

    def to_dict(self) -> dict:
        return {
            "schema": WEEK_SCHEMA,
            "horizon": {
                "start": self.horizon.start,
                "open_hours": self.horizon.open_hours,
                "day_hours": self.horizon.day_hours,
                "big_m": self.horizon.big_m,
            },
            "rooms": [
                {
                    "id": r.id, "working": r.working, "release": r.release,
                    "specialties": sorted(r.specialties),
                    "reserved_for": sorted(r.reserved_for) if r.reserved_for is not None else None,
                }
                for r in self.rooms
            ],
            "surgeons": [{"id": s.id, "release": s.release} for s in self.surgeons],
            "n_specialties": self.n_specialties,
            "waiting_list": [patient_to_dict(p) for p in self.waiting_list],
            "scheduled": [patient_to_dict(p) for p in self.scheduled],
            "week_mss": {str(pid): list(v) for pid, v in sorted(self.week_mss.items())},
            "elective_requests": [
                {"day": d, "at": at, "patient": patient_to_dict(p)}
                for d, at, p in self.elective_requests
            ],
            "nonelective_requests": [
                {"day": d, "at": at, "patient": patient_to_dict(p)}
                for d, at, p in self.nonelective_requests
            ],
            "cancellations": {str(d): sorted(v) for d, v in sorted(self.cancellations.items())},
            "breakdowns": {str(d): sorted(v) for d, v in sorted(self.breakdowns.items())},
            "addon_candidates": sorted(self.addon_candidates),
            "gen": self.gen.to_dict() if self.gen is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WeekInstance":
        if data.get("schema") != WEEK_SCHEMA:
            raise ValueError(f"unsupported schema: {data.get('schema')!r}")
        hz = data["horizon"]
        horizon = HorizonParams(hz["start"], hz["open_hours"], hz["day_hours"], hz["big_m"])
        rooms = [
            OperatingRoom(
                id=r["id"], working=r["working"], release=r["release"],
                specialties=frozenset(r["specialties"]),
                reserved_for=frozenset(r["reserved_for"]) if r.get("reserved_for") is not None else None,
            )
            for r in data["rooms"]
        ]
        surgeons = [Surgeon(s["id"], s["release"]) for s in data["surgeons"]]
        return cls(
            horizon=horizon,
            rooms=rooms,
            surgeons=surgeons,
            n_specialties=data["n_specialties"],
            waiting_list=[patient_from_dict(p) for p in data["waiting_list"]],
            scheduled=[patient_from_dict(p) for p in data["scheduled"]],
            week_mss={int(k): tuple(v) for k, v in data["week_mss"].items()},
            elective_requests=[(e["day"], e["at"], patient_from_dict(e["patient"]))
                               for e in data["elective_requests"]],
            nonelective_requests=[(e["day"], e["at"], patient_from_dict(e["patient"]))
                                  for e in data["nonelective_requests"]],
            cancellations={int(k): list(v) for k, v in data.get("cancellations", {}).items()},
            breakdowns={int(k): list(v) for k, v in data.get("breakdowns", {}).items()},
            addon_candidates=list(data.get("addon_candidates", [])),
            gen=GenParams.from_dict(data["gen"]) if data.get("gen") else None,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "WeekInstance":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# ---- generation -------------------------------------------------------------

def _build_theatre(params: GenParams) -> tuple[list[OperatingRoom], list[Surgeon], dict[int, list[int]]]:
    all_specs = frozenset(range(params.n_specialties))
    n_elective_rooms = params.n_rooms - params.n_reserved_rooms
    rooms = []
    stride = 7 if params.n_specialties > 7 else 1
    for rid in range(n_elective_rooms):
        specs = frozenset((rid + k * stride) % params.n_specialties
                          for k in range(params.specialties_per_room))
        rooms.append(OperatingRoom(id=rid, specialties=specs))
    for rid in range(n_elective_rooms, params.n_rooms):
        rooms.append(OperatingRoom(id=rid, specialties=all_specs, reserved_for=all_specs))
    surgeons = [Surgeon(id=h) for h in range(params.n_surgeons)]
    by_specialty: dict[int, list[int]] = {s: [] for s in range(params.n_specialties)}
    for h in range(params.n_surgeons):
        by_specialty[h % params.n_specialties].append(h)
    # Every specialty needs at least one surgeon and one suitable room.
    for s, hs in by_specialty.items():
        if not hs:
            raise ValueError(f"specialty {s} has no surgeons; increase n_surgeons")
        if not any(s in r.specialties for r in rooms):
            raise ValueError(f"specialty {s} has no equipped room")
    return rooms, surgeons, by_specialty


def _draw_patient(pid: int, kind: PatientClass, params: GenParams,
                  surgeons_by_spec: dict[int, list[int]], rng,
                  arrival: Optional[float] = None,
                  surgeon_weights: Optional[dict[int, float]] = None) -> Patient:
    weights = params.specialty_weights()
    spec = int(rng.choice(params.n_specialties, p=weights))
    cat = int(rng.choice((1, 2, 3), p=np.asarray(params.category_probs)))
    median = params.duration_median(spec, kind)
    sigma = params.duration_sigma(spec, kind)
    duration = max(params.min_duration,
                   float(median * np.exp(sigma * rng.standard_normal())))
    pref = URGENCY_LIMITS[cat]
    noise = rng.standard_normal() * params.days_waiting_noise_frac * pref
    days = int(np.clip(round(params.days_waiting_beta0
                             + params.days_waiting_beta1 * pref + noise),
                       0, 2 * pref))
    pool = surgeons_by_spec[spec]
    if kind is PatientClass.NON_ELECTIVE:
        k = min(len(pool), int(rng.integers(params.ne_eligible_min,
                                            params.ne_eligible_max + 1)))
        w = np.array([1.0 + (surgeon_weights or {}).get(h, 0.0) for h in pool])
        probs = w / w.sum()
        eligible = frozenset(int(h) for h in rng.choice(pool, size=k, replace=False, p=probs))
    else:
        k = min(len(pool), int(rng.integers(params.eligible_min, params.eligible_max + 1)))
        eligible = frozenset(int(h) for h in rng.choice(pool, size=k, replace=False))
    notice = None
    if kind is PatientClass.UNSCHEDULED_ELECTIVE:
        lo, hi = params.notice_range
        notice = float(rng.uniform(lo, hi))
    return Patient(
        id=pid, kind=kind, specialty=spec, duration=round(duration, 4),
        setup=params.setup_hours, cleanup=params.cleanup_hours,
        eligible_surgeons=eligible, notice=round(notice, 4) if notice is not None else None,
        arrival=round(arrival, 4) if arrival is not None else None,
        urgency=cat, days_waiting=(0 if kind is PatientClass.NON_ELECTIVE else days),
        due_date=(0 if kind is PatientClass.NON_ELECTIVE else pref - days),
    )


def _build_week_plan(
    params: GenParams, rooms: list[OperatingRoom],
    surgeons_by_spec: dict[int, list[int]], waiting: list[Patient],
) -> tuple[list[Patient], dict[int, tuple[int, int, int]], list[Patient]]:
    """Greedy specialty-block packing of the weekly plan.

    Each elective room-day hosts one specialty block with one surgeon;
    blocks fill in due-date order until the expected occupied hours reach
    the fill target.  Selected patients convert to scheduled electives.
    """
    by_spec: dict[int, list[Patient]] = {}
    for p in waiting:
        by_spec.setdefault(p.specialty, []).append(p)
    for v in by_spec.values():
        v.sort(key=lambda p: (p.due_date, p.id))

    taken: set[int] = set()
    scheduled: list[Patient] = []
    week_mss: dict[int, tuple[int, int, int]] = {}
    elective_rooms = [r for r in rooms if r.reserved_for is None]

    for day in range(params.weekday_count):
        used_surgeons: set[int] = set()
        for room in elective_rooms:
            specs = sorted(room.specialties)
            spec = specs[(day + room.id) % len(specs)]
            pool = surgeons_by_spec[spec]
            rotation = (day * len(elective_rooms) + room.id) % len(pool)
            surgeon = next(
                (pool[(rotation + i) % len(pool)] for i in range(len(pool))
                 if pool[(rotation + i) % len(pool)] not in used_surgeons),
                pool[rotation],
            )
            used_surgeons.add(surgeon)
            hours = 0.0
            for p in by_spec.get(spec, ()):
                if p.id in taken or surgeon not in p.eligible_surgeons:
                    continue
                if hours + p.footprint > params.mss_fill_hours:
                    continue
                taken.add(p.id)
                hours += p.footprint
                sched = replace(p, kind=PatientClass.SCHEDULED_ELECTIVE, notice=None)
                scheduled.append(sched)
                week_mss[p.id] = (day, room.id, surgeon)
    remaining = [p for p in waiting if p.id not in taken]
    return scheduled, week_mss, remaining


def generate_week(params: GenParams, rng=None) -> WeekInstance:
    """Draw one week of demand and disruptions."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    rooms, surgeons, by_spec = _build_theatre(params)
    lo, hi = params.call_in_release
    surgeons = [replace(s, release=float(np.round(rng.uniform(lo, hi), 4)))
                for s in surgeons]
    next_id = 0

    n_waiting = int(rng.poisson(params.waiting_list_mean))
    waiting = []
    for _ in range(n_waiting):
        waiting.append(_draw_patient(next_id, PatientClass.UNSCHEDULED_ELECTIVE,
                                     params, by_spec, rng))
        next_id += 1

    scheduled, week_mss, waiting = _build_week_plan(params, rooms, by_spec, waiting)
    weekly_blocks: dict[int, float] = {}
    for _, _, hid in week_mss.values():
        weekly_blocks[hid] = weekly_blocks.get(hid, 0.0) + params.ne_rostered_bias

    elective_requests = []
    n_elective = int(rng.poisson(params.elective_requests_weekly))
    for _ in range(n_elective):
        day = int(rng.integers(0, params.weekday_count))
        at = float(np.round(rng.uniform(0.0, params.open_hours), 4))
        p = _draw_patient(next_id, PatientClass.UNSCHEDULED_ELECTIVE, params, by_spec, rng)
        next_id += 1
        elective_requests.append((day, at, p))
    elective_requests.sort(key=lambda e: (e[0], e[1], e[2].id))

    nonelective_requests = []
    n_ne = int(rng.poisson(params.nonelective_requests_weekly))
    lam = params.open_hours
    arrivals = []
    for _ in range(n_ne):
        day = int(rng.integers(0, WEEK_DAYS))
        if rng.random() < params.ne_daytime_frac:
            at = float(rng.uniform(0.0, lam))
        else:
            at = float(rng.uniform(lam, 24.0))
        arrivals.append((day, round(at, 4)))
    arrivals.sort()
    for day, at in arrivals:
        p = _draw_patient(next_id, PatientClass.NON_ELECTIVE, params, by_spec, rng,
                          arrival=at, surgeon_weights=weekly_blocks)
        next_id += 1
        nonelective_requests.append((day, at, p))

    cancellations: dict[int, list[int]] = {}
    for day in range(params.weekday_count):
        hit = [p.id for p in scheduled
               if week_mss[p.id][0] == day and rng.random() < params.cancellation_prob]
        if hit:
            cancellations[day] = hit

    breakdowns: dict[int, list[int]] = {}
    for day in range(WEEK_DAYS):
        hit = [r.id for r in rooms if rng.random() < params.breakdown_prob]
        if hit:
            breakdowns[day] = hit

    addon_candidates = [p.id for p in waiting
                        if rng.random() < params.addon_eligible_frac]
    addon_candidates += [p.id for _, _, p in elective_requests
                         if rng.random() < params.addon_eligible_frac]

    return WeekInstance(
        horizon=params.horizon(),
        rooms=rooms,
        surgeons=surgeons,
        n_specialties=params.n_specialties,
        waiting_list=waiting,
        scheduled=scheduled,
        week_mss=week_mss,
        elective_requests=elective_requests,
        nonelective_requests=nonelective_requests,
        cancellations=cancellations,
        breakdowns=breakdowns,
        addon_candidates=addon_candidates,
        gen=params,
    )


# ---- external dataset adapter ------------------------------------------------

def week_from_adapter(data: dict) -> WeekInstance:
    """Import a week from the documented adapter schema.

    The adapter accepts a flat mapping with optional unit conversion:
    ``time_unit`` of "minutes" divides durations/times by 60.  Missing
    stream fields default to empty.  See README for the field reference.
    """
    if data.get("schema") != ADAPTER_SCHEMA:
        raise ValueError(f"unsupported adapter schema: {data.get('schema')!r}")
    scale = 1.0 / 60.0 if data.get("time_unit") == "minutes" else 1.0

    def hours(x):
        return x * scale

    hz = data.get("horizon", {})
    horizon = HorizonParams(
        hours(hz.get("start", 0.0)), hours(hz.get("open_hours", 600.0 if scale != 1.0 else 10.0)),
        hours(hz.get("day_hours", 1440.0 if scale != 1.0 else 24.0)),
        hours(hz.get("big_m", 1440.0 if scale != 1.0 else 24.0)),
    )

    def patient(d: dict) -> Patient:
        return Patient(
            id=d["id"],
            kind=PatientClass(d["class"]),
            specialty=d["specialty"],
            duration=hours(d["duration"]),
            setup=hours(d.get("setup", 15.0 if scale != 1.0 else 0.25)),
            cleanup=hours(d.get("cleanup", 15.0 if scale != 1.0 else 0.25)),
            eligible_surgeons=frozenset(d["eligible_surgeons"]),
            notice=hours(d["notice"]) if d.get("notice") is not None else None,
            arrival=hours(d["arrival"]) if d.get("arrival") is not None else None,
            urgency=d.get("urgency", 3),
            days_waiting=d.get("days_waiting", 0),
            due_date=d.get("due_date", 0),
        )

    rooms = [
        OperatingRoom(
            id=r["id"], working=r.get("working", True),
            release=hours(r.get("release", 0.0)),
            specialties=frozenset(r["specialties"]),
            reserved_for=frozenset(r["reserved_for"]) if r.get("reserved_for") else None,
        )
        for r in data["rooms"]
    ]
    surgeons = [Surgeon(s["id"], hours(s.get("release", 0.0))) for s in data["surgeons"]]
    return WeekInstance(
        horizon=horizon,
        rooms=rooms,
        surgeons=surgeons,
        n_specialties=data["n_specialties"],
        waiting_list=[patient(p) for p in data.get("waiting_list", [])],
        scheduled=[patient(p) for p in data.get("scheduled", [])],
        week_mss={int(k): tuple(v) for k, v in data.get("week_mss", {}).items()},
        elective_requests=[(e["day"], hours(e["at"]), patient(e["patient"]))
                           for e in data.get("elective_requests", [])],
        nonelective_requests=[(e["day"], hours(e["at"]), patient(e["patient"]))
                              for e in data.get("nonelective_requests", [])],
        cancellations={int(k): list(v) for k, v in data.get("cancellations", {}).items()},
        breakdowns={int(k): list(v) for k, v in data.get("breakdowns", {}).items()},
        gen=None,
    )
