import json

import numpy as np
import pytest

from orsched.domain import (
    HorizonParams,
    Placement,
    Schedule,
    StructuralError,
    check_feasibility,
    earliest_append_start,
    overlaps,
    placement_for,
)
from orsched.domain import PatientClass

from conftest import make_instance, make_patient


def pl(pid, room, surgeon, start, end, setup=0.25, cleanup=0.25):
    return Placement(pid, room, surgeon, start, end, setup, cleanup)


# ---- overlap predicate ----

def test_overlap_basic_cases():
    assert overlaps(pl(1, 0, 0, 2, 4), pl(2, 0, 0, 3, 5)) is True
    # touching endpoints: strict inequality, no overlap
    assert overlaps(pl(1, 0, 0, 2, 4), pl(2, 0, 0, 4, 6)) is False
    assert overlaps(pl(1, 0, 0, 0, 10), pl(2, 0, 0, 3, 4)) is True


def test_overlap_same_patient_rejected():
    with pytest.raises(ValueError):
        overlaps(pl(1, 0, 0, 2, 4), pl(1, 0, 0, 3, 5))


def test_overlap_matches_naive_intersection_oracle(rng):
    # naive oracle: open intervals intersect iff the intersection has
    # positive measure
    for _ in range(10_000):
        a0, b0 = rng.uniform(-5, 20, size=2)
        a1 = a0 + rng.uniform(0.01, 6)
        b1 = b0 + rng.uniform(0.01, 6)
        x, y = pl(1, 0, 0, a0, a1), pl(2, 0, 0, b0, b1)
        expected = min(a1, b1) - max(a0, b0) > 0
        assert overlaps(x, y) == expected
        assert overlaps(y, x) == overlaps(x, y)  # symmetric


# ---- feasibility checker ----

def test_same_room_overlap_flags_24():
    p1 = make_patient(1, duration=2.0)
    p2 = make_patient(2, duration=2.0)
    inst = make_instance([p1, p2])
    sched = Schedule()
    sched.place(pl(1, 0, 0, 0, 2))
    sched.place(pl(2, 0, 1, 1, 3))
    report = check_feasibility(sched, inst)
    assert 24 in report.constraints()


def test_missing_nonelective_flags_32():
    p = make_patient(1, kind=PatientClass.NON_ELECTIVE, arrival=1.0)
    inst = make_instance([p])
    report = check_feasibility(Schedule(), inst)
    assert report.constraints() == {32}


def test_room_changeover_gap_27():
    p1 = make_patient(1, duration=2.0, cleanup=0.25)
    p2 = make_patient(2, duration=2.0, setup=0.25, surgeons=(1,))
    inst = make_instance([p1, p2])
    ok = Schedule()
    ok.place(pl(1, 0, 0, 0.0, 2.0))
    ok.place(pl(2, 0, 1, 2.5, 4.5))
    assert check_feasibility(ok, inst).ok

    bad = Schedule()
    bad.place(pl(1, 0, 0, 0.0, 2.0))
    bad.place(pl(2, 0, 1, 2.4, 4.4))
    assert 27 in check_feasibility(bad, inst).constraints()


def test_checker_covers_release_eligibility_and_class_bounds():
    hz = HorizonParams(start=0.0)
    addon = make_patient(3, kind=PatientClass.UNSCHEDULED_ELECTIVE, notice=2.0,
                         duration=2.0, surgeons=(0,))
    ne = make_patient(4, kind=PatientClass.NON_ELECTIVE, arrival=5.0,
                      duration=1.0, surgeons=(0,))
    inst = make_instance([addon, ne], horizon=hz)

    sched = Schedule()
    sched.place(pl(3, 0, 0, 1.0, 3.0))    # violates notice (33)
    sched.place(pl(4, 1, 0, 4.0, 5.0))    # before arrival (34), surgeon overlap (23)
    report = check_feasibility(sched, inst)
    assert {33, 34}.issubset(report.constraints())

    sched2 = Schedule()
    sched2.place(pl(3, 0, 0, 9.0, 11.0))   # ends past opening hours (35)
    sched2.place(pl(4, 1, 0, 5.0, 6.0))
    assert 35 in check_feasibility(sched2, inst).constraints()


def test_checker_flags_each_structural_constraint():
    p = make_patient(1, specialty=2, surgeons=(0,))
    inst = make_instance([p], rooms=None)
    # room 1 not equipped for specialty 2
    from orsched.domain import OperatingRoom
    inst = make_instance([p], rooms=[
        OperatingRoom(id=0, working=False, specialties=frozenset({2})),
        OperatingRoom(id=1, specialties=frozenset({0, 1}), release=3.0),
    ])
    sched = Schedule()
    sched.place(pl(1, 0, 0, 0.0, 2.0))
    assert 18 in check_feasibility(sched, inst).constraints()

    sched = Schedule()
    sched.place(pl(1, 1, 0, 0.0, 2.0))
    got = check_feasibility(sched, inst).constraints()
    assert 28 in got          # room 1 lacks specialty 2
    assert 19 in got          # before room release 3.0


def test_checker_flags_mismatched_end_and_ineligible_surgeon():
    p = make_patient(1, duration=2.0, surgeons=(0,))
    inst = make_instance([p])
    sched = Schedule()
    sched.place(pl(1, 0, 1, 0.0, 2.5))
    got = check_feasibility(sched, inst).constraints()
    assert 25 in got and 29 in got


def test_checker_uses_realized_duration_for_25():
    p = make_patient(1, duration=2.0)
    inst = make_instance([p])
    sched = Schedule()
    sched.place(pl(1, 0, 0, 0.0, 2.7))
    sched.realized_duration[1] = 2.7
    assert check_feasibility(sched, inst).ok


def test_dangling_reference_raises_structural_error():
    inst = make_instance([make_patient(1)])
    sched = Schedule()
    sched.place(pl(99, 0, 0, 0.0, 2.0))
    with pytest.raises(StructuralError):
        check_feasibility(sched, inst)


# ---- earliest append start ----

def test_earliest_start_trivial_all_bounds_zero():
    p = make_patient(1)
    inst = make_instance([p])
    z = earliest_append_start(p, inst.surgeon(0), inst.room(0), Schedule(),
                              inst.horizon, now=0.0)
    assert z == 0.0


def test_earliest_start_respects_changeover_gap():
    prev = make_patient(1, duration=3.0, cleanup=0.25)
    nxt = make_patient(2, duration=1.0, setup=0.25, surgeons=(1,))
    inst = make_instance([prev, nxt])
    sched = Schedule()
    sched.place(placement_for(prev, 0, 0, 0.0))
    z = earliest_append_start(nxt, inst.surgeon(1), inst.room(0), sched,
                              inst.horizon, now=0.0)
    assert z == pytest.approx(3.5)


def test_earliest_start_nonelective_arrival_binds():
    p = make_patient(1, kind=PatientClass.NON_ELECTIVE, arrival=11.0)
    inst = make_instance([p])
    z = earliest_append_start(p, inst.surgeon(0), inst.room(0), Schedule(),
                              inst.horizon, now=0.0)
    assert z == 11.0


def test_earliest_start_tightness_property(rng):
    # Placing at the returned start is feasible; any earlier start breaks
    # at least one constraint.
    eps = 1e-6
    for _ in range(200):
        kinds = [PatientClass.SCHEDULED_ELECTIVE, PatientClass.UNSCHEDULED_ELECTIVE,
                 PatientClass.NON_ELECTIVE]
        kind = kinds[rng.integers(0, 3)]
        p_prev = make_patient(1, duration=float(rng.uniform(0.5, 3)),
                              cleanup=float(rng.uniform(0.05, 0.5)))
        p_new = make_patient(
            2, kind=kind, duration=float(rng.uniform(0.5, 3)),
            setup=float(rng.uniform(0.05, 0.5)), surgeons=(0, 1),
            notice=float(rng.uniform(0.5, 2)) if kind is PatientClass.UNSCHEDULED_ELECTIVE else None,
            arrival=float(rng.uniform(0, 4)) if kind is PatientClass.NON_ELECTIVE else None,
        )
        from orsched.domain import OperatingRoom, Surgeon
        room = OperatingRoom(id=0, specialties=frozenset({0}),
                             release=float(rng.uniform(0, 2)))
        surgeon = Surgeon(id=1, release=float(rng.uniform(0, 2)))
        inst = make_instance([p_prev, p_new], rooms=[room],
                             surgeons=[Surgeon(id=0), surgeon])
        sched = Schedule()
        if rng.random() < 0.8:
            sched.place(placement_for(p_prev, 0, 0, float(rng.uniform(0, 3))))
        else:
            inst.patients.remove(p_prev)
        z = earliest_append_start(p_new, surgeon, room, sched, inst.horizon, now=0.0)

        good = sched.copy()
        good.place(placement_for(p_new, 0, 1, z))
        report = check_feasibility(good, inst)
        violations = [v for v in report.violations
                      if v.constraint != 32 or 2 in v.patients]
        assert not [v for v in violations if 2 in v.patients], str(report)

        if kind is not PatientClass.UNSCHEDULED_ELECTIVE or z + p_new.duration <= 10.0:
            bad = sched.copy()
            bad.place(placement_for(p_new, 0, 1, z - eps))
            bad_report = check_feasibility(bad, inst)
            assert [v for v in bad_report.violations if 2 in v.patients]


# ---- serialization ----

def test_instance_and_schedule_json_round_trip(tmp_path):
    from orsched.domain import Instance, save_json, load_instance, load_schedule
    patients = [
        make_patient(1, duration=1.5),
        make_patient(2, kind=PatientClass.NON_ELECTIVE, arrival=2.0, surgeons=(0, 1)),
        make_patient(3, kind=PatientClass.UNSCHEDULED_ELECTIVE, notice=1.5),
    ]
    inst = make_instance(patients, mss={1: (0, 0)})
    save_json(inst, tmp_path / "inst.json")
    loaded = load_instance(tmp_path / "inst.json")
    assert loaded.to_dict() == inst.to_dict()
    with open(tmp_path / "inst.json") as fh:
        assert json.load(fh)["schema"] == "scsp-1"

    sched = Schedule()
    sched.place(placement_for(patients[0], 0, 0, 0.0))
    sched.mark_started(1, 0.0)
    sched.realized_duration[1] = 1.4
    save_json(sched, tmp_path / "sched.json")
    loaded = load_schedule(tmp_path / "sched.json")
    assert loaded.to_dict() == sched.to_dict()


def test_instance_validate_catches_bad_assignment():
    p = make_patient(1, specialty=1, surgeons=(0,))
    inst = make_instance([p], mss={1: (0, 1)})  # surgeon 1 not eligible
    assert any("ineligible" in issue for issue in inst.validate())
