import numpy as np
import pytest

from orsched.domain import (
    HorizonParams,
    Instance,
    OperatingRoom,
    Patient,
    PatientClass,
    Surgeon,
)

ALL = frozenset(range(3))


def make_patient(pid, kind=PatientClass.SCHEDULED_ELECTIVE, specialty=0,
                 duration=2.0, setup=0.25, cleanup=0.25, surgeons=(0,),
                 notice=None, arrival=None, urgency=3, days_waiting=0,
                 due_date=30):
    if kind is PatientClass.UNSCHEDULED_ELECTIVE and notice is None:
        notice = 1.0
    if kind is PatientClass.NON_ELECTIVE and arrival is None:
        arrival = 0.0
    return Patient(
        id=pid, kind=kind, specialty=specialty, duration=duration,
        setup=setup, cleanup=cleanup, eligible_surgeons=frozenset(surgeons),
        notice=notice, arrival=arrival, urgency=urgency,
        days_waiting=days_waiting, due_date=due_date,
    )


def make_instance(patients=(), n_rooms=2, n_surgeons=2, n_specialties=3,
                  horizon=None, mss=None, rooms=None, surgeons=None):
    horizon = horizon or HorizonParams()
    if rooms is None:
        rooms = [OperatingRoom(id=r, specialties=ALL) for r in range(n_rooms)]
    if surgeons is None:
        surgeons = [Surgeon(id=h) for h in range(n_surgeons)]
    return Instance(horizon, rooms, surgeons, n_specialties, patients, mss or {})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
