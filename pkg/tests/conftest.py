import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from vdba.engine import AllocSpec, SliceDescriptor, TrafficClass
from vdba.frame import FrameClock, PriorityClass

SMALL_CLOCK = FrameClock(line_rate_bps=51_200_000, frame_duration_ns=125_000)  # 200 words


def be(alloc_id, onu_id, weight=1):
    return AllocSpec(alloc_id, onu_id, TrafficClass(PriorityClass.BEST_EFFORT, 0, weight))


def fixed(alloc_id, onu_id, words):
    return AllocSpec(alloc_id, onu_id, TrafficClass(PriorityClass.FIXED, words))


def assured(alloc_id, onu_id):
    return AllocSpec(alloc_id, onu_id, TrafficClass(PriorityClass.ASSURED))


@pytest.fixture
def small_clock():
    return SMALL_CLOCK


@pytest.fixture
def two_slices():
    a = SliceDescriptor("a", 100, (be(1, 1), be(2, 2)), priority=0)
    b = SliceDescriptor("b", 60, (be(3, 3),), surplus_eligible=True, priority=1)
    return a, b


CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        status, line = CRITERIA[n]
        terminalreporter.write_line(f"[{status}] criterion {n}: {line}")
