import numpy as np
import pytest
from hypothesis import settings

from aeroload.pipeline import build_table
from aeroload.synth import SynthSpec, generate_dataset

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_dataset():
    spec = SynthSpec(n_participants=6, seed=11)
    sessions, truth = generate_dataset(spec)
    return spec, sessions, truth


@pytest.fixture(scope="session")
def small_table(small_dataset):
    _, sessions, _ = small_dataset
    table, _ = build_table(sessions)
    return table


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the terminal summary prints them all."""
    def record(number, ok, detail, elapsed, limit_s):
        in_time = limit_s is None or elapsed < limit_s
        status = "PASS" if ok and in_time else "FAIL"
        limit = "" if limit_s is None else f", limit {limit_s:g}s"
        line = f"[{status}] criterion {number}: {detail} ({elapsed:.1f}s{limit})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok and in_time
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
