from __future__ import annotations

import pytest

from modsched import data
from modsched.loop import LoopGraph, augment_loop_carried, load_loop
from modsched.machine import Processor, load_machine


def machine(name: str) -> Processor:
    return load_machine(data.load(f"{name}.json"))


def loop(name: str, p: Processor, augmented: bool = False) -> LoopGraph:
    g = load_loop(data.load(f"{name}.json"), p)
    return augment_loop_carried(g) if augmented else g


@pytest.fixture
def toy5() -> Processor:
    return machine("toy5")


@pytest.fixture
def g4(toy5) -> LoopGraph:
    return loop("g4", toy5)


@pytest.fixture
def g4a(toy5) -> LoopGraph:
    return loop("g4", toy5, augmented=True)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
