import random

import pytest

from coopnet.identity import NULL, generate_keypair


@pytest.fixture
def keys():
    """Ten deterministic keypairs (real Ed25519)."""
    return [generate_keypair(i) for i in range(10)]


@pytest.fixture
def fast_keys():
    return [generate_keypair(i, NULL) for i in range(300)]


@pytest.fixture
def rng():
    return random.Random(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; printed again in the terminal summary."""
    def emit(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
