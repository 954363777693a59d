from pathlib import Path

import pytest

from minisol.cli import load
from minisol.solver import SolverConfig

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
CORPUS_FILES = sorted(CORPUS.glob("*.msol"))


@pytest.fixture(scope="session")
def solver() -> SolverConfig:
    cfg = SolverConfig()
    cfg.resolve()
    return cfg


@pytest.fixture(scope="session")
def erc20():
    return load(str(CORPUS / "erc20.msol"))


@pytest.fixture(scope="session")
def erc20_auto():
    return load(str(CORPUS / "erc20_auto.msol"))


@pytest.fixture(scope="session")
def nested():
    return load(str(CORPUS / "nested.msol"))


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = getattr(rep, "nodeid", "").rsplit("::", 1)[-1]
            if rep.when == "call" or outcome == "error":
                if name.startswith("test_criterion_"):
                    n = int(name.split("_")[2])
                    rows.append((n, "PASS" if outcome == "passed" else "FAIL", name))
    if rows:
        terminalreporter.section("acceptance criteria")
        for n, status, name in sorted(rows):
            terminalreporter.write_line(f"criterion {n}: {status}  ({name})")
