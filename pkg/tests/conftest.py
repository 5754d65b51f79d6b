from __future__ import annotations

import sys
from pathlib import Path

import pytest

from intentmem.config import load_config
from intentmem.embedding import make_provider
from intentmem.pipeline import build_all, ingest

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def provider(cfg):
    return make_provider(cfg.provider)


@pytest.fixture(scope="session")
def golden_units():
    return ingest(DATA / "golden_traces.jsonl")


@pytest.fixture(scope="session")
def learned(golden_units, cfg, provider):
    return build_all(golden_units, cfg, learned=True, provider=provider)


@pytest.fixture(scope="session")
def raw(golden_units, cfg, provider):
    return build_all(golden_units, cfg, learned=False, provider=provider)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = mod.report_lines() if mod is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
