"""Shared fixtures plus a per-criterion PASS/FAIL summary for the acceptance suite."""

from __future__ import annotations

import pytest

from sentgraph.corpus import Sentence, SentimentTuple, Span

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _criteria.setdefault(number, {"title": title, "outcomes": []})


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for number, entry in _criteria.items():
        if report.keywords.get(f"criterion_{number}"):
            entry["outcomes"].append(report.outcome)


@pytest.hookimpl(tryfirst=True)
def pytest_itemcollected(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.keywords[f"criterion_{mark.args[0]}"] = True


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status:<7} {entry['title']}")


@pytest.fixture
def moscow() -> Sentence:
    tokens = "Moscow government has expressed the wish to import the Mongolian meat .".split()
    gold = [SentimentTuple(Span(0, 1), Span(3, 5), Span(7, 10), "Neutral")]
    return Sentence("moscow", tokens, gold=gold)
