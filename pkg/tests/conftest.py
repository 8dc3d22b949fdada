import pytest

from tabinsight.gateway import BackendProfile, Gateway, RequestCache, RequestLog, ScriptedBackend
from tabinsight.table import Table

from scripted_corpus import season_table as _season_table

EPISODE_TITLE = "List of The Real Housewives of New Jersey episodes"
EPISODE_HEADERS = ("No. overall", "No. in season", "Title", "Original air date", "U.S. viewers (millions)")
# Only episode 13's title and viewership come from the source; the rest is filler.
EPISODE_VIEWERS = ("1.02", "0.97", "1.11", "0.92", "1.05", "1.09", "1.18", "1.21", "1.15", "1.19", "1.24", "1.31", "1.40")


def episode_table() -> Table:
    rows = []
    for n, viewers in enumerate(EPISODE_VIEWERS, start=1):
        title = "Camels, Cabo & Catfights" if n == 13 else f"Episode {n}"
        rows.append((str(160 + n), str(n), title, f"Week {n}", viewers))
    return Table(EPISODE_TITLE, EPISODE_HEADERS, tuple(rows), "episodes")


@pytest.fixture
def season():
    return _season_table()


@pytest.fixture
def episodes():
    return episode_table()


def make_gateway(backends: dict, cache=True, **profile_kw) -> Gateway:
    """Gateway with one default profile per scripted backend role."""
    profiles = [BackendProfile(role, **profile_kw) for role in backends]
    return Gateway(profiles, backends, cache=RequestCache() if cache else None, log=RequestLog())


@pytest.fixture
def gateway_factory():
    return make_gateway


def scripted(rules=None, responder=None, **kw) -> ScriptedBackend:
    return ScriptedBackend(rules=rules, responder=responder, **kw)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
