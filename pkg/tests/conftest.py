from __future__ import annotations

import pytest

from gsmollifier.classify import classify_grid
from gsmollifier.grid import make_grid
from gsmollifier.mollify import default_grid
from gsmollifier.windows import build_window_pair


@pytest.fixture(scope="session")
def grid1():
    return make_grid(1, 16.0, 4096)


@pytest.fixture(scope="session")
def pairs1(grid1):
    return {L: build_window_pair(1, L, grid1) for L in (0, 1, 2)}


@pytest.fixture(scope="session")
def fine_grid():
    return default_grid(1)


@pytest.fixture(scope="session")
def fine_pair(fine_grid):
    return build_window_pair(1, 1, fine_grid)


@pytest.fixture(scope="session")
def fine_pair2(fine_grid):
    return build_window_pair(1, 2, fine_grid)


@pytest.fixture(scope="session")
def cgrid():
    return classify_grid(1)


@pytest.fixture(scope="session")
def cpair(cgrid):
    return build_window_pair(1, 1, cgrid)


@pytest.fixture(scope="session")
def grid2():
    return make_grid(2, 4.0, 1024)


@pytest.fixture(scope="session")
def pair2(grid2):
    return build_window_pair(2, 1, grid2)


@pytest.fixture(scope="session")
def verdict_cache(cgrid, cpair):
    """Memoised corpus verdicts on the classification grid (d=1, Lp(2) by default)."""
    import math

    from gsmollifier import classify as cls
    from gsmollifier.corpus import make
    from gsmollifier.norms import Lp
    from gsmollifier.weights import builtin_system

    store = {}

    def get(name, system, space_class, p=2.0):
        key = (name, system, space_class, p)
        if key not in store:
            f = make(name, cgrid)
            W = builtin_system(system)
            nd = Lp(math.inf if p == "inf" else p)
            if space_class == "membership":
                store[key] = cls.verdict_membership(f, cpair, W, nd)
            elif space_class == "convolutor":
                store[key] = cls.verdict_convolutor(f, cpair, W, nd)
            else:
                store[key] = cls.verdict_multiplier(f, cpair, W, None, nd)
        return store[key]

    return get


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, clause, ok, detail)`` for the end-of-run summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(criterion: int, clause: str, ok: bool, detail: str = "") -> bool:
        store.append((criterion, clause, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, [])
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted({c for c, *_ in store}):
        clauses = [(name, ok, detail) for c, name, ok, detail in store if c == crit]
        failed = [f"{name} ({detail})" for name, ok, detail in clauses if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {crit}: {status} [{sum(ok for _, ok, _ in clauses)}/{len(clauses)} clauses]"
        if failed:
            line += " failing: " + "; ".join(failed)
        terminalreporter.write_line(line)
