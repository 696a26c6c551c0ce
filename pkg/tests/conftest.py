import functools
import time

import pytest

from fastroot.verify import ScanMode, catalog_entry, catalog_scheme, scan

SCAN_SECONDS = {}
ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def catalog_report(entry_id: str, stride: int = 1):
    """Scan of a catalog entry shared by every test module in the session.

    Entries with a published restricted domain are scanned on that domain (with
    the outside peak) unless a stride is requested.  Exhaustive scans run on one
    thread and their wall time is kept in ``SCAN_SECONDS``.
    """
    entry = catalog_entry(entry_id)
    scheme = catalog_scheme(entry)
    if stride > 1:
        return scan(scheme, mode=ScanMode.strided(stride))
    dom = entry.get("restricted")
    mode = ScanMode.restricted(dom.get("lo"), dom.get("hi")) if dom else ScanMode()
    t = time.perf_counter()
    rep = scan(scheme, mode=mode, threads=1)
    SCAN_SECONDS[entry_id] = time.perf_counter() - t
    return rep


@pytest.fixture(scope="session")
def reports():
    return catalog_report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
