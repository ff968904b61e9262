"""Shared test plumbing: the acceptance-criteria report.

test_acceptance.py records one line per criterion through
record_criterion; the terminal-summary hook prints the collected lines
after the run so every criterion shows a visible PASS or FAIL verdict
regardless of output capturing.
"""

_CRITERIA = {}


def record_criterion(cid, label, passed, detail=""):
    text = "[%s] %s: %s" % (cid, label, "PASS" if passed else "FAIL")
    if detail:
        text += " (%s)" % detail
    _CRITERIA[cid] = text


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[cid])
