import time

SESSION_START = time.monotonic()


def pytest_terminal_summary(terminalreporter):
    import test_acceptance as acc

    if not acc.RESULTS:
        return
    elapsed = time.monotonic() - SESSION_START
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        ok, detail = acc.RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    terminalreporter.write_line(f"suite wall time {elapsed:.0f} s (budget {acc.SUITE_BUDGET_S} s)")
