from .acceptance_log import RESULTS


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        title, ok, secs, why = RESULTS[number]
        line = f"{'PASS' if ok else 'FAIL'}  [{number}] {title} ({secs:.1f} s)"
        if why:
            line += f" -- {why}"
        terminalreporter.write_line(line)
