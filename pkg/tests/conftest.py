"""Collects acceptance-criterion outcomes and prints them after the run."""

_criteria = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _criteria.append((props["criterion"], report.passed, props.get("measured", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, measured in sorted(_criteria, key=lambda c: int(c[0].split()[0][1:])):
        status = "PASS" if passed else "FAIL"
        line = f"{status}  {label}"
        if measured:
            line += f"  [{measured}]"
        terminalreporter.write_line(line)
