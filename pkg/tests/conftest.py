from collections import defaultdict

_criteria = defaultdict(list)


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criteria[props["criterion"]].append((props.get("label", ""), report.passed, report.nodeid))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_criteria):
        parts = _criteria[num]
        ok = all(passed for _, passed, _ in parts)
        labels = "; ".join(dict.fromkeys(label for label, _, _ in parts))
        failed = [nodeid.split("::")[-1] for _, passed, nodeid in parts if not passed]
        line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {labels}"
        if failed:
            line += f"  [failed: {', '.join(failed)}]"
        tr.write_line(line)
