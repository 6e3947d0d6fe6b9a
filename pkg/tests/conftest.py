import pytest

# criterion number -> (verdict, detail), filled in as acceptance tests finish
ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def detail(request):
    """Attach a one-line measurement summary to the running criterion test."""

    def note(text: str) -> None:
        request.node.criterion_detail = text

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    n = marker.args[0]
    ok = rep.when == "call" and rep.passed
    text = getattr(item, "criterion_detail", "")
    if not ok and rep.longrepr is not None:
        text = (text + " | " if text else "") + str(rep.longrepr).strip().splitlines()[-1][:160]
    if n not in ACCEPTANCE or not ok:
        ACCEPTANCE[n] = ("PASS" if ok else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {verdict}  {text}")
