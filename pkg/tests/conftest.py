import pytest

_CRITERIA: dict[int, tuple[bool, str, str]] = {}


class CriterionRecorder:
    def __init__(self, number: int):
        self.number = number

    def __call__(self, passed: bool, title: str, detail: str) -> bool:
        _CRITERIA[self.number] = (bool(passed), title, detail)
        print(f"criterion {self.number}: {'PASS' if passed else 'FAIL'} {title}: {detail}")
        return bool(passed)


@pytest.fixture
def criterion(request):
    """Record the verdict of one numbered acceptance criterion."""
    number = request.node.get_closest_marker("criterion").args[0]
    return CriterionRecorder(number)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): numbered acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, title, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}: {detail}")
