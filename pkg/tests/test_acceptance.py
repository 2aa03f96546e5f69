import json

import pytest

from maassdyn.acceptance import CHECKS

LINES: list[str] = []


@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i}" for i in range(1, len(CHECKS) + 1)])
def test_criterion(check):
    res = check()
    LINES.append(res.line())
    print(res.line())
    print(json.dumps(res.to_dict()["details"], default=str))
    assert res.passed, res.line()
