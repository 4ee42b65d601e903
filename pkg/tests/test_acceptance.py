"""One test per acceptance criterion; each prints a PASS/FAIL line."""
import numpy as np
import pytest

from hstoda.verify import SUITE

from conftest import ACCEPTANCE_LINES

SEED = 0


@pytest.mark.parametrize("key,check", SUITE, ids=[f"criterion_{k}_{fn.__name__}" for k, fn in SUITE])
def test_criterion(key, check):
    res = check(np.random.default_rng([SEED, int(key)]))
    line = f"criterion {key}: {res.line()}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert res.passed, res.detail
