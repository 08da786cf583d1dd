import pytest

from gradient_cases import CASES
from oracles import fd_gradient_error

# a check that skipped most of its probes at PReLU kinks would prove little
MIN_VALID_PROBES = 50


@pytest.mark.parametrize("name", sorted(CASES))
def test_matches_finite_differences(name):
    fn, tensors, kinks = CASES[name]()
    stats = {}
    err = fd_gradient_error(fn, tensors, kinks=kinks, stats=stats)
    valid = stats["probed"] - stats["skipped"]
    assert valid >= MIN_VALID_PROBES, stats
    assert err < 1e-4, f"{name}: relative error {err:.2e} over {valid} coordinates"
