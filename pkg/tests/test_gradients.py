"""Finite-difference spot checks; the full 20-seed sweep lives in the
acceptance suite and behind the gradcheck CLI command."""

import pytest

from gatpad.verification import _CHECKS, GRADCHECK_TOLERANCE, run_gradient_suite


@pytest.mark.parametrize("name", sorted(_CHECKS))
def test_op_gradient_matches_finite_differences(name):
    import numpy as np

    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(1000 * seed + hash(name) % 997)
        worst = max(worst, _CHECKS[name](rng))
    assert worst <= GRADCHECK_TOLERANCE, f"{name}: rel err {worst:.3e}"


def test_suite_runner_reports_every_op():
    results = run_gradient_suite(seeds=1)
    assert set(results) == set(_CHECKS)
    assert all(v <= GRADCHECK_TOLERANCE for v in results.values())
