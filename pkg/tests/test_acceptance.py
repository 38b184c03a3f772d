"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run directly (``python3 tests/test_acceptance.py``) for just the summary lines.
"""

import json
import sys

import pytest

from cycleforge import verify
from cycleforge.simulate import threads


def _report(res, capsys):
    line = res.line() + f"  [{res.seconds:.1f}s]"
    with capsys.disabled():
        print("\n" + line)
    return line


def _check(res, capsys, budget=None):
    _report(res, capsys)
    detail = json.dumps(res.to_dict()["metrics"], default=str)[:2000]
    assert res.passed, detail
    if budget is not None:
        assert res.seconds < budget, f"took {res.seconds:.1f}s, budget {budget}s"


def test_criterion_1_apos_lyapunov_oracle(capsys):
    res = verify.criterion_1(draws=20, seed=0)
    _check(res, capsys, budget=120)
    assert res.metrics["comparisons"] == 100


def test_criterion_2_aneg_lyapunov_oracle(capsys):
    res = verify.criterion_2(draws=20, seed=0)
    _check(res, capsys)
    assert res.metrics["v11_sign_matches"] == 10


def test_criterion_3_melnikov_closed_vs_quadrature(capsys):
    res = verify.criterion_3(draws=10, seed=0)
    _check(res, capsys)
    assert res.metrics["d3_only_closed"] == pytest.approx(0.47140452, abs=1e-8)


def test_criterion_4_phi_zeroing(capsys):
    _check(verify.criterion_4(draws=10, seed=0), capsys)


def test_criterion_5_splitting_leading_term(capsys):
    _check(verify.criterion_5(), capsys)


def test_criterion_6_conjugacy(capsys):
    _check(verify.criterion_6(draws=100, seed=0), capsys)


def test_criterion_7_center_properties(capsys):
    _check(verify.criterion_7(seed=0), capsys)


def test_criterion_8_one_cycle(capsys):
    res = verify.criterion_8(workers=threads())
    _check(res, capsys, budget=60)
    assert res.metrics["xtol"] <= 1e-8


def test_criterion_9_two_cycles(capsys):
    _check(verify.criterion_9(workers=threads()), capsys)


if __name__ == "__main__":
    ok = True
    for res in verify.run_all(seed=0):
        print(res.line())
        ok = ok and res.passed
    sys.exit(0 if ok else 1)
