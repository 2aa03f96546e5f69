import mpmath
import numpy as np
import pytest

from maassdyn.spectral import (
    WORKERS_ENV,
    RefinementError,
    find_candidates,
    hurwitz_tail,
    mayer_oracle,
    refine,
    scan,
    worker_count,
)


@pytest.mark.parametrize("sigma", [2.5, mpmath.mpc(1, 19), mpmath.mpc(1.7, -4)])
def test_hurwitz_tail_matches_mpmath(sigma):
    with mpmath.workdps(40):
        val, bound = hurwitz_tail(sigma, 2)
        ref = mpmath.zeta(sigma, 2)
        assert abs(val - ref) <= max(bound, mpmath.mpf(10) ** -35)
        assert bound < 1e-25


def test_candidate_rule():
    t = np.linspace(0, 1, 11)
    v_shape = np.abs(t - 0.52) + 0.0
    smooth = (t - 0.5) ** 2 + 1.0
    assert find_candidates(t, v_shape)[0] == [0.5]
    assert find_candidates(t, smooth)[0] == []


def test_scan_rejects_bad_step(modular):
    with pytest.raises(ValueError):
        scan(modular.op, 9, 10, 0.0)
    with pytest.raises(ValueError):
        scan(modular.op, 9, 10, -0.1)


def test_scan_is_deterministic_across_workers(modular):
    a = scan(modular.op, 9.4, 9.6, 0.02, N=24, workers=1)
    b = scan(modular.op, 9.4, 9.6, 0.02, N=24, workers=3)
    assert a.to_csv() == b.to_csv()
    assert len(a.candidates) == 1 and abs(a.candidates[0] - 9.5337) < 0.02


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert worker_count() == 3
    monkeypatch.setenv(WORKERS_ENV, "0")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv(WORKERS_ENV)
    assert worker_count(2) == 2


def test_refine_without_zero_fails(modular):
    with pytest.raises(RefinementError):
        refine(modular.op, 9.2, N=24, width=0.01)


def test_refinement_is_stable_in_N(modular_eigen, modular):
    _, r40 = modular_eigen
    r32 = refine(modular.op, 9.5337, N=32)
    assert abs(r32.t - r40.t) < 1e-6


def test_mayer_factorization():
    res = mayer_oracle(0.5 + 9.5j, order=24)
    assert abs(res.det_square - res.product) < 1e-12 * max(1.0, abs(res.det_square))
    assert res.tail_bound < 1e-25


def test_mayer_vanishes_at_eigenvalue(modular_eigen):
    _, r = modular_eigen
    near = abs(mayer_oracle(0.5 + 1j * r.t, order=40).det_square)
    away = abs(mayer_oracle(0.5 + 9.2j, order=40).det_square)
    assert near < 1e-6 * away
