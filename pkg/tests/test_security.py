from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pracsim.security import (
    ActBudget,
    PracParams,
    PrfmParams,
    SweepGrid,
    is_secure_prac,
    is_secure_prfm,
    max_act_budget,
    max_activations_prac,
    max_activations_prfm,
    prac_act_budget,
    prac_trajectory,
    prfm_trajectory,
    recinit_series,
    secure_abo_th,
    secure_rfm_th,
    sweep,
    wave_trajectory,
)
from pracsim.timing import ConfigError, preset

APP = preset("analysis-appendix")
PRAC_T = preset("ddr5-3200an-prac")


# ---------------------------------------------------------------- trajectories

def test_prfm_single_row_threshold_one():
    t = prfm_trajectory(1, PrfmParams(1))
    assert t.sizes == (1, 0)


def test_prfm_eight_rows_threshold_four():
    # frozen from the event-driven oracle (attack module reproduces it)
    t = prfm_trajectory(8, PrfmParams(4))
    assert t.sizes == (8, 6, 5, 4, 3, 2, 1, 1, 1, 1, 0)


def test_prfm_threshold_infinite_is_constant():
    t = prfm_trajectory(5, PrfmParams(10**12), max_steps=20)
    assert set(t.sizes) == {5}
    assert len(t.sizes) == 21


def test_prac_lone_row_refreshed_by_first_recovery():
    # divisor 1: the recovery follows every eligible activation
    p = PracParams(abo_th=50, bo_n_refs=4, bo_n_acts=1)
    t = replace(preset("ddr5-3200an-base"), tABO_ACT=10_000)
    traj = prac_trajectory(1, p, t)
    assert traj.sizes == (1, 0)


def test_prac_divisor_from_paper_values():
    p = PracParams(abo_th=50, bo_n_refs=1, bo_n_acts=1)
    assert p.divisor(PRAC_T) == 1 + 180 // 52  # = 4


def test_prac_sixteen_rows_divisor_four():
    p = PracParams(abo_th=50, bo_n_refs=4, bo_n_acts=1)
    traj = prac_trajectory(16, p, PRAC_T)
    assert traj.sizes == (16, 0)


def test_pracstep_variant_uses_count_divisor():
    p = PracParams(abo_th=50, bo_n_refs=4, bo_n_acts=4)
    step = prac_trajectory(64, p, PRAC_T, model="pracstep")
    ref = wave_trajectory(64, 4, 8)
    assert step.sizes == ref.sizes


def test_unknown_model_rejected():
    with pytest.raises(ConfigError):
        prac_trajectory(4, PracParams(10), PRAC_T, model="nonsense")


@given(b0=st.integers(1, 256), th=st.integers(1, 32))
@settings(max_examples=200, deadline=None)
def test_cumulative_form_equals_bank_counter_step_form(b0, th):
    traj = prfm_trajectory(b0, PrfmParams(th), max_steps=5000)
    stepped = recinit_series(b0, th, len(traj.sizes) - 1)
    assert tuple(stepped) == traj.sizes


@given(b0=st.integers(1, 300), removed=st.sampled_from([1, 2, 4]),
       divisor=st.integers(1, 12))
@settings(max_examples=200, deadline=None)
def test_trajectories_monotone_nonincreasing(b0, removed, divisor):
    traj = wave_trajectory(b0, removed, divisor, max_steps=5000)
    assert all(a >= b for a, b in zip(traj.sizes, traj.sizes[1:]))


def test_param_validation():
    with pytest.raises(ConfigError):
        PrfmParams(0)
    with pytest.raises(ConfigError):
        PracParams(abo_th=10, bo_n_refs=0)
    with pytest.raises(ConfigError):
        PracParams(abo_th=10, bo_n_refs=3)
    with pytest.raises(ConfigError):
        PracParams(abo_th=0)


# ---------------------------------------------------------------- budgets

def test_budget_appendix_numbers_exact():
    b = max_act_budget(APP, PrfmParams(6))
    assert b.d_allref == 2_420_475_000                    # ~2.42 ms
    assert APP.tREFW - b.d_allref == 29_579_525_000       # ~29.58 ms
    assert b.t_rfm_period == 577_000                      # 577 ns exact
    assert b.max_rfm == 51_264
    assert b.max_act == 307_584                           # ~307,580


def test_budget_other_thresholds():
    b = max_act_budget(APP, PrfmParams(5))
    assert b.t_rfm_period == 5 * 47_000 + 295_000
    assert b.max_act == (29_579_525_000 // b.t_rfm_period) * 5


def test_prac_budget_period():
    p = PracParams(abo_th=60, bo_n_refs=4, bo_n_acts=1)
    b = prac_act_budget(PRAC_T, p)
    assert b.t_rfm_period == 4 * 52_000 + 4 * 350_000
    assert b.max_act == (29_579_525_000 // b.t_rfm_period) * 4


# ---------------------------------------------------------------- verdicts

def test_prfm_secure_at_64_for_thresholds_up_to_five():
    for th in range(1, 6):
        assert is_secure_prfm(64, PrfmParams(th), APP).secure


def test_prfm_insecure_at_64_for_threshold_seven():
    # frozen witness from the vectorized scan
    v = is_secure_prfm(64, PrfmParams(7), APP)
    assert not v.secure
    assert v.witness_b0 == 9520


def test_prfm_secure_at_32_threshold_three():
    assert is_secure_prfm(32, PrfmParams(3), APP).secure


def test_prfm_insecure_at_32_threshold_four():
    v = is_secure_prfm(32, PrfmParams(4), APP)
    assert not v.secure
    assert v.witness_b0 == 3876


def test_nrh_one_insecure_for_any_config():
    for th in (1, 2, 6, 80):
        v = is_secure_prfm(1, PrfmParams(th), APP)
        assert not v.secure
        assert v.witness_b0 == 1  # one activation precedes any preventive refresh


def test_prac_most_aggressive_boundary():
    p = PracParams(abo_th=6, bo_n_refs=4, bo_n_acts=1)
    for n in (10, 11, 12, 16, 32, 64, 128, 1024):
        assert is_secure_prac(n, p, PRAC_T).secure
    for n in (2, 5, 8, 9):
        v = is_secure_prac(n, p, PRAC_T)
        assert not v.secure
        assert v.witness_b0 == 1


def test_prac_priming_alone_breaks_low_thresholds():
    v = is_secure_prac(5, PracParams(abo_th=9, bo_n_refs=4), PRAC_T)
    assert not v.secure and v.witness_b0 == 1


def test_anti_monotonicity_of_security():
    configs = [(PrfmParams(th), is_secure_prfm) for th in (2, 5, 7, 13, 80)]
    for p, fn in configs:
        prev = None
        for n in range(1, 140, 7):
            cur = fn(n, p, APP).secure
            if prev is not None and prev:
                assert cur, f"secure at {n - 7} but insecure at {n} for {p}"
            prev = cur


# ------------------------------------------------------- max activation counts

def test_prac_max_activations_most_aggressive_is_nine():
    p = PracParams(abo_th=6, bo_n_refs=4, bo_n_acts=1)
    assert max_activations_prac(p, PRAC_T) == 9


def test_prfm_max_count_minimal_at_threshold_one():
    for b0 in (1, 7, 64, 256):
        assert max_activations_prfm(PrfmParams(1), APP, b0) == 1


def test_prfm_max_count_matches_first_zero():
    p = PrfmParams(4)
    traj = prfm_trajectory(8, p)
    assert max_activations_prfm(p, APP, 8) == traj.first_zero == 10


def test_secure_threshold_derivations():
    assert secure_rfm_th(64, APP) == 6
    assert secure_rfm_th(32, APP) == 3
    assert secure_rfm_th(16, APP) == 1
    assert secure_abo_th(10, PRAC_T) == 6
    assert secure_abo_th(16, PRAC_T) == 12


# ---------------------------------------------------------------- sweep

def test_sweep_prac_minimum_cell_is_nine():
    rows = sweep(SweepGrid("prac"), PRAC_T)
    refs4 = [r for r in rows if r[2] == 4]
    assert min(r[3] for r in refs4) == 9
    cell = [r for r in refs4 if r[1] == 6][0]
    assert cell[3] == 9 and cell[4] == 10


def test_sweep_prfm_threshold_80_reaches_past_512():
    rows = sweep(SweepGrid("prfm", thresholds=(80,)), APP)
    assert max(r[3] for r in rows) >= 512  # insecure for every n_rh up to at least 512
    # the budget caps the largest decoy sets: huge sets burn the window early
    assert [r for r in rows if r[2] == 65536] == []


def test_sweep_empty_grid_rejected():
    with pytest.raises(ConfigError):
        sweep(SweepGrid("prfm", thresholds=()), APP)


def test_sweep_grid_order_invariance():
    a = sweep(SweepGrid("prfm", thresholds=(4, 2, 8), b0_values=(16, 4)), APP)
    b = sweep(SweepGrid("prfm", thresholds=(8, 4, 2), b0_values=(4, 16)), APP)
    assert a == b


def test_experimental_postponement_slack_only_weakens():
    p = PrfmParams(4)
    base = prfm_trajectory(8, p)
    slacked = prfm_trajectory(8, p, postpone_slack_acts=10 * 4)
    assert slacked.first_zero >= base.first_zero
    assert all(a >= b for a, b in zip(slacked.sizes, base.sizes))
