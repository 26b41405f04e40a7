import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bnbtransfer.bnb import run_bnb
from bnbtransfer.errors import DimensionError, InvalidScenario
from bnbtransfer.model import (
    Assignment, InstanceMeta, MinlpInstance, ObjectiveSpec, PowerCapConstraint, Sense, bits_for_bound,
    evaluate_assignment, gen_cloudran_instance, gen_cloudran_scenario, gen_toy_milp,
    linear_fronthaul_powers, pathloss_db, toy_integer_values,
)
from bnbtransfer.persist import instance_bytes

from conftest import single_link_instance
from oracles import toy_enumeration


def test_linear_fronthaul_powers_for_ten_rrhs():
    assert linear_fronthaul_powers(10).tolist() == [6, 7, 8, 9, 10, 11, 12, 13, 14, 15]


def test_sinr_db_converts_to_linear():
    sc = gen_cloudran_scenario(0, 3, 2, 1, 4.0)
    assert sc.sinr_target == pytest.approx(10 ** 0.4)
    assert sc.sinr_target == pytest.approx(2.5119, abs=1e-4)


def test_pathloss_at_one_kilometre_is_the_intercept():
    assert pathloss_db(1000.0) == pytest.approx(128.1)
    assert pathloss_db(10_000.0) == pytest.approx(128.1 + 37.6)


def test_same_seed_gives_identical_scenarios():
    a, ia = gen_cloudran_instance(3, 4, 3, 2, 2.0)
    b, ib = gen_cloudran_instance(3, 4, 3, 2, 2.0)
    assert np.array_equal(a.H, b.H) and np.array_equal(a.rrh_positions, b.rrh_positions)
    assert instance_bytes(ia) == instance_bytes(ib)


def test_different_seeds_give_different_channels():
    a, _ = gen_cloudran_instance(3, 4, 3, 2, 2.0)
    b, _ = gen_cloudran_instance(4, 4, 3, 2, 2.0)
    assert not np.array_equal(a.H, b.H)


def test_positions_stay_inside_the_square():
    sc = gen_cloudran_scenario(11, 8, 8, 1, 0.0, region_halfwidth=500.0)
    assert np.abs(sc.rrh_positions).max() <= 500 and np.abs(sc.mu_positions).max() <= 500


@pytest.mark.parametrize("bad", [[6.0, 0.0, 8.0], [6.0, -1.0, 8.0]])
def test_nonpositive_fronthaul_power_is_rejected(bad):
    with pytest.raises(InvalidScenario):
        gen_cloudran_instance(0, 3, 2, 1, 4.0, fronthaul_powers=bad)


def test_wrong_length_fronthaul_is_rejected():
    with pytest.raises(InvalidScenario):
        gen_cloudran_instance(0, 3, 2, 1, 4.0, fronthaul_powers=[6.0, 7.0])


def test_cloudran_instance_is_minimize_with_layout():
    _, inst = gen_cloudran_instance(1, 3, 2, 2, 4.0)
    assert inst.sense is Sense.MINIMIZE
    assert inst.num_binary == 3
    assert inst.num_continuous == 2 * 2 * 3 * 2
    assert inst.family == "cloudran"


def test_empty_demand_all_zero_is_feasible_with_zero_objective():
    _, inst = gen_cloudran_instance(0, 3, 0, 2, 4.0)
    ev = evaluate_assignment(inst, Assignment(np.zeros(3), np.zeros(0)))
    assert ev.feasible and ev.objective == 0.0


def test_objective_arithmetic_fronthaul_plus_transmit_power():
    # s = (1, 0, 0), P_1 = 6 W, eta = 1, ||w_1||^2 = 2
    _, inst = gen_cloudran_instance(0, 3, 1, 1, 4.0, amp_efficiency=1.0)
    w = np.zeros(inst.num_continuous)
    w[0], w[1] = 1.0, 1.0  # RRH 0's complex weight for user 0 is 1 + 1j
    ev = evaluate_assignment(inst, Assignment(np.array([1.0, 0.0, 0.0]), w))
    assert ev.objective == pytest.approx(8.0)


def test_sinr_violation_is_reported():
    inst = single_link_instance(h=1.0, gamma=1.0)
    # SINR = |w|^2 / 1; w = 0.5 gives 0.25 < 1
    ev = evaluate_assignment(inst, Assignment(np.array([1.0]), np.array([0.5, 0.0])))
    assert not ev.feasible and "sinr[0]" in ev.violations
    ok = evaluate_assignment(inst, Assignment(np.array([1.0]), np.array([1.0, 0.0])))
    assert ok.feasible


def test_dimension_mismatch_raises():
    inst = single_link_instance()
    with pytest.raises(DimensionError):
        evaluate_assignment(inst, Assignment(np.zeros(2), np.zeros(2)))


@given(l_idx=st.integers(0, 3), mag=st.floats(1e-2, 1.0), phase=st.floats(0, 2 * math.pi))
def test_switched_off_rrh_with_nonzero_beam_violates_power_cap(l_idx, mag, phase):
    # any beam power above the feasibility tolerance must be flagged
    re, im = mag * math.cos(phase), mag * math.sin(phase)
    _, inst = gen_cloudran_instance(2, 4, 2, 1, 4.0)
    cap = inst.power_caps[l_idx]
    w = np.zeros(inst.num_continuous)
    w[cap.indices[0]], w[cap.indices[1]] = re, im
    a = np.ones(4)
    a[l_idx] = 0.0
    ev = evaluate_assignment(inst, Assignment(a, w))
    assert f"power_cap[{l_idx}]" in ev.violations


def test_instance_rejects_out_of_range_indices():
    obj = ObjectiveSpec(np.zeros(1), np.zeros(1), np.zeros(1))
    with pytest.raises(DimensionError):
        MinlpInstance(Sense.MINIMIZE, 1, 1, obj, (PowerCapConstraint(0, np.array([3]), 1.0),),
                      np.zeros(1), np.ones(1), InstanceMeta("x", 0, "toy"))
    with pytest.raises(DimensionError):
        MinlpInstance(Sense.MINIMIZE, 0, 1, ObjectiveSpec(np.zeros(0), np.zeros(1), np.zeros(1)),
                      (), np.zeros(1), np.ones(1), InstanceMeta("x", 0, "toy"))


# ------------------------------------------------------------------ toy MILPs


def test_bits_for_bound():
    assert [bits_for_bound(u) for u in (1, 2, 3, 4, 7, 8)] == [1, 2, 2, 3, 3, 4]


def test_toy_generator_is_deterministic():
    assert instance_bytes(gen_toy_milp(5, 3, 4)) == instance_bytes(gen_toy_milp(5, 3, 4))


def test_toy_binary_encoding_round_trips():
    inst = gen_toy_milp(0, 3, 1, upper=5)
    bits = inst.meta.params["bits"]
    assert inst.num_binary == 3 * bits
    a = np.array([1, 0, 1, 0, 1, 1, 0, 0, 1], float)
    assert toy_integer_values(inst, a).tolist() == [5.0, 6.0, 4.0]


def test_toy_with_two_integers_matches_enumeration():
    for seed in range(10):
        inst = gen_toy_milp(seed, 2, 3)
        opt, _ = toy_enumeration(inst)
        tr = run_bnb(inst)
        assert opt is not None
        assert tr.best_objective == pytest.approx(opt, rel=1e-6, abs=1e-6)


def test_unconstrained_nonnegative_minimize_has_all_zero_optimum():
    for seed in range(10):
        base = gen_toy_milp(seed, 3, 0, n_cont=1)
        obj = base.objective
        inst = replace(base, objective=ObjectiveSpec(np.abs(obj.bin_linear) + 1,
                                                     np.abs(obj.cont_linear),
                                                     obj.cont_quadratic))
        tr = run_bnb(inst)
        assert tr.best_objective == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(tr.best_values.binaries, 0)


def test_toy_n_int_precondition():
    with pytest.raises(ValueError):
        gen_toy_milp(0, 0, 1)
    with pytest.raises(ValueError):
        gen_toy_milp(0, 21, 1)


@given(seed=st.integers(0, 10_000), n_int=st.integers(1, 4), n_cons=st.integers(0, 4))
def test_toy_instances_are_feasible(seed, n_int, n_cons):
    inst = gen_toy_milp(seed, n_int, n_cons)
    opt, _ = toy_enumeration(inst)
    assert opt is not None


@given(seed=st.integers(0, 10_000))
def test_no_feasible_assignment_beats_the_optimum(seed):
    """Random feasible points never score below the enumerated optimum."""
    inst = gen_toy_milp(seed, 2, 2)
    opt, _ = toy_enumeration(inst)
    rng = np.random.default_rng(seed)
    for _ in range(50):
        a = rng.integers(0, 2, inst.num_binary).astype(float)
        y = rng.uniform(0, 3, 1)
        ev = evaluate_assignment(inst, Assignment(a, y))
        if ev.feasible:
            assert ev.objective >= opt - 1e-9


def test_sinr_is_unchanged_by_noise_normalization():
    sc, inst = gen_cloudran_instance(4, 2, 1, 1, 0.0)
    con = inst.constraints[0]
    w = np.array([0.3, -0.1, 0.2, 0.4])
    z = w[0::2] + 1j * w[1::2]
    raw = abs(np.conj(sc.H[0]) @ z) ** 2 / sc.noise_power
    assert con.sinr(w) == pytest.approx(raw, rel=1e-9)
    assert math.isclose(con.noise_std, 1.0)
