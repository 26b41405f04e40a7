import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bnbtransfer.errors import InvalidFixings
from bnbtransfer.model import (
    Assignment, InstanceMeta, LinearConstraint, MinlpInstance, ObjectiveSpec, Sense,
    evaluate_assignment, gen_cloudran_instance, gen_toy_milp,
)
from bnbtransfer.relax import (
    Fixings, RelaxStatus, SolveCache, build_relaxation, cached_solve, solve_relaxation,
)

from conftest import single_link_instance


def _solve(inst, fix=()):
    return solve_relaxation(build_relaxation(inst, fix))


def test_single_link_with_rrh_on_has_unit_beam():
    # h = 1, gamma = 1, unit noise: the cheapest beam has |w| = 1
    inst = single_link_instance(h=1.0, gamma=1.0)
    res = _solve(inst, {0: 1})
    assert res.optimal and res.is_integral
    w = res.values.continuous
    assert np.hypot(*w) == pytest.approx(1.0, abs=1e-5)
    assert res.objective == pytest.approx(6.0 + 1.0, abs=1e-5)


def test_single_link_root_relaxes_switch_to_half():
    # |w|^2 <= 2 s and |w|^2 >= 1 make s = 1/2 optimal for 6 s + |w|^2
    inst = single_link_instance(h=1.0, gamma=1.0, cap=2.0)
    res = _solve(inst)
    assert res.values.binaries[0] == pytest.approx(0.5, abs=1e-5)
    assert res.objective == pytest.approx(4.0, abs=1e-5)
    assert not res.is_integral


def test_unreachable_sinr_is_infeasible():
    inst = single_link_instance(h=1.0, gamma=3.0, cap=2.0)
    assert _solve(inst, {0: 1}).status is RelaxStatus.INFEASIBLE


def test_switched_off_rrh_pins_its_beam_to_zero():
    _, inst = gen_cloudran_instance(5, 3, 1, 2, 0.0)
    prog = build_relaxation(inst, {1: 0})
    cols = inst.num_binary + inst.power_caps[1].indices
    assert np.all(prog.lo[cols] == 0) and np.all(prog.hi[cols] == 0)
    res = solve_relaxation(prog)
    if res.optimal:
        assert np.allclose(res.values.continuous[inst.power_caps[1].indices], 0)


def test_empty_fixings_give_unit_box():
    _, inst = gen_cloudran_instance(5, 3, 2, 1, 0.0)
    prog = build_relaxation(inst, ())
    assert np.all(prog.lo[:3] == 0) and np.all(prog.hi[:3] == 1)
    assert len(prog.socs) == 2 + 3


def test_toy_relaxation_is_an_lp():
    prog = build_relaxation(gen_toy_milp(0, 2, 3), ())
    assert prog.is_lp and not prog.socs


def test_lp_relaxation_maximize():
    # max x1 + x2 s.t. x1 + x2 <= 1.5 over binaries relaxed to [0, 1]
    inst = MinlpInstance(
        Sense.MAXIMIZE, 2, 0, ObjectiveSpec(np.ones(2), np.zeros(0), np.zeros(0)),
        (LinearConstraint(np.ones(2), np.zeros(0), 1.5),), np.zeros(0), np.zeros(0),
        InstanceMeta("lp-max", 0, "toy"),
    )
    res = _solve(inst)
    assert res.objective == pytest.approx(1.5)
    assert not res.is_integral


@pytest.mark.parametrize("bad", [{0: 2}, {-1: 0}, [(0, 1), (0, 0)]])
def test_invalid_fixings_values(bad):
    with pytest.raises(InvalidFixings):
        Fixings(bad)


def test_out_of_range_fixing_index():
    inst = single_link_instance()
    with pytest.raises(InvalidFixings):
        build_relaxation(inst, {3: 1})


def test_fixings_key_round_trip_and_order():
    f = Fixings({3: 1, 0: 0})
    assert f.key() == "0:0,3:1"
    assert Fixings.from_key(f.key()) == f
    assert Fixings.from_key("") == Fixings()


def test_cache_counts_and_returns_identical_results(small_cloudran):
    _, inst = small_cloudran
    cache = SolveCache()
    first = cached_solve(cache, inst, {0: 1})
    for _ in range(3):
        again = cached_solve(cache, inst, Fixings({0: 1}))
        assert again is first
    assert (cache.hits, cache.misses) == (3, 1)


def test_cache_persists_across_instances(tmp_path, small_cloudran):
    _, inst = small_cloudran
    path = tmp_path / "cache.jsonl"
    a = SolveCache(path)
    r1 = cached_solve(a, inst, {1: 0})
    cached_solve(a, inst, ())
    b = SolveCache(path)
    assert len(b) == 2
    r2 = cached_solve(b, inst, {1: 0})
    assert (b.hits, b.misses) == (1, 0)
    assert r2.objective == r1.objective
    assert np.array_equal(r2.values.continuous, r1.values.continuous)


def test_cache_skips_corrupt_lines(tmp_path, small_cloudran):
    _, inst = small_cloudran
    path = tmp_path / "cache.jsonl"
    cached_solve(SolveCache(path), inst, ())
    with open(path, "a") as fh:
        fh.write('{"instance": "x", "fix\n')
    assert len(SolveCache(path)) == 1


def test_cache_records_are_json_lines(tmp_path, small_cloudran):
    _, inst = small_cloudran
    path = tmp_path / "cache.jsonl"
    cached_solve(SolveCache(path), inst, {2: 1})
    rec = json.loads(path.read_text().splitlines()[0])
    assert rec["fixings"] == "2:1" and rec["instance"] == inst.instance_id


# ------------------------------------------------------------------ properties


def _random_fixings(rng, nb, depth):
    idx = rng.choice(nb, size=depth, replace=False)
    return {int(i): int(rng.integers(0, 2)) for i in idx}


@given(seed=st.integers(0, 10_000), depth=st.integers(0, 3))
def test_toy_relaxation_bounds_every_completion(seed, depth):
    """The relaxed value is no better than any feasible integer completion."""
    inst = gen_toy_milp(seed, 2, 2)
    rng = np.random.default_rng(seed)
    fix = _random_fixings(rng, inst.num_binary, depth)
    res = _solve(inst, fix)
    for _ in range(30):
        a = rng.integers(0, 2, inst.num_binary).astype(float)
        for i, v in fix.items():
            a[i] = v
        y = rng.uniform(inst.cont_lower, inst.cont_upper)
        ev = evaluate_assignment(inst, Assignment(a, y))
        if ev.feasible:
            assert res.optimal
            assert ev.objective >= res.objective - 1e-7


@given(seed=st.integers(0, 10_000), depth=st.integers(0, 2))
def test_fixing_more_never_improves_the_bound_toy(seed, depth):
    inst = gen_toy_milp(seed, 2, 3)
    rng = np.random.default_rng(seed)
    fix = _random_fixings(rng, inst.num_binary, depth + 1)
    parent = dict(list(fix.items())[:-1])
    rp, rc = _solve(inst, parent), _solve(inst, fix)
    if rc.optimal:
        assert rp.optimal and rc.objective >= rp.objective - 1e-7


@given(seed=st.integers(0, 500), l=st.integers(0, 3), val=st.integers(0, 1))
def test_fixing_more_never_improves_the_bound_cloudran(seed, l, val):
    _, inst = gen_cloudran_instance(seed, 4, 2, 1, 0.0)
    rp, rc = _solve(inst), _solve(inst, {l: val})
    if rc.optimal:
        assert rp.optimal
        assert rc.objective >= rp.objective - 1e-6 * max(1.0, abs(rp.objective))


@given(seed=st.integers(0, 500))
def test_integral_relaxation_is_feasible(seed):
    _, inst = gen_cloudran_instance(seed, 3, 2, 1, 0.0)
    res = _solve(inst, {0: 1, 1: 1, 2: 1})
    if res.optimal:
        assert res.is_integral
        ev = evaluate_assignment(inst, res.values)
        assert ev.feasible, ev.violations
        assert ev.objective == pytest.approx(res.objective, rel=1e-6)
