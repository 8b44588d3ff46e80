from math import factorial

import pytest
from hypothesis import given, settings, strategies as st

from raverify.corpus import random_system
from raverify.datalog import infer, infer_cached, is_linear, linearize, parse_text, export_text
from raverify.encoder import (
    DatalogGenerable, DatalogNotGenerable, cache_bound, compaction_q0, encode_instance,
    enumerate_guesses, goal_views, solve_via_datalog, timestamp_bound,
)
from raverify.program_ir import Cas, GoalSpec, Store, leaves, parse_system, to_lts
from raverify.reductions import dekker, prodcons
from raverify.simplified import (
    ClassViolation, Generable, check_message_generation, compaction_bound, plus,
)


def system(dis_bodies, dom=2, vars_="x, y", env=None):
    text = f"vars {vars_}; domain {dom}; regs r;"
    if env:
        text += f" env e {{ {env} }}"
    for i, body in enumerate(dis_bodies):
        text += f" dis d{i} {{ {body} }}"
    return parse_system(text)


# --------------------------------------------------------------------- bounds

def test_bound_is_sum_of_dis_sizes():
    s = system(["store x 1; store y 1; r := load x; store x r", "store x 0; skip; store y 0"])
    assert timestamp_bound(s) == 7


def test_bound_without_dis_threads():
    s = system([], env="store x 1")
    assert timestamp_bound(s) == 0


def test_dekker_bound_counts_leaves():
    s, _ = dekker()
    assert timestamp_bound(s) == sum(len(list(leaves(t.program))) for t in s.threads) == 12


def test_cache_bound_examples():
    s = system(["store x 1; store x 0; store y 1; store y 0"])
    assert compaction_q0(s) == 12 and cache_bound(s) == 288
    tiny = parse_system("vars x; domain 1; regs r; env e { skip }")
    assert compaction_q0(tiny) == 2 and cache_bound(tiny) == 8
    assert compaction_q0(s) == compaction_bound(s)


# -------------------------------------------------------------------- guesses

def lts_paths(c):
    """Paths to a dead end, plus every prefix stopping just before a CAS.
    Paths are told apart by the states they visit, not by the instructions
    they spell."""
    lts = to_lts(c)
    out = set()

    def rec(state, acc):
        succ = lts.successors(state)
        if not succ:
            out.add(acc)
        for ins, nxt in succ:
            if isinstance(ins, Cas):
                out.add(acc)
            rec(nxt, acc + ((ins, nxt),))

    rec(lts.initial, ())
    return [[ins for ins, _ in path] for path in out]


def count_guesses(s):
    """Interleavings of the per-variable write orders times CAS sources."""
    from itertools import product
    total = 0
    T = timestamp_bound(s)
    for combo in product(*(lts_paths(t.program) for t in s.threads)):
        n = 1
        ok = True
        for x in s.vars:
            per = [sum(1 for i in p if isinstance(i, (Store, Cas)) and i.var == x) for p in combo]
            if sum(per) > T:
                ok = False
            multinomial = factorial(sum(per))
            for k in per:
                multinomial //= factorial(k)
            n *= multinomial
        n *= 2 ** sum(1 for p in combo for i in p if isinstance(i, Cas))
        total += n if ok else 0
    return total


def test_single_store_has_one_guess_per_path():
    s = system(["store x r"])
    guesses = list(enumerate_guesses(s))
    assert len(guesses) == 1
    (step,) = guesses[0].threads[0]
    assert (step.kind, step.ts) == ("st", 1)


def test_goal_store_ends_every_guess():
    s, goal = dekker()
    goal_var = s.vars.index(goal.var)
    for g in enumerate_guesses(s):
        stores = [st for steps in g.threads for st in steps if st.kind == "st" and st.var == goal_var]
        for steps in g.threads:
            if any(st.kind == "st" and st.var == goal_var for st in steps):
                assert steps[-1].var == goal_var
        assert len(stores) <= 1


def test_dekker_guess_count_matches_independent_count():
    s, _ = dekker()
    assert len(list(enumerate_guesses(s))) == count_guesses(s)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 5))
def test_guess_count_on_random_systems(seed):
    s = random_system(seed, max_dis=4, n_dis=2)
    assert len(list(enumerate_guesses(s))) == count_guesses(s)


def test_loopy_dis_rejected():
    s = system(["loop { store x 1 }"])
    with pytest.raises(ClassViolation):
        list(enumerate_guesses(s))


def test_goal_views_stay_in_bounded_space():
    s = system(["store x 1; store x 0", "store y 1"])
    for g in enumerate_guesses(s):
        views = list(goal_views(g))
        for v in views:
            assert all(0 <= c <= plus(w) for c, w in zip(v, g.widths))
        assert views[0] == (0, 0)


# ------------------------------------------------------------------ instances

def test_instance_without_dis_has_all_slots_available():
    s = system([], env="store x 1")
    (g,) = list(enumerate_guesses(s))
    inst = encode_instance(s, g, GoalSpec("x", 1))
    avail = {r.head.args for r in inst.program.rules if r.head.pred == "avail" and not r.body}
    assert avail == {("x", plus(0)), ("y", plus(0))}
    assert inst.goal.pred in ("emp", "dmp")


def test_dis_cas_removes_the_slot_it_spans():
    s = system(["store x 1; cas(x, 1, 0)"])
    dis_cas = [g for g in enumerate_guesses(s)
               if any(st.kind == "cas" and st.source == "dis" for st in g.threads[0])]
    (g,) = dis_cas
    inst = encode_instance(s, g, GoalSpec("x", 0))
    avail = {r.head.args for r in inst.program.rules if r.head.pred == "avail" and not r.body}
    assert ("x", plus(1)) not in avail
    assert ("x", plus(0)) in avail and ("x", plus(2)) in avail


def test_rule_bodies_have_at_most_two_atoms():
    for seed in range(10):
        s = random_system(seed, max_dis=4)
        for g in list(enumerate_guesses(s))[:5]:
            inst = encode_instance(s, g, GoalSpec(s.vars[0], 0))
            assert max((len(r.body) for r in inst.program.rules), default=0) <= 2


def test_small_instance_round_trips_through_text():
    s = system(["r := load x; store y r"], env="store x 1")
    g = next(iter(enumerate_guesses(s)))
    inst = encode_instance(s, g, GoalSpec("y", 1))
    again = parse_text(export_text(inst.program))
    for view_goal in [inst.goal]:
        assert infer(again, view_goal) == infer(inst.program, view_goal)


# -------------------------------------------------------------------- solving

def test_dekker_generable_by_both_engines():
    s, goal = dekker()
    result = solve_via_datalog(s, goal)
    assert isinstance(result, DatalogGenerable)
    assert infer(result.instance.program, result.goal_atom)
    assert isinstance(check_message_generation(s, goal), Generable)


def test_unreachable_goal_after_full_enumeration():
    s = system(["store x 1"])
    result = solve_via_datalog(s, GoalSpec("y", 1))
    assert isinstance(result, DatalogNotGenerable)
    assert result.guesses >= 1


def test_producer_consumer_unrolled():
    s, goal = prodcons(1, 3)
    unrolled = parse_system(
        "vars x, y, z; domain 4; regs r; env e { store x 1 }"
        "dis c { r := load x; assume(r = 1); store y 1;"
        "        r := load x; assume(r = 1); store y 2 }")
    assert isinstance(solve_via_datalog(unrolled, GoalSpec("y", 2)), DatalogGenerable)
    assert isinstance(check_message_generation(unrolled, GoalSpec("y", 2)), Generable)


def test_parallel_answer_matches_serial():
    s, goal = dekker()
    one = solve_via_datalog(s, goal)
    two = solve_via_datalog(s, goal, jobs=2)
    assert one.instance.guess == two.instance.guess


def test_cache_bound_suffices_on_a_toy():
    s = system(["r := load x; assume(r = 1); store y 1"], env="store x 1")
    result = solve_via_datalog(s, GoalSpec("y", 1))
    assert isinstance(result, DatalogGenerable)
    program, goal_atom = result.instance.program, result.goal_atom
    assert infer_cached(program, goal_atom, cache_bound(s))
    assert infer_cached(program, goal_atom, 3)
    assert is_linear(linearize(program, 3))
