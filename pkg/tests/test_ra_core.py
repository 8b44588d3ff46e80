import json
import random

import pytest
from hypothesis import assume, given, settings, strategies as st

from raverify.corpus import random_system
from raverify.program_ir import GoalSpec, parse_system
from raverify.ra_core import (
    Invalid, LiftingError, Machine, Message, Reachable, SuperpositionError,
    TimestampLifting, Trace, apply_step, cas_pairs, env_projection, explore_concrete,
    lift_trace, msg_conflict_free, relabel_threads, replicate_env_message, simulate,
    step_concrete, superpose, trace_from_json, trace_timestamps, trace_to_json, validate_run,
)
from raverify.reductions import dekker, prodcons


def pick(machine, cf, tid, kind, ts=None, value=None):
    """Apply the unique successor of `tid` matching kind / timestamp / loaded value."""
    for step, nxt in step_concrete(machine, cf, tid, horizon=20):
        if step.kind != kind:
            continue
        if ts is not None and step.msgs[-1].ts != ts:
            continue
        if value is not None and step.msgs[0].val != value:
            continue
        return step, nxt
    raise AssertionError(f"no {kind} move for thread {tid}")


def run_steps(spec, n_env, moves):
    machine = Machine.with_replicas(spec, n_env)
    cf = machine.initial_config()
    trace = Trace(spec.vars, cf, [])
    for tid, kind, ts in moves:
        step, cf = pick(machine, cf, tid, kind, ts)
        trace.steps.append(step)
    return machine, cf, trace


# --------------------------------------------------------------- conflicts

def test_conflict_examples():
    assert msg_conflict_free(Message(0, 1, (3, 0)), Message(1, 1, (0, 3)))
    assert msg_conflict_free(Message(0, 1, (0,)), Message(0, 2, (0,)))
    assert not msg_conflict_free(Message(0, 1, (3,)), Message(0, 2, (3,)))


# ---------------------------------------------------------------- stepping

def test_dekker_thread_reads_initial_y_after_both_stores():
    s, _ = dekker()
    # t1: r1 := 1; store x@10     t2: r1 := 1; store y@7
    machine, cf, _ = run_steps(s, 0, [(0, "silent", None), (0, "st", 10),
                                      (1, "silent", None), (1, "st", 7)])
    loads = [(st, nxt) for st, nxt in step_concrete(machine, cf, 0) if st.kind == "ld"]
    y = s.vars.index("y")
    initial_y = Message(y, 0, (0,) * len(s.vars))
    assert any(st.msgs[0] == initial_y and nxt.threads[0].rv[0] == 0 for st, nxt in loads)


def test_outdated_message_cannot_be_loaded():
    s = parse_system("vars x; domain 2; regs r; dis a { store x 1; store x 1; r := load x }")
    machine, cf, _ = run_steps(s, 0, [(0, "st", 3), (0, "st", 5)])
    loads = [st for st, _ in step_concrete(machine, cf, 0) if st.kind == "ld"]
    assert [st.msgs[0].ts for st in loads] == [5]


def test_cas_on_initial_memory_is_adjacent():
    s = parse_system("vars x; domain 2; regs r; dis a { cas(x, 0, 1) }")
    machine = Machine.with_replicas(s, 0)
    cf = machine.initial_config()
    moves = step_concrete(machine, cf, 0, horizon=6)
    assert moves
    for step, nxt in moves:
        loaded, stored = step.msgs
        assert loaded.ts == 0 and stored.ts == 1 and stored.val == 1


def test_env_store_above_own_view_only():
    s = parse_system("vars x; domain 2; regs r; env e { store x 1; store x 1 }")
    machine, cf, _ = run_steps(s, 1, [(0, "st", 4)])
    assert all(st.msgs[0].ts > 4 for st, _ in step_concrete(machine, cf, 0, horizon=8))


# ------------------------------------------------------------- exploration

def test_dekker_reaches_double_critical_section():
    s, goal = dekker()
    result = explore_concrete(s, 0, 12, goal=goal)
    assert isinstance(result, Reachable)
    assert validate_run(result.trace, s)
    assert len(result.trace) == 12


def test_goal_never_stored_exhausts():
    s = parse_system("vars x, y; domain 2; regs r; dis a { store x 1; r := load x }")
    result = explore_concrete(s, 0, 10, goal=GoalSpec("y", 1))
    assert not isinstance(result, Reachable)
    assert result.exhausted and not result.budget_exceeded


def test_budget_reported_separately():
    s, goal = dekker()
    result = explore_concrete(s, 0, 12, goal=goal, max_nodes=5)
    assert not isinstance(result, Reachable)
    assert result.budget_exceeded and not result.exhausted


def test_producer_consumer_two_rounds():
    s, goal = prodcons(2, 2)
    result = explore_concrete(s, 2, 12, goal=goal)
    assert isinstance(result, Reachable)
    assert validate_run(result.trace, s)


def test_env_requires_env_program():
    s, goal = dekker()
    with pytest.raises(ValueError):
        explore_concrete(s, 1, 4, goal=goal)


def test_exploration_is_deterministic():
    s = random_system(11)
    a = explore_concrete(s, 2, 6)
    b = explore_concrete(s, 2, 6)
    assert a == b
    s2, goal = dekker()
    t1 = explore_concrete(s2, 0, 12, goal=goal).trace
    t2 = explore_concrete(s2, 0, 12, goal=goal).trace
    assert trace_to_json(t1) == trace_to_json(t2)


# -------------------------------------------------------------- validation

def test_collision_reported_as_conflict():
    s = parse_system("vars x; domain 2; regs r; dis a { store x 1 } dis b { store x 1 }")
    machine = Machine.with_replicas(s, 0)
    c0 = machine.initial_config()
    first, c1 = pick(machine, c0, 0, "st", 3)
    second, _ = pick(machine, c1, 1, "st", 4)
    assert validate_run(Trace(s.vars, c0, [first, second]), s)
    collide = second._replace(msgs=(Message(0, 1, (3,)),))
    assert validate_run(Trace(s.vars, c0, [first, collide]), s) == Invalid(1, "msg # m")


def test_wrong_kind_and_ctrl_are_invalid():
    s, goal = dekker()
    trace = explore_concrete(s, 0, 12, goal=goal).trace
    broken = Trace(trace.vars, trace.initial, [trace.steps[0]._replace(to=999)])
    assert validate_run(broken, s) == Invalid(0, "ctrl")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 5), depth=st.integers(1, 12))
def test_simulated_runs_validate_and_views_grow(seed, depth):
    s = random_system(seed)
    trace = simulate(s, 2, depth, seed=seed)
    result = validate_run(trace, s)
    assert result
    machine = Machine.for_config(s, trace.initial)
    cf = trace.initial
    for step in trace.steps:
        slot = cf.slot(step.tid)
        before = cf.threads[slot].view
        cf = apply_step(machine, cf, step)
        after = cf.threads[slot].view
        assert all(a <= b for a, b in zip(before, after))
        for lc in cf.threads:
            for x, t in enumerate(lc.view):
                assert t <= max(m.ts for m in cf.memory if m.var == x)


def test_json_round_trip():
    s, goal = dekker()
    trace = explore_concrete(s, 0, 12, goal=goal).trace
    text = trace_to_json(trace)
    again = trace_from_json(text)
    assert trace_to_json(again) == text
    assert validate_run(again, s)
    assert list(json.loads(text)) == ["vars", "initial", "steps"]


# ----------------------------------------------------------------- lifting

def shift_lifting(shifts):
    return TimestampLifting({v: (lambda t, k=k: t + k if t > 0 else 0) for v, k in shifts.items()})


def test_lifting_example_views():
    lifting = shift_lifting({"x": 2, "y": 7})
    assert [lifting.apply("x", 2), lifting.apply("y", 5)] == [4, 12]
    assert [lifting.apply("x", 10), lifting.apply("y", 0)] == [12, 0]


def test_lifted_dekker_is_valid():
    s, goal = dekker()
    trace = explore_concrete(s, 0, 12, goal=goal).trace
    lifted = lift_trace(trace, shift_lifting({"x": 2, "y": 7, "c": 1}))
    assert validate_run(lifted, s)
    assert lift_trace(trace, TimestampLifting()).steps == trace.steps


def test_lifting_breaking_cas_pair_rejected():
    s = parse_system("vars x; domain 2; regs r; dis a { store x 1; cas(x, 1, 0) }")
    _, _, trace = run_steps(s, 0, [(0, "st", 1), (0, "cas", 2)])
    assert validate_run(trace, s)
    assert cas_pairs(trace) == {(0, 1)}
    with pytest.raises(LiftingError):
        lift_trace(trace, TimestampLifting({"x": {0: 0, 1: 5, 2: 7}}))
    ok = lift_trace(trace, TimestampLifting({"x": {0: 0, 1: 5, 2: 6}}))
    assert validate_run(ok, s)


def test_non_monotone_lifting_rejected():
    s = parse_system("vars x; domain 2; regs r; dis a { store x 1; store x 0 }")
    _, _, trace = run_steps(s, 0, [(0, "st", 1), (0, "st", 2)])
    with pytest.raises(LiftingError):
        lift_trace(trace, TimestampLifting({"x": {0: 0, 1: 4, 2: 3}}))


def random_lifting(rng, trace):
    """A strictly increasing lifting fixing 0 and gluing every CAS pair."""
    glued = cas_pairs(trace)
    maps = {}
    for x, used in trace_timestamps(trace).items():
        name = trace.vars[x]
        mapping, last = {0: 0}, 0
        for t in sorted(used - {0}):
            if (x, t - 1) in glued:
                last = mapping[t - 1] + 1
            else:
                last = last + rng.randint(1, 4)
            mapping[t] = last
        maps[name] = mapping
    return TimestampLifting(maps)


def random_valid_trace(seed):
    s = random_system(seed)
    trace = simulate(s, 2 if s.env is not None else 0, 10, seed=seed)
    return s, trace


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10 ** 5))
def test_random_liftings_stay_valid(seed):
    s, trace = random_valid_trace(seed)
    lifted = lift_trace(trace, random_lifting(random.Random(seed), trace))
    assert validate_run(lifted, s)


# ------------------------------------------------------------ superposition

def copy_liftings(trace):
    """Two liftings agreeing on dis timestamps that send every env timestamp of
    the original run to a fresh slot: a for the run itself, b for the copy."""
    roles = dict(zip(trace.initial.tids, trace.initial.roles))
    env_ts = {}
    for step in trace.steps:
        if step.kind in ("st", "cas") and roles[step.tid] == "env":
            env_ts.setdefault(step.msgs[-1].var, set()).add(step.msgs[-1].ts)
    first, second = {}, {}
    for x, used in trace_timestamps(trace).items():
        name = trace.vars[x]
        a, b, pos = {0: 0}, {0: 0}, 0
        for t in sorted(used - {0}):
            if t in env_ts.get(x, ()):
                b[t] = pos + 1
                a[t] = pos + 2
                pos += 2
            else:
                pos += 1
                a[t] = b[t] = pos
        first[name], second[name] = a, b
    return TimestampLifting(first), TimestampLifting(second)


def superposition_pair(seed):
    s = random_system(seed, dis_cas=False)
    trace = simulate(s, 2 if s.env is not None else 0, 10, seed=seed)
    m1, m2 = copy_liftings(trace)
    t1 = lift_trace(trace, m1)
    copy = lift_trace(trace, m2)
    offset = max(trace.initial.tids) + 1
    copy = relabel_threads(copy, {t: t + offset for t in copy.initial.tids})
    return s, t1, env_projection(copy), copy


def dis_messages(trace):
    roles = dict(zip(trace.initial.tids, trace.initial.roles))
    return {st.msgs[-1] for st in trace.steps if st.kind in ("st", "cas") and roles[st.tid] != "env"}


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 5))
def test_superposition_of_env_copy_is_valid(seed):
    s, t1, t2, full = superposition_pair(seed)
    # the copy must agree with t1 on every dis message, views included
    assume(dis_messages(t1) == dis_messages(full))
    result = superpose(t1, t2, s, t2_full=full)
    assert validate_run(result, s)
    assert len(result) == len(t1) + len(t2)


def test_empty_second_run_is_neutral():
    s, goal = dekker()
    t1 = explore_concrete(s, 0, 12, goal=goal).trace
    empty = Trace(s.vars, t1.initial._replace(threads=(), tids=(), roles=(), programs=()), [])
    result = superpose(t1, empty, s)
    assert result.steps == t1.steps and result.initial == t1.initial


def test_shared_thread_ids_rejected():
    s, t1, t2, _ = superposition_pair(3)
    clash = relabel_threads(t2, {t: t1.initial.tids[0] for t in t2.initial.tids[:1]})
    if not t2.initial.tids:
        pytest.skip("run without env threads")
    with pytest.raises(SuperpositionError):
        superpose(t1, clash, s)


# ---------------------------------------------------------- infinite supply

def supply_conditions(rep, target, t_star):
    """The copy carries the target's variable and value; its view on the
    target variable stays below the lifted slot of every later dis store
    and reaches the copy slot of t_star; on other variables it stays below
    the lifted slot of every dis store the target had not yet seen."""
    x = target.var
    new = rep.message
    if (new.var, new.val) != (target.var, target.val):
        return False
    for ts in rep.dis_timestamps[x]:
        if t_star <= ts and target.view[x] <= ts and not new.view[x] <= rep.run_ts(x, ts):
            return False
    if not new.view[x] >= rep.copy_ts(x, t_star):
        return False
    for y, stamps in rep.dis_timestamps.items():
        if y == x:
            continue
        for ts in stamps:
            if target.view[y] <= ts and not new.view[y] <= rep.run_ts(y, ts):
                return False
    return True


SUPPLY_SOURCE = """\
vars x, y; domain 2; regs r;
dis d { store y 1; r := load x; store y 0 }
env e { r := load y; store x 1 }
"""


def env_targets(trace):
    roles = dict(zip(trace.initial.tids, trace.initial.roles))
    return [st.msgs[-1] for st in trace.steps if st.kind == "st" and roles[st.tid] == "env"]


def test_single_env_store_pushed_above_t_star():
    s = parse_system("vars x; domain 2; regs r; env e { store x 1 }")
    trace = simulate(s, 1, 1, seed=0)
    target = env_targets(trace)[0]
    rep = replicate_env_message(trace, target, 5, s)
    assert validate_run(rep.trace, s)
    assert rep.message.view[0] >= rep.copy_ts(0, 5)
    assert supply_conditions(rep, target, 5)


def test_t_star_below_target_returns_lifted_original():
    s = parse_system(SUPPLY_SOURCE)
    for seed in range(40):
        trace = simulate(s, 2, 8, seed=seed)
        targets = env_targets(trace)
        if targets:
            break
    target = targets[0]
    rep = replicate_env_message(trace, target, target.ts, s)
    lifted = {st.msgs[-1] for st in rep.trace.steps[:len(trace)] if st.kind == "st"}
    assert rep.message in lifted
    assert supply_conditions(rep, target, target.ts)


def test_dis_target_rejected():
    s = parse_system(SUPPLY_SOURCE)
    trace = simulate(s, 1, 6, seed=1)
    roles = dict(zip(trace.initial.tids, trace.initial.roles))
    dis_msgs = [st.msgs[-1] for st in trace.steps if st.kind == "st" and roles[st.tid] == "dis"]
    assert dis_msgs
    with pytest.raises(ValueError):
        replicate_env_message(trace, dis_msgs[0], 1, s)


def test_twenty_replications_satisfy_conditions():
    checked = 0
    seed = 0
    while checked < 20:
        s = random_system(seed, dis_cas=False)
        seed += 1
        if s.env is None:
            continue
        trace = simulate(s, 2, 10, seed=seed)
        targets = env_targets(trace)
        if not targets:
            continue
        target = targets[-1]
        x = target.var
        top = max(trace_timestamps(trace)[x])
        for t_star in sorted({target.ts, top + 3}):
            rep = replicate_env_message(trace, target, t_star, s)
            assert validate_run(rep.trace, s)
            assert supply_conditions(rep, target, t_star)
        checked += 1
