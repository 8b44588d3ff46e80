import itertools
import random
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from raverify.datalog import (
    Atom, DatalogError, DatalogProgram, Rule, Var, atom, derive, export_text, fact, infer,
    infer_cached, is_linear, linearize, parse_text,
)

X, Y, Z = Var("X"), Var("Y"), Var("Z")


def naive_model(p):
    """Ground every rule over the whole domain and iterate to a fixpoint."""
    consts = sorted(p.constants, key=repr)
    model = set()
    while True:
        new = set(model)
        for r in p.rules:
            names = sorted({t for a in (r.head,) + r.body for t in a.args if isinstance(t, Var)})
            for values in itertools.product(consts, repeat=len(names)):
                env = dict(zip(names, values))

                def g(a):
                    return (a.pred, tuple(env.get(t, t) if isinstance(t, Var) else t
                                          for t in a.args))
                if all(g(b) in model for b in r.body):
                    new.add(g(r.head))
        if new == model:
            return model
        model = new


def cached_oracle(p, goal, k):
    """Breadth-first search over every cache of at most k ground atoms,
    with add and drop moves, over all ground rule instances."""
    consts = sorted(p.constants, key=repr)
    instances = []
    for r in p.rules:
        names = sorted({t for a in (r.head,) + r.body for t in a.args if isinstance(t, Var)})
        for values in itertools.product(consts, repeat=len(names)):
            env = dict(zip(names, values))

            def g(a):
                return (a.pred, tuple(env.get(t, t) if isinstance(t, Var) else t for t in a.args))
            instances.append((g(r.head), frozenset(g(b) for b in r.body)))
    start = frozenset()
    seen, todo = {start}, deque([start])
    while todo:
        c = todo.popleft()
        if goal in c:
            return True
        nxt = [c - {a} for a in c]
        nxt += [c | {h} for h, b in instances if b <= c and h not in c and len(c) < k]
        for n in nxt:
            if n not in seen:
                seen.add(n)
                todo.append(n)
    return False


def transitive_closure(edges):
    rules = [fact("edge", a, b) for a, b in edges]
    rules.append(Rule(atom("path", X, Y), (atom("edge", X, Y),)))
    rules.append(Rule(atom("path", X, Z), (atom("path", X, Y), atom("edge", Y, Z))))
    return DatalogProgram({"edge": 2, "path": 2}, rules)


def bfs_pairs(edges):
    out = set()
    nodes = {n for e in edges for n in e}
    for s in nodes:
        seen, todo = set(), [s]
        while todo:
            u = todo.pop()
            for a, b in edges:
                if a == u and b not in seen:
                    seen.add(b)
                    todo.append(b)
        out |= {(s, t) for t in seen}
    return out


def random_program(seed, n_preds=3, n_rules=5, consts=(0, 1, 2), max_body=3):
    rng = random.Random(seed)
    preds = {f"p{i}": rng.randint(1, 2) for i in range(n_preds)}
    names = list(preds)
    pool = [X, Y, Z]
    rules = []
    for _ in range(rng.randint(1, 3)):
        q = rng.choice(names)
        rules.append(fact(q, *(rng.choice(consts) for _ in range(preds[q]))))
    for _ in range(n_rules):
        body = []
        for _ in range(rng.randint(1, max_body)):
            q = rng.choice(names)
            body.append(Atom(q, tuple(rng.choice(pool + list(consts[:1]))
                                      for _ in range(preds[q]))))
        bound = [t for b in body for t in b.args if isinstance(t, Var)] or [consts[0]]
        h = rng.choice(names)
        rules.append(Rule(Atom(h, tuple(rng.choice(bound) for _ in range(preds[h]))), tuple(body)))
    return DatalogProgram(preds, rules, constants=consts)


# ------------------------------------------------------------------ inference

def test_transitive_closure_matches_bfs():
    edges = [(1, 2), (2, 3), (3, 4), (5, 1)]
    p = transitive_closure(edges)
    model = derive(p)
    assert {args for pred, args in model if pred == "path"} == bfs_pairs(edges)
    assert infer(p, atom("path", 5, 4))
    assert not infer(p, atom("path", 4, 5))


def test_three_cycle_reaches_itself():
    edges = [(0, 1), (1, 2), (2, 0)]
    p = transitive_closure(edges)
    assert all(infer(p, atom("path", a, a)) for a in range(3))
    assert {args for pred, args in derive(p) if pred == "path"} == bfs_pairs(edges)


def test_program_without_rules_derives_nothing():
    p = DatalogProgram({"q": 1}, [], constants=[0])
    assert not infer(p, atom("q", 0))


def test_bad_programs_rejected():
    with pytest.raises(DatalogError, match="undeclared"):
        DatalogProgram({"q": 1}, [fact("r", 0)])
    with pytest.raises(DatalogError, match="expects"):
        DatalogProgram({"q": 1}, [fact("q", 0, 1)])
    with pytest.raises(DatalogError, match="head variable"):
        DatalogProgram({"q": 1, "r": 1}, [Rule(atom("q", X), (atom("r", Y),))], constants=[0])
    p = transitive_closure([(0, 1)])
    with pytest.raises(DatalogError, match="not ground"):
        infer(p, atom("path", X, 1))


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_semi_naive_equals_naive_grounding(seed):
    p = random_program(seed)
    assert derive(p) == naive_model(p)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6), extra=st.integers(0, 10 ** 6))
def test_adding_rules_only_adds_consequences(seed, extra):
    p = random_program(seed)
    q = random_program(extra)
    merged = DatalogProgram({**q.preds, **p.preds},
                            p.rules + tuple(r for r in q.rules if all(
                                q.preds[a.pred] == p.preds[a.pred] for a in (r.head,) + r.body)),
                            constants=p.constants | q.constants)
    assert derive(p) <= derive(merged)


# --------------------------------------------------------------- cache bound

def chain(n):
    rules = [fact("a0", 0)] + [Rule(atom(f"a{i + 1}", X), (atom(f"a{i}", X),)) for i in range(n)]
    return DatalogProgram({f"a{i}": 1 for i in range(n + 1)}, rules)


def test_chain_needs_two_slots():
    p = chain(5)
    assert not infer_cached(p, atom("a5", 0), 1)
    assert infer_cached(p, atom("a5", 0), 2)
    assert infer_cached(p, atom("a5", 0), 2, exhaustive=True)


def test_three_body_rule_needs_four_slots():
    rules = [fact("b1", 0), fact("b2", 0), fact("b3", 0),
             Rule(atom("g", X), (atom("b1", X), atom("b2", X), atom("b3", X)))]
    p = DatalogProgram({"b1": 1, "b2": 1, "b3": 1, "g": 1}, rules)
    for k in (3, 4):
        expected = cached_oracle(p, ("g", (0,)), k)
        assert expected == (k == 4)
        assert infer_cached(p, atom("g", 0), k) == expected
        assert infer_cached(p, atom("g", 0), k, exhaustive=True) == expected


def test_cache_size_zero_rejected():
    with pytest.raises(DatalogError):
        infer_cached(chain(1), atom("a1", 0), 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), k=st.integers(1, 4))
def test_cached_inference_is_monotone_in_k(seed, k):
    p = random_program(seed, n_preds=2, n_rules=3, consts=(0, 1))
    for pred, args in sorted(derive(p), key=repr)[:4]:
        g = Atom(pred, args)
        small = infer_cached(p, g, k, exhaustive=True)
        assert small == cached_oracle(p, (pred, args), k)
        if small:
            assert infer_cached(p, g, k + 1, exhaustive=True)
            assert infer(p, g)
        assert infer_cached(p, g, k) == small


# ----------------------------------------------------------------- linearize

def test_linearize_single_fact():
    p = DatalogProgram({"q": 1}, [fact("q", 0)])
    lin = linearize(p, 1)
    assert is_linear(lin)
    assert infer(lin, atom("q", 0))


def test_linearize_keeps_cache_verdicts():
    rules = [fact("b1", 0), fact("b2", 0), Rule(atom("g", X), (atom("b1", X), atom("b2", X)))]
    p = DatalogProgram({"b1": 1, "b2": 1, "g": 1}, rules)
    assert not infer(linearize(p, 2), atom("g", 0))
    assert infer(linearize(p, 3), atom("g", 0))


def test_linearize_transitive_closure():
    edges = [(0, 1), (1, 2), (2, 3)]
    p = transitive_closure(edges)
    lin = linearize(p, 3)
    assert is_linear(lin)
    for a, b in bfs_pairs(edges):
        assert infer(lin, atom("path", a, b)) == infer_cached(p, atom("path", a, b), 3)


def test_linearize_rejects_long_bodies():
    rules = [fact("b", 0), Rule(atom("g", X), (atom("b", X), atom("b", X)))]
    with pytest.raises(DatalogError):
        linearize(DatalogProgram({"b": 1, "g": 1}, rules), 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), k=st.integers(2, 3))
def test_linearize_equivalent_on_random_programs(seed, k):
    p = random_program(seed, n_preds=2, n_rules=3, consts=(0, 1), max_body=2)
    lin = linearize(p, k)
    assert is_linear(lin)
    for pred, args in derive(p):
        g = Atom(pred, args)
        assert infer(lin, g) == infer_cached(p, g, k, exhaustive=True)


# ----------------------------------------------------------------- text form

def test_export_parse_round_trip():
    p = transitive_closure([(0, 1), (1, 2)])
    text = export_text(p)
    assert text.startswith(".decl edge/2\n.decl path/2\n")
    q = parse_text(text)
    assert export_text(q) == text
    assert derive(q) == derive(p)


def test_round_trip_with_tuple_and_string_constants():
    rules = [fact("q", (1, "a b"), "x"), Rule(atom("r", X), (atom("q", X, Y),))]
    p = DatalogProgram({"q": 2, "r": 1}, rules)
    assert export_text(parse_text(export_text(p))) == export_text(p)
    assert infer(parse_text(export_text(p)), atom("r", (1, "a b")))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_round_trip_random(seed):
    p = random_program(seed)
    q = parse_text(export_text(p))
    assert set(q.rules) == set(p.rules)


def test_parse_errors():
    with pytest.raises(DatalogError):
        parse_text("q(0) :- .")
    with pytest.raises(DatalogError):
        parse_text("q(0) ! r(1).")
