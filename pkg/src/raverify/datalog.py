"""A small positive Datalog: semi-naive inference, bounded-cache inference,
the cache-to-linear transformation, and a text format.

Terms are either ``Var`` objects or constants.  A constant is any hashable
Python value (ints, strings, and tuples of constants are what the text format
can express).  Ground atoms are handled internally as ``(pred, args)`` tuples,
which is also how ``derive`` reports its model.
"""

from __future__ import annotations

import heapq
import re
from collections import deque
from itertools import combinations
from typing import Iterable, NamedTuple, Optional


class Var(NamedTuple):
    name: str

    def __str__(self):
        return self.name


class Atom(NamedTuple):
    pred: str
    args: tuple

    @property
    def ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)

    def key(self) -> tuple:
        return (self.pred, self.args)

    def __str__(self):
        return f"{self.pred}({', '.join(format_term(a) for a in self.args)})"


class Rule(NamedTuple):
    head: Atom
    body: tuple = ()

    def __str__(self):
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(b) for b in self.body)}."


def atom(pred: str, *args) -> Atom:
    return Atom(pred, tuple(args))


def fact(pred: str, *args) -> Rule:
    return Rule(Atom(pred, tuple(args)), ())


class DatalogError(ValueError):
    pass


def _constants_of(rules) -> frozenset:
    out = set()
    for r in rules:
        for a in (r.head,) + tuple(r.body):
            out.update(t for t in a.args if not isinstance(t, Var))
    return frozenset(out)


class DatalogProgram:
    """Predicates with arities, a data domain and rules.

    The domain defaults to the constants that occur in the rules.
    """

    def __init__(self, preds: dict, rules: Iterable[Rule], constants: Optional[Iterable] = None):
        self.preds = dict(preds)
        self.rules = tuple(rules)
        self.constants = _constants_of(self.rules) if constants is None else frozenset(constants)
        for r in self.rules:
            self._check_rule(r)

    def _check_atom(self, a: Atom):
        if a.pred not in self.preds:
            raise DatalogError(f"undeclared predicate {a.pred}")
        if self.preds[a.pred] != len(a.args):
            raise DatalogError(f"{a.pred} expects {self.preds[a.pred]} arguments, got {len(a.args)}")
        for t in a.args:
            if not isinstance(t, Var) and t not in self.constants:
                raise DatalogError(f"constant {t!r} outside the data domain")

    def _check_rule(self, r: Rule):
        self._check_atom(r.head)
        body_vars = set()
        for b in r.body:
            self._check_atom(b)
            body_vars.update(t for t in b.args if isinstance(t, Var))
        for t in r.head.args:
            if isinstance(t, Var) and t not in body_vars:
                raise DatalogError(f"head variable {t} does not occur in the body of {r}")

    def __len__(self):
        return len(self.rules)

    def size(self) -> int:
        """Symbol count: one per predicate occurrence and argument."""
        return sum(1 + len(a.args) for r in self.rules for a in (r.head,) + tuple(r.body))

    def __repr__(self):
        return f"DatalogProgram({len(self.preds)} preds, {len(self.rules)} rules)"


# ---------------------------------------------------------------- inference


class _Compiled(NamedTuple):
    head: tuple        # (pred, pattern)
    body: tuple        # ((pred, pattern), ...)
    nvars: int


def _compile(rule: Rule) -> _Compiled:
    slots: dict = {}

    def pattern(a: Atom):
        out = []
        for t in a.args:
            if isinstance(t, Var):
                out.append(slots.setdefault(t, len(slots)))
            else:
                out.append((t,))
        return a.pred, tuple(out)

    body = tuple(pattern(b) for b in rule.body)
    head = pattern(rule.head)
    return _Compiled(head, body, len(slots))


class _Store:
    """Facts per predicate plus lazily built indexes on bound positions."""

    def __init__(self):
        self.facts: dict = {}
        self.indexes: dict = {}

    def add(self, pred, args) -> bool:
        bucket = self.facts.setdefault(pred, set())
        if args in bucket:
            return False
        bucket.add(args)
        for (p, positions), idx in self.indexes.items():
            if p == pred:
                idx.setdefault(tuple(args[i] for i in positions), []).append(args)
        return True

    def lookup(self, pred, positions, key, arity):
        if not positions:
            return self.facts.get(pred, ())
        if len(positions) == arity:
            return (key,) if key in self.facts.get(pred, ()) else ()
        idx = self.indexes.get((pred, positions))
        if idx is None:
            idx = {}
            for args in self.facts.get(pred, ()):
                idx.setdefault(tuple(args[i] for i in positions), []).append(args)
            self.indexes[(pred, positions)] = idx
        return idx.get(key, ())


def _match(pattern, args, env):
    for p, a in zip(pattern, args):
        if type(p) is tuple:
            if p[0] != a:
                return None
        else:
            cur = env[p]
            if cur is _UNSET:
                env[p] = a
            elif cur != a:
                return None
    return env


_UNSET = object()


def _instantiate(pattern, env):
    return tuple(p[0] if type(p) is tuple else env[p] for p in pattern)


def _join(store: _Store, body, skip: int, env, out: list):
    """Extend env over body atoms other than index `skip`; append solutions."""
    order = [i for i in range(len(body)) if i != skip]

    def rec(k, env):
        if k == len(order):
            out.append(list(env))
            return
        pred, pattern = body[order[k]]
        positions, key = [], []
        for i, p in enumerate(pattern):
            if type(p) is tuple:
                positions.append(i)
                key.append(p[0])
            elif env[p] is not _UNSET:
                positions.append(i)
                key.append(env[p])
        for args in store.lookup(pred, tuple(positions), tuple(key), len(pattern)):
            saved = list(env)
            if _match(pattern, args, env) is not None:
                rec(k + 1, env)
            env[:] = saved

    rec(0, env)


def derive(p: DatalogProgram, record: bool = False):
    """Least model of p by semi-naive evaluation.

    Returns the set of ground atoms as (pred, args) tuples.  With record=True
    also returns the set of ground rule instances (head, body-tuple) used.
    """
    compiled = [_compile(r) for r in p.rules]
    store = _Store()
    instances = set() if record else None
    delta: dict = {}
    for c in compiled:
        if not c.body:
            args = _instantiate(c.head[1], [_UNSET] * c.nvars)
            if store.add(c.head[0], args):
                delta.setdefault(c.head[0], []).append(args)
            if record:
                instances.add(((c.head[0], args), ()))
    by_pred: dict = {}
    for c in compiled:
        for i, (pred, _) in enumerate(c.body):
            by_pred.setdefault(pred, []).append((c, i))
    while delta:
        new: dict = {}
        for pred, facts in delta.items():
            for c, i in by_pred.get(pred, ()):
                pattern = c.body[i][1]
                for args in facts:
                    env = [_UNSET] * c.nvars
                    if _match(pattern, args, env) is None:
                        continue
                    sols: list = []
                    _join(store, c.body, i, env, sols)
                    for sol in sols:
                        head = (c.head[0], _instantiate(c.head[1], sol))
                        if record:
                            body = tuple(dict.fromkeys(
                                (bp, _instantiate(bpat, sol)) for bp, bpat in c.body))
                            instances.add((head, body))
                        if store.add(*head):
                            new.setdefault(head[0], []).append(head[1])
        delta = new
    model = {(pred, args) for pred, facts in store.facts.items() for args in facts}
    return (model, instances) if record else model


def _check_query(p: DatalogProgram, g: Atom):
    if not isinstance(g, Atom):
        raise DatalogError("query must be an Atom")
    if not g.ground:
        raise DatalogError(f"query {g} is not ground")
    if g.pred not in p.preds:
        raise DatalogError(f"undeclared predicate {g.pred}")


def infer(p: DatalogProgram, g: Atom) -> bool:
    """Whether the ground atom g is derivable from p."""
    _check_query(p, g)
    return g.key() in derive(p)


# ------------------------------------------------------------ bounded cache


class CacheSearchBudget(RuntimeError):
    """The explicit cache-state search hit its node budget."""


def tree_cache_need(p: DatalogProgram) -> dict:
    """Smallest cache that derives each atom by a derivation tree.

    Atoms may be recomputed, so a rule with body needs n1 >= n2 >= ... costs
    max(n_j + j - 1, |body| + 1).  This is an upper bound on the true
    minimum: sharing a subderivation across siblings can do better.
    """
    _, instances = derive(p, record=True)
    waiting: dict = {}
    pending = []
    for inst in instances:
        head, body = inst
        if not body:
            pending.append((1, head))
        for b in body:
            waiting.setdefault(b, []).append(inst)
    remaining = {inst: len(inst[1]) for inst in instances}
    heapq.heapify(pending)
    need: dict = {}
    while pending:
        cost, a = heapq.heappop(pending)
        if a in need:
            continue
        need[a] = cost
        for inst in waiting.get(a, ()):
            remaining[inst] -= 1
            if remaining[inst] == 0:
                head, body = inst
                if head in need:
                    continue
                ns = sorted((need[b] for b in body), reverse=True)
                c = max(max(n + j for j, n in enumerate(ns)), len(body) + 1)
                heapq.heappush(pending, (c, head))
    return need


def infer_cached(p: DatalogProgram, g: Atom, k: int, exhaustive: bool = False,
                 budget: int = 2_000_000) -> bool:
    """Whether g can be derived while the cache never holds more than k atoms.

    Adds require the whole body in the cache.  By default an atom is only
    dropped to make room for an Add when the cache is full; keeping atoms
    longer never disables an Add, so this loses nothing.  exhaustive=True
    also explores free drops at every point.
    """
    if k < 1:
        raise DatalogError("cache size must be at least 1")
    _check_query(p, g)
    model, instances = derive(p, record=True)
    goal = g.key()
    if goal not in model:
        return False
    if not exhaustive:
        if len(model) <= k:
            return True
        if tree_cache_need(p).get(goal, k + 1) <= k:
            return True
    # an instance fires only with its body plus the head in the cache
    usable = [(h, frozenset(b)) for h, b in instances if len(b) < k]
    start = frozenset()
    seen = {start}
    todo = deque([start])
    while todo:
        cache = todo.popleft()
        succs = []
        for head, body in usable:
            if head in cache or not body <= cache:
                continue
            if head == goal:
                return True
            if len(cache) < k:
                succs.append(cache | {head})
            elif not exhaustive:
                for y in cache - body:
                    succs.append((cache - {y}) | {head})
        if exhaustive:
            succs.extend(cache - {y} for y in cache)
        for s in succs:
            if s not in seen:
                seen.add(s)
                if len(seen) > budget:
                    raise CacheSearchBudget(f"more than {budget} cache states")
                todo.append(s)
    return False


# -------------------------------------------------------------- linearizing


BLANK = "__blank__"


def _fresh_pred(preds: dict, base: str) -> str:
    name = base
    n = 1
    while name in preds:
        n += 1
        name = f"{base}{n}"
    return name


def linearize(p: DatalogProgram, k: int, cache_pred: str = "cachepred") -> DatalogProgram:
    """A linear program whose consequences are what p derives with cache k.

    Ground atoms of p become constants of a k-ary cache predicate.  Only the
    rule instances that can fire at all are emitted.  The cache starts as k
    blank slots; swap rules permute slots; each instance with body b1..bp
    writes its head into any slot after the first p while the body sits in
    slots 1..p; each atom in slot 1 is then asserted.
    """
    if k < 1:
        raise DatalogError("cache size must be at least 1")
    for r in p.rules:
        if len(r.body) > k:
            raise DatalogError(f"rule body longer than the cache: {r}")
    model, instances = derive(p, record=True)
    name = _fresh_pred(p.preds, cache_pred)
    T = [Var(f"T{i + 1}") for i in range(k)]
    rules = [Rule(Atom(name, (BLANK,) * k), ())]
    for i, j in combinations(range(k), 2):
        swapped = list(T)
        swapped[i], swapped[j] = T[j], T[i]
        rules.append(Rule(Atom(name, tuple(swapped)), (Atom(name, tuple(T)),)))
    for head, body in sorted(instances, key=repr):
        if head in body:
            continue
        nb = len(body)
        lhs = tuple(body) + tuple(T[nb:])
        for i in range(nb, k):
            rhs = list(lhs)
            rhs[i] = head
            rules.append(Rule(Atom(name, tuple(rhs)), (Atom(name, lhs),)))
    for pred, args in sorted(model, key=repr):
        rules.append(Rule(Atom(pred, args), (Atom(name, ((pred, args),) + tuple(T[1:])),)))
    preds = dict(p.preds)
    preds[name] = k
    return DatalogProgram(preds, rules)


def is_linear(p: DatalogProgram) -> bool:
    return all(len(r.body) <= 1 for r in p.rules)


# ---------------------------------------------------------------- text form


_IDENT = re.compile(r"[a-z][A-Za-z0-9_]*\Z")


def format_term(t) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, bool):
        return str(int(t))
    if isinstance(t, int):
        return str(t)
    if isinstance(t, str):
        if _IDENT.match(t):
            return t
        return '"' + t.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(t, tuple):
        return "<" + ",".join(format_term(x) for x in t) + ">"
    raise DatalogError(f"constant {t!r} has no text form")


def export_text(p: DatalogProgram) -> str:
    """Declarations, then facts, then rules, each block sorted."""
    lines = [f".decl {name}/{arity}" for name, arity in sorted(p.preds.items())]
    facts = sorted(str(r) for r in p.rules if not r.body)
    others = sorted(str(r) for r in p.rules if r.body)
    return "\n".join(lines + facts + others) + "\n"


_TOKEN = re.compile(r"""
    (?P<ws>\s+|%[^\n]*)
  | (?P<decl>\.decl)
  | (?P<arrow>:-)
  | (?P<num>-?\d+)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<ident>[a-z][A-Za-z0-9_]*)
  | (?P<punct>[(),.<>/])
""", re.VERBOSE)


def _tokens(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DatalogError(f"unexpected character {text[pos]!r} at offset {pos}")
        pos = m.end()
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group()))
    return out


def parse_text(text: str) -> DatalogProgram:
    """Inverse of export_text."""
    toks = _tokens(text)
    i = 0

    def peek():
        return toks[i] if i < len(toks) else (None, None)

    def take(kind=None, value=None):
        nonlocal i
        if i >= len(toks):
            raise DatalogError("unexpected end of input")
        k, v = toks[i]
        if (kind is not None and k != kind) or (value is not None and v != value):
            raise DatalogError(f"expected {value or kind}, found {v!r}")
        i += 1
        return v

    def term():
        k, v = peek()
        if k == "var":
            take()
            return Var(v)
        if k == "num":
            take()
            return int(v)
        if k == "ident":
            take()
            return v
        if k == "str":
            take()
            return re.sub(r"\\(.)", r"\1", v[1:-1])
        if v == "<":
            take()
            items = []
            if peek()[1] != ">":
                items.append(term())
                while peek()[1] == ",":
                    take()
                    items.append(term())
            take(value=">")
            return tuple(items)
        raise DatalogError(f"expected a term, found {v!r}")

    def parse_atom():
        name = take("ident")
        take(value="(")
        args = [term()]
        while peek()[1] == ",":
            take()
            args.append(term())
        take(value=")")
        return Atom(name, tuple(args))

    preds: dict = {}
    rules = []
    while i < len(toks):
        if peek()[0] == "decl":
            take()
            name = take("ident")
            take(value="/")
            preds[name] = int(take("num"))
            continue
        head = parse_atom()
        body = []
        if peek()[0] == "arrow":
            take()
            body.append(parse_atom())
            while peek()[1] == ",":
                take()
                body.append(parse_atom())
        take(value=".")
        rules.append(Rule(head, tuple(body)))
    for r in rules:
        for a in (r.head,) + r.body:
            preds.setdefault(a.pred, len(a.args))
    return DatalogProgram(preds, rules)
