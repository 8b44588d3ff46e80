"""Message generation for loop-free systems through Datalog.

A guess fixes the shape of the dis threads' run: the path each dis thread
takes through its (acyclic) transition system, the dense order of the dis
writes on every variable, and for each CAS whether it reads a dis or an env
message.  Everything else (register values, views, which message a load
reads) is left to Datalog.  When a goal becomes derivable while some dis step
has several derivable local states, the guess is refined by pinning that step
to one of them, so that each dis thread stays a single run.

Views are spread over one argument per variable, which keeps the auxiliary
join tables small.  Every emitted rule has at most two body atoms.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import islice, product
from typing import Iterator, NamedTuple, Optional

from .datalog import Atom, DatalogProgram, Rule, Var, derive, export_text, linearize
from .program_ir import GoalSpec, SystemSpec, classify
from .ra_core import Machine
from .simplified import (
    ClassViolation, _check_goal, check_loop_free_class, nat, plus,
    timestamp_bound as _dis_instruction_total,
)


def timestamp_bound(s: SystemSpec) -> int:
    """Total number of dis instructions; dis runs never write more often."""
    return _dis_instruction_total(s)


def compaction_q0(s: SystemSpec) -> int:
    return 2 * s.dom * len(s.vars) + timestamp_bound(s)


def cache_bound(s: SystemSpec) -> int:
    q0 = compaction_q0(s)
    return 2 * q0 * q0


# -------------------------------------------------------------------- guesses


class GuessStep(NamedTuple):
    src: int
    to: int
    kind: str                 # "silent" | "ld" | "st" | "cas"
    var: int = -1
    ts: int = 0               # Nat index written by st / cas
    source: str = ""          # cas only: "dis" or "env"


@dataclass(frozen=True)
class DisRunGuess:
    threads: tuple            # per dis thread: tuple of GuessStep
    widths: tuple             # per variable: number of dis writes

    def blocked(self) -> frozenset:
        """(var, index) pairs read by a CAS on a dis message."""
        return frozenset((st.var, st.ts - 1) for steps in self.threads for st in steps
                         if st.kind == "cas" and st.source == "dis")

    def describe(self, spec: SystemSpec) -> str:
        lines = []
        for t, steps in zip(spec.threads, self.threads):
            parts = []
            for st in steps:
                if st.kind in ("st", "cas"):
                    tag = f"{st.kind} {spec.vars[st.var]}@{st.ts}"
                    if st.kind == "cas":
                        tag += f" from {st.source}"
                    parts.append(tag)
                else:
                    parts.append(st.kind)
            lines.append(f"{t.name}: " + ", ".join(parts))
        return "\n".join(lines)


def _paths(code) -> list:
    """Maximal edge paths from the initial state, plus the prefixes that end
    right before a CAS (a CAS that reads a dis message removes an env slot,
    so its absence is not covered by the longer path)."""
    out = set()

    def rec(ctrl, acc):
        edges = code.edges(ctrl)
        if not edges:
            out.add(tuple(acc))
            return
        for e in edges:
            if e.kind == "cas":
                out.add(tuple(acc))
            rec(e.to, acc + [(ctrl, e)])

    rec(0, [])
    return sorted(out, key=lambda p: [(c, e.to) for c, e in p])


def _merges(seqs: list) -> Iterator[tuple]:
    """All interleavings of the given sequences."""
    seqs = [list(s) for s in seqs if s]
    if not seqs:
        yield ()
        return
    for i, s in enumerate(seqs):
        rest = seqs[:i] + [s[1:]] + seqs[i + 1:]
        for tail in _merges(rest):
            yield (s[0],) + tail


def enumerate_guesses(s: SystemSpec, T: Optional[int] = None) -> Iterator[DisRunGuess]:
    """Every guess: dis paths, per-variable write orders and CAS sources.

    Write timestamps are the positions 1..W in the chosen order, so guesses
    that differ only by an order-preserving renaming are produced once.
    """
    for t in s.threads:
        if not classify(t.program).acyc:
            raise ClassViolation(f"dis not acyc ({t.name})")
    T = timestamp_bound(s) if T is None else T
    machine = Machine(s, [(t.role, t.name) for t in s.threads])
    nvars = len(s.vars)
    per_thread = [_paths(machine.slot_codes[i]) for i in range(len(s.threads))]
    for combo in product(*per_thread):
        for path in combo:
            for _, e in path:
                if e.kind == "assert":
                    raise ValueError("rewrite assert(false) into a goal store first")
        writes = [[[(ti, j) for j, (_, e) in enumerate(path) if e.kind in ("st", "cas") and e.var == x]
                   for ti, path in enumerate(combo)] for x in range(nvars)]
        widths = tuple(sum(len(w) for w in writes[x]) for x in range(nvars))
        if any(w > T for w in widths):
            continue
        cas_sites = [(ti, j) for ti, path in enumerate(combo)
                     for j, (_, e) in enumerate(path) if e.kind == "cas"]
        for orders in product(*(_merges(writes[x]) for x in range(nvars))):
            position = {}
            for x, order in enumerate(orders):
                for p, site in enumerate(order, start=1):
                    position[site] = p
            for sources in product(("dis", "env"), repeat=len(cas_sites)):
                src_of = dict(zip(cas_sites, sources))
                threads = []
                for ti, path in enumerate(combo):
                    steps = []
                    for j, (ctrl, e) in enumerate(path):
                        steps.append(GuessStep(ctrl, e.to, e.kind, e.var, position.get((ti, j), 0),
                                               src_of.get((ti, j), "")))
                    threads.append(tuple(steps))
                yield DisRunGuess(tuple(threads), widths)


# ------------------------------------------------------------------ encoding


class QueryInstance(NamedTuple):
    program: DatalogProgram
    goal: Atom
    guess: DisRunGuess
    pins: tuple = ()


def _code_space(width: int) -> range:
    return range(2 * width + 2)


def goal_views(guess: DisRunGuess) -> Iterator[tuple]:
    """All views over the guess's abstract timestamps, cheapest first."""
    spaces = [_code_space(w) for w in guess.widths]
    views = list(product(*spaces))
    views.sort(key=lambda v: (sum(1 for c in v if c), sum(v), v))
    return iter(views)


@dataclass
class _Emitter:
    spec: SystemSpec
    guess: DisRunGuess
    machine: Machine
    rules: list = field(default_factory=list)
    preds: dict = field(default_factory=dict)
    aux: int = 0

    def __post_init__(self):
        self.n = len(self.spec.vars)
        self.names = list(self.spec.vars)
        self.rvs = list(product(range(self.spec.dom), repeat=len(self.spec.regs)))

    def decl(self, name, arity):
        self.preds[name] = arity
        return name

    def fresh(self, stem, arity):
        self.aux += 1
        return self.decl(f"{stem}{self.aux}", arity)

    def add(self, head, *body):
        self.rules.append(Rule(head, tuple(body)))

    def vs(self, stem):
        return [Var(f"{stem}{i}") for i in range(self.n)]

    # ---- shared tables

    def tables(self):
        spaces = [_code_space(w) for w in self.guess.widths]
        for pred in ("jmax", "jraise", "jle"):
            self.decl(pred, 4)
        self.decl("later", 3)
        self.decl("below", 3)
        self.decl("avail", 2)
        for x, space in enumerate(spaces):
            xn = self.names[x]
            for a in space:
                for b in space:
                    self.add(Atom("jmax", (xn, a, b, max(a, b))))
                    if b & 1:
                        self.add(Atom("jraise", (xn, a, b, max(a | 1, b))))
                    elif a <= b:
                        self.add(Atom("jle", (xn, a, b, b)))
                    if a < b and not b & 1:
                        self.add(Atom("below", (xn, a, b)))
                    if b & 1 and (b >> 1) >= (a >> 1):
                        self.add(Atom("later", (xn, a, b)))
            blocked = self.guess.blocked()
            for t in range(self.guess.widths[x] + 1):
                if (x, t) not in blocked:
                    self.add(Atom("avail", (xn, plus(t))))
        self.decl("upd", 4)
        for r in range(len(self.spec.regs)):
            for rv in self.rvs:
                for d in range(self.spec.dom):
                    new = rv[:r] + (d,) + rv[r + 1:]
                    self.add(Atom("upd", (r, rv, d, new)))

    # ---- building blocks

    def join_chain(self, pair_pred, x, own_table, pre):
        """From pair_pred(pre..., A.., B..) derive a predicate (pre..., C..)
        with C the per-variable join; the x entry uses own_table."""
        A, B, C = self.vs("A"), self.vs("B"), self.vs("C")
        cur = pair_pred
        cols = list(pre) + A + B
        for y in range(self.n):
            table = own_table if y == x else "jmax"
            nxt_cols = list(pre) + C[:y + 1] + A[y + 1:] + B[y + 1:]
            nxt = self.fresh("j", len(nxt_cols))
            self.add(Atom(nxt, tuple(nxt_cols)), Atom(cur, tuple(cols)),
                     Atom(table, (self.names[y], A[y], B[y], C[y])))
            cur, cols = nxt, nxt_cols
        return cur

    def thread_rules(self, state_pred, src, dst_head, edge, x_msgs):
        """Loads and silent moves shared by env and dis threads.

        dst_head(rv_term, view_terms) builds the head atom."""
        rv, d, A, B = Var("RV"), Var("D"), self.vs("A"), self.vs("B")
        if edge.kind == "silent":
            for r in self.rvs:
                out = edge.fn(r)
                if out is not None:
                    self.add(dst_head(out, A), Atom(state_pred, (src, r) + tuple(A)))
            return
        if edge.kind == "ld":
            x = edge.var
            xn = self.names[x]
            for msg_pred, table in (("emp", "jraise"), ("dmp", "jle")):
                pair = self.fresh("pair", 2 + 2 * self.n)
                self.add(Atom(pair, (rv, d) + tuple(A) + tuple(B)),
                         Atom(state_pred, (src, rv) + tuple(A)),
                         Atom(msg_pred, (xn, d) + tuple(B)))
                joined = self.join_chain(pair, x, table, [rv, d])
                C, new = self.vs("C"), Var("NEW")
                self.add(dst_head(new, C), Atom(joined, (rv, d) + tuple(C)),
                         Atom("upd", (edge.fn, rv, d, new)))
            return
        raise ValueError(edge.kind)

    # ---- env

    def env_rules(self):
        if self.spec.env is None:
            return
        code = self.machine.codes[(True, self.spec.env_name)]
        for src, edges in sorted(code.out.items()):
            for e in edges:
                def head(rv, view, e=e):
                    return Atom("etp", (e.to, rv) + tuple(view))
                if e.kind in ("silent", "ld"):
                    self.thread_rules("etp", src, head, e, None)
                elif e.kind == "st":
                    x, xn = e.var, self.names[e.var]
                    A, rv, c = self.vs("A"), Var("RV"), Var("CX")
                    moved = list(A)
                    moved[x] = c
                    pre = self.fresh("est", 1 + self.n)
                    self.add(Atom(pre, (rv,) + tuple(moved)),
                             Atom("etp", (src, rv) + tuple(A)),
                             Atom("later", (xn, A[x], c)))
                    self.add(Atom("etp", (e.to, rv) + tuple(moved)),
                             Atom(pre, (rv,) + tuple(moved)), Atom("avail", (xn, c)))
                    for r in self.rvs:
                        self.add(Atom("emp", (xn, e.fn(r)) + tuple(moved)),
                                 Atom(pre, (r,) + tuple(moved)), Atom("avail", (xn, c)))
                else:
                    raise ClassViolation(f"env edge {e.kind} outside the loop-free class")

    # ---- dis

    def dis_rules(self, pins: dict):
        for ti, steps in enumerate(self.guess.threads):
            dtp = f"dtp{ti + 1}"
            code = self.machine.slot_codes[ti]
            for j, st in enumerate(steps):
                edge = code.edge_to(st.src, st.to)
                out = self.fresh(f"out{ti + 1}_{j}_", 1 + self.n)

                def head(rv, view, out=out):
                    return Atom(out, (rv,) + tuple(view))

                A, B, C, rv = self.vs("A"), self.vs("B"), self.vs("C"), Var("RV")
                if st.kind in ("silent", "ld"):
                    self.thread_rules(dtp, st.src, head, edge, None)
                elif st.kind == "st":
                    x, xn = st.var, self.names[st.var]
                    moved = list(A)
                    moved[x] = nat(st.ts)
                    self.add(head(rv, moved), Atom(dtp, (st.src, rv) + tuple(A)),
                             Atom("below", (xn, A[x], nat(st.ts))))
                    for r in self.rvs:
                        self.add(Atom("dmp", (xn, edge.fn(r)) + tuple(A)),
                                 Atom(dtp, (st.to, r) + tuple(A)))
                elif st.kind == "cas":
                    x, xn = st.var, self.names[st.var]
                    msg_pred, table = ("dmp", "jle") if st.source == "dis" else ("emp", "jraise")
                    pair = self.fresh("pair", 1 + 2 * self.n)
                    for r in self.rvs:
                        Bfix = list(B)
                        if st.source == "dis":
                            Bfix[x] = nat(st.ts - 1)
                        self.add(Atom(pair, (r,) + tuple(A) + tuple(Bfix)),
                                 Atom(dtp, (st.src, r) + tuple(A)),
                                 Atom(msg_pred, (xn, edge.fn(r)) + tuple(Bfix)))
                    joined = self.join_chain(pair, x, table, [rv])
                    Cin = list(C)
                    if st.source == "env":
                        Cin[x] = plus(st.ts - 1)
                    Cout = list(C)
                    Cout[x] = nat(st.ts)
                    self.add(head(rv, Cout), Atom(joined, (rv,) + tuple(Cin)))
                    for r in self.rvs:
                        self.add(Atom("dmp", (xn, edge.fn2(r)) + tuple(A)),
                                 Atom(dtp, (st.to, r) + tuple(A)))
                else:
                    raise ValueError(f"unsupported dis step {st.kind}")
                pin = pins.get((ti, j))
                if pin is None:
                    self.add(Atom(dtp, (st.to, rv) + tuple(A)), Atom(out, (rv,) + tuple(A)))
                else:
                    pin_pred = self.decl(f"pin{ti + 1}_{j}", 1 + self.n)
                    self.add(Atom(pin_pred, pin))
                    self.add(Atom(dtp, (st.to, rv) + tuple(A)), Atom(out, (rv,) + tuple(A)),
                             Atom(pin_pred, (rv,) + tuple(A)))

    def base_facts(self):
        zero = (0,) * self.n
        rv0 = (0,) * len(self.spec.regs)
        for x in range(self.n):
            self.add(Atom("dmp", (self.names[x], self.spec.init) + zero))
        self.add(Atom("etp", (0, rv0) + zero))
        for ti in range(len(self.spec.threads)):
            self.add(Atom(f"dtp{ti + 1}", (0, rv0) + zero))

    def build(self, pins: dict) -> DatalogProgram:
        width = 2 + self.n
        for pred in ("emp", "dmp", "etp"):
            self.decl(pred, width)
        for ti in range(len(self.spec.threads)):
            self.decl(f"dtp{ti + 1}", width)
        self.base_facts()
        self.tables()
        self.env_rules()
        self.dis_rules(pins)
        return DatalogProgram(self.preds, self.rules)


def _machine(s: SystemSpec) -> Machine:
    layout = [(t.role, t.name) for t in s.threads]
    if s.env is not None:
        layout.append(("env", s.env_name))
    return Machine(s, layout)


def encode_instance(s: SystemSpec, guess: DisRunGuess, goal: GoalSpec,
                    pins: Optional[dict] = None) -> QueryInstance:
    """The Datalog program for one guess, with the cheapest goal atom."""
    check_loop_free_class(s)
    _check_goal(s, goal)
    if len(guess.threads) != len(s.threads):
        raise ValueError("guess does not match the dis threads of the system")
    pins = dict(pins or {})
    program = _Emitter(s, guess, _machine(s)).build(pins)
    view = next(goal_views(guess))
    g = Atom("dmp", (goal.var, goal.val) + view)
    return QueryInstance(program, g, guess, tuple(sorted(pins.items())))


# ------------------------------------------------------------------- solving


class DatalogGenerable(NamedTuple):
    instance: QueryInstance
    goal_atom: Atom
    guesses: int


class DatalogNotGenerable(NamedTuple):
    guesses: int


def _nonunique_step(guess: DisRunGuess, model: set):
    for ti, steps in enumerate(guess.threads):
        pred = f"dtp{ti + 1}"
        for j, st in enumerate(steps):
            states = [args[1:] for p, args in model if p == pred and args[0] == st.to]
            if len(states) > 1:
                return (ti, j), sorted(states)
    return None


def _goal_atom(model: set, guess: DisRunGuess, goal: GoalSpec) -> Optional[Atom]:
    for view in goal_views(guess):
        for pred in ("dmp", "emp"):
            key = (pred, (goal.var, goal.val) + view)
            if key in model:
                return Atom(*key)
    return None


def _solve_guess(s, guess, machine, wanted, pins, on_found, counter):
    """Refine pins until every wanted goal is settled for this guess."""
    counter[0] += 1
    program = _Emitter(s, guess, machine).build(pins)
    model = derive(program)
    hits = {}
    for g in wanted:
        atom_ = _goal_atom(model, guess, g)
        if atom_ is not None:
            hits[g] = atom_
    if not hits:
        return
    split = _nonunique_step(guess, model)
    if split is None:
        for g, atom_ in hits.items():
            on_found(g, program, atom_, pins)
        return
    site, states = split
    for state in states:
        remaining = [g for g in hits if g not in on_found.found]
        if not remaining:
            return
        _solve_guess(s, guess, machine, remaining, {**pins, site: state}, on_found, counter)


class _Collector:
    def __init__(self):
        self.found: dict = {}

    def __call__(self, goal, program, atom_, pins):
        self.found.setdefault(goal, (program, atom_, pins))


def _search(s: SystemSpec, goals: list, on_guess=None):
    check_loop_free_class(s)
    machine = _machine(s)
    collector = _Collector()
    counter = [0]
    for guess in enumerate_guesses(s):
        wanted = [g for g in goals if g not in collector.found]
        if not wanted:
            break
        before = set(collector.found)
        _solve_guess(s, guess, machine, wanted, {}, collector, counter)
        if on_guess is not None:
            for g in set(collector.found) - before:
                on_guess(g, guess)
    return collector, counter[0]


def _solve_alone(job):
    s, guess, goal = job
    collector = _Collector()
    counter = [0]
    _solve_guess(s, guess, _machine(s), [goal], {}, collector, counter)
    return collector.found.get(goal), counter[0]


def _parallel_search(s: SystemSpec, goal: GoalSpec, jobs: int):
    """Guesses are independent, so workers take them in batches.  The first
    successful guess in enumeration order wins, which makes the answer the
    same for every worker count."""
    guesses = enumerate_guesses(s)
    count = 0
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        while True:
            batch = list(islice(guesses, jobs * 4))
            if not batch:
                return None, count
            results = pool.map(_solve_alone, [(s, g, goal) for g in batch])
            for guess, (found, used) in zip(batch, results):
                count += used
                if found is not None:
                    return (guess, found), count


def solve_via_datalog(s: SystemSpec, goal: GoalSpec, jobs: int = 1):
    """Generable iff some guess yields an instance deriving a goal atom.

    With `jobs` > 1 the guesses are solved by that many worker processes.
    """
    check_loop_free_class(s)
    _check_goal(s, goal)
    if jobs > 1:
        hit, count = _parallel_search(s, goal, jobs)
        if hit is None:
            return DatalogNotGenerable(count)
        guess, (program, atom_, pins) = hit
        inst = QueryInstance(program, atom_, guess, tuple(sorted(pins.items())))
        return DatalogGenerable(inst, atom_, count)
    guesses = {}
    collector, count = _search(s, [goal], lambda g, guess: guesses.setdefault(g, guess))
    if goal in collector.found:
        program, atom_, pins = collector.found[goal]
        inst = QueryInstance(program, atom_, guesses[goal], tuple(sorted(pins.items())))
        return DatalogGenerable(inst, atom_, count)
    return DatalogNotGenerable(count)


def datalog_generable_pairs(s: SystemSpec) -> frozenset:
    """All (var, value) pairs the Datalog route generates."""
    goals = [GoalSpec(x, d) for x in s.vars for d in range(s.dom)]
    collector, _ = _search(s, goals)
    return frozenset((g.var, g.val) for g in collector.found)


def emit_instance(inst: QueryInstance, path: str, linear_k: Optional[int] = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"% goal: {inst.goal}\n")
        fh.write(export_text(inst.program))
    if linear_k is not None:
        with open(path + f".linear{linear_k}", "w", encoding="utf-8") as fh:
            fh.write(export_text(linearize(inst.program, linear_k)))
