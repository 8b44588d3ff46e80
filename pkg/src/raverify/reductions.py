"""Program generators for hardness reductions, plus bundled example systems.

Three constructions live here:

* `qbf_to_purera` turns a quantified boolean formula into an env-only,
  register-light system whose goal is generable exactly when the formula is
  true.
* `succinct_sat_to_leader` turns a circuit describing an exponentially large
  3CNF formula into a leader system whose goal is generable exactly when the
  formula is satisfiable.
* `dis_to_env_acyc` rewrites a set of distinguished (possibly looping)
  programs into one loop-free env program that simulates them, using CAS on a
  per-thread lock variable to hand control state, view and registers from one
  env thread to the next.

The boolean gadgets share one encoding trick: a variable pair (t_p, f_p) is
only ever written with value 1, so "load reads 0" succeeds exactly when the
thread's view of that variable is still at the initial message.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Optional, Sequence, Union

from .program_ir import (
    ARITH_OPS, AssertFalse, Assign, Assume, BinOp, Cas, Command, Const, GoalSpec, Load,
    Reg, Skip, Star, Store, SystemSpec, ThreadDecl, _apply, _fresh, assert_to_goal,
    choice, leaves, map_leaves, parse_system, seq, to_lts,
)

SCRATCH = "r"


def _test(var: str, value: int, reg: str = SCRATCH) -> Command:
    """Load `var` into a scratch register and require it to equal `value`."""
    return seq(Load(reg, var), Assume(BinOp("=", Reg(reg), Const(value))))


def _set(var: str) -> Command:
    return Store(var, Const(1))


# ------------------------------------------------------------------------ QBF

_LIT_RE = re.compile(r"^(-|~|!)?([ue])(\d+)$")


@dataclass(frozen=True)
class QBF:
    """forall u0 exists e1 forall u1 ... exists en forall un . matrix

    `clauses` is a tuple of clauses; each clause is a tuple of literals
    written as strings such as "u0", "-e1" or "~u2".
    """

    n: int
    clauses: tuple

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if not self.clauses:
            raise ValueError("a QBF needs at least one clause")
        known = set(self.variables())
        for clause in self.clauses:
            if not clause:
                raise ValueError("empty clause")
            for lit in clause:
                name, _ = parse_literal(lit)
                if name not in known:
                    raise ValueError(f"literal {lit!r} uses an undeclared variable")

    def variables(self) -> list:
        """Variables in quantifier order: u0, e1, u1, ..., en, un."""
        out = ["u0"]
        for i in range(1, self.n + 1):
            out += [f"e{i}", f"u{i}"]
        return out


def parse_literal(lit: str) -> tuple:
    m = _LIT_RE.match(lit.strip())
    if not m:
        raise ValueError(f"bad literal {lit!r}")
    return m.group(2) + m.group(3), m.group(1) is None


def parse_clauses(text: str) -> tuple:
    """Parse "u0 | -e1 | u1 & -u0 | e1" into a clause tuple."""
    clauses = []
    for part in text.split("&"):
        lits = tuple(p.strip() for p in part.split("|") if p.strip())
        if not lits:
            raise ValueError("empty clause")
        for lit in lits:
            parse_literal(lit)
        clauses.append(lits)
    return tuple(clauses)


def _satisfied(clauses, assignment: dict) -> bool:
    for clause in clauses:
        if not any(assignment[name] == positive
                   for name, positive in map(parse_literal, clause)):
            return False
    return True


def eval_qbf(q: QBF, max_n: int = 4) -> bool:
    """Truth value by recursion over the quantifier prefix."""
    if q.n > max_n:
        raise ValueError(f"brute-force evaluation is limited to n <= {max_n}")
    order = q.variables()

    def go(i: int, assignment: dict) -> bool:
        if i == len(order):
            return _satisfied(q.clauses, assignment)
        name = order[i]
        results = (go(i + 1, {**assignment, name: b}) for b in (False, True))
        return all(results) if name[0] == "u" else any(results)

    return go(0, {})


def random_qbf(rng, n: int, clauses: int = 4) -> QBF:
    names = QBF(n, (("u0",),)).variables()
    out = []
    for _ in range(clauses):
        lits = tuple(("" if rng.random() < 0.5 else "-") + rng.choice(names) for _ in range(3))
        out.append(lits)
    return QBF(n, tuple(out))


def qbf_to_purera(q: QBF) -> tuple:
    """Env-only system over {0, 1} whose stores all write 1, with the goal
    that replaces its assertion.

    The variable v is read as true when t_v is still at its initial message in
    the view published on s, and as false when f_v is.
    """
    return assert_to_goal(qbf_system(q))


def qbf_system(q: QBF) -> SystemSpec:
    """The system of `qbf_to_purera` with its `assert(false)` still in place."""
    names = q.variables()
    n = q.n
    flag = {}
    vars_ = []
    for name in names:
        flag[name] = (f"t_{name}", f"f_{name}")
        vars_ += list(flag[name])
    vars_.append("s")
    level = {i: (f"a{i}_0", f"a{i}_1") for i in range(n + 1)}
    for i in range(n + 1):
        vars_ += list(level[i])

    def is_true(name):
        return _test(flag[name][0], 0)

    def is_false(name):
        return _test(flag[name][1], 0)

    def publish(i):
        # passes the view on to level i according to the value of u_i
        u = f"u{i}"
        return choice(seq(is_true(u), _set(level[i][1])),
                      seq(is_false(u), _set(level[i][0])))

    guesser = seq(*[choice(_set(flag[v][0]), _set(flag[v][1])) for v in names],
                  _set("s"))
    checks = []
    for clause in q.clauses:
        options = []
        for lit in clause:
            name, positive = parse_literal(lit)
            options.append(is_true(name) if positive else is_false(name))
        checks.append(choice(*options))
    sat_checker = seq(_test("s", 1), *checks, publish(n))
    gadgets = [guesser, sat_checker]
    for i in range(n):
        e = f"e{i + 1}"
        gadgets.append(seq(_test(level[i + 1][0], 1), _test(level[i + 1][1], 1),
                           choice(is_false(e), is_true(e)), publish(i)))
    gadgets.append(seq(_test(level[0][0], 1), _test(level[0][1], 1), AssertFalse()))
    return SystemSpec(tuple(vars_), 2, 0, (SCRATCH,), choice(*gadgets), (), "qbf")


# ---------------------------------------------------------- SuccinctSAT tools

D_T = "d_t"
D_F = "d_f"


def bsp(n: int) -> list:
    """Separator word 1 2 1 3 1 2 1 ... of length 2**n - 1."""
    if n < 1:
        raise ValueError("bsp needs n >= 1")
    word = [1]
    for k in range(2, n + 1):
        word = word + [k] + word
    return word


def _bits_of(beta: Union[int, str, Sequence[int]], n: int) -> list:
    """Bits of a variable address, least significant first."""
    if isinstance(beta, int):
        if not 0 <= beta < 2 ** n:
            raise ValueError("address out of range")
        return [(beta >> j) & 1 for j in range(n)]
    if isinstance(beta, str):
        beta = [int(c) for c in beta]
    if len(beta) != n:
        raise ValueError(f"expected {n} address bits")
    return [int(b) for b in reversed(beta)]


def access_pattern(n: int, beta, sigma: int) -> list:
    """The read sequence that picks bit `beta` of the leader's word.

    `beta` is an integer address or an MSB-first bit string.
    """
    bits = _bits_of(beta, n)
    pattern = [D_T if sigma else D_F]
    for i in range(1, n + 1):
        pattern = [i] + pattern if bits[i - 1] else pattern + [i]
    return pattern


def shuffle_word(n: int, w) -> list:
    """Interleave the assignment `w` (a string over t/f or booleans) with
    the separator word."""
    vals = [D_T if (c == "t" if isinstance(c, str) else c) else D_F for c in w]
    if len(vals) != 2 ** n:
        raise ValueError(f"assignment must have {2 ** n} entries")
    out = [vals[0]]
    for sep, val in zip(bsp(n), vals[1:]):
        out += [sep, val]
    return out


def is_subsequence(pattern: Sequence, word: Sequence) -> bool:
    it = iter(word)
    return all(any(p == c for c in it) for p in pattern)


@dataclass(frozen=True)
class Gate:
    id: str
    kind: str        # "input", "nand" or "output"
    args: tuple = ()
    index: int = -1  # input position or output position


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Circuit:
    """NAND circuit with n inputs and 3n + 3 outputs.

    Output positions k(n+1) .. k(n+1)+n-1 hold the address of the k-th
    literal of the selected clause (least significant bit first) and
    position k(n+1)+n holds its sign (1 = positive).
    """

    n: int
    gates: tuple

    def __post_init__(self):
        self.order()

    def by_id(self) -> dict:
        return {g.id: g for g in self.gates}

    def order(self) -> list:
        """Validate and return the non-output gates in topological order."""
        if self.n < 1:
            raise CircuitError("circuit needs at least one input")
        table = {}
        for g in self.gates:
            if g.id in table:
                raise CircuitError(f"duplicate gate id {g.id!r}")
            if g.kind not in ("input", "nand", "output"):
                raise CircuitError(f"unknown gate kind {g.kind!r}")
            table[g.id] = g
        inputs = sorted(g.index for g in self.gates if g.kind == "input")
        if inputs != list(range(self.n)):
            raise CircuitError(f"inputs must be numbered 0..{self.n - 1} exactly once")
        outputs = sorted(g.index for g in self.gates if g.kind == "output")
        if outputs != list(range(3 * self.n + 3)):
            raise CircuitError(f"outputs must be numbered 0..{3 * self.n + 2} exactly once")
        graph = {}
        for g in self.gates:
            want = {"input": 0, "nand": 2, "output": 1}[g.kind]
            if len(g.args) != want:
                raise CircuitError(f"gate {g.id!r} needs {want} operands")
            for a in g.args:
                if a not in table:
                    raise CircuitError(f"gate {g.id!r} uses unknown gate {a!r}")
                if table[a].kind == "output":
                    raise CircuitError(f"gate {g.id!r} reads output tag {a!r}")
            if g.kind != "output":
                graph[g.id] = set(g.args)
        try:
            ordered = list(TopologicalSorter(graph).static_order())
        except CycleError as exc:
            raise CircuitError("circuit is cyclic") from exc
        return [table[i] for i in ordered]

    def outputs(self) -> list:
        """Operand gate id for each output position."""
        tags = sorted((g.index, g.args[0]) for g in self.gates if g.kind == "output")
        return [a for _, a in tags]

    def evaluate(self, address: int) -> list:
        value = {}
        for g in self.order():
            if g.kind == "input":
                value[g.id] = (address >> g.index) & 1
            else:
                a, b = g.args
                value[g.id] = 1 - (value[a] & value[b])
        return [value[a] for a in self.outputs()]

    def clauses(self) -> list:
        """The explicit formula: per clause address, three (variable, sign)
        literals."""
        n = self.n
        out = []
        for address in range(2 ** n):
            bits = self.evaluate(address)
            clause = []
            for k in range(3):
                chunk = bits[k * (n + 1): (k + 1) * (n + 1)]
                var = sum(b << j for j, b in enumerate(chunk[:n]))
                clause.append((var, chunk[n]))
            out.append(tuple(clause))
        return out

    def to_json(self) -> str:
        gates = []
        for g in self.gates:
            entry = {"id": g.id, "kind": g.kind}
            if g.args:
                entry["args"] = list(g.args)
            if g.kind != "nand":
                entry["index"] = g.index
            gates.append(entry)
        return json.dumps({"n": self.n, "gates": gates}, indent=1)


def circuit_from_json(text: str) -> Circuit:
    try:
        data = json.loads(text)
        gates = tuple(Gate(str(g["id"]), g["kind"], tuple(str(a) for a in g.get("args", ())),
                           int(g.get("index", -1))) for g in data["gates"])
        return Circuit(int(data["n"]), gates)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CircuitError(f"malformed circuit: {exc}") from exc


def circuit_from_literals(n: int, literals: Sequence) -> Circuit:
    """Build a circuit whose clause at address c is literals[c].

    Each entry of `literals` is three (variable, sign) pairs.  The circuit is
    a plain lookup table over the address bits; it is meant for small n.
    """
    if len(literals) != 2 ** n:
        raise ValueError(f"need {2 ** n} clauses")
    gates = [Gate(f"y{i}", "input", (), i) for i in range(n)]
    names = {g.id for g in gates}

    def nand(a, b):
        gid = f"g{len(gates)}"
        gates.append(Gate(gid, "nand", (a, b)))
        names.add(gid)
        return gid

    neg = {f"y{i}": nand(f"y{i}", f"y{i}") for i in range(n)}
    one = nand("y0", neg["y0"])
    zero = nand(one, one)

    def conj(ids):
        acc = ids[0]
        for other in ids[1:]:
            t = nand(acc, other)
            acc = nand(t, t)
        return acc

    def disj(ids):
        acc = ids[0]
        for other in ids[1:]:
            acc = nand(nand(acc, acc), nand(other, other))
        return acc

    minterm = {}
    for address in range(2 ** n):
        lits = [f"y{i}" if (address >> i) & 1 else neg[f"y{i}"] for i in range(n)]
        minterm[address] = conj(lits)
    bit_gate = []
    for k in range(3):
        for j in range(n + 1):
            hits = []
            for address, clause in enumerate(literals):
                var, sign = clause[k]
                bit = (var >> j) & 1 if j < n else int(sign)
                if bit:
                    hits.append(minterm[address])
            bit_gate.append(disj(hits) if hits else zero)
    for pos, gid in enumerate(bit_gate):
        gates.append(Gate(f"out{pos}", "output", (gid,), pos))
    return Circuit(n, tuple(gates))


def brute_force_sat(circuit: Circuit) -> bool:
    clauses = circuit.clauses()
    size = 2 ** circuit.n
    for w in itertools.product((False, True), repeat=size):
        if all(any(w[v] == bool(sign) for v, sign in clause) for clause in clauses):
            return True
    return False


def _leader_program(n: int) -> Command:
    """Writes the separator word interleaved with guessed truth values to g.

    Registers b0..b(n-1) form a binary counter; an increment that flips bit i
    from 0 to 1 is followed by the separator i + 1, which is exactly the
    ruler sequence the separator word spells out.
    """
    d_t, d_f = n + 1, n + 2
    guess = choice(Store("g", Const(d_t)), Store("g", Const(d_f)))
    steps = []
    for i in range(n):
        cond = [Assume(BinOp("=", Reg(f"b{j}"), Const(1))) for j in range(i)]
        cond.append(Assume(BinOp("=", Reg(f"b{i}"), Const(0))))
        reset = [Assign(f"b{j}", Const(0)) for j in range(i)]
        steps.append(seq(*cond, *reset, Assign(f"b{i}", Const(1)), Store("g", Const(i + 1))))
    return seq(guess, Star(seq(choice(*steps), guess)))


def succinct_sat_to_leader(d: Circuit) -> tuple:
    """Leader system whose goal is generable iff the circuit's formula is
    satisfiable."""
    return assert_to_goal(succinct_sat_system(d))


def succinct_sat_system(d: Circuit) -> SystemSpec:
    """The system of `succinct_sat_to_leader` with its assertion in place."""
    n = d.n
    d_t, d_f = n + 1, n + 2
    order = d.order()
    node = {}
    vars_ = []
    for pos, g in enumerate(order):
        label = f"u{g.index}" if g.kind == "input" else f"n{pos}"
        node[g.id] = (f"t_{label}", f"f_{label}")
        vars_ += list(node[g.id])
    vars_.append("s")
    level = {i: (f"a{i}_0", f"a{i}_1") for i in range(n)}
    for i in range(n):
        vars_ += list(level[i])
    vars_.append("g")
    inputs = {g.index: g.id for g in order if g.kind == "input"}

    def is_one(gid):
        return _test(node[gid][0], 0)

    def is_zero(gid):
        return _test(node[gid][1], 0)

    def publish(i):
        u = inputs[i]
        return choice(seq(is_one(u), _set(level[i][1])), seq(is_zero(u), _set(level[i][0])))

    encoder = seq(*[choice(_set(node[inputs[i]][0]), _set(node[inputs[i]][1]))
                    for i in range(n)], _set("s"))
    evaluate = []
    for g in order:
        if g.kind != "nand":
            continue
        a, b = g.args
        evaluate.append(choice(seq(choice(is_zero(a), is_zero(b)), _set(node[g.id][1])),
                               seq(is_one(a), is_one(b), _set(node[g.id][0]))))
    outs = d.outputs()
    checks = []
    for k in range(3):
        bits = outs[k * (n + 1): k * (n + 1) + n]
        sign = outs[k * (n + 1) + n]
        high = [choice(seq(is_one(bits[i - 1]), _test("g", i)), is_zero(bits[i - 1]))
                for i in range(n, 0, -1)]
        middle = choice(seq(is_one(sign), _test("g", d_t)), seq(is_zero(sign), _test("g", d_f)))
        low = [choice(seq(is_zero(bits[i - 1]), _test("g", i)), is_one(bits[i - 1]))
               for i in range(1, n + 1)]
        checks.append(seq(*high, middle, *low))
    clause_check = seq(_test("s", 1), *evaluate, choice(*checks), publish(n - 1))
    gadgets = [encoder, clause_check]
    for i in range(n - 1):
        gadgets.append(seq(_test(level[i + 1][0], 1), _test(level[i + 1][1], 1), publish(i)))
    gadgets.append(seq(_test(level[0][0], 1), _test(level[0][1], 1), AssertFalse()))
    regs = (SCRATCH,) + tuple(f"b{i}" for i in range(n))
    leader = ThreadDecl("guess", "ldr", _leader_program(n))
    return SystemSpec(tuple(vars_), n + 3, 0, regs, choice(*gadgets), (leader,), "check")


# ------------------------------------------------------- dis to env (acyclic)

def _regs_in(e) -> list:
    if isinstance(e, Reg):
        return [e.name]
    if isinstance(e, BinOp):
        return _regs_in(e.left) + _regs_in(e.right)
    return []


def _has_arith(e) -> bool:
    return isinstance(e, BinOp) and (e.op in ARITH_OPS or _has_arith(e.left)
                                     or _has_arith(e.right))


def _eval_wrapped(e, env: dict, dom: int) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Reg):
        return env[e.name]
    v = _apply(e.op, _eval_wrapped(e.left, env, dom), _eval_wrapped(e.right, env, dom))
    return v % dom if e.op in ARITH_OPS else v


def _domain_stable(ins, dom: int) -> Command:
    """Rewrite an instruction whose meaning depends on the domain size.

    Arithmetic wraps modulo the domain, which grows when control states are
    added as values, so such instructions become a choice over the values of
    the registers they mention.
    """
    if isinstance(ins, Assign) and isinstance(ins.expr, BinOp):
        expr = ins.expr
    elif isinstance(ins, Assume) and _has_arith(ins.cond):
        expr = ins.cond
    else:
        return ins
    regs = sorted(set(_regs_in(expr)))
    branches = []
    for values in itertools.product(range(dom), repeat=len(regs)):
        env = dict(zip(regs, values))
        guard = [Assume(BinOp("=", Reg(r), Const(v))) for r, v in env.items()]
        result = _eval_wrapped(expr, env, dom)
        if isinstance(ins, Assign):
            branches.append(seq(*guard, Assign(ins.reg, Const(result % dom))))
        elif result != 0:
            branches.append(seq(*guard) if guard else Skip())
    if not branches:
        return Assume(Const(0))
    return choice(*branches)


def _vars_in(programs) -> set:
    out = set()
    for p in programs:
        for ins in leaves(p):
            if isinstance(ins, (Load, Store, Cas)):
                out.add(ins.var)
    return out


def _regs_of(programs) -> list:
    seen = []
    for p in programs:
        for ins in leaves(p):
            names = []
            if isinstance(ins, (Load, Assign)):
                names.append(ins.reg)
            if isinstance(ins, Assign):
                names += _regs_in(ins.expr)
            if isinstance(ins, Assume):
                names += _regs_in(ins.cond)
            if isinstance(ins, Store):
                names += _regs_in(ins.src)
            if isinstance(ins, Cas):
                names += _regs_in(ins.expected) + _regs_in(ins.new)
            for r in names:
                if r not in seen:
                    seen.append(r)
    return seen


@dataclass(frozen=True)
class EnvSimulation:
    program: Command
    locks: tuple       # lock variable per input program
    saves: tuple       # per input program, the register save variables
    dom: int
    release: int       # value a held lock carries

    def state_value(self, state: int) -> int:
        return 0 if state == 0 else self.release + state

    @property
    def new_vars(self) -> tuple:
        return tuple(self.locks) + tuple(v for group in self.saves for v in group)


def _simulate_as_env(programs: Sequence[Command], regs: Sequence[str], dom: int,
                     taken: Iterable[str]) -> EnvSimulation:
    if not programs:
        raise ValueError("nothing to transform")
    taken = set(taken) | _vars_in(programs)
    release = dom
    ltss = [to_lts(p) for p in programs]
    new_dom = dom + max(lts.n_states for lts in ltss)

    def value(q):
        return 0 if q == 0 else release + q

    locks, saves, parts = [], [], []
    for i, lts in enumerate(ltss, start=1):
        lock = _fresh(f"lock{i}", taken)
        taken.add(lock)
        save = []
        for r in regs:
            name = _fresh(f"save{i}_{r}", taken)
            taken.add(name)
            save.append(name)
        locks.append(lock)
        saves.append(tuple(save))
        paths = []
        for src, ins, dst in lts.transitions:
            paths.append(seq(
                Cas(lock, Const(value(src)), Const(release)),
                *[Load(r, v) for r, v in zip(regs, save)],
                _domain_stable(ins, dom),
                *[Store(v, Reg(r)) for r, v in zip(regs, save)],
                Cas(lock, Const(release), Const(value(dst))),
            ))
        parts.append(choice(*paths))
    return EnvSimulation(choice(*parts), tuple(locks), tuple(saves), new_dom, release)


def dis_to_env_acyc(programs: Sequence[Command], regs: Optional[Sequence[str]] = None,
                    dom: Optional[int] = None, taken: Iterable[str] = ()) -> Command:
    """One loop-free program whose env threads jointly simulate `programs`.

    Every transition of every input program becomes a path that takes the
    program's lock by CAS from the source state value, reloads the saved
    registers, runs the instruction, saves the registers and releases the
    lock by CAS to the target state value.  The initial state is encoded by
    the initial memory value 0, every other state q by dom + q, and a held
    lock by dom itself.
    """
    regs = list(regs) if regs is not None else _regs_of(programs)
    if dom is None:
        consts = [0]
        for p in programs:
            for ins in leaves(p):
                for e in (getattr(ins, a, None) for a in ("expr", "cond", "src", "expected", "new")):
                    if e is not None:
                        consts += [c.value for c in _consts(e)]
        dom = max(consts) + 1
    return _simulate_as_env(programs, regs, dom, taken).program


def _consts(e):
    if isinstance(e, Const):
        yield e
    elif isinstance(e, BinOp):
        yield from _consts(e.left)
        yield from _consts(e.right)


def dis_to_env_system(s: SystemSpec) -> SystemSpec:
    """The env-only system simulating every distinguished thread of `s`.

    An env program already present in `s` is kept as one more branch.
    """
    if s.init != 0:
        raise ValueError("the transformation needs initial value 0")
    if not s.threads:
        raise ValueError("no distinguished threads to transform")
    sim = _simulate_as_env([t.program for t in s.threads], s.regs, s.dom, s.vars)
    env, name = sim.program, "sim"
    if s.env is not None:
        env = choice(map_leaves(s.env, lambda ins: _domain_stable(ins, s.dom)), env)
        name = s.env_name
    return SystemSpec(s.vars + sim.new_vars, sim.dom, 0, s.regs, env, (), name)


# ------------------------------------------------------------------- examples

DEKKER_SOURCE = """\
vars x, y, c; domain 2; regs r1, r2;
dis t1 { r1 := 1; store x r1; r1 := load y; assume(r1 = 0); store c 1 }
dis t2 { r1 := 1; store y r1; r1 := load x; assume(r1 = 0); r2 := load c; assume(r2 = 1); assert(false) }
"""

SMOKE_SOURCE = """\
vars x, y; domain 2; regs r1;
dis t { store x 1; r1 := load x;
        store y r1 }
"""


def prodcons_source(l: int, z: int) -> str:
    """Producers publish values 1..l on x once the consumer raised y; the
    consumer must read the cyclic pattern 2, 3, ..., l, 1, 2, ... z times."""
    if l < 1 or z < 1:
        raise ValueError("l and z must be positive")
    stores = " or ".join(f"{{store x {v}}}" for v in range(1, l + 1))
    reads = " ".join(f"r1 := load x; assume(r1 = {i % l + 1});" for i in range(1, z + 1))
    return (f"vars x, y; domain {l + 1}; regs r1;\n"
            f"env producer {{ r1 := load y; assume(r1 = 1); {stores} }}\n"
            f"ldr consumer {{ store y 1; {reads} assert(false) }}\n")


def prodcons(l: int = 2, z: int = 3) -> tuple:
    return assert_to_goal(parse_system(prodcons_source(l, z)))


def dekker() -> tuple:
    return assert_to_goal(parse_system(DEKKER_SOURCE))


def smoke() -> tuple:
    return parse_system(SMOKE_SOURCE), GoalSpec("y", 1)


def example_sources(l: int = 2, z: int = 3) -> dict:
    return {"dekker": DEKKER_SOURCE, "prodcons": prodcons_source(l, z), "smoke": SMOKE_SOURCE}


def builtin_examples(l: int = 2, z: int = 3) -> dict:
    """Named (system, goal) pairs: dekker, prodcons and smoke."""
    return {"dekker": dekker(), "prodcons": prodcons(l, z), "smoke": smoke()}
