"""Concrete release-acquire semantics with explicit timestamps.

Configurations hold a message pool and per-thread local configurations.
Exploration works on canonical configurations: timestamps of every variable
are renumbered so that CAS-glued pairs stay adjacent and every other pair of
neighbouring timestamps leaves a gap, and env threads are sorted.  Witness
traces are rebuilt by replaying the search path and mapping every message to
its position in the final canonical numbering.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional

from .program_ir import (
    Assign, AssertFalse, Assume, Cas, GoalSpec, Load, Skip, Store, SystemSpec,
    compile_expr, to_lts,
)

# ------------------------------------------------------------------ state types


class Message(NamedTuple):
    var: int
    val: int
    view: tuple

    @property
    def ts(self) -> int:
        return self.view[self.var]


class LocalConfig(NamedTuple):
    ctrl: int
    rv: tuple
    view: tuple


class Config(NamedTuple):
    memory: frozenset
    threads: tuple          # LocalConfig per slot
    tids: tuple             # thread id per slot
    roles: tuple            # "env" | "dis" | "ldr" per slot
    programs: tuple         # program name per slot

    def slot(self, tid: int) -> int:
        return self.tids.index(tid)


class Step(NamedTuple):
    tid: int
    kind: str               # "silent" | "ld" | "st" | "cas"
    to: int                 # control state reached
    msgs: tuple             # loaded and/or stored messages


@dataclass
class Trace:
    vars: tuple
    initial: Config
    steps: list = field(default_factory=list)

    def __len__(self):
        return len(self.steps)


def msg_conflict_free(m1: Message, m2: Message) -> bool:
    if m1.var != m2.var:
        return True
    t1, t2 = m1.ts, m2.ts
    return t1 != t2 or (t1 == 0 and t2 == 0)


def join(a: tuple, b: tuple) -> tuple:
    return tuple(x if x >= y else y for x, y in zip(a, b))


def set_entry(view: tuple, i: int, value) -> tuple:
    return view[:i] + (value,) + view[i + 1:]


# ----------------------------------------------------------------- compilation


class Edge(NamedTuple):
    kind: str           # "silent" | "ld" | "st" | "cas" | "assert"
    to: int
    var: int            # -1 when unused
    fn: Callable        # silent: rv -> rv | None; st: rv -> value; ld: register index
    fn2: Callable       # cas: new value
    instr: object


class ThreadCode:
    def __init__(self, program, var_index: dict, reg_index: dict, dom: int):
        self.lts = to_lts(program)
        self.out: dict = {}
        for src, ins, dst in self.lts.transitions:
            self.out.setdefault(src, []).append(_compile_edge(ins, dst, var_index, reg_index, dom))
        self.size = self.lts.n_states

    def edges(self, ctrl: int):
        return self.out.get(ctrl, ())

    def edge_to(self, ctrl: int, to: int) -> Optional[Edge]:
        for e in self.out.get(ctrl, ()):
            if e.to == to:
                return e
        return None


def _compile_edge(ins, dst, var_index, reg_index, dom) -> Edge:
    if isinstance(ins, Skip):
        return Edge("silent", dst, -1, lambda rv: rv, None, ins)
    if isinstance(ins, Assume):
        cond = compile_expr(ins.cond, reg_index, dom)
        return Edge("silent", dst, -1, lambda rv: rv if cond(rv) != 0 else None, None, ins)
    if isinstance(ins, Assign):
        value = compile_expr(ins.expr, reg_index, dom)
        i = reg_index[ins.reg]
        return Edge("silent", dst, -1, lambda rv: set_entry(rv, i, value(rv) % dom), None, ins)
    if isinstance(ins, Load):
        return Edge("ld", dst, var_index[ins.var], reg_index[ins.reg], None, ins)
    if isinstance(ins, Store):
        value = compile_expr(ins.src, reg_index, dom)
        return Edge("st", dst, var_index[ins.var], lambda rv: value(rv) % dom, None, ins)
    if isinstance(ins, Cas):
        expected = compile_expr(ins.expected, reg_index, dom)
        new = compile_expr(ins.new, reg_index, dom)
        return Edge("cas", dst, var_index[ins.var], lambda rv: expected(rv) % dom,
                    lambda rv: new(rv) % dom, ins)
    if isinstance(ins, AssertFalse):
        return Edge("assert", dst, -1, None, None, ins)
    raise TypeError(f"unknown instruction {ins!r}")


class Machine:
    """A system together with a fixed thread layout."""

    def __init__(self, spec: SystemSpec, layout: Iterable):
        self.spec = spec
        self.var_index = {v: i for i, v in enumerate(spec.vars)}
        self.reg_index = {r: i for i, r in enumerate(spec.regs)}
        self.nvars = len(spec.vars)
        self.dom = spec.dom
        self.layout = tuple(layout)
        self.codes: dict = {}
        for role, name in self.layout:
            key = (role == "env", name)
            if key not in self.codes:
                self.codes[key] = ThreadCode(self._program(role, name), self.var_index,
                                             self.reg_index, spec.dom)
        self.slot_codes = tuple(self.codes[(role == "env", name)] for role, name in self.layout)
        self.env_slots = tuple(i for i, (role, _) in enumerate(self.layout) if role == "env")
        self.n_fixed = sum(1 for role, _ in self.layout if role != "env")

    def _program(self, role, name):
        if role == "env":
            if self.spec.env is None:
                raise ValueError("system has no env program")
            return self.spec.env
        for t in self.spec.threads:
            if t.name == name:
                return t.program
        raise ValueError(f"unknown thread {name}")

    @classmethod
    def with_replicas(cls, spec: SystemSpec, n_env: int) -> "Machine":
        layout = [(t.role, t.name) for t in spec.threads]
        if n_env and spec.env is None:
            raise ValueError("nEnv > 0 requires an env program")
        layout += [("env", spec.env_name)] * n_env
        return cls(spec, layout)

    @classmethod
    def for_config(cls, spec: SystemSpec, cf: Config) -> "Machine":
        return cls(spec, zip(cf.roles, cf.programs))

    def initial_config(self, tids: Optional[tuple] = None) -> Config:
        zero = (0,) * self.nvars
        memory = frozenset(Message(i, self.spec.init, zero) for i in range(self.nvars))
        rv = (0,) * len(self.spec.regs)
        threads = tuple(LocalConfig(0, rv, zero) for _ in self.layout)
        tids = tids if tids is not None else tuple(range(len(self.layout)))
        return Config(memory, threads, tids, tuple(r for r, _ in self.layout),
                      tuple(n for _, n in self.layout))

    def var_name(self, i: int) -> str:
        return self.spec.vars[i]


# ------------------------------------------------------------------- stepping


def _used(memory, var: int) -> set:
    return {m.view[var] for m in memory if m.var == var}


def _store_slots(used: set, low: int, horizon: Optional[int]) -> list:
    """Timestamps a store may pick above `low`.

    With a horizon, every free slot up to it.  Without one the memory is
    assumed canonical and one representative per gap is returned.
    """
    if horizon is not None:
        return [t for t in range(low + 1, horizon + 1) if t not in used]
    order = sorted(used)
    slots = []
    for i, u in enumerate(order):
        if u < low:
            continue
        nxt = order[i + 1] if i + 1 < len(order) else None
        if nxt is None or nxt - u > 2:
            slots.append(u + 2)
    return slots


def local_successors(machine: Machine, memory: frozenset, slot: int, lc: LocalConfig,
                     horizon: Optional[int] = None):
    """Yield (kind, to, msgs, new_local) for every move of one thread."""
    code = machine.slot_codes[slot]
    for e in code.edges(lc.ctrl):
        kind = e.kind
        if kind == "silent":
            rv = e.fn(lc.rv)
            if rv is not None:
                yield "silent", e.to, (), LocalConfig(e.to, rv, lc.view)
        elif kind == "ld":
            x = e.var
            low = lc.view[x]
            for m in sorted(memory):
                if m.var == x and m.view[x] >= low:
                    rv = set_entry(lc.rv, e.fn, m.val)
                    yield "ld", e.to, (m,), LocalConfig(e.to, rv, join(lc.view, m.view))
        elif kind == "st":
            x = e.var
            val = e.fn(lc.rv)
            used = _used(memory, x)
            for t in _store_slots(used, lc.view[x], horizon):
                view = set_entry(lc.view, x, t)
                yield "st", e.to, (Message(x, val, view),), LocalConfig(e.to, lc.rv, view)
        elif kind == "cas":
            x = e.var
            expected = e.fn(lc.rv)
            new = e.fn2(lc.rv)
            used = _used(memory, x)
            low = lc.view[x]
            for m in sorted(memory):
                if m.var != x or m.val != expected:
                    continue
                t = m.view[x]
                if t < low or t + 1 in used:
                    continue
                view = set_entry(join(lc.view, m.view), x, t + 1)
                yield "cas", e.to, (m, Message(x, new, view)), LocalConfig(e.to, lc.rv, view)
        # "assert" edges never fire: systems are rewritten by assert_to_goal


def step_concrete(machine: Machine, cf: Config, tid: int, horizon: Optional[int] = None):
    """All successors of `cf` by a move of thread `tid`."""
    slot = cf.slot(tid)
    result = []
    for kind, to, msgs, new_lc in local_successors(machine, cf.memory, slot, cf.threads[slot],
                                                   horizon):
        memory = cf.memory
        if kind in ("st", "cas"):
            memory = memory | {msgs[-1]}
        threads = cf.threads[:slot] + (new_lc,) + cf.threads[slot + 1:]
        result.append((Step(tid, kind, to, msgs), cf._replace(memory=memory, threads=threads)))
    return result


class Invalid(NamedTuple):
    step: int
    rule: str

    def __bool__(self):
        return False


class Valid(NamedTuple):
    final: Config

    def __bool__(self):
        return True


class StepError(Exception):
    def __init__(self, rule: str):
        super().__init__(rule)
        self.rule = rule


def apply_step(machine: Machine, cf: Config, step: Step) -> Config:
    """Apply one recorded step, checking every side condition of the rules."""
    try:
        slot = cf.tids.index(step.tid)
    except ValueError:
        raise StepError("unknown thread") from None
    lc = cf.threads[slot]
    e = machine.slot_codes[slot].edge_to(lc.ctrl, step.to)
    if e is None:
        raise StepError("ctrl")
    kind = "silent" if e.kind == "silent" else e.kind
    if kind == "assert":
        raise StepError("assert")
    if kind != step.kind:
        raise StepError("kind")
    msgs = step.msgs
    memory = cf.memory
    if kind == "silent":
        if msgs:
            raise StepError("kind")
        rv = e.fn(lc.rv)
        if rv is None:
            raise StepError("assume")
        new_lc = LocalConfig(e.to, rv, lc.view)
    elif kind == "ld":
        if len(msgs) != 1:
            raise StepError("kind")
        m = msgs[0]
        if m.var != e.var:
            raise StepError("variable")
        if m not in memory:
            raise StepError("msg ∈ m")
        if lc.view[e.var] > m.ts:
            raise StepError("view order")
        new_lc = LocalConfig(e.to, set_entry(lc.rv, e.fn, m.val), join(lc.view, m.view))
    elif kind == "st":
        if len(msgs) != 1:
            raise StepError("kind")
        m = msgs[0]
        x = e.var
        if m.var != x:
            raise StepError("variable")
        if m.val != e.fn(lc.rv):
            raise StepError("value")
        if m.ts <= lc.view[x] or m.view != set_entry(lc.view, x, m.ts):
            raise StepError("view order")
        if any(not msg_conflict_free(m, other) for other in memory):
            raise StepError("msg # m")
        memory = memory | {m}
        new_lc = LocalConfig(e.to, lc.rv, m.view)
    else:
        if len(msgs) != 2:
            raise StepError("kind")
        ml, ms = msgs
        x = e.var
        if ml.var != x or ms.var != x:
            raise StepError("variable")
        if ml not in memory:
            raise StepError("msg ∈ m")
        if ml.val != e.fn(lc.rv) or ms.val != e.fn2(lc.rv):
            raise StepError("value")
        if lc.view[x] > ml.ts:
            raise StepError("view order")
        if ms.ts != ml.ts + 1:
            raise StepError("cas adjacency")
        if ms.view != set_entry(join(lc.view, ml.view), x, ms.ts):
            raise StepError("view order")
        if any(not msg_conflict_free(ms, other) for other in memory):
            raise StepError("msg # m")
        memory = memory | {ms}
        new_lc = LocalConfig(e.to, lc.rv, ms.view)
    threads = cf.threads[:slot] + (new_lc,) + cf.threads[slot + 1:]
    return cf._replace(memory=memory, threads=threads)


def validate_run(trace: Trace, spec: SystemSpec):
    """Replay a trace; Valid(final) or Invalid(step index, violated rule)."""
    machine = Machine.for_config(spec, trace.initial)
    cf = trace.initial
    nvars = len(spec.vars)
    zero = (0,) * nvars
    for i in range(nvars):
        if Message(i, spec.init, zero) not in cf.memory:
            return Invalid(-1, "initial memory")
    mems = sorted(cf.memory)
    for i, a in enumerate(mems):
        for b in mems[i + 1:]:
            if not msg_conflict_free(a, b):
                return Invalid(-1, "msg # m")
    for index, step in enumerate(trace.steps):
        try:
            cf = apply_step(machine, cf, step)
        except StepError as err:
            return Invalid(index, err.rule)
    return Valid(cf)


# ------------------------------------------------------------ canonicalization


def _canonical_maps(memory: frozenset, nvars: int) -> list:
    maps = []
    for x in range(nvars):
        used = sorted(_used(memory, x))
        mapping = {}
        prev_old, prev_new = None, 0
        for t in used:
            if prev_old is None:
                new = 0 if t == 0 else 4
            elif t - prev_old == 1:
                new = prev_new + 1
            else:
                new = prev_new + 4
            mapping[t] = new
            prev_old, prev_new = t, new
        maps.append(mapping)
    return maps


def _rename_view(view: tuple, maps: list) -> tuple:
    return tuple(maps[i][t] for i, t in enumerate(view))


def _rename_msg(m: Message, maps: list) -> Message:
    return Message(m.var, m.val, _rename_view(m.view, maps))


def canonicalize(machine: Machine, threads: tuple, memory: frozenset):
    """Return (threads, memory, maps, order) where order[k] is the raw slot
    that ends up at canonical slot k."""
    maps = _canonical_maps(memory, machine.nvars)
    new_mem = frozenset(_rename_msg(m, maps) for m in memory)
    renamed = [LocalConfig(lc.ctrl, lc.rv, _rename_view(lc.view, maps)) for lc in threads]
    order = list(range(len(threads)))
    if len(machine.env_slots) > 1:
        env = sorted(machine.env_slots, key=lambda s: renamed[s])
        for k, s in zip(machine.env_slots, env):
            order[k] = s
    return tuple(renamed[s] for s in order), new_mem, maps, order


# ---------------------------------------------------------------- exploration


class Reachable(NamedTuple):
    trace: Trace
    nodes: int


class NotFoundWithinBounds(NamedTuple):
    exhausted: bool
    budget_exceeded: bool
    nodes: int
    generated: frozenset = frozenset()   # (var name, value) pairs seen


def explore_concrete(spec: SystemSpec, n_env: int, max_depth: int, goal: Optional[GoalSpec] = None,
                     ts_horizon: Optional[int] = None, max_nodes: int = 10 ** 6,
                     por: bool = True):
    """Breadth-first search over canonical configurations.

    With a goal, stops at the first configuration whose memory holds a
    (goal.var, goal.val, ·) message and returns a replayable Trace.  Without a
    goal, explores up to the bounds and reports every generated (var, value).
    """
    machine = Machine.with_replicas(spec, n_env)
    cf0 = machine.initial_config()
    horizon = ts_horizon if ts_horizon is not None else max_depth
    goal_key = None
    if goal is not None:
        if goal.var not in machine.var_index:
            raise ValueError(f"unknown goal variable {goal.var}")
        goal_key = (machine.var_index[goal.var], goal.val)
    start = (cf0.threads, cf0.memory)
    generated = {(m.var, m.val) for m in cf0.memory}
    if goal_key in generated:
        return Reachable(Trace(spec.vars, cf0, []), 1)
    parents = {start: None}
    frontier = [start]
    depth = 0
    depth_cut = False
    while frontier:
        if depth >= max_depth:
            depth_cut = True
            break
        depth += 1
        nxt = []
        for state in frontier:
            threads, memory = state
            for slot, kind, to, msgs, new_lc in _expand(machine, threads, memory, horizon, por,
                                                        parents):
                new_mem = memory | {msgs[-1]} if kind in ("st", "cas") else memory
                raw = threads[:slot] + (new_lc,) + threads[slot + 1:]
                c_threads, c_mem, maps, _ = canonicalize(machine, raw, new_mem)
                key = (c_threads, c_mem)
                if key in parents:
                    continue
                parents[key] = (state, Step(slot, kind, to, msgs))
                if kind in ("st", "cas"):
                    pair = (msgs[-1].var, msgs[-1].val)
                    generated.add(pair)
                    if pair == goal_key:
                        trace = _rebuild(machine, spec, parents, key)
                        return Reachable(trace, len(parents))
                if len(parents) >= max_nodes:
                    return NotFoundWithinBounds(False, True, len(parents),
                                                _named(spec, generated))
                nxt.append(key)
        frontier = nxt
    return NotFoundWithinBounds(not depth_cut, False, len(parents), _named(spec, generated))


def _named(spec, pairs) -> frozenset:
    return frozenset((spec.vars[x], d) for x, d in pairs)


def _expand(machine, threads, memory, horizon, por, parents):
    """Successor moves of a canonical state.

    Partial-order reduction: when some thread has only silent moves enabled,
    only that thread is expanded (a silent move is invisible to the others and
    stays enabled).  The reduction is dropped if it would only lead back to
    already visited states (cycle proviso).
    """
    per_slot = []
    for slot, lc in enumerate(threads):
        moves = []
        for kind, to, msgs, new_lc in local_successors(machine, memory, slot, lc):
            if kind in ("st", "cas") and msgs[-1].ts > _horizon_limit(memory, msgs[-1].var, horizon):
                continue
            moves.append((slot, kind, to, msgs, new_lc))
        per_slot.append(moves)
    if por:
        for slot, moves in enumerate(per_slot):
            if moves and all(mv[1] == "silent" for mv in moves):
                if slot in machine.env_slots and _has_twin(machine, threads, slot):
                    continue
                fresh = False
                for mv in moves:
                    raw = threads[:slot] + (mv[4],) + threads[slot + 1:]
                    c_threads, c_mem, _, _ = canonicalize(machine, raw, memory)
                    if (c_threads, c_mem) not in parents:
                        fresh = True
                        break
                if fresh:
                    return moves
    return [mv for moves in per_slot for mv in moves]


def _has_twin(machine, threads, slot) -> bool:
    return any(s != slot and threads[s] == threads[slot] for s in machine.env_slots)


def _horizon_limit(memory, var, horizon) -> int:
    # canonical timestamps are spaced by 4; the horizon bounds how many
    # distinct positions above the current maximum may be used
    used = _used(memory, var)
    return max(used) + 4 * max(horizon, 1)


def _rebuild(machine: Machine, spec: SystemSpec, parents: dict, key) -> Trace:
    path = []
    while parents[key] is not None:
        prev, step = parents[key]
        path.append(step)
        key = prev
    path.reverse()
    cf0 = machine.initial_config()
    threads, memory = cf0.threads, cf0.memory
    perm = list(range(len(threads)))     # canonical slot -> physical tid
    recorded: list = []
    for step in path:
        slot = step.tid
        cf = Config(memory, threads, tuple(range(len(threads))), cf0.roles, cf0.programs)
        nxt = apply_step(machine, cf, step)
        recorded.append(Step(perm[slot], step.kind, step.to, step.msgs))
        c_threads, c_mem, maps, order = canonicalize(machine, nxt.threads, nxt.memory)
        recorded = [Step(s.tid, s.kind, s.to, tuple(_rename_msg(m, maps) for m in s.msgs))
                    for s in recorded]
        perm = [perm[o] for o in order]
        threads, memory = c_threads, c_mem
    dense = _dense_maps(memory, machine.nvars)
    steps = [Step(s.tid, s.kind, s.to, tuple(_rename_msg(m, dense) for m in s.msgs))
             for s in recorded]
    return Trace(spec.vars, cf0, steps)


def _dense_maps(memory, nvars) -> list:
    maps = []
    for x in range(nvars):
        used = sorted(_used(memory, x))
        maps.append({t: i for i, t in enumerate(used)})
    return maps


# ------------------------------------------------------------------ simulation


def simulate(spec: SystemSpec, n_env: int, depth: int, seed: int = 0) -> Trace:
    """One random run of at most `depth` steps."""
    rng = random.Random(seed)
    machine = Machine.with_replicas(spec, n_env)
    cf = machine.initial_config()
    trace = Trace(spec.vars, cf, [])
    for _ in range(depth):
        top = max((m.ts for m in cf.memory), default=0)
        options = []
        for tid in cf.tids:
            options.extend(step_concrete(machine, cf, tid, horizon=top + 2))
        if not options:
            break
        step, cf = options[rng.randrange(len(options))]
        trace.steps.append(step)
    return trace


# ------------------------------------------------------------ trace algebra


class TimestampLifting:
    """Per-variable timestamp maps; variables without a map are unchanged."""

    def __init__(self, maps: Optional[dict] = None):
        self.maps = dict(maps or {})

    def apply(self, var: str, t: int) -> int:
        f = self.maps.get(var)
        if f is None:
            return t
        if callable(f):
            return f(t)
        return f[t]


class LiftingError(ValueError):
    pass


def trace_timestamps(trace: Trace) -> dict:
    """Every timestamp (own or inside a view) used in the trace, per variable."""
    used = {x: {0} for x in range(len(trace.vars))}
    views = [m.view for m in trace.initial.memory] + [lc.view for lc in trace.initial.threads]
    for s in trace.steps:
        views.extend(m.view for m in s.msgs)
    for v in views:
        for x, t in enumerate(v):
            used[x].add(t)
    return used


def cas_pairs(trace: Trace) -> set:
    return {(s.msgs[0].var, s.msgs[0].ts) for s in trace.steps if s.kind == "cas"}


def check_lifting(trace: Trace, lifting: TimestampLifting) -> None:
    used = trace_timestamps(trace)
    for x, ts in used.items():
        name = trace.vars[x]
        if lifting.apply(name, 0) != 0:
            raise LiftingError(f"lifting of {name} does not fix 0")
        order = sorted(ts)
        images = [lifting.apply(name, t) for t in order]
        if any(b <= a for a, b in zip(images, images[1:])):
            raise LiftingError(f"lifting of {name} is not strictly increasing")
    for x, t in cas_pairs(trace):
        name = trace.vars[x]
        if lifting.apply(name, t + 1) != lifting.apply(name, t) + 1:
            raise LiftingError(f"lifting of {name} breaks the CAS pair ({t}, {t + 1})")


def _map_trace(trace: Trace, fn: Callable[[int, int], int]) -> Trace:
    def mv(view):
        return tuple(fn(x, t) for x, t in enumerate(view))

    def mm(m):
        return Message(m.var, m.val, mv(m.view))

    init = trace.initial
    initial = init._replace(memory=frozenset(mm(m) for m in init.memory),
                            threads=tuple(lc._replace(view=mv(lc.view)) for lc in init.threads))
    steps = [Step(s.tid, s.kind, s.to, tuple(mm(m) for m in s.msgs)) for s in trace.steps]
    return Trace(trace.vars, initial, steps)


def lift_trace(trace: Trace, lifting: TimestampLifting) -> Trace:
    check_lifting(trace, lifting)
    names = trace.vars
    return _map_trace(trace, lambda x, t: lifting.apply(names[x], t))


def relabel_threads(trace: Trace, mapping: dict) -> Trace:
    def re(t):
        return mapping.get(t, t)

    initial = trace.initial._replace(tids=tuple(re(t) for t in trace.initial.tids))
    return Trace(trace.vars, initial, [s._replace(tid=re(s.tid)) for s in trace.steps])


class SuperpositionError(ValueError):
    pass


def _writers(trace: Trace) -> dict:
    """Map each generated message to the slot role of its writer."""
    roles = dict(zip(trace.initial.tids, trace.initial.roles))
    out = {}
    for i, s in enumerate(trace.steps):
        if s.kind in ("st", "cas"):
            out[s.msgs[-1]] = (roles[s.tid], s.tid, i)
    return out


def env_projection(trace: Trace) -> Trace:
    init = trace.initial
    keep = [i for i, r in enumerate(init.roles) if r == "env"]
    env_tids = {init.tids[i] for i in keep}
    initial = Config(init.memory, tuple(init.threads[i] for i in keep),
                     tuple(init.tids[i] for i in keep), tuple(init.roles[i] for i in keep),
                     tuple(init.programs[i] for i in keep))
    return Trace(trace.vars, initial, [s for s in trace.steps if s.tid in env_tids])


def superpose(t1: Trace, t2: Trace, spec: SystemSpec, t2_full: Optional[Trace] = None) -> Trace:
    """t1 followed by the env steps of t2 run on top of last(t1).

    `t2` holds only env threads.  When the full run it was projected from is
    given as `t2_full`, its dis messages must coincide with those of t1.
    """
    shared = set(t1.initial.tids) & set(t2.initial.tids)
    if shared:
        raise SuperpositionError(f"thread ids shared by both runs: {sorted(shared)}")
    if any(r != "env" for r in t2.initial.roles):
        raise SuperpositionError("second run must contain env threads only")
    if t2_full is not None:
        d1 = {m for m, (r, _, _) in _writers(t1).items() if r != "env"}
        d2 = {m for m, (r, _, _) in _writers(t2_full).items() if r != "env"}
        if d1 != d2:
            raise SuperpositionError("dis message sets differ")
    last1 = validate_run(t1, spec)
    if not last1:
        raise SuperpositionError(f"first run invalid at step {last1.step}: {last1.rule}")
    written2 = [s.msgs[-1] for s in t2.steps if s.kind in ("st", "cas")]
    for m in written2:
        for other in last1.final.memory:
            if not msg_conflict_free(m, other):
                raise SuperpositionError(f"conflict between {m} and {other}")
    if not t2.steps and not t2.initial.tids:
        return Trace(t1.vars, t1.initial, list(t1.steps))
    i1, i2 = t1.initial, t2.initial
    initial = Config(i1.memory | i2.memory, i1.threads + i2.threads, i1.tids + i2.tids,
                     i1.roles + i2.roles, i1.programs + i2.programs)
    result = Trace(t1.vars, initial, list(t1.steps) + list(t2.steps))
    check = validate_run(result, spec)
    if not check:
        raise SuperpositionError(f"superposition invalid at step {check.step}: {check.rule}")
    return result


# --------------------------------------------------------------- infinite supply


@dataclass
class Replication:
    trace: Trace
    message: Message
    run_ts: Callable     # (var index, original timestamp) -> its slot in the lifted run
    copy_ts: Callable    # (var index, original timestamp) -> its slot in the env copy
    dis_timestamps: dict  # var index -> sorted original timestamps of dis stores


def _compress(trace: Trace) -> tuple:
    used = trace_timestamps(trace)
    maps = {x: {t: i for i, t in enumerate(sorted(ts))} for x, ts in used.items()}
    return _map_trace(trace, lambda x, t: maps[x][t]), maps


def replicate_env_message(trace: Trace, target: Message, t_star: int,
                          spec: SystemSpec) -> Replication:
    """Produce a valid run holding a fresh copy of an env message whose own
    timestamp is at least the copy slot of t_star.  The run is the lifted
    original, then a lifted copy of its env threads, then the threads that
    regenerate the target.

    Every env timestamp is tripled into adjacent slots b < c < a: a for the
    lifted run, b for the copy of all env threads, c for the copy that
    regenerates the target.
    """
    writers = _writers(trace)
    if target not in writers:
        raise ValueError("target message is not generated in the trace")
    role, gen_tid, gen_index = writers[target]
    if role != "env":
        raise ValueError("target message was not generated by an env thread")
    if any(s.kind == "cas" for s in env_projection(trace).steps):
        raise ValueError("env threads must not use CAS")
    x = target.var
    if not (t_star <= target.ts):
        if t_star <= max(trace_timestamps(trace)[x]):
            env_ts = {m.ts for m, (r, _, _) in writers.items() if r == "env" and m.var == x}
            if t_star not in env_ts:
                raise ValueError("t_star must be an env timestamp on the variable, "
                                 "at most the target's timestamp, or beyond every timestamp")

    comp, cmaps = _compress(trace)
    cwriters = _writers(comp)
    nvars = len(trace.vars)
    kinds = {v: {} for v in range(nvars)}   # compressed ts -> "env" | "dis"
    for m, (r, _, _) in cwriters.items():
        kinds[m.var][m.ts] = "env" if r == "env" else "dis"

    counts = {}
    for v in range(nvars):
        top = max(trace_timestamps(comp)[v])
        d = e = 0
        table = {0: (0, 0)}
        for p in range(1, top + 2):
            table[p] = (d, e)
            k = kinds[v].get(p)
            if k == "env":
                e += 1
            elif k == "dis":
                d += 1
        counts[v] = (table, top, d, e)

    def m1c(v, p):
        if p == 0:
            return 0
        table, top, d_all, e_all = counts[v]
        if p > top:
            return d_all + 3 * e_all + 3
        d, e = table[p]
        return d + 3 * e + (3 if kinds[v].get(p) == "env" else 1)

    def m2c(v, p):
        return m1c(v, p) - 2 if kinds[v].get(p) == "env" else m1c(v, p)

    lifted = lift_trace(comp, TimestampLifting({trace.vars[v]: (lambda t, v=v: m1c(v, t))
                                                for v in range(nvars)}))
    machine = Machine.for_config(spec, lifted.initial)
    last = validate_run(lifted, spec)
    if not last:
        raise RuntimeError(f"lifted run invalid at {last.step}: {last.rule}")
    state = last.final

    cstate = {}    # compressed original message -> lifted (a-slot) version
    for m in cwriters:
        cstate[m] = Message(m.var, m.val, tuple(m1c(v, t) for v, t in enumerate(m.view)))
    for m in comp.initial.memory:
        cstate[m] = m

    result_steps = list(lifted.steps)
    next_tid = max(lifted.initial.tids) + 1
    init = comp.initial
    roles = dict(zip(init.tids, init.roles))
    env_tids = [t for t in init.tids if roles[t] == "env"]

    def add_copy(steps, slot_of):
        """Replay `steps` (compressed numbering) as fresh env threads writing at
        the slot chosen by slot_of; returns (new tid map, copies of messages)."""
        nonlocal state, machine, next_tid
        tid_map = {}
        copies = {}
        for t in sorted({s.tid for s in steps}):
            tid_map[t] = next_tid
            next_tid += 1
        new_tids = [tid_map[t] for t in sorted(tid_map)]
        if new_tids:
            zero = (0,) * nvars
            lc0 = LocalConfig(0, (0,) * len(spec.regs), zero)
            state = state._replace(
                threads=state.threads + (lc0,) * len(new_tids),
                tids=state.tids + tuple(new_tids),
                roles=state.roles + ("env",) * len(new_tids),
                programs=state.programs + (spec.env_name,) * len(new_tids))
            machine = Machine.for_config(spec, state)
        emitted = []
        for s in steps:
            tid = tid_map[s.tid]
            lc = state.threads[state.tids.index(tid)]
            if s.kind == "silent":
                new = Step(tid, "silent", s.to, ())
            elif s.kind == "ld":
                m = s.msgs[0]
                options = [c for c in (copies.get(m), cstate[m]) if c is not None]
                pick = next(c for c in options if lc.view[c.var] <= c.ts)
                new = Step(tid, "ld", s.to, (pick,))
            elif s.kind == "st":
                m = s.msgs[0]
                t = slot_of(m.var, m.ts)
                copy = Message(m.var, m.val, set_entry(lc.view, m.var, t))
                copies[m] = copy
                new = Step(tid, "st", s.to, (copy,))
            else:
                raise ValueError("env threads must not use CAS")
            state = apply_step(machine, state, new)
            emitted.append(new)
        return emitted, copies

    env_steps = [s for s in comp.steps if s.tid in env_tids]
    emitted, _ = add_copy(env_steps, lambda v, t: m2c(v, t))
    result_steps += emitted

    ctarget = comp.steps[gen_index].msgs[-1]
    cx_vw = ctarget.view
    # t_star in compressed numbering
    top_x = max(trace_timestamps(trace)[x])
    if t_star <= target.ts:
        case_one = True
        c_star = cmaps[x][target.ts]
    else:
        case_one = False
        c_star = cmaps[x][t_star] if t_star <= top_x else counts[x][1] + 1
    if case_one:
        message = cstate[ctarget]
    else:
        needed = _causal_env_past(comp, gen_index, env_tids, cwriters)
        prefix = [comp.steps[i] for i in sorted(needed) if i != gen_index]
        gen_step = comp.steps[gen_index]

        def c_slot(v, t):
            return m1c(v, t) - 1

        emitted, c_copies = add_copy(prefix + [gen_step],
                                     lambda v, t: c_slot(v, t) if (v, t) != (x, cx_vw[x])
                                     else m1c(x, c_star) - 1)
        result_steps += emitted
        message = c_copies[ctarget]

    result = Trace(trace.vars, lifted.initial, result_steps)
    # threads added by the copies start in their initial configuration
    extra = [i for i, t in enumerate(state.tids) if t not in lifted.initial.tids]
    init_cf = lifted.initial
    zero = (0,) * nvars
    lc0 = LocalConfig(0, (0,) * len(spec.regs), zero)
    result.initial = Config(init_cf.memory, init_cf.threads + (lc0,) * len(extra),
                            init_cf.tids + tuple(state.tids[i] for i in extra),
                            init_cf.roles + tuple(state.roles[i] for i in extra),
                            init_cf.programs + tuple(state.programs[i] for i in extra))

    def run_ts(v, t):
        if t > max(trace_timestamps(trace)[v]):
            return m1c(v, counts[v][1] + 1)
        return m1c(v, cmaps[v][t])

    def copy_ts(v, t):
        if t > max(trace_timestamps(trace)[v]):
            return m1c(v, counts[v][1] + 1) - 2
        return m2c(v, cmaps[v][t])

    dis_ts = {v: sorted(m.ts for m, (r, _, _) in writers.items() if r != "env" and m.var == v)
              for v in range(nvars)}
    return Replication(result, message, run_ts, copy_ts, dis_ts)


def _causal_env_past(trace: Trace, index: int, env_tids, writers) -> set:
    """Indices of env steps that happen before step `index` through program
    order and reads-from edges between env threads."""
    env_tids = set(env_tids)
    needed = set()
    todo = [index]
    while todo:
        i = todo.pop()
        if i in needed:
            continue
        needed.add(i)
        s = trace.steps[i]
        for j in range(i):
            if trace.steps[j].tid == s.tid and j not in needed:
                todo.append(j)
        if s.kind in ("ld", "cas"):
            w = writers.get(s.msgs[0])
            if w is not None and w[0] == "env" and w[2] not in needed:
                todo.append(w[2])
    return {i for i in needed if trace.steps[i].tid in env_tids}


# -------------------------------------------------------------------- JSON I/O


def _view_json(view: tuple, names: tuple, fmt=lambda t: t) -> dict:
    return {names[i]: fmt(t) for i, t in enumerate(view)}


def _msg_json(m: Message, names, fmt=lambda t: t) -> dict:
    return {"var": names[m.var], "val": m.val, "view": _view_json(m.view, names, fmt)}


def trace_to_dict(trace: Trace, fmt=lambda t: t) -> dict:
    names = trace.vars
    init = trace.initial
    return {
        "vars": list(names),
        "initial": {
            "memory": [_msg_json(m, names, fmt) for m in sorted(init.memory)],
            "threads": [
                {"tid": tid, "role": role, "program": prog, "ctrl": lc.ctrl,
                 "rv": list(lc.rv), "view": _view_json(lc.view, names, fmt)}
                for tid, role, prog, lc in zip(init.tids, init.roles, init.programs, init.threads)
            ],
        },
        "steps": [
            {"tid": s.tid, "kind": s.kind, "to": s.to,
             "msgs": [_msg_json(m, names, fmt) for m in s.msgs]}
            for s in trace.steps
        ],
    }


def trace_to_json(trace: Trace) -> str:
    return json.dumps(trace_to_dict(trace), indent=2)


def trace_from_dict(data: dict, parse_ts: Callable = int) -> Trace:
    """Inverse of `trace_to_dict`; `parse_ts` reads one timestamp entry."""
    names = tuple(data["vars"])
    index = {n: i for i, n in enumerate(names)}

    def view(d):
        return tuple(parse_ts(d[n]) for n in names)

    def msg(d):
        return Message(index[d["var"]], int(d["val"]), view(d["view"]))

    init = data["initial"]
    threads = init["threads"]
    cf = Config(frozenset(msg(m) for m in init["memory"]),
                tuple(LocalConfig(int(t["ctrl"]), tuple(t["rv"]), view(t["view"])) for t in threads),
                tuple(int(t["tid"]) for t in threads),
                tuple(t["role"] for t in threads),
                tuple(t["program"] for t in threads))
    steps = [Step(int(s["tid"]), s["kind"], int(s["to"]), tuple(msg(m) for m in s["msgs"]))
             for s in data["steps"]]
    return Trace(names, cf, steps)


def trace_from_json(text: str) -> Trace:
    return trace_from_dict(json.loads(text))
