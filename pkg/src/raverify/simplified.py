"""Simplified RA semantics over abstract timestamps N ⊎ N⁺.

Abstract timestamps are encoded as integers: Nat(n) is 2n and Plus(n) is
2n+1, so the integer order is the abstract order.  Messages and views reuse
the concrete tuple types from ra_core with these codes in place of
timestamps.  The parity of a message's own timestamp tells whether an env
thread generated it.

The decision procedures work on saturated states: env threads are
represented by the set of env local configurations reached so far (any of
them can be cloned by a fresh env thread), and env moves that can never
disable anything are applied eagerly.  Everything else branches in a
breadth-first search over canonical states.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

from .program_ir import (
    GoalSpec, Store, Cas, SystemSpec, classify, instruction_count, leaves,
)
from .ra_core import (
    Config, Invalid, LocalConfig, Machine, Message, Step, Trace, Valid, join, set_entry,
    trace_from_dict, trace_to_dict,
)

# ------------------------------------------------------------- abstract time


class AbstractTimestamp(NamedTuple):
    tag: str       # "Nat" | "Plus"
    n: int

    @property
    def code(self) -> int:
        return 2 * self.n + (1 if self.tag == "Plus" else 0)

    @classmethod
    def from_code(cls, code: int) -> "AbstractTimestamp":
        return cls("Plus" if code & 1 else "Nat", code >> 1)

    def __str__(self):
        return fmt_ts(self.code)


def nat(n: int) -> int:
    return 2 * n


def plus(n: int) -> int:
    return 2 * n + 1


def is_plus(code: int) -> bool:
    return bool(code & 1)


def index_of(code: int) -> int:
    return code >> 1


def fmt_ts(code: int) -> str:
    return f"{code >> 1}+" if code & 1 else str(code >> 1)


def parse_ts(text) -> int:
    if isinstance(text, int):
        return text
    s = str(text).strip()
    if s.endswith("+"):
        return plus(int(s[:-1]))
    return nat(int(s))


def raise_ts(ts):
    """Nat(n) and Plus(n) both go to Plus(n).  Accepts codes or AbstractTimestamp."""
    if isinstance(ts, AbstractTimestamp):
        return AbstractTimestamp("Plus", ts.n)
    return ts | 1


def join_env(vw1: tuple, vw2: tuple, x: int) -> tuple:
    """vw1 with its x entry raised, then joined with vw2."""
    return join(set_entry(vw1, x, vw1[x] | 1), vw2)


# ------------------------------------------------------------------ classes


class ClassViolation(ValueError):
    pass


class Generable(NamedTuple):
    trace: Trace
    nodes: int = 0


class NotGenerable(NamedTuple):
    nodes: int = 0


class BudgetExceeded(NamedTuple):
    nodes: int = 0
    reason: str = "node budget"


def _has_cas(c) -> bool:
    return any(isinstance(ins, Cas) for ins in leaves(c))


def check_loop_free_class(s: SystemSpec) -> None:
    if s.env is not None and _has_cas(s.env):
        raise ClassViolation("env not nocas")
    for t in s.threads:
        if not classify(t.program).acyc:
            raise ClassViolation(f"dis not acyc ({t.name})")


def check_leader_class(s: SystemSpec) -> None:
    if s.env is not None and _has_cas(s.env):
        raise ClassViolation("env not nocas")
    leaders = [t for t in s.threads if t.role == "ldr"]
    if len(leaders) != 1:
        raise ClassViolation("exactly one ldr thread required")
    for t in s.threads:
        if t.role != "ldr" and not classify(t.program).acyc:
            raise ClassViolation(f"dis not acyc ({t.name})")


def _check_goal(s: SystemSpec, goal: GoalSpec) -> None:
    if goal.var not in s.vars:
        raise ValueError(f"unknown goal variable {goal.var}")
    if not 0 <= goal.val < s.dom:
        raise ValueError(f"goal value {goal.val} outside domain 0..{s.dom - 1}")


def timestamp_bound(s: SystemSpec) -> int:
    """Total instruction count of the non-env programs."""
    for t in s.threads:
        if not classify(t.program).acyc:
            raise ClassViolation(f"dis not acyc ({t.name})")
    return sum(instruction_count(t.program) for t in s.threads)


# ---------------------------------------------------------- abstract stepping


class AbsConfig(NamedTuple):
    memory: frozenset
    threads: tuple
    tids: tuple
    roles: tuple
    programs: tuple
    blocked: frozenset = frozenset()   # (var, code): Nat t blocked by a CAS, Plus t by env stores

    def slot(self, tid):
        return self.tids.index(tid)


def _nat_used(memory, x: int, code: int) -> bool:
    return any(m.var == x and m.view[x] == code for m in memory)


class _Rules:
    """Thread-local moves of the simplified semantics, parameterized by how
    store timestamps are enumerated."""

    def __init__(self, machine: Machine):
        self.machine = machine

    def moves(self, slot, lc, is_env, memory, blocked, env_slots, fixed_slots):
        """Yield (kind, to, msgs, new_lc, blocked_add, glue) tuples.

        env_slots(x, low_index) yields Plus indices for env stores, and
        fixed_slots(x, view_code) yields Nat indices for dis stores.
        """
        code = self.machine.slot_codes[slot]
        for e in code.edges(lc.ctrl):
            kind = e.kind
            if kind == "silent":
                rv = e.fn(lc.rv)
                if rv is not None:
                    yield "silent", e.to, (), LocalConfig(e.to, rv, lc.view), (), None
            elif kind == "ld":
                x = e.var
                for m in sorted(memory):
                    if m.var != x:
                        continue
                    if m.ts & 1:
                        view = join_env(lc.view, m.view, x)
                    elif lc.view[x] <= m.ts:
                        view = join(lc.view, m.view)
                    else:
                        continue
                    rv = set_entry(lc.rv, e.fn, m.val)
                    yield "ld", e.to, (m,), LocalConfig(e.to, rv, view), (), None
            elif kind == "st":
                x = e.var
                val = e.fn(lc.rv)
                if is_env:
                    for t in env_slots(x, lc.view[x] >> 1):
                        if (x, nat(t)) in blocked:
                            continue
                        view = set_entry(lc.view, x, plus(t))
                        yield ("st", e.to, (Message(x, val, view),), LocalConfig(e.to, lc.rv, view),
                               ((x, plus(t)),), None)
                else:
                    for t in fixed_slots(x, lc.view[x]):
                        if nat(t) <= lc.view[x] or _nat_used(memory, x, nat(t)):
                            continue
                        view = set_entry(lc.view, x, nat(t))
                        yield ("st", e.to, (Message(x, val, view),), LocalConfig(e.to, lc.rv, view),
                               (), None)
            elif kind == "cas":
                if is_env:
                    continue
                x = e.var
                expected = e.fn(lc.rv)
                new = e.fn2(lc.rv)
                for m in sorted(memory):
                    if m.var != x or m.val != expected:
                        continue
                    if m.ts & 1:
                        base = join_env(lc.view, m.view, x)
                        t = base[x] >> 1
                        add = ()
                    else:
                        if lc.view[x] > m.ts:
                            continue
                        t = m.ts >> 1
                        if (x, plus(t)) in blocked:
                            continue
                        base = join(lc.view, m.view)
                        add = ((x, nat(t)),)
                    if _nat_used(memory, x, nat(t + 1)):
                        continue
                    if not self.allow_index(x, t + 1):
                        continue
                    view = set_entry(base, x, nat(t + 1))
                    yield ("cas", e.to, (m, Message(x, new, view)), LocalConfig(e.to, lc.rv, view),
                           add, (x, t))

    def allow_index(self, x, t) -> bool:
        return True


def step_abstract(machine: Machine, cf: AbsConfig, tid, horizon: Optional[int] = None):
    """All successors of one thread under the simplified semantics.

    Store timestamps range over indices up to `horizon` (default: one above
    the largest index in use).
    """
    slot = cf.slot(tid)
    lc = cf.threads[slot]
    is_env = cf.roles[slot] == "env"
    top = max((c >> 1 for m in cf.memory for c in m.view), default=0)
    top = max([top] + [c >> 1 for t in cf.threads for c in t.view])
    limit = horizon if horizon is not None else top + 1

    def env_slots(x, low):
        return range(low, limit + 1)

    def fixed_slots(x, view_code):
        return range(0, limit + 1)

    out = []
    rules = _Rules(machine)
    for kind, to, msgs, new_lc, add, _glue in rules.moves(slot, lc, is_env, cf.memory, cf.blocked,
                                                          env_slots, fixed_slots):
        memory = cf.memory | {msgs[-1]} if kind in ("st", "cas") else cf.memory
        threads = cf.threads[:slot] + (new_lc,) + cf.threads[slot + 1:]
        out.append((Step(tid, kind, to, msgs),
                    cf._replace(memory=memory, threads=threads, blocked=cf.blocked | set(add))))
    return out


def initial_abs_config(machine: Machine, tids=None) -> AbsConfig:
    cf = machine.initial_config(tids)
    return AbsConfig(cf.memory, cf.threads, cf.tids, cf.roles, cf.programs, frozenset())


class AbsStepError(Exception):
    def __init__(self, rule):
        super().__init__(rule)
        self.rule = rule


def apply_abstract_step(machine: Machine, cf: AbsConfig, step: Step) -> AbsConfig:
    """Apply a recorded abstract step, checking every rule's side condition."""
    try:
        slot = cf.tids.index(step.tid)
    except ValueError:
        raise AbsStepError("unknown thread") from None
    lc = cf.threads[slot]
    is_env = cf.roles[slot] == "env"
    e = machine.slot_codes[slot].edge_to(lc.ctrl, step.to)
    if e is None:
        raise AbsStepError("ctrl")
    if e.kind == "assert":
        raise AbsStepError("assert")
    if e.kind != step.kind:
        raise AbsStepError("kind")
    msgs = step.msgs
    memory, blocked = cf.memory, cf.blocked
    x = e.var
    if e.kind == "silent":
        rv = e.fn(lc.rv)
        if rv is None or msgs:
            raise AbsStepError("assume")
        new_lc = LocalConfig(e.to, rv, lc.view)
    elif e.kind == "ld":
        (m,) = msgs
        if m.var != x:
            raise AbsStepError("variable")
        if m not in memory:
            raise AbsStepError("msg ∈ m")
        if m.ts & 1:
            view = join_env(lc.view, m.view, x)
        else:
            if lc.view[x] > m.ts:
                raise AbsStepError("view order")
            view = join(lc.view, m.view)
        new_lc = LocalConfig(e.to, set_entry(lc.rv, e.fn, m.val), view)
    elif e.kind == "st":
        (m,) = msgs
        if m.var != x:
            raise AbsStepError("variable")
        if m.val != e.fn(lc.rv):
            raise AbsStepError("value")
        if m.view != set_entry(lc.view, x, m.ts):
            raise AbsStepError("view order")
        if is_env:
            if not m.ts & 1 or m.ts < (lc.view[x] | 1):
                raise AbsStepError("view order")
            if (x, m.ts - 1) in blocked:
                raise AbsStepError("ts ∉ B")
            blocked = blocked | {(x, m.ts)}
        else:
            if m.ts & 1 or m.ts <= lc.view[x]:
                raise AbsStepError("view order")
            if _nat_used(memory, x, m.ts):
                raise AbsStepError("msg # m")
        memory = memory | {m}
        new_lc = LocalConfig(e.to, lc.rv, m.view)
    else:
        if is_env:
            raise AbsStepError("env cas")
        ml, ms = msgs
        if ml.var != x or ms.var != x:
            raise AbsStepError("variable")
        if ml not in memory:
            raise AbsStepError("msg ∈ m")
        if ml.val != e.fn(lc.rv) or ms.val != e.fn2(lc.rv):
            raise AbsStepError("value")
        if ml.ts & 1:
            base = join_env(lc.view, ml.view, x)
            t = base[x] >> 1
        else:
            if lc.view[x] > ml.ts:
                raise AbsStepError("view order")
            t = ml.ts >> 1
            if (x, plus(t)) in blocked:
                raise AbsStepError("ts⁺ ∉ B")
            base = join(lc.view, ml.view)
            blocked = blocked | {(x, nat(t))}
        if ms.ts != nat(t + 1):
            raise AbsStepError("cas adjacency")
        if ms.view != set_entry(base, x, ms.ts):
            raise AbsStepError("view order")
        if _nat_used(memory, x, ms.ts):
            raise AbsStepError("msg # m")
        memory = memory | {ms}
        new_lc = LocalConfig(e.to, lc.rv, ms.view)
    threads = cf.threads[:slot] + (new_lc,) + cf.threads[slot + 1:]
    return cf._replace(memory=memory, threads=threads, blocked=blocked)


def validate_abstract(trace: Trace, spec: SystemSpec):
    """Replay an abstract trace; Valid(final AbsConfig) or Invalid(step, rule)."""
    machine = Machine.for_config(spec, trace.initial)
    i = trace.initial
    cf = AbsConfig(i.memory, i.threads, i.tids, i.roles, i.programs, frozenset())
    for index, step in enumerate(trace.steps):
        try:
            cf = apply_abstract_step(machine, cf, step)
        except AbsStepError as err:
            return Invalid(index, err.rule)
        except ValueError:
            return Invalid(index, "kind")
    return Valid(cf)


def generated_pairs(trace: Trace, spec: SystemSpec) -> set:
    return {(spec.vars[m.var], m.val) for s in trace.steps if s.kind in ("st", "cas")
            for m in s.msgs[-1:]}


# ------------------------------------------------------------ saturated search


class AbsState(NamedTuple):
    memory: frozenset
    env: frozenset          # env local configurations reached so far
    fixed: tuple            # dis / ldr local configurations
    blocked: frozenset
    glued: frozenset        # (var, index): Nat index+1 was written by a CAS reading index


class _Event(NamedTuple):
    fixed_slot: int         # -1 for env events
    src: Optional[LocalConfig]
    step: Step              # tid field unused
    dst: LocalConfig


def _touched(state: AbsState, nvars: int) -> list:
    touched = [{0} for _ in range(nvars)]
    views = [m.view for m in state.memory]
    views += [lc.view for lc in state.env]
    views += [lc.view for lc in state.fixed]
    for v in views:
        for x, c in enumerate(v):
            touched[x].add(c >> 1)
    for x, c in state.blocked:
        touched[x].add(c >> 1)
    for x, t in state.glued:
        touched[x].add(t)
        touched[x].add(t + 1)
    return touched


def _canonical_maps(state: AbsState, nvars: int) -> list:
    maps = []
    touched = _touched(state, nvars)
    for x in range(nvars):
        order = sorted(touched[x])
        mapping = {}
        prev_old = prev_new = None
        for t in order:
            if prev_old is None:
                new = 0 if t == 0 else 2
            elif t == prev_old + 1 and (x, prev_old) in state.glued:
                new = prev_new + 1
            else:
                new = prev_new + 2
            mapping[t] = new
            prev_old, prev_new = t, new
        maps.append(mapping)
    return maps


def _rename_code(maps, x, c):
    return 2 * maps[x][c >> 1] + (c & 1)


def _rename_view(maps, view):
    return tuple(_rename_code(maps, x, c) for x, c in enumerate(view))


def _rename_msg(maps, m):
    return Message(m.var, m.val, _rename_view(maps, m.view))


def _rename_lc(maps, lc):
    return LocalConfig(lc.ctrl, lc.rv, _rename_view(maps, lc.view))


def _rename_state(maps, s: AbsState) -> AbsState:
    return AbsState(
        frozenset(_rename_msg(maps, m) for m in s.memory),
        frozenset(_rename_lc(maps, lc) for lc in s.env),
        tuple(_rename_lc(maps, lc) for lc in s.fixed),
        frozenset((x, _rename_code(maps, x, c)) for x, c in s.blocked),
        frozenset((x, maps[x][t]) for x, t in s.glued),
    )


def _rename_event(maps, ev: _Event) -> _Event:
    st = ev.step
    return _Event(ev.fixed_slot, None if ev.src is None else _rename_lc(maps, ev.src),
                  Step(st.tid, st.kind, st.to, tuple(_rename_msg(maps, m) for m in st.msgs)),
                  _rename_lc(maps, ev.dst))


class _Explorer:
    """Shared machinery of the message-generation and leader engines."""

    def __init__(self, spec: SystemSpec, index_cap: int):
        self.spec = spec
        layout = [(t.role, t.name) for t in spec.threads]
        if spec.env is not None:
            layout.append(("env", spec.env_name))
        self.machine = Machine(spec, layout)
        self.n_fixed = len(spec.threads)
        self.env_slot = self.n_fixed if spec.env is not None else None
        self.nvars = len(spec.vars)
        self.cap = index_cap
        self.cas_vars = set()
        for t in spec.threads:
            for ins in leaves(t.program):
                if isinstance(ins, Cas):
                    self.cas_vars.add(self.machine.var_index[ins.var])
        self.rules = _Rules(self.machine)
        self.rules.allow_index = lambda x, t: t <= self.cap
        self.cas_reach = [self._cas_reach(self.machine.slot_codes[i]) for i in range(self.n_fixed)]
        env_code = self.machine.slot_codes[self.env_slot] if self.env_slot is not None else None
        self.env_load_ctrls = {}
        self.env_store_ctrls = {}
        if env_code is not None:
            for src, outs in env_code.out.items():
                for e in outs:
                    if e.kind == "ld":
                        self.env_load_ctrls.setdefault(e.var, set()).add(src)
                    elif e.kind == "st":
                        self.env_store_ctrls.setdefault(e.var, set()).add(src)

    @staticmethod
    def _cas_reach(code) -> dict:
        """ctrl -> variables some CAS reachable from ctrl operates on."""
        succ = {q: [e.to for e in outs] for q, outs in code.out.items()}
        own = {q: {e.var for e in outs if e.kind == "cas"} for q, outs in code.out.items()}
        reach = {}
        for q in range(code.size):
            seen, stack, vars_ = {q}, [q], set()
            while stack:
                u = stack.pop()
                vars_ |= own.get(u, set())
                for v in succ.get(u, ()):
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            reach[q] = frozenset(vars_)
        return reach

    def live_cas(self, fixed) -> set:
        live = set()
        for slot, lc in enumerate(fixed):
            live |= self.cas_reach[slot][lc.ctrl]
        return live

    # -- store slot enumeration on canonical states

    def _slot_candidates(self, state_touched, x):
        order = sorted(state_touched[x])
        cands = set(order)
        cands.update(self._gap_slots(state_touched, x))
        return sorted(t for t in cands if t <= self.cap)

    def _gap_slots(self, state_touched, x):
        order = sorted(state_touched[x])
        gaps = [a + 1 for a, b in zip(order, order[1:]) if b - a >= 2]
        gaps.append(order[-1] + 1)
        return [t for t in gaps if t <= self.cap]

    def initial_state(self) -> AbsState:
        cf = self.machine.initial_config()
        env = frozenset([cf.threads[self.env_slot]]) if self.env_slot is not None else frozenset()
        return AbsState(cf.memory, env, cf.threads[:self.n_fixed], frozenset(), frozenset())

    # -- saturation

    def _env_moves(self, lc, memory, blocked, touched, live, harmless_only):
        """Env moves split into harmless ones (never disable anything) and
        the rest.

        Env stores only go to indices already in use: a message that must
        sit above some later dis message can be stored again by a fresh env
        copy once that dis message exists.  The top index is never blocked
        for env stores, so some slot always remains.

        On a variable no dis thread can still CAS, the lowest admissible
        Plus slot dominates every other choice.  Otherwise every slot is
        offered, and a store is harmful only when it lands on Plus(t) with a
        message at Nat t that a later CAS could still read.
        """
        def env_slots(x, low):
            cands = sorted(t for t in touched[x] if low <= t <= self.cap)
            if x not in live:
                for t in cands:
                    if (x, nat(t)) not in blocked:
                        return (t,)
                return ()
            return cands

        for mv in self.rules.moves(self.env_slot, lc, True, memory, blocked, env_slots, None):
            kind = mv[0]
            if kind == "st":
                m = mv[2][0]
                harmless = (m.var not in live or (m.var, m.ts) in blocked
                            or not _nat_used(memory, m.var, m.ts - 1)
                            or _nat_used(memory, m.var, m.ts + 1))
                if harmless_only != harmless:
                    continue
            elif not harmless_only:
                continue
            yield mv

    def saturate(self, state: AbsState, log: Optional[list] = None) -> AbsState:
        if self.env_slot is None:
            return state
        memory = set(state.memory)
        env = set(state.env)
        blocked = set(state.blocked)
        touched = _touched(state, self.nvars)
        live = self.live_cas(state.fixed)
        work = deque(sorted(env))
        queued = set(work)
        while work:
            lc = work.popleft()
            queued.discard(lc)
            for kind, to, msgs, new_lc, add, _ in self._env_moves(lc, memory, blocked, touched, live,
                                                                        True):
                new_msg = kind == "st" and msgs[-1] not in memory
                grew = new_lc not in env
                if not (new_msg or grew):
                    continue
                if log is not None:
                    log.append(_Event(-1, lc, Step(-1, kind, to, msgs), new_lc))
                if grew:
                    env.add(new_lc)
                    for x, c in enumerate(new_lc.view):
                        touched[x].add(c >> 1)
                    if new_lc not in queued:
                        work.append(new_lc)
                        queued.add(new_lc)
                if new_msg:
                    m = msgs[-1]
                    memory.add(m)
                    blocked.update(add)
                    for x, c in enumerate(m.view):
                        touched[x].add(c >> 1)
                    ctrls = self.env_load_ctrls.get(m.var, set())
                    if add:
                        ctrls = ctrls | self.env_store_ctrls.get(m.var, set())
                    for other in env:
                        if other.ctrl in ctrls and other not in queued:
                            work.append(other)
                            queued.add(other)
        return AbsState(frozenset(memory), frozenset(env), state.fixed, frozenset(blocked),
                        state.glued)

    # -- branching moves

    def branch_moves(self, state: AbsState, fixed_filter=None):
        """Yield (label, successor) pairs; label identifies the move in the
        parent's numbering."""
        touched = _touched(state, self.nvars)
        live = self.live_cas(state.fixed)

        def fixed_slots(x, view_code):
            # slots used only by Plus timestamps are dominated by the gap below
            return self._gap_slots(touched, x)

        for slot in range(self.n_fixed):
            if fixed_filter is not None and not fixed_filter(slot):
                continue
            lc = state.fixed[slot]
            for kind, to, msgs, new_lc, add, glue in self.rules.moves(
                    slot, lc, False, state.memory, state.blocked, None, fixed_slots):
                yield (_Event(slot, lc, Step(slot, kind, to, msgs), new_lc),
                       self._apply(state, slot, None, kind, msgs, new_lc, add, glue))
        if self.env_slot is None:
            return
        for lc in sorted(state.env):
            for kind, to, msgs, new_lc, add, glue in self._env_moves(
                    lc, state.memory, state.blocked, touched, live, False):
                yield (_Event(-1, lc, Step(-1, kind, to, msgs), new_lc),
                       self._apply(state, -1, lc, kind, msgs, new_lc, add, glue))

    def _apply(self, state, slot, src, kind, msgs, new_lc, add, glue) -> AbsState:
        memory = state.memory | {msgs[-1]} if kind in ("st", "cas") else state.memory
        blocked = state.blocked | set(add) if add else state.blocked
        glued = state.glued | {glue} if glue is not None else state.glued
        if slot >= 0:
            fixed = state.fixed[:slot] + (new_lc,) + state.fixed[slot + 1:]
            env = state.env
        else:
            fixed = state.fixed
            env = state.env | {new_lc}
        return AbsState(memory, env, fixed, blocked, glued)

    def canonical(self, state: AbsState):
        maps = _canonical_maps(state, self.nvars)
        return _rename_state(maps, state), maps

    def close(self, state: AbsState, log=None):
        """Saturate then canonicalize; the log (if any) is renamed in place."""
        sat = self.saturate(state, log)
        canon, maps = self.canonical(sat)
        if log is not None:
            log[:] = [_rename_event(maps, ev) for ev in log]
        return canon

    # -- witness reconstruction

    def rebuild(self, path: list, goal_key) -> Trace:
        log: list = []
        state = self.close(self.initial_state(), log)
        for ev in path:
            if ev.fixed_slot >= 0:
                lc = state.fixed[ev.fixed_slot]
                assert lc == ev.src
            else:
                assert ev.src in state.env
            kind, msgs = ev.step.kind, ev.step.msgs
            add, glue = self._effects(state, ev)
            log.append(ev)
            state = self._apply(state, ev.fixed_slot, ev.src, kind, msgs, ev.dst, add, glue)
            state = self.close(state, log)
        return self._events_to_trace(log, goal_key)

    def _effects(self, state, ev):
        st = ev.step
        if st.kind == "st" and ev.fixed_slot < 0:
            m = st.msgs[0]
            return ((m.var, m.ts),), None
        if st.kind == "cas":
            ml, ms = st.msgs
            glue = (ml.var, (ms.ts >> 1) - 1)
            if ml.ts & 1:
                return (), glue
            return ((ml.var, ml.ts),), glue
        return (), None

    def _events_to_trace(self, log: list, goal_key) -> Trace:
        init_cf = self.machine.initial_config()
        init_msgs = init_cf.memory
        producer = {}
        env_origin = {}
        for i, ev in enumerate(log):
            if ev.step.kind in ("st", "cas"):
                producer.setdefault(ev.step.msgs[-1], i)
            if ev.fixed_slot < 0:
                env_origin.setdefault(ev.dst, i)
        goal_index = None
        for i, ev in enumerate(log):
            if ev.step.kind in ("st", "cas"):
                m = ev.step.msgs[-1]
                if (m.var, m.val) == goal_key:
                    goal_index = i
                    break
        needed = set()
        todo = [goal_index] if goal_index is not None else []
        while todo:
            i = todo.pop()
            if i in needed:
                continue
            needed.add(i)
            ev = log[i]
            if ev.fixed_slot >= 0:
                for j in range(i):
                    if log[j].fixed_slot == ev.fixed_slot and j not in needed:
                        todo.append(j)
            else:
                j = env_origin.get(ev.src)
                if j is not None and j < i:
                    todo.append(j)
            if ev.step.kind in ("ld", "cas"):
                m = ev.step.msgs[0]
                if m not in init_msgs:
                    todo.append(producer[m])
        # env threads: one per needed env event that no other needed env event extends
        env_needed = sorted(i for i in needed if log[i].fixed_slot < 0)
        parents = {}
        for i in env_needed:
            j = env_origin.get(log[i].src)
            parents[i] = j if (j is not None and j < i) else None
        has_child = {p for p in parents.values() if p is not None}
        leaves_ = [i for i in env_needed if i not in has_child]
        chains = []
        for i in leaves_:
            chain = []
            j = i
            while j is not None:
                chain.append(j)
                j = parents[j]
            chains.append(sorted(chain))
        fixed_tids = list(range(self.n_fixed))
        env_tids = [self.n_fixed + k for k in range(len(chains))]
        scheduled = []
        for i in sorted(needed):
            if log[i].fixed_slot >= 0:
                scheduled.append((i, -1, log[i].fixed_slot))
        for k, chain in enumerate(chains):
            for i in chain:
                scheduled.append((i, k, env_tids[k]))
        scheduled.sort()
        steps = [Step(tid, log[i].step.kind, log[i].step.to, log[i].step.msgs)
                 for i, _, tid in scheduled]
        zero = (0,) * self.nvars
        rv0 = (0,) * len(self.spec.regs)
        threads = init_cf.threads[:self.n_fixed] + tuple(LocalConfig(0, rv0, zero) for _ in chains)
        roles = init_cf.roles[:self.n_fixed] + ("env",) * len(chains)
        programs = init_cf.programs[:self.n_fixed] + (self.spec.env_name,) * len(chains)
        initial = Config(init_msgs, threads, tuple(fixed_tids + env_tids), roles, programs)
        return Trace(self.spec.vars, initial, steps)


def _goal_reached(state: AbsState, goal_key) -> bool:
    return any((m.var, m.val) == goal_key for m in state.memory)


def check_message_generation(s: SystemSpec, goal: GoalSpec, budget: int = 10 ** 6,
                             index_cap: Optional[int] = None):
    """Decide whether a message (goal.var, goal.val, ·) can be generated."""
    check_loop_free_class(s)
    _check_goal(s, goal)
    T = timestamp_bound(s)
    cap = 2 * T if index_cap is None else index_cap
    ex = _Explorer(s, cap)
    goal_key = (ex.machine.var_index[goal.var], goal.val)
    start = ex.close(ex.initial_state())
    parents = {start: None}
    if _goal_reached(start, goal_key):
        return Generable(ex.rebuild([], goal_key), 1)
    frontier = deque([start])
    while frontier:
        state = frontier.popleft()
        for ev, succ in ex.branch_moves(state):
            succ = ex.close(succ)
            if succ in parents:
                continue
            parents[succ] = (state, ev)
            if _goal_reached(succ, goal_key):
                return Generable(ex.rebuild(_path(parents, succ), goal_key), len(parents))
            if len(parents) >= budget:
                return BudgetExceeded(len(parents))
            frontier.append(succ)
    return NotGenerable(len(parents))


def _path(parents, state):
    path = []
    while parents[state] is not None:
        state, ev = parents[state][0], parents[state][1]
        path.append(ev)
    path.reverse()
    return path


def generable_pairs(s: SystemSpec, budget: int = 10 ** 6, index_cap: Optional[int] = None):
    """Every (var, value) pair some reachable saturated state generates.

    Returns a frozenset of (var name, value), or BudgetExceeded.
    """
    check_loop_free_class(s)
    T = timestamp_bound(s)
    ex = _Explorer(s, 2 * T if index_cap is None else index_cap)
    start = ex.close(ex.initial_state())
    seen = {start}
    pairs = {(m.var, m.val) for m in start.memory}
    frontier = deque([start])
    while frontier:
        state = frontier.popleft()
        for _, succ in ex.branch_moves(state):
            succ = ex.close(succ)
            if succ in seen:
                continue
            seen.add(succ)
            pairs.update((m.var, m.val) for m in succ.memory)
            if len(seen) >= budget:
                return BudgetExceeded(len(seen))
            frontier.append(succ)
    return frozenset((s.vars[x], d) for x, d in pairs)


# --------------------------------------------------------------- leader search


def self_read(view: tuple, memory: Iterable, leader_messages: Optional[Iterable] = None) -> frozenset:
    """(x, d) for leader messages whose own timestamp equals the view on x.

    Leader messages carry Nat timestamps; when `leader_messages` is omitted
    every Nat message other than the initial ones is taken as the leader's.
    """
    pool = memory if leader_messages is None else leader_messages
    out = set()
    for m in pool:
        if leader_messages is None and (m.ts & 1 or m.ts == 0):
            continue
        if view[m.var] == m.ts:
            out.add((m.var, m.val))
    return frozenset(out)


def leader_step_cap(s: SystemSpec) -> int:
    ldr = s.leader()
    size = instruction_count(ldr.program) if ldr is not None else 0
    return 2 * (len(s.vars) ** s.dom) * max(size, 1)


def verify_leader(s: SystemSpec, goal: GoalSpec, budget: int = 10 ** 6,
                  step_cap: Optional[int] = None, prune: bool = True,
                  index_cap: Optional[int] = None):
    """Message generation with one looping leader thread.

    The leader may take at most `step_cap` steps.  With `prune`, a state is
    skipped when an already visited state agrees on everything but the
    leader view, has a pointwise smaller leader view, and used no more leader
    steps.
    """
    check_leader_class(s)
    _check_goal(s, goal)
    ldr_slot = next(i for i, t in enumerate(s.threads) if t.role == "ldr")
    cap_steps = leader_step_cap(s) if step_cap is None else step_cap
    dis_T = sum(instruction_count(t.program) for t in s.threads if t.role != "ldr")
    ldr_stores = sum(1 for ins in leaves(s.threads[ldr_slot].program)
                     if isinstance(ins, (Store, Cas)))
    T = dis_T + (cap_steps if ldr_stores else 0)
    ex = _Explorer(s, 2 * T if index_cap is None else index_cap)
    goal_key = (ex.machine.var_index[goal.var], goal.val)
    start = ex.close(ex.initial_state())
    if _goal_reached(start, goal_key):
        return Generable(ex.rebuild([], goal_key), 1)
    best = {start: 0}
    parents = {start: None}
    seen_views: dict = {}

    def prune_key(state):
        ldr = state.fixed[ldr_slot]
        fixed = state.fixed[:ldr_slot] + (None,) + state.fixed[ldr_slot + 1:]
        return (ldr.ctrl, ldr.rv, state.memory, state.env, fixed, state.blocked, state.glued)

    def dominated(state, used):
        if not prune:
            return False
        key = prune_key(state)
        view = state.fixed[ldr_slot].view
        for other, other_used in seen_views.get(key, ()):
            if other_used <= used and all(a <= b for a, b in zip(other, view)):
                return True
        seen_views.setdefault(key, []).append((view, used))
        return False

    dominated(start, 0)
    frontier = deque([start])
    nodes = 1
    while frontier:
        state = frontier.popleft()
        used = best[state]
        for ev, succ in ex.branch_moves(state):
            step_used = used + (1 if ev.fixed_slot == ldr_slot else 0)
            if step_used > cap_steps:
                continue
            succ = ex.close(succ)
            if succ in best and best[succ] <= step_used:
                continue
            if succ not in best and dominated(succ, step_used):
                continue
            best[succ] = step_used
            parents[succ] = (state, ev)
            nodes += 1
            if _goal_reached(succ, goal_key):
                return Generable(ex.rebuild(_path(parents, succ), goal_key), nodes)
            if nodes >= budget:
                return BudgetExceeded(nodes)
            frontier.append(succ)
    return NotGenerable(nodes)


# ---------------------------------------------------------- dependency graphs


@dataclass
class DependencyGraph:
    vertices: list            # messages in order of first insertion
    edges: set                # (m1, m2): m1 read by genthread(m2) before generating m2
    genthread: dict           # message -> tid (None for initial messages)
    height: dict              # message -> length of the longest path from a source
    depend: dict              # message -> frozenset of messages

    def fan_in(self) -> int:
        return max((len(d) for d in self.depend.values()), default=0)

    def max_height(self) -> int:
        return max(self.height.values(), default=0)

    def to_dot(self, names=None) -> str:
        index = {m: i for i, m in enumerate(self.vertices)}

        def label(m):
            var = names[m.var] if names else str(m.var)
            view = ",".join(fmt_ts(c) for c in m.view)
            return f"({var},{m.val},[{view}])"

        lines = ["digraph deps {"]
        for m in self.vertices:
            who = self.genthread.get(m)
            lines.append(f'  n{index[m]} [label="{label(m)} t{who}"];')
        for a, b in sorted(self.edges, key=lambda e: (index[e[0]], index[e[1]])):
            lines.append(f"  n{index[a]} -> n{index[b]};")
        lines.append("}")
        return "\n".join(lines)


def dependency_graph(trace: Trace) -> DependencyGraph:
    vertices = sorted(trace.initial.memory)
    genthread = {m: None for m in vertices}
    depend = {m: frozenset() for m in vertices}
    reads: dict = {}
    for s in trace.steps:
        if s.kind in ("ld", "cas"):
            reads.setdefault(s.tid, [])
            if s.msgs[0] not in reads[s.tid]:
                reads[s.tid].append(s.msgs[0])
        if s.kind in ("st", "cas"):
            m = s.msgs[-1]
            if m not in genthread:
                vertices.append(m)
                genthread[m] = s.tid
                depend[m] = frozenset(reads.get(s.tid, ()))
    edges = {(a, b) for b, ds in depend.items() for a in ds}
    height = {}
    for m in vertices:
        height[m] = 1 + max((height[a] for a in depend[m]), default=-1) if depend[m] else 0
    return DependencyGraph(vertices, edges, genthread, height, depend)


def compaction_bound(s: SystemSpec) -> int:
    dis_size = sum(instruction_count(t.program) for t in s.threads)
    return 2 * s.dom * len(s.vars) + dis_size


def _resimulate(trace: Trace, spec: SystemSpec, retarget: dict):
    """Replay `trace` redirecting the reads listed in `retarget`
    (step index -> message in the original numbering).  Stores keep their own
    timestamps; views are recomputed.  Returns the new trace or None."""
    machine = Machine.for_config(spec, trace.initial)
    i = trace.initial
    cf = AbsConfig(i.memory, i.threads, i.tids, i.roles, i.programs, frozenset())
    version = {m: m for m in i.memory}
    steps = []
    for index, s in enumerate(trace.steps):
        slot = cf.tids.index(s.tid)
        lc = cf.threads[slot]
        msgs = list(s.msgs)
        if s.kind in ("ld", "cas"):
            src = retarget.get(index, msgs[0])
            if src not in version:
                return None
            msgs[0] = version[src]
        if s.kind == "ld":
            new_msgs = (msgs[0],)
        elif s.kind == "st":
            m = s.msgs[0]
            new_msgs = (Message(m.var, m.val, set_entry(lc.view, m.var, m.ts)),)
        elif s.kind == "cas":
            ml = msgs[0]
            x = ml.var
            if ml.ts & 1:
                base = join_env(lc.view, ml.view, x)
                t = base[x] >> 1
            else:
                base = join(lc.view, ml.view)
                t = ml.ts >> 1
            new_msgs = (ml, Message(x, s.msgs[1].val, set_entry(base, x, nat(t + 1))))
        else:
            new_msgs = ()
        step = Step(s.tid, s.kind, s.to, new_msgs)
        try:
            cf = apply_abstract_step(machine, cf, step)
        except AbsStepError:
            return None
        if s.kind in ("st", "cas"):
            version.setdefault(s.msgs[-1], new_msgs[-1])
        steps.append(step)
    return Trace(trace.vars, trace.initial, steps)


def _leq(v1, v2) -> bool:
    return all(a <= b for a, b in zip(v1, v2))


def compact(trace: Trace, spec: SystemSpec, goal: Optional[GoalSpec] = None) -> Trace:
    """Retarget env-message reads to equal (var, value) copies with smaller
    views and drop steps that do not contribute to the goal.

    Each retargeting is kept only when the replay stays valid and still
    generates the goal.
    """
    goal_key = None
    if goal is not None:
        goal_key = (spec.vars.index(goal.var), goal.val)

    def generates(t):
        if goal_key is None:
            return True
        return any(s.kind in ("st", "cas") and (s.msgs[-1].var, s.msgs[-1].val) == goal_key
                   for s in t.steps)

    current = trace
    changed = True
    while changed:
        changed = False
        order = {}
        for idx, s in enumerate(current.steps):
            if s.kind in ("st", "cas"):
                order.setdefault(s.msgs[-1], idx)
        first_read = {}
        for idx, s in enumerate(current.steps):
            if s.kind not in ("ld", "cas"):
                continue
            m = s.msgs[0]
            if not m.ts & 1:
                continue
            key = (s.tid, m.var, m.val)
            if key not in first_read:
                first_read[key] = idx
            candidates = [c for c, at in order.items()
                          if at < idx and c.ts & 1 and (c.var, c.val) == (m.var, m.val)
                          and c != m and _leq(c.view, m.view)]
            if key in first_read and first_read[key] != idx:
                earlier = current.steps[first_read[key]].msgs[0]
                if earlier != m and earlier not in candidates:
                    candidates.insert(0, earlier)
            for c in sorted(candidates, key=lambda c: (order.get(c, -1), c)):
                trial = _resimulate(current, spec, {idx: c})
                if trial is not None and generates(trial):
                    current = trial
                    changed = True
                    break
            if changed:
                break
    return _prune_unneeded(current, goal_key) if goal_key is not None else current


def _prune_unneeded(trace: Trace, goal_key) -> Trace:
    producer = {}
    for i, s in enumerate(trace.steps):
        if s.kind in ("st", "cas"):
            producer.setdefault(s.msgs[-1], i)
    goal_index = next((i for i, s in enumerate(trace.steps) if s.kind in ("st", "cas")
                       and (s.msgs[-1].var, s.msgs[-1].val) == goal_key), None)
    if goal_index is None:
        return trace
    needed = set()
    todo = [goal_index]
    while todo:
        i = todo.pop()
        if i in needed:
            continue
        needed.add(i)
        s = trace.steps[i]
        for j in range(i):
            if trace.steps[j].tid == s.tid:
                todo.append(j)
        if s.kind in ("ld", "cas"):
            j = producer.get(s.msgs[0])
            if j is not None and j < i:
                todo.append(j)
    return Trace(trace.vars, trace.initial, [s for i, s in enumerate(trace.steps) if i in needed])


def abs_trace_to_dict(trace: Trace) -> dict:
    return trace_to_dict(trace, fmt=fmt_ts)


def abs_trace_from_dict(data: dict) -> Trace:
    return trace_from_dict(data, parse_ts=parse_ts)
