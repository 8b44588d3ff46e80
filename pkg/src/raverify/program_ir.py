"""While-language programs: AST, parser, pretty printer and LTS conversion."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, NamedTuple, Optional, Union


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        super().__init__(where + message)


# ---------------------------------------------------------------- expressions

@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Reg:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Reg, BinOp]
Operand = Union[Const, Reg]

ARITH_OPS = ("+", "-", "*")
COMPARE_OPS = ("=", "!=", "<", "<=")


# ------------------------------------------------------------------- commands

@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assume:
    cond: Expr


@dataclass(frozen=True)
class AssertFalse:
    pass


@dataclass(frozen=True)
class Assign:
    reg: str
    expr: Expr


@dataclass(frozen=True)
class Load:
    reg: str
    var: str


@dataclass(frozen=True)
class Store:
    var: str
    src: Operand


@dataclass(frozen=True)
class Cas:
    var: str
    expected: Operand
    new: Operand


@dataclass(frozen=True)
class Seq:
    first: "Command"
    second: "Command"


@dataclass(frozen=True)
class Choice:
    left: "Command"
    right: "Command"


@dataclass(frozen=True)
class Star:
    body: "Command"


Instruction = Union[Skip, Assume, AssertFalse, Assign, Load, Store, Cas]
Command = Union[Instruction, Seq, Choice, Star]
LEAF_TYPES = (Skip, Assume, AssertFalse, Assign, Load, Store, Cas)


def seq(*cmds: Command) -> Command:
    """Right-nested sequential composition of one or more commands."""
    if not cmds:
        return Skip()
    result = cmds[-1]
    for c in reversed(cmds[:-1]):
        result = Seq(c, result)
    return result


def choice(*cmds: Command) -> Command:
    """Right-nested nondeterministic choice between one or more commands."""
    if not cmds:
        raise ValueError("choice needs at least one branch")
    result = cmds[-1]
    for c in reversed(cmds[:-1]):
        result = Choice(c, result)
    return result


def leaves(c: Command) -> Iterator[Instruction]:
    stack = [c]
    while stack:
        node = stack.pop()
        if isinstance(node, Seq):
            stack.append(node.second)
            stack.append(node.first)
        elif isinstance(node, Choice):
            stack.append(node.right)
            stack.append(node.left)
        elif isinstance(node, Star):
            stack.append(node.body)
        else:
            yield node


def instruction_count(c: Optional[Command]) -> int:
    if c is None:
        return 0
    return sum(1 for _ in leaves(c))


def node_count(c: Command) -> int:
    if isinstance(c, (Seq, Choice)):
        a, b = (c.first, c.second) if isinstance(c, Seq) else (c.left, c.right)
        return 1 + node_count(a) + node_count(b)
    if isinstance(c, Star):
        return 1 + node_count(c.body)
    return 1


def map_leaves(c: Command, fn: Callable[[Instruction], Command]) -> Command:
    if isinstance(c, Seq):
        return Seq(map_leaves(c.first, fn), map_leaves(c.second, fn))
    if isinstance(c, Choice):
        return Choice(map_leaves(c.left, fn), map_leaves(c.right, fn))
    if isinstance(c, Star):
        return Star(map_leaves(c.body, fn))
    return fn(c)


# --------------------------------------------------------------------- system

@dataclass(frozen=True)
class ThreadDecl:
    name: str
    role: str  # "dis" or "ldr"
    program: Command


@dataclass(frozen=True)
class SystemSpec:
    vars: tuple
    dom: int
    init: int
    regs: tuple
    env: Optional[Command] = None
    threads: tuple = ()
    env_name: str = "env"

    def __post_init__(self):
        validate_system(self)

    @property
    def dis_programs(self) -> tuple:
        return self.threads

    def leader(self) -> Optional[ThreadDecl]:
        for t in self.threads:
            if t.role == "ldr":
                return t
        return None


@dataclass(frozen=True)
class GoalSpec:
    var: str
    val: int


class Classification(NamedTuple):
    acyc: bool
    nocas: bool


def classify(c: Command) -> Classification:
    acyc = True
    nocas = True
    stack = [c]
    while stack:
        node = stack.pop()
        if isinstance(node, Seq):
            stack += [node.first, node.second]
        elif isinstance(node, Choice):
            stack += [node.left, node.right]
        elif isinstance(node, Star):
            acyc = False
            stack.append(node.body)
        elif isinstance(node, Cas):
            nocas = False
    return Classification(acyc, nocas)


def _expr_regs(e: Expr) -> Iterator[str]:
    if isinstance(e, Reg):
        yield e.name
    elif isinstance(e, BinOp):
        yield from _expr_regs(e.left)
        yield from _expr_regs(e.right)


def _expr_consts(e: Expr) -> Iterator[int]:
    if isinstance(e, Const):
        yield e.value
    elif isinstance(e, BinOp):
        yield from _expr_consts(e.left)
        yield from _expr_consts(e.right)


def validate_system(s: SystemSpec) -> None:
    if s.dom < 1:
        raise ParseError("domain must contain at least one value")
    if not 0 <= s.init < s.dom:
        raise ParseError(f"value out of domain: init {s.init}")
    if len(set(s.vars)) != len(s.vars):
        raise ParseError("duplicate shared variable")
    if len(set(s.regs)) != len(s.regs):
        raise ParseError("duplicate register")
    if sum(1 for t in s.threads if t.role == "ldr") > 1:
        raise ParseError("at most one ldr thread is allowed")
    names = [t.name for t in s.threads]
    if len(set(names)) != len(names):
        raise ParseError("duplicate thread name")
    programs = [t.program for t in s.threads]
    if s.env is not None:
        programs.append(s.env)
    vars_, regs = set(s.vars), set(s.regs)
    for prog in programs:
        for ins in leaves(prog):
            _check_instruction(ins, vars_, regs, s.dom)


def _check_instruction(ins, vars_, regs, dom) -> None:
    exprs = []
    used_regs = []
    used_vars = []
    if isinstance(ins, Assume):
        exprs.append(ins.cond)
    elif isinstance(ins, Assign):
        used_regs.append(ins.reg)
        exprs.append(ins.expr)
    elif isinstance(ins, Load):
        used_regs.append(ins.reg)
        used_vars.append(ins.var)
    elif isinstance(ins, Store):
        used_vars.append(ins.var)
        exprs.append(ins.src)
    elif isinstance(ins, Cas):
        used_vars.append(ins.var)
        exprs += [ins.expected, ins.new]
    for e in exprs:
        used_regs.extend(_expr_regs(e))
        for v in _expr_consts(e):
            if not 0 <= v < dom:
                raise ParseError(f"value out of domain: {v}")
    for r in used_regs:
        if r not in regs:
            raise ParseError(f"undeclared identifier: register {r}")
    for v in used_vars:
        if v not in vars_:
            raise ParseError(f"undeclared identifier: variable {v}")


# ------------------------------------------------------------------ evaluation

def eval_expr(e: Expr, regs: dict) -> int:
    """Evaluate an expression; arithmetic is left unwrapped (see `wrap`)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Reg):
        return regs[e.name]
    a = eval_expr(e.left, regs)
    b = eval_expr(e.right, regs)
    return _apply(e.op, a, b)


def _apply(op: str, a: int, b: int) -> int:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "=":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    raise ValueError(f"unknown operator {op}")


def compile_expr(e: Expr, reg_index: dict, dom: int) -> Callable[[tuple], int]:
    """Compile to a closure over a register tuple.

    Arithmetic results are reduced modulo the domain size; comparisons yield
    0 or 1 (reduced only when the value is later stored in a register).
    """
    if isinstance(e, Const):
        v = e.value
        return lambda rv: v
    if isinstance(e, Reg):
        i = reg_index[e.name]
        return lambda rv: rv[i]
    left = compile_expr(e.left, reg_index, dom)
    right = compile_expr(e.right, reg_index, dom)
    op = e.op
    if op in ARITH_OPS:
        return lambda rv: _apply(op, left(rv), right(rv)) % dom
    return lambda rv: _apply(op, left(rv), right(rv))


# ------------------------------------------------------------------------ LTS

@dataclass
class LTS:
    """Position automaton of a command: state 0 is initial, state i > 0 is
    the point right after the i-th instruction occurrence."""

    n_states: int
    transitions: tuple
    finals: frozenset
    out: dict = field(default_factory=dict)

    @property
    def initial(self) -> int:
        return 0

    def successors(self, state: int):
        return self.out.get(state, ())

    def is_acyclic(self) -> bool:
        color = {}

        def visit(s):
            color[s] = 1
            for _, t in self.out.get(s, ()):
                c = color.get(t, 0)
                if c == 1:
                    return False
                if c == 0 and not visit(t):
                    return False
            color[s] = 2
            return True

        return visit(0)


def to_lts(c: Command) -> LTS:
    positions: list = []

    def analyse(node):
        # returns (nullable, first, last) and fills follow
        if isinstance(node, Seq):
            n1, f1, l1 = analyse(node.first)
            n2, f2, l2 = analyse(node.second)
            for p in l1:
                follow[p] |= f2
            return (n1 and n2, f1 | f2 if n1 else f1, l1 | l2 if n2 else l2)
        if isinstance(node, Choice):
            n1, f1, l1 = analyse(node.left)
            n2, f2, l2 = analyse(node.right)
            return (n1 or n2, f1 | f2, l1 | l2)
        if isinstance(node, Star):
            _, f, last = analyse(node.body)
            for p in last:
                follow[p] |= f
            return (True, f, last)
        positions.append(node)
        p = len(positions)
        follow[p] = set()
        return (False, {p}, {p})

    follow: dict = {}
    nullable, first, last = analyse(c)
    transitions = []
    out: dict = {}
    for p in sorted(first):
        transitions.append((0, positions[p - 1], p))
    for q in sorted(follow):
        for p in sorted(follow[q]):
            transitions.append((q, positions[p - 1], p))
    for src, ins, dst in transitions:
        out.setdefault(src, []).append((ins, dst))
    finals = set(last)
    if nullable:
        finals.add(0)
    return LTS(len(positions) + 1, tuple(transitions), frozenset(finals),
               {k: tuple(v) for k, v in out.items()})


def ast_sequences(c: Command, max_len: int) -> set:
    """All instruction sequences (prefixes of executions) of length <= max_len,
    computed directly on the syntax tree."""

    def go(node, budget):
        # returns (set of complete sequences, set of proper prefixes)
        if isinstance(node, LEAF_TYPES):
            return ({(node,)} if budget >= 1 else set()), {()}
        if isinstance(node, Seq):
            done1, pre1 = go(node.first, budget)
            done = set()
            pre = set(pre1)
            for s in done1:
                pre.add(s)
                d2, p2 = go(node.second, budget - len(s))
                done |= {s + t for t in d2}
                pre |= {s + t for t in p2}
            return done, pre
        if isinstance(node, Choice):
            d1, p1 = go(node.left, budget)
            d2, p2 = go(node.right, budget)
            return d1 | d2, p1 | p2
        # Star
        done = {()}
        pre = {()}
        frontier = {()}
        while frontier:
            nxt = set()
            for s in frontier:
                d, p = go(node.body, budget - len(s))
                pre |= {s + t for t in p}
                for t in d:
                    if t and len(s + t) <= budget and s + t not in done:
                        nxt.add(s + t)
            done |= nxt
            pre |= nxt
            frontier = nxt
        return done, pre

    done, pre = go(c, max_len)
    return {s for s in done | pre if len(s) <= max_len}


def lts_sequences(lts: LTS, max_len: int) -> set:
    result = {()}
    frontier = {((), 0)}
    for _ in range(max_len):
        nxt = set()
        for word, state in frontier:
            for ins, dst in lts.successors(state):
                w = word + (ins,)
                result.add(w)
                nxt.add((w, dst))
        frontier = nxt
    return result


# ------------------------------------------------------------- assert -> goal

def _fresh(name: str, taken) -> str:
    if name not in taken:
        return name
    i = 1
    while f"{name}{i}" in taken:
        i += 1
    return f"{name}{i}"


def assert_to_goal(s: SystemSpec) -> tuple:
    """Replace every `assert(false)` by a store of a fresh value to a fresh
    variable.  Returns the rewritten system and the goal it makes generable.

    A one-value domain is widened to two values so the goal value differs from
    the initial value.
    """
    dom = max(s.dom, 2)
    goal_var = _fresh("goal", set(s.vars))
    goal_val = (s.init + 1) % dom

    def rewrite(ins):
        if isinstance(ins, AssertFalse):
            return Store(goal_var, Const(goal_val))
        return ins

    env = map_leaves(s.env, rewrite) if s.env is not None else None
    threads = tuple(replace(t, program=map_leaves(t.program, rewrite)) for t in s.threads)
    new = SystemSpec(s.vars + (goal_var,), dom, s.init, s.regs, env, threads, s.env_name)
    return new, GoalSpec(goal_var, goal_val)


def has_assert(s: SystemSpec) -> bool:
    progs = [t.program for t in s.threads] + ([s.env] if s.env is not None else [])
    return any(isinstance(i, AssertFalse) for p in progs for i in leaves(p))


# ---------------------------------------------------------------------- parser

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(\#|//)[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>:=|==|!=|<=|>=|[=<>+\-*(){};,!])
""", re.VERBOSE)

KEYWORDS = {"vars", "domain", "init", "regs", "env", "dis", "ldr", "skip", "assume",
            "assert", "false", "true", "load", "store", "cas", "or", "loop", "if",
            "else", "while"}


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            word = m.group()
            if kind == "ident" and word in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, word, line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.vars: set = set()
        self.regs: set = set()
        self.dom = 0

    def peek(self, offset=0) -> Token:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col)

    def next(self) -> Token:
        tok = self.peek()
        self.i += 1
        return tok

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.kind in ("kw", "op") and t.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            t = self.peek()
            self.error(f"syntax error: expected {text!r}, found {t.text or 'end of input'!r}")
        return self.next()

    def ident(self) -> Token:
        t = self.peek()
        if t.kind != "ident":
            self.error(f"syntax error: expected identifier, found {t.text or 'end of input'!r}")
        return self.next()

    def nat(self) -> int:
        t = self.peek()
        if t.kind != "num":
            self.error(f"syntax error: expected number, found {t.text or 'end of input'!r}")
        self.next()
        return int(t.text)

    def ident_list(self) -> list:
        names = []
        if self.at(";"):
            return names
        names.append(self.ident().text)
        while self.at(","):
            self.next()
            names.append(self.ident().text)
        return names

    # system := header thread+
    def system(self) -> SystemSpec:
        self.expect("vars")
        vars_ = self.ident_list()
        self.expect(";")
        self.expect("domain")
        dom_tok = self.peek()
        dom = self.nat()
        if dom < 1:
            self.error("domain must contain at least one value", dom_tok)
        self.expect(";")
        init = 0
        if self.at("init"):
            self.next()
            tok = self.peek()
            init = self.nat()
            if init >= dom:
                self.error(f"value out of domain: {init}", tok)
            self.expect(";")
        self.expect("regs")
        regs = self.ident_list()
        self.expect(";")
        self.vars, self.regs, self.dom = set(vars_), set(regs), dom
        env = None
        env_name = "env"
        threads = []
        while self.peek().kind != "eof":
            role_tok = self.peek()
            if not (self.at("env") or self.at("dis") or self.at("ldr")):
                self.error(f"syntax error: expected thread declaration, found {role_tok.text!r}")
            role = self.next().text
            # a role word may double as the thread name, as in `env env { ... }`
            if self.at("env") or self.at("dis") or self.at("ldr"):
                name = self.next().text
            else:
                name = self.ident().text
            self.expect("{")
            body = self.stmt()
            self.expect("}")
            if role == "env":
                if env is not None:
                    self.error("at most one env program is allowed", role_tok)
                env, env_name = body, name
            else:
                threads.append(ThreadDecl(name, role, body))
        if env is None and not threads:
            self.error("a system needs at least one thread")
        return SystemSpec(tuple(vars_), dom, init, tuple(regs), env, tuple(threads), env_name)

    def stmt(self) -> Command:
        first = self.term()
        if self.at(";"):
            self.next()
            if self.at("}") or self.peek().kind == "eof":
                return first
            return Seq(first, self.stmt())
        return first

    def block(self) -> Command:
        self.expect("{")
        body = self.stmt()
        self.expect("}")
        return body

    def term(self) -> Command:
        t = self.peek()
        if self.at("{"):
            branches = [self.block()]
            while self.at("or"):
                self.next()
                branches.append(self.block())
            return choice(*branches)
        if self.at("loop"):
            self.next()
            return Star(self.block())
        if self.at("if"):
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            negated = Assume(BinOp("=", cond, Const(0)))
            if self.at("else"):
                self.next()
                other = self.block()
                return Choice(Seq(Assume(cond), then), Seq(negated, other))
            return Choice(Seq(Assume(cond), then), negated)
        if self.at("while"):
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.block()
            return Seq(Star(Seq(Assume(cond), body)), Assume(BinOp("=", cond, Const(0))))
        if self.at("skip"):
            self.next()
            return Skip()
        if self.at("assume"):
            self.next()
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return Assume(e)
        if self.at("assert"):
            self.next()
            self.expect("(")
            self.expect("false")
            self.expect(")")
            return AssertFalse()
        if self.at("store"):
            self.next()
            var = self.var_ref()
            return Store(var, self.operand())
        if self.at("cas"):
            self.next()
            self.expect("(")
            var = self.var_ref()
            self.expect(",")
            a = self.operand()
            self.expect(",")
            b = self.operand()
            self.expect(")")
            return Cas(var, a, b)
        if t.kind == "ident":
            reg = self.reg_ref()
            self.expect(":=")
            if self.at("load"):
                self.next()
                return Load(reg, self.var_ref())
            return Assign(reg, self.expr())
        self.error(f"syntax error: unexpected {t.text or 'end of input'!r}")

    def var_ref(self) -> str:
        tok = self.ident()
        if tok.text not in self.vars:
            self.error(f"undeclared identifier: variable {tok.text}", tok)
        return tok.text

    def reg_ref(self) -> str:
        tok = self.ident()
        if tok.text not in self.regs:
            self.error(f"undeclared identifier: register {tok.text}", tok)
        return tok.text

    def literal(self) -> Const:
        tok = self.peek()
        v = self.nat()
        if v >= self.dom:
            self.error(f"value out of domain: {v}", tok)
        return Const(v)

    def operand(self) -> Operand:
        if self.peek().kind == "num":
            return self.literal()
        return Reg(self.reg_ref())

    # expr := sum (cmp sum)?
    def expr(self) -> Expr:
        left = self.sum()
        for op in ("==", "=", "!=", "<=", "<", ">=", ">"):
            if self.at(op):
                self.next()
                right = self.sum()
                if op == "==":
                    op = "="
                if op == ">=":
                    return BinOp("<=", right, left)
                if op == ">":
                    return BinOp("<", right, left)
                return BinOp(op, left, right)
        return left

    def sum(self) -> Expr:
        e = self.product()
        while self.at("+") or self.at("-"):
            op = self.next().text
            e = BinOp(op, e, self.product())
        return e

    def product(self) -> Expr:
        e = self.atom()
        while self.at("*"):
            self.next()
            e = BinOp("*", e, self.atom())
        return e

    def atom(self) -> Expr:
        t = self.peek()
        if t.kind == "num":
            return self.literal()
        if self.at("true"):
            self.next()
            return Const(1) if self.dom > 1 else BinOp("=", Const(0), Const(0))
        if self.at("false"):
            self.next()
            return Const(0)
        if self.at("("):
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            return Reg(self.reg_ref())
        self.error(f"syntax error: unexpected {t.text or 'end of input'!r} in expression")


def parse_system(text: str) -> SystemSpec:
    return _Parser(text).system()


def parse_command(text: str, vars_, regs, dom: int) -> Command:
    p = _Parser(text)
    p.vars, p.regs, p.dom = set(vars_), set(regs), dom
    c = p.stmt()
    if p.peek().kind != "eof":
        p.error(f"syntax error: unexpected {p.peek().text!r}")
    return c


# ------------------------------------------------------------- pretty printer

_PREC = {"=": 1, "!=": 1, "<": 1, "<=": 1, "+": 2, "-": 2, "*": 3}


def format_expr(e: Expr, parent: int = 0) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Reg):
        return e.name
    prec = _PREC[e.op]
    # left-associative: the right operand needs parentheses at equal precedence
    text = f"{format_expr(e.left, prec)} {e.op} {format_expr(e.right, prec + 1)}"
    if prec == 1 and parent == 0:
        return text
    return f"({text})" if prec < parent or (prec == 1 and parent > 0) else text


def format_command(c: Command, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(c, Seq):
        first = c.first
        head = format_command(first, indent)
        if isinstance(first, Seq):
            head = pad + "{\n" + format_command(first, indent + 1) + "\n" + pad + "}"
        return head + ";\n" + format_command(c.second, indent)
    if isinstance(c, Choice):
        branches = []
        node = c
        while isinstance(node, Choice):
            branches.append(node.left)
            node = node.right
        branches.append(node)
        parts = []
        for b in branches:
            parts.append("{\n" + format_command(b, indent + 1) + "\n" + pad + "}")
        return pad + " or ".join(parts)
    if isinstance(c, Star):
        return pad + "loop {\n" + format_command(c.body, indent + 1) + "\n" + pad + "}"
    return pad + format_instruction(c)


def format_instruction(c: Instruction) -> str:
    if isinstance(c, Skip):
        return "skip"
    if isinstance(c, Assume):
        return f"assume({format_expr(c.cond)})"
    if isinstance(c, AssertFalse):
        return "assert(false)"
    if isinstance(c, Assign):
        return f"{c.reg} := {format_expr(c.expr)}"
    if isinstance(c, Load):
        return f"{c.reg} := load {c.var}"
    if isinstance(c, Store):
        return f"store {c.var} {format_expr(c.src)}"
    if isinstance(c, Cas):
        return f"cas({c.var}, {format_expr(c.expected)}, {format_expr(c.new)})"
    raise TypeError(f"not an instruction: {c!r}")


def format_system(s: SystemSpec) -> str:
    lines = [f"vars {', '.join(s.vars)};", f"domain {s.dom};"]
    if s.init:
        lines.append(f"init {s.init};")
    lines.append(f"regs {', '.join(s.regs)};")
    for t in s.threads:
        lines.append("")
        lines.append(f"{t.role} {t.name} {{")
        lines.append(format_command(t.program, 1))
        lines.append("}")
    if s.env is not None:
        lines.append("")
        lines.append(f"env {s.env_name} {{")
        lines.append(format_command(s.env, 1))
        lines.append("}")
    return "\n".join(lines) + "\n"
