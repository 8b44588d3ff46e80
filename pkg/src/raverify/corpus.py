"""Random small systems for cross-checking the engines."""

from __future__ import annotations

import random
from typing import Optional

from .program_ir import (
    Assign, Assume, BinOp, Cas, Choice, Const, Load, Reg, Seq, Skip, Star, Store, SystemSpec,
    ThreadDecl, instruction_count,
)


def _instruction(rng: random.Random, vars_, regs, dom, allow_cas: bool):
    kinds = ["load", "load", "store", "store", "assume", "assign"]
    if allow_cas:
        kinds.append("cas")
    kind = rng.choice(kinds)
    if kind == "load":
        return Load(rng.choice(regs), rng.choice(vars_))
    if kind == "store":
        src = Const(rng.randrange(dom)) if rng.random() < 0.6 else Reg(rng.choice(regs))
        return Store(rng.choice(vars_), src)
    if kind == "assume":
        return Assume(BinOp(rng.choice(["=", "!="]), Reg(rng.choice(regs)), Const(rng.randrange(dom))))
    if kind == "assign":
        return Assign(rng.choice(regs), Const(rng.randrange(dom)))
    return Cas(rng.choice(vars_), Const(rng.randrange(dom)), Const(rng.randrange(dom)))


def random_program(rng: random.Random, size: int, vars_, regs, dom, allow_cas: bool,
                   allow_loops: bool):
    """A program with exactly `size` instructions."""
    if size <= 0:
        return Skip()
    if size == 1:
        return _instruction(rng, vars_, regs, dom, allow_cas)
    roll = rng.random()
    if roll < 0.15 and size >= 2:
        k = rng.randint(1, size - 1)
        return Choice(random_program(rng, k, vars_, regs, dom, allow_cas, allow_loops),
                      random_program(rng, size - k, vars_, regs, dom, allow_cas, allow_loops))
    if allow_loops and roll < 0.25:
        k = rng.randint(1, size - 1)
        return Seq(Star(random_program(rng, k, vars_, regs, dom, allow_cas, False)),
                   random_program(rng, size - k, vars_, regs, dom, allow_cas, allow_loops))
    k = rng.randint(1, size - 1)
    return Seq(random_program(rng, k, vars_, regs, dom, allow_cas, allow_loops),
               random_program(rng, size - k, vars_, regs, dom, allow_cas, allow_loops))


def random_system(seed: int, max_env: int = 6, max_dis: int = 6, max_vars: int = 2,
                  max_dom: int = 2, n_dis: Optional[int] = None, dis_cas: bool = True,
                  env_loops: bool = True) -> SystemSpec:
    """A system in the loop-free class: env without CAS, dis without loops."""
    rng = random.Random(seed)
    vars_ = ("x", "y")[: rng.randint(1, max_vars)]
    dom = rng.randint(1, max_dom) if max_dom > 1 else 1
    dom = max(dom, 2) if rng.random() < 0.8 else dom
    regs = ("r1",)
    env = random_program(rng, rng.randint(1, max_env), vars_, regs, dom, False, env_loops)
    count = n_dis if n_dis is not None else rng.randint(1, 2)
    threads = []
    for i in range(count):
        prog = random_program(rng, rng.randint(1, max_dis), vars_, regs, dom, dis_cas, False)
        threads.append(ThreadDecl(f"d{i + 1}", "dis", prog))
    return SystemSpec(vars_, dom, 0, regs, env, tuple(threads))


def corpus(count: int, start: int = 0, **kwargs) -> list:
    return [random_system(start + i, **kwargs) for i in range(count)]


def size_summary(s: SystemSpec) -> tuple:
    return (instruction_count(s.env), tuple(instruction_count(t.program) for t in s.threads))
