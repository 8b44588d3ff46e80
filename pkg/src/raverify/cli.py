"""Command-line front end: `raverify <command> ...`.

Exit codes for `verify`: 0 SAFE, 1 UNSAFE, 2 UNKNOWN (bounds or budget hit),
3 usage, parse or class errors.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

from . import reductions
from .datalog import infer_cached
from .encoder import emit_instance, encode_instance, enumerate_guesses, solve_via_datalog
from .program_ir import (
    GoalSpec, ParseError, SystemSpec, assert_to_goal, classify, format_system, has_assert,
    parse_system,
)
from .ra_core import (
    Reachable, Valid, explore_concrete, simulate, trace_from_dict, trace_to_dict, validate_run,
)
from .simplified import (
    BudgetExceeded, ClassViolation, Generable, abs_trace_from_dict, abs_trace_to_dict,
    check_message_generation, validate_abstract, verify_leader,
)

SAFE, UNSAFE, UNKNOWN, USAGE = 0, 1, 2, 3
ENGINES = ("simplified", "datalog", "leader", "concrete")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE)


@dataclass
class Verdict:
    status: str
    engine: str
    nodes: int = 0
    seconds: float = 0.0
    witness: Optional[dict] = None
    notes: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return {"SAFE": SAFE, "UNSAFE": UNSAFE}.get(self.status, UNKNOWN)

    def summary(self) -> str:
        return f"{self.status} engine={self.engine} nodes={self.nodes} time={self.seconds:.2f}s"


# ------------------------------------------------------------------- loading

def load_system(ref: str, l: int = 2, z: int = 3) -> tuple:
    """Read a program file, or a bundled example by name.

    Returns (system, goal or None).  Bundled examples carry their goal.
    """
    if os.path.exists(ref):
        with open(ref, encoding="utf-8") as fh:
            return parse_system(fh.read()), None
    name = os.path.basename(ref)
    if name.endswith(".ra"):
        name = name[:-3]
    examples = reductions.builtin_examples(l, z)
    if name in examples:
        s = parse_system(reductions.example_sources(l, z)[name])
        return s, (examples[name][1] if not has_assert(s) else None)
    raise UsageError(f"no such file or example: {ref}")


def parse_goal(text: str) -> GoalSpec:
    var, sep, val = text.partition("=")
    if not sep or not var.strip() or not val.strip().isdigit():
        raise UsageError(f"goal must look like VAR=VALUE, got {text!r}")
    return GoalSpec(var.strip(), int(val))


def prepare(args) -> tuple:
    """System with assertions turned into a goal, plus the goal to check."""
    s, goal = load_system(args.file, args.l, args.z)
    if has_assert(s):
        s, assert_goal = assert_to_goal(s)
        goal = goal or assert_goal
    if getattr(args, "goal", None):
        goal = parse_goal(args.goal)
    return s, goal


def require_goal(s: SystemSpec, goal: Optional[GoalSpec]) -> GoalSpec:
    if goal is None:
        raise UsageError("the system has no assert(false); pass --goal VAR=VALUE")
    if goal.var not in s.vars or not 0 <= goal.val < s.dom:
        raise UsageError(f"goal {goal.var}={goal.val} is not a variable/value of the system")
    return goal


def env_count(s: SystemSpec, requested: int) -> int:
    """Replicated env threads only exist when the system has an env program."""
    return requested if s.env is not None else 0


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _with_semantics(semantics: str, data: dict) -> dict:
    return {"semantics": semantics, **data}


# ------------------------------------------------------------------- engines

def _abstract_witness(s: SystemSpec, trace) -> dict:
    result = validate_abstract(trace, s)
    if not isinstance(result, Valid):
        raise RuntimeError(f"witness does not replay: {result}")
    return _with_semantics("abstract", abs_trace_to_dict(trace))


def _from_abstract(engine: str, result, s: SystemSpec, started: float) -> Verdict:
    elapsed = time.perf_counter() - started
    if isinstance(result, Generable):
        return Verdict("UNSAFE", engine, result.nodes, elapsed, _abstract_witness(s, result.trace))
    if isinstance(result, BudgetExceeded):
        return Verdict("UNKNOWN", engine, result.nodes, elapsed, notes=[result.reason])
    return Verdict("SAFE", engine, result.nodes, elapsed)


def cmd_verify(s: SystemSpec, goal: GoalSpec, engine: str, args) -> Verdict:
    started = time.perf_counter()
    if engine == "simplified":
        result = check_message_generation(s, goal, budget=args.max_nodes)
        return _from_abstract(engine, result, s, started)
    if engine == "leader":
        result = verify_leader(s, goal, budget=args.max_nodes)
        return _from_abstract(engine, result, s, started)
    if engine == "datalog":
        result = solve_via_datalog(s, goal, jobs=args.jobs)
        elapsed = time.perf_counter() - started
        if not hasattr(result, "instance"):
            return Verdict("SAFE", engine, result.guesses, elapsed)
        notes = []
        inst = result.instance
        if args.emit_datalog:
            emit_instance(inst, args.emit_datalog, args.emit_linear)
            notes.append(f"instance written to {args.emit_datalog}")
        if args.cache_k is not None:
            ok = infer_cached(inst.program, inst.goal, args.cache_k)
            notes.append(f"goal derivable with cache size {args.cache_k}: {ok}")
        # the Datalog answer certifies generability; the replayable run comes
        # from the simplified engine, which decides the same question
        witness = check_message_generation(s, goal, budget=args.max_nodes)
        verdict = Verdict("UNSAFE", engine, result.guesses, time.perf_counter() - started,
                          notes=notes)
        if isinstance(witness, Generable):
            verdict.witness = _abstract_witness(s, witness.trace)
        else:
            verdict.notes.append("no witness run within the node budget")
        return verdict
    if engine == "concrete":
        result = explore_concrete(s, env_count(s, args.nenv), args.max_depth, goal=goal,
                                  ts_horizon=args.ts_horizon, max_nodes=args.max_nodes)
        elapsed = time.perf_counter() - started
        if isinstance(result, Reachable):
            check = validate_run(result.trace, s)
            if not isinstance(check, Valid):
                raise RuntimeError(f"witness does not replay: {check}")
            return Verdict("UNSAFE", engine, result.nodes, elapsed,
                           _with_semantics("concrete", trace_to_dict(result.trace)))
        if result.exhausted and s.env is None:
            return Verdict("SAFE", engine, result.nodes, elapsed)
        why = "node budget" if result.budget_exceeded else (
            "depth bound" if not result.exhausted else "env threads are unbounded")
        return Verdict("UNKNOWN", engine, result.nodes, elapsed, notes=[why])
    raise UsageError(f"unknown engine {engine}")


# ------------------------------------------------------------------ commands

def run_parse(args) -> int:
    s, _ = load_system(args.file, args.l, args.z)
    text = format_system(s)
    if args.emit_program:
        _write(args.emit_program, text)
    else:
        sys.stdout.write(text)
    if s.env is not None:
        print(f"# {s.env_name}: env {_class_text(s.env)}")
    for t in s.threads:
        print(f"# {t.name}: {t.role} {_class_text(t.program)}")
    return 0


def _class_text(program) -> str:
    c = classify(program)
    return f"{'acyc' if c.acyc else 'loops'} {'nocas' if c.nocas else 'cas'}"


def run_simulate(args) -> int:
    s, _ = prepare(args)
    trace = simulate(s, env_count(s, args.nenv), args.max_depth, seed=args.seed)
    print(json.dumps(_with_semantics("concrete", trace_to_dict(trace)), indent=2))
    return 0


def run_verify(args) -> int:
    s, goal = prepare(args)
    goal = require_goal(s, goal)
    verdict = cmd_verify(s, goal, args.engine, args)
    print(verdict.summary())
    print(f"goal: {goal.var}={goal.val}")
    for note in verdict.notes:
        print(f"note: {note}")
    if verdict.witness is not None:
        steps = len(verdict.witness["steps"])
        print(f"witness: {steps} steps ({verdict.witness['semantics']} semantics), replays Valid")
        if args.witness:
            _write(args.witness, json.dumps(verdict.witness, indent=2) + "\n")
    return verdict.exit_code


def run_validate(args) -> int:
    s, _ = prepare(args)
    with open(args.trace, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("semantics") == "abstract":
        result = validate_abstract(abs_trace_from_dict(data), s)
    else:
        result = validate_run(trace_from_dict(data), s)
    if isinstance(result, Valid):
        print("Valid")
        return 0
    print(f"Invalid at step {result.step}: {result.rule}")
    return 1


def run_encode(args) -> int:
    s, goal = prepare(args)
    goal = require_goal(s, goal)
    if not args.emit_datalog:
        raise UsageError("encode needs --emit-datalog DIR")
    os.makedirs(args.emit_datalog, exist_ok=True)
    count = 0
    for count, guess in enumerate(enumerate_guesses(s), start=1):
        if count > args.max_guesses:
            count -= 1
            break
        inst = encode_instance(s, guess, goal)
        emit_instance(inst, os.path.join(args.emit_datalog, f"instance_{count:04d}.dl"),
                      args.emit_linear)
    print(f"{count} instance(s) written to {args.emit_datalog}")
    return 0


def run_generate(args) -> int:
    if args.kind == "qbf":
        if args.clauses:
            q = reductions.QBF(args.n, reductions.parse_clauses(args.clauses))
        else:
            rng = random.Random(args.seed)
            q = reductions.random_qbf(rng, args.n, rng.randint(1, 4))
        system = reductions.qbf_system(q)
        header = f"# qbf n={q.n}: " + " & ".join(" | ".join(c) for c in q.clauses)
    elif args.kind == "ssat":
        if not args.circuit:
            raise UsageError("generate ssat needs --circuit FILE.json")
        with open(args.circuit, encoding="utf-8") as fh:
            circuit = reductions.circuit_from_json(fh.read())
        system = reductions.succinct_sat_system(circuit)
        header = f"# succinct 3CNF with {2 ** circuit.n} clauses"
    else:
        if not args.file:
            raise UsageError("generate dis2env needs an input program")
        s, _ = load_system(args.file, args.l, args.z)
        system = reductions.dis_to_env_system(s)
        header = f"# env simulation of {len(s.threads)} distinguished thread(s)"
    text = header + "\n" + format_system(system)
    if args.emit_program:
        _write(args.emit_program, text)
        print(f"written to {args.emit_program}")
    else:
        sys.stdout.write(text)
    _, goal = assert_to_goal(system)
    print(f"goal: {goal.var}={goal.val}", file=sys.stderr)
    return 0


def run_examples(args) -> int:
    sources = reductions.example_sources(args.l, args.z)
    if not args.name:
        for name in sources:
            print(name)
        return 0
    if args.name not in sources:
        raise UsageError(f"unknown example {args.name}; choose from {', '.join(sources)}")
    if args.emit_program:
        _write(args.emit_program, sources[args.name])
    else:
        sys.stdout.write(sources[args.name])
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="raverify", description="Safety verification of parameterized "
                "programs under release-acquire semantics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, file_required=True):
        if file_required:
            sp.add_argument("file", help="program file or bundled example name")
        sp.add_argument("--l", type=int, default=2, help="producer values for prodcons")
        sp.add_argument("--z", type=int, default=3, help="consumer rounds for prodcons")

    sp = sub.add_parser("parse", help="parse, pretty-print and classify a program")
    common(sp)
    sp.add_argument("--emit-program", metavar="PATH")
    sp.set_defaults(run=run_parse)

    sp = sub.add_parser("simulate", help="one random concrete run as JSON")
    common(sp)
    sp.add_argument("--nenv", type=int, default=2)
    sp.add_argument("--max-depth", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(run=run_simulate)

    sp = sub.add_parser("verify", help="decide whether the goal message can be generated")
    common(sp)
    sp.add_argument("--engine", choices=ENGINES, default="simplified")
    sp.add_argument("--goal", metavar="VAR=VALUE",
                    help="goal message; default is the program's assert(false)")
    sp.add_argument("--nenv", type=int, default=2, help="env threads for the concrete engine")
    sp.add_argument("--max-depth", type=int, default=12, help="step bound for the concrete engine")
    sp.add_argument("--max-nodes", type=int, default=10 ** 6, help="state budget")
    sp.add_argument("--ts-horizon", type=int, default=None,
                    help="store timestamp slots per variable (default: max depth)")
    sp.add_argument("--cache-k", type=int, default=None,
                    help="also check derivability with this cache size (datalog engine)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes (datalog engine)")
    sp.add_argument("--emit-datalog", metavar="PATH", help="write the witnessing instance")
    sp.add_argument("--emit-linear", metavar="K", type=int, default=None,
                    help="also write the instance linearized for cache size K")
    sp.add_argument("--witness", metavar="PATH", help="write the witness trace as JSON")
    sp.set_defaults(run=run_verify)

    sp = sub.add_parser("validate", help="replay a JSON trace against a program")
    common(sp)
    sp.add_argument("trace")
    sp.set_defaults(run=run_validate)

    sp = sub.add_parser("encode", help="write the Datalog instance of every guess")
    common(sp)
    sp.add_argument("--goal", metavar="VAR=VALUE")
    sp.add_argument("--emit-datalog", metavar="DIR")
    sp.add_argument("--emit-linear", metavar="K", type=int, default=None)
    sp.add_argument("--max-guesses", type=int, default=100)
    sp.set_defaults(run=run_encode)

    sp = sub.add_parser("generate", help="build a system from a reduction")
    sp.add_argument("kind", choices=("qbf", "ssat", "dis2env"))
    sp.add_argument("file", nargs="?", help="input program for dis2env")
    sp.add_argument("--n", type=int, default=1, help="QBF alternation depth")
    sp.add_argument("--clauses", help='QBF matrix, e.g. "u0 | -e1 | u1 & -u0 | e1 | u1"')
    sp.add_argument("--seed", type=int, default=0, help="random QBF when --clauses is absent")
    sp.add_argument("--circuit", metavar="FILE.json")
    sp.add_argument("--emit-program", metavar="PATH")
    sp.add_argument("--l", type=int, default=2)
    sp.add_argument("--z", type=int, default=3)
    sp.set_defaults(run=run_generate)

    sp = sub.add_parser("examples", help="list or print the bundled examples")
    sp.add_argument("name", nargs="?")
    sp.add_argument("--emit-program", metavar="PATH")
    sp.add_argument("--l", type=int, default=2)
    sp.add_argument("--z", type=int, default=3)
    sp.set_defaults(run=run_examples)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (UsageError, ParseError, ClassViolation) as exc:
        kind = "class error" if isinstance(exc, ClassViolation) else "error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
