"""The functional abstract machine: push/pop/constant transitions over memories."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .syntax import (
    MAIN,
    NIL,
    Const,
    ConstSym,
    Location,
    Nil,
    Pop,
    Push,
    SeqVar,
    Term,
    free_vars,
    locations_of,
    substitute,
)

Memory = dict[Location, tuple[Term, ...]]


@dataclass(frozen=True)
class MachineState:
    memory: Memory
    code: Term

    def stack(self, loc: Location) -> tuple[Term, ...]:
        return self.memory.get(loc, ())


@dataclass(frozen=True)
class Stepped:
    state: MachineState


@dataclass(frozen=True)
class Terminal:
    memory: Memory


@dataclass(frozen=True)
class Stuck:
    state: MachineState
    reason: str


DeltaFn = Callable[..., Optional[tuple[Term, ...]]]


@dataclass
class DeltaRegistry:
    """Constant operator rules; literals always push themselves.

    A rule receives the popped main-stack terms top-first and returns the
    output terms to push (bottom-first), or None when undefined.
    """

    fns: dict[str, DeltaFn] = field(default_factory=dict)

    def lookup(self, sym: ConstSym) -> Optional[DeltaFn]:
        if sym.is_literal():
            return lambda: (Const(sym, NIL),)
        return self.fns.get(sym.name)


def _as_int(t: Term) -> Optional[int]:
    match t:
        case Const(sym, Nil()) if sym.arity_in == 0:
            try:
                return int(sym.name)
            except ValueError:
                return None
    return None


def int_term(n: int) -> Term:
    return Const(ConstSym(str(n), 0, 1), NIL)


def bool_term(b: bool) -> Term:
    return Const(ConstSym("true" if b else "false", 0, 1), NIL)


def _delta_arith(op) -> DeltaFn:
    def fn(top: Term, below: Term) -> Optional[tuple[Term, ...]]:
        a, b = _as_int(top), _as_int(below)
        if a is None or b is None:
            return None
        return (int_term(op(a, b)),)

    return fn


def _delta_if(top: Term, second: Term, third: Term) -> Optional[tuple[Term, ...]]:
    match top:
        case Const(ConstSym("true", 0, 1), Nil()):
            return (third,)
        case Const(ConstSym("false", 0, 1), Nil()):
            return (second,)
    return None


def default_registry() -> DeltaRegistry:
    return DeltaRegistry({
        "+": _delta_arith(lambda a, b: a + b),
        "mul": _delta_arith(lambda a, b: a * b),
        "if": _delta_if,
    })


DEFAULT_REGISTRY = default_registry()


def step(state: MachineState, delta: DeltaRegistry = DEFAULT_REGISTRY) -> Union[Stepped, Terminal, Stuck]:
    memory, code = state.memory, state.code
    match code:
        case Nil():
            return Terminal(memory)
        case Push(arg, loc, cont):
            stack = memory.get(loc, ())
            return Stepped(MachineState({**memory, loc: stack + (arg,)}, cont))
        case Pop(loc, x, cont, _):
            stack = memory.get(loc, ())
            if not stack:
                return Stuck(state, f"PopOnEmpty {loc.name}")
            popped = stack[-1]
            return Stepped(MachineState({**memory, loc: stack[:-1]}, substitute(popped, x, cont)))
        case Const(sym, cont):
            fn = delta.lookup(sym)
            if fn is None:
                return Stuck(state, f"DeltaUndefined {sym.name}")
            stack = memory.get(MAIN, ())
            if len(stack) < sym.arity_in:
                return Stuck(state, f"DeltaUnderflow {sym.name}")
            inputs = stack[len(stack) - sym.arity_in:]
            outputs = fn(*reversed(inputs))  # top of stack first
            if outputs is None:
                return Stuck(state, f"DeltaUndefined {sym.name} {inputs}")
            remaining = stack[: len(stack) - sym.arity_in]
            return Stepped(MachineState({**memory, MAIN: remaining + tuple(outputs)}, cont))
        case SeqVar(x, _):
            return Stuck(state, f"FreeVariable {x}")
    raise TypeError(code)


@dataclass(frozen=True)
class RunResult:
    status: str  # 'done', 'stuck', 'fuel'
    memory: Memory
    steps: int
    state: Optional[MachineState] = None
    reason: Optional[str] = None

    @property
    def final(self) -> Memory:
        if self.status != "done":
            raise ValueError(f"run did not terminate: {self.status} ({self.reason})")
        return self.memory


def run(memory: Memory, t: Term, delta: DeltaRegistry = DEFAULT_REGISTRY,
        fuel: int = 10**6) -> RunResult:
    if free_vars(t):
        raise ValueError(f"cannot run open term (free: {sorted(free_vars(t))})")
    state = MachineState(dict(memory), t)
    steps = 0
    while steps < fuel:
        match step(state, delta):
            case Terminal(final):
                return RunResult("done", final, steps)
            case Stuck(s, reason):
                return RunResult("stuck", s.memory, steps, s, reason)
            case Stepped(s):
                state = s
                steps += 1
    return RunResult("fuel", state.memory, steps, state)


def trace(memory: Memory, t: Term, delta: DeltaRegistry = DEFAULT_REGISTRY,
          fuel: int = 10**6) -> tuple[list[MachineState], RunResult]:
    """All states of the run, initial state first."""
    if free_vars(t):
        raise ValueError(f"cannot trace open term (free: {sorted(free_vars(t))})")
    state = MachineState(dict(memory), t)
    states = [state]
    steps = 0
    while steps < fuel:
        match step(state, delta):
            case Terminal(final):
                return states, RunResult("done", final, steps)
            case Stuck(s, reason):
                return states, RunResult("stuck", s.memory, steps, s, reason)
            case Stepped(s):
                state = s
                states.append(s)
                steps += 1
    return states, RunResult("fuel", state.memory, steps, state)


def trace_lines(states: list[MachineState], initial_order: Optional[list[Location]] = None) -> list[str]:
    """Render states as `loc = stack | ... || code` lines, top rightmost."""
    from .parser import format_memory, print_term

    order: list[Location] = list(initial_order or [])
    seen = set(order)
    for st in states:
        for loc in sorted(st.memory, key=lambda l: l.name):
            if loc not in seen and (st.memory.get(loc) or loc.is_main()):
                order.append(loc)
                seen.add(loc)
        for loc in sorted(locations_of(st.code), key=lambda l: l.name):
            if loc not in seen:
                order.append(loc)
                seen.add(loc)
    if MAIN not in seen:
        order.append(MAIN)
    lines = []
    for st in states:
        lines.append(f"{format_memory(st.memory, order, sep=' | ')} || {print_term(st.code)}")
    return lines
