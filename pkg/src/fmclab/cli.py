"""Command-line front end.

Exit codes: 0 success, 2 usage, 3 parse/type errors, 4 stuck or out of
fuel.  `equiv` follows its own contract: 0 not distinguished, 1
distinguished (witness printed), 2 ill-typed or unusable input.
Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import sys

from . import bridge, equivalence, machine, measure, reduction
from .lambda_calc import LTypeError, infer_lambda, parse_lambda, print_lambda
from .parser import (
    ParseError,
    format_memory,
    parse_memory,
    parse_term,
    parse_type,
    print_term,
    print_type,
)
from .typesys import (
    Arrow,
    DEFAULT_SIGNATURE,
    TypeCheckError,
    check_infer,
    infer,
    infer_with_derivation,
    load_signature,
)

USAGE_ERROR, SYNTAX_ERROR, STUCK_ERROR = 2, 3, 4


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _signature(args):
    if getattr(args, "sig", None):
        return load_signature(_read(args.sig))
    return DEFAULT_SIGNATURE


def _parse_term_arg(args, sig, attr="file"):
    return parse_term(_read(getattr(args, attr)), sig)


def cmd_fmt(args) -> int:
    sig = _signature(args)
    print(print_term(parse_term(_read(args.file), sig), show_annots=args.annots))
    return 0


def cmd_check(args) -> int:
    sig = _signature(args)
    term = _parse_term_arg(args, sig)
    ty = parse_type(args.type)
    if not isinstance(ty, Arrow):
        print("error: expected an arrow type", file=sys.stderr)
        return USAGE_ERROR
    check_infer({}, term, ty, sig)
    print(f"{print_term(term)} : {print_type(ty)}")
    return 0


def cmd_infer(args) -> int:
    sig = _signature(args)
    scheme = infer({}, _parse_term_arg(args, sig), sig)
    print(scheme)
    return 0


def cmd_run(args, show_trace: bool = False) -> int:
    sig = _signature(args)
    term = _parse_term_arg(args, sig)
    memory = parse_memory(args.mem, sig) if args.mem else {}
    order = list(memory)
    if show_trace or args.trace:
        states, result = machine.trace(memory, term, fuel=args.fuel)
        for line in machine.trace_lines(states, order):
            print(line)
    else:
        result = machine.run(memory, term, fuel=args.fuel)
    if result.status == "done":
        print(f"final: {format_memory(result.memory)}")
        print(f"steps: {result.steps}")
        return 0
    print(f"{result.status}: {result.reason or 'fuel exhausted'} after {result.steps} steps",
          file=sys.stderr)
    return STUCK_ERROR


def cmd_normalize(args) -> int:
    sig = _signature(args)
    term = _parse_term_arg(args, sig)
    result = reduction.normalize(term, strategy=args.strategy, fuel=args.fuel, eta=args.eta)
    if result.status != "normal":
        print(f"fuel exhausted after {result.steps} steps", file=sys.stderr)
        print(print_term(result.term))
        return STUCK_ERROR
    print(print_term(result.term))
    return 0


def cmd_graph(args) -> int:
    sig = _signature(args)
    term = _parse_term_arg(args, sig)
    graph = reduction.reduction_graph(term, node_bound=args.bound)
    dot = reduction.to_dot(graph)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(dot + "\n")
    else:
        print(dot)
    print(f"nodes: {len(graph.nodes)}, normal forms: {len(graph.normal_forms())}",
          file=sys.stderr)
    return 0


def cmd_measure(args) -> int:
    sig = _signature(args)
    term = _parse_term_arg(args, sig)
    if args.type:
        ty = parse_type(args.type)
        deriv = check_infer({}, term, ty, sig)
    else:
        _, deriv = infer_with_derivation({}, term, sig)
    value = measure.measure_variant(deriv) if args.variant else measure.measure(deriv)
    print(value)
    return 0


def cmd_equiv(args) -> int:
    sig = _signature(args)
    try:
        left = parse_term(_read(args.left), sig)
        right = parse_term(_read(args.right), sig)
        ty = parse_type(args.type)
        budget = equivalence.TestBudget(size=args.budget, fuel=args.fuel, seed=args.seed)
        check_infer({}, left, ty, sig)
        check_infer({}, right, ty, sig)
    except (ParseError, TypeCheckError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    verdict = equivalence.machine_equiv(left, right, ty, budget)
    if verdict.distinguished:
        witness = format_memory(verdict.witness) if verdict.witness else "(empty memory)"
        print(f"distinguished by input: {witness}")
        print(verdict.detail)
        return 1
    print(f"not distinguished ({verdict.points} input points)")
    return 0


def cmd_to_lambda(args) -> int:
    sig = _signature(args)
    term = _parse_term_arg(args, sig)
    ty = parse_type(args.type)
    if not isinstance(ty, Arrow):
        print("error: expected an arrow type", file=sys.stderr)
        return USAGE_ERROR
    deriv = check_infer({}, term, ty, sig)
    lam, lam_ty = bridge.fmc_to_lambda_closed(deriv)
    print(print_lambda(lam))
    return 0


def cmd_from_lambda(args) -> int:
    lam = parse_lambda(_read(args.file))
    ty = infer_lambda(lam)
    print(print_term(bridge.lambda_to_fmc(lam, [], ty)))
    return 0


def cmd_encode_cbv(args) -> int:
    term = bridge.parse_cbv(_read(args.file))
    print(print_term(bridge.encode_cbv(term)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="fmc", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, with_type=False):
        p.add_argument("file", help="source file, or - for stdin")
        p.add_argument("--sig", help="signature file (base/const declarations)")
        if with_type:
            p.add_argument("--type", required=True, help="expected type")

    p = sub.add_parser("fmt", help="parse and reprint a term")
    common(p)
    p.add_argument("--annots", action="store_true", help="keep binder annotations")
    p.set_defaults(fn=cmd_fmt)

    p = sub.add_parser("check", help="check a term against a type")
    common(p, with_type=True)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("infer", help="infer a type scheme")
    common(p)
    p.set_defaults(fn=cmd_infer)

    for name, show in (("run", False), ("trace", True)):
        p = sub.add_parser(name, help="run the abstract machine")
        common(p)
        p.add_argument("--mem", default="", help="initial memory literal")
        p.add_argument("--fuel", type=int, default=10**6)
        p.add_argument("--trace", action="store_true", help="print every state")
        p.set_defaults(fn=cmd_run if not show else (lambda a: cmd_run(a, show_trace=True)))

    p = sub.add_parser("normalize", help="reduce to normal form")
    common(p)
    p.add_argument("--strategy", default="leftmost-outermost",
                   choices=["leftmost-outermost", "rightmost-innermost"])
    p.add_argument("--fuel", type=int, default=10**6)
    p.add_argument("--eta", action="store_true", help="also contract eta redexes")
    p.set_defaults(fn=cmd_normalize)

    p = sub.add_parser("graph", help="exhaustive reduction graph as DOT")
    common(p)
    p.add_argument("--bound", type=int, default=10**4)
    p.add_argument("--dot", help="write DOT here instead of stdout")
    p.set_defaults(fn=cmd_graph)

    p = sub.add_parser("measure", help="strong-normalization measure")
    common(p)
    p.add_argument("--type", help="type to check against (inferred when absent)")
    p.add_argument("--variant", action="store_true", help="machine-run-length variant")
    p.set_defaults(fn=cmd_measure)

    p = sub.add_parser("equiv", help="machine-equivalence test")
    p.add_argument("left")
    p.add_argument("right")
    p.add_argument("--type", required=True)
    p.add_argument("--budget", type=int, default=7)
    p.add_argument("--fuel", type=int, default=10**5)
    p.add_argument("--seed", type=int, help="shuffle which input points the budget keeps")
    p.add_argument("--sig")
    p.set_defaults(fn=cmd_equiv)

    p = sub.add_parser("to-lambda", help="translate a sequential term to a lambda-term")
    common(p, with_type=True)
    p.set_defaults(fn=cmd_to_lambda)

    p = sub.add_parser("from-lambda", help="translate a lambda-term")
    p.add_argument("file")
    p.set_defaults(fn=cmd_from_lambda)

    p = sub.add_parser("encode-cbv", help="encode an effectful call-by-value program")
    p.add_argument("file")
    p.set_defaults(fn=cmd_encode_cbv)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, TypeCheckError, LTypeError, bridge.CbvStuck,
            bridge.UndeclaredCell, bridge.LambdaTranslationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if args.command == "equiv" else SYNTAX_ERROR
    except reduction.BoundExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STUCK_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
