import random

import pytest

from fmclab.equivalence import (
    EqnLaw,
    IllTypedBinding,
    TestBudget as Budget,
    arrow_on_main,
    ccc_combinator,
    eqn_check,
    inhabitants,
    law_instance,
    machine_equiv,
    machine_equiv_open,
)
from fmclab.gen import random_closed_term_of, random_law_instances, random_typed_terms
from fmclab.machine import run
from fmclab.parser import parse_term, parse_type, print_term
from fmclab.reduction import beta_redexes, eta_redexes, reduce_at
from fmclab.syntax import MAIN, Pop, Push, alpha_eq, compose, var
from fmclab.typesys import Arrow, Base, TypeCheckError, Vector, check_infer, mem

p = parse_term
Z = Base("Z")


# -- combinator table ------------------------------------------------------------

def test_delta_combinator():
    assert print_term(ccc_combinator("delta", Vector((Z,)))) == "<x1>.[x1].[x1]"


def test_eps_combinator():
    assert print_term(ccc_combinator("eps")) == "<z>.z"


def test_pi1_combinator():
    assert print_term(ccc_combinator("pi1", Vector((Z,)), Vector((Z,)))) == "<x1>.<y1>.[x1]"


def test_pi2_combinator():
    assert print_term(ccc_combinator("pi2", Vector((Z,)), Vector((Z,)))) == "<x1>.<y1>.[y1]"


def test_bang_combinator():
    assert print_term(ccc_combinator("bang", Vector((Z, Z)))) == "<x2>.<x1>"


def test_eta_curry_combinator():
    assert print_term(ccc_combinator("eta_curry", Vector((Z,)))) == "<x1>.[[x1]]"


def test_hom_combinator():
    m, n = p("<a>.[a]"), p("<b>.[b]")
    out = ccc_combinator("hom", m, n)
    assert print_term(out) == "<z>.[<a>.[a].z.<b>.[b]]"


def test_tensor_actions():
    m = p("<a>.[1]")
    assert ccc_combinator("tensor_left", m, Vector((Z,))) == m
    lifted = ccc_combinator("tensor_right", Vector((Z,)), m)
    assert print_term(lifted) == "<x1>.<a>.[1].[x1]"


# -- machine equivalence -----------------------------------------------------------

def test_reflexivity():
    m = p("<x>.[x].[x]")
    assert not machine_equiv(m, m, parse_type("Z > Z Z")).distinguished


def test_beta_is_machine_valid():
    lhs = p("[<q>.[q].[q]].<f>.[1].f")
    rhs = p("[1].<q>.[q].[q]")
    assert not machine_equiv(lhs, rhs, parse_type("> Z Z")).distinguished


def test_literals_distinguished():
    verdict = machine_equiv(p("[1]"), p("[2]"), parse_type("> Z"))
    assert verdict.distinguished
    assert verdict.witness == {}  # empty-input witness


def test_higher_order_outputs_compared_recursively():
    lhs = p("[<x>.[x]]")
    rhs = p("[<x>.[1]]")
    ty = parse_type("> (Z > Z)")
    assert machine_equiv(lhs, rhs, ty).distinguished
    assert not machine_equiv(lhs, p("[<y>.[y]]"), ty).distinguished


def test_one_sided_stuck_distinguishes():
    lhs = p("<x>")        # pops its input
    rhs = p("<x>.<y>")    # pops one too many
    assert machine_equiv(lhs, rhs, parse_type("Z > ")).distinguished


def test_open_terms_via_substitution():
    ctx = {"u": parse_type("Z > Z")}
    lhs = p("u")
    rhs = p("<a>.[a].u")
    assert not machine_equiv_open(ctx, lhs, rhs, parse_type("Z > Z")).distinguished
    assert machine_equiv_open(ctx, p("u.[1]"), p("u.[2]"),
                              parse_type("Z > Z Z")).distinguished


def test_witness_replays():
    verdict = machine_equiv(p("[1]"), p("[2]"), parse_type("> Z"))
    assert verdict.distinguished
    again = machine_equiv(p("[1]"), p("[2]"), parse_type("> Z"))
    assert again.witness == verdict.witness and again.detail == verdict.detail


# -- the six laws --------------------------------------------------------------------

@pytest.mark.parametrize("law", list(EqnLaw))
def test_law_instances_not_distinguished(law):
    samples = random_law_instances(hash(law.value) % 2**31, law, 25)
    assert len(samples) == 25
    for inst in samples:
        verdict = machine_equiv(inst.lhs, inst.rhs, inst.ty, Budget(points=10))
        assert not verdict.distinguished, (print_term(inst.lhs), print_term(inst.rhs),
                                           verdict.detail)


def test_congruence_under_contexts():
    # machine equivalence survives embedding into composition contexts
    rng = random.Random(6)
    pairs = [(inst.lhs, inst.rhs, inst.ty)
             for inst in random_law_instances(6, EqnLaw.DIAGONAL, 6)]
    for lhs, rhs, ty in pairs:
        pre = Push(p(str(rng.randint(0, 2))), MAIN, p("*"))
        wrapped_ty = Arrow(
            mem({MAIN: Vector(ty.input.get(MAIN).items[1:] if ty.input.get(MAIN).items else ())}),
            ty.output)
        # context: feed one literal argument, pass the rest through
        if ty.input.get(MAIN).items:
            c_lhs = compose(pre, lhs)
            c_rhs = compose(pre, rhs)
            verdict = machine_equiv(c_lhs, c_rhs, wrapped_ty, Budget(points=8))
            assert not verdict.distinguished


def test_beta_eta_steps_are_machine_equivalent():
    stepped = 0
    for t, scheme in random_typed_terms(seed=401, count=120, max_size=12):
        ty = scheme.instantiate_minimal()
        for r in (beta_redexes(t) + eta_redexes(t))[:2]:
            t2 = reduce_at(t, r)
            try:
                check_infer({}, t2, ty)
            except TypeCheckError:
                continue  # eta contraction can generalize the type
            verdict = machine_equiv(t, t2, ty, Budget(points=6))
            assert not verdict.distinguished, print_term(t)
            stepped += 1
    assert stepped >= 25


# -- derived categorical laws ------------------------------------------------------------

def test_product_existence():
    rng = random.Random(21)
    r, s, t = Vector((Z,)), Vector((Z, Z)), Vector((Z,))
    for _ in range(12):
        first = random_closed_term_of(rng, arrow_on_main(r, s))
        second = random_closed_term_of(rng, arrow_on_main(r, t))
        if first is None or second is None:
            continue
        pair = ccc_combinator("pair", first, second, r, s)
        assert eqn_check(compose(pair, ccc_combinator("pi1", t, s)), first,
                         arrow_on_main(r, s)).status == "proved"
        assert eqn_check(compose(pair, ccc_combinator("pi2", t, s)), second,
                         arrow_on_main(r, t)).status == "proved"


def test_product_uniqueness():
    rng = random.Random(22)
    r = Vector((Z,))
    s2, t2 = Vector((Z,)), Vector((Z,))
    whole = arrow_on_main(r, Vector(t2.items + s2.items))
    for _ in range(12):
        pterm = random_closed_term_of(rng, whole)
        if pterm is None:
            continue
        p1 = compose(pterm, ccc_combinator("pi1", t2, s2))
        p2 = compose(pterm, ccc_combinator("pi2", t2, s2))
        rebuilt = ccc_combinator("pair", p1, p2, r, s2)
        assert not machine_equiv(pterm, rebuilt, whole).distinguished


def test_exponent_existence():
    m = p("<a>.<b>.[a]")
    ty = arrow_on_main(Vector((Z, Z)), Vector((Z,)))
    curried = ccc_combinator("curry", m, Vector((Z,)))
    assert eqn_check(compose(curried, ccc_combinator("eps")), m, ty).status == "proved"


def test_exponent_uniqueness():
    inner_ty = parse_type("Z > Z")
    n = p("<a>.[<c>.[a]]")
    ty = arrow_on_main(Vector((Z,)), Vector((inner_ty,)))
    rebuilt = ccc_combinator("curry", compose(n, ccc_combinator("eps")), Vector((Z,)))
    assert not machine_equiv(rebuilt, n, ty).distinguished
    assert eqn_check(rebuilt, n, ty).status == "proved"


# -- bounded prover ------------------------------------------------------------------------

def test_eqn_check_refutes_literals():
    assert eqn_check(p("[1]"), p("[2]"), parse_type("> Z")).status == "refuted"


def test_eqn_check_proves_beta():
    assert eqn_check(p("[1].<x>.[x].[x]"), p("[1].[1]"), parse_type("> Z Z")).status == "proved"


def test_eqn_check_proves_permuted_forms():
    lhs = p("[1]a.[2]b")
    rhs = p("[2]b.[1]a")
    ty = Arrow(mem({}), mem({Location_a(): Vector((Z,)), Location_b(): Vector((Z,))}))
    assert eqn_check(lhs, rhs, ty).status == "proved"


def Location_a():
    from fmclab.syntax import Location

    return Location("a")


def Location_b():
    from fmclab.syntax import Location

    return Location("b")


def test_eqn_check_unknown_without_refutation():
    # interchange instances do not beta-join syntactically, and the machine
    # cannot distinguish them: bounded search answers unknown
    inst = next(iter(random_law_instances(30, EqnLaw.INTERCHANGE, 1)))
    result = eqn_check(inst.lhs, inst.rhs, inst.ty)
    assert result.status in ("proved", "unknown")


def test_canonical_inhabitants_are_typed():
    for src in ["Z > Z", "Z Z > Z", "(Z > Z) > Z Z", "> Z"]:
        ty = parse_type(src)
        terms = inhabitants(ty, 7)
        assert terms
        for t in terms:
            check_infer({}, t, ty)


def test_seeded_budget_shuffles_points():
    ty = parse_type("Z Z > Z Z")
    m = p("<x>.<y>.[x].[y]")
    a = machine_equiv(m, m, ty, Budget(points=3, seed=1))
    b = machine_equiv(m, m, ty, Budget(points=3, seed=1))
    assert a.points == b.points and not a.distinguished  # deterministic per seed


def test_search_for_theory_coarseness_candidates():
    # empirical probe: pairs the machine cannot distinguish but the bounded
    # prover cannot join; candidates only, nothing asserted beyond logging
    rng = random.Random(3)
    candidates = []
    ty = parse_type("(Z > Z) > Z Z")
    terms = inhabitants(ty, 9)
    for i, a in enumerate(terms):
        for b in terms[i + 1:]:
            result = eqn_check(a, b, ty)
            if result.status == "unknown":
                candidates.append((print_term(a), print_term(b)))
    print(f"coarseness candidates at {parse_type and 'sampled type'}: {candidates[:3]}")
    assert isinstance(candidates, list)
