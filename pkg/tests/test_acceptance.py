"""Acceptance suite: one test per criterion, each reporting a PASS line."""

import concurrent.futures
import itertools
import random
import time

import pytest

from fmclab.bridge import encode_cbv, parse_cbv
from fmclab.equivalence import (
    EqnLaw,
    TestBudget as Budget,
    arrow_on_main,
    ccc_combinator,
    inhabitants,
    machine_equiv,
)
from fmclab.gen import (
    random_closed_term_of,
    random_law_instances,
    random_lambda_corpus,
    random_term,
    random_typed_terms,
    run_length_shard,
)
from fmclab.lambda_calc import LArrow, lambda_beta_eta_eq
from fmclab.machine import int_term, run
from fmclab.measure import (
    VFun,
    apply,
    interpret,
    least,
    least_mem,
    measure,
    value_eq,
)
from fmclab.parser import parse_memory, parse_term, parse_type, print_term
from fmclab.reduction import confluent_on, normalize, reduction_graph
from fmclab.syntax import MAIN, Location, alpha_eq, compose, substitute
from fmclab.typesys import (
    Arrow,
    Base,
    TypeCheckError,
    Vector,
    check,
    check_infer,
    mem,
)
from fmclab.bridge import OUT, fmc_to_lambda_closed, lambda_to_fmc, lambda_type_vector

p = parse_term
Z = Base("Z")
EXAMPLE_TERM = "rnd<x>.[x].c<y>.[y].+.<z>.[z]c"
COUNTUP_TERM = "[<x>.[x]out.[x].[1].+].<f>.[0].f.f.f"


def report(criterion, detail):
    print(f"criterion {criterion}: PASS ({detail})")


def test_criterion_01_machine_golden():
    term = p(EXAMPLE_TERM)
    memory = parse_memory("rnd = 9 7 3 ; c = 5")
    start = time.perf_counter()
    result = run(memory, term)
    elapsed = time.perf_counter() - start
    assert result.status == "done"
    assert result.steps == 7
    assert result.memory[Location("c")] == (int_term(8),)
    assert result.memory[Location("rnd")] == (int_term(9), int_term(7))
    assert result.memory.get(MAIN, ()) == ()
    assert elapsed < 0.010
    report(1, f"7 transitions, c = 8, {elapsed * 1000:.2f} ms")


def test_criterion_02_arithmetic():
    result = run({}, p("[4].[3].[2].+.mul.[1].+"))
    assert result.status == "done"
    assert result.memory[MAIN] == (int_term(21),)
    report(2, "main stack holds 21")


def test_criterion_03_typing_goldens_and_mutations():
    check({}, p(EXAMPLE_TERM), parse_type("rnd(Z) c(Z) > c(Z)"))
    check({}, p(COUNTUP_TERM), parse_type("> out(Z Z Z) Z"))
    mutations = [
        ("rnd<x>.[x].c<y>.[y].+.<z>.[z]rnd", "rnd(Z) c(Z) > c(Z)"),  # swapped location
        ("rnd<x>.[x].c<y>.[y].+.<z>.[z]c", "rnd(Z) c(Z) > out(Z)"),
        ("rnd<x>.[x].[y].+.<z>.[z]c", "rnd(Z) c(Z) > c(Z)"),  # dropped a pop
        ("[<x>.[x]out.[1].+].<f>.[0].f.f.f", "> out(Z Z Z) Z"),  # dropped a push
    ]
    rejected = 0
    for src, ty in mutations:
        with pytest.raises(TypeCheckError) as err:
            check({}, p(src), parse_type(ty))
        assert isinstance(err.value.path, tuple)
        rejected += 1
    report(3, f"2 goldens accepted, {rejected} mutations rejected with positions")


def test_criterion_04_cbv_golden():
    enc = encode_cbv(parse_cbv("(\\f.f (f 0)) (\\x. write x; !c)"))
    nf = normalize(enc, strategy="leftmost-outermost", fuel=10**3)
    assert nf.status == "normal"
    assert alpha_eq(nf.term, p("[0]out.c<y>.[y]out.[y]c.[y]"))
    # the dereference needs the cell populated: run with a zero-initialized
    # store (a truly empty memory sticks at the first pop on c)
    result = run({Location("c"): (int_term(0),)}, enc)
    assert result.status == "done"
    assert result.memory[OUT] == (int_term(0), int_term(0))
    assert result.memory[Location("c")] == (int_term(0),)
    assert run({}, enc).status == "stuck"
    report(4, "normal form matches; out = 0 0, c = 0")


CORPUS_SIZE = 1000


@pytest.fixture(scope="module")
def typed_corpus():
    return random_typed_terms(seed=20240811, count=CORPUS_SIZE, max_size=20)


@pytest.fixture(scope="module")
def corpus_graphs(typed_corpus):
    graphs = []
    for t, scheme in typed_corpus:
        graphs.append((t, scheme, reduction_graph(t, node_bound=10**4)))
    return graphs


def test_criterion_05_sn_properties(typed_corpus, corpus_graphs):
    start = time.perf_counter()
    edges_checked = 0
    max_depth = 0
    for t, scheme, graph in corpus_graphs:
        ty = scheme.instantiate_minimal()
        node_measure = {}
        for key, term in graph.nodes.items():
            node_measure[key] = measure(check_infer({}, term, ty))
        for key, succ in graph.edges.items():
            for target, _ in succ:
                assert node_measure[key] > node_measure[target], print_term(t)
                edges_checked += 1
        depth = graph.depth()  # finiteness and acyclicity
        max_depth = max(max_depth, depth)
        assert depth <= node_measure[list(graph.nodes)[0] if False else _root_key(graph)]
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    report(5, f"{CORPUS_SIZE} terms, {edges_checked} strict edges, "
              f"max depth {max_depth}, {elapsed:.1f}s")


def _root_key(graph):
    from fmclab.syntax import canonical_key

    return canonical_key(graph.root)


def test_criterion_06_confluence(corpus_graphs):
    for t, _, graph in corpus_graphs:
        assert len(graph.nodes) <= 10**4
        assert confluent_on(graph), print_term(t)
    report(6, f"{len(corpus_graphs)} graphs, unique normal forms")


# -- criterion 7: exact lemma identities ------------------------------------------------

def _inflate(value, bump):
    if isinstance(value, VFun):
        return VFun(value.ty, lambda s, v=value, b=bump: (v(s)[0] + b, v(s)[1]))
    return value


def _sample_points(shape, rng, count):
    """Distinct input memories: inhabitant images inflated by varying bumps."""
    slots = [(loc, t) for loc, vec in shape.entries for t in vec.items]
    if not slots:
        return []
    base_values = []
    for loc, t in slots:
        vals = [least(t)]
        for term in inhabitants(t, 7)[:2]:
            vals.append(interpret(check_infer({}, term, t), {}))
        base_values.append(vals)
    points = []
    for _ in range(count):
        memory = {}
        for (loc, _), vals in zip(slots, base_values):
            value = _inflate(rng.choice(vals), rng.randint(0, 50))
            memory[loc] = memory.get(loc, ()) + (value,)
        points.append(memory)
    return points


E = parse_type("(>) > (>)")


def test_criterion_07_measure_lemmas():
    rng = random.Random(7)
    results = {}
    # sequencing
    checked = instances = 0
    while instances < 200:
        r = Vector(tuple(E for _ in range(rng.randint(1, 2))))
        s = Vector(tuple(E for _ in range(rng.randint(0, 2))))
        t_vec = Vector(tuple(E for _ in range(rng.randint(0, 1))))
        u = Vector((E,))
        n_term = random_closed_term_of(rng, arrow_on_main(r, s))
        m_term = random_closed_term_of(rng, Arrow(mem({MAIN: Vector(t_vec.items + s.items)}),
                                                  mem({MAIN: u})))
        if n_term is None or m_term is None:
            continue
        whole_ty = Arrow(mem({MAIN: Vector(t_vec.items + r.items)}), mem({MAIN: u}))
        fn = interpret(check_infer({}, n_term, arrow_on_main(r, s)), {})
        fm = interpret(check_infer({}, m_term,
                                   Arrow(mem({MAIN: Vector(t_vec.items + s.items)}),
                                         mem({MAIN: u}))), {})
        fc = interpret(check_infer({}, compose(n_term, m_term), whole_ty), {})
        points = _sample_points(whole_ty.input, rng, 50)
        if not points:
            continue
        for memory in points:
            stack = memory.get(MAIN, ())
            t_part, r_part = stack[: len(t_vec.items)], stack[len(t_vec.items):]
            i, s_out = apply(fn, {MAIN: r_part} if r_part else {})
            j, u_out = apply(fm, {MAIN: t_part + s_out.get(MAIN, ())})
            total, u_direct = apply(fc, memory)
            assert total == i + j
            assert value_eq(u_direct, u_out)
            checked += 1
        instances += 1
    results["sequencing"] = (instances, checked)

    # substitution
    checked = instances = 0
    while instances < 200:
        x_ty = arrow_on_main(Vector(tuple(E for _ in range(rng.randint(0, 1)))),
                             Vector(tuple(E for _ in range(rng.randint(0, 1)))))
        n_term = random_closed_term_of(rng, x_ty)
        if n_term is None:
            continue
        body = p("<pp:(>) > (>)>.[pp].[x]")
        body_ty = Arrow(mem({MAIN: Vector((E,))}), mem({MAIN: Vector((E, x_ty))}))
        d_body = check_infer({"x": x_ty}, body, body_ty)
        d_sub = check_infer({}, substitute(n_term, "x", body), body_ty)
        n_val = interpret(check_infer({}, n_term, x_ty), {})
        lhs = interpret(d_sub, {})
        rhs = interpret(d_body, {"x": n_val})
        for memory in _sample_points(body_ty.input, rng, 50):
            nl, ol = apply(lhs, memory)
            nr, orr = apply(rhs, memory)
            assert nl == nr and value_eq(ol, orr)
            checked += 1
        instances += 1
    results["substitution"] = (instances, checked)

    # permutation: a pop on c supplies an inflatable input, then one swap
    checked = instances = 0
    loc_a, loc_b, loc_c = Location("a"), Location("b"), Location("c")
    while instances < 200:
        clause = rng.randint(1, 3)
        arg1 = random_closed_term_of(rng, E)
        arg2 = random_closed_term_of(rng, E)
        if arg1 is None or arg2 is None:
            continue
        if clause == 1:
            inner_l = f"[{print_term(arg1)}]a.[{print_term(arg2)}]b.[w]c"
            inner_r = f"[{print_term(arg2)}]b.[{print_term(arg1)}]a.[w]c"
            input_mem = mem({loc_c: Vector((E,))})
        elif clause == 2:
            inner_l = f"a<x:(>) > (>)>.[{print_term(arg2)}]b.[x]a.[w]c"
            inner_r = f"[{print_term(arg2)}]b.a<x:(>) > (>)>.[x]a.[w]c"
            input_mem = mem({loc_a: Vector((E,)), loc_c: Vector((E,))})
        else:
            inner_l = "a<x:(>) > (>)>.b<y:(>) > (>)>.[x]a.[y]b.[w]c"
            inner_r = "b<y:(>) > (>)>.a<x:(>) > (>)>.[x]a.[y]b.[w]c"
            input_mem = mem({loc_a: Vector((E,)), loc_b: Vector((E,)), loc_c: Vector((E,))})
        output_mem = mem({loc_a: Vector((E,)), loc_b: Vector((E,)), loc_c: Vector((E,))})
        ty = Arrow(input_mem, output_mem)
        lhs_term = p(f"c<w:(>) > (>)>.{inner_l}")
        rhs_term = p(f"c<w:(>) > (>)>.{inner_r}")
        fl = interpret(check_infer({}, lhs_term, ty), {})
        fr = interpret(check_infer({}, rhs_term, ty), {})
        for memory in _sample_points(ty.input, rng, 50):
            nl, ol = apply(fl, memory)
            nr, orr = apply(fr, memory)
            assert nl == nr and value_eq(ol, orr)
            checked += 1
        instances += 1
    results["permutation"] = (instances, checked)

    detail = ", ".join(f"{k}: {i} instances x {c // i} points"
                       for k, (i, c) in results.items())
    report(7, detail)


def test_criterion_08_run_length_identity():
    max_size = 12
    shards = 2
    with concurrent.futures.ProcessPoolExecutor(max_workers=shards) as pool:
        futures = [pool.submit(run_length_shard, max_size, k, shards) for k in range(shards)]
        totals = typed = 0
        failures = []
        for future in futures:
            n, ok, bad = future.result()
            totals += n
            typed += ok
            failures.extend(bad)
    assert not failures, failures[:3]
    assert totals >= 2_000_000
    report(8, f"{totals} enumerated terms (size <= {max_size}), {typed} typed, zero failures")


def test_criterion_09_law_validation():
    law_counts = {}
    for law in EqnLaw:
        instances = random_law_instances(hash(law.value) % 2**31, law, 200)
        assert len(instances) == 200, law
        for inst in instances:
            verdict = machine_equiv(inst.lhs, inst.rhs, inst.ty, Budget(size=7, points=8))
            assert not verdict.distinguished, (law, print_term(inst.lhs), verdict.detail)
        law_counts[law.value] = len(instances)

    # derived categorical laws
    rng = random.Random(99)
    derived = {"product-existence": 0, "product-uniqueness": 0,
               "exponent-existence": 0, "exponent-uniqueness": 0}
    r, s, t = Vector((Z,)), Vector((Z,)), Vector((Z,))
    while derived["product-existence"] < 100:
        first = random_closed_term_of(rng, arrow_on_main(r, s))
        second = random_closed_term_of(rng, arrow_on_main(r, t))
        if first is None or second is None:
            continue
        pair = ccc_combinator("pair", first, second, r, s)
        v1 = machine_equiv(compose(pair, ccc_combinator("pi1", t, s)), first,
                           arrow_on_main(r, s), Budget(points=6))
        v2 = machine_equiv(compose(pair, ccc_combinator("pi2", t, s)), second,
                           arrow_on_main(r, t), Budget(points=6))
        assert not v1.distinguished and not v2.distinguished
        derived["product-existence"] += 1
    whole = arrow_on_main(r, Vector(t.items + s.items))
    while derived["product-uniqueness"] < 100:
        pterm = random_closed_term_of(rng, whole)
        if pterm is None:
            continue
        rebuilt = ccc_combinator(
            "pair", compose(pterm, ccc_combinator("pi1", t, s)),
            compose(pterm, ccc_combinator("pi2", t, s)), r, s)
        assert not machine_equiv(pterm, rebuilt, whole, Budget(points=6)).distinguished
        derived["product-uniqueness"] += 1
    m_ty = arrow_on_main(Vector((Z, Z)), Vector((Z,)))
    while derived["exponent-existence"] < 100:
        m = random_closed_term_of(rng, m_ty)
        if m is None:
            continue
        curried = ccc_combinator("curry", m, Vector((Z,)))
        assert not machine_equiv(compose(curried, ccc_combinator("eps")), m,
                                 m_ty, Budget(points=6)).distinguished
        derived["exponent-existence"] += 1
    inner = parse_type("Z > Z")
    n_ty = arrow_on_main(Vector((Z,)), Vector((inner,)))
    while derived["exponent-uniqueness"] < 100:
        n = random_closed_term_of(rng, n_ty)
        if n is None:
            continue
        rebuilt = ccc_combinator("curry", compose(n, ccc_combinator("eps")), Vector((Z,)))
        assert not machine_equiv(rebuilt, n, n_ty, Budget(points=6)).distinguished
        derived["exponent-uniqueness"] += 1
    report(9, f"6 laws x 200 instances, derived laws x 100 each")


def test_criterion_10_faithfulness():
    start = time.perf_counter()
    corpus = random_lambda_corpus(seed=424242, count=500, max_size=15)
    assert len(corpus) == 500
    for lam, ty in corpus:
        fmc = lambda_to_fmc(lam, [], ty)
        vec = lambda_type_vector(ty)
        fmc_ty = Arrow(mem({}), mem({MAIN: Vector(vec)}))
        deriv = check_infer({}, fmc, fmc_ty)
        back, _ = fmc_to_lambda_closed(deriv)
        assert lambda_beta_eta_eq(back, lam, ty)
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    report(10, f"500 round trips, {elapsed:.1f}s")


def test_criterion_11_parser_fixpoint():
    import glob

    from fmclab.parser import print_term as pt

    count = 0
    for path in sorted(glob.glob("corpus/*.fmc")):
        with open(path, encoding="utf-8") as fh:
            src = fh.read().strip()
        t = p(src)
        assert alpha_eq(p(pt(t)), t), path
        assert pt(p(pt(t))) == pt(t)
        count += 1
    assert count >= 5
    rng = random.Random(11)
    locs = (MAIN, Location("a"), Location("out"), Location("rnd"))
    for _ in range(10**4):
        t = random_term(rng, rng.randint(1, 16), ("x", "y"), locs)
        printed = print_term(t)
        again = p(printed)
        assert alpha_eq(again, t)
        assert print_term(again) == printed
    report(11, f"{count} corpus files + 10^4 fuzzed terms round-trip")
