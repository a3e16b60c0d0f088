import random
from collections import Counter

import pytest

from neurevo.evolution import (DEFAULT_OPERATOR_RATES, MATING_OPERATORS,
                               MUTATION_OPERATORS, EvolutionConfig, IdSource,
                               crossover_ephemeral, crossover_one_point,
                               crossover_subtree_preserving, make_offspring,
                               mutate_activation, mutate_add_layer,
                               mutate_ephemeral, mutate_optimizer,
                               mutate_pretrained, mutate_remove_layer,
                               mutate_shrink, mutate_swap_layer, random_tree)
from neurevo.expression import to_expression
from neurevo.gptree import (Individual, SemType, count_nodes, generate_tree,
                            iter_paths, tree_depth, validate_types)

DEPTH_LIMIT = 17


def tree_pool(pset, seed, size=60):
    rng = random.Random(seed)
    cfg = EvolutionConfig()
    return [random_tree(pset, rng, cfg) for _ in range(size)]


def assert_sound(tree, pset, context=""):
    report = validate_types(tree, pset)
    assert report.ok, (context, report.violation)
    assert tree_depth(tree) <= DEPTH_LIMIT, context


def layer_chain(tree):
    """Kinds of single-carrier layer nodes, outermost first."""
    return tuple(n.primitive.name for _, n in iter_paths(tree)
                 if n.primitive.kind == "layer" and n.primitive.arity > 0)


# -- structural contracts -----------------------------------------------------

def test_one_point_crossover_conserves_node_counts(pset):
    rng = random.Random(0)
    pool = tree_pool(pset, 1)
    for _ in range(300):
        a, b = rng.choice(pool), rng.choice(pool)
        (c1, c2), applied = crossover_one_point(a, b, pset, rng, DEPTH_LIMIT)
        if applied and c1 is not a and c2 is not b:
            assert count_nodes(c1) + count_nodes(c2) == count_nodes(a) + count_nodes(b)


def test_preserving_crossover_counts(pset):
    rng = random.Random(1)
    pool = tree_pool(pset, 2)
    for _ in range(300):
        a, b = rng.choice(pool), rng.choice(pool)
        rng_state = rng.getstate()
        (c1, c2), applied = crossover_subtree_preserving(a, b, pset, rng, DEPTH_LIMIT)
        if not applied or c1 is a or c2 is b:
            continue
        # recover which subtree was selected by replaying the draws
        replay = random.Random()
        replay.setstate(rng_state)
        pa = [p for p, n in iter_paths(a) if n.primitive.output_type is SemType.LAYER_UNIT]
        pb = [p for p, n in iter_paths(b) if n.primitive.output_type is SemType.LAYER_UNIT]
        ca, cb = replay.choice(pa), replay.choice(pb)
        from neurevo.gptree import node_at
        assert count_nodes(c1) == count_nodes(a) + count_nodes(node_at(b, cb)) + 1
        assert count_nodes(c2) == count_nodes(b) + count_nodes(node_at(a, ca)) + 1


def test_preserving_crossover_keeps_own_layers(pset):
    rng = random.Random(7)
    pool = tree_pool(pset, 3)
    for _ in range(200):
        a, b = rng.choice(pool), rng.choice(pool)
        (c1, c2), applied = crossover_subtree_preserving(a, b, pset, rng, DEPTH_LIMIT)
        if not applied:
            continue
        own = Counter(layer_chain(a))
        child = Counter(layer_chain(c1))
        assert all(child[k] >= v for k, v in own.items())


def test_add_then_remove_restores_layer_count(pset):
    rng = random.Random(3)
    for _ in range(200):
        tree = random_tree(pset, rng, EvolutionConfig())
        added, applied = mutate_add_layer(tree, pset, rng, DEPTH_LIMIT)
        if not applied or added is tree:
            continue
        n_layers = len(layer_chain(added))
        removed, applied2 = mutate_remove_layer(added, pset, rng, DEPTH_LIMIT)
        if applied2:
            assert len(layer_chain(removed)) == n_layers - 1


def test_remove_never_strips_last_layer(pset):
    rng = random.Random(4)
    from neurevo.expression import parse_expression
    tree = parse_expression(
        "NNLearner(data, DenseLayer(InputLayer(), 8, relu, 0.0), adam, 4)",
        pset, expected=SemType.PREDICTIONS)
    for _ in range(50):
        out, applied = mutate_remove_layer(tree, pset, rng, DEPTH_LIMIT)
        assert out is tree and not applied


def test_shrink_strictly_decreases_node_count(pset):
    rng = random.Random(5)
    pool = tree_pool(pset, 6)
    for _ in range(300):
        tree = rng.choice(pool)
        out, applied = mutate_shrink(tree, pset, rng, DEPTH_LIMIT)
        if applied:
            assert count_nodes(out) < count_nodes(tree)


def token_diff_count(a: str, b: str) -> int:
    ta = a.replace("(", " ( ").replace(")", " ) ").replace(",", " ").split()
    tb = b.replace("(", " ( ").replace(")", " ) ").replace(",", " ").split()
    if len(ta) != len(tb):
        return max(len(ta), len(tb))
    return sum(x != y for x, y in zip(ta, tb))


@pytest.mark.parametrize("op", [mutate_activation, mutate_optimizer,
                                mutate_pretrained, mutate_ephemeral])
def test_single_field_mutations_change_at_most_one_token(pset, op):
    rng = random.Random(6)
    pool = tree_pool(pset, 8)
    changed = 0
    for _ in range(300):
        tree = rng.choice(pool)
        out, applied = op(tree, pset, rng, DEPTH_LIMIT)
        if not applied:
            continue
        diff = token_diff_count(to_expression(tree), to_expression(out))
        assert diff <= 1
        changed += diff
    assert changed > 0  # resampling produces real changes often enough


def test_activation_resample_stays_in_domain(pset):
    rng = random.Random(9)
    domain = pset.domains["activation"]
    assert len(domain.values) == 7
    pool = tree_pool(pset, 10)
    repeats = 0
    trials = 0
    for _ in range(2000):
        tree = rng.choice(pool)
        out, applied = mutate_activation(tree, pset, rng, DEPTH_LIMIT)
        if not applied:
            continue
        trials += 1
        if out == tree:
            repeats += 1
    # resample may reproduce the old value at roughly 1/|domain|
    assert trials > 100
    assert 0.02 < repeats / trials < 0.45


def test_ephemeral_crossover_swaps_numbers_only(pset):
    rng = random.Random(10)
    pool = tree_pool(pset, 11)
    for _ in range(200):
        a, b = rng.choice(pool), rng.choice(pool)
        (c1, c2), applied = crossover_ephemeral(a, b, pset, rng, DEPTH_LIMIT)
        if applied:
            assert count_nodes(c1) == count_nodes(a)
            assert count_nodes(c2) == count_nodes(b)


# -- closure fuzz ---------------------------------------------------------------

ALL_OPERATORS = sorted(set(MUTATION_OPERATORS) | set(MATING_OPERATORS))


@pytest.mark.parametrize("name", ALL_OPERATORS)
def test_operator_closure_small(pset, name):
    rng = random.Random(hash(name) % (2 ** 31))
    pool = tree_pool(pset, 12)
    for i in range(500):
        if name in MATING_OPERATORS:
            a, b = rng.choice(pool), rng.choice(pool)
            (c1, c2), _ = MATING_OPERATORS[name](a, b, pset, rng, DEPTH_LIMIT)
            assert_sound(c1, pset, name)
            assert_sound(c2, pset, name)
            if count_nodes(c1) < 60:
                pool[rng.randrange(len(pool))] = c1
        else:
            tree = rng.choice(pool)
            out, _ = MUTATION_OPERATORS[name](tree, pset, rng, DEPTH_LIMIT)
            assert_sound(out, pset, name)
            if count_nodes(out) < 60:
                pool[rng.randrange(len(pool))] = out


# -- rate fidelity -----------------------------------------------------------------

def test_operator_rates_within_two_percent(pset):
    cfg = EvolutionConfig(pop_size=8)
    rng = random.Random(77)
    ids = IdSource()
    parents = [Individual(random_tree(pset, rng, cfg), ids.next()) for _ in range(8)]
    counts = Counter()
    n = 10_000
    for _ in range(n):
        _, fired = make_offspring(parents, pset, cfg, rng, ids)
        counts.update(fired)
    for name, rate in DEFAULT_OPERATOR_RATES.items():
        observed = counts[name] / n
        assert abs(observed - rate) <= 0.02, (name, observed, rate)


def test_make_offspring_metadata(pset):
    cfg = EvolutionConfig(pop_size=4)
    rng = random.Random(5)
    ids = IdSource()
    parents = [Individual(random_tree(pset, rng, cfg), ids.next()) for _ in range(4)]
    for _ in range(200):
        child, fired = make_offspring(parents, pset, cfg, rng, ids)
        assert child.id > max(p.id for p in parents[:4]) or child.id >= 4
        assert child.origin in ("crossover", "mutation")
        assert all(pid in {p.id for p in parents} for pid in child.parent_ids)
        assert_sound(child.root, pset, "offspring")


# -- reachability of architectures via layer mutations ----------------------------

def _two_kind_pset():
    """Tiny primitive subset: Dense and Dropout only."""
    from neurevo.gptree import Domain, PrimitiveSet
    from neurevo.layertree import ActivationKind, OptimizerKind
    ps = PrimitiveSet("tiny")
    ps.add_terminal("data", SemType.DATA_PAIR)
    ps.add_terminal("InputLayer", SemType.LAYER_UNIT, render_call=True)
    for kind in ActivationKind:
        ps.add_terminal(kind.value, SemType.ACTIVATION, value=kind)
    for kind in OptimizerKind:
        ps.add_terminal(kind.value, SemType.OPTIMIZER, value=kind)
    ps.add_domain(Domain("units", SemType.INT, "choice_int", (4, 8)))
    ps.add_domain(Domain("batch", SemType.INT, "range_int", lo=1, hi=8))
    ps.add_domain(Domain("decay", SemType.FLOAT, "log_uniform", lo=1e-6, hi=1e-2))
    ps.add_domain(Domain("dropout_rate", SemType.FLOAT, "uniform", lo=0.05, hi=0.5))
    ps.add_domain(Domain("activation", SemType.ACTIVATION, "terminals",
                         tuple(k.value for k in ActivationKind)))
    ps.add_domain(Domain("optimizer", SemType.OPTIMIZER, "terminals",
                         tuple(k.value for k in OptimizerKind)))
    L = SemType.LAYER_UNIT
    ps.add_function("DenseLayer", (L, SemType.INT, SemType.ACTIVATION, SemType.FLOAT),
                    L, "layer", (None, "units", "activation", "decay"))
    ps.add_function("DropoutLayer", (L, SemType.FLOAT), L, "layer",
                    (None, "dropout_rate"))
    ps.add_function("NNLearner", (SemType.DATA_PAIR, L, SemType.OPTIMIZER, SemType.INT),
                    SemType.PREDICTIONS, "learner", (None, None, "optimizer", "batch"))
    return ps


def test_layer_mutations_reach_all_short_chains():
    """On a two-kind primitive subset, add/remove/swap visit every layer-kind
    chain of length <= 3 from one start tree."""
    from neurevo.expression import parse_expression
    tiny = _two_kind_pset()
    rng = random.Random(13)
    start = parse_expression(
        "NNLearner(data, DenseLayer(InputLayer(), 8, relu, 0.0), adam, 4)",
        tiny, expected=SemType.PREDICTIONS)
    watched = ("DenseLayer", "DropoutLayer")
    targets = {(k,) for k in watched}
    targets |= {(a, b) for a in watched for b in watched}
    targets |= {(a, b, c) for a in watched for b in watched for c in watched}
    seen = set()
    frontier = [start]
    ops = [mutate_add_layer, mutate_remove_layer, mutate_swap_layer]
    for step in range(6000):
        tree = rng.choice(frontier)
        out, applied = rng.choice(ops)(tree, tiny, rng, DEPTH_LIMIT)
        if not applied:
            continue
        assert_sound(out, tiny, "reachability walk")
        chain = layer_chain(out)
        if chain in targets:
            seen.add(chain)
        if len(frontier) < 200 and count_nodes(out) < 40:
            frontier.append(out)
        if seen == targets:
            break
    assert seen == targets, f"missing {targets - seen}"
