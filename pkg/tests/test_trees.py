import random

import pytest

from neurevo.gptree import (Domain, NoTerminalForType, PrimitiveSet, SemType,
                            TreeNode, UnsatisfiableType, count_nodes,
                            generate_tree, iter_paths, node_at, replace_at,
                            slot_hint, tree_depth, validate_types)


def test_depth_one_int_is_terminal(pset):
    tree = generate_tree(random.Random(7), pset, "full", 1, 1, SemType.INT)
    assert tree.children == ()
    assert tree.primitive.output_type is SemType.INT
    assert tree_depth(tree) == 1


def test_prediction_root_is_learner(pset):
    tree = generate_tree(random.Random(7), pset, "grow", 2, 6, SemType.PREDICTIONS)
    assert tree.primitive.name == "NNLearner"
    assert tree_depth(tree) >= 2


@pytest.mark.parametrize("method", ["grow", "full"])
def test_generation_fuzz_type_sound(pset, method):
    for seed in range(1000):
        tree = generate_tree(random.Random(seed), pset, method, 2, 6,
                             SemType.PREDICTIONS)
        report = validate_types(tree, pset)
        assert report.ok, (seed, report.violation)
        assert 2 <= tree_depth(tree) <= 6


def test_generation_deterministic(pset):
    a = generate_tree(random.Random(99), pset, "grow", 2, 6, SemType.PREDICTIONS)
    b = generate_tree(random.Random(99), pset, "grow", 2, 6, SemType.PREDICTIONS)
    assert a == b


def test_unsatisfiable_type_errors(pset):
    # Int has no functions, so depth 3 cannot be reached; the generator clamps
    tree = generate_tree(random.Random(0), pset, "grow", 3, 5, SemType.INT)
    assert tree_depth(tree) == 1
    # PredictionVector needs depth >= 2
    with pytest.raises(UnsatisfiableType):
        generate_tree(random.Random(0), pset, "full", 1, 1, SemType.PREDICTIONS)


def test_no_terminal_for_type():
    ps = PrimitiveSet("broken")
    ps.add_function("Wrap", (SemType.LAYER_UNIT,), SemType.LAYER_UNIT, "layer")
    with pytest.raises(NoTerminalForType):
        ps.sample_terminal(random.Random(0), SemType.LAYER_UNIT)
    # a cycle with no terminal makes the type unreachable outright
    with pytest.raises(UnsatisfiableType):
        generate_tree(random.Random(0), ps, "grow", 1, 3, SemType.LAYER_UNIT)
    # a hint naming a missing domain is also a terminal failure
    ps.add_terminal("unit", SemType.LAYER_UNIT)
    with pytest.raises(NoTerminalForType):
        ps.sample_terminal(random.Random(0), SemType.LAYER_UNIT, hint="nope")


def test_unreachable_type():
    ps = PrimitiveSet("empty")
    ps.add_terminal("x", SemType.INT)
    with pytest.raises(UnsatisfiableType):
        generate_tree(random.Random(0), ps, "grow", 1, 3, SemType.PREDICTIONS)


def test_validate_catches_wrong_child_type(pset):
    dense = pset.functions["DenseLayer"]
    bad = TreeNode(dense, (
        pset.const_node(SemType.INT, 3),  # should be a LayerUnit
        pset.const_node(SemType.INT, 8),
        pset.terminal_node("relu"),
        pset.const_node(SemType.FLOAT, 0.0),
    ))
    report = validate_types(bad, pset)
    assert not report.ok
    assert report.violation.path == (0,)
    assert report.violation.expected is SemType.LAYER_UNIT
    assert report.violation.actual is SemType.INT


def test_validate_catches_arity(pset):
    dense = pset.functions["DenseLayer"]
    bad = TreeNode(dense, (pset.terminal_node("InputLayer"),))
    report = validate_types(bad, pset)
    assert not report.ok and "expects 4" in report.violation.message


def test_validate_catches_unknown_primitive(pset):
    from neurevo.gptree import PrimitiveSpec
    alien = PrimitiveSpec("Mystery", (), SemType.INT, "terminal")
    report = validate_types(TreeNode(alien, ()), pset)
    assert not report.ok


def test_path_utilities(pset):
    tree = generate_tree(random.Random(5), pset, "full", 3, 5, SemType.PREDICTIONS)
    paths = list(iter_paths(tree))
    assert paths[0][0] == ()
    assert len(paths) == count_nodes(tree)
    # replacing a node with itself keeps the tree equal
    path, node = paths[len(paths) // 2]
    assert replace_at(tree, path, node) == tree
    assert node_at(tree, path) == node


def test_slot_hint_lookup(pset):
    tree = generate_tree(random.Random(5), pset, "grow", 2, 4, SemType.PREDICTIONS)
    # NNLearner's batch-size slot carries the batch domain hint
    assert slot_hint(tree, (3,)) == "batch"
    assert slot_hint(tree, ()) is None


def test_domain_contains():
    d = Domain("units", SemType.INT, "choice_int", (4, 8, 16))
    assert d.contains(8) and not d.contains(5)
    r = Domain("batch", SemType.INT, "range_int", lo=1, hi=64)
    assert r.contains(1) and r.contains(64) and not r.contains(0)
    u = Domain("rate", SemType.FLOAT, "uniform", lo=0.05, hi=0.5)
    assert u.contains(0.3) and not u.contains(0.6)
