import random

import pytest

from neurevo.expression import (ExpressionSyntaxError, TypeMismatch,
                                UnknownPrimitive, parse_expression, to_expression)
from neurevo.gptree import SemType, generate_tree
from neurevo.runner import builtin_seed_lines

SEED_SHAPE = ("NNLearner(data, DenseLayer(PretrainedStub(InputLayer(), "
              "{stub}), {units}, sigmoid, 0.0), adam, {batch})")


def test_int_terminal_renders_bare(pset):
    node = pset.const_node(SemType.INT, 4)
    assert to_expression(node) == "4"
    assert parse_expression("4", pset, expected=SemType.INT) == node


def test_float_rendering_roundtrips(pset):
    node = pset.const_node(SemType.FLOAT, 0.23733441557663034)
    assert parse_expression(to_expression(node), pset,
                            expected=SemType.FLOAT) == node


def test_roundtrip_fuzz(pset):
    for seed in range(1000):
        tree = generate_tree(random.Random(seed), pset, "grow", 2, 6,
                             SemType.PREDICTIONS)
        text = to_expression(tree)
        assert parse_expression(text, pset) == tree


def test_canonical_rendering(pset):
    # structurally equal trees rebuilt separately give identical bytes
    a = generate_tree(random.Random(4), pset, "full", 3, 4, SemType.PREDICTIONS)
    b = generate_tree(random.Random(4), pset, "full", 3, 4, SemType.PREDICTIONS)
    assert a == b
    assert to_expression(a) == to_expression(b)


def test_arity_error_reports_position(pset):
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression("DenseLayer(InputLayer())", pset)
    assert "expects 4" in str(err.value)
    assert err.value.offset == 0


def test_unknown_primitive(pset):
    with pytest.raises(UnknownPrimitive) as err:
        parse_expression("NNLearner(data, MadeUpLayer(InputLayer()), adam, 4)", pset)
    assert err.value.name == "MadeUpLayer"
    assert err.value.offset == 16


def test_type_mismatch_has_path(pset):
    with pytest.raises(TypeMismatch) as err:
        parse_expression("NNLearner(data, InputLayer(), 4, 4)", pset)
    assert err.value.path == (2,)


def test_trailing_garbage_rejected(pset):
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("data data", pset)


def test_float_literal_in_int_slot_rejected(pset):
    with pytest.raises(TypeMismatch):
        parse_expression(SEED_SHAPE.format(stub="vgg_stub", units="3.5", batch=1), pset)


def test_seed_shapes_parse_and_render(pset):
    for stub in ("vgg_stub", "mobilenet_stub", "inception_stub"):
        for batch in (1, 9):
            text = SEED_SHAPE.format(stub=stub, units=3, batch=batch)
            tree = parse_expression(text, pset, expected=SemType.PREDICTIONS)
            assert to_expression(tree) == text


def test_builtin_seed_file_is_sixteen_valid_individuals(pset):
    lines = [l.split("#", 1)[0].strip() for l in builtin_seed_lines()]
    lines = [l for l in lines if l]
    assert len(lines) == 16
    batches = set()
    for line in lines:
        tree = parse_expression(line, pset, expected=SemType.PREDICTIONS)
        assert tree.primitive.name == "NNLearner"
        # optimizer terminal is adam, head activation sigmoid per the seed recipe
        assert tree.children[2].primitive.name == "adam"
        dense = tree.children[1]
        assert dense.primitive.name == "DenseLayer"
        assert dense.children[2].primitive.name == "sigmoid"
        assert dense.children[0].primitive.name == "PretrainedStub"
        batches.add(tree.children[3].ephemeral_value)
    assert batches == set(range(1, 10))
