"""Mating and mutation operators plus the generational loop.

Every operator maps type-sound trees to type-sound trees and respects the
tree depth limit; when an operator finds no eligible point (or honoring the
depth limit would be impossible) it degrades to identity and logs the fact.
Operator rates are independent per-offspring firing probabilities.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .expression import ExpressionError, parse_expression
from .gptree import (Individual, PrimitiveSet, SemType, TreeNode, generate_tree,
                     iter_paths, node_at, replace_at, slot_hint, tree_depth)
from .nsga2 import ParetoArchive, nsga2_select

logger = logging.getLogger(__name__)

DEFAULT_OPERATOR_RATES = {
    "crossover": 0.50,
    "crossover_ephemeral": 0.50,
    "headless_chicken": 0.10,
    "headless_chicken_ephemeral": 0.10,
    "insert": 0.05,
    "insert_modify": 0.10,
    "ephemeral": 0.25,
    "uniform": 0.05,
    "shrink": 0.05,
    "swap_layer": 0.05,
    "remove_layer": 0.05,
    "add_layer": 0.05,
    "crossover_preserving": 0.0,
    "activation": 0.0,
    "optimizer": 0.0,
    "pretrained": 0.0,
}

OPERATOR_ORDER = (
    "crossover", "crossover_ephemeral", "headless_chicken",
    "headless_chicken_ephemeral", "crossover_preserving", "insert",
    "insert_modify", "ephemeral", "uniform", "shrink", "swap_layer",
    "remove_layer", "add_layer", "activation", "optimizer", "pretrained",
)

MATING_NAMES = frozenset({"crossover", "crossover_ephemeral", "headless_chicken",
                          "headless_chicken_ephemeral", "crossover_preserving"})


@dataclass
class EvolutionConfig:
    pop_size: int = 64
    n_select: Optional[int] = None
    generations: int = 10
    operator_rates: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_OPERATOR_RATES))
    depth_limit: int = 17
    rng_seed: int = 1
    init_depth: tuple[int, int] = (2, 6)

    @property
    def select_count(self) -> int:
        return self.n_select if self.n_select is not None else self.pop_size // 2

    def __post_init__(self):
        for name, rate in self.operator_rates.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rate for {name!r} must lie in [0, 1]")


class SeedParseError(Exception):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"seed line {line_no}: {message}")


class IdSource:
    """Deterministic, checkpointable id counter."""

    def __init__(self, start: int = 0):
        self.value = start

    def next(self) -> int:
        current = self.value
        self.value += 1
        return current


# -- helpers -----------------------------------------------------------------

def _paths_of_type(root: TreeNode, semtype: SemType) -> list[tuple[int, ...]]:
    return [p for p, n in iter_paths(root) if n.primitive.output_type is semtype]


def _ephemeral_paths(root: TreeNode) -> list[tuple[int, ...]]:
    return [p for p, n in iter_paths(root) if n.primitive.kind == "ephemeral"]


def _single_child_layer_paths(root: TreeNode) -> list[tuple[int, ...]]:
    out = []
    for p, n in iter_paths(root):
        spec = n.primitive
        if spec.kind == "layer" and spec.arity > 0:
            if sum(1 for t in spec.input_types if t is SemType.LAYER_UNIT) == 1:
                out.append(p)
    return out


def _single_child_layer_functions(pset: PrimitiveSet):
    return [f for f in pset.functions.values()
            if f.kind == "layer"
            and sum(1 for t in f.input_types if t is SemType.LAYER_UNIT) == 1]


def _fill_slots(pset: PrimitiveSet, rng, spec, carried: dict[int, TreeNode]) -> TreeNode:
    children = []
    for i, it in enumerate(spec.input_types):
        if i in carried:
            children.append(carried[i])
        else:
            children.append(pset.sample_terminal(rng, it, spec.input_hints[i]))
    return TreeNode(spec, tuple(children))


def _identity(name: str, reason: str):
    logger.debug("%s fell back to identity: %s", name, reason)


def random_tree(pset: PrimitiveSet, rng, cfg: EvolutionConfig) -> TreeNode:
    """Ramped half-and-half tree rooted at the learner type."""
    method = "grow" if rng.random() < 0.5 else "full"
    return generate_tree(rng, pset, method, cfg.init_depth[0], cfg.init_depth[1],
                         SemType.PREDICTIONS)


# -- mating operators ----------------------------------------------------------

def crossover_one_point(a: TreeNode, b: TreeNode, pset, rng, depth_limit: int):
    """Swap subtrees at one layer-typed point in each parent."""
    pa = _paths_of_type(a, SemType.LAYER_UNIT)
    pb = _paths_of_type(b, SemType.LAYER_UNIT)
    if not pa or not pb:
        _identity("crossover", "a parent has no layer-typed point")
        return (a, b), False
    ca, cb = rng.choice(pa), rng.choice(pb)
    sub_a, sub_b = node_at(a, ca), node_at(b, cb)
    child1 = replace_at(a, ca, sub_b)
    child2 = replace_at(b, cb, sub_a)
    if tree_depth(child1) > depth_limit:
        _identity("crossover", "first child exceeded the depth limit")
        child1 = a
    if tree_depth(child2) > depth_limit:
        _identity("crossover", "second child exceeded the depth limit")
        child2 = b
    return (child1, child2), True


def crossover_ephemeral(a: TreeNode, b: TreeNode, pset, rng, depth_limit: int):
    """One-point crossover restricted to numeric ephemeral leaves."""
    by_type_a: dict[SemType, list] = {}
    for p in _ephemeral_paths(a):
        by_type_a.setdefault(node_at(a, p).primitive.output_type, []).append(p)
    by_type_b: dict[SemType, list] = {}
    for p in _ephemeral_paths(b):
        by_type_b.setdefault(node_at(b, p).primitive.output_type, []).append(p)
    common = [t for t in (SemType.INT, SemType.FLOAT)
              if t in by_type_a and t in by_type_b]
    if not common:
        _identity("crossover_ephemeral", "no shared ephemeral type")
        return (a, b), False
    t = rng.choice(common)
    ca, cb = rng.choice(by_type_a[t]), rng.choice(by_type_b[t])
    leaf_a, leaf_b = node_at(a, ca), node_at(b, cb)
    return (replace_at(a, ca, leaf_b), replace_at(b, cb, leaf_a)), True


def crossover_subtree_preserving(a: TreeNode, b: TreeNode, pset, rng, depth_limit: int):
    """Graft the partner's subtree next to one's own via a Concatenate node.

    Each child keeps all of its own layers and additionally receives the
    subtree selected in the other parent, so node counts strictly grow.
    """
    concat = pset.functions.get("ConcatenateLayer")
    if concat is None:
        _identity("crossover_preserving", "no Concatenate primitive registered")
        return (a, b), False
    pa = _paths_of_type(a, SemType.LAYER_UNIT)
    pb = _paths_of_type(b, SemType.LAYER_UNIT)
    if not pa or not pb:
        _identity("crossover_preserving", "a parent has no layer-typed point")
        return (a, b), False
    ca, cb = rng.choice(pa), rng.choice(pb)
    sub_a, sub_b = node_at(a, ca), node_at(b, cb)
    child1 = replace_at(a, ca, TreeNode(concat, (sub_a, sub_b)))
    child2 = replace_at(b, cb, TreeNode(concat, (sub_b, sub_a)))
    if tree_depth(child1) > depth_limit:
        _identity("crossover_preserving", "first child exceeded the depth limit")
        child1 = a
    if tree_depth(child2) > depth_limit:
        _identity("crossover_preserving", "second child exceeded the depth limit")
        child2 = b
    return (child1, child2), True


# -- layer-aware mutations -----------------------------------------------------

def mutate_add_layer(tree: TreeNode, pset, rng, depth_limit: int):
    """Insert a freshly sampled single-child layer above a random layer point."""
    points = _paths_of_type(tree, SemType.LAYER_UNIT)
    options = _single_child_layer_functions(pset)
    if not points or not options:
        _identity("add_layer", "no eligible point")
        return tree, False
    path = rng.choice(points)
    spec = rng.choice(options)
    carrier_slot = next(i for i, t in enumerate(spec.input_types)
                        if t is SemType.LAYER_UNIT)
    new_node = _fill_slots(pset, rng, spec, {carrier_slot: node_at(tree, path)})
    mutated = replace_at(tree, path, new_node)
    if tree_depth(mutated) > depth_limit:
        _identity("add_layer", "depth limit reached")
        return tree, True
    return mutated, True


def mutate_remove_layer(tree: TreeNode, pset, rng, depth_limit: int):
    """Splice out a random single-child layer, keeping at least one layer node."""
    points = _single_child_layer_paths(tree)
    if len(points) < 2:
        _identity("remove_layer", "would remove the only layer")
        return tree, False
    path = rng.choice(points)
    node = node_at(tree, path)
    carrier_slot = next(i for i, t in enumerate(node.primitive.input_types)
                        if t is SemType.LAYER_UNIT)
    return replace_at(tree, path, node.children[carrier_slot]), True


def mutate_swap_layer(tree: TreeNode, pset, rng, depth_limit: int):
    """Replace a layer node's kind and params in place, keeping its input."""
    points = _single_child_layer_paths(tree)
    if not points:
        _identity("swap_layer", "no single-child layer present")
        return tree, False
    path = rng.choice(points)
    node = node_at(tree, path)
    options = [f for f in _single_child_layer_functions(pset)
               if f.name != node.primitive.name]
    if not options:
        _identity("swap_layer", "no alternative layer kind")
        return tree, False
    spec = rng.choice(options)
    carrier_slot_old = next(i for i, t in enumerate(node.primitive.input_types)
                            if t is SemType.LAYER_UNIT)
    carrier_slot_new = next(i for i, t in enumerate(spec.input_types)
                            if t is SemType.LAYER_UNIT)
    new_node = _fill_slots(pset, rng, spec,
                           {carrier_slot_new: node.children[carrier_slot_old]})
    mutated = replace_at(tree, path, new_node)
    if tree_depth(mutated) > depth_limit:
        _identity("swap_layer", "depth limit reached")
        return tree, True
    return mutated, True


def _resample_slot(tree: TreeNode, pset, rng, slot_filter, op_name: str):
    slots = []
    for path, node in iter_paths(tree):
        for i, it in enumerate(node.primitive.input_types):
            if slot_filter(node.primitive, i, it):
                slots.append((path, i))
    if not slots:
        _identity(op_name, "no eligible slot")
        return tree, False
    path, i = rng.choice(slots)
    parent = node_at(tree, path)
    hint = parent.primitive.input_hints[i]
    replacement = pset.sample_terminal(rng, parent.primitive.input_types[i], hint)
    return replace_at(tree, path + (i,), replacement), True


def mutate_activation(tree: TreeNode, pset, rng, depth_limit: int):
    return _resample_slot(tree, pset, rng,
                          lambda spec, i, it: it is SemType.ACTIVATION, "activation")


def mutate_optimizer(tree: TreeNode, pset, rng, depth_limit: int):
    return _resample_slot(tree, pset, rng,
                          lambda spec, i, it: it is SemType.OPTIMIZER, "optimizer")


def mutate_pretrained(tree: TreeNode, pset, rng, depth_limit: int):
    return _resample_slot(tree, pset, rng,
                          lambda spec, i, it: spec.name == "PretrainedStub" and i == 1,
                          "pretrained")


# -- classic tree mutations ------------------------------------------------------

def mutate_insert(tree: TreeNode, pset, rng, depth_limit: int):
    """Wrap a random node in a new primitive that accepts its type."""
    wrappers_cache: dict[SemType, list] = {}

    def wrappers(t: SemType):
        if t not in wrappers_cache:
            wrappers_cache[t] = [f for f in pset.functions.values()
                                 if f.output_type is t and t in f.input_types]
        return wrappers_cache[t]

    points = [p for p, n in iter_paths(tree) if wrappers(n.primitive.output_type)]
    if not points:
        _identity("insert", "no wrappable point")
        return tree, False
    path = rng.choice(points)
    node = node_at(tree, path)
    t = node.primitive.output_type
    spec = rng.choice(wrappers(t))
    slot = rng.choice([i for i, it in enumerate(spec.input_types) if it is t])
    new_node = _fill_slots(pset, rng, spec, {slot: node})
    mutated = replace_at(tree, path, new_node)
    if tree_depth(mutated) > depth_limit:
        _identity("insert", "depth limit reached")
        return tree, True
    return mutated, True


def mutate_insert_modify(tree: TreeNode, pset, rng, depth_limit: int):
    """Insert a wrapper, then resample one of its fresh argument slots."""
    mutated, applied = mutate_insert(tree, pset, rng, depth_limit)
    if not applied or mutated is tree:
        return mutated, applied
    resampled, _ = _resample_slot(
        mutated, pset, rng,
        lambda spec, i, it: it not in (SemType.LAYER_UNIT, SemType.DATA_PAIR,
                                       SemType.PREDICTIONS),
        "insert_modify")
    return resampled, True


def mutate_ephemeral(tree: TreeNode, pset, rng, depth_limit: int):
    """Resample one random numeric constant from its slot's domain."""
    points = _ephemeral_paths(tree)
    if not points:
        _identity("ephemeral", "tree has no numeric constants")
        return tree, False
    path = rng.choice(points)
    node = node_at(tree, path)
    hint = slot_hint(tree, path)
    semtype = node.primitive.output_type
    if hint is not None:
        replacement = pset.sample_terminal(rng, semtype, hint)
        if replacement.primitive.kind != "ephemeral":
            replacement = pset.const_node(semtype, node.ephemeral_value)
    else:
        domains = pset.numeric_domains_for(semtype)
        if not domains:
            _identity("ephemeral", "no domain for constant type")
            return tree, False
        replacement = pset.const_node(semtype, rng.choice(domains).sample(rng))
    return replace_at(tree, path, replacement), True


def mutate_uniform(tree: TreeNode, pset, rng, depth_limit: int):
    """Replace a random subtree with a fresh one of the same type."""
    paths = [p for p, _ in iter_paths(tree)]
    path = rng.choice(paths)
    node = node_at(tree, path)
    semtype = node.primitive.output_type
    budget = depth_limit - len(path)
    hint = slot_hint(tree, path)
    if not pset.functions_returning(semtype) or budget < 2:
        replacement = pset.sample_terminal(rng, semtype, hint)
    else:
        replacement = generate_tree(rng, pset, "grow", 1, min(4, budget), semtype)
    return replace_at(tree, path, replacement), True


def mutate_shrink(tree: TreeNode, pset, rng, depth_limit: int):
    """Replace a node by one of its same-typed children."""
    candidates = []
    for path, node in iter_paths(tree):
        for i, child in enumerate(node.children):
            if child.primitive.output_type is node.primitive.output_type:
                candidates.append((path, i))
    if not candidates:
        _identity("shrink", "no same-typed child")
        return tree, False
    path, i = rng.choice(candidates)
    return replace_at(tree, path, node_at(tree, path).children[i]), True


MUTATION_OPERATORS: dict[str, Callable] = {
    "insert": mutate_insert,
    "insert_modify": mutate_insert_modify,
    "ephemeral": mutate_ephemeral,
    "uniform": mutate_uniform,
    "shrink": mutate_shrink,
    "swap_layer": mutate_swap_layer,
    "remove_layer": mutate_remove_layer,
    "add_layer": mutate_add_layer,
    "activation": mutate_activation,
    "optimizer": mutate_optimizer,
    "pretrained": mutate_pretrained,
}

MATING_OPERATORS: dict[str, Callable] = {
    "crossover": crossover_one_point,
    "crossover_ephemeral": crossover_ephemeral,
    "crossover_preserving": crossover_subtree_preserving,
    "headless_chicken": crossover_one_point,
    "headless_chicken_ephemeral": crossover_ephemeral,
}


# -- offspring creation and the generational loop --------------------------------

def make_offspring(parents: list[Individual], pset: PrimitiveSet,
                   cfg: EvolutionConfig, rng, id_source: IdSource):
    """Create one offspring; every operator fires independently at its rate.

    Returns (individual, fired operator names). Headless-chicken matings pair
    the offspring with a freshly generated random tree.
    """
    base = rng.choice(parents)
    tree = base.root
    parent_ids = {base.id}
    fired: list[str] = []
    for name in OPERATOR_ORDER:
        rate = cfg.operator_rates.get(name, 0.0)
        if rate <= 0.0 or rng.random() >= rate:
            continue
        fired.append(name)
        if name in MATING_NAMES:
            if name.startswith("headless_chicken"):
                partner_tree = random_tree(pset, rng, cfg)
            else:
                partner = rng.choice(parents)
                parent_ids.add(partner.id)
                partner_tree = partner.root
            (tree, _), _ = MATING_OPERATORS[name](tree, partner_tree, pset, rng,
                                                  cfg.depth_limit)
        else:
            tree, _ = MUTATION_OPERATORS[name](tree, pset, rng, cfg.depth_limit)
    origin = "crossover" if any(n in MATING_NAMES for n in fired) else "mutation"
    child = Individual(tree, id_source.next(), parent_ids=tuple(sorted(parent_ids)),
                       origin=origin)
    return child, fired


@dataclass
class GenerationLog:
    generation: int
    evaluated: int
    cache_hits: int
    best_error: float
    archive_size: int
    wall_seconds: float
    operator_counts: dict[str, int] = field(default_factory=dict)

    CSV_COLUMNS = ("generation", "evaluated", "cache_hits", "best_error",
                   "archive_size", "wall_seconds")

    def csv_row(self) -> list:
        return [self.generation, self.evaluated, self.cache_hits,
                self.best_error, self.archive_size, self.wall_seconds]


def generation_step(pop: list[Individual], cfg: EvolutionConfig, pset: PrimitiveSet,
                    evaluate: Callable[[list[Individual]], tuple[int, int]],
                    rng, archive: ParetoArchive, id_source: IdSource,
                    generation: int) -> tuple[list[Individual], GenerationLog]:
    """One NSGA-II generation: select, vary, evaluate, archive, survive."""
    started = time.monotonic()
    parents = nsga2_select(pop, cfg.select_count)
    offspring = []
    counts: Counter = Counter()
    for _ in range(cfg.pop_size):
        child, fired = make_offspring(parents, pset, cfg, rng, id_source)
        counts.update(fired)
        offspring.append(child)
    evaluated, cache_hits = evaluate(offspring)
    archive.update(offspring)
    new_pop = nsga2_select(parents + offspring, cfg.pop_size)
    log = GenerationLog(generation, evaluated, cache_hits, archive.best_error(),
                        len(archive), time.monotonic() - started, dict(counts))
    return new_pop, log


def seed_population(lines: Iterable[str], pset: PrimitiveSet, cfg: EvolutionConfig,
                    rng, id_source: IdSource) -> list[Individual]:
    """Parse seed expressions, then fill to pop_size with random trees."""
    seeds: list[Individual] = []
    for line_no, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            root = parse_expression(text, pset, expected=SemType.PREDICTIONS)
        except ExpressionError as exc:
            raise SeedParseError(line_no, str(exc)) from exc
        seeds.append(Individual(root, id_source.next(), origin="seed"))
    if len(seeds) > cfg.pop_size:
        raise SeedParseError(0, f"{len(seeds)} seeds exceed pop_size {cfg.pop_size}")
    population = list(seeds)
    while len(population) < cfg.pop_size:
        population.append(Individual(random_tree(pset, rng, cfg),
                                     id_source.next(), origin="random"))
    return population
