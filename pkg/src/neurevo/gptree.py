"""Strongly typed expression trees: node model, random generation, validation.

Trees are immutable after construction. Every edge carries one semantic type
from the closed ``SemType`` set, and every operation in this module is a pure
function of its inputs and the supplied random source.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

UNBOUNDED = 10 ** 9


class SemType(enum.Enum):
    """Semantic types flowing along tree edges (closed set, no subtyping)."""

    DATA_PAIR = "DataPair"
    LAYER_UNIT = "LayerUnit"
    INT = "Int"
    FLOAT = "Float"
    ACTIVATION = "ActivationKind"
    OPTIMIZER = "OptimizerKind"
    PADDING = "PaddingKind"
    PREDICTIONS = "PredictionVector"


PRIMITIVE_KINDS = ("preprocess", "layer", "learner", "arithmetic", "terminal", "ephemeral")


class GenerationError(Exception):
    pass


class NoTerminalForType(GenerationError):
    def __init__(self, semtype: SemType, hint: Optional[str] = None):
        self.semtype = semtype
        self.hint = hint
        super().__init__(f"no terminal available for type {semtype.value}"
                         + (f" (hint {hint!r})" if hint else ""))


class UnsatisfiableType(GenerationError):
    def __init__(self, semtype: SemType, message: str):
        self.semtype = semtype
        super().__init__(f"{semtype.value}: {message}")


@dataclass(frozen=True)
class Domain:
    """Sampling domain backing one ephemeral/terminal argument slot.

    ``kind`` selects the sampler:
      choice_int   uniform over ``values`` (ints)
      range_int    uniform integer in [lo, hi]
      uniform      uniform float in [lo, hi]
      log_uniform  exp(uniform(log lo, log hi))
      terminals    uniform over named terminals listed in ``values``
    """

    name: str
    semtype: SemType
    kind: str
    values: tuple = ()
    lo: float = 0.0
    hi: float = 0.0

    def sample(self, rng: random.Random):
        if self.kind == "choice_int":
            return rng.choice(self.values)
        if self.kind == "range_int":
            return rng.randint(int(self.lo), int(self.hi))
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi)
        if self.kind == "log_uniform":
            return math.exp(rng.uniform(math.log(self.lo), math.log(self.hi)))
        if self.kind == "terminals":
            return rng.choice(self.values)
        raise ValueError(f"unknown domain kind {self.kind!r}")

    def contains(self, value) -> bool:
        """True when ``value`` could have been produced by ``sample``."""
        if self.kind in ("choice_int", "terminals"):
            return value in self.values
        if self.kind == "range_int":
            return isinstance(value, int) and int(self.lo) <= value <= int(self.hi)
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class PrimitiveSpec:
    """Signature of one tree-node kind: a function, terminal or ephemeral."""

    name: str
    input_types: tuple[SemType, ...]
    output_type: SemType
    kind: str
    input_hints: tuple[Optional[str], ...] = ()
    value: Any = None
    render_call: bool = True

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if self.input_types and self.kind in ("terminal", "ephemeral"):
            raise ValueError("terminals and ephemerals must have arity 0")

    @property
    def arity(self) -> int:
        return len(self.input_types)


@dataclass(frozen=True)
class TreeNode:
    """One node of a typed expression tree; children count equals arity."""

    primitive: PrimitiveSpec
    children: tuple["TreeNode", ...] = ()
    ephemeral_value: Any = None


class PrimitiveSet:
    """Registry of functions, named terminals and ephemeral domains."""

    def __init__(self, name: str = "pset"):
        self.name = name
        self._functions: dict[str, PrimitiveSpec] = {}
        self._terminals: dict[str, PrimitiveSpec] = {}
        self._domains: dict[str, Domain] = {}
        self._consts: dict[SemType, PrimitiveSpec] = {}
        self._min_depth_cache: Optional[dict[SemType, int]] = None
        self._max_reach_cache: dict[SemType, int] = {}

    # -- registration -----------------------------------------------------

    def add_function(self, name, input_types, output_type, kind,
                     hints: Optional[tuple] = None) -> PrimitiveSpec:
        if name in self._functions or name in self._terminals:
            raise ValueError(f"duplicate primitive name {name!r}")
        if not input_types:
            raise ValueError("functions must take at least one input")
        if hints is None:
            hints = (None,) * len(input_types)
        spec = PrimitiveSpec(name, tuple(input_types), output_type, kind, tuple(hints))
        self._functions[name] = spec
        self._invalidate()
        return spec

    def add_terminal(self, name, output_type, value=None, render_call=False) -> PrimitiveSpec:
        if name in self._functions or name in self._terminals:
            raise ValueError(f"duplicate primitive name {name!r}")
        spec = PrimitiveSpec(name, (), output_type, "terminal", (), value, render_call)
        self._terminals[name] = spec
        self._invalidate()
        return spec

    def add_domain(self, domain: Domain) -> Domain:
        if domain.name in self._domains:
            raise ValueError(f"duplicate domain name {domain.name!r}")
        if domain.kind == "terminals":
            for t in domain.values:
                if t not in self._terminals:
                    raise ValueError(f"domain {domain.name!r} references unknown terminal {t!r}")
        self._domains[domain.name] = domain
        return domain

    def _invalidate(self):
        self._min_depth_cache = None
        self._max_reach_cache = {}

    # -- lookup -----------------------------------------------------------

    @property
    def functions(self) -> dict[str, PrimitiveSpec]:
        return dict(self._functions)

    @property
    def terminals(self) -> dict[str, PrimitiveSpec]:
        return dict(self._terminals)

    @property
    def domains(self) -> dict[str, Domain]:
        return dict(self._domains)

    def lookup(self, name: str) -> Optional[PrimitiveSpec]:
        return self._functions.get(name) or self._terminals.get(name)

    def const_spec(self, semtype: SemType) -> PrimitiveSpec:
        if semtype not in (SemType.INT, SemType.FLOAT):
            raise ValueError(f"no constant spec for {semtype.value}")
        if semtype not in self._consts:
            self._consts[semtype] = PrimitiveSpec(
                f"{semtype.value}Const", (), semtype, "ephemeral", render_call=False)
        return self._consts[semtype]

    def const_node(self, semtype: SemType, value) -> TreeNode:
        value = int(value) if semtype is SemType.INT else float(value)
        return TreeNode(self.const_spec(semtype), (), value)

    def terminal_node(self, name: str) -> TreeNode:
        return TreeNode(self._terminals[name], ())

    def functions_returning(self, semtype: SemType) -> list[PrimitiveSpec]:
        return [s for s in self._functions.values() if s.output_type is semtype]

    def terminals_returning(self, semtype: SemType) -> list[PrimitiveSpec]:
        return [s for s in self._terminals.values() if s.output_type is semtype]

    def numeric_domains_for(self, semtype: SemType) -> list[Domain]:
        return [d for d in self._domains.values()
                if d.semtype is semtype and d.kind != "terminals"]

    def has_terminal_for(self, semtype: SemType, hint: Optional[str] = None) -> bool:
        if hint is not None and hint in self._domains:
            return True
        return bool(self.terminals_returning(semtype) or self.numeric_domains_for(semtype))

    def sample_terminal(self, rng: random.Random, semtype: SemType,
                        hint: Optional[str] = None) -> TreeNode:
        """Sample a leaf of the given type, honoring the slot's domain hint."""
        if hint is not None:
            domain = self._domains.get(hint)
            if domain is None or domain.semtype is not semtype:
                raise NoTerminalForType(semtype, hint)
            sampled = domain.sample(rng)
            if domain.kind == "terminals":
                return self.terminal_node(sampled)
            return self.const_node(semtype, sampled)
        options: list = [("t", s) for s in self.terminals_returning(semtype)]
        options += [("d", d) for d in self.numeric_domains_for(semtype)]
        if not options:
            raise NoTerminalForType(semtype)
        tag, picked = rng.choice(options)
        if tag == "t":
            return TreeNode(picked, ())
        return self.const_node(semtype, picked.sample(rng))

    # -- reachability -----------------------------------------------------

    def min_depth(self, semtype: SemType) -> int:
        """Minimum depth of a completable subtree of this type (UNBOUNDED if none)."""
        if self._min_depth_cache is None:
            depths = {t: UNBOUNDED for t in SemType}
            for t in SemType:
                if self.has_terminal_for(t):
                    depths[t] = 1
            changed = True
            while changed:
                changed = False
                for spec in self._functions.values():
                    need = 1 + max((depths[it] for it in spec.input_types), default=0)
                    if need < depths[spec.output_type]:
                        depths[spec.output_type] = need
                        changed = True
            self._min_depth_cache = depths
        return self._min_depth_cache[semtype]

    def max_reach(self, semtype: SemType) -> int:
        """Maximum achievable subtree depth for this type (UNBOUNDED when cyclic)."""
        if semtype in self._max_reach_cache:
            return self._max_reach_cache[semtype]

        def walk(t: SemType, stack: tuple) -> int:
            if t in stack:
                return UNBOUNDED
            best = 1 if self.has_terminal_for(t) else 0
            for spec in self.functions_returning(t):
                if any(self.min_depth(it) >= UNBOUNDED for it in spec.input_types):
                    continue
                deepest = max(walk(it, stack + (t,)) for it in spec.input_types)
                best = max(best, min(UNBOUNDED, 1 + deepest))
            return best

        reach = walk(semtype, ())
        self._max_reach_cache[semtype] = reach
        return reach


# -- tree utilities --------------------------------------------------------

def iter_paths(root: TreeNode) -> Iterator[tuple[tuple[int, ...], TreeNode]]:
    """Yield (path, node) pairs in pre-order; the root path is ()."""

    def walk(node, path):
        yield path, node
        for i, child in enumerate(node.children):
            yield from walk(child, path + (i,))

    yield from walk(root, ())


def node_at(root: TreeNode, path: tuple[int, ...]) -> TreeNode:
    node = root
    for i in path:
        node = node.children[i]
    return node


def replace_at(root: TreeNode, path: tuple[int, ...], new_node: TreeNode) -> TreeNode:
    """Return a copy of the tree with the subtree at ``path`` replaced."""
    if not path:
        return new_node
    i = path[0]
    children = list(root.children)
    children[i] = replace_at(children[i], path[1:], new_node)
    return TreeNode(root.primitive, tuple(children), root.ephemeral_value)


def tree_depth(root: TreeNode) -> int:
    """Depth counted in nodes: a lone terminal has depth 1."""
    if not root.children:
        return 1
    return 1 + max(tree_depth(c) for c in root.children)


def count_nodes(root: TreeNode) -> int:
    return 1 + sum(count_nodes(c) for c in root.children)


def slot_hint(root: TreeNode, path: tuple[int, ...]) -> Optional[str]:
    """Domain hint attached to the parent slot holding ``path`` (None at root)."""
    if not path:
        return None
    parent = node_at(root, path[:-1])
    hints = parent.primitive.input_hints
    return hints[path[-1]] if hints else None


# -- random generation -----------------------------------------------------

def generate_tree(rng: random.Random, pset: PrimitiveSet, method: str,
                  depth_min: int, depth_max: int, return_type: SemType) -> TreeNode:
    """Generate a random type-sound tree.

    ``method`` is "grow" or "full". A target height is drawn uniformly from
    [depth_min, depth_max] (clamped to what the type system can reach) and one
    spine of the tree is forced to that height, so the returned depth always
    equals the drawn target. Deterministic given the rng state.
    """
    if method not in ("grow", "full"):
        raise ValueError(f"unknown generation method {method!r}")
    if depth_min < 1 or depth_min > depth_max:
        raise ValueError("require 1 <= depth_min <= depth_max")
    need = pset.min_depth(return_type)
    if need >= UNBOUNDED:
        raise UnsatisfiableType(return_type, "not reachable from the primitive set")
    if need > depth_max:
        raise UnsatisfiableType(
            return_type, f"needs depth >= {need}, but depth_max is {depth_max}")
    reach = pset.max_reach(return_type)
    lo = max(depth_min, need)
    hi = min(depth_max, reach)
    if hi < lo:
        lo = hi = reach  # type cannot be made as deep as asked; take its deepest form
    height = rng.randint(lo, hi)

    def placeable(spec: PrimitiveSpec, budget: int) -> bool:
        return budget >= 2 and all(pset.min_depth(it) <= budget - 1
                                   for it in spec.input_types)

    def build(semtype: SemType, budget: int, hint: Optional[str], spine: bool) -> TreeNode:
        funcs = [f for f in pset.functions_returning(semtype) if placeable(f, budget)]
        if spine and budget > 1:
            spine_funcs = [f for f in funcs
                           if any(pset.max_reach(it) >= budget - 1 for it in f.input_types)]
            if spine_funcs:
                spec = rng.choice(spine_funcs)
                slots = [i for i, it in enumerate(spec.input_types)
                         if pset.max_reach(it) >= budget - 1]
                spine_slot = rng.choice(slots)
                children = tuple(
                    build(it, budget - 1, spec.input_hints[i], i == spine_slot)
                    for i, it in enumerate(spec.input_types))
                return TreeNode(spec, children)
        if not funcs or budget <= 1:
            return pset.sample_terminal(rng, semtype, hint)
        if method == "grow" and pset.has_terminal_for(semtype, hint):
            n_terms = 1 if hint else (len(pset.terminals_returning(semtype))
                                      + len(pset.numeric_domains_for(semtype)))
            if rng.random() < n_terms / (n_terms + len(funcs)):
                return pset.sample_terminal(rng, semtype, hint)
        spec = rng.choice(funcs)
        children = tuple(build(it, budget - 1, spec.input_hints[i], False)
                         for i, it in enumerate(spec.input_types))
        return TreeNode(spec, children)

    return build(return_type, height, None, True)


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class TypeViolation:
    path: tuple[int, ...]
    message: str
    expected: Optional[SemType] = None
    actual: Optional[SemType] = None


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violation: Optional[TypeViolation] = None


def validate_types(root: TreeNode, pset: PrimitiveSet) -> ValidationReport:
    """Check type soundness; reports the first violation found, if any."""

    def check(node: TreeNode, path) -> Optional[TypeViolation]:
        spec = node.primitive
        if spec.kind == "ephemeral":
            registered = pset.const_spec(spec.output_type) \
                if spec.output_type in (SemType.INT, SemType.FLOAT) else None
            if registered != spec:
                return TypeViolation(path, f"unknown ephemeral spec {spec.name!r}")
            if node.ephemeral_value is None:
                return TypeViolation(path, "ephemeral node carries no value")
        else:
            registered = pset.lookup(spec.name)
            if registered is None:
                return TypeViolation(path, f"unknown primitive {spec.name!r}")
            if registered != spec:
                return TypeViolation(path, f"primitive {spec.name!r} does not match its registration")
            if node.ephemeral_value is not None:
                return TypeViolation(path, f"non-ephemeral {spec.name!r} carries a constant")
        if len(node.children) != spec.arity:
            return TypeViolation(
                path, f"{spec.name} expects {spec.arity} children, has {len(node.children)}")
        for i, child in enumerate(node.children):
            expected = spec.input_types[i]
            actual = child.primitive.output_type
            if actual is not expected:
                return TypeViolation(path + (i,),
                                     f"child {i} of {spec.name} has wrong type",
                                     expected, actual)
            bad = check(child, path + (i,))
            if bad is not None:
                return bad
        return None

    violation = check(root, ())
    return ValidationReport(violation is None, violation)


# -- individuals ------------------------------------------------------------

@dataclass
class Individual:
    """One candidate pipeline: a typed tree plus evaluation metadata."""

    root: TreeNode
    id: int
    objectives: Any = None
    parent_ids: tuple[int, ...] = ()
    origin: str = "random"
    _expression: Optional[str] = field(default=None, repr=False, compare=False)

    @property
    def evaluated(self) -> bool:
        return self.objectives is not None

    def expression(self) -> str:
        if self._expression is None:
            from .expression import to_expression
            self._expression = to_expression(self.root)
        return self._expression
