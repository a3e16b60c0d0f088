"""neurevo: multi-objective evolution of preprocessing pipelines and
tree-structured neural networks."""

from .gptree import (Domain, Individual, PrimitiveSet, PrimitiveSpec, SemType,
                     TreeNode, generate_tree, validate_types)
from .expression import parse_expression, to_expression
from .objectives import ObjectiveVector
from .primitives import build_primitive_set, ephemeral_domains

__version__ = "0.1.0"

__all__ = [
    "Domain",
    "Individual",
    "PrimitiveSet",
    "PrimitiveSpec",
    "SemType",
    "TreeNode",
    "generate_tree",
    "validate_types",
    "parse_expression",
    "to_expression",
    "ObjectiveVector",
    "build_primitive_set",
    "ephemeral_domains",
    "__version__",
]
