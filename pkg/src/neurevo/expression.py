"""Canonical text form of expression trees and its parser.

The text format is parenthesized prefix notation, e.g.
``NNLearner(data, DenseLayer(InputLayer(), 10, sigmoid, 0.0), adam, 4)``.
It is the persistence format for seed files, logs and cache keys, so
rendering is canonical: structurally equal trees produce identical bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .gptree import PrimitiveSet, SemType, TreeNode


class ExpressionError(Exception):
    def __init__(self, message: str, offset: int = -1):
        self.offset = offset
        super().__init__(message + (f" (offset {offset})" if offset >= 0 else ""))


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownPrimitive(ExpressionError):
    def __init__(self, name: str, offset: int = -1):
        self.name = name
        super().__init__(f"unknown primitive {name!r}", offset)


class TypeMismatch(ExpressionError):
    def __init__(self, message: str, path: tuple[int, ...], offset: int = -1):
        self.path = path
        super().__init__(f"{message} at path {path}", offset)


def to_expression(root: TreeNode) -> str:
    """Render a tree as canonical text (inverse of ``parse_expression``)."""
    spec = root.primitive
    if spec.kind == "ephemeral":
        if spec.output_type is SemType.INT:
            return repr(int(root.ephemeral_value))
        return repr(float(root.ephemeral_value))
    if spec.arity == 0:
        return spec.name + ("()" if spec.render_call else "")
    return f"{spec.name}({', '.join(to_expression(c) for c in root.children)})"


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<num>[+-]?(?:\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?))"
    r"|(?P<lp>\()"
    r"|(?P<rp>\))"
    r"|(?P<comma>,)")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        tokens.append(_Token(kind, m.group(), m.start()))
    tokens.append(_Token("end", "", len(text)))
    return tokens


def _is_float_token(text: str) -> bool:
    return "." in text or "e" in text or "E" in text


class _Parser:
    def __init__(self, tokens: list[_Token], pset: PrimitiveSet):
        self.tokens = tokens
        self.pos = 0
        self.pset = pset

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.take()
        if tok.kind != kind:
            raise ExpressionSyntaxError(
                f"expected {kind!r}, found {tok.text or 'end of input'!r}", tok.offset)
        return tok

    def parse_node(self, expected: Optional[SemType], hint: Optional[str],
                   path: tuple[int, ...]) -> TreeNode:
        tok = self.take()
        if tok.kind == "num":
            return self._number(tok, expected, path)
        if tok.kind != "name":
            raise ExpressionSyntaxError(
                f"expected a primitive or literal, found {tok.text or 'end of input'!r}",
                tok.offset)
        if self.peek().kind == "lp":
            return self._call(tok, expected, path)
        spec = self.pset.terminals.get(tok.text)
        if spec is None:
            raise UnknownPrimitive(tok.text, tok.offset)
        if expected is not None and spec.output_type is not expected:
            raise TypeMismatch(
                f"{tok.text} has type {spec.output_type.value}, expected {expected.value}",
                path, tok.offset)
        return TreeNode(spec, ())

    def _number(self, tok: _Token, expected: Optional[SemType],
                path: tuple[int, ...]) -> TreeNode:
        is_float = _is_float_token(tok.text)
        if expected is None:
            expected = SemType.FLOAT if is_float else SemType.INT
        if expected is SemType.INT:
            if is_float:
                raise TypeMismatch("integer literal expected", path, tok.offset)
            return self.pset.const_node(SemType.INT, int(tok.text))
        if expected is SemType.FLOAT:
            return self.pset.const_node(SemType.FLOAT, float(tok.text))
        raise TypeMismatch(
            f"literal {tok.text} cannot have type {expected.value}", path, tok.offset)

    def _call(self, name_tok: _Token, expected: Optional[SemType],
              path: tuple[int, ...]) -> TreeNode:
        self.expect("lp")
        spec = self.pset.functions.get(name_tok.text)
        if spec is None:
            terminal = self.pset.terminals.get(name_tok.text)
            if terminal is not None and terminal.render_call:
                self.expect("rp")
                if expected is not None and terminal.output_type is not expected:
                    raise TypeMismatch(
                        f"{name_tok.text} has type {terminal.output_type.value}, "
                        f"expected {expected.value}", path, name_tok.offset)
                return TreeNode(terminal, ())
            raise UnknownPrimitive(name_tok.text, name_tok.offset)
        args = []
        if self.peek().kind != "rp":
            while True:
                i = len(args)
                arg_expected = spec.input_types[i] if i < spec.arity else None
                arg_hint = spec.input_hints[i] if i < spec.arity else None
                args.append(self.parse_node(arg_expected, arg_hint, path + (i,)))
                if self.peek().kind != "comma":
                    break
                self.take()
        self.expect("rp")
        if len(args) != spec.arity:
            raise ExpressionSyntaxError(
                f"{spec.name} expects {spec.arity} arguments, got {len(args)}",
                name_tok.offset)
        if expected is not None and spec.output_type is not expected:
            raise TypeMismatch(
                f"{spec.name} has type {spec.output_type.value}, expected {expected.value}",
                path, name_tok.offset)
        return TreeNode(spec, tuple(args))


def parse_expression(text: str, pset: PrimitiveSet,
                     expected: Optional[SemType] = None) -> TreeNode:
    """Parse canonical expression text back into a tree.

    Rejects unknown primitive names, arity errors and type errors, all with
    position information. ``expected`` constrains the root type when given.
    """
    parser = _Parser(_tokenize(text), pset)
    node = parser.parse_node(expected, None, ())
    trailing = parser.peek()
    if trailing.kind != "end":
        raise ExpressionSyntaxError(
            f"unexpected trailing input {trailing.text!r}", trailing.offset)
    return node
