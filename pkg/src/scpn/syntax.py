"""Constituency trees without words, their bracketed form, and parse templates.

A template is the root label of a parse plus the ordered labels of its
immediate children, e.g. ``(S(NP)(VP)(.))``.  Punctuation children are kept.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ScpnError
from .fileio import write_lines

OPEN = "("
CLOSE = ")"


class ParseError(ScpnError):
    """Malformed bracketed string.  ``offset`` is a 1-based byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.reason = message
        self.offset = offset


class UnbalancedBrackets(ParseError):
    pass


class EmptyLabel(ParseError):
    pass


class TrailingGarbage(ParseError):
    pass


class EmptyHistogram(ScpnError):
    pass


def _valid_label(label: str) -> bool:
    return bool(label) and not any(ch in "()" or ch.isspace() for ch in label)


@dataclass(frozen=True)
class ParseTree:
    label: str
    children: tuple[ParseTree, ...] = ()
    lexical: bool = False

    def __post_init__(self):
        if not _valid_label(self.label):
            raise ValueError(f"invalid label {self.label!r}")
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))
        if self.lexical and self.children:
            raise ValueError("lexical leaves cannot have children")

    @property
    def depth(self) -> int:
        if not self.children:
            return 1
        return 1 + max(child.depth for child in self.children)

    def __str__(self) -> str:
        return serialize(self)

    def words(self) -> list[str]:
        if self.lexical:
            return [self.label]
        out: list[str] = []
        for child in self.children:
            out.extend(child.words())
        return out


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8")) + 1


def parse_bracketed(text: str) -> ParseTree:
    """Parse ``(LABEL TREE*)``; bare tokens inside a node become lexical leaves."""
    n = len(text)
    i = 0
    # each frame: [label, children]
    stack: list[list] = []
    root: ParseTree | None = None

    def skip_ws(j: int) -> int:
        while j < n and text[j].isspace():
            j += 1
        return j

    i = skip_ws(i)
    if i >= n or text[i] != OPEN:
        if i >= n:
            raise UnbalancedBrackets("expected '('", _byte_offset(text, i))
        raise TrailingGarbage("expected '('", _byte_offset(text, i))
    while True:
        i = skip_ws(i)
        if i >= n:
            raise UnbalancedBrackets("unexpected end of input", _byte_offset(text, i))
        ch = text[i]
        if ch == OPEN:
            j = skip_ws(i + 1)
            start = j
            while j < n and text[j] not in "()" and not text[j].isspace():
                j += 1
            if j == start:
                raise EmptyLabel("missing label", _byte_offset(text, start))
            stack.append([text[start:j], []])
            i = j
        elif ch == CLOSE:
            if not stack:
                raise UnbalancedBrackets("unmatched ')'", _byte_offset(text, i))
            label, children = stack.pop()
            node = ParseTree(label, tuple(children))
            i += 1
            if stack:
                stack[-1][1].append(node)
            else:
                root = node
                break
        else:
            if not stack:
                raise TrailingGarbage("token outside brackets", _byte_offset(text, i))
            j = i
            while j < n and text[j] not in "()" and not text[j].isspace():
                j += 1
            stack[-1][1].append(ParseTree(text[i:j], lexical=True))
            i = j
    i = skip_ws(i)
    if i < n:
        raise TrailingGarbage("unexpected text after tree", _byte_offset(text, i))
    return root


def strip_leaves(tree: ParseTree) -> ParseTree:
    """Drop every lexical leaf, keeping the nonterminal skeleton."""
    return ParseTree(
        tree.label,
        tuple(strip_leaves(child) for child in tree.children if not child.lexical),
    )


def serialize(tree: ParseTree) -> str:
    if tree.lexical:
        return tree.label
    parts = [OPEN, tree.label]
    for child in tree.children:
        if child.lexical:
            parts.append(" " + child.label)
        else:
            parts.append(serialize(child))
    parts.append(CLOSE)
    return "".join(parts)


def linearize(tree: ParseTree) -> list[str]:
    """Token sequence for model input: ``(X`` per node open, ``)`` per close."""
    tokens: list[str] = []

    def walk(node: ParseTree) -> None:
        tokens.append(OPEN + node.label)
        for child in node.children:
            if not child.lexical:
                walk(child)
        tokens.append(CLOSE)

    walk(tree)
    return tokens


def tokens_to_tree(tokens: Sequence[str]) -> ParseTree:
    """Inverse of :func:`linearize`; offsets in errors are 1-based token positions."""
    stack: list[list] = []
    root = None
    for pos, tok in enumerate(tokens):
        if root is not None:
            raise TrailingGarbage("tokens after complete tree", pos + 1)
        if tok == CLOSE:
            if not stack:
                raise UnbalancedBrackets("unmatched ')'", pos + 1)
            label, children = stack.pop()
            node = ParseTree(label, tuple(children))
            if stack:
                stack[-1][1].append(node)
            else:
                root = node
        elif tok.startswith(OPEN) and _valid_label(tok[1:]):
            stack.append([tok[1:], []])
        else:
            raise EmptyLabel(f"bad parse token {tok!r}", pos + 1)
    if root is None:
        raise UnbalancedBrackets("incomplete tree", len(tokens) + 1)
    return root


@dataclass(frozen=True, order=True)
class Template:
    root: str
    children: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))

    def serialize(self) -> str:
        return OPEN + self.root + "".join(OPEN + c + CLOSE for c in self.children) + CLOSE

    __str__ = serialize

    def tokens(self) -> list[str]:
        out = [OPEN + self.root]
        for c in self.children:
            out += [OPEN + c, CLOSE]
        out.append(CLOSE)
        return out

    def as_tree(self) -> ParseTree:
        return ParseTree(self.root, tuple(ParseTree(c) for c in self.children))

    @classmethod
    def parse(cls, text: str) -> Template:
        tree = strip_leaves(parse_bracketed(text))
        if tree.depth > 2:
            raise ValueError(f"not a template (depth {tree.depth}): {text!r}")
        return extract_template(tree)


def extract_template(tree: ParseTree) -> Template:
    return Template(tree.label, tuple(c.label for c in tree.children if not c.lexical))


def template_match(a: ParseTree, b: ParseTree) -> bool:
    return extract_template(a) == extract_template(b)


@dataclass
class TemplateHistogram:
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, template: Template, n: int = 1) -> None:
        self.counts[template] += n

    @classmethod
    def from_parses(cls, parses: Iterable[ParseTree]) -> TemplateHistogram:
        return cls(Counter(extract_template(p) for p in parses))

    def most_common(self, k: int) -> list[Template]:
        ranked = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0].serialize()))
        return [t for t, c in ranked[:k] if c > 0]


def top_templates(parses: Iterable[ParseTree], k: int) -> list[Template]:
    """The ``k`` most frequent templates; ties go to the smaller serialized form."""
    if k < 1:
        raise ValueError("k must be positive")
    return TemplateHistogram.from_parses(parses).most_common(k)


def template_entropy(hist: TemplateHistogram) -> float:
    """Shannon entropy in bits of the template distribution."""
    total = hist.total
    if total <= 0:
        raise EmptyHistogram("histogram is empty")
    h = 0.0
    for c in hist.counts.values():
        if c > 0:
            p = c / total
            h -= p * math.log2(p)
    return max(h, 0.0)


def read_templates(path) -> list[Template]:
    with open(path, encoding="utf-8") as fh:
        return [Template.parse(line.strip()) for line in fh if line.strip()]


def write_templates(path, templates: Iterable[Template]) -> None:
    write_lines(path, (t.serialize() for t in templates))
