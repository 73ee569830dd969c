"""Paraphrase pairs: the data model, TSV ingestion, reversal, vocabularies and
the synthetic-grammar corpus."""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import grammar
from .errors import ScpnError
from .fileio import write_lines
from .syntax import ParseError, ParseTree, Template, extract_template, parse_bracketed, serialize, strip_leaves

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")

MAX_SOURCE_TOKENS = 60
MAX_PARSE_TOKENS = 200


class BadColumnCount(ScpnError):
    def __init__(self, line: int, count: int):
        super().__init__(f"line {line}: expected 4 tab-separated columns, got {count}")
        self.line = line


class PairParseError(ParseError):
    """A malformed parse column; ``offset`` is the byte offset within that column."""

    def __init__(self, line: int, column: str, err: ParseError):
        super().__init__(f"line {line}, column {column}: {err.reason}", err.offset)
        self.line = line
        self.column = column


def normalize(sentence: str) -> str:
    return " ".join(sentence.lower().split())


@dataclass(frozen=True)
class ParaphraseExample:
    s1: str
    s2: str
    p1: ParseTree
    p2: ParseTree
    tag: str = field(default="", compare=False)  # generating transformation, not persisted
    t2: Template = field(init=False, compare=False)

    def __post_init__(self):
        if not self.s1.strip() or not self.s2.strip():
            raise ValueError("sentences must be nonempty")
        object.__setattr__(self, "t2", extract_template(self.p2))

    def reversed(self) -> ParaphraseExample:
        return ParaphraseExample(self.s2, self.s1, self.p2, self.p1, self.tag)

    def to_tsv(self) -> str:
        return "\t".join((self.s1, self.s2, serialize(self.p1), serialize(self.p2)))


def load_pairs_tsv(path) -> list[ParaphraseExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise BadColumnCount(lineno, len(cols))
            s1, s2, raw1, raw2 = cols
            trees = []
            for name, raw in (("p1", raw1), ("p2", raw2)):
                try:
                    trees.append(strip_leaves(parse_bracketed(raw)))
                except ParseError as err:
                    raise PairParseError(lineno, name, err) from err
            out.append(ParaphraseExample(normalize(s1), normalize(s2), trees[0], trees[1]))
    return out


def write_pairs_tsv(path, examples: Iterable[ParaphraseExample]) -> None:
    write_lines(path, (ex.to_tsv() for ex in examples))


def add_reversed(examples: Sequence[ParaphraseExample]) -> list[ParaphraseExample]:
    """Input followed by every pair with its two sides swapped."""
    return list(examples) + [ex.reversed() for ex in examples]


# --------------------------------------------------------------------------


def is_parse_symbol(token: str) -> bool:
    return token == ")" or (token.startswith("(") and len(token) > 1)


class Vocab:
    """Dense token<->id map; ids 0..3 are PAD, BOS, EOS, UNK."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(SPECIALS)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def save(self, path) -> None:
        write_lines(path, self.itos)

    @classmethod
    def load(cls, path) -> Vocab:
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh]
        if tuple(tokens[:4]) != SPECIALS:
            raise ScpnError(f"{path}: vocab must start with {SPECIALS}")
        return cls(tokens[4:])


def build_vocab(sequences: Iterable[Sequence[str]], min_freq: int = 1) -> Vocab:
    """Tokens seen at least ``min_freq`` times (parse symbols always), ordered
    by descending count then lexicographically."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter(t for seq in sequences for t in seq)
    for s in SPECIALS:
        counts.pop(s, None)
    keep = [t for t, c in counts.items() if c >= min_freq or is_parse_symbol(t)]
    keep.sort(key=lambda t: (-counts[t], t))
    return Vocab(keep)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthGrammarConfig:
    seed: int = 0
    num_pairs: int = 1000
    transformations: tuple[str, ...] = grammar.TRANSFORMATIONS
    # share of pairs that are lexical-only paraphrases (same template)
    identity_rate: float = 0.4

    def __post_init__(self):
        if self.num_pairs < 1:
            raise ValueError("num_pairs must be >= 1")
        if not self.transformations:
            raise ValueError("at least one transformation must be enabled")
        unknown = set(self.transformations) - set(grammar.TRANSFORMATIONS)
        if unknown:
            raise ValueError(f"unknown transformations: {sorted(unknown)}")
        if not 0.0 <= self.identity_rate < 1.0:
            raise ValueError("identity_rate must be in [0, 1)")


def synth_corpus(config: SynthGrammarConfig) -> list[ParaphraseExample]:
    rng = random.Random(config.seed)
    out = []
    for _ in range(config.num_pairs):
        pair = grammar.sample_pair(rng, config.transformations, config.identity_rate)
        out.append(
            ParaphraseExample(
                grammar.sentence_of(pair.tree1),
                grammar.sentence_of(pair.tree2),
                strip_leaves(pair.tree1),
                strip_leaves(pair.tree2),
                tag=pair.transformation,
            )
        )
    return out


def split_dev(examples: Sequence[ParaphraseExample], n_dev: int) -> tuple[list, list]:
    """Last ``n_dev`` examples are held out."""
    return list(examples[:-n_dev]) if n_dev else list(examples), list(examples[-n_dev:]) if n_dev else []


def read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()
