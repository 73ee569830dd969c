"""Byte-pair encoding with an end-of-word sentinel and ``@@`` continuation marks."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache

from .errors import ScpnError
from .fileio import write_lines

END_OF_WORD = "</w>"
MARKER = "@@"
DEFAULT_MERGES = 8000


class EmptyCorpus(ScpnError):
    pass


class DanglingContinuation(ScpnError):
    pass


@dataclass(frozen=True)
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    vocab: frozenset = field(default_factory=frozenset)
    continuation_marker: str = MARKER

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge pair")
        object.__setattr__(self, "_ranks", {pair: r for r, pair in enumerate(self.merges)})
        object.__setattr__(self, "_segment", lru_cache(maxsize=65536)(self._segment_word))

    def _segment_word(self, word: str) -> tuple[str, ...]:
        symbols = list(word) + [END_OF_WORD]
        ranks = self._ranks
        while len(symbols) > 1:
            best = None
            best_rank = None
            for k in range(len(symbols) - 1):
                r = ranks.get((symbols[k], symbols[k + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = k, r
            if best is None:
                break
            pair = (symbols[best], symbols[best + 1])
            merged = []
            k = 0
            while k < len(symbols):
                if k < len(symbols) - 1 and (symbols[k], symbols[k + 1]) == pair:
                    merged.append(pair[0] + pair[1])
                    k += 2
                else:
                    merged.append(symbols[k])
                    k += 1
            symbols = merged
        return tuple(symbols)

    def segment(self, word: str) -> list[str]:
        """Pieces of one word, sentinel removed, continuation marks added."""
        symbols = list(self._segment(word))
        if symbols[-1] == END_OF_WORD:
            symbols.pop()
        elif symbols[-1].endswith(END_OF_WORD):
            symbols[-1] = symbols[-1][: -len(END_OF_WORD)]
        return [s + self.continuation_marker for s in symbols[:-1]] + [symbols[-1]]

    def save(self, path) -> None:
        write_lines(path, (f"{left} {right}" for left, right in self.merges))

    @classmethod
    def load(cls, path) -> BpeModel:
        merges = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line:
                    left, right = line.split(" ")
                    merges.append((left, right))
        return cls(tuple(merges), _vocab_from_merges(merges))


def _vocab_from_merges(merges) -> frozenset:
    return frozenset(a + b for a, b in merges)


def bpe_train(corpus: list[str], num_merges: int = DEFAULT_MERGES) -> BpeModel:
    """Greedy most-frequent-pair merging; ties go to the smaller (left, right)."""
    word_freq = Counter(w for sent in corpus for w in sent.split())
    if not word_freq:
        raise EmptyCorpus("corpus has no tokens")
    words = [list(w) + [END_OF_WORD] for w in sorted(word_freq)]
    freqs = [word_freq[w] for w in sorted(word_freq)]
    alphabet = {ch for w in words for ch in w}

    pair_counts: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for idx, (syms, f) in enumerate(zip(words, freqs)):
        for a, b in zip(syms, syms[1:]):
            pair_counts[(a, b)] += f
            where[(a, b)].add(idx)

    merges: list[tuple[str, str]] = []
    while len(merges) < num_merges:
        best = None
        for pair, c in pair_counts.items():
            if c < 2:
                continue
            if best is None or c > pair_counts[best] or (c == pair_counts[best] and pair < best):
                best = pair
        if best is None:
            break
        merges.append(best)
        a, b = best
        for idx in sorted(where.pop(best, ())):
            syms, f = words[idx], freqs[idx]
            for x, y in zip(syms, syms[1:]):
                pair_counts[(x, y)] -= f
                if pair_counts[(x, y)] <= 0:
                    del pair_counts[(x, y)]
            out = []
            k = 0
            while k < len(syms):
                if k < len(syms) - 1 and syms[k] == a and syms[k + 1] == b:
                    out.append(a + b)
                    k += 2
                else:
                    out.append(syms[k])
                    k += 1
            words[idx] = out
            for x, y in zip(out, out[1:]):
                pair_counts[(x, y)] += f
                where[(x, y)].add(idx)
    return BpeModel(tuple(merges), frozenset(alphabet) | _vocab_from_merges(merges))


def bpe_apply(model: BpeModel, sentence: str) -> list[str]:
    out: list[str] = []
    for word in sentence.split():
        out.extend(model.segment(word))
    return out


def bpe_restore(tokens: list[str], marker: str = MARKER) -> str:
    words = []
    current = []
    for tok in tokens:
        if tok.endswith(marker):
            current.append(tok[: -len(marker)])
        else:
            current.append(tok)
            words.append("".join(current))
            current = []
    if current:
        raise DanglingContinuation(f"sequence ends with continued piece {tokens[-1]!r}")
    return " ".join(words)
