"""A small English grammar: meaning-level sampling, surface realization under
several syntactic forms, and a CKY parser that recovers the gold tree of any
sentence the realizer can emit.

Sentences are built from a semantic frame (who did what to whom, where, how),
so two realizations of one frame are paraphrases.  Syntactic transformations
map a frame from one form to another; lexical choices (synonyms) and
low-level constituent order (adverb placement, modifier order) are resampled
on every realization.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .syntax import ParseTree

# --------------------------------------------------------------------------
# lexicon: concept -> surface synonyms
NOUNS_ANIMATE = {
    "dog": ("dog", "hound"), "cat": ("cat",), "bird": ("bird",), "horse": ("horse",),
    "fox": ("fox",), "boy": ("boy", "lad"), "girl": ("girl",), "man": ("man",),
    "woman": ("woman", "lady"), "teacher": ("teacher", "tutor"), "farmer": ("farmer",),
    "doctor": ("doctor",), "student": ("student", "pupil"), "king": ("king",),
}
NOUNS_THING = {
    "ball": ("ball",), "book": ("book",), "apple": ("apple",), "letter": ("letter",),
    "car": ("car",), "box": ("box",), "cake": ("cake",), "picture": ("picture", "photo"),
}
NOUNS_PLACE = {
    "garden": ("garden",), "park": ("park",), "house": ("house", "home"),
    "river": ("river",), "forest": ("forest", "woods"), "school": ("school",),
    "kitchen": ("kitchen",), "city": ("city", "town"),
}
ADJECTIVES = {
    "big": ("big", "large"), "small": ("small", "little"), "old": ("old",),
    "young": ("young",), "happy": ("happy", "glad"), "tired": ("tired",),
    "red": ("red",), "clever": ("clever", "smart"),
}
# concept -> ((past, base), ...) synonym forms
VERBS_TRANS = {
    "chase": (("chased", "chase"), ("pursued", "pursue")),
    "see": (("saw", "see"), ("noticed", "notice")),
    "find": (("found", "find"), ("discovered", "discover")),
    "help": (("helped", "help"), ("assisted", "assist")),
    "call": (("called", "call"),),
    "follow": (("followed", "follow"),),
    "visit": (("visited", "visit"),),
    "like": (("liked", "like"),),
    "carry": (("carried", "carry"),),
    "push": (("pushed", "push"),),
}
VERBS_INTRANS = {
    "sleep": (("slept", "sleep"),),
    "run": (("ran", "run"),),
    "wait": (("waited", "wait"),),
    "arrive": (("arrived", "arrive"),),
    "walk": (("walked", "walk"),),
}
VERBS_POSITIVE = {
    "laugh": (("laughed", "laugh"),),
    "smile": (("smiled", "smile"), ("grinned", "grin")),
    "sing": (("sang", "sing"),),
    "cheer": (("cheered", "cheer"),),
}
VERBS_NEGATIVE = {
    "cry": (("cried", "cry"), ("wept", "weep")),
    "frown": (("frowned", "frown"),),
    "sigh": (("sighed", "sigh"),),
    "complain": (("complained", "complain"),),
}
ADVERBS_MANNER = {
    "quickly": ("quickly", "rapidly"), "slowly": ("slowly",),
    "quietly": ("quietly", "silently"), "suddenly": ("suddenly",),
    "carefully": ("carefully",),
}
ADVERBS_TIME = {"yesterday": ("yesterday",), "today": ("today",), "tonight": ("tonight",)}
PREPOSITIONS = {"in": ("in",), "near": ("near", "beside"), "behind": ("behind",), "under": ("under",)}
SUBORDINATORS = {"because": ("because",), "although": ("although",), "while": ("while",)}
DETERMINERS = ("the", "a")

TRANSFORMATIONS = ("clause_swap", "topicalization", "question_formation", "cleft", "conjunction_split")

ALL_INTRANS = {**VERBS_INTRANS, **VERBS_POSITIVE, **VERBS_NEGATIVE}
ALL_VERBS = {**VERBS_TRANS, **ALL_INTRANS}


def lexicon() -> dict[str, str]:
    """Word -> internal preterminal symbol (each word has exactly one)."""
    lex: dict[str, str] = {}

    def put(words, sym):
        for w in words:
            assert lex.get(w, sym) == sym, w
            lex[w] = sym

    for table in (NOUNS_ANIMATE, NOUNS_THING, NOUNS_PLACE):
        for syns in table.values():
            put(syns, "NN")
    for syns in ADJECTIVES.values():
        put(syns, "JJ")
    for forms in VERBS_TRANS.values():
        put([p for p, _ in forms], "VBD:t")
        put([b for _, b in forms], "VB:t")
    for forms in ALL_INTRANS.values():
        put([p for p, _ in forms], "VBD:i")
        put([b for _, b in forms], "VB:i")
    for syns in ADVERBS_MANNER.values():
        put(syns, "RB:m")
    for syns in ADVERBS_TIME.values():
        put(syns, "RB:t")
    for syns in PREPOSITIONS.values():
        put(syns, "IN:p")
    for syns in SUBORDINATORS.values():
        put(syns, "IN:s")
    put(DETERMINERS, "DT")
    put(["and", "but"], "CC")
    put(["did"], "VBD:did")
    put(["was"], "VBD:was")
    put(["what"], "WP")
    put([","], ",")
    put(["."], ".")
    put(["?"], ".:q")
    return lex


# --------------------------------------------------------------------------
# semantic frames


@dataclass(frozen=True)
class NounPhrase:
    noun: str
    det: str = "the"
    adj: Optional[str] = None


@dataclass(frozen=True)
class Clause:
    subj: NounPhrase
    verb: str
    obj: Optional[NounPhrase] = None
    prep: Optional[str] = None
    place: Optional[NounPhrase] = None
    adverb: Optional[str] = None

    @property
    def transitive(self) -> bool:
        return self.obj is not None

    @property
    def has_pp(self) -> bool:
        return self.prep is not None

    @property
    def adverb_kind(self) -> Optional[str]:
        if self.adverb is None:
            return None
        return "time" if self.adverb in ADVERBS_TIME else "manner"


@dataclass(frozen=True)
class Frame:
    """kind: single | sub | coordvp | coordcl."""

    kind: str
    clauses: tuple
    connective: Optional[str] = None


FORMS = {
    "single": ("plain", "question", "topic_pp", "topic_advp", "cleft"),
    "sub": ("sbar_front", "sbar_back"),
    "coordvp": ("coordvp", "split"),
    "coordcl": ("coordcl",),
}


def form_applicable(frame: Frame, form: str) -> bool:
    if form not in FORMS[frame.kind]:
        return False
    c = frame.clauses[0]
    if form == "topic_pp":
        return c.has_pp
    if form == "topic_advp":
        return c.adverb is not None
    if form == "cleft":
        return c.transitive
    return True


# --------------------------------------------------------------------------
# realization


def _leaf(tag: str, word: str) -> ParseTree:
    return ParseTree(tag, (ParseTree(word, lexical=True),))


def _node(label: str, *children: ParseTree) -> ParseTree:
    return ParseTree(label, tuple(children))


class Realizer:
    """Turns frames into lexicalized trees; all surface randomness flows through ``rng``."""

    def __init__(self, rng: random.Random, vary: bool = True):
        self.rng = rng
        self.vary = vary

    def _pick(self, options):
        return self.rng.choice(options) if self.vary else options[0]

    def np(self, np: NounPhrase) -> ParseTree:
        table = {**NOUNS_ANIMATE, **NOUNS_THING, **NOUNS_PLACE}
        kids = [_leaf("DT", np.det)]
        if np.adj:
            kids.append(_leaf("JJ", self._pick(ADJECTIVES[np.adj])))
        kids.append(_leaf("NN", self._pick(table[np.noun])))
        return _node("NP", *kids)

    def pp(self, c: Clause) -> ParseTree:
        return _node("PP", _leaf("IN", self._pick(PREPOSITIONS[c.prep])), self.np(c.place))

    def advp(self, c: Clause) -> ParseTree:
        table = ADVERBS_TIME if c.adverb_kind == "time" else ADVERBS_MANNER
        return _node("ADVP", _leaf("RB", self._pick(table[c.adverb])))

    def vp(self, c: Clause, base: bool = False, gap: bool = False, drop: str = "") -> ParseTree:
        """Verb phrase; ``drop`` in {"", "pp", "advp"} omits a fronted modifier."""
        past, inf = self._pick(ALL_VERBS[c.verb])
        verb = _leaf("VB" if base else "VBD", inf if base else past)
        pre: list[ParseTree] = []
        post: list[ParseTree] = []
        mods: list[ParseTree] = []
        if c.has_pp and drop != "pp":
            mods.append(self.pp(c))
        if c.adverb is not None and drop != "advp":
            adv = self.advp(c)
            if c.adverb_kind == "manner" and self.vary and self.rng.random() < 0.5:
                pre.append(adv)
            else:
                mods.append(adv)
        if len(mods) == 2 and self.vary and self.rng.random() < 0.5:
            mods.reverse()
        post.extend(mods)
        core = [verb]
        if c.transitive and not gap:
            core.append(self.np(c.obj))
        return _node("VP", *pre, *core, *post)

    def clause(self, c: Clause, **kw) -> ParseTree:
        return _node("S", self.np(c.subj), self.vp(c, **kw))

    def realize(self, frame: Frame, form: str) -> ParseTree:
        if not form_applicable(frame, form):
            raise ValueError(f"form {form} not applicable to {frame.kind}")
        period = _leaf(".", ".")
        c = frame.clauses[0]
        if form == "plain":
            return _node("S", self.np(c.subj), self.vp(c), period)
        if form == "question":
            return _node("SQ", _leaf("VBD", "did"), self.np(c.subj), self.vp(c, base=True), _leaf(".", "?"))
        if form == "topic_pp":
            return _node("S", self.pp(c), _leaf(",", ","), self.np(c.subj), self.vp(c, drop="pp"), period)
        if form == "topic_advp":
            return _node("S", self.advp(c), _leaf(",", ","), self.np(c.subj), self.vp(c, drop="advp"), period)
        if form == "cleft":
            wh = _node("SBAR", _node("WHNP", _leaf("WP", "what")), self.clause(c, gap=True))
            return _node("S", wh, _node("VP", _leaf("VBD", "was"), self.np(c.obj)), period)
        if form in ("sbar_front", "sbar_back"):
            sub, main = frame.clauses
            sbar = _node("SBAR", _leaf("IN", self._pick(SUBORDINATORS[frame.connective])), self.clause(sub))
            if form == "sbar_front":
                return _node("S", sbar, _leaf(",", ","), self.np(main.subj), self.vp(main), period)
            return _node("S", self.np(main.subj), self.vp(main), sbar, period)
        if form == "coordvp":
            a, b = frame.clauses
            vp = _node("VP", self.vp(a), _leaf("CC", frame.connective), self.vp(b))
            return _node("S", self.np(a.subj), vp, period)
        if form in ("split", "coordcl"):
            a, b = frame.clauses
            return _node("S", self.clause(a), _leaf(",", ","), _leaf("CC", frame.connective), self.clause(b), period)
        raise ValueError(form)


# --------------------------------------------------------------------------
# sampling


class FrameSampler:
    def __init__(self, rng: random.Random):
        self.rng = rng

    def noun_phrase(self, table, adj_prob=0.3) -> NounPhrase:
        r = self.rng
        noun = r.choice(sorted(table))
        det = "the" if r.random() < 0.7 else "a"
        adj = r.choice(sorted(ADJECTIVES)) if r.random() < adj_prob else None
        return NounPhrase(noun, det, adj)

    def clause(self, transitive=None, pp_prob=0.4, adv_prob=0.4, verbs=None, subj=None) -> Clause:
        r = self.rng
        if verbs is None:
            if transitive is None:
                transitive = r.random() < 0.5
            verbs = VERBS_TRANS if transitive else ALL_INTRANS
        verb = r.choice(sorted(verbs))
        obj = self.noun_phrase({**NOUNS_ANIMATE, **NOUNS_THING}, 0.2) if verb in VERBS_TRANS else None
        prep = place = adverb = None
        if r.random() < pp_prob:
            prep = r.choice(sorted(PREPOSITIONS))
            place = self.noun_phrase(NOUNS_PLACE, 0.0)
        if r.random() < adv_prob:
            pool = ADVERBS_MANNER if r.random() < 0.6 else ADVERBS_TIME
            adverb = r.choice(sorted(pool))
        if subj is None:
            subj = self.noun_phrase(NOUNS_ANIMATE)
        return Clause(subj, verb, obj, prep, place, adverb)

    def frame(self, kind: str, need: str = "") -> Frame:
        r = self.rng
        if kind == "single":
            while True:
                c = self.clause(transitive=True if need == "cleft" else None)
                if need == "topic" and not (c.has_pp or c.adverb):
                    continue
                return Frame("single", (c,))
        if kind == "sub":
            a = self.clause(pp_prob=0.2, adv_prob=0.2)
            b = self.clause(pp_prob=0.2, adv_prob=0.2)
            return Frame("sub", (a, b), r.choice(sorted(SUBORDINATORS)))
        if kind == "coordvp":
            a = self.clause(pp_prob=0.2, adv_prob=0.2)
            b = self.clause(pp_prob=0.2, adv_prob=0.2, subj=a.subj)
            return Frame("coordvp", (a, b), "and")
        if kind == "coordcl":
            a = self.clause(pp_prob=0.2, adv_prob=0.2)
            b = self.clause(pp_prob=0.2, adv_prob=0.2)
            return Frame("coordcl", (a, b), r.choice(("and", "but")))
        raise ValueError(kind)


# (source form, target form, frame kind, sampler requirement) per transformation
TRANSFORMATION_FORMS = {
    "clause_swap": ("sbar_front", "sbar_back", "sub", ""),
    "topicalization": ("plain", "topic", "single", "topic"),
    "question_formation": ("plain", "question", "single", ""),
    "cleft": ("plain", "cleft", "single", "cleft"),
    "conjunction_split": ("coordvp", "split", "coordvp", ""),
}

# forms drawn for identity (lexical-only) paraphrases, with weights
IDENTITY_FORMS = (
    ("single", "plain", 6), ("single", "question", 1), ("single", "topic", 1),
    ("single", "cleft", 1), ("sub", "sbar_front", 2), ("sub", "sbar_back", 1),
    ("coordvp", "coordvp", 1), ("coordcl", "coordcl", 1),
)


@dataclass(frozen=True)
class SampledPair:
    transformation: str
    frame: Frame
    source_form: str
    target_form: str
    tree1: ParseTree
    tree2: ParseTree


def sample_pair(rng: random.Random, transformations, identity_rate: float) -> SampledPair:
    sampler = FrameSampler(rng)
    realizer = Realizer(rng)
    if rng.random() < identity_rate:
        kinds, forms, weights = zip(*IDENTITY_FORMS)
        k = rng.choices(range(len(IDENTITY_FORMS)), weights=weights)[0]
        kind, form = kinds[k], forms[k]
        frame = sampler.frame(kind, need=form if form in ("topic", "cleft") else "")
        src = tgt = _resolve_topic(rng, frame, form)
        name = "identity"
    else:
        name = rng.choice(sorted(transformations))
        src, tgt, kind, need = TRANSFORMATION_FORMS[name]
        frame = sampler.frame(kind, need)
        tgt = _resolve_topic(rng, frame, tgt)
    return SampledPair(name, frame, src, tgt, realizer.realize(frame, src), realizer.realize(frame, tgt))


def _resolve_topic(rng, frame: Frame, form: str) -> str:
    if form != "topic":
        return form
    options = [f for f in ("topic_pp", "topic_advp") if form_applicable(frame, f)]
    return rng.choice(options)


def sentence_of(tree: ParseTree) -> str:
    return " ".join(tree.words())


# --------------------------------------------------------------------------
# CKY parsing over the same grammar

_VP_RULES_CACHE: list | None = None


def _grammar_rules() -> list[tuple[str, tuple[str, ...]]]:
    rules: list[tuple[str, tuple[str, ...]]] = [
        ("NP", ("DT", "NN")),
        ("NP", ("DT", "JJ", "NN")),
        ("PP", ("IN:p", "NP")),
        ("ADVP:m", ("RB:m",)),
        ("ADVP:t", ("RB:t",)),
        ("WHNP", ("WP",)),
    ]
    # verb phrases: past, base (questions), gapped (cleft) -- each with optional
    # pre-verbal manner adverb and up to one PP and one adverb after the verb
    for lhs, verb_syms in (
        ("VP", (("VBD:t", "NP"), ("VBD:i",))),
        ("VP:q", (("VB:t", "NP"), ("VB:i",))),
        ("VP:gap", (("VBD:t",),)),
    ):
        for core in verb_syms:
            posts = [(), ("PP",), ("ADVP:m",), ("ADVP:t",), ("PP", "ADVP:m"), ("ADVP:m", "PP"),
                     ("PP", "ADVP:t"), ("ADVP:t", "PP")]
            for post in posts:
                rules.append((lhs, core + post))
            for post in ((), ("PP",)):
                rules.append((lhs, ("ADVP:m",) + core + post))
    rules += [
        ("VP:conj", ("VP", "CC", "VP")),
        ("S:in", ("NP", "VP")),
        ("S:gap", ("NP", "VP:gap")),
        ("SBAR:sub", ("IN:s", "S:in")),
        ("SBAR:wh", ("WHNP", "S:gap")),
        ("VP:was", ("VBD:was", "NP")),
        ("ROOT", ("S:plain",)),
        ("ROOT", ("SQ",)),
        ("S:plain", ("NP", "VP", ".")),
        ("S:plain", ("NP", "VP:conj", ".")),
        ("SQ", ("VBD:did", "NP", "VP:q", ".:q")),
        ("S:plain", ("PP", ",", "NP", "VP", ".")),
        ("S:plain", ("ADVP:m", ",", "NP", "VP", ".")),
        ("S:plain", ("ADVP:t", ",", "NP", "VP", ".")),
        ("S:plain", ("SBAR:wh", "VP:was", ".")),
        ("S:plain", ("SBAR:sub", ",", "NP", "VP", ".")),
        ("S:plain", ("NP", "VP", "SBAR:sub", ".")),
        ("S:plain", ("S:in", ",", "CC", "S:in", ".")),
    ]
    return rules


def _public_label(sym: str) -> str:
    return sym.split(":", 1)[0]


class CkyParser:
    """Exhaustive CKY over the binarized toy grammar.

    Returns the first derivation found for ROOT (the grammar is unambiguous on
    everything the realizer emits) or ``None`` for ungrammatical input.
    """

    def __init__(self):
        self.lex = lexicon()
        self.unary: dict[str, list[str]] = {}
        self.binary: dict[tuple[str, str], list[str]] = {}
        for lhs, rhs in _grammar_rules():
            if len(rhs) == 1:
                self.unary.setdefault(rhs[0], []).append(lhs)
                continue
            syms = list(rhs)
            left = syms[0]
            for k in range(1, len(syms) - 1):
                inter = f"@{lhs}->{' '.join(rhs)}|{k}"
                self.binary.setdefault((left, syms[k]), []).append(inter)
                left = inter
            self.binary.setdefault((left, syms[-1]), []).append(lhs)

    def _close(self, cell: dict) -> None:
        agenda = list(cell)
        while agenda:
            sym = agenda.pop()
            for parent in self.unary.get(sym, ()):
                if parent not in cell:
                    cell[parent] = ("u", sym)
                    agenda.append(parent)

    def parse(self, sentence: str) -> Optional[ParseTree]:
        words = sentence.split()
        n = len(words)
        if n == 0 or any(w not in self.lex for w in words):
            return None
        chart = [[None] * (n + 1) for _ in range(n + 1)]
        for i, w in enumerate(words):
            cell = {self.lex[w]: ("w", w)}
            self._close(cell)
            chart[i][i + 1] = cell
        for span in range(2, n + 1):
            for i in range(0, n - span + 1):
                j = i + span
                cell: dict = {}
                for k in range(i + 1, j):
                    left, right = chart[i][k], chart[k][j]
                    if not left or not right:
                        continue
                    for b in left:
                        for c in right:
                            for a in self.binary.get((b, c), ()):
                                if a not in cell:
                                    cell[a] = ("b", k, b, c)
                self._close(cell)
                chart[i][j] = cell
        if "ROOT" not in chart[0][n]:
            return None
        return self._build(chart, 0, n, "ROOT")[0]

    def _build(self, chart, i, j, sym) -> list[ParseTree]:
        back = chart[i][j][sym]
        if back[0] == "w":
            kids = [ParseTree(back[1], lexical=True)]
        elif back[0] == "u":
            kids = self._build(chart, i, j, back[1])
        else:
            _, k, b, c = back
            kids = self._build(chart, i, k, b) + self._build(chart, k, j, c)
        if sym.startswith("@") or sym == "ROOT":
            return kids
        return [ParseTree(_public_label(sym), tuple(kids))]
