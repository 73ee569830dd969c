"""Syntactic-control metrics: exact template match against the target or the input."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .checkpoint import Checkpoint
from .corpus import ParaphraseExample
from .errors import ScpnError
from .parsegen import NoWellFormedHypothesis, generate_full_parse
from .paraphraser import paraphrase
from .syntax import ParseTree, extract_template, template_match

log = logging.getLogger(__name__)

SentenceParser = Callable[[str], Optional[ParseTree]]


class MissingParse(ScpnError):
    pass


def same_template_rate(
    outputs: Sequence[Optional[ParseTree]],
    references: Sequence[ParseTree],
    missing: str = "error",
) -> float:
    """100 x the share of outputs whose top two levels equal the reference's.

    ``missing="mismatch"`` scores an unparsed output (None) as a miss instead
    of raising :class:`MissingParse`.
    """
    if len(outputs) != len(references):
        raise ValueError("outputs and references differ in length")
    if not outputs:
        raise ValueError("nothing to score")
    hits = 0
    for out, ref in zip(outputs, references):
        if out is None:
            if missing == "error":
                raise MissingParse("an output has no parse")
            continue
        hits += template_match(out, ref)
    return 100.0 * hits / len(outputs)


@dataclass
class ControlRecord:
    s1: str
    s2: str
    template: str
    gold_output: str = ""
    generated_output: str = ""
    generated_parse_conforms: bool = False
    gold_match: bool = False
    generated_match: bool = False
    error: str = ""


@dataclass
class TemplateMatchReport:
    gold_parse: float
    generated_parse: float
    parse_generator: float
    n: int
    records: list = field(default_factory=list)

    def table(self) -> str:
        rows = [
            ("SCPN w/ gold parse", self.gold_parse),
            ("SCPN w/ generated parse", self.generated_parse),
            ("Parse generator", self.parse_generator),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{'Model':<{width}}  Parse Acc.", "-" * (width + 12)]
        lines += [f"{name:<{width}}  {value:10.1f}" for name, value in rows]
        lines.append(f"(n = {self.n})")
        return "\n".join(lines)


def top_output(scpn: Checkpoint, sentence: str, parse: ParseTree, beam_size=None) -> str:
    cands = paraphrase(scpn, sentence, parse, beam_size)
    return cands[0].text if cands else ""


def evaluate_template_match(
    scpn: Checkpoint,
    generator: Checkpoint,
    examples: Sequence[ParaphraseExample],
    parser: SentenceParser,
    beam_size: Optional[int] = None,
) -> TemplateMatchReport:
    """Gold-parse vs generated-parse template accuracy, plus parse-generator conformity.

    Outputs the parser cannot analyse count as misses.
    """
    gold_out, gen_out, conform, refs = [], [], [], []
    records = []
    for ex in examples:
        rec = ControlRecord(ex.s1, ex.s2, ex.t2.serialize())
        rec.gold_output = top_output(scpn, ex.s1, ex.p2, beam_size)
        gold_tree = parser(rec.gold_output) if rec.gold_output else None
        gen_tree = None
        try:
            g = generate_full_parse(generator, ex.p1, ex.t2, beam_size)
            rec.generated_parse_conforms = g.conforms
            rec.generated_output = top_output(scpn, ex.s1, g.tree, beam_size)
            gen_tree = parser(rec.generated_output) if rec.generated_output else None
        except NoWellFormedHypothesis as err:
            rec.error = str(err)
        rec.gold_match = gold_tree is not None and template_match(gold_tree, ex.p2)
        rec.generated_match = gen_tree is not None and template_match(gen_tree, ex.p2)
        gold_out.append(gold_tree)
        gen_out.append(gen_tree)
        conform.append(rec.generated_parse_conforms)
        refs.append(ex.p2)
        records.append(rec)
    return TemplateMatchReport(
        same_template_rate(gold_out, refs, missing="mismatch"),
        same_template_rate(gen_out, refs, missing="mismatch"),
        100.0 * sum(conform) / len(conform),
        len(examples),
        records,
    )


def input_template_rate(
    scpn: Checkpoint,
    examples: Sequence[ParaphraseExample],
    parser: SentenceParser,
    beam_size: Optional[int] = None,
) -> float:
    """How often the top paraphrase keeps the input sentence's template (target parse = p2)."""
    outs = []
    for ex in examples:
        text = top_output(scpn, ex.s1, ex.p2, beam_size)
        outs.append(parser(text) if text else None)
    return same_template_rate(outs, [ex.p1 for ex in examples], missing="mismatch")


def template_of(tree: Optional[ParseTree]) -> str:
    return extract_template(tree).serialize() if tree is not None else "-"
