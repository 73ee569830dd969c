"""Template -> full parse generation and the two-stage paraphrase pipeline.

The parse generator is an :class:`ScpnModel` whose source is the linearized
input parse, whose control sequence is the target template, and whose output
is the linearized target parse.  It copies from the input parse.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from .checkpoint import Checkpoint
from .corpus import ParaphraseExample, Vocab
from .errors import ScpnError
from .model import Hypothesis, Instance, ScpnConfig, ScpnModel, beam_search, make_instance
from .paraphraser import Candidate, paraphrase
from .syntax import ParseError, ParseTree, Template, extract_template, linearize, tokens_to_tree
from .training import train_model

log = logging.getLogger(__name__)


class NoWellFormedHypothesis(ScpnError):
    pass


@dataclass(frozen=True)
class ParseGenInstance:
    input_tokens: tuple[str, ...]
    control_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...] = ()

    @classmethod
    def from_example(cls, ex: ParaphraseExample) -> ParseGenInstance:
        return cls(tuple(linearize(ex.p1)), tuple(ex.t2.tokens()), tuple(linearize(ex.p2)))

    def encode(self, vocab: Vocab, use_copy: bool = True) -> Instance:
        tgt = list(self.target_tokens) if self.target_tokens else None
        return make_instance(vocab, vocab, self.input_tokens, self.control_tokens, tgt, use_copy)


def parsegen_instances(examples: Sequence[ParaphraseExample], vocab: Vocab, config: ScpnConfig) -> list[Instance]:
    out = []
    for ex in examples:
        inst = ParseGenInstance.from_example(ex).encode(vocab, config.use_copy)
        if len(inst.src_ids) <= config.max_parse_len and len(inst.tgt_ids) <= config.max_decode_len:
            out.append(inst)
    return out


def train_parse_generator(
    examples: Sequence[ParaphraseExample],
    config: ScpnConfig,
    parse_vocab: Vocab,
    model: Optional[ScpnModel] = None,
    on_epoch=None,
) -> Checkpoint:
    """Same architecture and training loop as the paraphraser, trained on
    (linearized p1, template of p2) -> linearized p2."""
    n = len(parse_vocab)
    # inputs and outputs are both linearized parses, so both take the parse cap
    config = dataclasses.replace(
        config,
        kind="parsegen",
        word_vocab_size=n,
        parse_vocab_size=n,
        max_src_len=config.max_parse_len,
        max_decode_len=config.max_parse_len,
    )
    if model is None:
        model = ScpnModel(config)
    instances = parsegen_instances(examples, parse_vocab, config)
    history = train_model(model, instances, config, on_epoch)
    return Checkpoint(model, parse_vocab, parse_vocab, None, history)


@dataclass
class GeneratedParse:
    tree: ParseTree
    conforms: bool  # template of ``tree`` equals the requested template
    rank: int  # position of the chosen hypothesis in the beam
    score: float


def select_well_formed(
    hyps: Sequence[Hypothesis], vocab: Vocab, template: Template, normalize: bool = True
) -> GeneratedParse:
    """Highest-ranked hypothesis whose tokens form one balanced tree."""
    for rank, h in enumerate(hyps):
        toks = vocab.decode(i for i in h.output_ids() if i < len(vocab))
        if len(toks) != len(h.output_ids()):
            continue
        try:
            tree = tokens_to_tree(toks)
        except ParseError:
            continue
        return GeneratedParse(tree, extract_template(tree) == template, rank, h.rank_score(normalize))
    raise NoWellFormedHypothesis(f"none of {len(hyps)} hypotheses is a well-formed parse")


def generate_full_parse(
    generator: Checkpoint,
    p1: ParseTree,
    t2: Template,
    beam_size: Optional[int] = None,
    max_len: Optional[int] = None,
) -> GeneratedParse:
    inst = ParseGenInstance(tuple(linearize(p1)), tuple(t2.tokens())).encode(
        generator.parse_vocab, generator.config.use_copy
    )
    hyps = beam_search(generator.model, inst, beam_size, max_len)
    return select_well_formed(hyps, generator.parse_vocab, t2, generator.config.length_norm)


def paraphrase_with_template(
    scpn: Checkpoint,
    generator: Optional[Checkpoint],
    s1: str,
    p1: ParseTree,
    t2: Template,
    beam_size: Optional[int] = None,
    gold_parse: Optional[ParseTree] = None,
    parse_beam_size: Optional[int] = None,
) -> list[Candidate]:
    """Template -> full parse -> ranked paraphrases.  ``gold_parse`` skips the
    parse generator and feeds that parse straight to the paraphraser."""
    if gold_parse is not None:
        target = gold_parse
    else:
        if generator is None:
            raise ScpnError("a parse generator is required without a gold parse")
        target = generate_full_parse(generator, p1, t2, parse_beam_size or beam_size).tree
    cands = paraphrase(scpn, s1, target, beam_size)
    if beam_size == 1:
        cands = cands[:1]
    return cands
