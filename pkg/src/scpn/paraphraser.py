"""Turning paraphrase pairs into model instances, training the paraphraser and
decoding paraphrases for a sentence + target parse."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from .checkpoint import Checkpoint
from .corpus import ParaphraseExample, Vocab, build_vocab, normalize
from .model import Hypothesis, Instance, ScpnConfig, ScpnModel, beam_search, ids_to_tokens, make_instance
from .subword import DEFAULT_MERGES, BpeModel, DanglingContinuation, bpe_apply, bpe_restore, bpe_train
from .syntax import ParseTree, linearize
from .training import train_model

log = logging.getLogger(__name__)


@dataclass
class Candidate:
    text: str
    score: float
    parse: Optional[ParseTree] = None  # the target parse fed to the paraphraser
    tokens: tuple = ()


def restore(tokens: Sequence[str], marker: str = "@@") -> str:
    """BPE restore that tolerates a dangling final piece (closes the word)."""
    try:
        return bpe_restore(list(tokens), marker)
    except DanglingContinuation:
        return bpe_restore(list(tokens[:-1]) + [tokens[-1][: -len(marker)]], marker)


def build_vocabularies(
    examples: Sequence[ParaphraseExample],
    num_merges: int = DEFAULT_MERGES,
    min_freq: int = 1,
    bpe: Optional[BpeModel] = None,
) -> tuple[BpeModel, Vocab, Vocab]:
    """One BPE model and word vocab shared by both sides; one parse vocab."""
    sentences = [ex.s1 for ex in examples] + [ex.s2 for ex in examples]
    if bpe is None:
        bpe = bpe_train(sentences, num_merges)
    word_vocab = build_vocab((bpe_apply(bpe, s) for s in sentences), min_freq)
    parse_seqs = []
    for ex in examples:
        parse_seqs += [linearize(ex.p1), linearize(ex.p2), ex.t2.tokens()]
    parse_vocab = build_vocab(parse_seqs, 1)
    return bpe, word_vocab, parse_vocab


def scpn_instance(
    ckpt_or_parts, sentence: str, parse: ParseTree, target: Optional[str] = None
) -> Instance:
    bpe, word_vocab, parse_vocab, use_copy = _parts(ckpt_or_parts)
    src = bpe_apply(bpe, normalize(sentence))
    tgt = bpe_apply(bpe, normalize(target)) if target is not None else None
    return make_instance(word_vocab, parse_vocab, src, linearize(parse), tgt, use_copy)


def _parts(obj):
    if isinstance(obj, Checkpoint):
        return obj.bpe, obj.word_vocab, obj.parse_vocab, obj.config.use_copy
    return obj


def scpn_instances(
    examples: Sequence[ParaphraseExample],
    bpe: BpeModel,
    word_vocab: Vocab,
    parse_vocab: Vocab,
    config: ScpnConfig,
) -> list[Instance]:
    """Instances (s1, p2) -> s2, dropping pairs beyond the length caps."""
    out = []
    dropped = 0
    parts = (bpe, word_vocab, parse_vocab, config.use_copy)
    for ex in examples:
        inst = scpn_instance(parts, ex.s1, ex.p2, ex.s2)
        if (
            len(inst.src_ids) > config.max_src_len
            or len(inst.parse_ids) > config.max_parse_len
            or len(inst.tgt_ids) > config.max_decode_len
        ):
            dropped += 1
            continue
        out.append(inst)
    if dropped:
        log.info("dropped %d pairs over the length caps", dropped)
    return out


def train_scpn(
    examples: Sequence[ParaphraseExample],
    config: ScpnConfig,
    bpe: BpeModel,
    word_vocab: Vocab,
    parse_vocab: Vocab,
    model: Optional[ScpnModel] = None,
    on_epoch=None,
) -> Checkpoint:
    config = dataclasses.replace(
        config, kind="scpn", word_vocab_size=len(word_vocab), parse_vocab_size=len(parse_vocab)
    )
    if model is None:
        model = ScpnModel(config)
    instances = scpn_instances(examples, bpe, word_vocab, parse_vocab, config)
    history = train_model(model, instances, config, on_epoch)
    return Checkpoint(model, word_vocab, parse_vocab, bpe, history)


def hypothesis_text(ckpt: Checkpoint, hyp: Hypothesis, instance: Instance) -> tuple[str, list[str]]:
    toks = ids_to_tokens(hyp.output_ids(), ckpt.word_vocab, instance.oovs)
    toks = [t for t in toks if t not in ("<pad>", "<s>", "</s>")]
    return restore(toks) if toks else "", toks


def paraphrase(
    ckpt: Checkpoint,
    sentence: str,
    parse: ParseTree,
    beam_size: Optional[int] = None,
    max_len: Optional[int] = None,
) -> list[Candidate]:
    """Ranked paraphrases of ``sentence`` conditioned on a full target parse."""
    inst = scpn_instance(ckpt, sentence, parse)
    hyps = beam_search(ckpt.model, inst, beam_size, max_len)
    out = []
    seen = set()
    for h in hyps:
        text, toks = hypothesis_text(ckpt, h, inst)
        if not text or text in seen:
            continue
        seen.add(text)
        out.append(Candidate(text, h.rank_score(ckpt.config.length_norm), parse, tuple(toks)))
    return out
