"""Syntactically controlled paraphrase network.

A bidirectional LSTM reads the source tokens, a unidirectional LSTM reads the
target parse tokens, and a two-layer LSTM decoder consumes, at every step,
the previous word embedding, an attention average over the source states and
an attention average over the parse states.  Output words come from a mixture
of a vocabulary softmax and a copy distribution over source positions.

The parse generator is the same network with parse tokens on every side.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import BOS, EOS, PAD, UNK, Vocab
from .errors import NonFiniteLoss, ScpnError, ShapeMismatch
from .net import BilinearAttention, LstmCell, init_uniform, lstm_step, run_lstm

LOG_FLOOR = 1e-12


class EmptyInput(ScpnError):
    pass


class TooLong(ScpnError):
    pass


@dataclass
class ScpnConfig:
    kind: str = "scpn"  # "scpn" | "parsegen"
    word_vocab_size: int = 0
    parse_vocab_size: int = 0
    emb_size: int = 64
    parse_emb_size: int = 32
    enc_hidden: int = 64  # per direction
    parse_hidden: int = 64
    dec_hidden: int = 128
    dec_layers: int = 2
    beam_size: int = 10
    max_decode_len: int = 60
    use_parse_attention: bool = True
    use_copy: bool = True
    length_norm: bool = True
    seed: int = 0
    optimizer: str = "adam"
    lr: float = 1e-3
    clip: float = 5.0
    batch_size: int = 32
    epochs: int = 10
    max_steps: int = 0  # 0: no step cap
    max_src_len: int = 60
    max_parse_len: int = 200

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.dec_layers < 1:
            raise ValueError("dec_layers must be >= 1")
        if self.kind not in ("scpn", "parsegen"):
            raise ValueError(f"unknown model kind {self.kind!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ScpnConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Instance:
    """One tensorizable example.  Target ids live in the extended vocabulary:
    ids >= vocab size index ``oovs`` (source words missing from the vocab)."""

    src_ids: list[int]
    src_ext: list[int]
    oovs: list[str]
    parse_ids: list[int]
    tgt_ids: list[int] = field(default_factory=list)  # ends with EOS

    @property
    def tgt_inputs(self) -> list[int]:
        return [BOS] + self.tgt_ids[:-1]


def make_instance(
    word_vocab: Vocab,
    parse_vocab: Vocab,
    src: Sequence[str],
    parse: Sequence[str],
    tgt: Optional[Sequence[str]] = None,
    use_copy: bool = True,
) -> Instance:
    oovs: list[str] = []
    src_ids, src_ext = [], []
    for tok in src:
        i = word_vocab.id(tok)
        src_ids.append(i)
        if i == UNK and use_copy:
            if tok not in oovs:
                oovs.append(tok)
            src_ext.append(len(word_vocab) + oovs.index(tok))
        else:
            src_ext.append(i)
    tgt_ids = []
    if tgt is not None:
        for tok in tgt:
            i = word_vocab.id(tok)
            if i == UNK and tok in oovs:
                i = len(word_vocab) + oovs.index(tok)
            tgt_ids.append(i)
        tgt_ids.append(EOS)
    return Instance(src_ids, src_ext, oovs, parse_vocab.encode(parse), tgt_ids)


def _pad(seqs, value=PAD):
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), value, dtype=torch.long)
    for k, s in enumerate(seqs):
        out[k, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


@dataclass
class Batch:
    src: torch.Tensor
    src_ext: torch.Tensor
    src_mask: torch.Tensor
    parse: torch.Tensor
    parse_mask: torch.Tensor
    n_ext: int
    tgt_in: Optional[torch.Tensor] = None
    tgt_out: Optional[torch.Tensor] = None
    tgt_mask: Optional[torch.Tensor] = None


def collate(instances: Sequence[Instance]) -> Batch:
    src = _pad([i.src_ids for i in instances])
    parse = _pad([i.parse_ids for i in instances])
    batch = Batch(
        src=src,
        src_ext=_pad([i.src_ext for i in instances]),
        src_mask=_pad([[1] * len(i.src_ids) for i in instances], 0),
        parse=parse,
        parse_mask=_pad([[1] * len(i.parse_ids) for i in instances], 0),
        n_ext=max(len(i.oovs) for i in instances),
    )
    if all(i.tgt_ids for i in instances):
        batch.tgt_in = _pad([i.tgt_inputs for i in instances])
        batch.tgt_out = _pad([i.tgt_ids for i in instances])
        batch.tgt_mask = _pad([[1] * len(i.tgt_ids) for i in instances], 0)
    return batch


@dataclass
class EncoderOutputs:
    sent_states: torch.Tensor  # (B, S, 2*enc_hidden): forward || backward
    sent_mask: torch.Tensor
    parse_states: Optional[torch.Tensor]  # (B, P, parse_hidden)
    parse_mask: Optional[torch.Tensor]
    src_ext: torch.Tensor
    n_ext: int
    final: torch.Tensor  # (B, 2*enc_hidden [+ parse_hidden]): decoder initialisation input

    def expand(self, k: int) -> EncoderOutputs:
        """Repeat a single-example encoding ``k`` times (beam rows)."""
        rep = lambda t: None if t is None else t.expand(k, *t.shape[1:])
        return EncoderOutputs(
            rep(self.sent_states), rep(self.sent_mask), rep(self.parse_states),
            rep(self.parse_mask), rep(self.src_ext), self.n_ext, rep(self.final),
        )


@dataclass
class DecoderState:
    h: list  # per layer (B, dec_hidden)
    c: list
    prev_emb: Optional[torch.Tensor] = None  # w_{t-1}
    sent_context: Optional[torch.Tensor] = None  # a_t
    parse_context: Optional[torch.Tensor] = None  # z_t

    @property
    def h_top(self) -> torch.Tensor:
        return self.h[-1]

    def select(self, rows) -> DecoderState:
        idx = torch.as_tensor(rows, dtype=torch.long)
        pick = lambda t: None if t is None else t.index_select(0, idx)
        return DecoderState(
            [pick(h) for h in self.h], [pick(c) for c in self.c],
            pick(self.prev_emb), pick(self.sent_context), pick(self.parse_context),
        )


class ScpnModel(nn.Module):
    def __init__(self, config: ScpnConfig):
        super().__init__()
        self.config = config
        c = config
        if c.word_vocab_size <= 4 or c.parse_vocab_size <= 4:
            raise ValueError("vocab sizes must be set in the config")
        self.word_emb = nn.Embedding(c.word_vocab_size, c.emb_size)
        self.enc_fwd = LstmCell(c.emb_size, c.enc_hidden)
        self.enc_bwd = LstmCell(c.emb_size, c.enc_hidden)
        src_dim = 2 * c.enc_hidden
        dec_in = c.emb_size + src_dim
        bridge_in = src_dim
        if c.use_parse_attention:
            self.parse_emb = nn.Embedding(c.parse_vocab_size, c.parse_emb_size)
            self.parse_enc = LstmCell(c.parse_emb_size, c.parse_hidden)
            self.attn_parse = BilinearAttention(c.dec_hidden, c.parse_hidden)
            dec_in += c.parse_hidden
            # the first parse-attention query must already know the target parse
            bridge_in += c.parse_hidden
        self.bridge_h = nn.Linear(bridge_in, c.dec_layers * c.dec_hidden)
        self.bridge_c = nn.Linear(bridge_in, c.dec_layers * c.dec_hidden)
        self.attn_src = BilinearAttention(c.dec_hidden, src_dim)
        self.dec_cells = nn.ModuleList(
            [LstmCell(dec_in, c.dec_hidden)]
            + [LstmCell(c.dec_hidden, c.dec_hidden) for _ in range(c.dec_layers - 1)]
        )
        self.out = nn.Linear(c.dec_hidden + src_dim, c.word_vocab_size)
        if c.use_copy:
            self.gen_gate = nn.Linear(c.dec_hidden + src_dim + c.emb_size, 1)
        init_uniform(self, c.seed)

    @property
    def dtype(self):
        return self.word_emb.weight.dtype

    # ------------------------------------------------------------------
    def encode(self, batch: Batch) -> EncoderOutputs:
        c = self.config
        if batch.src.shape[1] == 0 or batch.parse.shape[1] == 0:
            raise EmptyInput("source and parse must be nonempty")
        if batch.src.shape[1] > c.max_src_len:
            raise TooLong(f"source has {batch.src.shape[1]} tokens (cap {c.max_src_len})")
        if batch.parse.shape[1] > c.max_parse_len:
            raise TooLong(f"parse has {batch.parse.shape[1]} tokens (cap {c.max_parse_len})")
        emb = self.word_emb(batch.src)
        fwd, (hf, _) = run_lstm(self.enc_fwd, emb, batch.src_mask)
        bwd, (hb, _) = run_lstm(self.enc_bwd, emb, batch.src_mask, reverse=True)
        parse_states = None
        final = [hf, hb]
        if c.use_parse_attention:
            pemb = self.parse_emb(batch.parse)
            parse_states, (hp, _) = run_lstm(self.parse_enc, pemb, batch.parse_mask)
            final.append(hp)
        return EncoderOutputs(
            torch.cat([fwd, bwd], dim=2), batch.src_mask,
            parse_states, batch.parse_mask if c.use_parse_attention else None,
            batch.src_ext, batch.n_ext, torch.cat(final, dim=1),
        )

    def initial_state(self, enc: EncoderOutputs) -> DecoderState:
        c = self.config
        hs = torch.tanh(self.bridge_h(enc.final)).split(c.dec_hidden, dim=1)
        cs = self.bridge_c(enc.final).split(c.dec_hidden, dim=1)
        return DecoderState(list(hs), list(cs))

    def decode_step(self, state: DecoderState, enc: EncoderOutputs, prev_ids: torch.Tensor):
        """Next-token distribution over vocab + source OOVs, and the new state."""
        c = self.config
        if prev_ids.shape[0] != state.h_top.shape[0]:
            raise ShapeMismatch("previous-token batch differs from state batch")
        in_vocab = prev_ids.masked_fill(prev_ids >= c.word_vocab_size, UNK)
        w = self.word_emb(in_vocab)
        query = state.h_top
        a, alpha = self.attn_src(query, enc.sent_states, enc.sent_states, enc.sent_mask)
        parts = [w, a]
        z = None
        if c.use_parse_attention:
            z, _ = self.attn_parse(query, enc.parse_states, enc.parse_states, enc.parse_mask)
            parts.append(z)
        x = torch.cat(parts, dim=1)
        hs, cs = [], []
        for layer, cell in enumerate(self.dec_cells):
            h, cc = lstm_step(cell, x, state.h[layer], state.c[layer])
            hs.append(h)
            cs.append(cc)
            x = h
        feats = torch.cat([x, a], dim=1)
        p_vocab = torch.softmax(self.out(feats), dim=1)
        if c.use_copy:
            p_gen = torch.sigmoid(self.gen_gate(torch.cat([x, a, w], dim=1)))
            probs = p_gen * p_vocab
            if enc.n_ext:
                probs = torch.cat([probs, probs.new_zeros(probs.shape[0], enc.n_ext)], dim=1)
            probs = probs.scatter_add(1, enc.src_ext, (1 - p_gen) * alpha)
        else:
            probs = p_vocab
        return probs, DecoderState(hs, cs, w, a, z)

    def batch_loss(self, batch: Batch) -> torch.Tensor:
        """Mean over instances of the per-instance mean target NLL (teacher forcing)."""
        enc = self.encode(batch)
        state = self.initial_state(enc)
        steps = batch.tgt_in.shape[1]
        nll = []
        for t in range(steps):
            probs, state = self.decode_step(state, enc, batch.tgt_in[:, t])
            p = probs.gather(1, batch.tgt_out[:, t : t + 1]).squeeze(1)
            nll.append(-torch.log(p.clamp_min(LOG_FLOOR)))
        nll = torch.stack(nll, dim=1) * batch.tgt_mask
        per_instance = nll.sum(1) / batch.tgt_mask.sum(1)
        loss = per_instance.mean()
        if not torch.isfinite(loss):
            raise NonFiniteLoss("non-finite sequence loss")
        return loss


def encode_inputs(model: ScpnModel, instance: Instance) -> EncoderOutputs:
    return model.encode(collate([instance]))


def decode_step(model: ScpnModel, state: DecoderState, enc: EncoderOutputs, prev_id):
    prev = torch.as_tensor([prev_id] if isinstance(prev_id, int) else prev_id, dtype=torch.long)
    return model.decode_step(state, enc, prev)


def sequence_nll(model: ScpnModel, instance: Instance) -> torch.Tensor:
    if not instance.tgt_ids:
        raise EmptyInput("target is empty")
    return model.batch_loss(collate([instance]))


# ----------------------------------------------------------------------
# decoding


@dataclass
class Hypothesis:
    tokens: list[int]  # BOS-prefixed
    score: float  # summed log-probability
    finished: bool = False
    state: Optional[DecoderState] = None

    @property
    def length(self) -> int:
        return len(self.tokens) - 1

    def output_ids(self) -> list[int]:
        out = self.tokens[1:]
        return out[:-1] if out and out[-1] == EOS else out

    def rank_score(self, normalize: bool) -> float:
        return self.score / max(self.length, 1) if normalize else self.score


def _lex_ranks(seqs: list[list[int]]) -> np.ndarray:
    order = sorted(range(len(seqs)), key=lambda k: seqs[k])
    ranks = np.empty(len(seqs), dtype=np.int64)
    ranks[order] = np.arange(len(seqs))
    return ranks


@torch.no_grad()
def beam_search(
    model: ScpnModel,
    instance: Instance,
    beam_size: Optional[int] = None,
    max_len: Optional[int] = None,
    normalize: Optional[bool] = None,
) -> list[Hypothesis]:
    """Beam search over the mixed distribution.

    At each step the ``beam_size`` best expansions (by summed log-probability,
    ties by token sequence) survive; those ending in EOS retire.  Search stops
    once ``beam_size`` hypotheses have retired and no live hypothesis can
    still outrank them, or ``max_len`` tokens were produced.  Results are
    ranked by length-normalized score unless ``normalize`` is False.
    """
    c = model.config
    beam = beam_size or c.beam_size
    max_len = max_len or c.max_decode_len
    normalize = c.length_norm if normalize is None else normalize
    enc = encode_inputs(model, instance)
    state = model.initial_state(enc)
    live_tokens = [[BOS]]
    live_scores = np.zeros(1)
    finished: list[Hypothesis] = []
    for step in range(max_len):
        k = len(live_tokens)
        probs, new_state = model.decode_step(
            state, enc.expand(k), torch.tensor([t[-1] for t in live_tokens], dtype=torch.long)
        )
        with np.errstate(divide="ignore"):
            logp = np.log(probs.double().numpy())
        cand = live_scores[:, None] + logp
        vext = cand.shape[1]
        parent = np.repeat(np.arange(k), vext)
        token = np.tile(np.arange(vext), k)
        flat = cand.reshape(-1)
        prank = _lex_ranks(live_tokens)[parent]
        order = np.lexsort((token, prank, -flat))
        order = [o for o in order[:beam] if np.isfinite(flat[o])]
        keep_rows, keep_tokens, keep_scores = [], [], []
        for o in order:
            seq = live_tokens[parent[o]] + [int(token[o])]
            if token[o] == EOS:
                finished.append(Hypothesis(seq, float(flat[o]), True))
            else:
                keep_rows.append(int(parent[o]))
                keep_tokens.append(seq)
                keep_scores.append(float(flat[o]))
        if not keep_rows:
            break
        state = new_state.select(keep_rows)
        live_tokens, live_scores = keep_tokens, np.array(keep_scores)
        if len(finished) >= beam and not _live_can_improve(finished, live_tokens, live_scores, beam, normalize):
            break
        if step == max_len - 1:
            for r, (seq, sc) in enumerate(zip(live_tokens, live_scores)):
                finished.append(Hypothesis(seq, float(sc), False, state.select([r])))
    finished.sort(key=lambda h: (-h.rank_score(normalize), h.tokens))
    return finished[:beam]


def _live_can_improve(finished, live_tokens, live_scores, beam: int, normalize: bool) -> bool:
    # Scores only fall as tokens are added, so an unnormalized live score bounds
    # every continuation; under normalization the current average is used as
    # the estimate.
    worst = sorted(h.rank_score(normalize) for h in finished)[-beam]
    for seq, sc in zip(live_tokens, live_scores):
        est = sc / max(len(seq) - 1, 1) if normalize else sc
        if est > worst:
            return True
    return False


@torch.no_grad()
def greedy_decode(model: ScpnModel, instance: Instance, max_len: Optional[int] = None) -> list[int]:
    """Argmax decoding; returns generated ids (EOS excluded)."""
    max_len = max_len or model.config.max_decode_len
    enc = encode_inputs(model, instance)
    state = model.initial_state(enc)
    prev = BOS
    out = []
    for _ in range(max_len):
        probs, state = model.decode_step(state, enc, torch.tensor([prev]))
        prev = int(torch.argmax(probs[0]))
        if prev == EOS:
            break
        out.append(prev)
    return out


def ids_to_tokens(ids: Sequence[int], vocab: Vocab, oovs: Sequence[str]) -> list[str]:
    n = len(vocab)
    return [vocab.itos[i] if i < n else oovs[i - n] for i in ids]
