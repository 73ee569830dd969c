import random

import pytest
import torch

from scpn.corpus import Vocab
from scpn.model import ScpnConfig, ScpnModel, make_instance
from scpn.syntax import ParseTree

torch.set_num_threads(1)

WORDS = ["the", "dog", "cat", "saw", "ran", "a", "bird", "sang", ".", "?"]
PARSE_TOKENS = ["(S", "(NP", "(VP", "(DT", "(NN", "(VBD", "(.", ")"]


def tiny_vocabs(words=WORDS):
    return Vocab(words), Vocab(PARSE_TOKENS)


def tiny_model(use_copy=True, use_parse_attention=True, hidden=8, seed=0, words=WORDS, **kw):
    wv, pv = tiny_vocabs(words)
    cfg = ScpnConfig(
        word_vocab_size=len(wv), parse_vocab_size=len(pv),
        emb_size=hidden, parse_emb_size=hidden, enc_hidden=hidden, parse_hidden=hidden,
        dec_hidden=hidden, use_copy=use_copy, use_parse_attention=use_parse_attention, seed=seed, **kw,
    )
    return ScpnModel(cfg), wv, pv


def tiny_instance(wv, pv, src="the dog saw a cat", parse="(S (NP (DT ) (NN ) ) (VP (VBD ) ) (. ) )", tgt="a cat saw the dog", use_copy=True):
    return make_instance(wv, pv, src.split(), parse.split(), tgt.split() if tgt is not None else None, use_copy)


def random_tree(rng: random.Random, depth: int = 4, labels=("S", "NP", "VP", "PP", "NN", "DT", ".", ",", "SBAR", "ADVP")) -> ParseTree:
    n = 0 if depth <= 1 else rng.randint(0, 3)
    return ParseTree(rng.choice(labels), tuple(random_tree(rng, depth - 1, labels) for _ in range(n)))


@pytest.fixture
def rng():
    return random.Random(1234)
