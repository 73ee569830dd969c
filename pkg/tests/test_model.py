import dataclasses
import itertools
import math

import numpy as np
import pytest
import torch

from conftest import tiny_instance, tiny_model
from scpn.corpus import BOS, EOS
from scpn.model import (
    EmptyInput,
    ScpnConfig,
    TooLong,
    beam_search,
    collate,
    decode_step,
    encode_inputs,
    greedy_decode,
    make_instance,
    sequence_nll,
)
from scpn.net import check_gradients, init_uniform
from scpn.training import train_model

ABLATIONS = list(itertools.product([True, False], [True, False]))


def test_config_defaults():
    cfg = ScpnConfig()
    assert cfg.dec_layers == 2 and cfg.beam_size == 10
    assert cfg.use_copy and cfg.use_parse_attention
    with pytest.raises(ValueError):
        ScpnConfig(beam_size=0)
    assert ScpnConfig.from_dict(cfg.to_dict()) == cfg


def test_encoder_state_counts():
    model, wv, pv = tiny_model()
    inst = tiny_instance(wv, pv, src="dog", parse="(S )")
    enc = encode_inputs(model, inst)
    assert enc.sent_states.shape[:2] == (1, 1)
    assert enc.parse_states.shape[:2] == (1, 2)


def test_encoder_reversal_structure():
    model, wv, pv = tiny_model()
    # with tied directions, reversing the input swaps the two halves position-wise
    model.enc_bwd.load_state_dict(model.enc_fwd.state_dict())
    h = model.config.enc_hidden
    fwd = encode_inputs(model, tiny_instance(wv, pv, src="the dog saw a cat")).sent_states[0]
    rev = encode_inputs(model, tiny_instance(wv, pv, src="cat a saw dog the")).sent_states[0]
    n = fwd.shape[0]
    # the forward half over the reversed input is the backward half over the original
    for t in range(n):
        assert torch.allclose(rev[t, :h], fwd[n - 1 - t, h:], atol=1e-6)
        assert torch.allclose(rev[t, h:], fwd[n - 1 - t, :h], atol=1e-6)


def test_encoder_deterministic():
    model, wv, pv = tiny_model()
    inst = tiny_instance(wv, pv)
    a, b = encode_inputs(model, inst), encode_inputs(model, inst)
    assert torch.equal(a.sent_states, b.sent_states) and torch.equal(a.parse_states, b.parse_states)


def test_encoder_errors():
    model, wv, pv = tiny_model(max_src_len=3)
    with pytest.raises(EmptyInput):
        encode_inputs(model, make_instance(wv, pv, [], ["(S", ")"]))
    with pytest.raises(TooLong):
        encode_inputs(model, tiny_instance(wv, pv, src="the dog saw a cat"))


@pytest.mark.parametrize("use_copy,use_parse", ABLATIONS)
def test_decode_distribution_normalized(use_copy, use_parse):
    model, wv, pv = tiny_model(use_copy=use_copy, use_parse_attention=use_parse)
    inst = tiny_instance(wv, pv, src="the zebra saw a yak", use_copy=use_copy)
    enc = encode_inputs(model, inst)
    state = model.initial_state(enc)
    rng = np.random.default_rng(0)
    prev = BOS
    for _ in range(25):
        probs, state = decode_step(model, state, enc, prev)
        assert (probs >= 0).all()
        assert abs(probs.sum().item() - 1.0) < 1e-6
        prev = int(rng.integers(0, probs.shape[1]))
    width = len(wv) + (2 if use_copy else 0)
    assert probs.shape == (1, width)


def test_no_copy_is_plain_softmax():
    model, wv, pv = tiny_model(use_copy=False)
    inst = tiny_instance(wv, pv, use_copy=False)
    enc = encode_inputs(model, inst)
    state = model.initial_state(enc)
    probs, new = decode_step(model, state, enc, BOS)
    logits = model.out(torch.cat([new.h_top, new.sent_context], dim=1))
    assert torch.allclose(probs, torch.softmax(logits, dim=1))


def test_pgen_one_gives_vocab_distribution():
    model, wv, pv = tiny_model()
    ref, _, _ = tiny_model(use_copy=False)
    ref.load_state_dict({k: v for k, v in model.state_dict().items() if not k.startswith("gen_gate")})
    with torch.no_grad():
        model.gen_gate.bias.fill_(100.0)
    inst = tiny_instance(wv, pv)
    e1, e2 = encode_inputs(model, inst), encode_inputs(ref, inst)
    p1, _ = decode_step(model, model.initial_state(e1), e1, BOS)
    p2, _ = decode_step(ref, ref.initial_state(e2), e2, BOS)
    assert torch.allclose(p1, p2, atol=1e-7)


def test_pgen_zero_single_token_source():
    model, wv, pv = tiny_model()
    with torch.no_grad():
        model.gen_gate.bias.fill_(-100.0)
    inst = tiny_instance(wv, pv, src="dog")
    enc = encode_inputs(model, inst)
    probs, _ = decode_step(model, model.initial_state(enc), enc, BOS)
    assert probs[0, wv.id("dog")].item() == pytest.approx(1.0, abs=1e-6)


def test_copy_reaches_source_oov():
    model, wv, pv = tiny_model()
    with torch.no_grad():
        model.gen_gate.bias.fill_(-100.0)
    inst = tiny_instance(wv, pv, src="zebra")
    assert inst.oovs == ["zebra"]
    enc = encode_inputs(model, inst)
    probs, _ = decode_step(model, model.initial_state(enc), enc, BOS)
    assert probs[0, len(wv)].item() == pytest.approx(1.0, abs=1e-6)


def test_parse_invariance_without_parse_attention():
    model, wv, pv = tiny_model(use_parse_attention=False)
    a = tiny_instance(wv, pv, parse="(S (NP ) )")
    b = tiny_instance(wv, pv, parse="(S (VP (VBD ) ) (. ) )")
    ea, eb = encode_inputs(model, a), encode_inputs(model, b)
    sa, sb = model.initial_state(ea), model.initial_state(eb)
    for tok in (BOS, 5, 6, 7):
        pa, sa = decode_step(model, sa, ea, tok)
        pb, sb = decode_step(model, sb, eb, tok)
        assert torch.equal(pa, pb)


def test_initial_state_sees_parse_only_with_parse_attention():
    for use_parse, differs in ((True, True), (False, False)):
        model, wv, pv = tiny_model(use_parse_attention=use_parse)
        a = tiny_instance(wv, pv, parse="(S (NP ) )")
        b = tiny_instance(wv, pv, parse="(S (VP (VBD ) ) (. ) )")
        ha = model.initial_state(encode_inputs(model, a)).h_top
        hb = model.initial_state(encode_inputs(model, b)).h_top
        assert (not torch.equal(ha, hb)) == differs


def test_nll_uniform_is_log_v():
    model, wv, pv = tiny_model(use_copy=False)
    with torch.no_grad():
        model.out.weight.zero_()
        model.out.bias.zero_()
    inst = tiny_instance(wv, pv, use_copy=False)
    assert sequence_nll(model, inst).item() == pytest.approx(math.log(len(wv)), abs=1e-5)


def test_nll_zero_when_model_certain():
    # a single-token target that is copied with p_gen=0 from a one-token source
    model, wv, pv = tiny_model()
    with torch.no_grad():
        model.gen_gate.bias.fill_(-100.0)
    inst = make_instance(wv, pv, ["dog"], ["(S", ")"], [])
    inst = dataclasses.replace(inst, tgt_ids=[wv.id("dog")])
    assert sequence_nll(model, inst).item() == pytest.approx(0.0, abs=1e-6)


def test_nll_needs_target():
    model, wv, pv = tiny_model()
    with pytest.raises(EmptyInput):
        sequence_nll(model, tiny_instance(wv, pv, tgt=None))


@pytest.mark.parametrize("use_copy,use_parse", ABLATIONS)
def test_full_model_gradient_check(use_copy, use_parse):
    model, wv, pv = tiny_model(use_copy=use_copy, use_parse_attention=use_parse, hidden=8)
    # a well-conditioned test point: at +-0.08 many deep-path gradients fall
    # below 1e-7, where float64 central differences carry ~1e-4 roundoff
    init_uniform(model, 0, scale=0.5)
    model.double()
    inst = tiny_instance(wv, pv, src="the zebra saw a cat", tgt="a cat saw the zebra", use_copy=use_copy)
    err = check_gradients(lambda: sequence_nll(model, inst), model.named_parameters(), max_entries=300, seed=1)
    assert err < 1e-4


def test_batch_loss_is_mean_of_instance_losses():
    model, wv, pv = tiny_model()
    a = tiny_instance(wv, pv)
    b = tiny_instance(wv, pv, src="a bird sang", tgt="the bird sang .")
    joint = model.batch_loss(collate([a, b])).item()
    assert joint == pytest.approx((sequence_nll(model, a).item() + sequence_nll(model, b).item()) / 2, abs=1e-6)


# ----------------------------------------------------------------------
# decoding


def test_beam_one_is_greedy():
    for seed in range(5):
        model, wv, pv = tiny_model(seed=seed)
        inst = tiny_instance(wv, pv)
        hyps = beam_search(model, inst, beam_size=1, max_len=12)
        assert hyps[0].output_ids() == greedy_decode(model, inst, max_len=12)


def test_beam_deterministic_and_sorted():
    model, wv, pv = tiny_model(seed=3)
    inst = tiny_instance(wv, pv)
    a = beam_search(model, inst, beam_size=5, max_len=8)
    b = beam_search(model, inst, beam_size=5, max_len=8)
    assert [(h.tokens, h.score) for h in a] == [(h.tokens, h.score) for h in b]
    for norm in (True, False):
        ranked = beam_search(model, inst, beam_size=5, max_len=8, normalize=norm)
        scores = [h.rank_score(norm) for h in ranked]
        assert scores == sorted(scores, reverse=True)


def _enumerate_best(model, inst, max_len):
    """Exhaustive search: every EOS-terminated sequence up to max_len, plus
    every unterminated sequence of exactly max_len tokens."""
    enc = encode_inputs(model, inst)
    root = model.initial_state(enc)
    best = (-math.inf, None)

    def walk(state, prev, seq, score):
        nonlocal best
        probs, new = decode_step(model, state, enc, prev)
        logp = torch.log(probs[0].double())
        for tok in range(probs.shape[1]):
            s = score + logp[tok].item()
            if tok == EOS or len(seq) + 1 == max_len:
                cand = (s, [BOS] + seq + [tok])
                if cand[0] > best[0]:
                    best = cand
            else:
                walk(new, tok, seq + [tok], s)

    with torch.no_grad():
        walk(root, BOS, [], 0.0)
    return best


def test_beam_matches_exhaustive_search():
    words = ["x", "y"]
    for seed in range(5):
        model, wv, pv = tiny_model(seed=seed, words=words, use_copy=False)
        with torch.no_grad():
            model.out.weight.mul_(40)
        inst = make_instance(wv, pv, ["x", "y"], ["(S", ")"], use_copy=False)
        best_score, best_seq = _enumerate_best(model, inst, 4)
        top = beam_search(model, inst, beam_size=6 ** 4, max_len=4, normalize=False)[0]
        assert top.tokens == best_seq
        assert top.score == pytest.approx(best_score, abs=1e-9)


def test_lr_zero_leaves_loss_unchanged():
    model, wv, pv = tiny_model(lr=0.0, epochs=3, batch_size=2)
    insts = [tiny_instance(wv, pv), tiny_instance(wv, pv, src="a bird sang", tgt="the bird sang .")]
    before = model.batch_loss(collate(insts)).item()
    train_model(model, insts)
    assert model.batch_loss(collate(insts)).item() == pytest.approx(before, abs=1e-6)


def test_training_deterministic():
    curves = []
    for _ in range(2):
        model, wv, pv = tiny_model(epochs=3, batch_size=2, seed=5)
        insts = [tiny_instance(wv, pv), tiny_instance(wv, pv, src="a bird sang", tgt="the bird sang ."),
                 tiny_instance(wv, pv, src="the cat ran", tgt="a cat ran .")]
        curves.append([r["loss"] for r in train_model(model, insts)])
    assert curves[0] == curves[1]
