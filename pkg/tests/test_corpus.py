from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scpn.corpus import (
    BOS,
    EOS,
    PAD,
    UNK,
    BadColumnCount,
    ParaphraseExample,
    SynthGrammarConfig,
    Vocab,
    add_reversed,
    build_vocab,
    load_pairs_tsv,
    synth_corpus,
    write_pairs_tsv,
)
from scpn.syntax import ParseError, Template, TemplateHistogram, extract_template, parse_bracketed, template_entropy

FIXTURE = Path(__file__).parent / "fixtures" / "two_pairs.tsv"


def test_load_two_line_file():
    exs = load_pairs_tsv(FIXTURE)
    assert len(exs) == 2
    assert exs[0].s1.startswith("although the woman")
    assert exs[0].t2 == Template.parse("(S(NP)(VP)(SBAR)(.))")
    assert exs[1].t2 == Template.parse("(SQ(VBD)(NP)(VP)(.))")
    assert all(not w.lexical for w in exs[0].p1.children)


def test_bad_column_count(tmp_path):
    f = tmp_path / "bad.tsv"
    f.write_text("a\tb\t(S)\n")
    with pytest.raises(BadColumnCount) as err:
        load_pairs_tsv(f)
    assert err.value.line == 1


def test_bad_parse_reports_line_and_offset(tmp_path):
    f = tmp_path / "bad.tsv"
    f.write_text("a .\tb .\t(S)\t(S)\nx .\ty .\t(S)\t(S(NP\n")
    with pytest.raises(ParseError) as err:
        load_pairs_tsv(f)
    assert err.value.line == 2
    assert err.value.offset == 6


def test_write_load_round_trip(tmp_path):
    exs = synth_corpus(SynthGrammarConfig(seed=2, num_pairs=50))
    write_pairs_tsv(tmp_path / "p.tsv", exs)
    assert load_pairs_tsv(tmp_path / "p.tsv") == exs


def test_add_reversed():
    ex = load_pairs_tsv(FIXTURE)[:1]
    out = add_reversed(ex)
    assert len(out) == 2
    assert (out[1].s1, out[1].s2, out[1].p1, out[1].p2) == (ex[0].s2, ex[0].s1, ex[0].p2, ex[0].p1)
    assert out[1].t2 == extract_template(ex[0].p1)
    assert add_reversed([]) == []


def test_add_reversed_twice():
    exs = load_pairs_tsv(FIXTURE)
    twice = add_reversed(add_reversed(exs))
    assert len(twice) == 4 * len(exs)
    n = len(exs)
    # the second application reverses the reversed half back
    assert twice[3 * n :] == exs
    assert twice[:n] == exs


def test_t2_always_matches_p2():
    for ex in add_reversed(synth_corpus(SynthGrammarConfig(seed=4, num_pairs=200))):
        assert ex.t2 == extract_template(ex.p2)


def test_vocab_reserved_ids_and_bijection(tmp_path):
    v = build_vocab([["a", "a", "a", "b"]], min_freq=2)
    assert v.itos == ["<pad>", "<s>", "</s>", "<unk>", "a"]
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
    assert v.id("b") == UNK
    everything = build_vocab([["a", "a", "a", "b"]], min_freq=1)
    assert everything.itos[4:] == ["a", "b"]
    everything.save(tmp_path / "v.txt")
    again = Vocab.load(tmp_path / "v.txt")
    assert again.itos == everything.itos
    assert all(again.id(t) == i for i, t in enumerate(again.itos))


def test_parse_symbols_always_kept():
    v = build_vocab([["(S", ")", "x", "x"]], min_freq=2)
    assert "(S" in v and ")" in v and "x" in v


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(list("abcdefg")), min_size=1, max_size=40), st.randoms(use_true_random=False))
def test_build_vocab_order_independent(tokens, rnd):
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    assert build_vocab([tokens]).itos == build_vocab([shuffled]).itos


def test_synth_deterministic_and_sized(tmp_path):
    cfg = SynthGrammarConfig(seed=7, num_pairs=300)
    a, b = synth_corpus(cfg), synth_corpus(cfg)
    assert len(a) == 300
    write_pairs_tsv(tmp_path / "a.tsv", a)
    write_pairs_tsv(tmp_path / "b.tsv", b)
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    assert synth_corpus(SynthGrammarConfig(seed=8, num_pairs=300)) != a


def test_clause_swap_rule():
    exs = synth_corpus(SynthGrammarConfig(seed=11, num_pairs=50, transformations=("clause_swap",), identity_rate=0.0))
    for ex in exs:
        assert ex.p1.children[0].label == "SBAR" and ex.p1.children[1].label == ","
        assert extract_template(ex.p1) == Template.parse("(S(SBAR)(,)(NP)(VP)(.))")
        assert ex.t2 == Template.parse("(S(NP)(VP)(SBAR)(.))")
        # "SUB A , B ." -> "B SUB A ."
        sub_clause, main = ex.s1[:-2].split(" , ")
        assert ex.s2.split()[-1] == "."
        sub_word = sub_clause.split()[0]
        assert sub_word in ("because", "although", "while")
        assert len(ex.s2.split()) == len(ex.s1.split()) - 1
        assert f" {sub_word} " in ex.s2


@pytest.mark.parametrize("pair", [("clause_swap", "cleft"), ("topicalization", "question_formation"), ("cleft", "conjunction_split")])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_synth_entropy_above_one_bit(pair, seed):
    cfg = SynthGrammarConfig(seed=seed, num_pairs=500, transformations=pair, identity_rate=0.0)
    exs = synth_corpus(cfg)
    hist = TemplateHistogram.from_parses([ex.p1 for ex in exs] + [ex.p2 for ex in exs])
    assert template_entropy(hist) > 1.0


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthGrammarConfig(num_pairs=0)
    with pytest.raises(ValueError):
        SynthGrammarConfig(transformations=())
    with pytest.raises(ValueError):
        SynthGrammarConfig(transformations=("passive",))


def test_example_rejects_empty_sentence():
    with pytest.raises(ValueError):
        ParaphraseExample("", "x", parse_bracketed("(S)"), parse_bracketed("(S)"))
