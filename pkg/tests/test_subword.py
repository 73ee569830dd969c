
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scpn.subword import BpeModel, DanglingContinuation, EmptyCorpus, bpe_apply, bpe_restore, bpe_train

ALPHABET = "abcdelorw"
TRAIN = ["low low lower", "newer wider lowest", "a b c d e"] * 3
sentences = st.lists(st.text(alphabet=ALPHABET, min_size=1, max_size=8), max_size=8).map(" ".join)


def test_hand_merge_oracle():
    m = bpe_train(["low low lower"], 2)
    assert m.merges == (("l", "o"), ("lo", "w"))
    assert bpe_apply(m, "lower") == ["low@@", "e@@", "r"]
    assert bpe_restore(["low@@", "e@@", "r"]) == "lower"


def test_stops_when_no_pair_repeats():
    # after (l,o),(lo,w) the remaining pairs (low,</w>)=2 and (low,e)=1
    m = bpe_train(["low low lower"], 100)
    assert m.merges == (("l", "o"), ("lo", "w"), ("low", "</w>"))
    assert bpe_apply(m, "low") == ["low"]


def test_zero_merges_character_level():
    m = bpe_train(["low low lower"], 0)
    assert m.merges == ()
    assert bpe_apply(m, "low") == ["l@@", "o@@", "w"]


def test_single_char_word_has_no_merges():
    assert bpe_train(["a"], 10).merges == ()


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        bpe_train(["   ", ""], 10)


def test_apply_edge_cases():
    m = bpe_train(["low low lower"], 3)
    assert bpe_apply(m, "") == []
    assert bpe_apply(m, "low") == ["low"]
    assert bpe_apply(m, "zq") == ["z@@", "q"]


def test_restore_edge_cases():
    assert bpe_restore([]) == ""
    with pytest.raises(DanglingContinuation):
        bpe_restore(["a@@"])


@pytest.fixture(scope="module")
def model():
    return bpe_train(TRAIN, 30)


@settings(max_examples=1000, deadline=None)
@given(sentences)
def test_round_trip(model, s):
    assert bpe_restore(bpe_apply(model, s)) == " ".join(s.split())


@settings(max_examples=100, deadline=None)
@given(sentences)
def test_length_non_increasing_in_merges(s):
    lengths = [len(bpe_apply(bpe_train(TRAIN, n), s)) for n in (0, 2, 5, 10, 30)]
    assert lengths == sorted(lengths, reverse=True)


def test_merges_file_deterministic(tmp_path):
    bpe_train(TRAIN, 20).save(tmp_path / "a.txt")
    bpe_train(list(TRAIN), 20).save(tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    loaded = BpeModel.load(tmp_path / "a.txt")
    assert loaded.merges == bpe_train(TRAIN, 20).merges
    for s in TRAIN:
        assert bpe_apply(loaded, s) == bpe_apply(bpe_train(TRAIN, 20), s)


def test_merges_replay_training_segmentation():
    # applying the merges in order reproduces the training corpus segmentation
    m = bpe_train(TRAIN, 8)
    for w in {w for s in TRAIN for w in s.split()}:
        assert "".join(p.replace("@@", "") for p in m.segment(w)) == w


def test_duplicate_merge_rejected():
    with pytest.raises(ValueError):
        BpeModel((("a", "b"), ("a", "b")))
