import pytest

from scpn.evaluation import MissingParse, TemplateMatchReport, same_template_rate
from scpn.syntax import parse_bracketed

A = parse_bracketed("(S(NP)(VP)(.))")
B = parse_bracketed("(SQ(VBD)(NP)(VP)(.))")
C = parse_bracketed("(S(SBAR)(VP)(.))")


def test_identical_outputs_score_100():
    assert same_template_rate([A, B, C], [A, B, C]) == 100.0


def test_distinct_outputs_score_0():
    assert same_template_rate([B, C, A], [A, B, C]) == 0.0


def test_three_of_ten():
    outs = [A, A, A] + [B] * 7
    assert same_template_rate(outs, [A] * 10) == pytest.approx(30.0)


def test_missing_parse_policy():
    with pytest.raises(MissingParse):
        same_template_rate([None, A], [A, A])
    assert same_template_rate([None, A], [A, A], missing="mismatch") == 50.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        same_template_rate([A], [A, B])


def test_report_table_layout():
    table = TemplateMatchReport(88.0, 71.5, 99.5, 200).table()
    assert "SCPN w/ gold parse" in table and "88.0" in table
    assert "SCPN w/ generated parse" in table and "71.5" in table
    assert "Parse generator" in table and "99.5" in table
