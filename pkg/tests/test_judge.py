import itertools

import pytest

from vulnscribe import (
    CriterionScore,
    EvaluationSummary,
    GroundTruthAnnotation,
    JudgeVerdict,
    LlmParams,
    SchemaError,
    ValidationError,
    judge_report,
    remediation_success,
    score_overall,
    validate_verdict,
)
from vulnscribe.judge import DIMENSIONS, _coerce_score

from .test_agents import _payload


def _verdict_dict(score=7, root_cause=True, syntax=True, **overrides):
    data = {
        dim: {"score": score, "justification": "reasoned"}
        for dim in DIMENSIONS
    }
    data["remediation_quality"] = {
        "score": score,
        "justification": "reasoned",
        "fix_addresses_root_cause": root_cause,
        "syntax_valid": syntax,
    }
    data["overall_score"] = float(score)
    data.update(overrides)
    return data


def _verdict(scores=(7, 7, 7, 7), root_cause=True, syntax=True, judge_id="j"):
    blocks = [CriterionScore(s, "j") for s in scores]
    return JudgeVerdict(
        judge_id=judge_id,
        structural_integrity=blocks[0],
        factual_grounding=blocks[1],
        code_reasoning_quality=blocks[2],
        remediation_quality=blocks[3],
        fix_addresses_root_cause=root_cause,
        syntax_valid=syntax,
        overall_score=sum(scores) / 4.0,
    )


# -- score coercion -----------------------------------------------------------


def test_coerce_score_exact_integers():
    assert _coerce_score(7, "$") == 7
    assert _coerce_score(7.0, "$") == 7
    assert _coerce_score(0, "$") == 0
    assert _coerce_score(10, "$") == 10


@pytest.mark.parametrize("value", [7.4, True, False, "7", None, -1, 11])
def test_coerce_score_rejections(value):
    with pytest.raises(SchemaError):
        _coerce_score(value, "$")


# -- verdict validation ----------------------------------------------------------


def test_validate_verdict_accepts_and_recomputes_overall():
    verdict = validate_verdict(_verdict_dict(score=8, overall_score=1.0), "j1")
    assert verdict.judge_id == "j1"
    assert verdict.scores() == (8, 8, 8, 8)
    # overall_score is recomputed from the four criterion scores
    assert verdict.overall_score == 8.0
    assert verdict.fix_addresses_root_cause and verdict.syntax_valid


def test_validate_verdict_rejects_unknown_top_level_key():
    with pytest.raises(SchemaError) as err:
        validate_verdict(_verdict_dict(extra_field=1))
    assert "extra_field" in str(err.value)


def test_validate_verdict_rejects_unknown_block_key():
    data = _verdict_dict()
    data["structural_integrity"]["confidence"] = 0.9
    with pytest.raises(SchemaError):
        validate_verdict(data)


def test_validate_verdict_rejects_flags_outside_remediation():
    data = _verdict_dict()
    data["factual_grounding"]["syntax_valid"] = True
    with pytest.raises(SchemaError):
        validate_verdict(data)


@pytest.mark.parametrize("missing", [*DIMENSIONS, "overall_score"])
def test_validate_verdict_missing_keys(missing):
    data = _verdict_dict()
    del data[missing]
    with pytest.raises(SchemaError) as err:
        validate_verdict(data)
    assert missing in str(err.value)


def test_validate_verdict_requires_boolean_flags():
    data = _verdict_dict()
    data["remediation_quality"]["syntax_valid"] = "yes"
    with pytest.raises(SchemaError):
        validate_verdict(data)


def test_validate_verdict_requires_justification():
    data = _verdict_dict()
    data["code_reasoning_quality"]["justification"] = "  "
    with pytest.raises(SchemaError):
        validate_verdict(data)


# -- pooling ------------------------------------------------------------------------


def test_score_overall_means_eight_scores():
    pair = (_verdict((0, 5, 10, 5)), _verdict((10, 5, 0, 5)))
    assert score_overall(pair) == 5.0
    assert score_overall((_verdict((10,) * 4), _verdict((10,) * 4))) == 10.0
    with pytest.raises(ValidationError):
        score_overall((_verdict(),))


def test_remediation_success_all_sixteen_flag_combinations():
    for a_rc, a_sv, b_rc, b_sv in itertools.product([False, True], repeat=4):
        pair = (
            _verdict(root_cause=a_rc, syntax=a_sv),
            _verdict(root_cause=b_rc, syntax=b_sv),
        )
        assert remediation_success(pair) is (a_rc and a_sv and b_rc and b_sv)


# -- annotation -----------------------------------------------------------------------


def test_annotation_validation():
    GroundTruthAnnotation("s", True, "CWE-121", (3,), "desc")
    with pytest.raises(ValidationError):
        GroundTruthAnnotation("s", True, "CWE121", (3,), "desc")
    with pytest.raises(ValidationError):
        GroundTruthAnnotation("s", True, "CWE-121", (0,), "desc")


# -- end-to-end judging -----------------------------------------------------------------


def _judges():
    return (("judge-x", LlmParams(model_id="judge-x")),
            ("judge-y", LlmParams(model_id="judge-y")))


def _truth(sample_id="cwe121_unit"):
    return GroundTruthAnnotation(sample_id, True, "CWE-121", (4,), "stack overflow")


REPORT = (
    "# Stack overflow\n\n## Summary\n\nOverflow via strcpy (CWE-121).\n\n"
    "## Proposed Fix\n\n```c\nif (n < sizeof buf) { memcpy(buf, s, n); }\n```\n\n"
    "## Fix Explanation\n\nBounds the copy.\n"
)


def test_judge_report_pools_two_verdicts(scripted_gateway):
    summary = judge_report(_payload(), _truth(), REPORT, scripted_gateway, _judges())
    assert isinstance(summary, EvaluationSummary)
    assert [v.judge_id for v in summary.verdicts] == ["judge-x", "judge-y"]
    for verdict in summary.verdicts:
        assert all(0 <= s <= 10 for s in verdict.scores())
    assert summary.s_overall == score_overall(summary.verdicts)
    assert summary.remediation_success == remediation_success(summary.verdicts)


def test_judge_report_false_negative_zeroes_without_llm_call(scripted_gateway):
    class NoCallGateway:
        def render_prompt(self, name, bindings):  # pragma: no cover
            raise AssertionError("prompt should not be rendered for a false negative")

        def chat(self, req):  # pragma: no cover
            raise AssertionError("no LLM call expected")

    report = "# Analysis Result\n\nNo vulnerability was found in the analyzed code.\n"
    summary = judge_report(_payload(), _truth(), report, NoCallGateway(), _judges())
    assert summary.s_overall == 0.0
    assert summary.remediation_success is False
    for verdict in summary.verdicts:
        assert verdict.scores() == (0, 0, 0, 0)
        assert not verdict.fix_addresses_root_cause and not verdict.syntax_valid


def test_judge_report_denial_on_clean_truth_is_judged_normally(scripted_gateway):
    truth = GroundTruthAnnotation("clean", False, "CWE-121", (), "not vulnerable")
    report = "# Analysis Result\n\nNo vulnerability was found in the analyzed code.\n"
    summary = judge_report(_payload(), truth, report, scripted_gateway, _judges())
    # no automatic zero when the ground truth itself is non-vulnerable
    assert summary.s_overall > 0.0


def test_judge_report_requires_two_judges(scripted_gateway):
    with pytest.raises(ValidationError):
        judge_report(_payload(), _truth(), REPORT, scripted_gateway, (_judges()[0],))


def test_verdict_to_dict_field_names():
    d = _verdict().to_dict()
    assert set(d) == {*DIMENSIONS, "overall_score"}
    assert set(d["remediation_quality"]) == {
        "score", "justification", "fix_addresses_root_cause", "syntax_valid"
    }
    assert set(d["structural_integrity"]) == {"score", "justification"}
