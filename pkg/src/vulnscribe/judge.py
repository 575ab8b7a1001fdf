"""Dual-judge rubric evaluation of rendered reports.

Two independently configured judges score four dimensions on 0-10; the
pooled overall score is the arithmetic mean of all eight criterion scores,
and a remediation counts as successful only when both judges affirm both
remediation flags.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from .agents import CodePayload, _structured_call
from .errors import SchemaError, ValidationError
from .gateway import LlmGateway, LlmParams

logger = logging.getLogger(__name__)

DIMENSIONS = (
    "structural_integrity",
    "factual_grounding",
    "code_reasoning_quality",
    "remediation_quality",
)

NO_VULNERABILITY_MARKER = "No vulnerability was found"

_CWE_ID_RE = re.compile(r"^CWE-\d+$")


@dataclass(frozen=True)
class GroundTruthAnnotation:
    sample_id: str
    is_vulnerable: bool
    cwe_id: str
    vulnerable_lines: tuple[int, ...]
    description: str
    fix_hint: str | None = None

    def __post_init__(self) -> None:
        if not _CWE_ID_RE.match(self.cwe_id):
            raise ValidationError(f"malformed cwe_id: {self.cwe_id!r}")
        if any(line < 1 for line in self.vulnerable_lines):
            raise ValidationError("vulnerable_lines must be positive")

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "is_vulnerable": self.is_vulnerable,
                "cwe_id": self.cwe_id,
                "vulnerable_lines": list(self.vulnerable_lines),
                "description": self.description,
                "fix_hint": self.fix_hint,
            },
            indent=2,
        )


@dataclass(frozen=True)
class CriterionScore:
    score: int
    justification: str


@dataclass(frozen=True)
class JudgeVerdict:
    judge_id: str
    structural_integrity: CriterionScore
    factual_grounding: CriterionScore
    code_reasoning_quality: CriterionScore
    remediation_quality: CriterionScore
    fix_addresses_root_cause: bool
    syntax_valid: bool
    overall_score: float

    def scores(self) -> tuple[int, int, int, int]:
        return (
            self.structural_integrity.score,
            self.factual_grounding.score,
            self.code_reasoning_quality.score,
            self.remediation_quality.score,
        )

    def to_dict(self) -> dict:
        return {
            "structural_integrity": {
                "score": self.structural_integrity.score,
                "justification": self.structural_integrity.justification,
            },
            "factual_grounding": {
                "score": self.factual_grounding.score,
                "justification": self.factual_grounding.justification,
            },
            "code_reasoning_quality": {
                "score": self.code_reasoning_quality.score,
                "justification": self.code_reasoning_quality.justification,
            },
            "remediation_quality": {
                "score": self.remediation_quality.score,
                "justification": self.remediation_quality.justification,
                "fix_addresses_root_cause": self.fix_addresses_root_cause,
                "syntax_valid": self.syntax_valid,
            },
            "overall_score": self.overall_score,
        }


@dataclass(frozen=True)
class EvaluationSummary:
    sample_id: str
    verdicts: tuple[JudgeVerdict, JudgeVerdict]
    s_overall: float
    remediation_success: bool


def _coerce_score(value, path: str) -> int:
    if isinstance(value, bool):
        raise SchemaError(f"{path}: expected an integer score")
    if isinstance(value, int):
        score = value
    elif isinstance(value, float):
        if value != int(value):
            raise SchemaError(f"{path}: score {value} is not an exact integer")
        score = int(value)
    else:
        raise SchemaError(f"{path}: expected an integer score")
    if not 0 <= score <= 10:
        raise SchemaError(f"{path}: score {score} outside 0..10")
    return score


def validate_verdict(data: dict, judge_id: str = "judge") -> JudgeVerdict:
    """Parse a raw verdict object against the fixed schema; unknown keys rejected."""
    allowed = set(DIMENSIONS) | {"overall_score"}
    unknown = set(data) - allowed
    if unknown:
        raise SchemaError(f"$: unknown keys {sorted(unknown)}")
    blocks: dict[str, CriterionScore] = {}
    flags: dict[str, bool] = {}
    for dim in DIMENSIONS:
        if dim not in data:
            raise SchemaError(f"$.{dim}: missing")
        block = data[dim]
        if not isinstance(block, dict):
            raise SchemaError(f"$.{dim}: expected object")
        expected_keys = {"score", "justification"}
        if dim == "remediation_quality":
            expected_keys |= {"fix_addresses_root_cause", "syntax_valid"}
        unknown = set(block) - expected_keys
        if unknown:
            raise SchemaError(f"$.{dim}: unknown keys {sorted(unknown)}")
        if "score" not in block:
            raise SchemaError(f"$.{dim}.score: missing")
        score = _coerce_score(block["score"], f"$.{dim}.score")
        justification = block.get("justification")
        if not isinstance(justification, str) or not justification.strip():
            raise SchemaError(f"$.{dim}.justification: non-empty string required")
        blocks[dim] = CriterionScore(score, justification)
        if dim == "remediation_quality":
            for flag in ("fix_addresses_root_cause", "syntax_valid"):
                if not isinstance(block.get(flag), bool):
                    raise SchemaError(f"$.{dim}.{flag}: boolean required")
                flags[flag] = block[flag]
    if "overall_score" not in data:
        raise SchemaError("$.overall_score: missing")
    mean = sum(b.score for b in blocks.values()) / 4.0
    return JudgeVerdict(
        judge_id=judge_id,
        structural_integrity=blocks["structural_integrity"],
        factual_grounding=blocks["factual_grounding"],
        code_reasoning_quality=blocks["code_reasoning_quality"],
        remediation_quality=blocks["remediation_quality"],
        fix_addresses_root_cause=flags["fix_addresses_root_cause"],
        syntax_valid=flags["syntax_valid"],
        overall_score=mean,
    )


def score_overall(verdicts: tuple[JudgeVerdict, JudgeVerdict]) -> float:
    """Arithmetic mean of the eight criterion scores across both verdicts."""
    if len(verdicts) != 2:
        raise ValidationError(f"expected exactly 2 verdicts, got {len(verdicts)}")
    return sum(sum(v.scores()) for v in verdicts) / 8.0


def remediation_success(verdicts: tuple[JudgeVerdict, JudgeVerdict]) -> bool:
    """True iff both remediation flags hold for both judges."""
    if len(verdicts) != 2:
        raise ValidationError(f"expected exactly 2 verdicts, got {len(verdicts)}")
    return all(v.fix_addresses_root_cause and v.syntax_valid for v in verdicts)


def _zeroed_verdict(judge_id: str, reason: str) -> JudgeVerdict:
    block = CriterionScore(0, reason)
    return JudgeVerdict(
        judge_id=judge_id,
        structural_integrity=block,
        factual_grounding=block,
        code_reasoning_quality=block,
        remediation_quality=block,
        fix_addresses_root_cause=False,
        syntax_valid=False,
        overall_score=0.0,
    )


def judge_report(
    code: CodePayload,
    truth: GroundTruthAnnotation,
    report_markdown: str,
    llm: LlmGateway,
    judges: tuple[tuple[str, LlmParams], tuple[str, LlmParams]],
) -> EvaluationSummary:
    """Run both judges over one rendered report and pool the verdicts.

    A report that denies the vulnerability on a vulnerable ground truth is
    scored zero on every dimension for both judges: it cannot be grounded,
    reasoned, or remediated, so the rubric's automatic-zero rule applies to
    the whole evaluation.
    """
    if len(judges) != 2:
        raise ValidationError(f"expected exactly 2 judge configs, got {len(judges)}")
    false_negative = truth.is_vulnerable and NO_VULNERABILITY_MARKER in report_markdown
    verdicts: list[JudgeVerdict] = []
    for judge_id, params in judges:
        if false_negative:
            verdicts.append(
                _zeroed_verdict(
                    judge_id,
                    "The report denies a vulnerability the ground truth confirms; "
                    "the evaluation is scored zero. A false negative cannot be "
                    "grounded or remediated.",
                )
            )
            continue
        prompt = llm.render_prompt(
            "judge_rubric",
            {
                "code_payload": code.view(),
                "annotation": truth.to_json(),
                "report": report_markdown,
            },
        )
        verdict = _structured_call(
            llm, params, prompt, lambda d, jid=judge_id: validate_verdict(d, jid)
        )
        verdicts.append(verdict)
    pair = (verdicts[0], verdicts[1])
    return EvaluationSummary(
        sample_id=truth.sample_id,
        verdicts=pair,
        s_overall=score_overall(pair),
        remediation_success=remediation_success(pair),
    )
