"""Four-phase analysis workflow: ingest, explore, analyze, report, render.

Each LLM-backed stage asks for a strict JSON reply, validates it against the
stage schema, and grants exactly one repair round (re-prompt carrying the
validation error) before failing with both raw replies attached.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AgentError, IngestionError, SchemaError
from .gateway import ChatMessage, ChatRequest, LlmGateway, LlmParams
from .retrieval import RankedChunk, RetrievalConfig, Retriever

logger = logging.getLogger(__name__)

DEFAULT_SOURCE_EXTENSIONS = (".c", ".cc", ".cpp", ".h", ".hpp")
DEFAULT_QUERY_CAP_CHARS = 8000
FIX_LINE_WARNING_THRESHOLD = 20

_LANGUAGE_BY_EXT = {
    ".c": "c",
    ".h": "c",
    ".cc": "cpp",
    ".cpp": "cpp",
    ".hpp": "cpp",
}

_CWE_RE = re.compile(r"^CWE-\d+$")
_CVE_RE = re.compile(r"^CVE-\d{4}-\d+$")


@dataclass(frozen=True)
class SourceFile:
    relative_path: str
    source_text: str
    language_guess: str


@dataclass(frozen=True)
class CodePayload:
    sample_id: str
    files: tuple[SourceFile, ...]
    total_chars: int

    def view(self) -> str:
        """Deterministic concatenated form: path-sorted, headed per file."""
        parts = []
        for f in self.files:
            parts.append(f"==== FILE: {f.relative_path} ====\n{f.source_text}")
        return "\n".join(parts)

    def file(self, relative_path: str) -> SourceFile | None:
        for f in self.files:
            if f.relative_path == relative_path:
                return f
        return None


@dataclass(frozen=True)
class Evidence:
    file: str
    line_number: int
    snippet: str
    reason: str


@dataclass(frozen=True)
class ExplorerFindings:
    vulnerability_summary: str
    cwe_matches: tuple[str, ...]
    cve_matches: tuple[str, ...]
    evidence: tuple[Evidence, ...]
    immediate_remediation: tuple[str, ...]
    retrieved_context_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Hotspot:
    file: str
    line_start: int
    line_end: int
    note: str


@dataclass(frozen=True)
class RemediationStrategy:
    fix_description: str
    variant_guarding_note: str


@dataclass(frozen=True)
class AnalystFindings:
    impact_assessment: str
    exploitation_likelihood: str  # low | medium | high
    likelihood_justification: str
    hotspots: tuple[Hotspot, ...]
    confidence: float
    remediation_strategies: tuple[RemediationStrategy, ...]


@dataclass(frozen=True)
class VulnReport:
    is_vulnerable: bool
    title: str = ""
    summary: str = ""
    cwe_description: str = ""
    root_cause: str = ""
    impact_summary: str = ""
    attack_surface: str = ""
    vulnerable_snippet: str = ""
    attack_vector: str = ""
    exploit_primitives: str = ""
    exploit_steps: tuple[str, ...] = ()
    exploitability_summary: str = ""
    fix_code: str = ""
    fix_line_count: int = 0
    fix_explanation: str = ""
    variant_guidance: str = ""
    warnings: tuple[str, ...] = ()


def ingest_codebase(
    path: str | Path, extensions: tuple[str, ...] = DEFAULT_SOURCE_EXTENSIONS
) -> CodePayload:
    """Load all allow-listed source files under path, sorted by relative path."""
    path = Path(path)
    if path.is_file():
        candidates = [path]
        root = path.parent
        sample_id = path.stem
    elif path.is_dir():
        candidates = sorted(p for p in path.rglob("*") if p.is_file())
        root = path
        # a bare src/ directory is named after the sample that contains it
        sample_id = path.name
        if sample_id == "src" and path.resolve().parent.name:
            sample_id = path.resolve().parent.name
    else:
        raise IngestionError(f"path does not exist: {path}")
    files: list[SourceFile] = []
    for p in candidates:
        if p.suffix.lower() not in extensions:
            continue
        try:
            text = p.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as err:
            raise IngestionError(f"unreadable source file {p}: {err}") from err
        rel = p.relative_to(root).as_posix()
        files.append(SourceFile(rel, text, _LANGUAGE_BY_EXT.get(p.suffix.lower(), "unknown")))
    if not files:
        raise IngestionError(f"no source files matching {extensions} under {path}")
    files.sort(key=lambda f: f.relative_path)
    total = sum(len(f.source_text) for f in files)
    return CodePayload(sample_id=sample_id, files=tuple(files), total_chars=total)


def rag_retrieval(
    payload: CodePayload,
    retriever: Retriever,
    config: RetrievalConfig,
    query_cap_chars: int = DEFAULT_QUERY_CAP_CHARS,
) -> list[RankedChunk]:
    """Query the knowledge base with the (head-truncated) code payload."""
    query = payload.view()[:query_cap_chars]
    return retriever.retrieve(config, query)


# -- structured reply parsing ----------------------------------------------

_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n|\n```$")


def parse_json_reply(text: str) -> dict:
    cleaned = _FENCE_RE.sub("", text.strip())
    try:
        obj = json.loads(cleaned)
    except json.JSONDecodeError:
        start, end = cleaned.find("{"), cleaned.rfind("}")
        if start == -1 or end <= start:
            raise SchemaError("reply contains no JSON object")
        try:
            obj = json.loads(cleaned[start : end + 1])
        except json.JSONDecodeError as err:
            raise SchemaError(f"reply is not valid JSON: {err}") from err
    if not isinstance(obj, dict):
        raise SchemaError("reply JSON must be an object")
    return obj


def _expect(data: dict, key: str, kind, path: str):
    if key not in data:
        raise SchemaError(f"{path}.{key}: missing")
    value = data[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaError(f"{path}.{key}: expected a number")
        return float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SchemaError(f"{path}.{key}: expected {kind.__name__}")
    return value


def _str_list(data: dict, key: str, path: str) -> tuple[str, ...]:
    value = _expect(data, key, list, path)
    for i, item in enumerate(value):
        if not isinstance(item, str):
            raise SchemaError(f"{path}.{key}[{i}]: expected string")
    return tuple(value)


def validate_explorer(data: dict, payload: CodePayload) -> ExplorerFindings:
    summary = _expect(data, "vulnerability_summary", str, "$")
    cwes = _str_list(data, "cwe_matches", "$")
    for i, cwe in enumerate(cwes):
        if not _CWE_RE.match(cwe):
            raise SchemaError(f"$.cwe_matches[{i}]: malformed id {cwe!r}")
    cves = _str_list(data, "cve_matches", "$")
    for i, cve in enumerate(cves):
        if not _CVE_RE.match(cve):
            raise SchemaError(f"$.cve_matches[{i}]: malformed id {cve!r}")
    raw_evidence = _expect(data, "evidence", list, "$")
    evidence: list[Evidence] = []
    for i, item in enumerate(raw_evidence):
        path = f"$.evidence[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{path}: expected object")
        file = _expect(item, "file", str, path)
        line = _expect(item, "line_number", int, path)
        snippet = _expect(item, "snippet", str, path)
        reason = _expect(item, "reason", str, path)
        src = payload.file(file)
        if src is None:
            raise SchemaError(f"{path}.file: {file!r} is not in the payload")
        n_lines = src.source_text.count("\n") + 1
        if not 1 <= line <= n_lines:
            raise SchemaError(f"{path}.line_number: {line} outside 1..{n_lines}")
        if snippet and snippet not in src.source_text:
            raise SchemaError(f"{path}.snippet: not a substring of {file!r}")
        evidence.append(Evidence(file, line, snippet, reason))
    remediation = _str_list(data, "immediate_remediation", "$")
    return ExplorerFindings(
        vulnerability_summary=summary,
        cwe_matches=cwes,
        cve_matches=cves,
        evidence=tuple(evidence),
        immediate_remediation=remediation,
    )


def validate_analyst(data: dict, payload: CodePayload, explorer: ExplorerFindings) -> AnalystFindings:
    impact = _expect(data, "impact_assessment", str, "$")
    likelihood = _expect(data, "exploitation_likelihood", dict, "$")
    level = _expect(likelihood, "level", str, "$.exploitation_likelihood")
    if level not in ("low", "medium", "high"):
        raise SchemaError(f"$.exploitation_likelihood.level: {level!r} not in low/medium/high")
    justification = _expect(likelihood, "justification", str, "$.exploitation_likelihood")
    raw_hotspots = _expect(data, "hotspots", list, "$")
    hotspots: list[Hotspot] = []
    for i, item in enumerate(raw_hotspots):
        path = f"$.hotspots[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{path}: expected object")
        file = _expect(item, "file", str, path)
        start = _expect(item, "line_start", int, path)
        end = _expect(item, "line_end", int, path)
        note = _expect(item, "note", str, path)
        src = payload.file(file)
        if src is None:
            raise SchemaError(f"{path}.file: {file!r} is not in the payload")
        n_lines = src.source_text.count("\n") + 1
        if not 1 <= start <= end <= n_lines:
            raise SchemaError(f"{path}: range {start}..{end} outside 1..{n_lines}")
        hotspots.append(Hotspot(file, start, end, note))
    confidence = _expect(data, "confidence", float, "$")
    if not 0.0 <= confidence <= 1.0:
        raise SchemaError(f"$.confidence: {confidence} outside [0, 1]")
    raw_strategies = _expect(data, "remediation_strategies", list, "$")
    strategies: list[RemediationStrategy] = []
    for i, item in enumerate(raw_strategies):
        path = f"$.remediation_strategies[{i}]"
        if not isinstance(item, dict):
            raise SchemaError(f"{path}: expected object")
        strategies.append(
            RemediationStrategy(
                _expect(item, "fix_description", str, path),
                _expect(item, "variant_guarding_note", str, path),
            )
        )
    if explorer.evidence and not strategies:
        raise SchemaError("$.remediation_strategies: at least one required when evidence exists")
    return AnalystFindings(
        impact_assessment=impact,
        exploitation_likelihood=level,
        likelihood_justification=justification,
        hotspots=tuple(hotspots),
        confidence=confidence,
        remediation_strategies=tuple(strategies),
    )


def _validate_phase1(data: dict) -> dict:
    out = {"is_vulnerable": _expect(data, "is_vulnerable", bool, "$")}
    for key in (
        "title",
        "summary",
        "cwe_description",
        "root_cause",
        "impact_summary",
        "attack_surface",
        "vulnerable_snippet",
    ):
        out[key] = _expect(data, key, str, "$")
    if out["is_vulnerable"] and not out["title"]:
        raise SchemaError("$.title: required for a vulnerable report")
    return out


def _validate_phase2(data: dict) -> dict:
    out = {
        "attack_vector": _expect(data, "attack_vector", str, "$"),
        "exploit_primitives": _expect(data, "exploit_primitives", str, "$"),
        "exploit_steps": _str_list(data, "exploit_steps", "$"),
        "exploitability_summary": _expect(data, "exploitability_summary", str, "$"),
    }
    if not 3 <= len(out["exploit_steps"]) <= 5:
        raise SchemaError(f"$.exploit_steps: need 3-5 steps, got {len(out['exploit_steps'])}")
    return out


def _validate_phase3(data: dict) -> dict:
    out = {
        "fix_code": _expect(data, "fix_code", str, "$"),
        "fix_explanation": _expect(data, "fix_explanation", str, "$"),
        "variant_guidance": _expect(data, "variant_guidance", str, "$"),
    }
    if not out["fix_code"].strip():
        raise SchemaError("$.fix_code: must be non-empty")
    return out


def _structured_call(llm: LlmGateway, params: LlmParams, prompt: str, validate) :
    """One chat call with one schema-repair round."""
    req = ChatRequest.build(params, user=prompt)
    first = llm.chat(req).content
    try:
        return validate(parse_json_reply(first))
    except SchemaError as err:
        logger.warning("schema failure, issuing repair round: %s", err)
        repair = ChatRequest(
            req.messages
            + (
                ChatMessage("assistant", first),
                ChatMessage(
                    "user",
                    f"Your reply failed validation: {err}. "
                    "Reply again with only the corrected JSON object.",
                ),
            ),
            params,
        )
        second = llm.chat(repair).content
        try:
            return validate(parse_json_reply(second))
        except SchemaError as err2:
            raise AgentError(
                f"two consecutive parse failures: first={err}; second={err2}\n"
                f"--- first reply ---\n{first}\n--- second reply ---\n{second}"
            ) from err2


def explore(
    payload: CodePayload,
    context: list[RankedChunk],
    llm: LlmGateway,
    params: LlmParams,
) -> ExplorerFindings:
    context_text = "\n\n".join(
        f"[{c.chunk_id}]\n{c.raw_text}" for c in context
    ) or "(no retrieved context)"
    prompt = llm.render_prompt(
        "explorer",
        {"code_payload": payload.view(), "retrieved_context": context_text},
    )
    findings = _structured_call(llm, params, prompt, lambda d: validate_explorer(d, payload))
    return ExplorerFindings(
        vulnerability_summary=findings.vulnerability_summary,
        cwe_matches=findings.cwe_matches,
        cve_matches=findings.cve_matches,
        evidence=findings.evidence,
        immediate_remediation=findings.immediate_remediation,
        retrieved_context_ids=tuple(c.chunk_id for c in context),
    )


def _findings_json(findings) -> str:
    from dataclasses import asdict

    return json.dumps(asdict(findings), indent=2)


def analyze(
    payload: CodePayload,
    explorer: ExplorerFindings,
    llm: LlmGateway,
    params: LlmParams,
) -> AnalystFindings:
    prompt = llm.render_prompt(
        "analyst",
        {"code_payload": payload.view(), "explorer_findings": _findings_json(explorer)},
    )
    return _structured_call(llm, params, prompt, lambda d: validate_analyst(d, payload, explorer))


def generate_report(
    payload: CodePayload,
    explorer: ExplorerFindings,
    analyst: AnalystFindings,
    llm: LlmGateway,
    params: LlmParams,
) -> VulnReport:
    """Three sequential phases; a non-vulnerable phase-1 verdict short-circuits."""
    phase1 = _structured_call(
        llm,
        params,
        llm.render_prompt(
            "report_phase1",
            {
                "code_payload": payload.view(),
                "explorer_findings": _findings_json(explorer),
                "analyst_findings": _findings_json(analyst),
            },
        ),
        _validate_phase1,
    )
    if not phase1["is_vulnerable"]:
        return VulnReport(is_vulnerable=False)
    phase1_json = json.dumps(phase1, indent=2)
    phase2 = _structured_call(
        llm,
        params,
        llm.render_prompt(
            "report_phase2",
            {"code_payload": payload.view(), "phase1": phase1_json},
        ),
        _validate_phase2,
    )
    phase3 = _structured_call(
        llm,
        params,
        llm.render_prompt(
            "report_phase3",
            {"phase1": phase1_json, "phase2": json.dumps(phase2, indent=2)},
        ),
        _validate_phase3,
    )
    fix_lines = phase3["fix_code"].count("\n") + 1
    warnings: list[str] = []
    if fix_lines > FIX_LINE_WARNING_THRESHOLD:
        warnings.append(
            f"fix_code has {fix_lines} lines (> {FIX_LINE_WARNING_THRESHOLD} target)"
        )
        logger.warning(warnings[-1])
    return VulnReport(
        is_vulnerable=True,
        title=phase1["title"],
        summary=phase1["summary"],
        cwe_description=phase1["cwe_description"],
        root_cause=phase1["root_cause"],
        impact_summary=phase1["impact_summary"],
        attack_surface=phase1["attack_surface"],
        vulnerable_snippet=phase1["vulnerable_snippet"],
        attack_vector=phase2["attack_vector"],
        exploit_primitives=phase2["exploit_primitives"],
        exploit_steps=phase2["exploit_steps"],
        exploitability_summary=phase2["exploitability_summary"],
        fix_code=phase3["fix_code"],
        fix_line_count=fix_lines,
        fix_explanation=phase3["fix_explanation"],
        variant_guidance=phase3["variant_guidance"],
        warnings=tuple(warnings),
    )


REPORT_SECTIONS = (
    "Summary",
    "CWE",
    "Root Cause",
    "Impact",
    "Attack Surface",
    "Vulnerable Snippet",
    "Attack Vector",
    "Exploit Primitives",
    "Exploit Steps",
    "Exploitability",
    "Proposed Fix",
    "Fix Explanation",
    "Variant Guidance",
)


def _unescape(text: str) -> str:
    """Turn literal escape sequences the model may emit into real characters."""
    return text.replace("\\n", "\n").replace("\\t", "\t")


def render_markdown(report: VulnReport) -> str:
    """Deterministic markdown rendering with a fixed 14-section order."""
    if not report.is_vulnerable:
        return (
            "# Analysis Result\n\n"
            "No vulnerability was found in the analyzed code.\n"
        )
    lines = [f"# {_unescape(report.title)}", ""]

    def section(name: str, body: str, fenced: bool = False, language: str = "") -> None:
        lines.append(f"## {name}")
        lines.append("")
        if fenced:
            lines.append(f"```{language}")
            lines.append(_unescape(body).rstrip("\n"))
            lines.append("```")
        else:
            lines.append(_unescape(body).rstrip("\n"))
        lines.append("")

    section("Summary", report.summary)
    section("CWE", report.cwe_description)
    section("Root Cause", report.root_cause)
    section("Impact", report.impact_summary)
    section("Attack Surface", report.attack_surface)
    section("Vulnerable Snippet", report.vulnerable_snippet, fenced=True, language="c")
    section("Attack Vector", report.attack_vector)
    section("Exploit Primitives", report.exploit_primitives)
    steps = "\n".join(f"{i + 1}. {_unescape(s)}" for i, s in enumerate(report.exploit_steps))
    section("Exploit Steps", steps)
    section("Exploitability", report.exploitability_summary)
    section("Proposed Fix", report.fix_code, fenced=True, language="c")
    section("Fix Explanation", report.fix_explanation)
    section("Variant Guidance", report.variant_guidance)
    return "\n".join(lines)
