"""Screening: inclusion/exclusion criteria, decision records with provenance,
corpus partitioning, annotation merging, conflicts and claim validation.

Decision and annotation stores are append-only JSON-line logs; the effective
screening state is a pure function of the log (last record per document
wins). Criterion-driven runs never append over a manual decision, which is
how manual decisions supersede automatic ones.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

_NUMERIC_OPS = {"<", "<=", "=", ">=", ">"}
_TEXT_OPS = {"=", "contains", "in-set"}
_FIELDS = {"year", "venue", "keyword", "relevance", "language"}
_DECISIONS = {"included", "excluded", "deferred"}

_ANNOTATION_ID_RE = re.compile(r"^[^/\s]+/\d+$")


class CriteriaConfigError(ValueError):
    pass


class AnnotationMergeError(ValueError):
    pass


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

@dataclass
class Criterion:
    id: str
    kind: str                  # include | exclude
    field: str                 # year | venue | keyword | relevance | language
    op: str
    value: object
    rationale: str
    rq_id: str | None = None   # required when field == "relevance"


def parse_criteria(data: list[dict]) -> list[Criterion]:
    criteria = []
    errors = []
    seen = set()
    for i, raw in enumerate(data):
        cid = str(raw.get("id", f"C{i + 1}"))
        if cid in seen:
            errors.append(f"duplicate criterion id '{cid}'")
        seen.add(cid)
        kind = raw.get("kind")
        if kind not in ("include", "exclude"):
            errors.append(f"criterion '{cid}': kind must be include or exclude")
            continue
        fld = raw.get("field")
        if fld not in _FIELDS:
            errors.append(f"criterion '{cid}': unknown field '{fld}'")
            continue
        op = raw.get("op")
        allowed = _NUMERIC_OPS if fld in ("year", "relevance") else _TEXT_OPS
        if op not in allowed:
            errors.append(f"criterion '{cid}': op '{op}' not valid for field '{fld}'")
            continue
        rationale = str(raw.get("rationale", "")).strip()
        if not rationale:
            errors.append(f"criterion '{cid}': rationale must be non-empty")
            continue
        rq_id = raw.get("rq_id")
        if fld == "relevance" and not rq_id:
            errors.append(f"criterion '{cid}': relevance criterion needs an rq_id")
            continue
        criteria.append(Criterion(
            id=cid, kind=kind, field=fld, op=op, value=raw.get("value"),
            rationale=rationale, rq_id=rq_id,
        ))
    if errors:
        raise CriteriaConfigError("; ".join(errors))
    return criteria


def load_criteria(path) -> list[Criterion]:
    return parse_criteria(json.loads(Path(path).read_text(encoding="utf-8")))


def _compare_numeric(actual: float, op: str, value: float) -> bool:
    return {
        "<": actual < value,
        "<=": actual <= value,
        "=": actual == value,
        ">=": actual >= value,
        ">": actual > value,
    }[op]


def _compare_text(actual: str, op: str, value) -> bool:
    actual = actual.lower()
    if op == "=":
        return actual == str(value).lower()
    if op == "contains":
        return str(value).lower() in actual
    return actual in {str(v).lower() for v in value}


def _matches(criterion: Criterion, doc, scores: dict[str, dict[str, float]]) -> bool:
    meta = doc.meta
    if criterion.field == "year":
        return meta.year is not None and _compare_numeric(meta.year, criterion.op, float(criterion.value))
    if criterion.field == "relevance":
        by_doc = scores.get(criterion.rq_id)
        if by_doc is None:
            raise CriteriaConfigError(
                f"criterion '{criterion.id}' references unknown rq '{criterion.rq_id}'"
            )
        return _compare_numeric(by_doc.get(meta.id, 0.0), criterion.op, float(criterion.value))
    if criterion.field == "venue":
        return meta.venue is not None and _compare_text(meta.venue, criterion.op, criterion.value)
    if criterion.field == "language":
        return meta.language is not None and _compare_text(meta.language, criterion.op, criterion.value)
    # keyword: any metadata keyword may satisfy the comparison
    return any(_compare_text(k, criterion.op, criterion.value) for k in meta.keywords)


# ---------------------------------------------------------------------------
# Decisions
# ---------------------------------------------------------------------------

@dataclass
class DecisionRecord:
    doc_id: str
    decision: str              # included | excluded | deferred
    source: str                # criterion id, "manual", or "default"
    actor: str
    timestamp: str
    note: str = ""

    def to_json(self) -> dict:
        return asdict(self)


def apply_criteria(corpus, criteria: list[Criterion], rankings=None,
                   actor: str = "criteria", timestamp: str | None = None) -> list[DecisionRecord]:
    """Evaluate exclude criteria first, then include; unmatched docs become deferred."""
    scores: dict[str, dict[str, float]] = {}
    for result in (rankings or []):
        scores[result.rq_id] = {s.doc_id: s.score for s in result.scores}
    ts = timestamp or utc_now()
    excludes = [c for c in criteria if c.kind == "exclude"]
    includes = [c for c in criteria if c.kind == "include"]
    records = []
    for doc in corpus:
        decision, source, note = "deferred", "default", "no criterion matched"
        for c in excludes:
            if _matches(c, doc, scores):
                decision, source, note = "excluded", c.id, c.rationale
                break
        else:
            for c in includes:
                if _matches(c, doc, scores):
                    decision, source, note = "included", c.id, c.rationale
                    break
        records.append(DecisionRecord(
            doc_id=doc.meta.id, decision=decision, source=source,
            actor=actor, timestamp=ts, note=note,
        ))
    return records


class DecisionLog:
    """Append-only decision history backed by a JSON-lines file."""

    def __init__(self, path):
        self.path = Path(path)

    def records(self) -> list[DecisionRecord]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                out.append(DecisionRecord(**json.loads(line)))
        return out

    def append(self, record: DecisionRecord) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_json(), sort_keys=True, ensure_ascii=False) + "\n")

    def effective(self) -> dict[str, DecisionRecord]:
        state: dict[str, DecisionRecord] = {}
        for record in self.records():
            state[record.doc_id] = record
        return state

    def record_decision(self, doc_id: str, decision: str, actor: str, note: str = "",
                        known_ids: set[str] | None = None) -> DecisionRecord:
        if decision not in _DECISIONS:
            raise ValueError(f"decision must be one of {sorted(_DECISIONS)}")
        if known_ids is not None and doc_id not in known_ids:
            raise KeyError(f"unknown document '{doc_id}'")
        record = DecisionRecord(
            doc_id=doc_id, decision=decision, source="manual",
            actor=actor, timestamp=utc_now(), note=note,
        )
        self.append(record)
        return record

    def append_criterion_records(self, records: list[DecisionRecord]) -> int:
        """Append automatic records, skipping docs already decided manually."""
        manual = {doc_id for doc_id, rec in self.effective().items() if rec.source == "manual"}
        n = 0
        for record in records:
            if record.doc_id in manual:
                continue
            self.append(record)
            n += 1
        return n


def effective_decision(state: dict[str, DecisionRecord], doc_id: str) -> str:
    """Effective screening state; documents never decided count as deferred."""
    record = state.get(doc_id)
    return record.decision if record else "deferred"


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------

@dataclass
class Partition:
    name: str
    assignment: dict[str, str]
    spec: dict


def partition(included_doc_ids: list[str], spec: dict, rankings=None, corpus=None) -> Partition:
    """Assign one label per document from relevance bands or a metadata facet.

    Band spec: {"name", "rq_id", "edges": [e0, e1, ...]} labels score s with
    band i for s in [e_i, e_{i+1}); the final band includes its right edge.
    Facet spec: {"name", "facet": "<metadata field>"}.
    """
    assignment: dict[str, str] = {}
    if "edges" in spec:
        edges = spec["edges"]
        if sorted(edges) != list(edges) or len(edges) < 2:
            raise ValueError("band edges must be sorted and at least two")
        scores: dict[str, float] = {}
        for result in (rankings or []):
            if result.rq_id == spec["rq_id"]:
                scores = {s.doc_id: s.score for s in result.scores}
        for doc_id in included_doc_ids:
            s = scores.get(doc_id, 0.0)
            label = "out-of-range"
            for i in range(len(edges) - 1):
                last = i == len(edges) - 2
                if edges[i] <= s < edges[i + 1] or (last and s == edges[i + 1]):
                    label = f"band{i}"
                    break
            assignment[doc_id] = label
    elif "facet" in spec:
        by_id = {d.meta.id: d for d in (corpus or [])}
        for doc_id in included_doc_ids:
            doc = by_id.get(doc_id)
            value = getattr(doc.meta, spec["facet"], None) if doc else None
            assignment[doc_id] = str(value) if value is not None else "unknown"
    else:
        raise ValueError("partition spec needs 'edges' or 'facet'")
    return Partition(name=spec.get("name", "partition"), assignment=assignment, spec=spec)


# ---------------------------------------------------------------------------
# Annotations
# ---------------------------------------------------------------------------

@dataclass
class Annotation:
    id: str                    # actor-scoped: "<actor>/<serial>"
    doc_id: str
    property: str
    value: object
    role: str = "note"         # data-evidence | claim-evidence | note
    actor: str = ""
    timestamp: str = ""
    span: tuple[int, int] | None = None
    chapter: int | None = None

    def to_json(self) -> dict:
        out = {
            "id": self.id, "doc_id": self.doc_id, "property": self.property,
            "value": self.value, "role": self.role, "actor": self.actor,
            "timestamp": self.timestamp,
        }
        if self.span is not None:
            out["span"] = list(self.span)
        if self.chapter is not None:
            out["chapter"] = self.chapter
        return out

    def location(self):
        return ("span", tuple(self.span)) if self.span is not None else ("chapter", self.chapter)


def annotation_from_json(data: dict) -> Annotation:
    span = tuple(data["span"]) if data.get("span") is not None else None
    return Annotation(
        id=str(data["id"]), doc_id=str(data["doc_id"]), property=str(data["property"]),
        value=data.get("value"), role=data.get("role", "note"), actor=data.get("actor", ""),
        timestamp=data.get("timestamp", ""), span=span, chapter=data.get("chapter"),
    )


def validate_annotations(annotations: list[Annotation], doc_lengths: dict[str, int] | None = None) -> list[str]:
    problems = []
    for ann in annotations:
        if not ann.property:
            problems.append(f"annotation '{ann.id}': empty property")
        if not _ANNOTATION_ID_RE.match(ann.id):
            problems.append(f"annotation '{ann.id}': id must look like actor/serial")
        if ann.span is not None and doc_lengths is not None:
            length = doc_lengths.get(ann.doc_id)
            if length is not None and not (0 <= ann.span[0] <= ann.span[1] <= length):
                problems.append(f"annotation '{ann.id}': span {ann.span} outside document bounds")
    return problems


def load_annotation_file(path) -> list[Annotation]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(annotation_from_json(json.loads(line)))
    return out


@dataclass
class AnnotationConflict:
    doc_id: str
    location: tuple
    property: str
    values: list
    annotation_ids: list[str]


def merge_annotations(streams: list[list[Annotation]]) -> tuple[list[Annotation], list[AnnotationConflict]]:
    """Union by annotation id; same-slot/different-value pairs are kept and reported.

    Ids are actor-scoped, so an id collision with different content is a
    hard error rather than something to repair.
    """
    merged: dict[str, Annotation] = {}
    for stream in streams:
        for ann in stream:
            known = merged.get(ann.id)
            if known is None:
                merged[ann.id] = ann
            elif known.to_json() != ann.to_json():
                raise AnnotationMergeError(f"annotation id '{ann.id}' reused with different content")
    by_slot: dict[tuple, list[Annotation]] = {}
    for ann in merged.values():
        by_slot.setdefault((ann.doc_id, ann.location(), ann.property), []).append(ann)
    conflicts = []
    for (doc_id, location, prop), anns in sorted(by_slot.items(), key=lambda kv: str(kv[0])):
        values = {json.dumps(a.value, sort_keys=True) for a in anns}
        if len(values) > 1:
            anns = sorted(anns, key=lambda a: a.id)
            conflicts.append(AnnotationConflict(
                doc_id=doc_id, location=location, property=prop,
                values=[a.value for a in anns], annotation_ids=[a.id for a in anns],
            ))
    return sorted(merged.values(), key=lambda a: a.id), conflicts


# ---------------------------------------------------------------------------
# Comparison conflicts and patterns
# ---------------------------------------------------------------------------

@dataclass
class Conflict:
    property: str
    doc_id: str
    values: list
    status: str = "open"
    chosen_value: object | None = None
    resolution_note: str = ""


def detect_conflicts(comparison) -> list[Conflict]:
    """One conflict per comparison cell carrying multiple distinct values."""
    conflicts = []
    for prop in comparison.properties:
        for doc_id in comparison.contributions:
            values = comparison.cell_values(prop, doc_id)
            distinct = sorted({json.dumps(v, sort_keys=True) for v in values})
            if len(distinct) > 1:
                conflicts.append(Conflict(property=prop, doc_id=doc_id, values=[json.loads(d) for d in distinct]))
    return conflicts


def apply_resolutions(conflicts: list[Conflict], resolutions: list[dict]) -> list[Conflict]:
    """Mark conflicts resolved from {property, doc_id, chosen_value, note} records."""
    by_key = {(r["property"], r["doc_id"]): r for r in resolutions}
    for conflict in conflicts:
        res = by_key.get((conflict.property, conflict.doc_id))
        if res is not None:
            conflict.status = "resolved"
            conflict.chosen_value = res.get("chosen_value")
            conflict.resolution_note = str(res.get("note", ""))
    return conflicts


def pattern_summary(comparison) -> dict[str, list[tuple[str, int]]]:
    """Per property: value histogram sorted by count (desc), then value."""
    summary = {}
    for prop in comparison.properties:
        counts: dict[str, int] = {}
        for doc_id in comparison.contributions:
            for value in comparison.cell_values(prop, doc_id):
                key = value if isinstance(value, str) else json.dumps(value)
                counts[key] = counts.get(key, 0) + 1
        summary[prop] = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return summary


# ---------------------------------------------------------------------------
# Claims
# ---------------------------------------------------------------------------

@dataclass
class Claim:
    id: str
    statement: str
    evidence: list[str]
    warrant: str
    status: str = "open"        # open | conflicted | resolved
    resolution_note: str = ""


def load_claims(path) -> list[Claim]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [Claim(
        id=str(c["id"]), statement=str(c.get("statement", "")),
        evidence=[str(e) for e in c.get("evidence", [])],
        warrant=str(c.get("warrant", "")), status=c.get("status", "open"),
        resolution_note=str(c.get("resolution_note", "")),
    ) for c in data]


@dataclass
class ClaimViolation:
    claim_id: str
    kind: str                  # dangling-evidence | empty-warrant | conflicted-evidence | no-evidence
    detail: str


def validate_claims(claims: list[Claim], annotations: list[Annotation]) -> list[ClaimViolation]:
    """Check evidence resolution, warrants, and conflict-free evidence cells."""
    by_id = {a.id: a for a in annotations}
    cell_values: dict[tuple[str, str], set[str]] = {}
    for ann in annotations:
        cell_values.setdefault((ann.doc_id, ann.property), set()).add(
            json.dumps(ann.value, sort_keys=True))
    violations = []
    for claim in claims:
        if not claim.evidence:
            violations.append(ClaimViolation(claim.id, "no-evidence", "claim cites no evidence"))
        if not claim.warrant.strip():
            violations.append(ClaimViolation(claim.id, "empty-warrant", "warrant must be non-empty"))
        for ev in claim.evidence:
            ann = by_id.get(ev)
            if ann is None:
                violations.append(ClaimViolation(claim.id, "dangling-evidence", f"evidence id '{ev}' does not resolve"))
            elif len(cell_values[(ann.doc_id, ann.property)]) > 1 and claim.status != "resolved":
                violations.append(ClaimViolation(
                    claim.id, "conflicted-evidence",
                    f"evidence '{ev}' sits in a conflicted cell ({ann.doc_id}, {ann.property})"))
    return violations
