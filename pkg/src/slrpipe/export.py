"""Exports: markdown vault with wikilinks, node-link graph JSON, comparison
tables (CSV + markdown), knowledge-graph statements with shape validation,
and the report skeleton.

Everything here is a pure transform over frozen project state and emits
byte-deterministic output: keys sorted, ids sorted, floats fixed to four
decimals where displayed. Excluded documents never appear in any export.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from importlib import resources

from .screen import Annotation, Claim, ClaimViolation, Conflict

DATATYPES = {"string", "integer", "decimal", "boolean", "year"}


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def round4(x: float) -> float:
    return float(_fmt(x))


# ---------------------------------------------------------------------------
# Front matter (YAML-compatible subset; strings are JSON-quoted)
# ---------------------------------------------------------------------------

def _json_str(value) -> str:
    # escape the exotic line separators splitlines()-style parsers trip over
    out = json.dumps(value, ensure_ascii=False)
    return (out.replace("\x85", "\\u0085")
               .replace(" ", "\\u2028")
               .replace(" ", "\\u2029"))


def emit_front_matter(record: dict) -> str:
    lines = ["---"]
    for key in sorted(record):
        value = record[key]
        if value is None:
            continue
        if isinstance(value, str):
            lines.append(f"{key}: {_json_str(value)}")
        elif isinstance(value, bool):
            lines.append(f"{key}: {'true' if value else 'false'}")
        elif isinstance(value, int):
            lines.append(f"{key}: {value}")
        elif isinstance(value, float):
            lines.append(f"{key}: {_fmt(value)}")
        elif isinstance(value, list):
            lines.append(f"{key}:")
            for item in value:
                lines.append(f"- {_json_str(item)}")
        elif isinstance(value, dict):
            lines.append(f"{key}:")
            for sub in sorted(value):
                sval = value[sub]
                sval = _fmt(sval) if isinstance(sval, float) else sval
                lines.append(f"  {sub}: {sval}")
        else:
            raise TypeError(f"unsupported front-matter value for '{key}': {type(value)}")
    lines.append("---")
    return "\n".join(lines) + "\n"


def _parse_scalar(text: str):
    text = text.strip()
    if text.startswith('"'):
        return json.loads(text)
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_front_matter(text: str) -> dict:
    """Parse a note's front-matter block back into a record (inverse of emit)."""
    m = re.match(r"^---\n(.*?)\n---\n", text, re.DOTALL)
    if not m:
        raise ValueError("no front-matter block found")
    record: dict = {}
    current_key = None
    for line in m.group(1).split("\n"):
        if line.startswith("- ") and current_key is not None:
            record.setdefault(current_key, [])
            record[current_key].append(json.loads(line[2:]))
            continue
        if line.startswith("  ") and current_key is not None:
            sub, _, sval = line.strip().partition(":")
            record.setdefault(current_key, {})
            record[current_key][sub.strip()] = _parse_scalar(sval)
            continue
        key, _, value = line.partition(":")
        current_key = key.strip()
        if value.strip():
            record[current_key] = _parse_scalar(value)
            current_key = None
        # bare "key:" opens a list or mapping, filled by following lines
    return record


# ---------------------------------------------------------------------------
# Vault
# ---------------------------------------------------------------------------

def doc_note_record(meta, rq_scores: dict[str, float], decision: str) -> dict:
    record = {
        "title": meta.title,
        "authors": list(meta.authors),
        "decision": decision,
        "rq_scores": {rq: round4(s) for rq, s in sorted(rq_scores.items())},
    }
    if meta.year is not None:
        record["year"] = meta.year
    if meta.venue is not None:
        record["venue"] = meta.venue
    if meta.doi is not None:
        record["doi"] = meta.doi
    return record


def build_vault(corpus, rankings, similarities, decisions: dict[str, str],
                k: int = 5, sim_threshold: float = 0.1,
                rq_texts: dict[str, str] | None = None) -> dict[str, str]:
    """One markdown note per non-excluded document plus one note per RQ.

    Returns {file name: content}. Wikilinks point only at emitted notes.
    """
    emitted = [d for d in corpus if decisions.get(d.meta.id, "deferred") != "excluded"]
    emitted_ids = sorted(d.meta.id for d in emitted)
    scores_by_doc: dict[str, dict[str, float]] = {i: {} for i in emitted_ids}
    for result in rankings:
        for s in result.scores:
            if s.doc_id in scores_by_doc:
                scores_by_doc[s.doc_id][result.rq_id] = s.score
    files: dict[str, str] = {}
    for doc in sorted(emitted, key=lambda d: d.meta.id):
        doc_id = doc.meta.id
        record = doc_note_record(doc.meta, scores_by_doc[doc_id],
                                 decisions.get(doc_id, "deferred"))
        body = [f"# {doc.meta.title}", ""]
        if doc.chapters:
            body.append("## Outline")
            body.append("")
            for ch in doc.chapters:
                label = ch.heading if ch.heading else "(preamble)"
                body.append(f"{'  ' * max(ch.level - 1, 0)}- {label}")
            body.append("")
        neighbours = []
        for other in emitted_ids:
            if other == doc_id:
                continue
            sim = similarities.get(doc_id, other)
            if sim >= sim_threshold:
                neighbours.append((other, sim))
        neighbours.sort(key=lambda x: (-x[1], x[0]))
        if neighbours[:k]:
            body.append("## Similar documents")
            body.append("")
            for other, sim in neighbours[:k]:
                body.append(f"- [[{other}]] ({_fmt(sim)})")
            body.append("")
        files[f"{doc_id}.md"] = emit_front_matter(record) + "\n" + "\n".join(body).rstrip() + "\n"
    for result in sorted(rankings, key=lambda r: r.rq_id):
        record = {"id": result.rq_id, "text": (rq_texts or {}).get(result.rq_id, "")}
        body = [f"# {result.rq_id}", "", "## Ranked documents", ""]
        for rank, s in enumerate(
                (s for s in result.scores if s.doc_id in scores_by_doc), start=1):
            body.append(f"{rank}. [[{s.doc_id}]] ({_fmt(s.score)})")
        files[f"{result.rq_id}.md"] = emit_front_matter(record) + "\n" + "\n".join(body).rstrip() + "\n"
    return files


# ---------------------------------------------------------------------------
# Graph
# ---------------------------------------------------------------------------

def build_graph(metas, similarities, rankings, decisions: dict[str, str],
                edge_threshold: float = 0.2, space: str = "tfidf") -> dict:
    """Node-link JSON: numeric relevance channels per RQ plus their average.

    Coloring is the consumer's job; the channels carry the values.
    """
    kept = sorted(m.id for m in metas if decisions.get(m.id, "deferred") != "excluded")
    titles = {m.id: m.title for m in metas}
    channels: dict[str, dict[str, float]] = {i: {} for i in kept}
    for result in rankings:
        for s in result.scores:
            if s.doc_id in channels:
                channels[s.doc_id][result.rq_id] = round4(s.score)
    nodes = []
    for doc_id in kept:
        relevance = dict(sorted(channels[doc_id].items()))
        avg = round4(sum(relevance.values()) / len(relevance)) if relevance else 0.0
        nodes.append({
            "id": doc_id,
            "label": titles[doc_id],
            "relevance": relevance,
            "avg_relevance": avg,
        })
    links = []
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            sim = similarities.get(a, b)
            if sim >= edge_threshold:
                links.append({"source": a, "target": b, "similarity": round4(sim)})
    return {"space": space, "nodes": nodes, "links": links}


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

@dataclass
class CellValue:
    value: object
    sources: list[str]


@dataclass
class ComparisonTable:
    properties: list[str]
    contributions: list[str]
    cells: dict[tuple[str, str], list[CellValue]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def cell_values(self, prop: str, doc_id: str) -> list:
        return [cv.value for cv in self.cells.get((prop, doc_id), [])]

    def to_json(self) -> dict:
        return {
            "properties": self.properties,
            "contributions": self.contributions,
            "cells": [
                {"property": p, "contribution": d,
                 "values": [{"value": cv.value, "sources": cv.sources} for cv in cvs]}
                for (p, d), cvs in sorted(self.cells.items())
            ],
            "warnings": self.warnings,
        }


def build_comparison(annotations: list[Annotation], property_list: list[str],
                     doc_ids: list[str]) -> ComparisonTable:
    """Property x contribution matrix; every cell value traces to its annotations."""
    if not property_list:
        raise ValueError("comparison needs a non-empty property list")
    if len(set(property_list)) != len(property_list):
        raise ValueError("comparison properties must be unique")
    table = ComparisonTable(properties=list(property_list), contributions=list(doc_ids))
    annotated_props = set()
    for ann in sorted(annotations, key=lambda a: a.id):
        annotated_props.add(ann.property)
        if ann.property not in table.properties or ann.doc_id not in table.contributions:
            continue
        cell = table.cells.setdefault((ann.property, ann.doc_id), [])
        for cv in cell:
            if cv.value == ann.value:
                cv.sources.append(ann.id)
                break
        else:
            cell.append(CellValue(value=ann.value, sources=[ann.id]))
    for prop in property_list:
        if prop not in annotated_props:
            table.warnings.append(f"property '{prop}' is not annotated anywhere")
    return table


def _cell_text(table: ComparisonTable, prop: str, doc_id: str) -> str:
    values = table.cell_values(prop, doc_id)
    if not values:
        return "n/a"
    return "; ".join(v if isinstance(v, str) else json.dumps(v) for v in values)


def comparison_to_csv(table: ComparisonTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)   # default CRLF line endings, RFC-4180 quoting
    writer.writerow(["property"] + table.contributions)
    for prop in table.properties:
        writer.writerow([prop] + [_cell_text(table, prop, d) for d in table.contributions])
    return buf.getvalue()


def comparison_to_markdown(table: ComparisonTable) -> str:
    def esc(text: str) -> str:
        return text.replace("|", "\\|")

    header = "| Property | " + " | ".join(esc(d) for d in table.contributions) + " |"
    sep = "| --- |" + " --- |" * len(table.contributions)
    rows = []
    for prop in table.properties:
        cells = " | ".join(esc(_cell_text(table, prop, d)) for d in table.contributions)
        rows.append(f"| {esc(prop)} | {cells} |")
    return "\n".join([header, sep] + rows) + "\n"


# ---------------------------------------------------------------------------
# Knowledge-graph statements
# ---------------------------------------------------------------------------

@dataclass
class KGStatement:
    subject: str
    predicate: str
    object: str
    datatype: str

    def to_line(self) -> str:
        def esc(text: str) -> str:
            return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")
        return f"{esc(self.subject)}\t{esc(self.predicate)}\t{esc(self.object)}^^{self.datatype}"

    def to_json(self) -> dict:
        return {"subject": self.subject, "predicate": self.predicate,
                "object": self.object, "datatype": self.datatype}


def infer_datatype(value) -> tuple[str, str]:
    """Map a cell value to (lexical form, datatype)."""
    if isinstance(value, bool):
        return ("true" if value else "false", "boolean")
    if isinstance(value, int):
        return (str(value), "year" if 1000 <= value <= 2999 else "integer")
    if isinstance(value, float):
        return (repr(value), "decimal")
    text = str(value)
    if text.lower() in ("true", "false"):
        return (text.lower(), "boolean")
    if re.fullmatch(r"-?\d+", text):
        n = int(text)
        return (text, "year" if 1000 <= n <= 2999 else "integer")
    if re.fullmatch(r"-?\d+\.\d+", text):
        return (text, "decimal")
    return (text, "string")


def emit_kg(comparison: ComparisonTable, metadata_by_id: dict) -> list[KGStatement]:
    """One statement per cell value plus metadata statements per contribution."""
    statements = []
    for doc_id in comparison.contributions:
        meta = metadata_by_id.get(doc_id)
        statements.append(KGStatement(doc_id, "type", "document", "string"))
        if meta is None:
            continue
        statements.append(KGStatement(doc_id, "title", meta.title, "string"))
        if meta.year is not None:
            statements.append(KGStatement(doc_id, "year", str(meta.year), "year"))
        for author in meta.authors:
            statements.append(KGStatement(doc_id, "author", author, "string"))
        if meta.venue is not None:
            statements.append(KGStatement(doc_id, "venue", meta.venue, "string"))
        if meta.doi is not None:
            statements.append(KGStatement(doc_id, "doi", meta.doi, "string"))
    for (prop, doc_id), cell in sorted(comparison.cells.items()):
        for cv in cell:
            lexical, datatype = infer_datatype(cv.value)
            statements.append(KGStatement(doc_id, prop, lexical, datatype))
    return statements


def kg_to_lines(statements: list[KGStatement]) -> str:
    return "\n".join(s.to_line() for s in statements) + "\n"


# ---------------------------------------------------------------------------
# Shape validation
# ---------------------------------------------------------------------------

class ShapeFileError(ValueError):
    pass


@dataclass
class PropertyRule:
    required: bool = False
    min_count: int = 0
    max_count: int = 1
    datatype: str = "string"


@dataclass
class ShapeConstraint:
    target_class: str
    properties: dict[str, PropertyRule]


@dataclass
class ShapeViolation:
    subject: str
    property: str
    kind: str                  # missing-required | cardinality | datatype
    detail: str


def parse_shapes(data: dict) -> list[ShapeConstraint]:
    shapes = []
    for raw in data.get("shapes", []):
        props = {}
        for name, rule in raw.get("properties", {}).items():
            pr = PropertyRule(
                required=bool(rule.get("required", False)),
                min_count=int(rule.get("min_count", 0)),
                max_count=int(rule.get("max_count", 1)),
                datatype=str(rule.get("datatype", "string")),
            )
            if not (0 <= pr.min_count <= pr.max_count):
                raise ShapeFileError(f"shape property '{name}': need 0 <= min <= max")
            if pr.datatype not in DATATYPES:
                raise ShapeFileError(f"shape property '{name}': unknown datatype '{pr.datatype}'")
            props[name] = pr
        if not raw.get("target_class"):
            raise ShapeFileError("shape without target_class")
        shapes.append(ShapeConstraint(target_class=str(raw["target_class"]), properties=props))
    return shapes


def default_shapes() -> list[ShapeConstraint]:
    text = resources.files("slrpipe").joinpath("data", "default_shapes.json").read_text(encoding="utf-8")
    return parse_shapes(json.loads(text))


def validate_shapes(statements: list[KGStatement], shapes: list[ShapeConstraint]) -> list[ShapeViolation]:
    """Check required properties, cardinality bounds and datatypes per subject."""
    by_subject: dict[str, list[KGStatement]] = {}
    for s in statements:
        by_subject.setdefault(s.subject, []).append(s)
    violations = []
    for subject in sorted(by_subject):
        stmts = by_subject[subject]
        classes = {s.object for s in stmts if s.predicate == "type"}
        for shape in shapes:
            if shape.target_class not in classes:
                continue
            for prop in sorted(shape.properties):
                rule = shape.properties[prop]
                matching = [s for s in stmts if s.predicate == prop]
                count = len(matching)
                if count == 0:
                    if rule.required:
                        violations.append(ShapeViolation(
                            subject, prop, "missing-required",
                            f"required property '{prop}' absent on '{subject}'"))
                    continue
                if count < rule.min_count or count > rule.max_count:
                    violations.append(ShapeViolation(
                        subject, prop, "cardinality",
                        f"'{prop}' on '{subject}' occurs {count} times, "
                        f"allowed [{rule.min_count}, {rule.max_count}]"))
                for s in matching:
                    if s.datatype != rule.datatype:
                        violations.append(ShapeViolation(
                            subject, prop, "datatype",
                            f"'{prop}' on '{subject}' typed {s.datatype}, expected {rule.datatype}"))
    return violations


# ---------------------------------------------------------------------------
# Report skeleton
# ---------------------------------------------------------------------------

def build_report(
    rqs,
    criteria,
    decision_counts: dict[str, int],
    rankings,
    comparison_md: str | None,
    claims: list[Claim],
    claim_violations: list[ClaimViolation],
    conflicts: list[Conflict],
    gap_report=None,
    partitions=None,
    revision: str = "",
    top_n: int = 10,
    decisions: dict[str, str] | None = None,
) -> str:
    """Markdown outline: methods with screening counts, one section per RQ,
    and an audit-checklist appendix. Excluded documents never appear."""
    decisions = decisions or {}
    valid_ids = {c.id for c in claims} - {v.claim_id for v in claim_violations}
    lines = ["# Literature review report", ""]
    if revision:
        lines += [f"revision: {revision}", ""]
    lines += ["## Methods", "", "### Screening criteria", ""]
    if criteria:
        for c in criteria:
            lines.append(f"- {c.id} ({c.kind} {c.field} {c.op} {json.dumps(c.value)}): {c.rationale}")
    else:
        lines.append("- none defined")
    lines += ["", "### Screening counts", ""]
    for key in ("candidates", "included", "excluded", "deferred"):
        lines.append(f"- {key}: {decision_counts.get(key, 0)}")
    lines.append("")
    rankings_by_rq = {r.rq_id: r for r in rankings}
    lines += ["## Research questions", ""]
    if not rqs:
        lines += ["- none defined", ""]
    for rq in rqs:
        lines += [f"### {rq.id}: {rq.text}", ""]
        result = rankings_by_rq.get(rq.id)
        kept = [s for s in (result.scores if result else [])
                if decisions.get(s.doc_id, "deferred") != "excluded"]
        if kept:
            lines.append("Top ranked documents:")
            lines.append("")
            for rank, s in enumerate(kept[:top_n], start=1):
                lines.append(f"{rank}. [[{s.doc_id}]] ({_fmt(s.score)})")
            lines.append("")
        lines += ["#### Comparison", ""]
        if comparison_md:
            lines.append(comparison_md.rstrip())
        else:
            lines.append("_No comparison available._")
        lines += ["", "#### Claims", ""]
        valid_claims = [c for c in claims if c.id in valid_ids]
        if valid_claims:
            for c in valid_claims:
                lines.append(f"- **{c.id}**: {c.statement}")
                lines.append(f"  - evidence: {', '.join(c.evidence)}")
                lines.append(f"  - warrant: {c.warrant}")
        else:
            lines.append("_No validated claims._")
        lines.append("")
    lines += ["## Audit checklist", ""]
    open_conflicts = [c for c in conflicts if c.status != "resolved"]
    lines.append(f"- unresolved comparison conflicts: {len(open_conflicts)}")
    for c in open_conflicts:
        values = ", ".join(v if isinstance(v, str) else json.dumps(v) for v in c.values)
        lines.append(f"  - ({c.property}, {c.doc_id}): {values}")
    lines.append(f"- claim violations: {len(claim_violations)}")
    for v in claim_violations:
        lines.append(f"  - {v.claim_id} [{v.kind}]: {v.detail}")
    lines.append(f"- deferred documents: {decision_counts.get('deferred', 0)}")
    if gap_report is not None:
        n_kw = sum(len(v) for v in gap_report.missing_keywords.values())
        lines.append(f"- keyword coverage gaps: {n_kw}")
        for rq_id, kws in sorted(gap_report.missing_keywords.items()):
            lines.append(f"  - {rq_id}: {', '.join(kws)}")
        lines.append(f"- documents with missing metadata: {len(gap_report.missing_metadata)}")
    if partitions:
        lines.append(f"- partitions: {len(partitions)}")
        for p in partitions:
            sizes: dict[str, int] = {}
            for label in p.assignment.values():
                sizes[label] = sizes.get(label, 0) + 1
            summary = ", ".join(f"{k}: {v}" for k, v in sorted(sizes.items()))
            lines.append(f"  - {p.name}: {summary}")
    return "\n".join(lines).rstrip() + "\n"
