"""Machine-readable research questions, boolean query compilation and
per-question relevance ranking.

The RQ file is a line-oriented key-value format with nested keyword blocks;
the grammar is documented in docs/formats.md. Keywords keep both their raw
surface form (used when rendering boolean queries for external engines) and
their pipeline-normalized form (used for matching against bags and vectors).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .textproc import PipelineConfig, normalize_keyword
from .vectorize import DocVector, EmbeddingModel, TermIndex

import numpy as np


class RQValidationError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class Keyword:
    raw: str
    term: str
    weight: float = 1.0
    synonyms_raw: list[str] = field(default_factory=list)
    synonyms: list[str] = field(default_factory=list)
    context_raw: list[str] = field(default_factory=list)
    context: list[str] = field(default_factory=list)


@dataclass
class ResearchQuestion:
    id: str
    text: str
    keywords: list[Keyword] = field(default_factory=list)
    scope_note: str = ""
    perspective_note: str = ""


@dataclass
class RelevanceScore:
    rq_id: str
    doc_id: str
    score: float
    contributions: list[tuple[str, float]]   # (keyword term, weighted share of score)


@dataclass
class RankingResult:
    rq_id: str
    scores: list[RelevanceScore]
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# RQ file parsing / writing
# ---------------------------------------------------------------------------

_RQ_KEYS = {"text", "scope", "perspective"}
_KW_KEYS = {"weight", "synonyms", "context"}


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_research_questions(path, config: PipelineConfig | None = None) -> list[ResearchQuestion]:
    """Parse the RQ file; all validation problems are collected and raised together."""
    config = config or PipelineConfig()
    text = Path(path).read_text(encoding="utf-8")
    errors: list[str] = []
    rqs: list[ResearchQuestion] = []
    current_rq: ResearchQuestion | None = None
    current_kw: Keyword | None = None

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("rq ") or line == "rq":
            rq_id = line[2:].strip()
            if not rq_id:
                errors.append(f"line {lineno}: rq without id")
                continue
            current_rq = ResearchQuestion(id=rq_id, text="")
            current_kw = None
            rqs.append(current_rq)
            continue
        if current_rq is None:
            errors.append(f"line {lineno}: content before any 'rq' block")
            continue
        if line.startswith("keyword ") or line == "keyword":
            raw_term = line[len("keyword"):].strip()
            if not raw_term:
                errors.append(f"line {lineno}: keyword without term")
                current_kw = None
                continue
            current_kw = Keyword(raw=raw_term, term=normalize_keyword(raw_term, config))
            current_rq.keywords.append(current_kw)
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got '{line}'")
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _KW_KEYS:
            if current_kw is None:
                errors.append(f"line {lineno}: '{key}' outside a keyword block")
                continue
            if key == "weight":
                try:
                    current_kw.weight = float(value)
                except ValueError:
                    errors.append(f"line {lineno}: non-numeric weight '{value}'")
            elif key == "synonyms":
                current_kw.synonyms_raw = _split_list(value)
                current_kw.synonyms = [normalize_keyword(s, config) for s in current_kw.synonyms_raw]
            else:
                current_kw.context_raw = _split_list(value)
                current_kw.context = [normalize_keyword(c, config) for c in current_kw.context_raw]
        elif key in _RQ_KEYS:
            if key == "text":
                current_rq.text = value
            elif key == "scope":
                current_rq.scope_note = value
            else:
                current_rq.perspective_note = value
        else:
            errors.append(f"line {lineno}: unknown key '{key}'")

    seen_ids = set()
    for rq in rqs:
        if rq.id in seen_ids:
            errors.append(f"duplicate rq id '{rq.id}'")
        seen_ids.add(rq.id)
        if not rq.keywords:
            errors.append(f"rq '{rq.id}': at least one keyword required")
        for kw in rq.keywords:
            if kw.weight <= 0:
                errors.append(f"rq '{rq.id}' keyword '{kw.raw}': non-positive weight {kw.weight}")
            if not kw.term:
                errors.append(f"rq '{rq.id}' keyword '{kw.raw}': normalizes to nothing")
    if errors:
        raise RQValidationError(errors)
    return rqs


def write_research_questions(rqs: list[ResearchQuestion]) -> str:
    """Serialize back to the RQ file format (inverse of parse_research_questions)."""
    lines = []
    for rq in rqs:
        lines.append(f"rq {rq.id}")
        lines.append(f"  text = {rq.text}")
        if rq.scope_note:
            lines.append(f"  scope = {rq.scope_note}")
        if rq.perspective_note:
            lines.append(f"  perspective = {rq.perspective_note}")
        for kw in rq.keywords:
            lines.append(f"  keyword {kw.raw}")
            lines.append(f"    weight = {kw.weight:g}")
            if kw.synonyms_raw:
                lines.append(f"    synonyms = {', '.join(kw.synonyms_raw)}")
            if kw.context_raw:
                lines.append(f"    context = {', '.join(kw.context_raw)}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Boolean query rendering
# ---------------------------------------------------------------------------

def compile_boolean_query(rq: ResearchQuestion) -> str:
    """Render a generic boolean query from the raw keyword forms.

    Keywords at or above the median weight are mandatory (AND); the rest are
    pooled into a single OR alternative. Groups are ordered by weight, then
    lexicographically; multiwords stay quoted as phrases.
    """
    median = statistics.median(kw.weight for kw in rq.keywords)
    groups = sorted(rq.keywords, key=lambda kw: (-kw.weight, kw.raw.lower()))

    def render(kw: Keyword) -> str:
        terms = [kw.raw] + sorted(kw.synonyms_raw, key=str.lower)
        return "(" + " OR ".join(f'"{t}"' for t in terms) + ")"

    high = [render(kw) for kw in groups if kw.weight >= median]
    low = [render(kw) for kw in groups if kw.weight < median]
    parts = list(high)
    if len(low) == 1:
        parts.append(low[0])
    elif low:
        parts.append("(" + " OR ".join(low) + ")")
    return " AND ".join(parts)


# ---------------------------------------------------------------------------
# Relevance ranking
# ---------------------------------------------------------------------------

def _keyword_word_vector(kw: Keyword, model: EmbeddingModel) -> np.ndarray | None:
    for term in [kw.term] + kw.synonyms:
        vec = model.word_vectors.get(term)
        if vec is not None:
            return vec
    return None


def rank_documents(
    rq: ResearchQuestion,
    index: TermIndex,
    tfidf_vecs: dict[str, DocVector],
    embeddings: tuple[EmbeddingModel, dict[str, DocVector]] | None = None,
    alpha: float = 0.0,
) -> RankingResult:
    """Score every document against the question's weighted keyword groups.

    Per keyword: the best normalized tf-idf entry over its synonym group,
    zeroed when a required context term is absent from the document; with
    alpha > 0 an embedding-cosine term is blended in. The document score is
    the weight-normalized sum, so scaling all weights leaves scores unchanged.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    if alpha > 0.0 and embeddings is None:
        raise ValueError("alpha > 0 requires embeddings")
    warnings = []
    vocab = set(index.df)
    groups = []
    for kw in rq.keywords:
        terms = sorted({index.canonical(t) for t in [kw.term] + kw.synonyms if t})
        known = [t for t in terms if t in vocab]
        if not known:
            warnings.append(f"keyword '{kw.raw}' not in vocabulary (no synonym either); contributes 0")
        context = sorted({index.canonical(t) for t in kw.context if t})
        groups.append((kw, known, context))
    total_weight = sum(kw.weight for kw in rq.keywords)

    model, doc_vecs = embeddings if embeddings is not None else (None, {})
    scores = []
    for doc_id in sorted(tfidf_vecs):
        vec = tfidf_vecs[doc_id]
        contributions = []
        score = 0.0
        for kw, known, context in groups:
            s = max((vec.weights.get(t, 0.0) for t in known), default=0.0)
            if context and not any(t in vec.weights for t in context):
                s = 0.0
            blended = (1.0 - alpha) * s
            if alpha > 0.0:
                word_vec = _keyword_word_vector(kw, model)
                dvec = doc_vecs.get(doc_id)
                if word_vec is not None and dvec is not None and dvec.norm > 0:
                    dense = np.array([dvec.weights.get(str(i), 0.0) for i in range(model.k)])
                    wnorm = float(np.linalg.norm(word_vec))
                    if wnorm > 0:
                        cos = float(np.dot(word_vec, dense) / wnorm)
                        blended += alpha * (1.0 + cos) / 2.0
            share = kw.weight * blended / total_weight
            contributions.append((kw.term, share))
            score += share
        scores.append(RelevanceScore(
            rq_id=rq.id, doc_id=doc_id, score=score, contributions=contributions,
        ))
    scores.sort(key=lambda s: (-s.score, s.doc_id))
    return RankingResult(rq_id=rq.id, scores=scores, warnings=warnings)


def suggest_keywords(
    seed_doc_ids: list[str],
    index: TermIndex,
    tfidf_vecs: dict[str, DocVector],
    top_n: int = 20,
) -> list[tuple[str, float]]:
    """Terms ranked by mean tf-idf weight across seed documents, top weight rescaled to 1."""
    if not seed_doc_ids:
        raise ValueError("seed set is empty")
    missing = [s for s in seed_doc_ids if s not in tfidf_vecs]
    if missing:
        raise ValueError(f"unknown seed documents: {missing}")
    sums: dict[str, float] = {}
    for doc_id in seed_doc_ids:
        for term, w in tfidf_vecs[doc_id].weights.items():
            sums[term] = sums.get(term, 0.0) + w
    n = len(seed_doc_ids)
    ranked = sorted(((t, s / n) for t, s in sums.items()), key=lambda x: (-x[1], x[0]))
    ranked = ranked[:top_n]
    if not ranked or ranked[0][1] == 0.0:
        return []
    top = ranked[0][1]
    return [(t, w / top) for t, w in ranked]
