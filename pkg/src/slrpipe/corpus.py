"""Corpus ingestion: bibliographic metadata, document texts, chapters,
duplicate detection and coverage gaps.

Document texts are plain UTF-8 sidecar files named `corpus/<id>.txt`;
turning PDFs into text is an external preprocessing step.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .textproc import BagOfWords

_DOI_RE = re.compile(r"^10\.\d+/\S+$")
_DOI_PREFIXES = ("https://doi.org/", "http://doi.org/", "https://dx.doi.org/",
                 "http://dx.doi.org/", "doi.org/", "doi:")


class IngestionError(Exception):
    pass


@dataclass
class Metadata:
    id: str
    title: str
    authors: list[str] = field(default_factory=list)
    year: int | None = None
    venue: str | None = None
    doi: str | None = None
    keywords: list[str] = field(default_factory=list)
    language: str | None = None


@dataclass
class Chapter:
    heading: str
    level: int
    body: str
    char_span: tuple[int, int]


@dataclass
class Document:
    meta: Metadata
    raw_text: str | None = None
    chapters: list[Chapter] = field(default_factory=list)
    bow: BagOfWords | None = None
    # attached by the vectorize stage (DocVector); absent until it has run
    tfidf: object | None = None
    embedding: object | None = None


@dataclass
class BibliographyParse:
    records: list[Metadata]
    warnings: list[str]


def normalize_doi(raw: str) -> str | None:
    """Strip URL prefixes, lowercase; returns None when the remainder is not a DOI."""
    doi = raw.strip()
    lowered = doi.lower()
    for prefix in _DOI_PREFIXES:
        if lowered.startswith(prefix):
            doi = doi[len(prefix):]
            lowered = doi.lower()
    doi = doi.strip().lower()
    return doi if _DOI_RE.match(doi) else None


def slugify(title: str, year: int | None = None) -> str:
    text = unicodedata.normalize("NFKC", title).lower()
    slug = re.sub(r"[^a-z0-9]+", "-", text).strip("-")
    if not slug:
        slug = "untitled"
    return f"{slug}-{year}" if year is not None else slug


def _unique_ids(records: list[Metadata]) -> None:
    seen: dict[str, int] = {}
    for rec in records:
        n = seen.get(rec.id, 0)
        seen[rec.id] = n + 1
        if n:
            rec.id = f"{rec.id}-{n + 1}"


# ---------------------------------------------------------------------------
# BibTeX
# ---------------------------------------------------------------------------

def _strip_braces(value: str) -> str:
    return re.sub(r"\s+", " ", value.replace("{", "").replace("}", "")).strip()


def _parse_bibtex_value(raw: str) -> str | None:
    """Handle {..}, ".." and bare values, including '#' concatenation of literals."""
    parts = []
    for piece in _split_top_level(raw, "#"):
        piece = piece.strip()
        if not piece:
            return None
        if piece.startswith("{") and piece.endswith("}"):
            parts.append(piece[1:-1])
        elif piece.startswith('"') and piece.endswith('"'):
            parts.append(piece[1:-1])
        elif re.fullmatch(r"[\w.\-]+", piece):
            parts.append(piece)
        else:
            return None
    return "".join(parts)


def _split_top_level(text: str, sep: str) -> list[str]:
    parts, depth, quote, start = [], 0, False, 0
    for i, c in enumerate(text):
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
        elif c == '"' and depth == 0:
            quote = not quote
        elif c == sep and depth == 0 and not quote:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return parts


def _bibtex_entries(text: str):
    """Yield (entry_type, body, position) with per-entry recovery."""
    i = 0
    while True:
        at = text.find("@", i)
        if at < 0:
            return
        m = re.match(r"@\s*(\w+)\s*\{", text[at:])
        if not m:
            yield None, text[at:at + 40], at
            i = at + 1
            continue
        depth, j = 1, at + m.end()
        while j < len(text) and depth:
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
            j += 1
        if depth:
            yield None, text[at:at + 40], at
            return
        yield m.group(1).lower(), text[at + m.end():j - 1], at
        i = j


def _metadata_from_bibtex(body: str, warnings: list[str]) -> Metadata | None:
    segments = _split_top_level(body, ",")
    key = segments[0].strip()
    if not key or "=" in key:
        return None
    fields: dict[str, str] = {}
    for seg in segments[1:]:
        if "=" not in seg:
            if seg.strip():
                warnings.append(f"entry '{key}': unparseable field segment '{seg.strip()[:40]}'")
            continue
        name, _, raw = seg.partition("=")
        value = _parse_bibtex_value(raw)
        if value is None:
            warnings.append(f"entry '{key}': dropped field '{name.strip()}'")
            continue
        fields[name.strip().lower()] = value

    title = _strip_braces(fields.get("title", ""))
    if not title:
        warnings.append(f"entry '{key}': missing title, skipped")
        return None
    year = None
    if "year" in fields:
        ym = re.search(r"\d{4}", fields["year"])
        if ym:
            year = int(ym.group())
        else:
            warnings.append(f"entry '{key}': unparseable year '{fields['year']}'")
    else:
        warnings.append(f"entry '{key}': missing year")
    doi = None
    if "doi" in fields:
        doi = normalize_doi(_strip_braces(fields["doi"]))
        if doi is None:
            warnings.append(f"entry '{key}': invalid doi '{fields['doi']}'")
    authors = []
    if "author" in fields:
        for name in re.split(r"\s+and\s+", _strip_braces(fields["author"])):
            name = name.strip()
            if not name:
                continue
            if "," in name:
                last, _, first = name.partition(",")
                name = f"{first.strip()} {last.strip()}".strip()
            authors.append(name)
    venue = _strip_braces(fields.get("journal") or fields.get("booktitle") or "") or None
    keywords = [k.strip() for k in re.split(r"[,;]", fields.get("keywords", "")) if k.strip()]
    language = _strip_braces(fields.get("language", "")) or None
    return Metadata(
        id=slugify(title, year),
        title=title,
        authors=authors,
        year=year,
        venue=venue,
        doi=doi,
        keywords=keywords,
        language=language,
    )


def _parse_bibtex(text: str) -> BibliographyParse:
    records, warnings = [], []
    for etype, body, pos in _bibtex_entries(text):
        if etype is None:
            warnings.append(f"malformed entry at offset {pos}: '{body.strip()[:40]}', skipped")
            continue
        if etype in ("comment", "preamble"):
            continue
        if etype == "string":
            warnings.append(f"@string at offset {pos} not supported, skipped")
            continue
        meta = _metadata_from_bibtex(body, warnings)
        if meta is None:
            if not warnings or "skipped" not in warnings[-1]:
                warnings.append(f"malformed entry at offset {pos}, skipped")
            continue
        records.append(meta)
    _unique_ids(records)
    return BibliographyParse(records, warnings)


# ---------------------------------------------------------------------------
# CSL-JSON
# ---------------------------------------------------------------------------

def _csl_name(author: dict) -> str:
    if author.get("literal"):
        return str(author["literal"])
    given, family = author.get("given", ""), author.get("family", "")
    return f"{given} {family}".strip()


def _parse_csl_json(text: str) -> BibliographyParse:
    records, warnings = [], []
    items = json.loads(text)
    if isinstance(items, dict):
        items = items.get("items", [])
    for i, item in enumerate(items):
        if not isinstance(item, dict) or not str(item.get("title", "")).strip():
            warnings.append(f"item {i}: missing title, skipped")
            continue
        title = re.sub(r"\s+", " ", str(item["title"])).strip()
        year = None
        issued = item.get("issued") or {}
        parts = issued.get("date-parts") or []
        if parts and parts[0] and str(parts[0][0]).lstrip("-").isdigit():
            year = int(parts[0][0])
        else:
            warnings.append(f"item {i} ('{title[:30]}'): missing year")
        doi = None
        if item.get("DOI"):
            doi = normalize_doi(str(item["DOI"]))
            if doi is None:
                warnings.append(f"item {i}: invalid doi '{item['DOI']}'")
        authors = [_csl_name(a) for a in item.get("author", []) if _csl_name(a)]
        venue = str(item.get("container-title") or item.get("publisher") or "").strip() or None
        kw = item.get("keyword", "")
        if isinstance(kw, str):
            keywords = [k.strip() for k in re.split(r"[,;]", kw) if k.strip()]
        else:
            keywords = [str(k).strip() for k in kw if str(k).strip()]
        records.append(Metadata(
            id=slugify(title, year),
            title=title,
            authors=authors,
            year=year,
            venue=venue,
            doi=doi,
            keywords=keywords,
            language=str(item.get("language", "")).strip() or None,
        ))
    _unique_ids(records)
    return BibliographyParse(records, warnings)


def parse_bibliography(path, format: str) -> BibliographyParse:
    """Parse a BibTeX or CSL-JSON bibliography; malformed entries are skipped with warnings."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestionError(f"cannot read bibliography '{path}': {exc}") from exc
    if format == "bibtex":
        return _parse_bibtex(text)
    if format == "csl-json":
        try:
            return _parse_csl_json(text)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"invalid CSL-JSON in '{path}': {exc}") from exc
    raise ValueError(f"unknown bibliography format '{format}'")


def load_corpus_texts(records: list[Metadata], corpus_dir) -> tuple[list[Document], list[str]]:
    """Attach `<corpus_dir>/<id>.txt` sidecar texts where present."""
    corpus_dir = Path(corpus_dir)
    docs, warnings = [], []
    for meta in records:
        doc = Document(meta=meta)
        txt = corpus_dir / f"{meta.id}.txt"
        if txt.exists():
            try:
                doc.raw_text = txt.read_text(encoding="utf-8")
                doc.chapters = segment_chapters(doc.raw_text)
            except UnicodeDecodeError as exc:
                raise IngestionError(f"cannot decode '{txt}': {exc}") from exc
        else:
            warnings.append(f"no text file for '{meta.id}'")
        docs.append(doc)
    return docs, warnings


# ---------------------------------------------------------------------------
# Chapter segmentation
# ---------------------------------------------------------------------------

_MD_HEADING_RE = re.compile(r"^(#{1,6})\s+\S")
_NUM_HEADING_RE = re.compile(r"^(\d+(?:\.\d+)*)\.?\s+\S")


def _heading_level(line: str) -> int | None:
    stripped = line.strip()
    if not stripped or len(stripped) > 100:
        return None
    m = _MD_HEADING_RE.match(stripped)
    if m:
        return len(m.group(1))
    m = _NUM_HEADING_RE.match(stripped)
    if m:
        return m.group(1).count(".") + 1
    letters = [c for c in stripped if c.isalpha()]
    if len(letters) >= 3 and all(c.isupper() for c in letters):
        return 1
    return None


def segment_chapters(raw_text: str) -> list[Chapter]:
    """Split a text at detected headings; the chapter spans partition the text.

    Headings are detected per line: markdown '#', numbered '1.' / '1.1', or
    all-caps lines. Text before the first heading becomes a level-0 preamble.
    """
    if not raw_text:
        return []
    lines = raw_text.splitlines(keepends=True)
    offsets = []
    pos = 0
    for line in lines:
        offsets.append(pos)
        pos += len(line)
    headings = []  # (line_index, level)
    for i, line in enumerate(lines):
        level = _heading_level(line)
        if level is not None:
            headings.append((i, level))
    chapters: list[Chapter] = []
    if not headings:
        return [Chapter(heading="", level=0, body=raw_text, char_span=(0, len(raw_text)))]
    first_start = offsets[headings[0][0]]
    if first_start > 0:
        chapters.append(Chapter(
            heading="", level=0, body=raw_text[:first_start], char_span=(0, first_start)
        ))
    for n, (idx, level) in enumerate(headings):
        start = offsets[idx]
        end = offsets[headings[n + 1][0]] if n + 1 < len(headings) else len(raw_text)
        heading_line = lines[idx]
        body_start = start + len(heading_line)
        chapters.append(Chapter(
            heading=heading_line.rstrip("\r\n"),
            level=level,
            body=raw_text[body_start:end],
            char_span=(start, end),
        ))
    return chapters


# ---------------------------------------------------------------------------
# Duplicates
# ---------------------------------------------------------------------------

@dataclass
class DuplicatePair:
    a: str
    b: str
    evidence: str           # doi-match | title-exact | title-fuzzy
    score: float | None = None


@dataclass
class DuplicateGroup:
    members: list[str]
    evidence: list[DuplicatePair]


@dataclass
class DuplicateReport:
    groups: list[DuplicateGroup]

    def to_json(self) -> dict:
        return {"groups": [
            {
                "members": g.members,
                "evidence": [
                    {"a": p.a, "b": p.b, "evidence": p.evidence,
                     **({"score": round(p.score, 6)} if p.score is not None else {})}
                    for p in g.evidence
                ],
            }
            for g in self.groups
        ]}


def normalize_title(title: str) -> str:
    text = unicodedata.normalize("NFKC", title).lower()
    text = re.sub(r"[^a-z0-9\s]", " ", text)
    return re.sub(r"\s+", " ", text).strip()


def _trigrams(text: str) -> set[str]:
    if len(text) < 3:
        return {text} if text else set()
    return {text[i:i + 3] for i in range(len(text) - 2)}


def trigram_jaccard(a: str, b: str) -> float:
    ta, tb = _trigrams(a), _trigrams(b)
    if not ta and not tb:
        return 1.0
    union = ta | tb
    return len(ta & tb) / len(union) if union else 0.0


def detect_duplicates(corpus: list[Document], fuzzy_threshold: float = 0.9) -> DuplicateReport:
    """Group documents by DOI match, exact normalized title, or trigram-Jaccard title similarity."""
    metas = [d.meta for d in corpus]
    ids = [m.id for m in metas]
    if len(set(ids)) != len(ids):
        raise ValueError("corpus ids must be unique")
    norm_titles = {m.id: normalize_title(m.title) for m in metas}
    pairs: list[DuplicatePair] = []
    for i in range(len(metas)):
        for j in range(i + 1, len(metas)):
            a, b = metas[i], metas[j]
            if a.doi and b.doi and a.doi == b.doi:
                pairs.append(DuplicatePair(a.id, b.id, "doi-match"))
                continue
            ta, tb = norm_titles[a.id], norm_titles[b.id]
            if ta and ta == tb:
                pairs.append(DuplicatePair(a.id, b.id, "title-exact"))
                continue
            score = trigram_jaccard(ta, tb)
            if score >= fuzzy_threshold:
                pairs.append(DuplicatePair(a.id, b.id, "title-fuzzy", score=score))
    # transitive closure via union-find
    parent = {i: i for i in ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in pairs:
        ra, rb = find(p.a), find(p.b)
        if ra != rb:
            parent[ra] = rb
    clusters: dict[str, list[str]] = {}
    for doc_id in ids:
        clusters.setdefault(find(doc_id), []).append(doc_id)
    groups = []
    for members in clusters.values():
        if len(members) < 2:
            continue
        member_set = set(members)
        evidence = [p for p in pairs if p.a in member_set]
        groups.append(DuplicateGroup(members=sorted(members), evidence=evidence))
    groups.sort(key=lambda g: g.members[0])
    return DuplicateReport(groups=groups)


# ---------------------------------------------------------------------------
# Coverage gaps
# ---------------------------------------------------------------------------

@dataclass
class GapReport:
    missing_keywords: dict[str, list[str]]      # rq id -> keywords with zero corpus hits
    missing_metadata: dict[str, list[str]]      # doc id -> absent metadata fields

    def to_json(self) -> dict:
        return {
            "missing_keywords": {k: list(v) for k, v in sorted(self.missing_keywords.items())},
            "missing_metadata": {k: list(v) for k, v in sorted(self.missing_metadata.items())},
        }


def coverage_report(corpus: list[Document], rqs) -> GapReport:
    """Keywords whose post-pipeline form occurs in no bag, and docs missing metadata fields."""
    seen_terms: set[str] = set()
    for doc in corpus:
        if doc.bow is not None:
            seen_terms.update(doc.bow.counts)
    missing_keywords = {}
    for rq in rqs:
        gaps = sorted({kw.term for kw in rq.keywords if kw.term and kw.term not in seen_terms})
        if gaps:
            missing_keywords[rq.id] = gaps
    missing_metadata = {}
    for doc in corpus:
        absent = [f for f in ("year", "venue", "doi") if getattr(doc.meta, f) is None]
        if absent:
            missing_metadata[doc.meta.id] = absent
    return GapReport(missing_keywords=missing_keywords, missing_metadata=missing_metadata)
