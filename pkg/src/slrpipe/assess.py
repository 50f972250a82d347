"""Requirement catalog plus agreement-survey statistics.

The 65-entry catalog ships as package data. Survey answers use a 9-point
agreement scale A1..A9 (A1 = strongly agree = numeric 1, so lower is
better) with A10 meaning "no answer"; A10 never enters any statistic.
Quantiles are type-7 (linear interpolation) and whiskers follow the
1.5 * IQR rule, clipped to observed values.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

_STAGE_TASKS = {"I": {1, 2}, "II": {3, 4, 5}, "III": {6, 7}, "IV": {8}}
NO_ANSWER = 10


class CatalogIntegrityError(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class Requirement:
    id: int
    stage: str
    task: int
    task_name: str
    step: str
    result: str
    text: str


@dataclass
class RequirementCatalog:
    entries: list[Requirement]

    def by_id(self, req_id: int) -> Requirement:
        return self.entries[req_id - 1]

    @property
    def tasks(self) -> dict[int, str]:
        return {e.task: e.task_name for e in self.entries}

    @property
    def stages(self) -> list[str]:
        return sorted({e.stage for e in self.entries}, key=list(_STAGE_TASKS).index)


def load_catalog() -> RequirementCatalog:
    """Load and integrity-check the shipped requirement catalog."""
    raw = json.loads(
        resources.files("slrpipe").joinpath("data", "requirements.json").read_text(encoding="utf-8")
    )
    entries = [Requirement(**e) for e in raw["entries"]]
    problems = []
    if len(entries) != 65:
        problems.append(f"expected 65 entries, found {len(entries)}")
    for i, e in enumerate(entries, start=1):
        if e.id != i:
            problems.append(f"entry {i}: id {e.id} breaks the contiguous 1..65 numbering")
        if e.stage not in _STAGE_TASKS:
            problems.append(f"entry {e.id}: unknown stage '{e.stage}'")
        elif e.task not in _STAGE_TASKS[e.stage]:
            problems.append(f"entry {e.id}: task {e.task} not in stage {e.stage}")
        if not e.text.strip():
            problems.append(f"entry {e.id}: empty requirement text")
    tasks = {e.task for e in entries}
    if tasks != set(range(1, 9)):
        problems.append(f"expected tasks 1..8, found {sorted(tasks)}")
    if problems:
        raise CatalogIntegrityError(problems)
    return RequirementCatalog(entries=entries)


def catalog_checksum(catalog: RequirementCatalog) -> str:
    """SHA-256 over the canonical serialization of all 65 requirement texts."""
    import hashlib

    canonical = "\n".join(f"{e.id}\t{e.stage}\t{e.task}\t{e.task_name}\t{e.step}\t{e.result}\t{e.text}"
                          for e in catalog.entries)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Responses
# ---------------------------------------------------------------------------

@dataclass
class LikertResponse:
    respondent: str
    tool: str
    answers: dict[int, int]            # requirement id -> 1..10 (10 = no answer)
    duration_minutes: float | None = None
    demographics: dict[str, str] = field(default_factory=dict)


_ANSWER_RE = re.compile(r"^a?(\d{1,2})$", re.IGNORECASE)


def _parse_answer(raw: str) -> int:
    m = _ANSWER_RE.match(raw.strip())
    if not m:
        raise ValueError(f"invalid answer '{raw}' (expected A1..A10)")
    value = int(m.group(1))
    if not 1 <= value <= 10:
        raise ValueError(f"answer out of range: '{raw}'")
    return value


def load_responses(path) -> list[LikertResponse]:
    """Read the response CSV: one row per respondent, columns R1..R65 plus
    respondent, tool and duration_minutes; anything else lands in demographics."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    responses = []
    for row in reader:
        answers = {}
        demographics = {}
        respondent = tool = ""
        duration = None
        for key, value in row.items():
            if key is None or value is None:
                continue
            key_norm = key.strip()
            m = re.fullmatch(r"[Rr](\d{1,2})", key_norm)
            if m and 1 <= int(m.group(1)) <= 65:
                if value.strip():
                    answers[int(m.group(1))] = _parse_answer(value)
                continue
            if key_norm.lower() == "respondent":
                respondent = value.strip()
            elif key_norm.lower() == "tool":
                tool = value.strip()
            elif key_norm.lower() in ("duration", "duration_minutes"):
                if value.strip():
                    duration = float(value)
            elif value.strip():
                demographics[key_norm] = value.strip()
        responses.append(LikertResponse(
            respondent=respondent, tool=tool, answers=answers,
            duration_minutes=duration, demographics=demographics,
        ))
    return responses


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def quantile_type7(sorted_values: list[float], p: float) -> float:
    """Linear-interpolation quantile (type 7) over an already sorted sample."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("no values")
    if n == 1:
        return float(sorted_values[0])
    h = (n - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, n - 1)
    frac = h - lo
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo])


@dataclass
class AgreementStats:
    requirement_id: int
    n: int
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list[float]

    def to_json(self) -> dict:
        return {
            "requirement_id": self.requirement_id, "n": self.n, "median": self.median,
            "q1": self.q1, "q3": self.q3, "whisker_low": self.whisker_low,
            "whisker_high": self.whisker_high, "outliers": self.outliers,
        }


def aggregate_likert(responses: list[LikertResponse], requirement_id: int) -> AgreementStats | None:
    """Boxplot statistics for one requirement; None when only no-answers exist."""
    values = sorted(
        float(r.answers[requirement_id])
        for r in responses
        if r.answers.get(requirement_id) not in (None, NO_ANSWER)
    )
    if not values:
        return None
    q1 = quantile_type7(values, 0.25)
    med = quantile_type7(values, 0.5)
    q3 = quantile_type7(values, 0.75)
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = [v for v in values if lo_fence <= v <= hi_fence]
    return AgreementStats(
        requirement_id=requirement_id,
        n=len(values),
        median=med,
        q1=q1,
        q3=q3,
        whisker_low=min(inside),
        whisker_high=max(inside),
        outliers=[v for v in values if v < lo_fence or v > hi_fence],
    )


def descriptive_stats(values: list[float]) -> dict:
    """n, mean, sample standard deviation (n-1), min, max; sd of a singleton is 0."""
    if not values:
        raise ValueError("descriptive_stats needs at least one value")
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        sd = 0.0
    else:
        sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
    return {"n": n, "mean": mean, "sd": sd, "min": min(values), "max": max(values)}


def _median_or_none(values: list[float]) -> float | None:
    if not values:
        return None
    return quantile_type7(sorted(values), 0.5)


@dataclass
class CoverageMatrix:
    tools: list[str]
    requirement_ids: list[int]
    cells: dict[str, dict[int, float | None]]
    task_rollups: dict[str, dict[int, float | None]]


def coverage_matrix(responses: list[LikertResponse], catalog: RequirementCatalog) -> CoverageMatrix:
    """Median agreement per tool and requirement, with per-task rollups.

    Cells with no data stay None, which is distinct from any agreement level.
    """
    if not responses:
        raise ValueError("no assessments")
    tools = sorted({r.tool for r in responses})
    req_ids = [e.id for e in catalog.entries]
    cells: dict[str, dict[int, float | None]] = {}
    rollups: dict[str, dict[int, float | None]] = {}
    for tool in tools:
        tool_rows = [r for r in responses if r.tool == tool]
        cells[tool] = {}
        pooled: dict[int, list[float]] = {e.task: [] for e in catalog.entries}
        for req in catalog.entries:
            values = [
                float(r.answers[req.id]) for r in tool_rows
                if r.answers.get(req.id) not in (None, NO_ANSWER)
            ]
            cells[tool][req.id] = _median_or_none(values)
            pooled[req.task].extend(values)
        rollups[tool] = {task: _median_or_none(vals) for task, vals in pooled.items()}
    return CoverageMatrix(tools=tools, requirement_ids=req_ids, cells=cells, task_rollups=rollups)


def coverage_to_csv(matrix: CoverageMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["tool"] + [f"R{i}" for i in matrix.requirement_ids]
                    + [f"task{t}" for t in sorted(next(iter(matrix.task_rollups.values()), {}))])
    for tool in matrix.tools:
        row = [tool]
        for req_id in matrix.requirement_ids:
            value = matrix.cells[tool][req_id]
            row.append("" if value is None else f"{value:g}")
        for task in sorted(matrix.task_rollups[tool]):
            value = matrix.task_rollups[tool][task]
            row.append("" if value is None else f"{value:g}")
        writer.writerow(row)
    return buf.getvalue()
