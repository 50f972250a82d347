"""Local HTTP API over a project directory.

The API and the CLI observe the same project state: reads come from the
latest select-run artifacts plus fresh reads of the decision/annotation
logs, and writes append to the very logs the CLI uses. Write endpoints
return 409 while a CLI stage holds the project lock. Localhost-only by
default; this is a single-researcher desk tool.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import assess, export, screen, vectorize
from .cli import (
    decision_log, effective_decisions, load_annotation_streams, load_corpus,
    load_rqs, load_select_artifacts, pipeline_config,
)
from .project import ProjectConfig, RunSpace, lock_held
from .query import rank_documents, write_research_questions


class DecisionBody(BaseModel):
    doc_id: str
    decision: str
    actor: str = "ui"
    note: str = ""


class AnnotationBody(BaseModel):
    doc_id: str
    property: str
    value: object = None
    role: str = "note"
    actor: str = "ui"
    span: tuple[int, int] | None = None
    chapter: int | None = None


class WeightsBody(BaseModel):
    weights: dict[str, float]


class ApiState:
    """Project handle plus the select-run snapshot the API serves from."""

    def __init__(self, config: ProjectConfig):
        self.config = config
        self.runspace = RunSpace(config.root)
        self.docs, _ = load_corpus(config)
        self.by_id = {d.meta.id: d for d in self.docs}
        self.pcfg = pipeline_config(config)
        self.rqs = load_rqs(config, self.pcfg)
        artifacts = load_select_artifacts(config, self.runspace)
        self.index = artifacts["index"]
        self.tfidf = artifacts["tfidf"]
        self.similarity = {
            "tfidf": artifacts["similarity_tfidf"],
            "embedding": artifacts["similarity_embedding"],
        }
        self.alpha = float(artifacts["rankings_raw"].get("alpha", 0.0))
        self.rankings: dict[str, list[dict]] = artifacts["rankings_raw"]["rankings"]
        self.embeddings = None
        if self.alpha > 0.0:
            run_dir = artifacts["run_dir"]
            model_raw = json.loads((run_dir / "embedding_model.json").read_text(encoding="utf-8"))
            model = vectorize.EmbeddingModel(
                k=model_raw["k"], seed=model_raw["seed"],
                word_vectors={t: np.array(v) for t, v in model_raw["vectors"].items()},
            )
            dv_raw = json.loads((run_dir / "doc_embeddings.json").read_text(encoding="utf-8"))
            doc_vecs = {d: vectorize.DocVector(weights=v["weights"], norm=v["norm"])
                        for d, v in dv_raw.items()}
            self.embeddings = (model, doc_vecs)

    def rq(self, rq_id: str):
        for rq in self.rqs:
            if rq.id == rq_id:
                return rq
        return None

    def rerank(self, rq) -> None:
        result = rank_documents(rq, self.index, self.tfidf, self.embeddings, self.alpha)
        self.rankings[rq.id] = [
            {"doc_id": s.doc_id, "score": s.score, "rank": i + 1,
             "contributions": [[t, c] for t, c in s.contributions]}
            for i, s in enumerate(result.scores)
        ]

    def decisions(self) -> dict[str, str]:
        return effective_decisions(self.config)


def _rq_json(rq) -> dict:
    return {
        "id": rq.id,
        "text": rq.text,
        "scope": rq.scope_note,
        "perspective": rq.perspective_note,
        "keywords": [{
            "raw": kw.raw, "term": kw.term, "weight": kw.weight,
            "synonyms": kw.synonyms_raw, "context": kw.context_raw,
        } for kw in rq.keywords],
    }


def create_app(config: ProjectConfig, ui_dir: str | None = None) -> FastAPI:
    state = ApiState(config)
    app = FastAPI(title="slrpipe API", version="0.1.0")

    def guard_writes():
        if lock_held(config.root):
            raise HTTPException(status_code=409, detail="project lock held by a CLI stage")

    @app.get("/corpus")
    def get_corpus():
        decisions = state.decisions()
        return [{
            "id": d.meta.id, "title": d.meta.title, "year": d.meta.year,
            "venue": d.meta.venue, "doi": d.meta.doi,
            "decision": decisions.get(d.meta.id, "deferred"),
            "has_text": d.raw_text is not None,
        } for d in sorted(state.docs, key=lambda d: d.meta.id)]

    @app.get("/documents/{doc_id}")
    def get_document(doc_id: str):
        doc = state.by_id.get(doc_id)
        if doc is None:
            raise HTTPException(status_code=404, detail=f"unknown document '{doc_id}'")
        decisions = state.decisions()
        scores = {rq_id: next((r["score"] for r in rows if r["doc_id"] == doc_id), 0.0)
                  for rq_id, rows in state.rankings.items()}
        sims = state.similarity[state.config.get("graph_space", "tfidf")]
        neighbours = sorted(
            ((other, sims.get(doc_id, other)) for other in state.by_id if other != doc_id),
            key=lambda x: (-x[1], x[0]))[:int(state.config.get("vault_top_k", 5))]
        return {
            "id": doc.meta.id, "title": doc.meta.title, "authors": doc.meta.authors,
            "year": doc.meta.year, "venue": doc.meta.venue, "doi": doc.meta.doi,
            "keywords": doc.meta.keywords,
            "decision": decisions.get(doc_id, "deferred"),
            "chapters": [{"heading": c.heading, "level": c.level} for c in doc.chapters],
            "rq_scores": scores,
            "similar": [{"id": o, "similarity": s} for o, s in neighbours],
        }

    @app.get("/rqs")
    def get_rqs():
        return [_rq_json(rq) for rq in state.rqs]

    @app.put("/rqs/{rq_id}")
    def put_rq(rq_id: str, body: WeightsBody):
        guard_writes()
        rq = state.rq(rq_id)
        if rq is None:
            raise HTTPException(status_code=404, detail=f"unknown research question '{rq_id}'")
        by_raw = {kw.raw: kw for kw in rq.keywords}
        by_term = {kw.term: kw for kw in rq.keywords}
        for name, weight in body.weights.items():
            kw = by_raw.get(name) or by_term.get(name)
            if kw is None:
                raise HTTPException(status_code=422,
                                    detail=f"rq '{rq_id}': unknown keyword '{name}'")
            if weight <= 0:
                raise HTTPException(
                    status_code=422,
                    detail=f"rq '{rq_id}' keyword '{kw.raw}': non-positive weight {weight}")
        for name, weight in body.weights.items():
            kw = by_raw.get(name) or by_term.get(name)
            kw.weight = weight
        rq_path = state.config.path("rq_file") or (state.config.root / "rqs.txt")
        rq_path.write_text(write_research_questions(state.rqs), encoding="utf-8")
        state.rerank(rq)
        return _rq_json(rq)

    @app.get("/rankings/{rq_id}")
    def get_rankings(rq_id: str):
        rows = state.rankings.get(rq_id)
        if rows is None:
            raise HTTPException(status_code=404, detail=f"unknown research question '{rq_id}'")
        return {"rq_id": rq_id, "alpha": state.alpha, "rankings": rows}

    @app.post("/decisions")
    def post_decision(body: DecisionBody):
        guard_writes()
        if body.doc_id not in state.by_id:
            raise HTTPException(status_code=404, detail=f"unknown document '{body.doc_id}'")
        log = decision_log(state.config)
        try:
            record = log.record_decision(body.doc_id, body.decision, body.actor, body.note,
                                         known_ids=set(state.by_id))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return record.to_json()

    @app.post("/annotations")
    def post_annotation(body: AnnotationBody):
        guard_writes()
        if body.doc_id not in state.by_id:
            raise HTTPException(status_code=404, detail=f"unknown document '{body.doc_id}'")
        actor = re.sub(r"[^A-Za-z0-9_-]", "-", body.actor) or "ui"
        ann_dir = state.config.path("annotations_dir") or (state.config.root / "annotations")
        ann_dir.mkdir(exist_ok=True)
        path = ann_dir / f"{actor}.jsonl"
        existing = screen.load_annotation_file(path) if path.exists() else []
        annotation = screen.Annotation(
            id=f"{actor}/{len(existing) + 1}", doc_id=body.doc_id,
            property=body.property, value=body.value, role=body.role,
            actor=actor, timestamp=screen.utc_now(),
            span=body.span, chapter=body.chapter,
        )
        doc = state.by_id[body.doc_id]
        problems = screen.validate_annotations(
            [annotation], {body.doc_id: len(doc.raw_text or "")})
        if problems:
            raise HTTPException(status_code=422, detail="; ".join(problems))
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(annotation.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
        return annotation.to_json()

    @app.get("/graph")
    def get_graph():
        space = state.config.get("graph_space", "tfidf")
        rankings = _results_from_rows(state.rankings)
        return export.build_graph(
            [d.meta for d in state.docs], state.similarity[space], rankings,
            state.decisions(),
            edge_threshold=float(state.config.get("graph_edge_threshold", 0.2)),
            space=space,
        )

    @app.get("/comparisons")
    def get_comparisons():
        streams = load_annotation_streams(state.config)
        merged, conflicts = screen.merge_annotations(streams)
        properties = state.config.get("comparison_properties") or sorted(
            {a.property for a in merged})
        if not properties:
            return {"properties": [], "contributions": [], "cells": [], "warnings": []}
        decisions = state.decisions()
        doc_ids = sorted({a.doc_id for a in merged}
                         & {i for i in state.by_id
                            if decisions.get(i, "deferred") != "excluded"})
        comparison = export.build_comparison(merged, properties, doc_ids)
        payload = comparison.to_json()
        payload["conflicts"] = [{
            "doc_id": c.doc_id, "property": c.property, "values": c.values,
            "annotation_ids": c.annotation_ids,
        } for c in conflicts]
        return payload

    @app.get("/stats/likert")
    def get_likert():
        responses_path = state.config.path("responses_file")
        if responses_path is None:
            raise HTTPException(status_code=404, detail="no responses file configured")
        responses = assess.load_responses(responses_path)
        catalog = assess.load_catalog()
        per_req = {}
        for req in catalog.entries:
            agg = assess.aggregate_likert(responses, req.id)
            per_req[f"R{req.id}"] = agg.to_json() if agg else None
        durations = [r.duration_minutes for r in responses if r.duration_minutes is not None]
        return {
            "per_requirement": per_req,
            "durations": assess.descriptive_stats(durations) if durations else None,
        }

    ui = ui_dir or os.environ.get("SLRPIPE_UI_DIR")
    if ui is None and (config.root / "ui").is_dir():
        ui = str(config.root / "ui")
    if ui and Path(ui).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui, html=True), name="ui")

    return app


def _results_from_rows(rankings: dict[str, list[dict]]):
    from .query import RankingResult, RelevanceScore
    results = []
    for rq_id, rows in sorted(rankings.items()):
        scores = [RelevanceScore(rq_id=rq_id, doc_id=r["doc_id"], score=r["score"],
                                 contributions=[(t, c) for t, c in r["contributions"]])
                  for r in rows]
        results.append(RankingResult(rq_id=rq_id, scores=scores))
    return results


def serve(config: ProjectConfig, host: str = "127.0.0.1", port: int = 8237) -> None:
    """Run the API with uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="info")
