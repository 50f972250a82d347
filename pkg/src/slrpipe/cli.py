"""Stage-oriented command line.

Seven stage commands cover the workflow from planning to reporting:

  plan        scaffold RQ/criteria templates, suggest keywords from seed docs
  search      compile boolean queries, duplicate report, coverage gap report
  select      the automated chain: bags -> index -> tf-idf -> embeddings
              -> similarity -> per-RQ rankings
  evaluate    apply in-/exclusion criteria, open the decision workflow
  analyze     merge annotation streams, report annotation conflicts
  synthesize  comparison tables, conflicts, patterns, claims, KG + shapes
  report      markdown vault, graph export, report skeleton, survey stats

Every run writes to its own runs/<id>-<stage>/ directory; outputs are
byte-deterministic for identical inputs. Exit codes: 0 success, 1
usage/config, 2 prerequisite missing, 3 data integrity.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, assess, corpus as corpus_mod, export, screen, textproc, vectorize
from .project import (
    ConfigError, LockHeldError, PrerequisiteError, ProjectConfig, ProjectLock,
    RunManifest, RunSpace, dump_json, input_checksums, load_config, utc_now,
    write_artifact,
)
from .query import (
    RankingResult, RelevanceScore, RQValidationError, compile_boolean_query,
    parse_research_questions, rank_documents, suggest_keywords,
)

STAGES = ("plan", "search", "select", "evaluate", "analyze", "synthesize", "report")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PREREQUISITE = 2
EXIT_INTEGRITY = 3


@dataclass
class PipelineBundle:
    pcfg: textproc.PipelineConfig
    acronyms: textproc.AcronymTable
    lexicon: textproc.MultiwordLexicon
    bags: dict[str, textproc.BagOfWords]
    streams: dict[str, list[str]]   # post-pipeline token streams per doc
    warnings: list[str] = field(default_factory=list)


@dataclass
class StageContext:
    config: ProjectConfig
    runspace: RunSpace
    run_dir: Path
    manifest: RunManifest

    def write(self, name: str, content: str) -> Path:
        return write_artifact(self.run_dir, name, content, self.manifest)

    def write_json(self, name: str, data) -> Path:
        return self.write(name, dump_json(data))


# ---------------------------------------------------------------------------
# Shared loading helpers
# ---------------------------------------------------------------------------

def pipeline_config(config: ProjectConfig) -> textproc.PipelineConfig:
    return textproc.PipelineConfig(
        stopwords=textproc.load_stopwords(config.path("stopwords_file")),
        min_token_len=int(config.get("min_token_len", 2)),
        multiword_pmi_threshold=float(config.get("multiword_pmi_threshold", 3.0)),
        multiword_min_count=int(config.get("multiword_min_count", 3)),
    )


def load_corpus(config: ProjectConfig) -> tuple[list[corpus_mod.Document], list[str]]:
    bib_path, fmt = config.bibliography()
    parse = corpus_mod.parse_bibliography(bib_path, fmt)
    corpus_dir = config.path("corpus_dir") or (config.root / "corpus")
    if not corpus_dir.is_dir():
        raise PrerequisiteError(f"corpus directory '{corpus_dir}' does not exist")
    docs, warnings = corpus_mod.load_corpus_texts(parse.records, corpus_dir)
    return docs, parse.warnings + warnings


def build_pipeline(config: ProjectConfig, docs: list[corpus_mod.Document]) -> PipelineBundle:
    """Corpus-level pass of the fixed-order text pipeline."""
    pcfg = pipeline_config(config)
    acronyms = textproc.AcronymTable()
    tokenized: dict[str, list[str]] = {}
    for doc in docs:
        if doc.raw_text is None:
            continue
        tokenized[doc.meta.id] = textproc.normalize_and_tokenize(doc.raw_text, pcfg)
        acronyms.merge(textproc.detect_acronyms(doc.raw_text, doc.meta.id))
    expanded = {
        doc_id: textproc.expand_acronyms(tokens, acronyms, pcfg)
        for doc_id, tokens in tokenized.items()
    }
    lexicon = textproc.detect_multiwords(list(expanded.values()), pcfg)
    bags: dict[str, textproc.BagOfWords] = {}
    streams: dict[str, list[str]] = {}
    for doc in docs:
        doc_id = doc.meta.id
        if doc_id not in expanded:
            bags[doc_id] = textproc.BagOfWords(counts={}, total_tokens=0)
            streams[doc_id] = []
            continue
        joined = textproc.apply_multiwords(expanded[doc_id], lexicon)
        stemmed = [textproc.stem(t) for t in joined]
        stream = [t for t in stemmed if t not in pcfg.stopwords]
        streams[doc_id] = stream
        bags[doc_id] = textproc.tokens_to_bag(joined, pcfg)
        doc.bow = bags[doc_id]
    return PipelineBundle(pcfg=pcfg, acronyms=acronyms, lexicon=lexicon,
                          bags=bags, streams=streams, warnings=list(acronyms.warnings))


def load_rqs(config: ProjectConfig, pcfg: textproc.PipelineConfig):
    rq_path = config.path("rq_file") or (config.root / "rqs.txt")
    if not rq_path.exists():
        raise PrerequisiteError(
            f"research-question file '{rq_path.name}' not found; the plan stage scaffolds a template",
            missing_stage="plan")
    return parse_research_questions(rq_path, pcfg)


def load_synonym_sets(config: ProjectConfig, pcfg: textproc.PipelineConfig) -> dict[str, list[str]]:
    path = config.path("synonyms_file")
    if path is None:
        return {}
    raw = json.loads(path.read_text(encoding="utf-8"))
    sets: dict[str, list[str]] = {}
    for canonical, members in raw.items():
        canon = textproc.normalize_keyword(canonical, pcfg)
        sets[canon] = sorted({textproc.normalize_keyword(m, pcfg) for m in members} - {canon})
    return sets


def _rankings_from_artifact(data: dict) -> list[RankingResult]:
    results = []
    for rq_id, rows in sorted(data["rankings"].items()):
        scores = [RelevanceScore(
            rq_id=rq_id, doc_id=row["doc_id"], score=row["score"],
            contributions=[(t, c) for t, c in row["contributions"]],
        ) for row in rows]
        results.append(RankingResult(rq_id=rq_id, scores=scores,
                                     warnings=data.get("warnings", {}).get(rq_id, [])))
    return results


def load_select_artifacts(config: ProjectConfig, runspace: RunSpace) -> dict:
    manifest = runspace.latest("select")
    if manifest is None:
        raise PrerequisiteError("no completed select run; run the select stage first",
                                missing_stage="select")
    run_dir = runspace.run_dir(manifest)

    def read(name):
        return json.loads((run_dir / name).read_text(encoding="utf-8"))

    index_raw = read("index.json")
    index = vectorize.TermIndex(
        vocabulary=index_raw["vocabulary"], df=index_raw["df"],
        n_docs=index_raw["n_docs"],
        synonym_merges=index_raw.get("synonym_merges", {}),
    )
    tfidf = {doc_id: vectorize.DocVector(weights=v["weights"], norm=v["norm"])
             for doc_id, v in read("tfidf.json").items()}
    sims_raw = read("similarity_tfidf.json")
    sims_emb_raw = read("similarity_embedding.json")

    def sims_of(raw):
        return vectorize.SimilarityMatrix(
            pairs={(a, b): v for a, b, v in raw["pairs"]},
            zero_ids=frozenset(raw["zero_ids"]),
        )

    return {
        "run_dir": run_dir,
        "manifest": manifest,
        "index": index,
        "tfidf": tfidf,
        "similarity_tfidf": sims_of(sims_raw),
        "similarity_embedding": sims_of(sims_emb_raw),
        "rankings_raw": read("rankings.json"),
        "rankings": _rankings_from_artifact(read("rankings.json")),
    }


def decision_log(config: ProjectConfig) -> screen.DecisionLog:
    return screen.DecisionLog(config.root / "decisions.jsonl")


def effective_decisions(config: ProjectConfig) -> dict[str, str]:
    return {doc_id: rec.decision for doc_id, rec in decision_log(config).effective().items()}


def load_annotation_streams(config: ProjectConfig) -> list[list[screen.Annotation]]:
    ann_dir = config.path("annotations_dir")
    if ann_dir is None or not ann_dir.is_dir():
        return []
    return [screen.load_annotation_file(p) for p in sorted(ann_dir.glob("*.jsonl"))]


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

_RQ_TEMPLATE = """# Research questions, one block per question.
# Grammar: docs/formats.md in the tool repository.
rq RQ1
  text = <the question, in one line>
  scope = <what is in scope>
  perspective = <from whose point of view>
  keyword <central keyword>
    weight = 2.0
    synonyms = <comma, separated, synonyms>
    context = <required co-occurring terms for ambiguous keywords>
  keyword <second keyword>
    weight = 1.0
"""

_CRITERIA_TEMPLATE = [
    {"id": "E1", "kind": "exclude", "field": "year", "op": "<", "value": 2000,
     "rationale": "describe why older work is out of scope"},
    {"id": "I1", "kind": "include", "field": "relevance", "rq_id": "RQ1", "op": ">=",
     "value": 0.05, "rationale": "describe the relevance floor"},
]


def stage_plan(ctx: StageContext) -> None:
    ctx.write("templates/rqs.txt", _RQ_TEMPLATE)
    ctx.write_json("templates/criteria.json", _CRITERIA_TEMPLATE)
    ctx.write_json("templates/synonyms.json", {"canonical-term": ["synonym-a", "synonym-b"]})
    seeds = ctx.config.get("seed_docs") or []
    if seeds:
        docs, warnings = load_corpus(ctx.config)
        bundle = build_pipeline(ctx.config, docs)
        index = vectorize.build_index(bundle.bags, load_synonym_sets(ctx.config, bundle.pcfg))
        tfidf = vectorize.tfidf_vectors(index, bundle.bags)
        suggestions = suggest_keywords(seeds, index, tfidf)
        ctx.write_json("keyword_suggestions.json", {
            "seeds": seeds,
            "suggestions": [{"term": t, "suggested_weight": w} for t, w in suggestions],
        })
        ctx.write_json("warnings.json", warnings + bundle.warnings)


def stage_search(ctx: StageContext) -> None:
    docs, warnings = load_corpus(ctx.config)
    bundle = build_pipeline(ctx.config, docs)
    rqs = load_rqs(ctx.config, bundle.pcfg)
    queries = {rq.id: {"text": rq.text, "query": compile_boolean_query(rq)} for rq in rqs}
    ctx.write_json("queries.json", queries)
    ctx.write("queries.txt", "".join(f"{rq_id}: {q['query']}\n" for rq_id, q in sorted(queries.items())))
    duplicates = corpus_mod.detect_duplicates(docs)
    ctx.write_json("duplicate_report.json", duplicates.to_json())
    gaps = corpus_mod.coverage_report(docs, rqs)
    ctx.write_json("gap_report.json", gaps.to_json())
    ctx.write_json("warnings.json", warnings + bundle.warnings)


def stage_select(ctx: StageContext) -> None:
    docs, warnings = load_corpus(ctx.config)
    bundle = build_pipeline(ctx.config, docs)
    rqs = load_rqs(ctx.config, bundle.pcfg)
    synonym_sets = load_synonym_sets(ctx.config, bundle.pcfg)
    index = vectorize.build_index(bundle.bags, synonym_sets)
    tfidf = vectorize.tfidf_vectors(index, bundle.bags)
    model = vectorize.build_embeddings(
        [bundle.streams[d.meta.id] for d in docs if bundle.streams.get(d.meta.id)],
        window=int(ctx.config.get("embedding_window", 5)),
        k=int(ctx.config.get("embedding_rank", 50)),
        seed=ctx.config.seed,
    )
    doc_embs = vectorize.doc_embeddings(model, tfidf)
    sim_tfidf = vectorize.similarity_matrix(tfidf)
    sim_emb = vectorize.similarity_matrix(doc_embs)
    alpha = float(ctx.config.get("alpha", 0.0))
    results = [rank_documents(rq, index, tfidf, (model, doc_embs), alpha) for rq in rqs]

    ctx.write_json("bags.json", {
        doc_id: {"counts": bag.counts, "total_tokens": bag.total_tokens}
        for doc_id, bag in sorted(bundle.bags.items())
    })
    ctx.write_json("acronyms.json", {
        "entries": {k: {"long_form": e.long_form, "doc_id": e.doc_id, "span": list(e.span)}
                    for k, e in sorted(bundle.acronyms.entries.items())},
        "warnings": bundle.acronyms.warnings,
    })
    ctx.write_json("multiwords.json", [
        {"a": a, "b": b, "count": e.count, "pmi": e.pmi}
        for (a, b), e in sorted(bundle.lexicon.entries.items())
    ])
    ctx.write_json("index.json", {
        "vocabulary": index.vocabulary, "df": index.df, "n_docs": index.n_docs,
        "synonym_merges": index.synonym_merges,
    })
    ctx.write_json("tfidf.json", {
        doc_id: {"weights": v.weights, "norm": v.norm} for doc_id, v in sorted(tfidf.items())
    })
    ctx.write_json("embedding_model.json", vectorize.model_to_json(model))
    ctx.write_json("doc_embeddings.json", {
        doc_id: {"weights": v.weights, "norm": v.norm} for doc_id, v in sorted(doc_embs.items())
    })
    for name, sims in (("similarity_tfidf.json", sim_tfidf), ("similarity_embedding.json", sim_emb)):
        ctx.write_json(name, {
            "space": name.split("_")[1].split(".")[0],
            "pairs": sims.to_json(),
            "zero_ids": sorted(sims.zero_ids),
        })
    ctx.write_json("rankings.json", {
        "alpha": alpha,
        "rankings": {
            r.rq_id: [
                {"doc_id": s.doc_id, "score": s.score, "rank": i + 1,
                 "contributions": [[t, c] for t, c in s.contributions]}
                for i, s in enumerate(r.scores)
            ] for r in results
        },
        "warnings": {r.rq_id: r.warnings for r in results},
    })
    csv_lines = ["rq_id,doc_id,score,rank"]
    for r in sorted(results, key=lambda r: r.rq_id):
        for i, s in enumerate(r.scores):
            csv_lines.append(f"{r.rq_id},{s.doc_id},{s.score:.6f},{i + 1}")
    ctx.write("rankings.csv", "\n".join(csv_lines) + "\n")
    ctx.write_json("synonym_suggestions.json", [
        {"a": a, "b": b, "cosine": c} for a, b, c in vectorize.suggest_synonyms(model)
    ])
    ctx.write_json("warnings.json", warnings + bundle.warnings
                   + [w for r in results for w in r.warnings] + model.warnings)


def stage_evaluate(ctx: StageContext) -> None:
    criteria_path = ctx.config.path("criteria_file")
    if criteria_path is None:
        raise PrerequisiteError(
            "no criteria file configured; the plan stage scaffolds a template",
            missing_stage="plan")
    criteria = screen.load_criteria(criteria_path)
    docs, _ = load_corpus(ctx.config)
    rankings = []
    if any(c.field == "relevance" for c in criteria):
        rankings = load_select_artifacts(ctx.config, ctx.runspace)["rankings"]
    records = screen.apply_criteria(docs, criteria, rankings)
    log = decision_log(ctx.config)
    appended = log.append_criterion_records(records)
    state = log.effective()
    counts = {"candidates": len(docs), "included": 0, "excluded": 0, "deferred": 0}
    for doc in docs:
        counts[screen.effective_decision(state, doc.meta.id)] += 1
    ctx.write_json("decisions_snapshot.json", {
        "appended": appended,
        "counts": counts,
        "effective": {doc_id: rec.to_json() for doc_id, rec in sorted(state.items())},
    })
    spec = _partition_spec(ctx.config)
    if spec is not None:
        included = sorted(d.meta.id for d in docs
                          if screen.effective_decision(state, d.meta.id) == "included")
        part = screen.partition(included, spec, rankings or None, docs)
        ctx.write_json("partitions.json", [{
            "name": part.name, "spec": part.spec,
            "assignment": dict(sorted(part.assignment.items())),
        }])


def _partition_spec(config: ProjectConfig) -> dict | None:
    if config.get("partition_edges") and config.get("partition_rq"):
        return {"name": config.get("partition_name", "relevance-bands"),
                "rq_id": config.get("partition_rq"),
                "edges": config.get("partition_edges")}
    if config.get("partition_facet"):
        return {"name": config.get("partition_name", "facet"),
                "facet": config.get("partition_facet")}
    return None


def stage_analyze(ctx: StageContext) -> None:
    docs, _ = load_corpus(ctx.config)
    doc_lengths = {d.meta.id: len(d.raw_text or "") for d in docs}
    streams = load_annotation_streams(ctx.config)
    problems = []
    for stream in streams:
        problems.extend(screen.validate_annotations(stream, doc_lengths))
    if problems:
        raise corpus_mod.IngestionError("invalid annotation stream: " + "; ".join(problems))
    merged, conflicts = screen.merge_annotations(streams)
    ctx.write_json("merged_annotations.json", [a.to_json() for a in merged])
    ctx.write_json("annotation_conflicts.json", [
        {"doc_id": c.doc_id, "location": list(c.location), "property": c.property,
         "values": c.values, "annotation_ids": c.annotation_ids}
        for c in conflicts
    ])


def _latest_annotations(ctx: StageContext) -> list[screen.Annotation]:
    manifest = ctx.runspace.latest("analyze")
    if manifest is None:
        raise PrerequisiteError("no completed analyze run; run the analyze stage first",
                                missing_stage="analyze")
    path = ctx.runspace.run_dir(manifest) / "merged_annotations.json"
    return [screen.annotation_from_json(a)
            for a in json.loads(path.read_text(encoding="utf-8"))]


def stage_synthesize(ctx: StageContext) -> None:
    docs, _ = load_corpus(ctx.config)
    metas = {d.meta.id: d.meta for d in docs}
    annotations = _latest_annotations(ctx)
    properties = ctx.config.get("comparison_properties") or sorted({a.property for a in annotations})
    if not properties:
        raise PrerequisiteError(
            "nothing to compare: no annotations and no comparison_properties configured",
            missing_stage="analyze")
    decisions = effective_decisions(ctx.config)
    annotated = {a.doc_id for a in annotations}
    doc_ids = sorted(d for d in annotated
                     if d in metas and decisions.get(d, "deferred") != "excluded")
    comparison = export.build_comparison(annotations, properties, doc_ids)
    ctx.write_json("comparison.json", comparison.to_json())
    ctx.write("comparison.csv", export.comparison_to_csv(comparison))
    ctx.write("comparison.md", export.comparison_to_markdown(comparison))
    conflicts = screen.detect_conflicts(comparison)
    resolutions_path = ctx.config.path("resolutions_file")
    if resolutions_path is not None:
        resolutions = json.loads(resolutions_path.read_text(encoding="utf-8"))
        conflicts = screen.apply_resolutions(conflicts, resolutions)
    ctx.write_json("conflicts.json", [{
        "property": c.property, "doc_id": c.doc_id, "values": c.values,
        "status": c.status, "chosen_value": c.chosen_value,
        "resolution_note": c.resolution_note,
    } for c in conflicts])
    ctx.write_json("patterns.json", {
        prop: [{"value": v, "count": n} for v, n in hist]
        for prop, hist in screen.pattern_summary(comparison).items()
    })
    claims_path = ctx.config.path("claims_file")
    claims = screen.load_claims(claims_path) if claims_path else []
    violations = screen.validate_claims(claims, annotations)
    ctx.write_json("claims_report.json", {
        "claims": [{"id": c.id, "statement": c.statement, "evidence": c.evidence,
                    "warrant": c.warrant, "status": c.status} for c in claims],
        "violations": [{"claim_id": v.claim_id, "kind": v.kind, "detail": v.detail}
                       for v in violations],
    })
    statements = export.emit_kg(comparison, metas)
    ctx.write("kg.tsv", export.kg_to_lines(statements))
    ctx.write_json("kg.json", [s.to_json() for s in statements])
    shapes_path = ctx.config.path("shapes_file")
    if shapes_path is not None:
        shapes = export.parse_shapes(json.loads(shapes_path.read_text(encoding="utf-8")))
    else:
        shapes = export.default_shapes()
    shape_violations = export.validate_shapes(statements, shapes)
    ctx.write_json("shape_report.json", {
        "conforms": not shape_violations,
        "violations": [{"subject": v.subject, "property": v.property,
                        "kind": v.kind, "detail": v.detail} for v in shape_violations],
    })


def stage_report(ctx: StageContext) -> None:
    docs, _ = load_corpus(ctx.config)
    artifacts = load_select_artifacts(ctx.config, ctx.runspace)
    log = decision_log(ctx.config)
    if not log.records():
        raise PrerequisiteError(
            "no screening decisions recorded; run the evaluate stage first",
            missing_stage="evaluate")
    state = log.effective()
    decisions = {doc_id: rec.decision for doc_id, rec in state.items()}
    bundle_pcfg = pipeline_config(ctx.config)
    rqs = load_rqs(ctx.config, bundle_pcfg)
    rq_texts = {rq.id: rq.text for rq in rqs}
    space = ctx.config.get("graph_space", "tfidf")
    sims = artifacts["similarity_embedding" if space == "embedding" else "similarity_tfidf"]
    vault = export.build_vault(
        docs, artifacts["rankings"], sims, decisions,
        k=int(ctx.config.get("vault_top_k", 5)),
        sim_threshold=float(ctx.config.get("vault_sim_threshold", 0.1)),
        rq_texts=rq_texts,
    )
    for name, content in sorted(vault.items()):
        ctx.write(f"vault/{name}", content)
    graph = export.build_graph(
        [d.meta for d in docs], sims, artifacts["rankings"], decisions,
        edge_threshold=float(ctx.config.get("graph_edge_threshold", 0.2)),
        space=space,
    )
    ctx.write_json("graph.json", graph)

    counts = {"candidates": len(docs), "included": 0, "excluded": 0, "deferred": 0}
    for doc in docs:
        counts[screen.effective_decision(state, doc.meta.id)] += 1
    criteria_path = ctx.config.path("criteria_file")
    criteria = screen.load_criteria(criteria_path) if criteria_path else []

    comparison_md = None
    conflicts: list[screen.Conflict] = []
    claims: list[screen.Claim] = []
    violations: list[screen.ClaimViolation] = []
    synth = ctx.runspace.latest("synthesize")
    if synth is not None:
        synth_dir = ctx.runspace.run_dir(synth)
        comparison_md = (synth_dir / "comparison.md").read_text(encoding="utf-8")
        for c in json.loads((synth_dir / "conflicts.json").read_text(encoding="utf-8")):
            conflicts.append(screen.Conflict(
                property=c["property"], doc_id=c["doc_id"], values=c["values"],
                status=c["status"], chosen_value=c.get("chosen_value"),
                resolution_note=c.get("resolution_note", "")))
        report_data = json.loads((synth_dir / "claims_report.json").read_text(encoding="utf-8"))
        claims = [screen.Claim(id=c["id"], statement=c["statement"], evidence=c["evidence"],
                               warrant=c["warrant"], status=c.get("status", "open"))
                  for c in report_data["claims"]]
        violations = [screen.ClaimViolation(v["claim_id"], v["kind"], v["detail"])
                      for v in report_data["violations"]]
    gap_report = None
    search = ctx.runspace.latest("search")
    if search is not None:
        gaps_raw = json.loads(
            (ctx.runspace.run_dir(search) / "gap_report.json").read_text(encoding="utf-8"))
        gap_report = corpus_mod.GapReport(
            missing_keywords=gaps_raw["missing_keywords"],
            missing_metadata=gaps_raw["missing_metadata"])
    partitions = []
    evaluate = ctx.runspace.latest("evaluate")
    if evaluate is not None:
        part_path = ctx.runspace.run_dir(evaluate) / "partitions.json"
        if part_path.exists():
            for p in json.loads(part_path.read_text(encoding="utf-8")):
                partitions.append(screen.Partition(
                    name=p["name"], assignment=p["assignment"], spec=p["spec"]))

    revision = (ctx.manifest.config_hash[:12] + "-" + hashlib.sha256(
        json.dumps(ctx.manifest.input_checksums, sort_keys=True).encode()).hexdigest()[:12])
    report_md = export.build_report(
        rqs, criteria, counts, artifacts["rankings"], comparison_md,
        claims, violations, conflicts, gap_report, partitions, revision=revision,
        decisions=decisions,
    )
    ctx.write("report.md", report_md)

    responses_path = ctx.config.path("responses_file")
    if responses_path is not None:
        responses = assess.load_responses(responses_path)
        catalog = assess.load_catalog()
        stats = {}
        for req in catalog.entries:
            agg = assess.aggregate_likert(responses, req.id)
            stats[f"R{req.id}"] = agg.to_json() if agg else None
        durations = [r.duration_minutes for r in responses if r.duration_minutes is not None]
        ctx.write_json("stats_likert.json", {
            "per_requirement": stats,
            "durations": assess.descriptive_stats(durations) if durations else None,
        })
        matrix = assess.coverage_matrix(responses, catalog)
        ctx.write("coverage.csv", assess.coverage_to_csv(matrix))


_STAGE_FUNCS = {
    "plan": stage_plan,
    "search": stage_search,
    "select": stage_select,
    "evaluate": stage_evaluate,
    "analyze": stage_analyze,
    "synthesize": stage_synthesize,
    "report": stage_report,
}


def run_stage(stage: str, config: ProjectConfig, command: str = "") -> RunManifest:
    """Run one stage under the project lock in a fresh run directory."""
    runspace = RunSpace(config.root)
    with ProjectLock(config.root, stage):
        run_id, run_dir = runspace.new_run(stage)
        manifest = RunManifest(
            run_id=run_id, stage=stage, command=command or f"slrpipe --stage {stage}",
            config_hash=config.config_hash(), seed=config.seed,
            input_checksums=input_checksums(config), started=utc_now(),
        )
        _STAGE_FUNCS[stage](StageContext(
            config=config, runspace=runspace, run_dir=run_dir, manifest=manifest))
        manifest.finished = utc_now()
        # run metadata, not an artifact: carries timestamps, so no self-checksum
        (run_dir / "manifest.json").write_text(dump_json(manifest.to_json()), encoding="utf-8")
        runspace.record(manifest)
    return manifest


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slrpipe",
        description="Stage-oriented literature-review pipeline over a project directory.",
    )
    parser.add_argument("--project", required=True, help="project directory")
    parser.add_argument("--config", help="config file (default: <project>/project.conf)")
    parser.add_argument("--seed", type=int, help="override the configured random seed")
    parser.add_argument("--stage", choices=STAGES, help="stage command to run")
    parser.add_argument("--serve", action="store_true", help="serve the HTTP API instead")
    parser.add_argument("--host", default="127.0.0.1", help="bind address for --serve")
    parser.add_argument("--port", type=int, default=8237, help="port for --serve")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    if not args.stage and not args.serve:
        print("error: one of --stage or --serve is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = load_config(args.project, args.config, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.serve:
        from .serve import serve
        try:
            serve(config, host=args.host, port=args.port)
        except PrerequisiteError as exc:
            print(f"prerequisite missing: {exc}", file=sys.stderr)
            return EXIT_PREREQUISITE
        except (RQValidationError, corpus_mod.IngestionError) as exc:
            print(f"cannot serve project: {exc}", file=sys.stderr)
            return EXIT_INTEGRITY
        return EXIT_OK
    try:
        manifest = run_stage(args.stage, config, command="slrpipe " + " ".join(argv or sys.argv[1:]))
    except (ConfigError, LockHeldError, RQValidationError,
            screen.CriteriaConfigError, vectorize.SynonymConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PrerequisiteError as exc:
        print(f"prerequisite missing: {exc}", file=sys.stderr)
        return EXIT_PREREQUISITE
    except (corpus_mod.IngestionError, screen.AnnotationMergeError,
            export.ShapeFileError, assess.CatalogIntegrityError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    print(f"run {manifest.run_id:04d} ({manifest.stage}) finished: "
          f"{len(manifest.files)} artifact(s)")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
