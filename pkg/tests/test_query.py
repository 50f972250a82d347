from __future__ import annotations

import math

import pytest

from slrpipe import query as q
from slrpipe import vectorize as vz
from slrpipe.textproc import BagOfWords, PipelineConfig

CFG = PipelineConfig()


def bag(counts):
    return BagOfWords(counts=counts, total_tokens=sum(counts.values()))


RQ_FILE = """# fixture
rq RQ1
  text = How do tools rank documents?
  scope = desk tools
  perspective = reviewer
  keyword review
    weight = 2.0
    synonyms = survey
  keyword automation
    weight = 1.0

rq RQ2
  text = Second question?
  keyword annotation
    weight = 1.0
"""


# ---------------------------------------------------------------------------
# parsing and writing
# ---------------------------------------------------------------------------

def test_parse_rq_file(tmp_path):
    path = tmp_path / "rqs.txt"
    path.write_text(RQ_FILE, encoding="utf-8")
    rqs = q.parse_research_questions(path, CFG)
    assert [rq.id for rq in rqs] == ["RQ1", "RQ2"]
    kw = rqs[0].keywords[0]
    assert kw.raw == "review" and kw.term == "review"
    assert kw.synonyms == ["survey"]
    assert rqs[0].scope_note == "desk tools"
    # keywords are pipeline-normalized (stemmed)
    assert rqs[0].keywords[1].term == "autom"


def test_parse_collects_all_validation_errors(tmp_path):
    path = tmp_path / "rqs.txt"
    path.write_text(
        "rq RQ1\n  text = t\n  keyword alpha\n    weight = -1\n"
        "rq RQ1\n  text = t\n  bogus = x\n", encoding="utf-8")
    with pytest.raises(q.RQValidationError) as err:
        q.parse_research_questions(path, CFG)
    messages = "\n".join(err.value.errors)
    assert "non-positive weight" in messages
    assert "duplicate rq id" in messages
    assert "unknown key" in messages
    assert "at least one keyword" in messages


def test_write_then_parse_round_trips(tmp_path):
    path = tmp_path / "rqs.txt"
    path.write_text(RQ_FILE, encoding="utf-8")
    rqs = q.parse_research_questions(path, CFG)
    path2 = tmp_path / "rqs2.txt"
    path2.write_text(q.write_research_questions(rqs), encoding="utf-8")
    again = q.parse_research_questions(path2, CFG)
    assert [r.__dict__ for r in again] == [r.__dict__ for r in rqs]


# ---------------------------------------------------------------------------
# boolean queries
# ---------------------------------------------------------------------------

def _kw(raw, weight, synonyms=(), context=()):
    return q.Keyword(raw=raw, term=raw, weight=weight,
                     synonyms_raw=list(synonyms), synonyms=list(synonyms),
                     context_raw=list(context), context=list(context))


def test_boolean_single_group_with_synonym():
    rq = q.ResearchQuestion(id="R", text="t", keywords=[_kw("automation", 1.0, ["automated"])])
    assert q.compile_boolean_query(rq) == '("automation" OR "automated")'


def test_boolean_equal_weights_all_mandatory():
    rq = q.ResearchQuestion(id="R", text="t",
                            keywords=[_kw("beta", 1.0), _kw("alpha", 1.0)])
    assert q.compile_boolean_query(rq) == '("alpha") AND ("beta")'


def test_boolean_three_weighted_keywords_frozen_rendering():
    rq = q.ResearchQuestion(id="R", text="t", keywords=[
        _kw("screening", 2.0, ["triage"]),
        _kw("relevance ranking", 1.5),
        _kw("machine learning", 1.0),
    ])
    # median weight 1.5: the two top groups are mandatory, the single
    # below-median group is appended as its own alternative block
    assert q.compile_boolean_query(rq) == (
        '("screening" OR "triage") AND ("relevance ranking") AND ("machine learning")')


def test_boolean_multiple_low_groups_pooled_into_or_block():
    # median of [4, 4, 1, 1] is 2.5, so the two light keywords pool into one block
    rq = q.ResearchQuestion(id="R", text="t", keywords=[
        _kw("core", 4.0), _kw("extra", 4.0), _kw("aside", 1.0), _kw("bonus", 1.0)])
    assert q.compile_boolean_query(rq) == (
        '("core") AND ("extra") AND (("aside") OR ("bonus"))')


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

def toy_vectors():
    bags = {
        "doc-a": bag({"review": 3, "tool": 1}),
        "doc-b": bag({"review": 1, "automation": 2, "tool": 1}),
        "doc-c": bag({"banana": 4}),
        "doc-d": bag({"survey": 2, "automation": 1, "quantum": 1}),
    }
    index = vz.build_index(bags)
    return index, vz.tfidf_vectors(index, bags)


def test_rank_doc_without_keywords_scores_zero():
    index, vectors = toy_vectors()
    rq = q.ResearchQuestion(id="R", text="t", keywords=[_kw("review", 1.0)])
    result = q.rank_documents(rq, index, vectors)
    scores = {s.doc_id: s.score for s in result.scores}
    assert scores["doc-c"] == 0.0


def test_rank_single_keyword_order_equals_tfidf_entry_order():
    index, vectors = toy_vectors()
    rq = q.ResearchQuestion(id="R", text="t", keywords=[_kw("review", 1.0)])
    result = q.rank_documents(rq, index, vectors)
    entry = {d: vectors[d].weights.get("review", 0.0) for d in vectors}
    expected = sorted(entry, key=lambda d: (-entry[d], d))
    assert [s.doc_id for s in result.scores] == expected


def test_rank_matches_exhaustive_scoring_oracle():
    index, vectors = toy_vectors()
    rq = q.ResearchQuestion(id="R", text="t", keywords=[
        _kw("review", 2.0, synonyms=["survey"]),
        _kw("automation", 1.0),
    ])
    result = q.rank_documents(rq, index, vectors)
    # independent exhaustive scoring straight from the definition
    expected = {}
    for doc_id, vec in vectors.items():
        s1 = max(vec.weights.get("review", 0.0), vec.weights.get("survey", 0.0))
        s2 = vec.weights.get("automation", 0.0)
        expected[doc_id] = (2.0 * s1 + 1.0 * s2) / 3.0
    for s in result.scores:
        assert s.score == pytest.approx(expected[s.doc_id], abs=1e-12)
        assert 0.0 <= s.score <= 1.0
        assert sum(c for _, c in s.contributions) == pytest.approx(s.score, abs=1e-9)
    ranked = sorted(expected, key=lambda d: (-expected[d], d))
    assert [s.doc_id for s in result.scores] == ranked


def test_rank_weight_scaling_invariance():
    index, vectors = toy_vectors()
    base = q.ResearchQuestion(id="R", text="t", keywords=[
        _kw("review", 2.0), _kw("automation", 1.0)])
    scaled = q.ResearchQuestion(id="R", text="t", keywords=[
        _kw("review", 6.0), _kw("automation", 3.0)])
    r1 = q.rank_documents(base, index, vectors)
    r2 = q.rank_documents(scaled, index, vectors)
    assert [s.doc_id for s in r1.scores] == [s.doc_id for s in r2.scores]
    for a, b in zip(r1.scores, r2.scores):
        assert a.score == pytest.approx(b.score, abs=1e-12)


def test_rank_context_gating_only_zeroes():
    index, vectors = toy_vectors()
    gated = q.ResearchQuestion(id="R", text="t", keywords=[
        _kw("automation", 1.0, context=["quantum"])])
    plain = q.ResearchQuestion(id="R", text="t", keywords=[_kw("automation", 1.0)])
    rg = {s.doc_id: s.score for s in q.rank_documents(gated, index, vectors).scores}
    rp = {s.doc_id: s.score for s in q.rank_documents(plain, index, vectors).scores}
    # doc-d contains "quantum", so it keeps its score; doc-b loses it entirely
    assert rg["doc-d"] == rp["doc-d"] > 0
    assert rp["doc-b"] > 0 and rg["doc-b"] == 0.0
    for doc_id in rg:
        assert rg[doc_id] in (0.0, rp[doc_id])


def test_rank_unknown_keyword_contributes_zero_with_warning():
    index, vectors = toy_vectors()
    rq = q.ResearchQuestion(id="R", text="t", keywords=[
        _kw("review", 1.0), _kw("blockchain", 1.0)])
    result = q.rank_documents(rq, index, vectors)
    assert any("blockchain" in w for w in result.warnings)
    for s in result.scores:
        contribution = dict(s.contributions)["blockchain"]
        assert contribution == 0.0


def test_rank_ties_break_by_doc_id_and_runs_repeat():
    index, vectors = toy_vectors()
    rq = q.ResearchQuestion(id="R", text="t", keywords=[_kw("nonexistent", 1.0)])
    result = q.rank_documents(rq, index, vectors)
    assert [s.doc_id for s in result.scores] == sorted(vectors)
    again = q.rank_documents(rq, index, vectors)
    assert [s.doc_id for s in again.scores] == [s.doc_id for s in result.scores]


def test_rank_alpha_requires_embeddings_and_bounds():
    index, vectors = toy_vectors()
    rq = q.ResearchQuestion(id="R", text="t", keywords=[_kw("review", 1.0)])
    with pytest.raises(ValueError):
        q.rank_documents(rq, index, vectors, alpha=1.5)
    with pytest.raises(ValueError):
        q.rank_documents(rq, index, vectors, alpha=0.5)


def test_rank_embedding_blend_stays_in_bounds():
    corpus = [["review", "tool", "review"], ["automation", "tool"],
              ["banana", "fruit"], ["survey", "automation", "quantum"]]
    model = vz.build_embeddings(corpus, window=2, k=4, seed=1)
    index, vectors = toy_vectors()
    doc_embs = vz.doc_embeddings(model, vectors)
    rq = q.ResearchQuestion(id="R", text="t", keywords=[
        _kw("review", 2.0, synonyms=["survey"]), _kw("automation", 1.0)])
    result = q.rank_documents(rq, index, vectors, (model, doc_embs), alpha=0.4)
    for s in result.scores:
        assert 0.0 <= s.score <= 1.0


# ---------------------------------------------------------------------------
# keyword suggestions
# ---------------------------------------------------------------------------

def test_suggest_keywords_single_seed_is_its_tfidf_order():
    index, vectors = toy_vectors()
    got = q.suggest_keywords(["doc-b"], index, vectors, top_n=3)
    entries = sorted(vectors["doc-b"].weights.items(), key=lambda kv: (-kv[1], kv[0]))
    assert [t for t, _ in got] == [t for t, _ in entries[:3]]


def test_suggest_keywords_top_weight_rescaled_to_one():
    index, vectors = toy_vectors()
    got = q.suggest_keywords(["doc-a", "doc-b"], index, vectors)
    assert got[0][1] == 1.0
    assert all(0 < w <= 1.0 for _, w in got)


def test_suggest_keywords_two_seed_hand_average():
    index, vectors = toy_vectors()
    got = dict(q.suggest_keywords(["doc-a", "doc-b"], index, vectors))
    means = {}
    for term in set(vectors["doc-a"].weights) | set(vectors["doc-b"].weights):
        means[term] = (vectors["doc-a"].weights.get(term, 0.0)
                       + vectors["doc-b"].weights.get(term, 0.0)) / 2
    top = max(means.values())
    for term, weight in got.items():
        assert weight == pytest.approx(means[term] / top, abs=1e-12)


def test_suggest_keywords_empty_or_unknown_seeds_error():
    index, vectors = toy_vectors()
    with pytest.raises(ValueError, match="empty"):
        q.suggest_keywords([], index, vectors)
    with pytest.raises(ValueError, match="unknown"):
        q.suggest_keywords(["ghost"], index, vectors)
