from __future__ import annotations

import json

import pytest

from slrpipe import screen
from slrpipe.corpus import Document, Metadata
from slrpipe.export import build_comparison
from slrpipe.query import RankingResult, RelevanceScore


def doc(doc_id, year=None, venue=None, keywords=(), language=None):
    return Document(meta=Metadata(id=doc_id, title=doc_id, year=year, venue=venue,
                                  keywords=list(keywords), language=language))


def ranking(rq_id, scores: dict[str, float]) -> RankingResult:
    rows = [RelevanceScore(rq_id=rq_id, doc_id=d, score=s, contributions=[])
            for d, s in scores.items()]
    rows.sort(key=lambda s: (-s.score, s.doc_id))
    return RankingResult(rq_id=rq_id, scores=rows)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_parse_criteria_validations():
    with pytest.raises(screen.CriteriaConfigError, match="rationale"):
        screen.parse_criteria([{"id": "C1", "kind": "exclude", "field": "year",
                                "op": "<", "value": 2000, "rationale": ""}])
    with pytest.raises(screen.CriteriaConfigError, match="not valid"):
        screen.parse_criteria([{"id": "C1", "kind": "exclude", "field": "venue",
                                "op": "<", "value": "x", "rationale": "r"}])
    with pytest.raises(screen.CriteriaConfigError, match="rq_id"):
        screen.parse_criteria([{"id": "C1", "kind": "include", "field": "relevance",
                                "op": ">=", "value": 0.1, "rationale": "r"}])


def test_exclude_year_criterion_matches_and_cites_source():
    criteria = screen.parse_criteria([
        {"id": "E1", "kind": "exclude", "field": "year", "op": "<", "value": 2010,
         "rationale": "too old"}])
    records = screen.apply_criteria([doc("d", year=2005)], criteria)
    assert records[0].decision == "excluded"
    assert records[0].source == "E1"


def test_unmatched_doc_becomes_deferred():
    criteria = screen.parse_criteria([
        {"id": "E1", "kind": "exclude", "field": "year", "op": "<", "value": 2010,
         "rationale": "too old"}])
    records = screen.apply_criteria([doc("d", year=2020)], criteria)
    assert records[0].decision == "deferred"
    assert records[0].source == "default"


def test_relevance_criterion_unknown_rq_errors():
    criteria = screen.parse_criteria([
        {"id": "I1", "kind": "include", "field": "relevance", "rq_id": "RQ9",
         "op": ">=", "value": 0.1, "rationale": "r"}])
    with pytest.raises(screen.CriteriaConfigError, match="RQ9"):
        screen.apply_criteria([doc("d")], criteria, [ranking("RQ1", {"d": 0.5})])


def test_apply_criteria_matches_truth_table_oracle():
    """Exhaustive docs x criteria enumeration with exclude-before-include."""
    criteria = screen.parse_criteria([
        {"id": "E1", "kind": "exclude", "field": "year", "op": "<", "value": 2010,
         "rationale": "too old"},
        {"id": "E2", "kind": "exclude", "field": "venue", "op": "contains",
         "value": "workshop", "rationale": "not peer reviewed"},
        {"id": "I1", "kind": "include", "field": "relevance", "rq_id": "RQ1",
         "op": ">=", "value": 0.3, "rationale": "clearly relevant"},
    ])
    docs = [
        doc("a", year=2005, venue="Old Workshop"),
        doc("b", year=2015, venue="Main Conf"),
        doc("c", year=2020, venue="Tiny workshop series"),
        doc("d", year=2012, venue="Journal"),
        doc("e"),
    ]
    scores = {"a": 0.9, "b": 0.5, "c": 0.8, "d": 0.1, "e": 0.4}
    records = {r.doc_id: r for r in screen.apply_criteria(docs, criteria,
                                                          [ranking("RQ1", scores)])}

    def oracle(d):
        if d.meta.year is not None and d.meta.year < 2010:
            return "excluded", "E1"
        if d.meta.venue is not None and "workshop" in d.meta.venue.lower():
            return "excluded", "E2"
        if scores[d.meta.id] >= 0.3:
            return "included", "I1"
        return "deferred", "default"

    for d in docs:
        decision, source = oracle(d)
        assert (records[d.meta.id].decision, records[d.meta.id].source) == (decision, source)
    # doc "a" matches both E1 and I1: exclusion has precedence
    assert records["a"].decision == "excluded"


def test_keyword_and_language_criteria():
    criteria = screen.parse_criteria([
        {"id": "K1", "kind": "include", "field": "keyword", "op": "=",
         "value": "ranking", "rationale": "topical"},
        {"id": "L1", "kind": "exclude", "field": "language", "op": "in-set",
         "value": ["de", "fr"], "rationale": "english only"},
    ])
    records = {r.doc_id: r for r in screen.apply_criteria([
        doc("a", keywords=["Ranking", "tools"]),
        doc("b", language="de"),
        doc("c"),
    ], criteria)}
    assert records["a"].decision == "included"
    assert records["b"].decision == "excluded"
    assert records["c"].decision == "deferred"


# ---------------------------------------------------------------------------
# decision log
# ---------------------------------------------------------------------------

def test_manual_decision_supersedes_criterion(tmp_path):
    log = screen.DecisionLog(tmp_path / "decisions.jsonl")
    log.append(screen.DecisionRecord(doc_id="d", decision="excluded", source="E1",
                                     actor="criteria", timestamp="2024-01-01T00:00:00Z"))
    log.record_decision("d", "included", actor="alice", note="keep it")
    state = log.effective()
    assert state["d"].decision == "included"
    assert len(log.records()) == 2
    # a later criterion pass must not override the manual decision
    appended = log.append_criterion_records([screen.DecisionRecord(
        doc_id="d", decision="excluded", source="E1", actor="criteria",
        timestamp="2024-01-02T00:00:00Z")])
    assert appended == 0
    assert log.effective()["d"].decision == "included"


def test_record_decision_unknown_doc(tmp_path):
    log = screen.DecisionLog(tmp_path / "decisions.jsonl")
    with pytest.raises(KeyError):
        log.record_decision("ghost", "included", actor="a", known_ids={"real"})
    with pytest.raises(ValueError):
        log.record_decision("real", "banana", actor="a", known_ids={"real"})


def test_replaying_decision_log_equals_last_writer_wins_oracle(tmp_path):
    log = screen.DecisionLog(tmp_path / "decisions.jsonl")
    fixture = [
        ("a", "excluded", "E1", "criteria"),
        ("b", "included", "I1", "criteria"),
        ("a", "included", "manual", "alice"),
        ("c", "deferred", "default", "criteria"),
        ("b", "excluded", "manual", "bob"),
        ("a", "deferred", "manual", "alice"),
    ]
    for doc_id, decision, source, actor in fixture:
        log.append(screen.DecisionRecord(doc_id=doc_id, decision=decision,
                                         source=source, actor=actor,
                                         timestamp="2024-01-01T00:00:00Z"))
    oracle: dict[str, str] = {}
    for doc_id, decision, _, _ in fixture:
        oracle[doc_id] = decision
    state = log.effective()
    assert {d: r.decision for d, r in state.items()} == oracle


def test_effective_decision_defaults_to_deferred():
    assert screen.effective_decision({}, "never-decided") == "deferred"


# ---------------------------------------------------------------------------
# partition
# ---------------------------------------------------------------------------

def test_partition_relevance_bands():
    part = screen.partition(["a", "b"], {"name": "bands", "rq_id": "RQ1",
                                         "edges": [0.0, 0.2, 1.0]},
                            [ranking("RQ1", {"a": 0.1, "b": 0.5})])
    assert part.assignment == {"a": "band0", "b": "band1"}


def test_partition_top_edge_inclusive_and_interval_oracle():
    edges = [0.0, 0.25, 0.5, 1.0]
    scores = {"a": 0.0, "b": 0.25, "c": 0.49, "d": 0.5, "e": 1.0}
    part = screen.partition(list(scores), {"name": "p", "rq_id": "R", "edges": edges},
                            [ranking("R", scores)])

    def oracle(s):
        for i in range(len(edges) - 1):
            if edges[i] <= s < edges[i + 1]:
                return f"band{i}"
        return "band2" if s == edges[-1] else "out-of-range"

    assert part.assignment == {d: oracle(s) for d, s in scores.items()}


def test_partition_facet_and_unknown():
    docs = [doc("a", venue="X"), doc("b", venue="X"), doc("c")]
    part = screen.partition(["a", "b", "c"], {"name": "venues", "facet": "venue"},
                            corpus=docs)
    assert part.assignment == {"a": "X", "b": "X", "c": "unknown"}


def test_partition_unsorted_edges_rejected():
    with pytest.raises(ValueError, match="sorted"):
        screen.partition(["a"], {"name": "p", "rq_id": "R", "edges": [0.5, 0.2]}, [])


def test_partition_assigns_every_included_doc():
    part = screen.partition(["a", "b"], {"name": "p", "rq_id": "R",
                                         "edges": [0.4, 0.6]},
                            [ranking("R", {"a": 0.5, "b": 0.9})])
    assert part.assignment == {"a": "band0", "b": "out-of-range"}


# ---------------------------------------------------------------------------
# annotations
# ---------------------------------------------------------------------------

def ann(ann_id, doc_id="d1", prop="method", value="x", span=None, chapter=None):
    actor = ann_id.split("/")[0]
    return screen.Annotation(id=ann_id, doc_id=doc_id, property=prop, value=value,
                             role="data-evidence", actor=actor,
                             timestamp="2024-01-01T00:00:00Z", span=span,
                             chapter=chapter)


def test_merge_disjoint_streams_union_no_conflicts():
    merged, conflicts = screen.merge_annotations([
        [ann("alice/1", span=(0, 5))], [ann("bob/1", prop="domain", span=(0, 5))]])
    assert [a.id for a in merged] == ["alice/1", "bob/1"]
    assert conflicts == []


def test_merge_same_slot_different_values_conflict():
    merged, conflicts = screen.merge_annotations([
        [ann("alice/1", value="5", span=(0, 5))],
        [ann("bob/1", value="7", span=(0, 5))]])
    assert len(merged) == 2          # both kept
    assert len(conflicts) == 1
    assert sorted(conflicts[0].values) == ["5", "7"]


def test_merge_id_collision_different_content_is_hard_error():
    with pytest.raises(screen.AnnotationMergeError):
        screen.merge_annotations([[ann("alice/1", value="x")],
                                  [ann("alice/1", value="y")]])
    # identical duplicate entries are tolerated
    merged, _ = screen.merge_annotations([[ann("alice/1")], [ann("alice/1")]])
    assert len(merged) == 1


def test_merge_three_author_fixture_matches_all_pairs_oracle():
    streams = [
        [ann("alice/1", "d1", "method", "a", span=(0, 4)),
         ann("alice/2", "d2", "method", "b", chapter=1)],
        [ann("bob/1", "d1", "method", "z", span=(0, 4)),
         ann("bob/2", "d2", "method", "b", chapter=1)],
        [ann("carol/1", "d1", "method", "q", span=(0, 4)),
         ann("carol/2", "d1", "domain", "text", span=(0, 4))],
    ]
    merged, conflicts = screen.merge_annotations(streams)
    flat = [a for s in streams for a in s]
    oracle_slots = {}
    for a in flat:
        oracle_slots.setdefault((a.doc_id, a.location(), a.property), set()).add(
            json.dumps(a.value))
    expected_conflicts = {k for k, v in oracle_slots.items() if len(v) > 1}
    got = {(c.doc_id, c.location, c.property) for c in conflicts}
    assert got == expected_conflicts
    # the single conflicted slot is (d1, span(0,4), method) holding three values
    assert len(conflicts) == 1
    assert sorted(conflicts[0].values) == ["a", "q", "z"]


def test_merge_commutative_over_stream_order():
    streams = [[ann("alice/1", value="x", span=(0, 3))],
               [ann("bob/1", value="y", span=(0, 3))]]
    m1, c1 = screen.merge_annotations(streams)
    m2, c2 = screen.merge_annotations(list(reversed(streams)))
    assert [a.id for a in m1] == [a.id for a in m2]
    assert len(c1) == len(c2) == 1


def test_validate_annotations_span_bounds_and_id_shape():
    good = ann("alice/1", span=(0, 10))
    bad_span = ann("alice/2", span=(5, 99))
    bad_id = screen.Annotation(id="noslash", doc_id="d1", property="p", value=1,
                               actor="x", timestamp="")
    problems = screen.validate_annotations([good, bad_span, bad_id], {"d1": 20})
    assert len(problems) == 2


# ---------------------------------------------------------------------------
# conflicts / patterns over a comparison
# ---------------------------------------------------------------------------

def comparison_fixture():
    annotations = [
        ann("alice/1", "d1", "method", "yes", span=(0, 3)),
        ann("bob/1", "d1", "method", "no", span=(4, 8)),
        ann("alice/2", "d2", "method", "yes", span=(0, 3)),
        ann("alice/3", "d1", "domain", "text", span=(0, 3)),
        ann("bob/2", "d2", "domain", "text", span=(0, 3)),
        ann("bob/3", "d3", "domain", "speech", span=(0, 3)),
        ann("carol/1", "d3", "grade", "2", span=(0, 3)),
        ann("alice/4", "d3", "grade", "3", span=(4, 9)),
    ]
    return build_comparison(annotations, ["method", "domain", "grade"], ["d1", "d2", "d3"])


def test_detect_conflicts_single_value_cell_clean():
    table = build_comparison([ann("alice/1", "d1", "method", "yes", span=(0, 3))],
                             ["method"], ["d1"])
    assert screen.detect_conflicts(table) == []


def test_detect_conflicts_two_values_in_cell():
    table = build_comparison([
        ann("alice/1", "d1", "method", "yes", span=(0, 3)),
        ann("bob/1", "d1", "method", "no", span=(5, 8))], ["method"], ["d1"])
    conflicts = screen.detect_conflicts(table)
    assert len(conflicts) == 1
    assert sorted(conflicts[0].values) == ["no", "yes"]


def test_detect_conflicts_finds_exactly_planted_ones():
    conflicts = screen.detect_conflicts(comparison_fixture())
    planted = {("method", "d1"), ("grade", "d3")}
    assert {(c.property, c.doc_id) for c in conflicts} == planted


def test_apply_resolutions_marks_resolved():
    conflicts = screen.detect_conflicts(comparison_fixture())
    resolved = screen.apply_resolutions(conflicts, [
        {"property": "method", "doc_id": "d1", "chosen_value": "yes", "note": "majority"}])
    by_key = {(c.property, c.doc_id): c for c in resolved}
    assert by_key[("method", "d1")].status == "resolved"
    assert by_key[("method", "d1")].chosen_value == "yes"
    assert by_key[("grade", "d3")].status == "open"


def test_pattern_summary_counts_and_order():
    table = build_comparison([
        ann("a/1", "d1", "method", "a", span=(0, 1)),
        ann("a/2", "d2", "method", "a", span=(0, 1)),
        ann("b/1", "d3", "method", "b", span=(0, 1))], ["method"], ["d1", "d2", "d3"])
    assert screen.pattern_summary(table)["method"] == [("a", 2), ("b", 1)]


def test_pattern_summary_empty_table():
    table = build_comparison([], ["method"], [])
    assert screen.pattern_summary(table) == {"method": []}


# ---------------------------------------------------------------------------
# claims
# ---------------------------------------------------------------------------

def test_validate_claims_fixture_two_invalid():
    annotations = [
        ann("alice/1", "d1", "method", "yes", span=(0, 3)),
        ann("bob/1", "d1", "method", "no", span=(5, 8)),    # conflicted cell
        ann("alice/2", "d2", "domain", "text", span=(0, 3)),
    ]
    claims = [
        screen.Claim(id="C1", statement="fine", evidence=["alice/2"], warrant="solid"),
        screen.Claim(id="C2", statement="dangles", evidence=["ghost/9"], warrant="w"),
        screen.Claim(id="C3", statement="no warrant", evidence=["alice/2"], warrant="  "),
        screen.Claim(id="C4", statement="conflicted", evidence=["alice/1"], warrant="w"),
        screen.Claim(id="C5", statement="fine too", evidence=["alice/2"], warrant="ok"),
    ]
    violations = screen.validate_claims(claims, annotations)
    by_claim = {}
    for v in violations:
        by_claim.setdefault(v.claim_id, []).append(v.kind)
    assert set(by_claim) == {"C2", "C3", "C4"}
    assert by_claim["C2"] == ["dangling-evidence"]
    assert by_claim["C3"] == ["empty-warrant"]
    assert by_claim["C4"] == ["conflicted-evidence"]


def test_validate_claims_valid_set_empty_report():
    annotations = [ann("alice/1", "d1", "method", "yes", span=(0, 3))]
    claims = [screen.Claim(id="C1", statement="s", evidence=["alice/1"], warrant="w")]
    assert screen.validate_claims(claims, annotations) == []
