from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from slrpipe import textproc as tp
from slrpipe.corpus import Document, Metadata

CFG = tp.PipelineConfig()


# ---------------------------------------------------------------------------
# normalize_and_tokenize
# ---------------------------------------------------------------------------

def test_tokenize_punctuation_and_min_length():
    assert tp.normalize_and_tokenize("Tf–Idf, e.g. ‘ranking’!", CFG) == ["tf", "idf", "ranking"]


def test_tokenize_empty():
    assert tp.normalize_and_tokenize("", CFG) == []


def test_tokenize_drops_pure_numbers_keeps_mixed():
    assert tp.normalize_and_tokenize("2022 saw 3d models and 1-2 passes", CFG) == [
        "saw", "3d", "models", "and", "1-2", "passes"]


FIXTURE_PARAGRAPH = (
    "Screening 120 papers by hand takes weeks; ranked lists cut that to days.\n"
    "Our pipeline normalizes text (NFKC), lowercases it, and strips punctuation!\n"
    "Tokens like 'e.g.' vanish, co-occurrence counts stay, and tf-idf weights rank every candidate.\n"
    "A 9-point scale captures agreement, while duplicate titles are grouped automatically.\n"
    "Ten short filler words pad this fixture to target size.\n"
)

# hand tokenization of the paragraph above (min length 2, pure numbers dropped)
FIXTURE_TOKENS = [
    "screening", "papers", "by", "hand", "takes", "weeks", "ranked", "lists",
    "cut", "that", "to", "days",
    "our", "pipeline", "normalizes", "text", "nfkc", "lowercases", "it", "and",
    "strips", "punctuation",
    "tokens", "like", "vanish", "co-occurrence", "counts", "stay", "and",
    "tf-idf", "weights", "rank", "every", "candidate",
    "9-point", "scale", "captures", "agreement", "while", "duplicate",
    "titles", "are", "grouped", "automatically",
    "ten", "short", "filler", "words", "pad", "this", "fixture", "to",
    "target", "size",
]


def test_tokenize_fixture_paragraph_matches_hand_oracle():
    assert len(FIXTURE_PARAGRAPH.split()) == 57
    assert tp.normalize_and_tokenize(FIXTURE_PARAGRAPH, CFG) == FIXTURE_TOKENS


@given(st.text(max_size=200))
def test_tokenize_idempotent_on_joined_output(raw):
    tokens = tp.normalize_and_tokenize(raw, CFG)
    assert tp.normalize_and_tokenize(" ".join(tokens), CFG) == tokens


# ---------------------------------------------------------------------------
# acronyms
# ---------------------------------------------------------------------------

def test_acronym_forward_pattern_and_expansion():
    raw = "Systematic Review Automation (SRA) saves effort. SRA helps."
    table = tp.detect_acronyms(raw, "d1")
    assert set(table.entries) == {"sra"}
    assert table.entries["sra"].long_form == "systematic review automation"
    tokens = tp.normalize_and_tokenize(raw, CFG)
    expanded = tp.expand_acronyms(tokens, table, CFG)
    assert expanded.count("sra") == 0
    assert expanded[-2:] == ["automation", "helps"]


def test_acronym_initial_mismatch_rejected():
    table = tp.detect_acronyms("We peeled a banana (SRA) yesterday.", "d1")
    assert table.entries == {}


def test_acronym_reverse_pattern():
    table = tp.detect_acronyms("TF (Term Frequency) weighting is standard.", "d1")
    assert table.entries["tf"].long_form == "term frequency"


def test_acronym_fixture_four_definitions_one_ambiguous():
    raw = (
        "Systematic Review Automation (SRA) is not the only pattern here. "
        "Natural Language Processing (NLP) pipelines feed TF (Term Frequency) counts. "
        "Open Research Tools (ORT) round out the set. "
        "Later, Synthetic Review Algorithms (SRA) would clash with the first definition."
    )
    table = tp.detect_acronyms(raw, "d1")
    assert set(table.entries) == {"sra", "nlp", "tf", "ort"}
    assert table.entries["sra"].long_form == "systematic review automation"
    assert len(table.warnings) == 1 and "ambiguous" in table.warnings[0]


def test_acronym_expansion_only_substitutes_acronym_tokens():
    raw = "Machine Learning (ML) is common."
    table = tp.detect_acronyms(raw, "d")
    tokens = tp.normalize_and_tokenize(raw, CFG)
    expanded = tp.expand_acronyms(tokens, table, CFG)
    # each "ml" token becomes two long-form tokens, nothing else changes
    assert expanded == ["machine", "learning", "machine", "learning", "is", "common"]
    n_acro = tokens.count("ml")
    assert len(expanded) == len(tokens) + n_acro * (2 - 1)


# ---------------------------------------------------------------------------
# multiwords
# ---------------------------------------------------------------------------

def _pmi_fixture_tokens():
    # one document, 101 tokens -> 100 bigrams; "machine learning" 5 times,
    # both words only inside the phrase
    tokens = []
    for i in range(5):
        tokens += [f"pad{i}x", "machine", "learning"]
    tokens += [f"fill{i}" for i in range(86)]
    assert len(tokens) == 101
    return [tokens]


def test_multiword_pmi_arithmetic():
    # n(ab)=5, n(a)=n(b)=5, W=100 -> pmi = ln(5*100/25) = ln 20
    cfg = tp.PipelineConfig(multiword_pmi_threshold=2.99, multiword_min_count=3)
    lex = tp.detect_multiwords(_pmi_fixture_tokens(), cfg)
    entry = lex.entries[("machine", "learning")]
    assert entry.count == 5
    assert entry.pmi == pytest.approx(math.log(20), abs=1e-12)


def test_multiword_strict_threshold_gate():
    # ln 20 = 2.9957... sits strictly below 3.0, so the default gate excludes it
    lex = tp.detect_multiwords(_pmi_fixture_tokens(), tp.PipelineConfig())
    assert ("machine", "learning") not in lex.entries


def test_multiword_count_gate():
    cfg = tp.PipelineConfig(multiword_pmi_threshold=0.0, multiword_min_count=3)
    tokens = [["alpha", "beta", "gamma", "delta"]]
    lex = tp.detect_multiwords(tokens, cfg)
    assert lex.entries == {}


def test_multiword_empty_corpus():
    assert tp.detect_multiwords([], CFG).entries == {}
    assert tp.detect_multiwords([["solo"]], CFG).entries == {}


def test_multiword_rewrite_left_to_right_non_overlapping():
    lex = tp.MultiwordLexicon(entries={("a", "b"): tp.MultiwordEntry(3, 5.0),
                                       ("b", "c"): tp.MultiwordEntry(3, 5.0)})
    assert tp.apply_multiwords(["a", "b", "c", "b", "c"], lex) == ["a_b", "c", "b_c"]


# ---------------------------------------------------------------------------
# stemming
# ---------------------------------------------------------------------------

def test_stem_examples():
    assert tp.stem("reviews") == "review"
    assert tp.stem("running") == "run"


# hand application of the shipped rule table (fixed point, first match per pass)
STEM_FIXTURE = [
    ("reviews", "review"), ("review", "review"), ("running", "run"),
    ("studies", "study"), ("study", "study"), ("classes", "class"),
    ("glasses", "glass"), ("processes", "process"), ("boxes", "box"),
    ("searches", "search"), ("cases", "case"), ("analysis", "analysis"),
    ("analyses", "analyse"), ("status", "status"), ("automation", "autom"),
    ("automate", "autom"), ("information", "inform"), ("organization", "organize"),
    ("normalization", "normalize"), ("effectiveness", "effective"),
    ("requirement", "require"), ("requirements", "require"),
    ("document", "document"), ("documents", "document"), ("useful", "use"),
    ("meaningful", "mean"), ("similarity", "similar"), ("quality", "qual"),
    ("really", "real"), ("only", "only"), ("fitting", "fit"), ("fitted", "fit"),
    ("meeting", "meet"), ("falling", "fall"), ("missed", "miss"),
    ("buzzing", "buzz"), ("making", "make"), ("coding", "code"),
    ("based", "base"), ("using", "using"), ("used", "used"),
    ("testing", "test"), ("stated", "state"), ("relations", "rel"),
    ("cities", "city"), ("ties", "tie"), ("apply", "app"),
    ("applied", "appli"), ("survey", "survey"), ("surveys", "survey"),
]


@pytest.mark.parametrize("word,expected", STEM_FIXTURE)
def test_stem_rule_table_fixture(word, expected):
    assert tp.stem(word) == expected


@pytest.mark.parametrize("word,_", STEM_FIXTURE)
def test_stem_idempotent_on_fixture(word, _):
    assert tp.stem(tp.stem(word)) == tp.stem(word)


@given(st.text(alphabet=st.characters(min_codepoint=ord("a"), max_codepoint=ord("z")),
               min_size=1, max_size=15))
def test_stem_idempotent_property(word):
    assert tp.stem(tp.stem(word)) == tp.stem(word)


# ---------------------------------------------------------------------------
# build_bow
# ---------------------------------------------------------------------------

def _doc(doc_id: str, text: str) -> Document:
    return Document(meta=Metadata(id=doc_id, title=doc_id), raw_text=text)


def test_build_bow_stem_merge_and_stopwords():
    cfg = tp.PipelineConfig(stopwords=frozenset({"the", "of"}))
    bag = tp.build_bow(_doc("d", "The review of reviews"), cfg)
    assert bag.counts == {"review": 2}
    assert bag.total_tokens == 2


def test_build_bow_only_stopwords():
    cfg = tp.PipelineConfig(stopwords=frozenset({"the", "of"}))
    bag = tp.build_bow(_doc("d", "the of the of"), cfg)
    assert bag.counts == {} and bag.total_tokens == 0


def test_build_bow_missing_text_names_document():
    with pytest.raises(tp.MissingTextError, match="doc-7"):
        tp.build_bow(Document(meta=Metadata(id="doc-7", title="t")), CFG)


def test_build_bow_three_doc_pipeline_hand_oracle():
    """Hand execution of the five stages over a three-document corpus."""
    texts = {
        "d1": "Machine learning helps. Machine learning ranks. Machine learning wins.",
        "d2": "The ranking of machine learning pipelines.",
        "d3": "Stopwords the of and only.",
    }
    cfg = tp.PipelineConfig(multiword_pmi_threshold=1.0, multiword_min_count=3)
    tokenized = {d: tp.normalize_and_tokenize(t, cfg) for d, t in texts.items()}
    lexicon = tp.detect_multiwords(list(tokenized.values()), cfg)
    assert set(lexicon.entries) == {("machine", "learning")}
    bags = {d: tp.build_bow(_doc(d, t), cfg, lexicon, tp.AcronymTable())
            for d, t in texts.items()}
    assert bags["d1"].counts == {"help": 1, "machine_learn": 3, "rank": 1, "win": 1}
    assert bags["d2"].counts == {"machine_learn": 1, "pipeline": 1, "rank": 1}
    assert bags["d3"].counts == {"stopword": 1}


@given(st.lists(st.sampled_from(["the", "review", "of", "tools", "running", "and"]),
                max_size=30))
def test_stopword_removal_only_removes(tokens):
    cfg = tp.PipelineConfig()
    bag = tp.tokens_to_bag(tokens, cfg)
    from collections import Counter
    stemmed = Counter(tp.stem(t) for t in tokens)
    for term, count in bag.counts.items():
        assert count <= stemmed[term]
        assert term not in cfg.stopwords


def test_normalize_keyword_matches_document_pipeline():
    # multi-token keywords join before stemming, like the corpus side
    assert tp.normalize_keyword("Machine Learning", CFG) == "machine_learn"
    assert tp.normalize_keyword("screening", CFG) == "screen"
    assert tp.normalize_keyword("", CFG) == ""
