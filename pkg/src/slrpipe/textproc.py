"""Deterministic bag-of-words pipeline.

Stage order is fixed: normalize/tokenize -> acronym expansion -> multiword
join -> stem -> stopword removal -> count. Acronym expansion must run before
stemming (definitions are detected on raw, cased text) and multiword joining
must run before stemming so lexicon keys stay stable.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

_TOKEN_KEEP = "-_"
_VOWELS = "aeiou"


def _data_text(name: str) -> str:
    return resources.files("slrpipe").joinpath("data", name).read_text(encoding="utf-8")


def load_stopwords(path=None) -> frozenset[str]:
    """Load a stopword list (one term per line); defaults to the shipped English list."""
    if path is None:
        text = _data_text("stopwords_en.txt")
    else:
        text = open(path, encoding="utf-8").read()
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


@dataclass(frozen=True)
class PipelineConfig:
    stopwords: frozenset[str] = field(default_factory=load_stopwords)
    min_token_len: int = 2
    multiword_pmi_threshold: float = 3.0
    multiword_min_count: int = 3
    expand_acronyms: bool = True
    join_multiwords: bool = True
    apply_stemming: bool = True
    remove_stopwords: bool = True

    def __post_init__(self):
        if self.min_token_len < 0 or self.multiword_pmi_threshold < 0 or self.multiword_min_count < 0:
            raise ValueError("pipeline thresholds must be >= 0")


@dataclass
class BagOfWords:
    counts: dict[str, int]
    total_tokens: int

    def __post_init__(self):
        if self.total_tokens != sum(self.counts.values()):
            raise ValueError("total_tokens must equal the sum of counts")


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

def normalize_and_tokenize(raw: str, config: PipelineConfig) -> list[str]:
    """NFKC-normalize, lowercase, strip special characters and split into tokens.

    Characters outside letters/digits/hyphen/underscore become spaces. Tokens
    shorter than min_token_len and purely numeric tokens are dropped.
    """
    text = unicodedata.normalize("NFKC", raw).lower()
    chars = [c if (c.isalnum() or c in _TOKEN_KEEP) else " " for c in text]
    tokens = []
    for tok in "".join(chars).split():
        tok = tok.strip(_TOKEN_KEEP)
        if len(tok) < config.min_token_len:
            continue
        if tok.isdigit():
            continue
        if not any(c.isalnum() for c in tok):
            continue
        tokens.append(tok)
    return tokens


# ---------------------------------------------------------------------------
# Acronyms
# ---------------------------------------------------------------------------

@dataclass
class AcronymEntry:
    acronym: str            # lowercase key form
    long_form: str          # lowercase long form, words space-separated
    doc_id: str
    span: tuple[int, int]   # character span of the definition in the raw text


@dataclass
class AcronymTable:
    entries: dict[str, AcronymEntry] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def merge(self, other: "AcronymTable") -> None:
        """Fold another table in; on conflicting long forms the first entry wins."""
        for key, entry in other.entries.items():
            known = self.entries.get(key)
            if known is None:
                self.entries[key] = entry
            elif known.long_form != entry.long_form:
                self.warnings.append(
                    f"ambiguous acronym '{key}': kept '{known.long_form}', ignored '{entry.long_form}'"
                )
        self.warnings.extend(other.warnings)


_PAREN_RE = re.compile(r"\(([^()\n]{2,80})\)")
_WORD_SPLIT_RE = re.compile(r"[\s\-]+")


def _is_acronym_shaped(text: str) -> bool:
    # 2-10 uppercase-dominant characters, at least two uppercase letters
    text = text.strip()
    if not (2 <= len(text) <= 10) or " " in text:
        return False
    letters = [c for c in text if c.isalpha()]
    upper = [c for c in letters if c.isupper()]
    return len(upper) >= 2 and len(upper) * 2 >= len(text)


def _initials(words: list[str]) -> str:
    return "".join(w[0].lower() for w in words if w)


def _is_subsequence(needle: str, haystack: str) -> bool:
    it = iter(haystack)
    return all(ch in it for ch in needle)


def _match_long_form(acronym: str, words: list[str]) -> list[str] | None:
    """Shortest trailing word slice whose initials cover the acronym letters in order."""
    letters = "".join(c for c in acronym.lower() if c.isalpha())
    if not letters:
        return None
    parts: list[str] = []
    for w in words:
        parts.extend(p for p in _WORD_SPLIT_RE.split(w) if p)
    best = None
    for start in range(len(parts)):
        tail = parts[start:]
        if tail and tail[0][0].lower() == letters[0] and _is_subsequence(letters, _initials(tail)):
            best = tail
    return best


def detect_acronyms(raw: str, doc_id: str = "") -> AcronymTable:
    """Detect "Long Form (LF)" and "LF (Long Form)" definitions in raw text."""
    table = AcronymTable()
    for m in _PAREN_RE.finditer(raw):
        inner = m.group(1).strip()
        before = raw[: m.start()].rstrip()
        prev_words = before.split()
        entry = None
        if _is_acronym_shaped(inner) and prev_words:
            window = prev_words[-(len(inner) + 3):]
            long_words = _match_long_form(inner, window)
            if long_words:
                start = raw.rfind(long_words[0], 0, m.start())
                entry = AcronymEntry(
                    acronym=inner.lower(),
                    long_form=" ".join(w.lower().strip(",.;:") for w in long_words),
                    doc_id=doc_id,
                    span=(start if start >= 0 else m.start(), m.end()),
                )
        elif prev_words and _is_acronym_shaped(prev_words[-1].strip(",.;:")):
            acro = prev_words[-1].strip(",.;:")
            long_words = _match_long_form(acro, inner.split())
            if long_words and len(long_words) == len(inner.split()):
                entry = AcronymEntry(
                    acronym=acro.lower(),
                    long_form=" ".join(w.lower().strip(",.;:") for w in long_words),
                    doc_id=doc_id,
                    span=(m.start() - len(prev_words[-1]), m.end()),
                )
        if entry is None:
            continue
        known = table.entries.get(entry.acronym)
        if known is None:
            table.entries[entry.acronym] = entry
        elif known.long_form != entry.long_form:
            table.warnings.append(
                f"ambiguous acronym '{entry.acronym}': kept '{known.long_form}', ignored '{entry.long_form}'"
            )
    return table


def expand_acronyms(tokens: list[str], table: AcronymTable, config: PipelineConfig) -> list[str]:
    """Replace each standalone acronym token with its long form's token sequence."""
    if not table.entries:
        return list(tokens)
    expansions = {
        key: normalize_and_tokenize(entry.long_form, config)
        for key, entry in table.entries.items()
    }
    out: list[str] = []
    for tok in tokens:
        repl = expansions.get(tok)
        if repl:
            out.extend(repl)
        else:
            out.append(tok)
    return out


def detect_and_expand_acronyms(
    raw: str, tokens: list[str], config: PipelineConfig, doc_id: str = ""
) -> tuple[AcronymTable, list[str]]:
    table = detect_acronyms(raw, doc_id)
    return table, expand_acronyms(tokens, table, config)


# ---------------------------------------------------------------------------
# Multiwords
# ---------------------------------------------------------------------------

@dataclass
class MultiwordEntry:
    count: int
    pmi: float


@dataclass
class MultiwordLexicon:
    entries: dict[tuple[str, str], MultiwordEntry] = field(default_factory=dict)

    @staticmethod
    def joined(pair: tuple[str, str]) -> str:
        return f"{pair[0]}_{pair[1]}"


def detect_multiwords(corpus_tokens: list[list[str]], config: PipelineConfig) -> MultiwordLexicon:
    """Collect adjacent bigrams whose count and PMI pass the configured gates.

    pmi(a, b) = ln(n(ab) * W / (n(a) * n(b))) with W the total bigram count
    over the corpus and n(.) unigram token counts.
    """
    unigrams: Counter[str] = Counter()
    bigrams: Counter[tuple[str, str]] = Counter()
    for tokens in corpus_tokens:
        unigrams.update(tokens)
        bigrams.update(zip(tokens, tokens[1:]))
    total_bigrams = sum(bigrams.values())
    lexicon = MultiwordLexicon()
    if total_bigrams == 0:
        return lexicon
    for (a, b), n_ab in bigrams.items():
        if n_ab < config.multiword_min_count:
            continue
        pmi = math.log(n_ab * total_bigrams / (unigrams[a] * unigrams[b]))
        if pmi >= config.multiword_pmi_threshold:
            lexicon.entries[(a, b)] = MultiwordEntry(count=n_ab, pmi=pmi)
    return lexicon


def apply_multiwords(tokens: list[str], lexicon: MultiwordLexicon) -> list[str]:
    """Rewrite qualifying adjacent pairs into joined tokens, left to right, non-overlapping."""
    if not lexicon.entries:
        return list(tokens)
    out: list[str] = []
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens) and (tokens[i], tokens[i + 1]) in lexicon.entries:
            out.append(lexicon.joined((tokens[i], tokens[i + 1])))
            i += 2
        else:
            out.append(tokens[i])
            i += 1
    return out


# ---------------------------------------------------------------------------
# Stemming
# ---------------------------------------------------------------------------

class _StemRules:
    def __init__(self, spec: dict):
        self.rules = spec["rules"]
        self.undouble_keep = set(spec.get("undouble_keep", []))

    def _is_vowel(self, word: str, i: int) -> bool:
        c = word[i]
        return c in _VOWELS or (c == "y" and i > 0)

    def _restore(self, stem: str) -> str:
        # Reduce trailing doubled consonants (except ll/ss/zz); restore a
        # silent 'e' on single-syllable stems ending consonant-vowel-consonant.
        if len(stem) >= 2 and stem[-1] == stem[-2] and not self._is_vowel(stem, len(stem) - 1):
            if stem[-2:] not in self.undouble_keep:
                return stem[:-1]
            return stem
        vowel_runs = 0
        prev_vowel = False
        for i in range(len(stem)):
            v = self._is_vowel(stem, i)
            if v and not prev_vowel:
                vowel_runs += 1
            prev_vowel = v
        if (
            vowel_runs == 1
            and len(stem) >= 3
            and not self._is_vowel(stem, len(stem) - 1)
            and stem[-1] not in "wxy"
            and self._is_vowel(stem, len(stem) - 2)
            and not self._is_vowel(stem, len(stem) - 3)
        ):
            return stem + "e"
        return stem

    def apply_once(self, token: str) -> str:
        for rule in self.rules:
            suffix = rule["suffix"]
            if not token.endswith(suffix):
                continue
            stem = token[: -len(suffix)]
            if len(stem) < rule.get("min_stem", 0):
                continue
            if "stem_end" in rule and not any(stem.endswith(e) for e in rule["stem_end"]):
                continue
            if "not_token_end" in rule and any(token.endswith(e) for e in rule["not_token_end"]):
                continue
            stem += rule.get("replace", "")
            if rule.get("undouble"):
                stem = self._restore(stem)
            return stem
        return token


_STEM_RULES: _StemRules | None = None


def _stem_rules() -> _StemRules:
    global _STEM_RULES
    if _STEM_RULES is None:
        _STEM_RULES = _StemRules(json.loads(_data_text("stem_rules.json")))
    return _STEM_RULES


def stem(token: str) -> str:
    """Rule-based suffix stemming, applied to a fixed point (hence idempotent)."""
    rules = _stem_rules()
    current = token
    while True:
        nxt = rules.apply_once(current)
        if nxt == current:
            return current
        current = nxt


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

class MissingTextError(ValueError):
    def __init__(self, doc_id: str):
        super().__init__(f"document '{doc_id}' has no raw text")
        self.doc_id = doc_id


def tokens_to_bag(tokens: list[str], config: PipelineConfig) -> BagOfWords:
    """Stem, drop stopwords and count an already tokenized/expanded/joined stream."""
    if config.apply_stemming:
        tokens = [stem(t) for t in tokens]
    if config.remove_stopwords:
        tokens = [t for t in tokens if t not in config.stopwords]
    counts = dict(sorted(Counter(tokens).items()))
    return BagOfWords(counts=counts, total_tokens=sum(counts.values()))


def build_bow(
    document,
    config: PipelineConfig,
    lexicon: MultiwordLexicon | None = None,
    acronyms: AcronymTable | None = None,
) -> BagOfWords:
    """Run the full fixed-order pipeline for one document."""
    if document.raw_text is None:
        raise MissingTextError(document.meta.id)
    tokens = normalize_and_tokenize(document.raw_text, config)
    if config.expand_acronyms and acronyms is not None:
        tokens = expand_acronyms(tokens, acronyms, config)
    if config.join_multiwords and lexicon is not None:
        tokens = apply_multiwords(tokens, lexicon)
    return tokens_to_bag(tokens, config)


def normalize_keyword(raw: str, config: PipelineConfig) -> str:
    """Pipeline-normalize a query keyword: tokenize, join multiword parts, stem.

    Mirrors the document pipeline, where multiword joining happens before
    stemming, so "machine learning" and the joined corpus token agree.
    """
    tokens = normalize_and_tokenize(raw, config)
    if not tokens:
        return ""
    joined = "_".join(tokens)
    return stem(joined) if config.apply_stemming else joined
