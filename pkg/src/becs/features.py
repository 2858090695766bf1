"""Psycholinguistic and structural feature extraction.

Turns normalized email text into the 35-value forensic vector consumed by
the tree-ensemble scorer. The canonical field order is frozen in
FEATURE_NAMES and documented in FEATURES.md at the repo root; serialized
models carry a hash of that order and refuse vectors from any other
schema. All extraction is pure and deterministic: the same text always
yields a bit-identical vector.
"""

from __future__ import annotations

import hashlib
import math
import re
import unicodedata
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

LEXICON_NAMES = (
    "urgency",
    "authority",
    "scarcity",
    "reciprocity",
    "hedges",
    "boosters",
    "exclusive_words",
    "positive_sentiment",
    "negative_sentiment",
    "financial_keywords",
    "tech_threat_keywords",
    "money_entity_patterns",
)

# Closed grammatical classes used for the pronoun counts; not worth a file.
_FIRST_PERSON = frozenset({"i", "me", "my", "mine", "we", "us", "our", "ours"})
_SECOND_PERSON = frozenset({"you", "your", "yours"})

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")


class LexiconError(ValueError):
    """A lexicon directory or file violates the lexicon contract."""


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens (underscore and punctuation excluded)."""
    return _TOKEN_RE.findall(text.lower())


def word_count(text: str) -> int:
    """Number of maximal non-empty tokens split on Unicode whitespace."""
    return len(text.split())


@dataclass(frozen=True)
class Lexicon:
    """One named term list; single words and multi-word phrases."""

    name: str
    terms: tuple[str, ...]
    singles: frozenset[str]
    phrases: tuple[tuple[str, ...], ...]

    def positions(self, tokens: list[str]) -> list[int]:
        """Token indices where a term starts (phrases count once per start)."""
        hits = [i for i, tok in enumerate(tokens) if tok in self.singles]
        for phrase in self.phrases:
            k = len(phrase)
            hits.extend(
                i for i in range(len(tokens) - k + 1)
                if tuple(tokens[i:i + k]) == phrase
            )
        hits.sort()
        return hits

    def count(self, tokens: list[str]) -> int:
        return len(self.positions(tokens))

    def matches(self, tokens: list[str]) -> bool:
        if any(tok in self.singles for tok in tokens):
            return True
        return any(self.positions(tokens))


def _build_lexicon(name: str, terms: list[str]) -> Lexicon:
    singles = set()
    phrases = []
    for term in terms:
        parts = tuple(tokenize(term))
        if not parts:
            raise LexiconError(f"lexicon {name!r}: term {term!r} has no tokens")
        if len(parts) == 1:
            singles.add(parts[0])
        else:
            phrases.append(parts)
    return Lexicon(name=name, terms=tuple(terms), singles=frozenset(singles),
                   phrases=tuple(phrases))


def _read_terms(name: str, text: str, source: str) -> list[str]:
    terms: list[str] = []
    seen: set[str] = set()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        term = line.lower()
        if term in seen:
            raise LexiconError(f"{source}: duplicate term {term!r}")
        seen.add(term)
        terms.append(term)
    if not terms:
        raise LexiconError(f"{source}: lexicon {name!r} is empty")
    return terms


@dataclass(frozen=True)
class LexiconSet:
    """The twelve term lists of the forensic feature set.

    Immutable and shareable; `money_regexes` is derived from the
    money_entity_patterns list at load time (currency symbol + number,
    number + currency word, currency word + number).
    """

    urgency: Lexicon
    authority: Lexicon
    scarcity: Lexicon
    reciprocity: Lexicon
    hedges: Lexicon
    boosters: Lexicon
    exclusive_words: Lexicon
    positive_sentiment: Lexicon
    negative_sentiment: Lexicon
    financial_keywords: Lexicon
    tech_threat_keywords: Lexicon
    money_entity_patterns: Lexicon
    money_regexes: tuple[re.Pattern, ...] = ()


_NUMBER = r"\d[\d,]*(?:\.\d+)?"


def _compile_money_patterns(terms: tuple[str, ...]) -> tuple[re.Pattern, ...]:
    symbols = [t for t in terms if not any(c.isalnum() for c in t)]
    words = [t for t in terms if t not in symbols]
    patterns = []
    if symbols:
        sym = "|".join(re.escape(s) for s in symbols)
        patterns.append(re.compile(rf"(?:{sym})\s?{_NUMBER}"))
    if words:
        wrd = "|".join(re.escape(w) for w in words)
        patterns.append(re.compile(rf"{_NUMBER}\s?(?:{wrd})\b", re.IGNORECASE))
        patterns.append(re.compile(rf"\b(?:{wrd})\s?{_NUMBER}", re.IGNORECASE))
    return tuple(patterns)


def load_lexicons(directory: str | Path) -> LexiconSet:
    """Load one `<name>.txt` file per list in LEXICON_NAMES.

    Terms are lowercased on load; blank lines and `#` comments are
    ignored. Raises LexiconError for a missing file, an empty list, or a
    duplicate term, naming the offending list.
    """
    directory = Path(directory)
    loaded: dict[str, Lexicon] = {}
    for name in LEXICON_NAMES:
        path = directory / f"{name}.txt"
        if not path.is_file():
            raise LexiconError(f"missing lexicon file: {path}")
        terms = _read_terms(name, path.read_text(encoding="utf-8"), str(path))
        loaded[name] = _build_lexicon(name, terms)
    return LexiconSet(
        **loaded,
        money_regexes=_compile_money_patterns(loaded["money_entity_patterns"].terms),
    )


_DEFAULT_LEXICONS: LexiconSet | None = None


def default_lexicons() -> LexiconSet:
    """The lexicon set shipped with the package (cached)."""
    global _DEFAULT_LEXICONS
    if _DEFAULT_LEXICONS is None:
        root = resources.files("becs").joinpath("data", "lexicons")
        loaded: dict[str, Lexicon] = {}
        for name in LEXICON_NAMES:
            text = root.joinpath(f"{name}.txt").read_text(encoding="utf-8")
            loaded[name] = _build_lexicon(name, _read_terms(name, text, name))
        _DEFAULT_LEXICONS = LexiconSet(
            **loaded,
            money_regexes=_compile_money_patterns(
                loaded["money_entity_patterns"].terms),
        )
    return _DEFAULT_LEXICONS


@dataclass(frozen=True)
class PsiParams:
    """Parameters of the politeness-urgency interaction score."""

    alpha: float = 1.0
    beta: float = 10.0


def _sigmoid(x: float) -> float:
    # clip keeps the result strictly inside (0, 1) in float64
    if x > 35.0:
        x = 35.0
    elif x < -35.0:
        x = -35.0
    return 1.0 / (1.0 + math.exp(-x))


def smiling_assassin(s_pos: float, u_freq: float,
                     alpha: float = 1.0, beta: float = 10.0) -> float:
    """Politeness-urgency interaction score in (0, 1).

    sigmoid(alpha * s_pos * ln(1 + beta * u_freq)): a polite message
    (high positive-sentiment ratio) that also piles on urgency scores
    high; either ingredient alone leaves the score at 0.5.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if not 0.0 <= s_pos <= 1.0:
        raise ValueError("s_pos must be in [0, 1]")
    if u_freq < 0.0:
        raise ValueError("u_freq must be >= 0")
    return _sigmoid(alpha * s_pos * math.log1p(beta * u_freq))


# The 35-field forensic vector. Field order is the canonical feature-index
# order used by serialized models; FEATURES.md is the written contract.
@dataclass(frozen=True)
class FeatureVector:
    # psycholinguistic (12)
    urgency_count: float
    urgency_density: float
    authority_count: float
    scarcity_count: float
    reciprocity_count: float
    financial_keyword_count: float
    tech_threat_count: float
    persuasion_cue_total: float
    persuasion_cue_density: float
    urgency_position_mean: float
    first_person_count: float
    second_person_count: float
    # forensic stylometry (7)
    hedge_count: float
    booster_count: float
    exclusive_word_count: float
    exclamation_count: float
    question_count: float
    all_caps_word_count: float
    type_token_ratio: float
    # sentiment (6)
    polarity: float
    subjectivity: float
    positive_ratio: float
    negative_ratio: float
    sentiment_delta: float
    psi_score: float
    # structural (10)
    caps_ratio: float
    url_count: float
    punctuation_density: float
    word_count: float
    char_count: float
    avg_word_length: float
    complex_word_ratio: float
    ent_money_count: float
    digit_ratio: float
    obfuscation_count: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in FEATURE_NAMES)


FEATURE_NAMES: tuple[str, ...] = tuple(f.name for f in fields(FeatureVector))

FEATURE_GROUPS = {
    "psycholinguistic": FEATURE_NAMES[0:12],
    "forensic": FEATURE_NAMES[12:19],
    "sentiment": FEATURE_NAMES[19:25],
    "structural": FEATURE_NAMES[25:35],
}


def feature_schema_hash() -> str:
    """Checksum of the canonical feature order, embedded in model files."""
    digest = hashlib.sha256("\n".join(FEATURE_NAMES).encode("ascii"))
    return digest.hexdigest()[:16]


def _segment_polarity(tokens: list[str], lex: LexiconSet) -> float:
    pos = lex.positive_sentiment.count(tokens)
    neg = lex.negative_sentiment.count(tokens)
    return (pos - neg) / (pos + neg) if pos + neg else 0.0


def _syllables(word: str) -> int:
    return len(_VOWEL_GROUP_RE.findall(word.lower()))


def extract_features(norm, lexicons: LexiconSet | None = None,
                     psi: PsiParams = PsiParams()) -> FeatureVector:
    """Extract the 35-feature vector from normalizer output.

    Expects text already run through the normalizer (confusables mapped,
    invisibles gone); obfuscation_count is taken from the normalization
    counts. Empty or whitespace-only text yields all-zero counts and
    ratios with psi at its neutral 0.5.
    """
    if lexicons is None:
        lexicons = default_lexicons()
    text = norm.text
    tokens = tokenize(text)
    words = text.split()
    wc = len(words)
    n_tok = len(tokens)

    urgency_hits = lexicons.urgency.positions(tokens)
    urgency_count = len(urgency_hits)
    urgency_density = urgency_count / wc if wc else 0.0
    authority_count = lexicons.authority.count(tokens)
    scarcity_count = lexicons.scarcity.count(tokens)
    reciprocity_count = lexicons.reciprocity.count(tokens)
    financial_count = lexicons.financial_keywords.count(tokens)
    tech_threat_count = lexicons.tech_threat_keywords.count(tokens)
    persuasion_total = urgency_count + authority_count + scarcity_count + reciprocity_count
    denom_pos = max(1, n_tok - 1)
    position_mean = (
        sum(i / denom_pos for i in urgency_hits) / urgency_count
        if urgency_count else 0.0
    )

    pos_hits = lexicons.positive_sentiment.count(tokens)
    neg_hits = lexicons.negative_sentiment.count(tokens)
    sentiment_total = pos_hits + neg_hits
    polarity = (pos_hits - neg_hits) / sentiment_total if sentiment_total else 0.0
    positive_ratio = pos_hits / sentiment_total if sentiment_total else 0.0
    negative_ratio = neg_hits / sentiment_total if sentiment_total else 0.0
    subjectivity = sentiment_total / wc if wc else 0.0
    third = n_tok // 3
    if third:
        sentiment_delta = (
            _segment_polarity(tokens[n_tok - third:], lexicons)
            - _segment_polarity(tokens[:third], lexicons)
        )
    else:
        sentiment_delta = 0.0

    upper = 0
    alpha_chars = 0
    digits = 0
    punct = 0
    for ch in text:
        if ch.isalpha():
            alpha_chars += 1
            if ch.isupper():
                upper += 1
        elif ch.isdigit():
            digits += 1
        if unicodedata.category(ch).startswith("P"):
            punct += 1
    char_count = len(text)

    return FeatureVector(
        urgency_count=float(urgency_count),
        urgency_density=urgency_density,
        authority_count=float(authority_count),
        scarcity_count=float(scarcity_count),
        reciprocity_count=float(reciprocity_count),
        financial_keyword_count=float(financial_count),
        tech_threat_count=float(tech_threat_count),
        persuasion_cue_total=float(persuasion_total),
        persuasion_cue_density=persuasion_total / wc if wc else 0.0,
        urgency_position_mean=position_mean,
        first_person_count=float(sum(t in _FIRST_PERSON for t in tokens)),
        second_person_count=float(sum(t in _SECOND_PERSON for t in tokens)),
        hedge_count=float(lexicons.hedges.count(tokens)),
        booster_count=float(lexicons.boosters.count(tokens)),
        exclusive_word_count=float(lexicons.exclusive_words.count(tokens)),
        exclamation_count=float(text.count("!")),
        question_count=float(text.count("?")),
        all_caps_word_count=float(
            sum(1 for w in words if len(w) >= 2 and w.isupper())),
        type_token_ratio=len(set(tokens)) / n_tok if n_tok else 0.0,
        polarity=polarity,
        subjectivity=subjectivity,
        positive_ratio=positive_ratio,
        negative_ratio=negative_ratio,
        sentiment_delta=sentiment_delta,
        psi_score=smiling_assassin(positive_ratio, urgency_density,
                                   psi.alpha, psi.beta),
        caps_ratio=upper / alpha_chars if alpha_chars else 0.0,
        url_count=float(len(_URL_RE.findall(text))),
        punctuation_density=punct / char_count if char_count else 0.0,
        word_count=float(wc),
        char_count=float(char_count),
        avg_word_length=sum(len(w) for w in words) / wc if wc else 0.0,
        complex_word_ratio=(
            sum(1 for w in words if _syllables(w) >= 3) / wc if wc else 0.0),
        ent_money_count=float(
            sum(len(p.findall(text)) for p in lexicons.money_regexes)),
        digit_ratio=digits / char_count if char_count else 0.0,
        obfuscation_count=float(norm.substitutions + norm.invisibles_removed),
    )
