"""Adversarial Unicode normalization for email text.

Homoglyph attacks swap Latin characters for visually identical codepoints
(Cyrillic "а" for "a") and splice invisible characters into keywords so
that token-based analysis misses them while the human reader sees nothing.
This module undoes both tricks: every confusable character is mapped back
to its canonical form, every invisible codepoint is dropped, and the
amount of obfuscation removed is recorded as evidence.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

DEFAULT_MAP_RESOURCE = "homoglyphs.txt"


class MapFormatError(ValueError):
    """A homoglyph map file is malformed or violates a map invariant."""


@dataclass(frozen=True)
class HomoglyphMap:
    """Confusable-to-canonical character table plus the invisible set.

    Immutable after construction and safe to share across threads.
    The map is cascade-free: no replacement string contains a character
    that is itself a key, so a single normalization pass is complete.
    """

    entries: dict[str, str]
    invisibles: frozenset[str]

    def __post_init__(self):
        if not self.entries:
            raise MapFormatError("homoglyph map has no mapping entries")
        for src, rep in self.entries.items():
            if len(src) != 1:
                raise MapFormatError(f"map key {src!r} is not a single character")
            if not rep:
                raise MapFormatError(f"empty replacement for U+{ord(src):04X}")
            for ch in rep:
                if ch in self.entries:
                    raise MapFormatError(
                        f"replacement for U+{ord(src):04X} contains mapped "
                        f"character U+{ord(ch):04X} (cascade)"
                    )
                if ch in self.invisibles:
                    raise MapFormatError(
                        f"replacement for U+{ord(src):04X} contains invisible "
                        f"character U+{ord(ch):04X}"
                    )
        overlap = self.invisibles & self.entries.keys()
        if overlap:
            cp = ord(next(iter(overlap)))
            raise MapFormatError(f"U+{cp:04X} is both mapped and invisible")


@dataclass(frozen=True)
class NormalizedText:
    """Canonical text plus counts of the obfuscation that was removed."""

    text: str
    substitutions: int = 0
    invisibles_removed: int = 0


def _parse_codepoint(token: str, where: str) -> str:
    if not token.upper().startswith("U+"):
        raise MapFormatError(f"{where}: expected U+XXXX codepoint, got {token!r}")
    try:
        value = int(token[2:], 16)
    except ValueError:
        raise MapFormatError(f"{where}: bad codepoint {token!r}") from None
    if not 0 <= value <= 0x10FFFF:
        raise MapFormatError(f"{where}: codepoint {token!r} out of range")
    return chr(value)


def parse_homoglyph_map(lines: Iterable[str], source: str = "<map>") -> HomoglyphMap:
    """Parse map lines: ``U+XXXX<TAB>replacement`` or ``INVISIBLE<TAB>U+XXXX``."""
    entries: dict[str, str] = {}
    invisibles: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        where = f"{source}:{lineno}"
        parts = line.split("\t")
        if len(parts) != 2:
            raise MapFormatError(f"{where}: expected two tab-separated fields")
        key, val = parts
        if key.strip().upper() == "INVISIBLE":
            invisibles.add(_parse_codepoint(val.strip(), where))
            continue
        src = _parse_codepoint(key.strip(), where)
        if src in entries:
            raise MapFormatError(f"{where}: duplicate entry for U+{ord(src):04X}")
        entries[src] = val
    return HomoglyphMap(entries=entries, invisibles=frozenset(invisibles))


def load_homoglyph_map(path: str | Path) -> HomoglyphMap:
    """Load and validate a homoglyph map file."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_homoglyph_map(text.splitlines(), source=str(path))


@functools.lru_cache(maxsize=1)
def default_homoglyph_map() -> HomoglyphMap:
    """The map shipped with the package (Cyrillic/Greek lookalikes, zero-width set)."""
    data = resources.files("becs").joinpath("data", DEFAULT_MAP_RESOURCE)
    return parse_homoglyph_map(data.read_text(encoding="utf-8").splitlines(),
                               source=DEFAULT_MAP_RESOURCE)


def normalize(text: str, hmap: HomoglyphMap | None = None) -> NormalizedText:
    """Map confusables to canonical characters and drop invisibles.

    Total function: any Unicode string is accepted, characters that are
    neither mapped nor invisible pass through untouched, in order. One
    pass suffices because the map is cascade-free.
    """
    if hmap is None:
        hmap = default_homoglyph_map()
    entries = hmap.entries
    invisibles = hmap.invisibles
    substitutions = 0
    removed = 0
    out: list[str] = []
    append = out.append
    for ch in text:
        rep = entries.get(ch)
        if rep is not None:
            append(rep)
            substitutions += 1
        elif ch in invisibles:
            removed += 1
        else:
            append(ch)
    return NormalizedText("".join(out), substitutions, removed)
