"""Email corpus ingestion, stratified splitting, and synthetic generation.

Corpus files are JSON Lines under a `# becs-corpus v1` header: one record
per line with fields id, subject, body and optional label (0 legitimate,
1 fraud), value (transaction USD), poisoned. The generator slot-fills the
shipped template files (30 fraud pretexts spanning wire-transfer, payroll
diversion, vendor invoice, gift card, and QR pretexts; 30 routine
business templates) and is deterministic per seed.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

CORPUS_HEADER = "# becs-corpus v1"

_RECORD_FIELDS = {"id", "subject", "body", "label", "value", "poisoned"}
_SLOT_RE = re.compile(r"\{(\w+)\}")


class CorpusError(ValueError):
    """A corpus file or record violates the corpus contract."""


@dataclass(frozen=True)
class EmailRecord:
    id: str
    subject: str
    body: str
    label: int | None = None
    value: float | None = None
    poisoned: bool = False

    def __post_init__(self):
        if not self.id:
            raise CorpusError("record id must be non-empty")
        if self.label not in (None, 0, 1):
            raise CorpusError(f"record {self.id}: label must be 0 or 1")
        if self.value is not None and self.value < 0:
            raise CorpusError(f"record {self.id}: value must be >= 0")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.80
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


def _record_from_json(doc: dict, where: str) -> EmailRecord:
    unknown = set(doc) - _RECORD_FIELDS
    if unknown:
        raise CorpusError(f"{where}: unknown field(s) {sorted(unknown)}")
    for key in ("id", "subject", "body"):
        if key not in doc:
            raise CorpusError(f"{where}: missing field {key!r}")
        if not isinstance(doc[key], str):
            raise CorpusError(f"{where}: field {key!r} must be a string")
    label = doc.get("label")
    if label is not None and label not in (0, 1):
        raise CorpusError(f"{where}: label must be 0 or 1")
    value = doc.get("value")
    if value is not None and not isinstance(value, (int, float)):
        raise CorpusError(f"{where}: value must be a number")
    poisoned = doc.get("poisoned", False)
    if not isinstance(poisoned, bool):
        raise CorpusError(f"{where}: poisoned must be a boolean")
    return EmailRecord(
        id=doc["id"], subject=doc["subject"], body=doc["body"],
        label=label, value=float(value) if value is not None else None,
        poisoned=poisoned,
    )


def ingest(path: str | Path) -> list[EmailRecord]:
    """Read a corpus file, validating records and rejecting duplicate ids.

    Errors carry the 1-based line number of the offending record.
    """
    path = Path(path)
    records: list[EmailRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            where = f"{path.name}:{lineno}"
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: invalid JSON: {exc.msg}") from exc
            if not isinstance(doc, dict):
                raise CorpusError(f"{where}: record must be a JSON object")
            rec = _record_from_json(doc, where)
            if rec.id in seen:
                raise CorpusError(f"{where}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def write_corpus(records, path: str | Path):
    lines = [CORPUS_HEADER]
    for rec in records:
        doc = {"id": rec.id, "subject": rec.subject, "body": rec.body}
        if rec.label is not None:
            doc["label"] = rec.label
        if rec.value is not None:
            doc["value"] = rec.value
        if rec.poisoned:
            doc["poisoned"] = True
        lines.append(json.dumps(doc, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def stratified_split(records, spec: SplitSpec = SplitSpec()):
    """Seeded per-class split preserving class proportions within one
    record; partitions are disjoint, exhaustive, and keep corpus order."""
    if any(rec.label is None for rec in records):
        raise CorpusError("stratified split requires every record labeled")
    labels = {rec.label for rec in records}
    if labels != {0, 1}:
        raise CorpusError("stratified split requires both classes present")
    rng = random.Random(spec.seed)
    train_ids: set[str] = set()
    for cls in (0, 1):
        ids = [rec.id for rec in records if rec.label == cls]
        rng.shuffle(ids)
        n_train = int(spec.train_fraction * len(ids))
        train_ids.update(ids[:n_train])
    train = [rec for rec in records if rec.id in train_ids]
    test = [rec for rec in records if rec.id not in train_ids]
    return train, test


@dataclass(frozen=True)
class Template:
    subject: str
    body: str


@dataclass(frozen=True)
class TemplateSet:
    fraud: tuple[Template, ...]
    legitimate: tuple[Template, ...]
    slots: dict[str, tuple[str, ...]] = field(default_factory=dict)


def _parse_templates(text: str, source: str) -> tuple[Template, ...]:
    templates = []
    for block in text.split("\n---\n"):
        lines = [ln for ln in block.strip().splitlines()
                 if not ln.startswith("#")]
        if not lines:
            continue
        if len(lines) < 2:
            raise CorpusError(f"{source}: template block needs a subject "
                              f"line and a body")
        templates.append(Template(subject=lines[0].strip(),
                                  body="\n".join(lines[1:]).strip()))
    return tuple(templates)


def _parse_slots(text: str) -> dict[str, tuple[str, ...]]:
    slots: dict[str, list[str]] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, _, value = line.partition("\t")
        if not value:
            raise CorpusError(f"slot line without tab-separated value: {line!r}")
        slots.setdefault(name.strip(), []).append(value)
    return {k: tuple(v) for k, v in slots.items()}


def load_default_templates() -> TemplateSet:
    root = resources.files("becs").joinpath("data", "templates")
    return TemplateSet(
        fraud=_parse_templates(
            root.joinpath("fraud.txt").read_text(encoding="utf-8"), "fraud.txt"),
        legitimate=_parse_templates(
            root.joinpath("legitimate.txt").read_text(encoding="utf-8"),
            "legitimate.txt"),
        slots=_parse_slots(
            root.joinpath("slots.txt").read_text(encoding="utf-8")),
    )


def _fill(template: Template, slots, rng: random.Random):
    """Fill every slot with one seeded choice per slot name; returns the
    filled subject/body and the numeric amount when an amount slot fired."""
    chosen: dict[str, str] = {}
    amount = None

    def pick(match):
        name = match.group(1)
        if name not in chosen:
            try:
                chosen[name] = rng.choice(slots[name])
            except KeyError:
                raise CorpusError(f"template references unknown slot {name!r}") from None
        return chosen[name]

    subject = _SLOT_RE.sub(pick, template.subject)
    body = _SLOT_RE.sub(pick, template.body)
    if "amount" in chosen:
        amount = float(chosen["amount"].replace(",", ""))
    return subject, body, amount


def synthesize(templates: TemplateSet | None = None, n_per_class: int = 100,
               seed: int = 0) -> list[EmailRecord]:
    """Generate a class-balanced labeled corpus, byte-identical per seed.

    Templates rotate round-robin so every pretext appears; slot choices
    use a per-record derived seed. Fraud records whose template mentions
    a dollar amount carry it as the record's transaction value.
    """
    if templates is None:
        templates = load_default_templates()
    if not templates.fraud or not templates.legitimate:
        raise CorpusError("template set must cover both classes")
    records: list[EmailRecord] = []
    for cls, name, pool in ((0, "legit", templates.legitimate),
                            (1, "fraud", templates.fraud)):
        for i in range(n_per_class):
            rng = random.Random(f"{seed}:{name}:{i}")
            template = pool[i % len(pool)]
            subject, body, amount = _fill(template, templates.slots, rng)
            records.append(EmailRecord(
                id=f"{name}-{i:05d}", subject=subject, body=body, label=cls,
                value=amount if cls == 1 else None,
            ))
    return records


def derive_seed(*parts) -> int:
    """Stable 63-bit seed derived from arbitrary string/int parts."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def with_poison_flag(rec: EmailRecord, subject: str, body: str) -> EmailRecord:
    return replace(rec, subject=subject, body=body, poisoned=True)
