"""Turn source texts into normalized claim triples via the extractor endpoint.

The prompt is assembled from six template parts in a fixed order, the
completion is parsed tolerantly (structured array or labeled line groups),
and every parsed record passes through normal-form validation before it
becomes a Triple. Validation rejections are data, not faults: they are
counted and reported, never raised.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .core import SourceKind, Triple, dedup_triples
from .errors import CapabilityError, ExtractionError, StructuralError
from .gateway import ChatRequest, LLMClient
from .promptstore import prompt_text

SOURCE_TEXT_MARKER = "=== SOURCE TEXT ==="

# comparator tokens, longest first so startswith checks see digraphs whole
COMPARATORS = ("≥", "≤", ">=", "<=", "==", "=", "<", ">")

# first-word (or first-two-word) rewrites onto the canonical modality verbs
_VERB_MAP = {
    "must": "shall",
    "will": "shall",
    "measured": "has measured",
    "observed": "has measured",
    "anticipates": "targets",
    "aims": "targets",
}

EXTRACTION_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "subject": {"type": "string"},
            "predicate": {"type": "string"},
            "object": {"type": "string"},
        },
        "required": ["subject", "predicate", "object"],
        "additionalProperties": False,
    },
}

_BUNDLE_FILES = (
    ("claim_definition", "claim_definition.txt"),
    ("core_rules", "core_rules.txt"),
    ("subject_rules", "subject_rules.txt"),
    ("predicate_rules", "predicate_rules.txt"),
    ("object_rules", "object_rules.txt"),
    ("output_format_instructions", "output_format.txt"),
)

_LABELED_RE = re.compile(
    r"^\s*(subject|predicate|object)\s*:\s*(.*)\s*$", re.IGNORECASE
)
_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```\s*$", re.DOTALL)


@dataclass(frozen=True)
class ExtractionPromptBundle:
    """The six prompt parts, concatenated in a fixed order at render time."""

    claim_definition: str
    core_rules: str
    subject_rules: str
    predicate_rules: str
    object_rules: str
    output_format_instructions: str

    def __post_init__(self) -> None:
        for name, _ in _BUNDLE_FILES:
            if not getattr(self, name).strip():
                raise StructuralError(f"prompt bundle part {name!r} is empty")

    def parts(self) -> tuple[str, ...]:
        return (
            self.claim_definition,
            self.core_rules,
            self.subject_rules,
            self.predicate_rules,
            self.object_rules,
            self.output_format_instructions,
        )

    def render(self, source_text: str) -> str:
        body = "\n\n".join(part.strip() for part in self.parts())
        return f"{body}\n\n{SOURCE_TEXT_MARKER}\n{source_text}\n"

    def content_hash(self) -> str:
        payload = "\x1f".join(self.parts())
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def load_prompt_bundle(directory: Path | str | None = None) -> ExtractionPromptBundle:
    return ExtractionPromptBundle(
        **{field: prompt_text(filename, directory) for field, filename in _BUNDLE_FILES}
    )


@dataclass(frozen=True)
class RawTripleLine:
    """One record as parsed from the extractor completion, pre-validation."""

    subject: str
    predicate: str
    object: str
    line_no: int


@dataclass(frozen=True)
class ValidationOutcome:
    """Either normalized (subject, predicate, object) fields or a reason."""

    fields: tuple[str, str, str] | None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.fields is not None


# ------------------------------------------------------------------ parsing


def _strip_fence(raw: str) -> str:
    match = _FENCE_RE.match(raw.strip())
    return match.group(1) if match else raw


def _records_from_json(payload: object) -> list | None:
    if isinstance(payload, list):
        return payload
    # a single-key wrapper object ({"claims": [...]}) is a common slip
    if isinstance(payload, dict) and len(payload) == 1:
        (value,) = payload.values()
        if isinstance(value, list):
            return value
    return None


def _parse_structured(raw: str) -> tuple[list[RawTripleLine], int] | None:
    try:
        payload = json.loads(_strip_fence(raw))
    except json.JSONDecodeError:
        return None
    entries = _records_from_json(payload)
    if entries is None:
        return None
    records: list[RawTripleLine] = []
    garbage = 0
    for position, entry in enumerate(entries, start=1):
        if not isinstance(entry, dict):
            garbage += 1
            continue
        lowered = {str(k).lower(): v for k, v in entry.items()}
        values = [lowered.get(key) for key in ("subject", "predicate", "object")]
        if any(not isinstance(v, str) for v in values):
            garbage += 1
            continue
        records.append(RawTripleLine(values[0], values[1], values[2], line_no=position))
    return records, garbage


def _parse_labeled(raw: str) -> tuple[list[RawTripleLine], int]:
    records: list[RawTripleLine] = []
    garbage = 0
    pending: dict[str, str] = {}
    pending_line = 0
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        match = _LABELED_RE.match(line)
        if match is None:
            garbage += 1
            continue
        label = match.group(1).lower()
        if label == "subject":
            if pending:  # unfinished previous group
                garbage += 1
            pending = {"subject": match.group(2)}
            pending_line = line_no
        elif label in pending or not pending:
            # predicate/object before any subject, or a repeated label
            garbage += 1
            pending = {}
        else:
            pending[label] = match.group(2)
            if len(pending) == 3:
                records.append(
                    RawTripleLine(
                        pending["subject"], pending["predicate"], pending["object"],
                        line_no=pending_line,
                    )
                )
                pending = {}
    if pending:
        garbage += 1
    return records, garbage


def parse_extraction_output(raw: str) -> tuple[list[RawTripleLine], int]:
    """Parse a completion into records plus a garbage tally.

    Accepts a structured array (optionally fenced or wrapped in a single-key
    object) or labeled Subject/Predicate/Object line groups. Zero parseable
    records is a parse failure; the caller decides whether to repair.
    """
    structured = _parse_structured(raw)
    if structured is not None:
        records, garbage = structured
        if records or garbage == 0:
            # an explicit empty array is an intentional empty answer
            return records, garbage
        raise ExtractionError("structured output held no usable records", raw_output=raw)
    records, garbage = _parse_labeled(raw)
    if not records:
        raise ExtractionError("no parseable triple records in output", raw_output=raw)
    return records, garbage


# ------------------------------------------------------------ normalization


def _collapse(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def _lowercase_outside_parens(text: str) -> str:
    out = []
    depth = 0
    for char in text:
        if char == "(":
            depth += 1
        elif char == ")":
            depth = max(0, depth - 1)
        out.append(char if depth > 0 else char.lower())
    return "".join(out)


def _strip_leading_article(text: str) -> str:
    return re.sub(r"^(?:the|a|an)(?:\s+|$)", "", text)


def _singular(word: str) -> str:
    if len(word) > 4 and word.endswith("ies"):
        return word[:-3] + "y"
    if word.endswith(("ss", "us", "is")):
        return word
    if len(word) > 3 and word.endswith("s"):
        return word[:-1]
    return word


def _singularize_head(text: str) -> str:
    """Singularize the last word that sits outside any parenthetical."""
    depth = 0
    last_span = None
    for match in re.finditer(r"[a-z]+", text):
        start = match.start()
        depth = text.count("(", 0, start) - text.count(")", 0, start)
        if depth == 0:
            last_span = match.span()
    if last_span is None:
        return text
    start, end = last_span
    return text[:start] + _singular(text[start:end]) + text[end:]


def _split_leading_comparator(text: str) -> tuple[str | None, str]:
    for token in COMPARATORS:
        if text.startswith(token):
            return token, text[len(token):].strip()
    return None, text


def _map_leading_verb(predicate: str) -> str:
    first, _, rest = predicate.partition(" ")
    mapped = _VERB_MAP.get(first)
    if mapped is None:
        return predicate
    return f"{mapped} {rest}".strip() if rest else mapped


def validate_normal_form(line: RawTripleLine) -> ValidationOutcome:
    """Normalize one parsed record or explain why it is unusable.

    Subjects: lowercase outside parentheticals, one leading article stripped,
    head noun conservatively singularized. Predicates: lowercase, leading
    verb mapped onto the canonical modality set. Objects: kept verbatim
    (case included) apart from whitespace. A comparator leading the object
    migrates to the end of the predicate.
    """
    subject = _collapse(line.subject)
    predicate = _collapse(line.predicate)
    obj = _collapse(line.object)

    if not subject:
        return ValidationOutcome(None, "empty subject")
    if not predicate:
        return ValidationOutcome(None, "empty predicate")
    if not obj:
        return ValidationOutcome(None, "empty object")

    subject = _singularize_head(
        _strip_leading_article(_lowercase_outside_parens(subject))
    )
    if not subject:
        return ValidationOutcome(None, "subject is only an article")

    predicate = _map_leading_verb(predicate.lower())

    comparator, remainder = _split_leading_comparator(obj)
    if comparator is not None:
        if not remainder:
            return ValidationOutcome(None, "object is only a comparator")
        if not predicate.endswith(comparator):
            predicate = f"{predicate} {comparator}"
        obj = remainder

    return ValidationOutcome((subject, predicate, obj))


# ------------------------------------------------------------- extraction


@dataclass(frozen=True)
class ExtractionResult:
    """Validated triples plus the tallies run stats report."""

    triples: tuple[Triple, ...]
    rejects: tuple[tuple[str, int], ...]  # (reason, line_no)
    garbage_records: int
    repaired: bool
    schema_used: bool

    @property
    def empty(self) -> bool:
        return not self.triples


def _repair_prompt(original_prompt: str, raw: str, error: str) -> str:
    return (
        f"{original_prompt}\n\n"
        "Your previous output could not be parsed.\n"
        f"Parser error: {error}\n"
        f"Previous output:\n{raw}\n\n"
        "Re-emit the claims as a valid JSON array of "
        '{"subject": ..., "predicate": ..., "object": ...} objects only.\n'
    )


def _complete(client: LLMClient, prompt: str, schema_allowed: bool) -> tuple[str, bool]:
    if schema_allowed:
        try:
            request = ChatRequest(
                messages=(("user", prompt),), response_schema=EXTRACTION_SCHEMA
            )
            return client.chat_complete(request).text, True
        except CapabilityError:
            pass
    return client.chat_complete(ChatRequest(messages=(("user", prompt),))).text, False


def extract_triples(
    client: LLMClient,
    text: str,
    source: SourceKind,
    instance_id: str,
    bundle: ExtractionPromptBundle,
    schema_allowed: bool = True,
) -> ExtractionResult:
    """Extract, normalize, and dedup the triples of one source text.

    On a parse failure the extractor re-prompts once with the parse error and
    the offending output attached; a second failure raises ExtractionError.
    An empty triple list is a valid outcome.
    """
    if not text.strip():
        raise StructuralError(f"{instance_id}/{source.value}: empty source text")

    prompt = bundle.render(text)
    raw, schema_used = _complete(client, prompt, schema_allowed)
    repaired = False
    try:
        records, garbage = parse_extraction_output(raw)
    except ExtractionError as first_failure:
        repaired = True
        raw, schema_used = _complete(
            client, _repair_prompt(prompt, raw, str(first_failure)), schema_allowed
        )
        try:
            records, garbage = parse_extraction_output(raw)
        except ExtractionError:
            raise ExtractionError(
                f"{instance_id}/{source.value}: unparseable extractor output "
                "after one repair attempt",
                raw_output=raw,
            )

    triples: list[Triple] = []
    rejects: list[tuple[str, int]] = []
    for record in records:
        outcome = validate_normal_form(record)
        if not outcome.ok:
            rejects.append((outcome.reason, record.line_no))
            continue
        subject, predicate, obj = outcome.fields
        triples.append(Triple.make(subject, predicate, obj, source, instance_id))

    return ExtractionResult(
        triples=tuple(dedup_triples(triples)),
        rejects=tuple(rejects),
        garbage_records=garbage,
        repaired=repaired,
        schema_used=schema_used,
    )
