"""Corpus ingestion, byte-level tokenization, and FIM example construction.

Documents are tokenized one byte per token (ids 0..255) with five
reserved sentinel ids appended after the byte range, so detokenization
is lossless for any byte string. Each document becomes one
fill-in-the-middle example with fixed random cut points, laid out as

    [PRE] prefix [SUF] suffix [MID] middle [EOM]

and the corpus is partitioned into member / non-member / eval slices
(plus a leftover slice used to pre-train the base model).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, MissingInputError
from .seeding import rng_for

log = logging.getLogger(__name__)

# Byte vocabulary plus reserved sentinels. Sentinels live above the byte
# range so they can never collide with document content.
N_BYTES = 256
PRE = 256
SUF = 257
MID = 258
EOM = 259
PAD = 260
VOCAB_SIZE = 261

SENTINEL_NAMES = {PRE: "<PRE>", SUF: "<SUF>", MID: "<MID>", EOM: "<EOM>", PAD: "<PAD>"}


def tokenize(text: str | bytes) -> list[int]:
    """One token per UTF-8 byte; token id equals the byte value."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    return list(text)


def detokenize(tokens: Iterable[int]) -> str:
    """Inverse of :func:`tokenize` for token lists without sentinel ids."""
    data = bytes(tokens)
    return data.decode("utf-8")


@dataclass(frozen=True)
class Document:
    """One ingested source file."""

    id: str
    text: str
    origin: str

    def __post_init__(self):
        if not self.text:
            raise ConfigError(f"document {self.id!r} has empty text")


@dataclass
class FimExample:
    """One training/eval instance in PSM sentinel layout.

    ``sequence`` is [PRE] prefix [SUF] suffix [MID] middle [EOM] and
    ``loss_mask[t]`` is true exactly where the prediction target at
    position t+1 lies in middle + [EOM].
    """

    id: str
    prefix: list[int]
    middle: list[int]
    suffix: list[int]
    sequence: list[int] = field(repr=False)
    loss_mask: list[bool] = field(repr=False)
    is_duplicate: bool = False

    @property
    def prefix_text(self) -> str:
        return detokenize(self.prefix)

    @property
    def middle_text(self) -> str:
        return detokenize(self.middle)

    @property
    def suffix_text(self) -> str:
        return detokenize(self.suffix)


@dataclass
class CorpusSplit:
    """Disjoint example sets: training members, held-out non-members,
    a utility-eval slice, and the public slice used for pre-training."""

    members: list[FimExample]
    nonmembers: list[FimExample]
    eval: list[FimExample]
    pretrain: list[FimExample]

    def id_sets(self) -> tuple[set[str], set[str], set[str], set[str]]:
        return (
            {e.id for e in self.members},
            {e.id for e in self.nonmembers},
            {e.id for e in self.eval},
            {e.id for e in self.pretrain},
        )


def ingest_corpus(root_path: str | Path, extensions: set[str], max_bytes: int) -> list[Document]:
    """Read all matching files under ``root_path`` in sorted-path order.

    Files are truncated to ``max_bytes`` (never splitting a UTF-8
    character); files that are not valid UTF-8 are skipped with a
    warning.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise MissingInputError(f"corpus directory not found: {root}")
    paths = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix in extensions)
    docs = []
    for path in paths:
        data = path.read_bytes()
        try:
            data.decode("utf-8")
        except UnicodeDecodeError:
            log.warning("skipping non-UTF-8 file %s", path)
            continue
        text = _decode_truncated(data, max_bytes)
        if not text:
            log.warning("skipping empty file %s", path)
            continue
        docs.append(Document(id=str(path.relative_to(root)), text=text, origin=str(path)))
    ids = [d.id for d in docs]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate document ids after ingestion")
    return docs


def _decode_truncated(data: bytes, max_bytes: int) -> str:
    """Decode at most ``max_bytes`` bytes, dropping a trailing partial char."""
    chunk = data[:max_bytes]
    for trim in range(4):
        try:
            return chunk[: len(chunk) - trim if trim else None].decode("utf-8")
        except UnicodeDecodeError:
            continue
    return ""


_MAX_CUT_DRAWS = 64


def make_fim_example(
    doc: Document,
    rng: np.random.Generator,
    min_middle: int,
    max_len: int,
    is_duplicate: bool = False,
) -> FimExample | None:
    """Split ``doc`` at two random cut points and build the FIM layout.

    Cut points are drawn uniformly over character boundaries (so the
    three parts stay valid UTF-8) and redrawn until the middle holds at
    least ``min_middle`` bytes. Documents longer than the model context
    are first narrowed to a random window of at most ``max_len - 4``
    bytes. Returns None when the document is too short to satisfy the
    middle-size constraint, so the caller can skip it.
    """
    if min_middle < 0:
        raise ConfigError(f"min_middle must be >= 0, got {min_middle}")
    if max_len < min_middle + 6:
        raise ConfigError(f"max_len={max_len} leaves no room for sentinels and a middle")
    n_tokens = len(doc.text.encode("utf-8"))
    if n_tokens < min_middle + 2:
        return None

    text = _window(doc.text, max_len - 4, rng)
    n_chars = len(text)
    # Uniform over valid boundary pairs via rejection; the deterministic
    # fallback (whole window as middle) only triggers for degenerate
    # documents where almost no pair is valid.
    i, j = 0, n_chars
    for _ in range(_MAX_CUT_DRAWS):
        a = int(rng.integers(0, n_chars + 1))
        b = int(rng.integers(0, n_chars + 1))
        lo, hi = min(a, b), max(a, b)
        if len(text[lo:hi].encode("utf-8")) >= min_middle:
            i, j = lo, hi
            break

    prefix = text[:i]
    middle = text[i:j]
    suffix = text[j:]
    if len(middle.encode("utf-8")) < min_middle:
        return None
    return fim_example_from_parts(doc.id, prefix, middle, suffix, is_duplicate=is_duplicate)


def _window(text: str, max_bytes: int, rng: np.random.Generator) -> str:
    """Random contiguous slice of at most ``max_bytes`` bytes."""
    if len(text.encode("utf-8")) <= max_bytes:
        return text
    start = int(rng.integers(0, len(text)))
    # Shrink from the right until the byte budget is met.
    window = text[start : start + max_bytes]
    while len(window.encode("utf-8")) > max_bytes:
        window = window[:-1]
    if not window:
        window = text[:max_bytes]
    return window


def fim_example_from_parts(
    example_id: str, prefix: str, middle: str, suffix: str, is_duplicate: bool = False
) -> FimExample:
    p, m, s = tokenize(prefix), tokenize(middle), tokenize(suffix)
    sequence = [PRE] + p + [SUF] + s + [MID] + m + [EOM]
    # Position of the [MID] sentinel; predictions from there through the
    # second-to-last position target middle + [EOM].
    mid_pos = 2 + len(p) + len(s)
    mask = [False] * len(sequence)
    for t in range(mid_pos, len(sequence) - 1):
        mask[t] = True
    return FimExample(
        id=example_id,
        prefix=p,
        middle=m,
        suffix=s,
        sequence=sequence,
        loss_mask=mask,
        is_duplicate=is_duplicate,
    )


def build_splits(
    docs: Sequence[Document],
    seed: int,
    member_frac: float,
    nonmember_frac: float,
    eval_frac: float,
    min_middle: int,
    max_len: int,
) -> CorpusSplit:
    """Seeded shuffle then contiguous partition into the four slices.

    Members and non-members come from the same shuffled population, so
    the two sets are exchangeable. Documents too short for a valid
    middle are skipped after partitioning. Deterministic for a fixed
    seed: shuffling uses the "splits" substream and cut points the
    "fim-cuts" substream.
    """
    if not docs:
        raise ConfigError("cannot build splits from an empty corpus")
    fracs = (member_frac, nonmember_frac, eval_frac)
    if any(f < 0 for f in fracs):
        raise ConfigError(f"split fractions must be non-negative, got {fracs}")
    if sum(fracs) > 1.0 + 1e-9:
        raise ConfigError(f"split fractions sum to {sum(fracs):.3f} > 1")

    order = rng_for(seed, "splits").permutation(len(docs))
    shuffled = [docs[int(k)] for k in order]
    n = len(docs)
    n_mem = int(member_frac * n)
    n_non = int(nonmember_frac * n)
    n_eval = int(eval_frac * n)
    bounds = np.cumsum([0, n_mem, n_non, n_eval, n - n_mem - n_non - n_eval])
    slices = [shuffled[bounds[k] : bounds[k + 1]] for k in range(4)]

    cuts = rng_for(seed, "fim-cuts")
    parts = []
    for name, part_docs in zip(("members", "nonmembers", "eval"), slices[:3]):
        examples = _fimify(part_docs, cuts, min_middle, max_len)
        if not examples:
            raise ConfigError(
                f"split {name!r} is empty ({len(part_docs)} docs before length filtering); "
                "adjust fractions or corpus size"
            )
        parts.append(examples)
    parts.append(_fimify(slices[3], cuts, min_middle, max_len))
    return CorpusSplit(members=parts[0], nonmembers=parts[1], eval=parts[2], pretrain=parts[3])


def _fimify(docs, rng, min_middle, max_len):
    out = []
    skipped = 0
    for doc in docs:
        ex = make_fim_example(doc, rng, min_middle=min_middle, max_len=max_len)
        if ex is None:
            skipped += 1
        else:
            out.append(ex)
    if skipped:
        log.warning("skipped %d documents shorter than min_middle+2", skipped)
    return out


def inject_duplicates(
    members: Sequence[FimExample], k: int, fraction: float, rng: np.random.Generator
) -> tuple[list[FimExample], list[str]]:
    """Repeat a seeded random fraction of members k times (k total copies).

    Returns the expanded member list plus the duplicated ids so the run
    manifest can report canary AUC separately. All copies of a chosen
    example carry ``is_duplicate=True``.
    """
    if k < 1:
        raise ConfigError(f"duplicate copies must be >= 1, got {k}")
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"duplicate fraction must be in [0, 1], got {fraction}")
    n_canary = int(round(fraction * len(members)))
    if k == 1 or n_canary == 0:
        return list(members), []
    chosen = sorted(rng.choice(len(members), size=n_canary, replace=False).tolist())
    chosen_set = set(chosen)
    out = []
    canaries = []
    for idx, ex in enumerate(members):
        if idx in chosen_set:
            dup = FimExample(
                id=ex.id,
                prefix=ex.prefix,
                middle=ex.middle,
                suffix=ex.suffix,
                sequence=ex.sequence,
                loss_mask=ex.loss_mask,
                is_duplicate=True,
            )
            out.append(dup)
            canaries.append(dup)
        else:
            out.append(ex)
    for dup in canaries:
        out.extend([dup] * (k - 1))
    return out, [c.id for c in canaries]


def write_examples(path: str | Path, examples: Iterable[FimExample]) -> None:
    """Serialize examples as line-delimited JSON (one object per instance)."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = {
                "id": ex.id,
                "prefix": ex.prefix_text,
                "middle": ex.middle_text,
                "suffix": ex.suffix_text,
                "duplicate": ex.is_duplicate,
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_examples(path: str | Path) -> list[FimExample]:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"split file not found: {path}")
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out.append(
                fim_example_from_parts(
                    rec["id"], rec["prefix"], rec["middle"], rec["suffix"],
                    is_duplicate=rec.get("duplicate", False),
                )
            )
    return out


def corpus_fingerprint(docs: Sequence[Document]) -> str:
    """Content hash of the ingested corpus (order-sensitive by doc id)."""
    h = hashlib.sha256()
    for doc in docs:
        h.update(doc.id.encode("utf-8"))
        h.update(b"\x00")
        h.update(doc.text.encode("utf-8"))
        h.update(b"\x01")
    return h.hexdigest()
