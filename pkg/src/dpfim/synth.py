"""Synthetic Kotlin-flavored corpus generator.

Stands in for a private code repository at desk scale. Every file mixes
two kinds of content: shared template structure (keywords, common
function shapes) that a model can learn from any slice of the corpus,
and document-unique random identifiers and literals that can only be
reproduced by memorizing that particular file. The unique content is
what gives a membership-inference attack something to find.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import Document
from .seeding import rng_for

_LETTERS = "abcdefghijklmnopqrstuvwxyz"
_SHARED_NAMES = ("value", "count", "result", "index", "total", "item", "data", "size")


def _ident(rng: np.random.Generator, lo: int = 5, hi: int = 9) -> str:
    n = int(rng.integers(lo, hi))
    return "".join(_LETTERS[int(k)] for k in rng.integers(0, 26, size=n))


def _name(rng: np.random.Generator) -> str:
    # shared vocabulary keeps the corpus learnable; unique identifiers
    # give each file something only memorization can reproduce
    if rng.random() < 0.4:
        return _SHARED_NAMES[int(rng.integers(0, len(_SHARED_NAMES)))]
    return _ident(rng)


def _num(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 10000))


def _function(rng) -> str:
    f, a, v = _ident(rng), _name(rng), _name(rng)
    return (
        f"fun {f}({a}: Int): Int {{\n"
        f"    val {v} = {a} * {_num(rng)} + {_num(rng)}\n"
        f"    return {v} % {_num(rng)}\n"
        f"}}\n"
    )


def _klass(rng) -> str:
    c = _ident(rng).capitalize()
    tag, m, p = _ident(rng), _name(rng), _name(rng)
    return (
        f"class {c} {{\n"
        f'    val tag = "{tag}"\n'
        f"    fun {m}({p}: Int): Int = {p} + {_num(rng)}\n"
        f"}}\n"
    )


def _val_block(rng) -> str:
    a, b = _name(rng), _name(rng)
    return (
        f"val {a} = listOf({_num(rng)}, {_num(rng)}, {_num(rng)})\n"
        f"val {b} = {a}.sum() / {int(rng.integers(1, 9))}\n"
    )


def _when_fn(rng) -> str:
    f, x = _ident(rng), _name(rng)
    return (
        f"fun {f}({x}: Int): String = when {{\n"
        f'    {x} < {_num(rng)} -> "{_ident(rng)}"\n'
        f'    else -> "{_ident(rng)}"\n'
        f"}}\n"
    )


_BLOCKS = (_function, _klass, _val_block, _when_fn)


def synth_document(doc_id: str, rng: np.random.Generator, target_bytes: int = 200) -> Document:
    """One synthetic source file of roughly ``target_bytes`` bytes."""
    pkg = f"package com.lab.{_ident(rng, 4, 7)}\n\n"
    parts = [pkg]
    size = len(pkg)
    while size < target_bytes:
        block = _BLOCKS[int(rng.integers(0, len(_BLOCKS)))](rng)
        parts.append(block)
        size += len(block)
    return Document(id=doc_id, text="".join(parts), origin=f"synth://{doc_id}")


def synth_documents(n_docs: int, seed: int, target_bytes: int = 200) -> list[Document]:
    rng = rng_for(seed, "synth-corpus")
    return [synth_document(f"doc_{k:05d}.kt", rng, target_bytes) for k in range(n_docs)]


def write_corpus(out_dir: str | Path, n_docs: int, seed: int, target_bytes: int = 200) -> int:
    """Write ``n_docs`` synthetic .kt files under ``out_dir``; returns total bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    for doc in synth_documents(n_docs, seed, target_bytes):
        path = out / doc.id
        path.write_text(doc.text, encoding="utf-8")
        total += len(doc.text)
    return total
