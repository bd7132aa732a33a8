"""On-disk corpus layout.

One directory per language holds one record per utterance::

    int32 T_raw | int32 d_raw | T_raw*d_raw float32 | "<tok> <tok> ...\\n"

(all little-endian; the token line is absent for unlabeled audio). A
``manifest.tsv`` at the corpus root lists ``path<TAB>language_id<TAB>supervised``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .synthetic import Utterance

MANIFEST = "manifest.tsv"
_HEADER = struct.Struct("<ii")


def encode_record(utt):
    T, d = utt.features.shape
    payload = _HEADER.pack(T, d) + utt.features.astype("<f4").tobytes()
    if utt.supervised:
        payload += (" ".join(str(t) for t in utt.transcript) + "\n").encode("utf-8")
    return payload


def decode_record(raw, language_id, supervised, utt_id=""):
    if len(raw) < _HEADER.size:
        raise DataError(f"record {utt_id!r} is shorter than its header")
    T, d = _HEADER.unpack_from(raw)
    if T < 1 or d < 1:
        raise DataError(f"record {utt_id!r} has invalid shape {T}x{d}")
    end = _HEADER.size + 4 * T * d
    if len(raw) < end:
        raise DataError(f"record {utt_id!r} truncated: need {end} bytes, have {len(raw)}")
    feats = np.frombuffer(raw, dtype="<f4", count=T * d, offset=_HEADER.size).reshape(T, d)
    tail = raw[end:].decode("utf-8").strip()
    tokens = tuple(int(t) for t in tail.split()) if tail else ()
    if bool(tokens) != supervised:
        raise DataError(f"record {utt_id!r}: manifest supervised flag disagrees with payload")
    return Utterance(feats.astype(np.float32), language_id, tokens, supervised, utt_id)


def write_corpus(root, utterances):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for utt in utterances:
        rel = Path(f"lang{utt.language_id}") / f"{utt.utt_id}.utt"
        (root / rel.parent).mkdir(parents=True, exist_ok=True)
        (root / rel).write_bytes(encode_record(utt))
        lines.append(f"{rel.as_posix()}\t{utt.language_id}\t{int(utt.supervised)}\n")
    (root / MANIFEST).write_text("".join(lines), encoding="utf-8")
    return root / MANIFEST


def read_corpus(root):
    root = Path(root)
    manifest = root / MANIFEST
    if not manifest.is_file():
        raise DataError(f"no manifest at {manifest}")
    utterances = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"{manifest}:{lineno}: expected 3 tab-separated fields")
        rel, lang, sup = fields
        try:
            language_id, supervised = int(lang), bool(int(sup))
        except ValueError as exc:
            raise DataError(f"{manifest}:{lineno}: {exc}") from None
        path = root / rel
        if not path.is_file():
            raise DataError(f"{manifest}:{lineno}: missing record {rel}")
        utterances.append(decode_record(path.read_bytes(), language_id, supervised, Path(rel).stem))
    return utterances
