"""Export encoded titles as a binary vector file.

The on-disk layout matches the recommendation engine's format exactly:
magic ``GRVEC``, little-endian uint32 header (version, dim, count),
length-prefixed UTF-8 ids, then contiguous little-endian float32 rows.
It is written here independently so the cross-package round-trip test
actually exercises two implementations of the format.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

VECTOR_FILE_MAGIC = b"GRVEC"
VECTOR_FILE_VERSION = 1


class ExportError(Exception):
    """Empty input, duplicate ids, or unwritable output."""


def write_vectors(ids: Sequence[str], vectors: np.ndarray, path: Path) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    if len(ids) != vectors.shape[0]:
        raise ExportError("ids and vectors disagree on count")
    if len(set(ids)) != len(ids):
        raise ExportError("ids must be unique")
    with Path(path).open("wb") as fh:
        fh.write(VECTOR_FILE_MAGIC)
        fh.write(struct.pack("<III", VECTOR_FILE_VERSION,
                             vectors.shape[1], vectors.shape[0]))
        for item_id in ids:
            raw = item_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(vectors).tobytes())


def export_vectors(title_file: Path, output_path: Path, encoder) -> int:
    """Encode one title per line of ``title_file``; returns the row count.

    Blank lines are skipped and duplicate titles keep their first
    occurrence, since titles double as ids. Nothing is written on error.
    """
    lines = Path(title_file).read_text(encoding="utf-8").splitlines()
    titles: list[str] = []
    seen = set()
    for line in lines:
        title = line.strip()
        if title and title not in seen:
            seen.add(title)
            titles.append(title)
    if not titles:
        raise ExportError(f"no titles found in {title_file}")
    vectors = encoder.encode(titles)
    write_vectors(titles, vectors, Path(output_path))
    return len(titles)
