"""Embedding tensor I/O: NPY v1.0 files, temporal pooling, corpus manifests.

Every matrix entering the metrics passes through here. Data is held as
64-bit floats regardless of on-disk precision; 32-bit files are widened
exactly on load.
"""

from __future__ import annotations

import ast
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AudiodivError, DataError, DomainError, FormatError, IoError

NPY_MAGIC = b"\x93NUMPY"
POOLING_METHODS = ("max", "mean", "last", "first")

REFERENCE = "reference"
CANDIDATE = "candidate"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FrameSequence:
    """Framewise activations for one clip: a T x d matrix plus its clip id."""

    data: np.ndarray
    clip_id: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DomainError(f"frame sequence must be T x d with T,d >= 1, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise DataError(f"clip {self.clip_id!r}: non-finite activation values")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EmbeddingSet:
    """N x d matrix of pooled clip embeddings with a role and a free-form label."""

    data: np.ndarray
    role: str = CANDIDATE
    label: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] < 1:
            raise DomainError(f"embedding set must be 2-D N x d, got shape {data.shape}")
        if data.shape[0] < 2:
            raise DomainError(f"embedding set needs N >= 2 rows, got {data.shape[0]}")
        if not np.isfinite(data).all():
            raise DataError(f"embedding set {self.label!r}: non-finite entries")
        if self.role not in (REFERENCE, CANDIDATE):
            raise DomainError(f"role must be 'reference' or 'candidate', got {self.role!r}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


# ---------------------------------------------------------------------------
# NPY v1.0 container

def _parse_npy_header(blob: bytes, path) -> tuple[np.dtype, tuple[int, ...], int]:
    """Validate an NPY v1.0 preamble and return (dtype, shape, data offset)."""
    if len(blob) < 10 or blob[:6] != NPY_MAGIC:
        raise FormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = blob[6], blob[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"{path}: NPY version {major}.{minor} unsupported (v1.0 only)")
    (header_len,) = struct.unpack("<H", blob[8:10])
    header_end = 10 + header_len
    if len(blob) < header_end:
        raise FormatError(f"{path}: truncated NPY header")
    try:
        header = ast.literal_eval(blob[10:header_end].decode("ascii"))
    except (ValueError, SyntaxError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: unparseable NPY header") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"{path}: NPY header must have exactly descr/fortran_order/shape")
    descr, fortran, shape = header["descr"], header["fortran_order"], header["shape"]
    if descr not in ("<f4", "<f8"):
        raise FormatError(f"{path}: unsupported dtype {descr!r} (need <f4 or <f8)")
    if fortran is not False:
        raise FormatError(f"{path}: Fortran-ordered NPY files are rejected, re-save in C order")
    if (
        not isinstance(shape, tuple)
        or len(shape) not in (1, 2)
        or not all(isinstance(s, int) and s >= 1 for s in shape)
    ):
        raise FormatError(f"{path}: unsupported array rank/shape {shape!r} (need 1-D or 2-D)")
    return np.dtype(descr), shape, header_end


def load_tensor(path, clip_id: str | None = None) -> FrameSequence:
    """Load one NPY v1.0 file as a FrameSequence (1-D arrays become T=1)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    dtype, shape, offset = _parse_npy_header(blob, path)
    count = int(np.prod(shape))
    if len(blob) - offset != count * dtype.itemsize:
        raise FormatError(f"{path}: payload size does not match header shape {shape}")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
    return FrameSequence(data=data, clip_id=clip_id if clip_id is not None else path.stem)


def save_tensor(seq: FrameSequence, path) -> None:
    """Write a FrameSequence as NPY v1.0, little-endian float64, C order."""
    path = Path(path)
    header = "{'descr': '<f8', 'fortran_order': False, 'shape': %s, }" % (
        repr(tuple(int(s) for s in seq.data.shape)),
    )
    # Pad so magic+version+length+header is a multiple of 64, newline-terminated.
    unpadded = len(NPY_MAGIC) + 2 + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    try:
        with open(path, "wb") as fh:
            fh.write(NPY_MAGIC)
            fh.write(bytes([1, 0]))
            fh.write(struct.pack("<H", len(header)))
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(seq.data, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_matrix(path, role: str = CANDIDATE, label: str = "") -> EmbeddingSet:
    """Load a 2-D NPY file of already-pooled embeddings as an EmbeddingSet."""
    seq = load_tensor(path)
    return EmbeddingSet(data=seq.data, role=role, label=label or Path(path).stem)


# ---------------------------------------------------------------------------
# Pooling

def pool(seq: FrameSequence, method: str) -> np.ndarray:
    """Reduce a T x d sequence to one d-vector: max/mean over time, or last/first row."""
    if method not in POOLING_METHODS:
        raise DomainError(f"unknown pooling method {method!r}, expected one of {POOLING_METHODS}")
    if method == "max":
        return seq.data.max(axis=0)
    if method == "mean":
        return seq.data.mean(axis=0)
    if method == "last":
        return seq.data[-1].copy()
    return seq.data[0].copy()


# ---------------------------------------------------------------------------
# Manifests

@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    path: Path
    level: int | None = None
    system: str | None = None


@dataclass(frozen=True)
class Manifest:
    """Ordered list of clip tensor files sharing one embedding dimension."""

    entries: tuple[ManifestEntry, ...]
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [e.clip_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"manifest has duplicate clip_ids: {dupes}")
        if self.dimension < 1:
            raise DomainError(f"manifest dimension must be >= 1, got {self.dimension}")

    @classmethod
    def load(cls, path) -> "Manifest":
        """Read a manifest JSON file; relative entry paths resolve against its directory."""
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
        try:
            entries = tuple(
                ManifestEntry(
                    clip_id=str(e["clip_id"]),
                    path=(path.parent / e["path"]).resolve(),
                    level=e.get("level"),
                    system=e.get("system"),
                )
                for e in raw["entries"]
            )
            dimension = int(raw["dimension"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: manifest missing required field: {exc}") from exc
        manifest = cls(entries=entries, dimension=dimension)
        missing = [e.clip_id for e in manifest.entries if not e.path.is_file()]
        if missing:
            raise IoError(f"{path}: missing tensor files for clips {missing}")
        return manifest

    def save(self, path) -> None:
        doc = {
            "dimension": self.dimension,
            "entries": [
                {"clip_id": e.clip_id, "path": str(e.path), "level": e.level, "system": e.system}
                for e in self.entries
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def assemble_set(
    manifest: Manifest,
    method: str,
    role: str = CANDIDATE,
    label: str = "",
    threads: int = 1,
) -> EmbeddingSet:
    """Load, pool, and stack every manifest entry, preserving manifest order.

    Entries may be loaded in parallel; output row i always corresponds to
    entry i. Any per-entry failure is re-raised with the clip_id attached.
    """

    def one(entry: ManifestEntry) -> np.ndarray:
        try:
            seq = load_tensor(entry.path, clip_id=entry.clip_id)
        except AudiodivError as exc:
            raise type(exc)(f"clip {entry.clip_id!r}: {exc}") from exc
        if seq.dim != manifest.dimension:
            raise DataError(
                f"clip {entry.clip_id!r}: dimension {seq.dim} != manifest dimension {manifest.dimension}"
            )
        return pool(seq, method)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_:
            rows = list(pool_.map(one, manifest.entries))
    else:
        rows = [one(e) for e in manifest.entries]
    return EmbeddingSet(data=np.stack(rows), role=role, label=label)
