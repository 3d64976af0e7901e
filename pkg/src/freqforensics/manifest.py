"""Dataset bookkeeping: manifests, deterministic splits, spectrum caching.

A manifest is a JSON file:

    {
      "name": "lsun-desk",
      "seed": 7,
      "classes": [{"label": "real", "root": "real/", "glob": "*.png"}, ...],
      "split": {"train": 0.78, "val": 0.02, "test": 0.20}
    }

Split values are either per-class file counts (integers) or ratios (floats);
relative roots resolve against the manifest's directory. File lists are
sorted lexicographically before the seeded shuffle, so splits reproduce
across platforms and filesystem enumeration orders.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .seeding import substream
from .serialize import atomic_write_bytes, matrix_from_bytes, matrix_to_bytes

logger = logging.getLogger(__name__)

DEFAULT_SPLIT = {"train": 0.78, "val": 0.02, "test": 0.20}
_PARTS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestClass:
    label: str
    root: Path
    glob: str

    def files(self) -> list[Path]:
        return sorted(self.root.glob(self.glob), key=lambda p: str(p))


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    seed: int
    classes: tuple[ManifestClass, ...]
    split: dict


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    return parse_manifest(data, base_dir=path.parent, source=str(path))


def parse_manifest(data: dict, base_dir=".", source: str = "<dict>") -> DatasetManifest:
    if not isinstance(data, dict):
        raise FormatError(f"{source}: manifest must be a JSON object")
    for key in ("name", "classes"):
        if key not in data:
            raise FormatError(f"{source}: missing required key {key!r}")
    classes_raw = data["classes"]
    if not isinstance(classes_raw, list) or not classes_raw:
        raise FormatError(f"{source}: 'classes' must be a nonempty list")

    base_dir = Path(base_dir)
    classes = []
    labels_seen = set()
    for i, entry in enumerate(classes_raw):
        if not isinstance(entry, dict) or not {"label", "root"} <= set(entry):
            raise FormatError(f"{source}: class #{i} needs 'label' and 'root'")
        label = str(entry["label"])
        if label in labels_seen:
            raise FormatError(f"{source}: duplicate class label {label!r}")
        labels_seen.add(label)
        root = Path(entry["root"])
        if not root.is_absolute():
            root = base_dir / root
        if not root.is_dir():
            raise DataError(f"{source}: class {label!r} root {root} is not a directory")
        classes.append(ManifestClass(label=label, root=root, glob=str(entry.get("glob", "*"))))

    split = dict(data.get("split") or DEFAULT_SPLIT)
    if set(split) != set(_PARTS):
        raise FormatError(f"{source}: split must have exactly the keys {_PARTS}")
    values = [split[p] for p in _PARTS]
    if all(isinstance(v, int) and not isinstance(v, bool) for v in values):
        if any(v < 0 for v in values):
            raise FormatError(f"{source}: split counts must be >= 0")
    elif all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        if any(v < 0 for v in values) or sum(values) > 1.0 + 1e-9:
            raise FormatError(f"{source}: split ratios must be >= 0 and sum to <= 1")
        split = {p: float(split[p]) for p in _PARTS}
    else:
        raise FormatError(f"{source}: split values must be all counts or all ratios")

    manifest = DatasetManifest(
        name=str(data["name"]),
        seed=int(data.get("seed", 0)),
        classes=tuple(classes),
        split=split,
    )
    # counts must fit the smallest class they apply to
    if _is_count_split(split):
        needed = sum(split[p] for p in _PARTS)
        for cls in manifest.classes:
            available = len(cls.files())
            if needed > available:
                raise DataError(
                    f"{source}: split needs {needed} files but class {cls.label!r} has {available}"
                )
    return manifest


def _is_count_split(split: dict) -> bool:
    return all(isinstance(split[p], int) for p in _PARTS)


def split(manifest: DatasetManifest) -> dict[str, dict[str, list[Path]]]:
    """Deterministic per-class (train, val, test) partition.

    Files are sorted, shuffled on the stream keyed by (seed, label), then cut
    contiguously. Ratio splits assign floor(ratio * n) to train and val and
    the remainder to test.
    """
    out: dict[str, dict[str, list[Path]]] = {}
    for cls in manifest.classes:
        files = cls.files()
        n = len(files)
        rng = substream(manifest.seed, "split", cls.label)
        order = rng.permutation(n)
        shuffled = [files[i] for i in order]
        if _is_count_split(manifest.split):
            n_train, n_val = manifest.split["train"], manifest.split["val"]
            n_test = manifest.split["test"]
        else:
            n_train = int(np.floor(manifest.split["train"] * n))
            n_val = int(np.floor(manifest.split["val"] * n))
            n_test = n - n_train - n_val
        if n_train + n_val + n_test > n:
            raise DataError(f"class {cls.label!r}: split exceeds {n} available files")
        out[cls.label] = {
            "train": shuffled[:n_train],
            "val": shuffled[n_train : n_train + n_val],
            "test": shuffled[n_train + n_val : n_train + n_val + n_test],
        }
    return out


def canonical_descriptor(descriptor: dict) -> str:
    """Stable JSON encoding of a pipeline descriptor (sorted keys)."""
    return json.dumps(descriptor, sort_keys=True, separators=(",", ":"))


def file_digest(path) -> bytes:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.digest()


def cache_key(image_path, descriptor: dict) -> str:
    """Content-addressed key: hash of (file content hash, canonical descriptor)."""
    h = hashlib.sha256()
    h.update(file_digest(image_path))
    h.update(canonical_descriptor(descriptor).encode("utf-8"))
    return h.hexdigest()


class SpectrumCache:
    """Directory of binary-format matrices named by hex key.

    Writes are atomic (write-then-rename), so concurrent readers and writers
    are safe; corrupt entries are evicted and recomputed by the caller.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.bin"

    def get(self, key: str) -> np.ndarray | None:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            return matrix_from_bytes(path.read_bytes())
        except FormatError as exc:
            logger.warning("evicting corrupt cache entry %s: %s", path.name, exc)
            path.unlink(missing_ok=True)
            return None

    def put(self, key: str, matrix: np.ndarray) -> None:
        atomic_write_bytes(self._path(key), matrix_to_bytes(matrix))

    def stats(self) -> dict:
        files = list(self.directory.glob("*.bin"))
        return {"entries": len(files), "bytes": sum(f.stat().st_size for f in files)}

    def clear(self) -> int:
        files = list(self.directory.glob("*.bin"))
        for f in files:
            f.unlink(missing_ok=True)
        return len(files)
