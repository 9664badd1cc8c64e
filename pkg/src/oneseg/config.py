"""Flat key=value configuration files, dotted paths into nested dataclasses,
and the dataset manifest.

Config files are plain text: one ``key = value`` per line, ``#`` comments,
keys dotted for nesting (``reg.nlcc.window_n = 8``). Every command accepts
``--print-config`` to dump the effective configuration in the same format,
so experiment records diff cleanly.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .fields import LabelMap, ScalarField
from . import fvol


class ConfigError(ValueError):
    pass


def parse_kv_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _convert(raw: str, current):
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"expected boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, str):
        return raw
    if isinstance(current, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(type(current[0])(p) for p in parts)
    raise ConfigError(f"unsupported config field type {type(current).__name__}")


def apply_overrides(obj, items: dict[str, str]):
    """Set dotted keys on a (possibly nested) dataclass tree, with typing."""
    for key, raw in items.items():
        parts = key.split(".")
        target = obj
        for p in parts[:-1]:
            if not dataclasses.is_dataclass(target) or not hasattr(target, p):
                raise ConfigError(f"unknown config key {key!r}")
            target = getattr(target, p)
        leaf = parts[-1]
        if not dataclasses.is_dataclass(target) or not hasattr(target, leaf):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(target, leaf)
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"config key {key!r} names a group, not a value")
        try:
            setattr(target, leaf, _convert(raw, current))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"config key {key!r}: {e}") from None
    return obj


def load_config(obj, path=None, extra: dict[str, str] | None = None):
    if path is not None:
        apply_overrides(obj, parse_kv_text(Path(path).read_text()))
    if extra:
        apply_overrides(obj, extra)
    # re-run validation after overrides
    if hasattr(obj, "__post_init__"):
        obj.__post_init__()
    return obj


def dump_config(obj, prefix: str = "") -> str:
    """Serialize a dataclass tree back to flat key=value text."""
    lines: list[str] = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            lines.append(dump_config(value, prefix=f"{key}."))
        elif isinstance(value, tuple):
            lines.append(f"{key} = {' '.join(str(v) for v in value)}")
        elif isinstance(value, bool):
            lines.append(f"{key} = {'true' if value else 'false'}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Manifests.
# ---------------------------------------------------------------------------


class ManifestError(ValueError):
    pass


@dataclasses.dataclass
class Manifest:
    """Paths of one dataset; evaluation labels are kept in separate fields so
    no training stage can reach them by accident."""

    atlas_image: str
    atlas_labels: str
    unlabeled: list[str]
    test: list[tuple[str, str]]
    num_classes: int
    unlabeled_labels: list[str] | None = None
    base_dir: Path = Path(".")

    def resolve(self, p: str) -> Path:
        return (self.base_dir / p).expanduser()


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON: {e}") from None
    required = ("atlas_image", "atlas_labels", "unlabeled", "test", "num_classes")
    for key in required:
        if key not in doc:
            raise ManifestError(f"{path}: missing manifest key {key!r}")
    test_pairs = []
    for entry in doc["test"]:
        if not isinstance(entry, dict) or "image" not in entry or "labels" not in entry:
            raise ManifestError(f"{path}: test entries need image+labels, got {entry!r}")
        test_pairs.append((entry["image"], entry["labels"]))
    m = Manifest(
        atlas_image=doc["atlas_image"],
        atlas_labels=doc["atlas_labels"],
        unlabeled=list(doc["unlabeled"]),
        test=test_pairs,
        num_classes=int(doc["num_classes"]),
        unlabeled_labels=list(doc["unlabeled_labels"]) if doc.get("unlabeled_labels") else None,
        base_dir=path.parent,
    )
    if m.num_classes < 2:
        raise ManifestError(f"{path}: num_classes must be >= 2")
    if not m.unlabeled:
        raise ManifestError(f"{path}: no unlabeled images listed")
    if m.unlabeled_labels is not None and len(m.unlabeled_labels) != len(m.unlabeled):
        raise ManifestError(f"{path}: unlabeled_labels count mismatch")
    return m


@dataclasses.dataclass
class LoadedDataset:
    atlas: ScalarField
    atlas_labels: LabelMap
    unlabeled: list[ScalarField]
    test_images: list[ScalarField]
    test_labels: list[LabelMap]
    unlabeled_labels: list[LabelMap] | None
    num_classes: int


def load_dataset(m: Manifest) -> LoadedDataset:
    """Read and cross-validate every file the manifest references."""
    atlas = fvol.read_scalar(m.resolve(m.atlas_image))
    atlas_labels = fvol.read_labels(m.resolve(m.atlas_labels), m.num_classes)
    unlabeled = [fvol.read_scalar(m.resolve(p)) for p in m.unlabeled]
    test_images = [fvol.read_scalar(m.resolve(p)) for p in (t[0] for t in m.test)]
    test_labels = [fvol.read_labels(m.resolve(p), m.num_classes) for p in (t[1] for t in m.test)]
    unl_labels = None
    if m.unlabeled_labels is not None:
        unl_labels = [fvol.read_labels(m.resolve(p), m.num_classes) for p in m.unlabeled_labels]
    dims = atlas.dims
    everything = (
        [("atlas_labels", atlas_labels)]
        + [(p, u) for p, u in zip(m.unlabeled, unlabeled)]
        + [(t[0], i) for t, i in zip(m.test, test_images)]
        + [(t[1], l) for t, l in zip(m.test, test_labels)]
        + ([(p, l) for p, l in zip(m.unlabeled_labels or [], unl_labels or [])])
    )
    for name, item in everything:
        if item.dims != dims:
            raise ManifestError(
                f"manifest: {name} has dims {item.dims}, expected {dims}"
            )
    return LoadedDataset(
        atlas, atlas_labels, unlabeled, test_images, test_labels, unl_labels, m.num_classes
    )


@dataclasses.dataclass
class PairsManifest:
    pairs: list[tuple[str, str]]
    num_classes: int
    base_dir: Path = Path(".")


def load_pairs_manifest(path) -> PairsManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON: {e}") from None
    if "pairs" not in doc or "num_classes" not in doc:
        raise ManifestError(f"{path}: need keys 'pairs' and 'num_classes'")
    pairs = []
    for entry in doc["pairs"]:
        if not isinstance(entry, dict) or "image" not in entry or "labels" not in entry:
            raise ManifestError(f"{path}: pair entries need image+labels, got {entry!r}")
        pairs.append((entry["image"], entry["labels"]))
    if not pairs:
        raise ManifestError(f"{path}: empty pair list")
    return PairsManifest(pairs, int(doc["num_classes"]), path.parent)
