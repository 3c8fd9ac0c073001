"""Export manifest: which images become pool entries, and with which model."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    descriptor: str
    image: str


@dataclass(frozen=True)
class ExportManifest:
    model: str
    output: str
    entries: tuple[ManifestEntry, ...]

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "ExportManifest":
        try:
            raw_entries = d["entries"]
        except KeyError as exc:
            raise ManifestError("manifest needs an 'entries' list") from exc
        if not raw_entries:
            raise ManifestError("manifest has no entries")
        entries = []
        seen: set[str] = set()
        for rec in raw_entries:
            try:
                entry = ManifestEntry(id=str(rec["id"]), descriptor=str(rec["descriptor"]),
                                      image=os.path.join(base_dir, rec["image"]))
            except KeyError as exc:
                raise ManifestError(f"entry missing field {exc}") from exc
            if entry.id in seen:
                raise ManifestError(f"duplicate entry id {entry.id!r}")
            seen.add(entry.id)
            if not os.path.isfile(entry.image):
                raise ManifestError(f"image not found: {entry.image}")
            entries.append(entry)
        output = d.get("output", "pool.vlfe")
        if not os.path.isabs(output):
            output = os.path.join(base_dir, output)
        return cls(model=d.get("model", "pixelstats"), output=output, entries=tuple(entries))

    @classmethod
    def load(cls, path: str) -> "ExportManifest":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))
