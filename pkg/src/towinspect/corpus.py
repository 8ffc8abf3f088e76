"""Corpus generation and the manifest that ties scans to their artifacts.

A corpus directory holds one PGM depth map per scan plus JSON sidecars for
the ground-truth layout and defect boxes, listed in manifest.json. Train
scans are defect-free; test scans may carry defects (role and defectiveness
are recorded per entry).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .depthmap import save_pgm
from .errors import InspectError
from .localize import boxes_from_json, boxes_to_json
from .synth import SynthSpec, generate, random_defect_specs
from .towgeom import TowLayout


class ManifestError(InspectError):
    """Manifest file missing entries or pointing at missing artifacts."""


@dataclass(frozen=True)
class ScanEntry:
    scan_id: str
    role: str          # "train" | "test"
    defective: bool
    pgm: str
    layout: str
    boxes: str

    def as_dict(self) -> dict:
        return {"id": self.scan_id, "role": self.role, "defective": self.defective,
                "pgm": self.pgm, "layout": self.layout, "boxes": self.boxes}


def generate_corpus(out_dir, base_spec: SynthSpec, train_scans: int,
                    test_defect_scans: int, test_normal_scans: int,
                    defects_per_scan: int = 3,
                    defect_extent: tuple[int, int] = (48, 72)) -> list[ScanEntry]:
    """Write a seeded corpus and its manifest; returns the entries.

    Scan k uses generator streams derived from (base seed, k), so the corpus
    is reproducible bitwise and adding scans never disturbs earlier ones.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[ScanEntry] = []
    total = train_scans + test_defect_scans + test_normal_scans
    for k in range(total):
        if k < train_scans:
            role, defective = "train", False
        elif k < train_scans + test_defect_scans:
            role, defective = "test", True
        else:
            role, defective = "test", False
        scan_seed = base_spec.seed * 100003 + k
        spec = replace(base_spec, seed=scan_seed, defects=())
        if defective:
            rng = np.random.default_rng([base_spec.seed, k, 2])
            spec = replace(spec, defects=tuple(
                random_defect_specs(rng, spec, defects_per_scan,
                                    extent_range=defect_extent)))
        dm, layout, boxes = generate(spec)
        scan_id = f"scan_{k:03d}"
        entry = ScanEntry(scan_id, role, defective, f"{scan_id}.pgm",
                          f"{scan_id}.layout.json", f"{scan_id}.boxes.json")
        save_pgm(dm, out_dir / entry.pgm)
        (out_dir / entry.layout).write_text(layout.to_json())
        (out_dir / entry.boxes).write_text(boxes_to_json(boxes))
        entries.append(entry)

    manifest = {
        "seed": base_spec.seed,
        "width": base_spec.width,
        "height": base_spec.height,
        "tow_count": base_spec.tow_count,
        "tow_width": base_spec.tow_width,
        "scans": [e.as_dict() for e in entries],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return entries


def load_manifest(path) -> tuple[dict, list[ScanEntry]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: not valid JSON ({e})") from None
    if "scans" not in doc:
        raise ManifestError(f"{path}: missing 'scans' list")
    entries = [
        ScanEntry(s["id"], s["role"], bool(s["defective"]),
                  s["pgm"], s["layout"], s["boxes"])
        for s in doc["scans"]
    ]
    return doc, entries


def scan_paths(manifest_path, entry: ScanEntry) -> tuple[Path, Path, Path]:
    base = Path(manifest_path).parent
    return base / entry.pgm, base / entry.layout, base / entry.boxes


def load_scan_boxes(manifest_path, entry: ScanEntry):
    _, _, boxes_path = scan_paths(manifest_path, entry)
    return boxes_from_json(boxes_path.read_text())
