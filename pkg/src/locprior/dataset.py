"""On-disk benchmark datasets: PPM images, JSON ground truth and a manifest.

Layout under the dataset root::

    manifest.json
    references/obj_000/references.json   views with rotation and box
    references/obj_000/ref_000.ppm ...
    queries/obj_000/q_0000.ppm           query image
    queries/obj_000/q_0000.json          {center, size, rotation_deg}

All paths stored in JSON are relative to the file that lists them.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .features import FeatureConfig, crop_reference_kernel, extract_features
from .geometry import SquareBox
from .imageio import read_ppm, write_ppm
from .synthetic import (BenchConfig, ReferenceSet, benchmark_specs, dumps, generate_reference_set,
                        generate_scene, reference_angles, truth_json)

MANIFEST = "manifest.json"
REFERENCES = "references.json"


def _box_json(b: SquareBox) -> dict:
    return {"center": [b.u, b.v], "size": b.size}


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_references(ref_dir, object_id: int, n_refs: int, s_r: float, fx: FeatureConfig = FeatureConfig()) -> list[str]:
    """Render one object's reference views into ``ref_dir``; returns the image names."""
    ref_dir = Path(ref_dir)
    ref_dir.mkdir(parents=True, exist_ok=True)
    refs, images, boxes = generate_reference_set(object_id, n_refs, s_r, fx)
    views = []
    for i, (img, box, ang) in enumerate(zip(images, boxes, reference_angles(n_refs))):
        name = f"ref_{i:03d}.ppm"
        write_ppm(ref_dir / name, img)
        views.append({"image": name, "angle_deg": ang, "rotation": refs.rotations[i].tolist(),
                      "box": _box_json(box)})
    _write(ref_dir / REFERENCES, dumps({"object_id": object_id, "s_r": s_r, "views": views}))
    return [v["image"] for v in views]


def write_dataset(root, bench: BenchConfig = BenchConfig(), fx: FeatureConfig = FeatureConfig()) -> dict:
    """Generate the benchmark described by ``bench`` under ``root`` and return the manifest."""
    root = Path(root)
    specs = benchmark_specs(bench)
    objects, images = [], []
    for o in range(bench.n_objects):
        ref_rel = f"references/obj_{o:03d}"
        names = write_references(root / ref_rel, o, bench.n_refs, bench.s_r, fx)
        images += [f"{ref_rel}/{n}" for n in names]
        queries = []
        for i, spec in enumerate(s for s in specs if s.object_id == o):
            stem = f"queries/obj_{o:03d}/q_{i:04d}"
            img, _ = generate_scene(spec)
            (root / stem).parent.mkdir(parents=True, exist_ok=True)
            write_ppm(root / f"{stem}.ppm", img)
            _write(root / f"{stem}.json", dumps(truth_json(spec)))
            queries.append({"image": f"{stem}.ppm", "truth": f"{stem}.json", "spec": spec.to_json()})
            images.append(f"{stem}.ppm")
        objects.append({"object_id": o, "references": ref_rel, "queries": queries})
    manifest = {"config": bench.to_json(), "feature_config_hash": fx.config_hash(),
                "images": images, "objects": objects}
    _write(root / MANIFEST, dumps(manifest))
    return manifest


def load_manifest(root) -> dict:
    path = Path(root) / MANIFEST
    try:
        m = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(m, dict) or "objects" not in m:
        raise ValidationError(f"{path}: missing 'objects'")
    return m


def manifest_files(manifest: dict) -> list[str]:
    """Every file a manifest depends on, relative to the dataset root."""
    out = []
    for obj in manifest["objects"]:
        out.append(f"{obj['references']}/{REFERENCES}")
        for q in obj["queries"]:
            out += [q["image"], q["truth"]]
    return out + list(manifest.get("images", []))


def missing_files(root, manifest: dict) -> list[str]:
    root = Path(root)
    return sorted({f for f in manifest_files(manifest) if not (root / f).is_file()})


def load_reference_set(ref_dir, fx: FeatureConfig = FeatureConfig()) -> ReferenceSet:
    """Read a reference directory and cut one kernel per view with the shared extractor."""
    ref_dir = Path(ref_dir)
    path = ref_dir / REFERENCES
    try:
        meta = json.loads(path.read_text())
        views = meta["views"]
        s_r = float(meta["s_r"])
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON ({e})") from None
    except (KeyError, TypeError) as e:
        raise ValidationError(f"{path}: missing field {e}") from None
    kernels, rotations = [], []
    for v in views:
        fm = extract_features(read_ppm(ref_dir / v["image"]), fx)
        box = SquareBox(float(v["box"]["center"][0]), float(v["box"]["center"][1]), float(v["box"]["size"]))
        kernels.append(crop_reference_kernel(fm, box, fx.kernel_size))
        rotations.append(np.asarray(v["rotation"], dtype=np.float64))
    return ReferenceSet(kernels, rotations, s_r, fx.config_hash())


def load_truth(path) -> SquareBox:
    d = json.loads(Path(path).read_text())
    return SquareBox(float(d["center"][0]), float(d["center"][1]), float(d["size"]))
