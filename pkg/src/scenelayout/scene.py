"""Scene description files: camera, per-object observations, optional ground truth.

Scene JSON layout (all paths relative to the JSON file):
    {"camera": {"fx","fy","cx","cy","width","height"},
     "objects": [{"id", "label", "mesh", "bbox": [x_left, y_upper, x_right, y_lower],
                  "mask": "path.pgm", "mean_depth": real,
                  "gt": {"center", "translation", "scale", "rotation"}?}]}

A sibling renders/ directory holding depth.dpt1 and normals.nrm1 is the
conventional location for the scene's composite maps; the solver discovers it
automatically when present.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .geometry import AnchoredSimilarityTransform, BBox2D, PinholeCamera, TriangleMesh
from .objio import load_obj
from .solver import InstanceObservation

RENDERS_DIRNAME = "renders"
DEPTH_FILENAME = "depth.dpt1"
NORMALS_FILENAME = "normals.nrm1"


@dataclass(frozen=True)
class SceneObject:
    """One object: its mesh file, 2D evidence and optional ground-truth pose."""

    id: str
    label: str
    mesh_path: Path
    bbox: BBox2D
    mean_depth: float
    mask_path: Path | None = None
    gt_transform: AnchoredSimilarityTransform | None = None

    def observation(self, with_mask: bool = False) -> InstanceObservation:
        mask = self.load_mask() if with_mask else None
        return InstanceObservation(bbox=self.bbox, mean_depth=self.mean_depth, mask=mask)

    def load_mesh(self) -> TriangleMesh:
        return load_obj(self.mesh_path)

    def load_mask(self) -> np.ndarray | None:
        if self.mask_path is None:
            return None
        return formats.read_mask(self.mask_path)


@dataclass(frozen=True)
class SceneSpec:
    """A camera plus its objects; base_dir anchors relative paths."""

    camera: PinholeCamera
    objects: tuple
    base_dir: Path

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")

    @property
    def renders_dir(self) -> Path | None:
        d = self.base_dir / RENDERS_DIRNAME
        if (d / DEPTH_FILENAME).exists() and (d / NORMALS_FILENAME).exists():
            return d
        return None


def load_scene(path) -> SceneSpec:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    base = path.parent
    camera = PinholeCamera.from_dict(data["camera"])
    objects = []
    for entry in data["objects"]:
        xl, yu, xr, yl = entry["bbox"]
        mesh_path = base / entry["mesh"]
        if not mesh_path.exists():
            raise FileNotFoundError(f"mesh file not found: {mesh_path}")
        gt = None
        if entry.get("gt") is not None:
            gt = AnchoredSimilarityTransform.from_dict(entry["gt"])
        mask_path = base / entry["mask"] if entry.get("mask") else None
        objects.append(SceneObject(
            id=str(entry["id"]), label=str(entry.get("label", "")),
            mesh_path=mesh_path,
            bbox=BBox2D(x_left=float(xl), x_right=float(xr),
                        y_upper=float(yu), y_lower=float(yl)),
            mean_depth=float(entry["mean_depth"]),
            mask_path=mask_path, gt_transform=gt))
    return SceneSpec(camera=camera, objects=tuple(objects), base_dir=base)


def scene_to_dict(spec: SceneSpec) -> dict:
    objects = []
    for o in spec.objects:
        entry = {
            "id": o.id,
            "label": o.label,
            "mesh": str(o.mesh_path.relative_to(spec.base_dir)),
            "bbox": [float(o.bbox.x_left), float(o.bbox.y_upper),
                     float(o.bbox.x_right), float(o.bbox.y_lower)],
            "mask": str(o.mask_path.relative_to(spec.base_dir)) if o.mask_path else None,
            "mean_depth": float(o.mean_depth),
        }
        if o.gt_transform is not None:
            entry["gt"] = o.gt_transform.to_dict()
        objects.append(entry)
    return {"camera": spec.camera.to_dict(), "objects": objects}


def save_scene(spec: SceneSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_poses(path, results: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_poses(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
