"""HTTP service backing the annotation tool.

Serves per-shape part clouds and their ICP distance matrix, previews symmetry
groups for a candidate threshold, and persists the chosen threshold to
annotation.json next to the matrix (last writer wins, version counter).
"""

import json
import os
import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import containers, meshio
from .bench import ground_truth_from_matrix
from .geometry import PointCloud, farthest_point_sampling
from .icp import DistanceMatrix

PREVIEW_POINT_CAP = 4096


class ThresholdBody(BaseModel):
    threshold: float


class _ShapeEntry:
    def __init__(self, shape_dir):
        self.dir = shape_dir
        self.id = os.path.basename(shape_dir)
        self.lock = threading.Lock()
        parts_dir = os.path.join(shape_dir, "parts")
        files = sorted(f for f in os.listdir(parts_dir) if f.endswith(".ply"))
        self.parts = [PointCloud(points=np.ascontiguousarray(
            meshio.load_ply(os.path.join(parts_dir, f))[0])) for f in files]
        symd = sorted(f for f in os.listdir(shape_dir) if f.endswith(".symd"))
        if not symd:
            raise FileNotFoundError(f"{shape_dir}: no .symd matrix")
        self.matrix_file = symd[0]
        values, kind, fp = containers.read_symd(os.path.join(shape_dir, symd[0]))
        self.matrix = DistanceMatrix(values=values, kind=kind, fingerprint=fp)
        self._preview = None

    @property
    def annotation_path(self):
        return os.path.join(self.dir, "annotation.json")

    def annotation(self):
        if not os.path.exists(self.annotation_path):
            return {"delta_sym": None, "version": 0, "matrix": self.matrix_file}
        with open(self.annotation_path) as fh:
            return json.load(fh)

    def save_annotation(self, threshold):
        with self.lock:
            ann = self.annotation()
            ann["delta_sym"] = threshold
            ann["version"] = ann.get("version", 0) + 1
            ann["matrix"] = self.matrix_file
            with open(self.annotation_path, "w") as fh:
                json.dump(ann, fh, sort_keys=True)
            return ann

    def preview_points(self):
        if self._preview is None:
            out = []
            for i, part in enumerate(self.parts):
                pts = part.points
                if len(pts) > PREVIEW_POINT_CAP:
                    pts = pts[farthest_point_sampling(pts, PREVIEW_POINT_CAP, seed=i)]
                out.append([[float(c) for c in p] for p in pts])
            self._preview = out
        return self._preview

    def groups(self, threshold):
        sset = ground_truth_from_matrix(self.parts, self.matrix, threshold)
        return [[int(r.patch_ids[0]) for r in h.regions] for h in sset.hypotheses]


def create_app(dataset_dir, static_dir=None) -> FastAPI:
    app = FastAPI(title="symscan annotation service")
    shapes = {}
    for d in sorted(os.listdir(dataset_dir)):
        full = os.path.join(dataset_dir, d)
        if os.path.isdir(full) and os.path.isdir(os.path.join(full, "parts")):
            try:
                shapes[d] = _ShapeEntry(full)
            except FileNotFoundError:
                continue

    def entry(shape_id) -> _ShapeEntry:
        if shape_id not in shapes:
            raise HTTPException(status_code=404, detail=f"unknown shape {shape_id}")
        return shapes[shape_id]

    def check_threshold(value):
        if not np.isfinite(value) and value != float("inf"):
            raise HTTPException(status_code=422, detail="threshold must be a number")
        if value < 0:
            raise HTTPException(status_code=422, detail="threshold must be >= 0")

    @app.get("/shapes")
    def list_shapes():
        out = []
        for sid in sorted(shapes):
            ann = shapes[sid].annotation()
            out.append({"id": sid, "n_parts": len(shapes[sid].parts),
                        "annotated": ann["delta_sym"] is not None,
                        "delta_sym": ann["delta_sym"], "version": ann["version"]})
        return out

    @app.get("/shapes/{shape_id}")
    def get_shape(shape_id: str):
        e = entry(shape_id)
        finite = e.matrix.values[np.isfinite(e.matrix.values)]
        return {"id": e.id, "parts": e.preview_points(),
                "matrix": [[float(v) for v in row] for row in e.matrix.values],
                "max_distance": float(finite.max()) if len(finite) else 0.0,
                "annotation": e.annotation()}

    @app.get("/shapes/{shape_id}/annotation")
    def get_annotation(shape_id: str):
        return entry(shape_id).annotation()

    @app.put("/shapes/{shape_id}/annotation")
    def put_annotation(shape_id: str, body: ThresholdBody):
        check_threshold(body.threshold)
        return entry(shape_id).save_annotation(body.threshold)

    @app.post("/shapes/{shape_id}/preview")
    def preview(shape_id: str, body: ThresholdBody):
        check_threshold(body.threshold)
        return {"threshold": body.threshold, "groups": entry(shape_id).groups(body.threshold)}

    @app.get("/shapes/{shape_id}/symmetries/{k}")
    def single_group(shape_id: str, k: int, threshold: float):
        check_threshold(threshold)
        groups = entry(shape_id).groups(threshold)
        if not 0 <= k < len(groups):
            raise HTTPException(status_code=404, detail=f"no symmetry group {k}")
        return {"group": k, "threshold": threshold, "parts": groups[k]}

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
