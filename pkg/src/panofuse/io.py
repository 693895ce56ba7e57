"""Readers and writers.

* Tensor container (``.pft``): ``b"PFT1"``, dtype code (u8, 1 = float32 LE),
  ndim (u8), ndim x u32 LE dims, then the row-major float32 payload.
* Detections: JSON array of ``{"category_id", "bbox": [x, y, w, h], "score"}``.
* Panoptic maps: COCO-panoptic RGB PNG (``id = R + 256 G + 65536 B``) and a
  JSON sidecar with ``segments_info``.
* Label space: ``{"classes": [{"id", "name", "kind"}]}`` or COCO
  ``categories`` (``isthing`` flag).

Readers are strict: they reject malformed input instead of repairing it.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from panofuse.errors import (
    AreaMismatch,
    BadMagic,
    DimOverflow,
    FormatError,
    IdMismatch,
    MalformedJson,
    NegativeBoxSize,
    ScoreOutOfRange,
    TruncatedPayload,
    UnsupportedDtype,
    ValidationError,
)
from panofuse.types import (
    BoundingBox,
    ClassInfo,
    ClassKind,
    Detection,
    LabelSpace,
    PanopticMap,
    SegmentInfo,
)

PathLike = Union[str, os.PathLike]

TENSOR_MAGIC = b"PFT1"
DTYPE_FLOAT32 = 1
_MAX_U32 = 2**32 - 1
MAX_SEGMENT_ID = 256**3 - 1


def write_tensor(t: np.ndarray, path: PathLike) -> None:
    t = np.asarray(t)
    if t.dtype != np.float32:
        if not np.issubdtype(t.dtype, np.floating) or not np.array_equal(t.astype(np.float32), t):
            raise UnsupportedDtype(f"tensor of dtype {t.dtype} is not exactly representable as float32")
    if t.ndim > 255 or any(d > _MAX_U32 for d in t.shape):
        raise DimOverflow(f"shape {t.shape} does not fit the header")
    header = TENSOR_MAGIC + struct.pack("<BB", DTYPE_FLOAT32, t.ndim)
    header += struct.pack(f"<{t.ndim}I", *t.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def read_tensor(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 6:
        raise TruncatedPayload(f"{path}: {len(data)} bytes is shorter than the header")
    if data[:4] != TENSOR_MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:4]!r}")
    dtype, ndim = struct.unpack_from("<BB", data, 4)
    if dtype != DTYPE_FLOAT32:
        raise UnsupportedDtype(f"{path}: dtype code {dtype}")
    offset = 6 + 4 * ndim
    if len(data) < offset:
        raise TruncatedPayload(f"{path}: header declares {ndim} dims but the file ends early")
    dims = struct.unpack_from(f"<{ndim}I", data, 6)
    count = 1
    for d in dims:
        count *= d
    expected = count * 4
    if expected > 2**62:
        raise DimOverflow(f"{path}: dims {dims} overflow")
    payload = len(data) - offset
    if payload < expected:
        raise TruncatedPayload(f"{path}: payload {payload} bytes, dims {dims} need {expected}")
    if payload > expected:
        raise FormatError(f"{path}: {payload - expected} trailing bytes after payload")
    return np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float32).reshape(dims)


def _load_json(path: PathLike):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise MalformedJson(f"{path}: {e}") from None


def _dump_json(obj, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def _number(v, what):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MalformedJson(f"{what} must be a number, got {v!r}")
    return v


def parse_detections(raw) -> List[Detection]:
    if not isinstance(raw, list):
        raise MalformedJson("detections must be a JSON array")
    dets = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or not {"category_id", "bbox", "score"} <= set(item):
            raise MalformedJson(f"detection {i}: need category_id, bbox and score")
        bbox = item["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise MalformedJson(f"detection {i}: bbox must be [x, y, w, h]")
        x, y, w, h = (_number(v, f"detection {i} bbox") for v in bbox)
        cid = item["category_id"]
        if isinstance(cid, bool) or not isinstance(cid, int):
            raise MalformedJson(f"detection {i}: category_id must be an integer")
        score = _number(item["score"], f"detection {i} score")
        if w <= 0 or h <= 0:
            raise NegativeBoxSize(f"detection {i}: box size {w}x{h}")
        if not 0.0 <= score <= 1.0:
            raise ScoreOutOfRange(f"detection {i}: score {score}")
        try:
            dets.append(Detection(cid, BoundingBox(x, y, w, h), score))
        except ValidationError as e:
            raise MalformedJson(f"detection {i}: {e}") from None
    return dets


def read_detections(path: PathLike) -> List[Detection]:
    return parse_detections(_load_json(path))


def write_detections(dets: Sequence[Detection], path: PathLike) -> None:
    _dump_json([{"category_id": d.class_id, "bbox": d.box.as_xywh(), "score": d.score}
                for d in dets], path)


def labels_to_dict(labels: LabelSpace) -> dict:
    return {"classes": [{"id": c.class_id, "name": c.name, "kind": c.kind.value}
                        for c in labels.classes]}


def parse_labels(raw) -> Tuple[LabelSpace, Optional[Dict[int, int]]]:
    """Label space plus, for COCO categories, a map from COCO category id to class id."""
    if isinstance(raw, dict) and "classes" in raw:
        try:
            classes = [ClassInfo(int(c["id"]), str(c["name"]), ClassKind(c["kind"]))
                       for c in raw["classes"]]
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedJson(f"bad label entry: {e}") from None
        return LabelSpace(tuple(classes)), None
    cats = raw.get("categories") if isinstance(raw, dict) else raw
    if not isinstance(cats, list):
        raise MalformedJson("label file needs 'classes' or COCO 'categories'")
    try:
        cats = sorted(cats, key=lambda c: int(c["id"]))
        classes = tuple(
            ClassInfo(i + 1, str(c["name"]), ClassKind.THING if c["isthing"] else ClassKind.STUFF)
            for i, c in enumerate(cats))
        mapping = {int(c["id"]): i + 1 for i, c in enumerate(cats)}
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedJson(f"bad category entry: {e}") from None
    return LabelSpace(classes), mapping


def read_labels(path: PathLike) -> Tuple[LabelSpace, Optional[Dict[int, int]]]:
    return parse_labels(_load_json(path))


def write_labels(labels: LabelSpace, path: PathLike) -> None:
    _dump_json(labels_to_dict(labels), path)


def ids_to_rgb(ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    rgb = np.empty(ids.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = ids % 256
    rgb[..., 1] = ids // 256 % 256
    rgb[..., 2] = ids // 65536
    return rgb


def rgb_to_ids(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.int64)
    return rgb[..., 0] + 256 * rgb[..., 1] + 65536 * rgb[..., 2]


def write_panoptic(pmap: PanopticMap, png_path: PathLike, json_path: PathLike,
                   labels_ref: Optional[str] = None,
                   category_map: Optional[Dict[int, int]] = None) -> None:
    """Write a PNG/JSON pair; ``category_map`` (COCO id -> class id) restores COCO category ids."""
    to_coco = {v: k for k, v in category_map.items()} if category_map is not None else None
    if pmap.ids.min(initial=0) < 0 or pmap.ids.max(initial=0) > MAX_SEGMENT_ID:
        raise ValidationError("segment ids must fit in 24 bits")
    pmap.check()
    Image.fromarray(ids_to_rgb(pmap.ids)).save(png_path, format="PNG")
    info = []
    for s in pmap.segments:
        cid = to_coco[s.class_id] if to_coco is not None else s.class_id
        entry = {"id": s.segment_id, "category_id": cid, "area": s.area,
                 "iscrowd": int(s.is_crowd)}
        if s.source_detection is not None:
            entry["source_detection"] = s.source_detection
        info.append(entry)
    doc = {"file_name": Path(png_path).name, "segments_info": info}
    if labels_ref is not None:
        doc["labels"] = labels_ref
    _dump_json(doc, json_path)


def _select_annotation(raw, png_name: str) -> dict:
    if isinstance(raw, dict) and "segments_info" in raw:
        return raw
    if isinstance(raw, dict) and isinstance(raw.get("annotations"), list):
        anns = raw["annotations"]
        hits = [a for a in anns if isinstance(a, dict) and a.get("file_name") == png_name]
        if len(hits) == 1:
            return hits[0]
        if len(anns) == 1 and isinstance(anns[0], dict):
            return anns[0]
        raise MalformedJson(f"no unique annotation for {png_name}")
    raise MalformedJson("panoptic JSON needs 'segments_info' or COCO 'annotations'")


def read_panoptic(png_path: PathLike, json_path: PathLike,
                  category_map: Optional[Dict[int, int]] = None) -> PanopticMap:
    """Read a PNG/JSON pair; ``category_map`` translates COCO category ids to class ids."""
    ann = _select_annotation(_load_json(json_path), Path(png_path).name)
    with Image.open(png_path) as img:
        if img.mode != "RGB":
            raise FormatError(f"{png_path}: expected an 8-bit RGB PNG, got mode {img.mode}")
        ids = rgb_to_ids(np.asarray(img))
    if not isinstance(ann["segments_info"], list):
        raise MalformedJson("segments_info must be a list")
    segments = []
    for s in ann["segments_info"]:
        try:
            cid = int(s["category_id"])
            if category_map is not None:
                cid = category_map[cid]
            segments.append(SegmentInfo(int(s["id"]), cid, int(s["area"]),
                                        bool(s.get("iscrowd", 0)), s.get("source_detection")))
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedJson(f"bad segments_info entry {s!r}: {e}") from None

    declared = {s.segment_id for s in segments}
    if len(declared) != len(segments) or 0 in declared:
        raise IdMismatch(f"{json_path}: duplicate or zero segment ids")
    present, counts = np.unique(ids, return_counts=True)
    observed = {int(i): int(n) for i, n in zip(present, counts) if i != 0}
    if set(observed) != declared:
        missing = sorted(set(observed) - declared)
        extra = sorted(declared - set(observed))
        raise IdMismatch(f"{png_path}: ids in PNG but not JSON {missing}, in JSON but not PNG {extra}")
    for s in segments:
        if observed[s.segment_id] != s.area:
            raise AreaMismatch(f"segment {s.segment_id}: area {s.area} != pixel count {observed[s.segment_id]}")
    return PanopticMap(ids, tuple(segments))


SCENE_FILES = {
    "labels": "labels.json",
    "logits": "logits.pft",
    "centers": "centers.pft",
    "detections": "detections.json",
    "gt_png": "gt.png",
    "gt_json": "gt.json",
}


def write_scene(out_dir: PathLike, labels: LabelSpace, logits: np.ndarray,
                dets: Sequence[Detection], centers: np.ndarray,
                gt: Optional[PanopticMap] = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_labels(labels, out / SCENE_FILES["labels"])
    write_tensor(logits, out / SCENE_FILES["logits"])
    write_tensor(centers, out / SCENE_FILES["centers"])
    write_detections(dets, out / SCENE_FILES["detections"])
    if gt is not None:
        write_panoptic(gt, out / SCENE_FILES["gt_png"], out / SCENE_FILES["gt_json"],
                       labels_ref=SCENE_FILES["labels"])
