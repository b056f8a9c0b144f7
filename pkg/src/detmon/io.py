"""Bit-exact file formats tying the pipeline stages together.

Text formats are JSON-lines (one object per line, streamable and diffable);
floats round-trip exactly through Python's shortest-repr JSON encoding.
Activation tensors use the binary ACTF layout, alert models the binary ALRT
layout, both little-endian with fixed magic headers so corruption is caught
before any math runs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptTensor,
    InputError,
    MissingFrame,
    ParseError,
)
from .alert import AlertArchitecture, AlertModel
from .model import (
    ActivationMap,
    AlertLabel,
    BoundingBox,
    Detection,
    FeatureVector,
    FrameRecord,
    GroundTruthObject,
    validate_frame,
)

ACTF_MAGIC = b"ACTF"
ALRT_MAGIC = b"ALRT"
FORMAT_VERSION = 1


# --- JSON-lines plumbing ----------------------------------------------------

def iter_jsonl(path):
    """Yield (line_no, obj) per non-empty line; ParseError names the bad line."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON ({exc.msg})") from exc


def write_jsonl(path, objs) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")


def _require(obj: dict, key: str, path, line_no):
    if key not in obj:
        raise ParseError(path, line_no, f"missing key {key!r}")
    return obj[key]


# --- detections / ground truth ----------------------------------------------

def _box_fields(box: BoundingBox) -> list[float]:
    return [box.x1, box.y1, box.x2, box.y2]


def write_ground_truth(path, frames: list[FrameRecord]) -> None:
    """One line per GT object: {"frame_id", "category", "bbox": [x1,y1,x2,y2]}."""
    write_jsonl(
        path,
        (
            {"frame_id": f.frame_id, "category": g.category, "bbox": _box_fields(g.box)}
            for f in frames
            for g in f.ground_truth
        ),
    )


def write_detections(path, frames: list[FrameRecord]) -> None:
    """Like ground truth, plus a "score" field per line."""
    write_jsonl(
        path,
        (
            {
                "frame_id": f.frame_id,
                "category": d.category,
                "bbox": _box_fields(d.box),
                "score": d.score,
            }
            for f in frames
            for d in f.detections
        ),
    )


def _parse_box(obj: dict, path, line_no) -> BoundingBox:
    bbox = _require(obj, "bbox", path, line_no)
    if not (isinstance(bbox, list) and len(bbox) == 4):
        raise ParseError(path, line_no, "bbox must be a list of four numbers")
    return BoundingBox(*(float(v) for v in bbox))


def read_frames(
    gt_path,
    det_path,
    frame_ids: list[str] | None = None,
) -> list[FrameRecord]:
    """Join a GT file and a detections file into validated FrameRecords.

    With ``frame_ids`` given, the output covers exactly those ids in that
    order and any line referencing another id raises MissingFrame; otherwise
    the frame universe is the union of ids in order of first appearance.
    """
    known = None if frame_ids is None else set(frame_ids)
    order: list[str] = list(frame_ids) if frame_ids is not None else []
    gt: dict[str, list[GroundTruthObject]] = {fid: [] for fid in order}
    det: dict[str, list[Detection]] = {fid: [] for fid in order}

    def _admit(fid: str, path, line_no):
        if known is not None and fid not in known:
            raise MissingFrame(f"{path}:{line_no}: unknown frame {fid!r}")
        if fid not in gt:
            order.append(fid)
            gt[fid] = []
            det[fid] = []

    for line_no, obj in iter_jsonl(gt_path):
        fid = str(_require(obj, "frame_id", gt_path, line_no))
        _admit(fid, gt_path, line_no)
        gt[fid].append(
            GroundTruthObject(_parse_box(obj, gt_path, line_no), str(_require(obj, "category", gt_path, line_no)))
        )
    for line_no, obj in iter_jsonl(det_path):
        fid = str(_require(obj, "frame_id", det_path, line_no))
        _admit(fid, det_path, line_no)
        det[fid].append(
            Detection(
                _parse_box(obj, det_path, line_no),
                str(_require(obj, "category", det_path, line_no)),
                float(_require(obj, "score", det_path, line_no)),
            )
        )
    return [validate_frame(FrameRecord(fid, tuple(gt[fid]), tuple(det[fid]))) for fid in order]


def read_detections_grouped(paths, frame_ids: set[str]) -> dict[str, list[Detection]]:
    """Detections for exactly ``frame_ids``, pulled from the given files.

    Lines for other frames are ignored, so several manifests may share one
    detections file.
    """
    grouped: dict[str, list[Detection]] = {fid: [] for fid in frame_ids}
    for path in sorted(Path(p) for p in paths):
        for line_no, obj in iter_jsonl(path):
            fid = str(_require(obj, "frame_id", path, line_no))
            if fid in grouped:
                grouped[fid].append(
                    Detection(
                        _parse_box(obj, path, line_no),
                        str(_require(obj, "category", path, line_no)),
                        float(_require(obj, "score", path, line_no)),
                    )
                )
    return grouped


# --- per-frame mAP / labels / features / scores ------------------------------

def write_maps(path, maps: list[tuple[str, float | None]]) -> None:
    write_jsonl(path, ({"frame_id": fid, "per_frame_map": m} for fid, m in maps))


def read_maps(path) -> list[tuple[str, float | None]]:
    out = []
    for line_no, obj in iter_jsonl(path):
        fid = str(_require(obj, "frame_id", path, line_no))
        value = _require(obj, "per_frame_map", path, line_no)
        out.append((fid, None if value is None else float(value)))
    return out


def write_labels(path, lam: float, labels: list[AlertLabel]) -> None:
    """Header line carries the resolved critical threshold lambda."""
    rows = [{"lambda": lam}]
    rows.extend(
        {"frame_id": l.frame_id, "per_frame_map": l.per_frame_map, "label": l.label}
        for l in labels
    )
    write_jsonl(path, rows)


def read_labels(path) -> tuple[float, list[AlertLabel]]:
    lam = None
    labels = []
    for line_no, obj in iter_jsonl(path):
        if lam is None:
            lam = float(_require(obj, "lambda", path, line_no))
            continue
        labels.append(
            AlertLabel(
                str(_require(obj, "frame_id", path, line_no)),
                float(_require(obj, "per_frame_map", path, line_no)),
                str(_require(obj, "label", path, line_no)),
            )
        )
    if lam is None:
        raise ParseError(path, 1, "labels file is missing its lambda header line")
    return lam, labels


def write_features(path, features: list[FeatureVector]) -> None:
    write_jsonl(
        path,
        (
            {"frame_id": f.frame_id, "feature": f.feature_name, "values": f.values.tolist()}
            for f in features
        ),
    )


def read_features(path) -> list[FeatureVector]:
    out = []
    for line_no, obj in iter_jsonl(path):
        out.append(
            FeatureVector(
                str(_require(obj, "frame_id", path, line_no)),
                str(_require(obj, "feature", path, line_no)),
                [float(v) for v in _require(obj, "values", path, line_no)],
            )
        )
    return out


def write_scores(path, scores: list[tuple[str, float]]) -> None:
    write_jsonl(path, ({"frame_id": fid, "failure_prob": p} for fid, p in scores))


def read_scores(path) -> list[tuple[str, float]]:
    return [
        (
            str(_require(obj, "frame_id", path, line_no)),
            float(_require(obj, "failure_prob", path, line_no)),
        )
        for line_no, obj in iter_jsonl(path)
    ]


# --- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    frame_id: str
    detections_ref: Path
    groundtruth_ref: Path | None
    activations: dict[str, Path]
    order: int | None


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    """Paths are written relative to the manifest's own directory when possible."""
    base = Path(path).resolve().parent

    def rel(p: Path | None):
        if p is None:
            return None
        p = Path(p).resolve()
        try:
            return str(p.relative_to(base))
        except ValueError:
            return str(p)

    rows = []
    for e in entries:
        row = {
            "frame_id": e.frame_id,
            "detections": rel(e.detections_ref),
            "groundtruth": rel(e.groundtruth_ref),
            "activations": {layer: rel(p) for layer, p in e.activations.items()},
        }
        if e.order is not None:
            row["order"] = e.order
        rows.append(row)
    write_jsonl(path, rows)


def read_manifest(path) -> list[ManifestEntry]:
    """Load entries, resolve refs against the manifest dir, verify existence."""
    base = Path(path).resolve().parent
    entries = []
    seen = set()
    for line_no, obj in iter_jsonl(path):
        fid = str(_require(obj, "frame_id", path, line_no))
        if fid in seen:
            raise ParseError(path, line_no, f"duplicate frame_id {fid!r}")
        seen.add(fid)

        def resolve(ref, *, required: bool):
            if ref is None:
                if required:
                    raise ParseError(path, line_no, "missing file reference")
                return None
            p = (base / ref) if not Path(ref).is_absolute() else Path(ref)
            if not p.exists():
                raise InputError(f"{path}:{line_no}: referenced file does not exist: {p}")
            return p

        activations = {
            str(layer): resolve(ref, required=True)
            for layer, ref in (obj.get("activations") or {}).items()
        }
        entries.append(
            ManifestEntry(
                frame_id=fid,
                detections_ref=resolve(_require(obj, "detections", path, line_no), required=True),
                groundtruth_ref=resolve(obj.get("groundtruth"), required=False),
                activations=activations,
                order=int(obj["order"]) if "order" in obj and obj["order"] is not None else None,
            )
        )
    return entries


# --- ACTF: binary activation tensors -----------------------------------------

def write_actf(path, a: ActivationMap) -> None:
    """Header: magic "ACTF", u16 version, u16 reserved, u32 N/H/W; then
    N*H*W little-endian float32 values in (channel, row, column) order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ACTF_MAGIC + struct.pack("<HHIII", FORMAT_VERSION, 0, a.channels, a.height, a.width)
    payload = np.ascontiguousarray(a.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_actf(path, frame_id: str = "", layer_name: str = "") -> ActivationMap:
    """Parse an ACTF file; frame/layer identity comes from the manifest."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    raw = path.read_bytes()
    if len(raw) < 20:
        raise CorruptTensor(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != ACTF_MAGIC:
        raise CorruptTensor(f"{path}: bad magic {raw[:4]!r}")
    version, _reserved, n, h, w = struct.unpack("<HHIII", raw[4:20])
    if version != FORMAT_VERSION:
        raise CorruptTensor(f"{path}: unsupported version {version}")
    if n < 1 or h < 1 or w < 1:
        raise CorruptTensor(f"{path}: invalid dimensions N={n} H={h} W={w}")
    expected = 20 + 4 * n * h * w
    if len(raw) != expected:
        raise CorruptTensor(f"{path}: payload is {len(raw) - 20} bytes, expected {expected - 20}")
    values = np.frombuffer(raw, dtype="<f4", offset=20).reshape(n, h, w)
    return ActivationMap(frame_id=frame_id, layer_name=layer_name, values=values)


# --- ALRT: alert model weights ------------------------------------------------

def save_model(path, model: AlertModel) -> None:
    """Self-describing container: magic "ALRT", version, seed, architecture
    counts, then per-layer weight matrices and bias vectors as f64 LE."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arch = model.architecture
    fan_outs = [d for d, _ in arch.layer_dims()]
    with open(path, "wb") as fh:
        fh.write(ALRT_MAGIC)
        fh.write(struct.pack("<HH", FORMAT_VERSION, 0))
        fh.write(struct.pack("<q", model.training_seed))
        fh.write(struct.pack("<d", arch.dropout_rate))
        fh.write(struct.pack("<II", arch.input_dim, len(fan_outs)))
        fh.write(struct.pack(f"<{len(fan_outs)}I", *fan_outs))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> AlertModel:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    raw = path.read_bytes()
    if len(raw) < 32 or raw[:4] != ALRT_MAGIC:
        raise CorruptTensor(f"{path}: not an ALRT model file")
    version, _reserved = struct.unpack("<HH", raw[4:8])
    if version != FORMAT_VERSION:
        raise CorruptTensor(f"{path}: unsupported version {version}")
    seed = struct.unpack("<q", raw[8:16])[0]
    dropout = struct.unpack("<d", raw[16:24])[0]
    input_dim, n_layers = struct.unpack("<II", raw[24:32])
    off = 32
    if len(raw) < off + 4 * n_layers:
        raise CorruptTensor(f"{path}: truncated layer table")
    fan_outs = list(struct.unpack(f"<{n_layers}I", raw[off : off + 4 * n_layers]))
    off += 4 * n_layers
    if n_layers < 1 or fan_outs[-1] != 1:
        raise CorruptTensor(f"{path}: malformed architecture (output unit must be 1)")
    arch = AlertArchitecture(input_dim=input_dim, hidden_dims=tuple(fan_outs[:-1]), dropout_rate=dropout)

    weights, biases = [], []
    fan_in = input_dim
    for fan_out in fan_outs:
        need = 8 * (fan_out * fan_in + fan_out)
        if len(raw) < off + need:
            raise CorruptTensor(f"{path}: truncated parameter payload")
        w = np.frombuffer(raw, dtype="<f8", count=fan_out * fan_in, offset=off).reshape(fan_out, fan_in)
        off += 8 * fan_out * fan_in
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=off)
        off += 8 * fan_out
        weights.append(w)
        biases.append(b)
        fan_in = fan_out
    if off != len(raw):
        raise CorruptTensor(f"{path}: {len(raw) - off} trailing bytes")
    return AlertModel(arch, tuple(weights), tuple(biases), seed)
