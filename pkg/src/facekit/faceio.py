"""Reading and writing every facekit artifact.

Binary files (models, named arrays) are::

    facekit-<kind> <version>\\n      ASCII magic line
    <json header>\\n                  one line of UTF-8 JSON
    <payload>                        arrays back to back, little-endian, C order

The header lists each array as ``{"name", "dtype", "shape"}`` with dtype
``"<f8"`` or ``"<u4"``; payload length must match exactly. Landmark specs,
embedding batches and metrics reports are JSON documents with ``format`` and ``version`` keys.
Meshes use Wavefront OBJ (``v``/``f`` records only). See ``docs/formats.md``.

Writers assume exclusive access to the target path.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedFileError, UnsupportedVersionError, ValidationError
from .fitting import ANCHOR_NAMES, REGION_NAMES, LandmarkSpec
from .metrics import LINES, MetricsReport
from .model import FaceMesh, MorphableModel, ParamStats, ParamVector

VERSION = 1
_DTYPES = {"<f8": np.dtype("<f8"), "<u4": np.dtype("<u4")}


# -- binary container ---------------------------------------------------------

def _write_container(path, kind: str, arrays: dict, meta: dict) -> None:
    specs, blobs = [], []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = "<u4" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        if dtype == "<u4" and arr.size and (arr.min() < 0 or arr.max() > np.iinfo(np.uint32).max):
            raise ValidationError(f"array {name} does not fit in uint32")
        data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
        specs.append({"name": name, "dtype": dtype, "shape": list(data.shape)})
        blobs.append(data.tobytes())
    header = json.dumps({"arrays": specs, "meta": meta}, sort_keys=True, allow_nan=False)
    with open(path, "wb") as fh:
        fh.write(f"facekit-{kind} {VERSION}\n".encode("ascii"))
        fh.write(header.encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)


def _read_container(path, kind: str) -> tuple[dict, dict]:
    raw = Path(path).read_bytes()
    first, sep, rest = raw.partition(b"\n")
    if not sep:
        raise TruncatedFileError(f"{path}: missing header")
    parts = first.decode("ascii", errors="replace").split(" ")
    if len(parts) != 2 or parts[0] != f"facekit-{kind}":
        raise FormatError(f"{path}: not a facekit {kind} file")
    if parts[1] != str(VERSION):
        raise UnsupportedVersionError(f"{path}: unsupported {kind} version {parts[1]!r}")
    header_line, sep, payload = rest.partition(b"\n")
    if not sep:
        raise TruncatedFileError(f"{path}: header is not terminated")
    try:
        header = json.loads(header_line.decode("utf-8"))
        specs, meta = header["arrays"], header["meta"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from exc

    arrays, offset = {}, 0
    for spec in specs:
        try:
            dtype = _DTYPES[spec["dtype"]]
            shape = tuple(int(s) for s in spec["shape"])
            name = spec["name"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: bad array entry {spec!r}") from exc
        if any(s < 0 for s in shape):
            raise FormatError(f"{path}: negative dimension in array {name}")
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(payload):
            raise TruncatedFileError(f"{path}: truncated inside array {name}")
        arr = np.frombuffer(payload, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset).reshape(shape)
        if dtype.kind == "f" and not np.all(np.isfinite(arr)):
            raise FormatError(f"{path}: array {name} contains NaN or infinite values")
        arrays[name] = arr.astype(np.float64 if dtype.kind == "f" else np.int64)
        offset += nbytes
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} unexpected trailing bytes")
    return arrays, meta


def _require(mapping: dict, keys, path, what: str):
    missing = [k for k in keys if k not in mapping]
    if missing:
        raise FormatError(f"{path}: {what} is missing {', '.join(missing)}")


# -- morphable model ----------------------------------------------------------

def save_model(path, model: MorphableModel) -> None:
    meta = {
        "n_vertices": model.n_vertices,
        "n_shape": model.n_shape,
        "n_expr": model.n_expr,
        "n_triangles": int(model.triangles.shape[0]),
        "layout": "vertex-major xyz",
        "param_stats": None if model.param_stats is None else {
            "mean": model.param_stats.mean.tolist(), "std": model.param_stats.std.tolist()},
        "provenance": model.provenance,
    }
    arrays = {"mean_face": model.mean_face, "shape_basis": model.shape_basis,
              "expr_basis": model.expr_basis, "triangles": model.triangles.astype(np.int64)}
    _write_container(path, "model", arrays, meta)


def load_model(path) -> MorphableModel:
    arrays, meta = _read_container(path, "model")
    _require(arrays, ("mean_face", "shape_basis", "expr_basis", "triangles"), path, "model")
    _require(meta, ("n_vertices", "n_shape", "n_expr", "n_triangles"), path, "model header")
    n, ps, pe, nt = (int(meta[k]) for k in ("n_vertices", "n_shape", "n_expr", "n_triangles"))
    expected = {"mean_face": (3 * n,), "shape_basis": (3 * n, ps), "expr_basis": (3 * n, pe), "triangles": (nt, 3)}
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise FormatError(f"{path}: header says {name} is {shape}, payload is {arrays[name].shape}")
    stats = meta.get("param_stats")
    try:
        if stats is not None:
            stats = ParamStats(np.array(stats["mean"], dtype=np.float64), np.array(stats["std"], dtype=np.float64))
        return MorphableModel(arrays["mean_face"], arrays["shape_basis"], arrays["expr_basis"],
                              arrays["triangles"], stats, dict(meta.get("provenance") or {}))
    except (ValidationError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: invalid model ({exc})") from exc


# -- named arrays -------------------------------------------------------------

def save_arrays(path, kind: str, arrays: dict, meta: dict | None = None) -> None:
    _write_container(path, "arrays", arrays, {"kind": kind, **(meta or {})})


def load_arrays(path, kind: str | None = None) -> tuple[dict, dict]:
    arrays, meta = _read_container(path, "arrays")
    if kind is not None and meta.get("kind") != kind:
        raise FormatError(f"{path}: expected a {kind!r} array file, found {meta.get('kind')!r}")
    return arrays, meta


def save_params(path, params: ParamVector) -> None:
    save_arrays(path, "params", {"shape": params.shape, "expr": params.expr}, {"normalized": params.normalized})


def load_params(path) -> ParamVector:
    arrays, meta = load_arrays(path, "params")
    _require(arrays, ("shape", "expr"), path, "params file")
    return ParamVector(arrays["shape"], arrays["expr"], bool(meta.get("normalized", False)))


def save_landmarks(path, landmarks) -> None:
    save_arrays(path, "landmarks", {"points": np.asarray(landmarks, dtype=np.float64)})


def load_landmarks(path) -> np.ndarray:
    arrays, _ = load_arrays(path, "landmarks")
    _require(arrays, ("points",), path, "landmarks file")
    return arrays["points"]


def save_weights(path, weights) -> None:
    save_arrays(path, "decoder_weights", weights.arrays())


def load_weights(path):
    from .regressor import DecoderWeights

    arrays, _ = load_arrays(path, "decoder_weights")
    _require(arrays, ("shape_head", "shape_bias", "expr_head", "expr_bias"), path, "weights file")
    try:
        return DecoderWeights(**{k: arrays[k] for k in ("shape_head", "shape_bias", "expr_head", "expr_bias")})
    except ValidationError as exc:
        raise FormatError(f"{path}: invalid decoder weights ({exc})") from exc


def save_dataset(path, dataset) -> None:
    save_arrays(path, "dataset", {"embeddings": dataset.embeddings, "params": dataset.params,
                                  "landmarks": dataset.landmarks},
                {"n_shape": int(dataset.n_shape), "normalized": True})


def load_dataset(path):
    from .synthetic import Dataset

    arrays, meta = load_arrays(path, "dataset")
    _require(arrays, ("embeddings", "params", "landmarks"), path, "dataset file")
    _require(meta, ("n_shape",), path, "dataset header")
    s = arrays["embeddings"].shape[0]
    if arrays["params"].shape[0] != s or arrays["landmarks"].shape[0] != s:
        raise FormatError(f"{path}: dataset arrays disagree on sample count")
    return Dataset(arrays["embeddings"], arrays["params"], arrays["landmarks"], int(meta["n_shape"]))


def save_spectrogram(path, spec) -> None:
    save_arrays(path, "log_mel", {"frames": spec.frames},
                {"frame_duration": spec.frame_duration, "hop": spec.hop})


def load_spectrogram(path):
    from .audio import MelSpectrogram

    arrays, meta = load_arrays(path, "log_mel")
    _require(arrays, ("frames",), path, "spectrogram file")
    return MelSpectrogram(arrays["frames"], float(meta["frame_duration"]), float(meta["hop"]))


# -- OBJ ----------------------------------------------------------------------

def export_obj(mesh: FaceMesh, path) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def import_obj(path) -> FaceMesh:
    """Parse ``v`` and triangular ``f`` records (``i``, ``i/t``, ``i//n``, ``i/t/n``)."""
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) not in (4, 5, 7):
                    raise FormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    verts.append([float(p) for p in parts[1:4]])
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad vertex coordinate") from exc
            elif tag == "f":
                if len(parts) != 4:
                    raise FormatError(f"{path}:{lineno}: only triangular faces are supported")
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad face index") from exc
                if any(i < 1 for i in idx):
                    raise FormatError(f"{path}:{lineno}: face indices are 1-based and must be >= 1")
                faces.append((lineno, [i - 1 for i in idx]))
            elif tag in ("vn", "vt", "o", "g", "s", "usemtl", "mtllib"):
                continue
            else:
                raise FormatError(f"{path}:{lineno}: unknown record {tag!r}")
    if not verts:
        raise FormatError(f"{path}: no vertices")
    for lineno, idx in faces:
        if max(idx) >= len(verts):
            raise FormatError(f"{path}:{lineno}: face index {max(idx) + 1} exceeds {len(verts)} vertices")
    tri = np.array([f for _, f in faces], dtype=np.int64).reshape(-1, 3)
    try:
        return FaceMesh(np.array(verts, dtype=np.float64), tri)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# -- JSON documents -----------------------------------------------------------

def _read_json(path, fmt: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != fmt:
        raise FormatError(f"{path}: not a {fmt} document")
    if doc.get("version") != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported {fmt} version {doc.get('version')!r}")
    return doc


def _write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n")


def landmark_spec_to_dict(spec: LandmarkSpec) -> dict:
    return {
        "format": "facekit.landmark_spec",
        "version": VERSION,
        "anchors": {k: int(spec.anchors[k]) for k in ANCHOR_NAMES},
        "landmarks68": [int(i) for i in spec.landmarks68],
        "regions": {k: [int(i) for i in spec.regions[k]] for k in REGION_NAMES},
    }


def save_landmark_spec(path, spec: LandmarkSpec) -> None:
    _write_json(path, landmark_spec_to_dict(spec))


def load_landmark_spec(path) -> LandmarkSpec:
    doc = _read_json(path, "facekit.landmark_spec")
    _require(doc, ("anchors", "landmarks68", "regions"), path, "landmark spec")
    try:
        return LandmarkSpec(doc["anchors"], doc["landmarks68"], doc["regions"])
    except (ValidationError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: invalid landmark spec ({exc})") from exc


def save_embedding(path, batch) -> None:
    """Write a ``(B, D)`` batch; higher-rank batches are flattened row-major first."""
    rows = np.asarray(batch, dtype=np.float64)
    if rows.ndim < 2 or rows.shape[0] == 0:
        raise ValidationError("an embedding batch needs at least one row and a feature axis")
    rows = rows.reshape(rows.shape[0], -1)
    if not np.all(np.isfinite(rows)):
        raise ValidationError("embedding batch must be finite")
    _write_json(path, {"format": "facekit.embedding_batch", "version": VERSION, "rows": rows.tolist()})


def load_embedding(path) -> np.ndarray:
    doc = _read_json(path, "facekit.embedding_batch")
    _require(doc, ("rows",), path, "embedding batch")
    try:
        rows = np.array(doc["rows"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: embedding rows must be a rectangular array of numbers") from exc
    if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
        raise FormatError(f"{path}: embedding rows must form a non-empty (B, D) array")
    if not np.all(np.isfinite(rows)):
        raise FormatError(f"{path}: embedding batch has non-finite entries")
    return rows


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "format": "facekit.metrics_report",
        "version": VERSION,
        "are": {k: float(report.are[k]) for k in (*LINES, "mean")},
        "nme": float(report.nme),
        "holistic_rmse": float(report.holistic_rmse),
        "part_rmse": {k: float(report.part_rmse[k]) for k in REGION_NAMES},
        "provenance": dict(report.provenance),
    }


def report_from_dict(doc: dict, path="<report>") -> MetricsReport:
    _require(doc, ("are", "nme", "holistic_rmse", "part_rmse"), path, "metrics report")
    try:
        return MetricsReport({k: float(v) for k, v in doc["are"].items()}, float(doc["nme"]),
                             float(doc["holistic_rmse"]),
                             {k: float(v) for k, v in doc["part_rmse"].items()},
                             dict(doc.get("provenance") or {}))
    except (ValidationError, TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"{path}: invalid metrics report ({exc})") from exc


def save_report(path, report: MetricsReport) -> None:
    _write_json(path, report_to_dict(report))


def load_report(path) -> MetricsReport:
    return report_from_dict(_read_json(path, "facekit.metrics_report"), path)
