"""Bit-exact readers and writers for clouds, class-tagged meshes, configs, reports.

Formats:
  * XYZL text: whitespace-separated ``x y z class_id``; ``#`` comments and
    blank lines are ignored.
  * PLY ascii / binary little-endian: x, y, z as 64-bit floats plus a
    ``class_id`` uint8 property (``scalar_Classification`` accepted on read).
  * Wavefront-style OBJ for meshes: group/object names carry the class.

All coordinates are meters. Write/read pairs round-trip losslessly.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .core import (
    ClassWeights,
    LabeledPointCloud,
    SemanticClass,
    default_weights,
)
from .errors import ConfigError, FormatError, ParseError

logger = logging.getLogger(__name__)


FORMAT_XYZL = "xyzl"
FORMAT_PLY_ASCII = "ply-ascii"
FORMAT_PLY_BINARY = "ply-binary-le"
CLOUD_FORMATS = (FORMAT_XYZL, FORMAT_PLY_ASCII, FORMAT_PLY_BINARY)

_FLOAT_FMT = "%.17g"  # enough digits for exact float64 round-trips


# ---------------------------------------------------------------------------
# labeled point clouds
# ---------------------------------------------------------------------------


def _sniff_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head.startswith(b"ply"):
        # ascii vs binary decided by the header's format line
        with open(path, "rb") as fh:
            for raw in fh:
                line = raw.decode("ascii", errors="replace").strip()
                if line.startswith("format"):
                    return FORMAT_PLY_ASCII if "ascii" in line else FORMAT_PLY_BINARY
                if line == "end_header":
                    break
        raise ParseError(path, "ply header has no format line")
    return FORMAT_XYZL


def read_cloud(path, fmt: str = "auto") -> LabeledPointCloud:
    """Read a labeled cloud; out-of-range labels are coerced to Noise."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such cloud file: {path}")
    if fmt == "auto":
        fmt = _sniff_format(path)
    if fmt == FORMAT_XYZL:
        return _read_xyzl(path)
    if fmt in (FORMAT_PLY_ASCII, FORMAT_PLY_BINARY):
        return _read_ply(path)
    raise FormatError(f"unknown cloud format: {fmt!r}")


def write_cloud(cloud: LabeledPointCloud, path, fmt: str = "auto") -> None:
    path = Path(path)
    if fmt == "auto":
        fmt = FORMAT_PLY_BINARY if path.suffix.lower() == ".ply" else FORMAT_XYZL
    if fmt == FORMAT_XYZL:
        _write_xyzl(cloud, path)
    elif fmt == FORMAT_PLY_ASCII:
        _write_ply(cloud, path, binary=False)
    elif fmt == FORMAT_PLY_BINARY:
        _write_ply(cloud, path, binary=True)
    else:
        raise FormatError(f"unknown cloud format: {fmt!r}")


def _read_xyzl(path: Path) -> LabeledPointCloud:
    xs, labels = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 4:
                raise ParseError(path, f"expected 4 fields, got {len(parts)}", line=lineno)
            try:
                x, y, z = float(parts[0]), float(parts[1]), float(parts[2])
                label = int(parts[3])
            except ValueError as exc:
                raise ParseError(path, f"bad numeric field: {exc}", line=lineno) from exc
            if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
                raise ParseError(path, "non-finite coordinate", line=lineno)
            if not 0 <= label <= 255:
                raise ParseError(path, f"label {label} outside uint8 range", line=lineno)
            xs.append((x, y, z))
            labels.append(label)
    xyz = np.array(xs, dtype=np.float64).reshape(-1, 3)
    return LabeledPointCloud.from_arrays(
        xyz, np.array(labels, dtype=np.int64), coerce=True, context=str(path)
    )


def _write_xyzl(cloud: LabeledPointCloud, path: Path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i in range(len(cloud)):
                x, y, z = cloud.xyz[i]
                fh.write(
                    f"{_FLOAT_FMT % x} {_FLOAT_FMT % y} {_FLOAT_FMT % z} {int(cloud.labels[i])}\n"
                )
    except OSError as exc:
        raise OSError(f"cannot write cloud to {path}: {exc}") from exc


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_LABEL_PROPERTIES = ("class_id", "scalar_classification")


def _read_ply(path: Path) -> LabeledPointCloud:
    with open(path, "rb") as fh:
        data = fh.read()

    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError(path, "not a ply file (missing header)")
    header_end = data.find(b"\n", end)
    if header_end < 0:
        raise ParseError(path, "unterminated ply header", offset=end)
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    body = data[header_end + 1 :]

    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    for lineno, line in enumerate(header, start=1):
        tokens = line.strip().split()
        if not tokens or tokens[0] in ("ply", "comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(path, f"unsupported ply format: {line.strip()!r}", line=lineno)
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise ParseError(path, "malformed element line", line=lineno)
            try:
                count = int(tokens[2])
            except ValueError as exc:
                raise ParseError(path, "bad element count", line=lineno) from exc
            if count < 0:
                raise ParseError(path, "negative element count", line=lineno)
            elements.append((tokens[1], count, []))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError(path, "property before any element", line=lineno)
            if tokens[1] == "list":
                elements[-1][2].append(("__list__", " ".join(tokens[2:])))
            else:
                if len(tokens) != 3:
                    raise ParseError(path, "malformed property line", line=lineno)
                elements[-1][2].append((tokens[2], tokens[1]))
    if fmt is None:
        raise ParseError(path, "ply header has no format line")
    if not elements:
        raise ParseError(path, "ply header declares no elements")
    name, count, props = elements[0]
    if name != "vertex":
        raise ParseError(path, f"first ply element must be vertex, got {name!r}")
    if any(p == "__list__" for p, _ in props):
        raise ParseError(path, "list properties on the vertex element are unsupported")

    prop_names = [p for p, _ in props]
    lower = [p.lower() for p in prop_names]
    for coord in ("x", "y", "z"):
        if coord not in lower:
            raise ParseError(path, f"vertex element lacks property {coord!r}")
    label_prop = next((p for p in lower if p in _LABEL_PROPERTIES), None)
    if label_prop is None:
        raise ParseError(
            path, "vertex element lacks a class property (class_id or scalar_Classification)"
        )

    try:
        np_types = [_PLY_TYPES[t] for _, t in props]
    except KeyError as exc:
        raise ParseError(path, f"unsupported ply property type {exc}") from exc

    if fmt == "binary_little_endian":
        dtype = np.dtype([(f"f{i}", "<" + t) for i, t in enumerate(np_types)])
        need = dtype.itemsize * count
        if len(body) < need:
            raise ParseError(
                path,
                f"vertex data truncated: need {need} bytes, have {len(body)}",
                offset=header_end + 1 + len(body),
            )
        table = np.frombuffer(body[:need], dtype=dtype)
        columns = {lower[i]: table[f"f{i}"] for i in range(len(props))}
    else:
        rows = body.decode("ascii", errors="replace").splitlines()
        values = []
        seen = 0
        for k, row in enumerate(rows):
            row = row.strip()
            if not row:
                continue
            if seen == count:
                break
            parts = row.split()
            if len(parts) != len(props):
                raise ParseError(
                    path,
                    f"vertex row has {len(parts)} fields, expected {len(props)}",
                    line=len(header) + 1 + k + 1,
                )
            try:
                values.append([float(v) for v in parts])
            except ValueError as exc:
                raise ParseError(path, f"bad vertex value: {exc}", line=len(header) + 1 + k + 1) from exc
            seen += 1
        if seen != count:
            raise ParseError(path, f"vertex data truncated: {seen} of {count} rows")
        arr = np.array(values, dtype=np.float64).reshape(count, len(props))
        columns = {lower[i]: arr[:, i] for i in range(len(props))}

    xyz = np.column_stack([
        np.asarray(columns["x"], dtype=np.float64),
        np.asarray(columns["y"], dtype=np.float64),
        np.asarray(columns["z"], dtype=np.float64),
    ])
    if xyz.size and not np.isfinite(xyz).all():
        raise ParseError(path, "non-finite coordinate in vertex data")
    raw_labels = np.asarray(columns[label_prop])
    if raw_labels.size and not np.isfinite(raw_labels.astype(np.float64)).all():
        raise ParseError(path, "non-finite class value in vertex data")
    labels = np.rint(raw_labels.astype(np.float64)).astype(np.int64)
    return LabeledPointCloud.from_arrays(xyz, labels, coerce=True, context=str(path))


def _write_ply(cloud: LabeledPointCloud, path: Path, binary: bool) -> None:
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        "property uchar class_id\n"
        "end_header\n"
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            if binary:
                rec = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("c", "u1")])
                table = np.empty(len(cloud), dtype=rec)
                table["x"], table["y"], table["z"] = cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]
                table["c"] = cloud.labels
                fh.write(table.tobytes())
            else:
                lines = []
                for i in range(len(cloud)):
                    x, y, z = cloud.xyz[i]
                    lines.append(
                        f"{_FLOAT_FMT % x} {_FLOAT_FMT % y} {_FLOAT_FMT % z} {int(cloud.labels[i])}\n"
                    )
                fh.write("".join(lines).encode("ascii"))
    except OSError as exc:
        raise OSError(f"cannot write cloud to {path}: {exc}") from exc


def write_ray_origins(origins: np.ndarray, path) -> None:
    """Sidecar for simulated scans: one ``x y z`` ray origin per point."""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for x, y, z in origins:
                fh.write(f"{_FLOAT_FMT % x} {_FLOAT_FMT % y} {_FLOAT_FMT % z}\n")
    except OSError as exc:
        raise OSError(f"cannot write ray origins to {path}: {exc}") from exc


def read_ray_origins(path) -> np.ndarray:
    path = Path(path)
    rows = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 3:
                raise ParseError(path, f"expected 3 fields, got {len(parts)}", line=lineno)
            try:
                rows.append(tuple(float(v) for v in parts))
            except ValueError as exc:
                raise ParseError(path, f"bad coordinate: {exc}", line=lineno) from exc
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def read_label_file(path) -> np.ndarray:
    """Prediction labels, one integer per line; out-of-range goes to Noise."""
    path = Path(path)
    values = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            try:
                values.append(int(body))
            except ValueError as exc:
                raise ParseError(path, f"bad label: {body!r}", line=lineno) from exc
    from .core import coerce_labels

    return coerce_labels(np.array(values, dtype=np.int64), context=str(path))


# ---------------------------------------------------------------------------
# class-tagged meshes
# ---------------------------------------------------------------------------

MIN_TRIANGLE_AREA = 1e-12  # m^2


@dataclass(frozen=True)
class ClassedMesh:
    """Triangle soup with one semantic class per triangle."""

    vertices: np.ndarray          # (V, 3) float64
    triangles: np.ndarray         # (T, 3) int64 vertex indices
    triangle_classes: np.ndarray  # (T,) uint8
    dropped_degenerate: int = 0

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        classes = np.asarray(self.triangle_classes, dtype=np.uint8)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("triangle vertex index out of range")
        if classes.shape != (triangles.shape[0],):
            raise ValueError("one class per triangle required")
        for arr in (vertices, triangles, classes):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "triangle_classes", classes)

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)


_GROUP_SUFFIX = re.compile(r"[_\-. ]")


def _class_for_group(name: str, path, lineno: int) -> SemanticClass:
    token = name.strip()
    stem = _GROUP_SUFFIX.split(token, 1)[0]
    for candidate in (token, stem):
        try:
            return SemanticClass.from_name(candidate)
        except KeyError:
            continue
    logger.warning("%s:%d: group %r is not a known class, using Noise", path, lineno, name)
    return SemanticClass.NOISE


def read_mesh(path) -> ClassedMesh:
    """Read a Wavefront-style OBJ whose groups name semantic classes.

    Polygons are fan-triangulated; triangles with area <= 1e-12 m^2 are
    dropped (count kept on the mesh). Unrecognized group names map to Noise.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such mesh file: {path}")
    vertices: list[tuple[float, float, float]] = []
    tris: list[tuple[int, int, int]] = []
    tri_cls: list[int] = []
    current = SemanticClass.NOISE
    group_seen = False

    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            tokens = body.split()
            tag = tokens[0]
            if tag == "v":
                if len(tokens) < 4:
                    raise ParseError(path, "vertex needs 3 coordinates", line=lineno)
                try:
                    vertices.append((float(tokens[1]), float(tokens[2]), float(tokens[3])))
                except ValueError as exc:
                    raise ParseError(path, f"bad vertex coordinate: {exc}", line=lineno) from exc
            elif tag in ("g", "o"):
                name = " ".join(tokens[1:]) if len(tokens) > 1 else ""
                current = _class_for_group(name, path, lineno) if name else SemanticClass.NOISE
                group_seen = True
            elif tag == "f":
                if len(tokens) < 4:
                    raise ParseError(path, "face needs at least 3 vertices", line=lineno)
                idx = []
                for ref in tokens[1:]:
                    first = ref.split("/", 1)[0]
                    try:
                        i = int(first)
                    except ValueError as exc:
                        raise ParseError(path, f"bad face index {ref!r}", line=lineno) from exc
                    if i > 0:
                        i -= 1
                    elif i < 0:
                        i += len(vertices)
                    else:
                        raise ParseError(path, "face index 0 is invalid", line=lineno)
                    if not 0 <= i < len(vertices):
                        raise ParseError(path, f"face index {ref!r} out of range", line=lineno)
                    idx.append(i)
                if not group_seen:
                    logger.warning("%s:%d: face outside any group, using Noise", path, lineno)
                    group_seen = True
                for k in range(1, len(idx) - 1):
                    tris.append((idx[0], idx[k], idx[k + 1]))
                    tri_cls.append(int(current))

    verts = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    if verts.size and not np.isfinite(verts).all():
        raise ParseError(path, "non-finite vertex coordinate")
    tri_arr = np.array(tris, dtype=np.int64).reshape(-1, 3)
    cls_arr = np.array(tri_cls, dtype=np.uint8)
    mesh = ClassedMesh(verts, tri_arr, cls_arr)
    areas = mesh.triangle_areas()
    keep = areas > MIN_TRIANGLE_AREA
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("%s: dropped %d degenerate triangle(s)", path, dropped)
        mesh = ClassedMesh(verts, tri_arr[keep], cls_arr[keep], dropped_degenerate=dropped)
    return mesh


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters with spec'd defaults, ready to echo into reports."""

    voxel_size_m: float = 0.5
    lambda1: float = 0.6
    lambda2: float = 0.3
    lambda3: float = 0.1
    alpha: float = -0.2
    epsilon: float = 1e-6
    class_weights: ClassWeights = field(default_factory=default_weights)
    m3c2_normal_scale_m: float = 0.5
    m3c2_projection_radius_m: float = 0.25
    m3c2_max_depth_m: float = 1.0
    c2c_mode: str = "directed-max"
    eq3_weight_mode: str = "as-given"
    lambda_validation: str = "strict"
    seed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "voxel_size_m": self.voxel_size_m,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "class_weights": self.class_weights.to_json_dict(),
            "m3c2": {
                "normal_scale_m": self.m3c2_normal_scale_m,
                "projection_radius_m": self.m3c2_projection_radius_m,
                "max_depth_m": self.m3c2_max_depth_m,
            },
            "c2c_mode": self.c2c_mode,
            "eq3_weight_mode": self.eq3_weight_mode,
            "lambda_validation": self.lambda_validation,
            "seed": self.seed,
        }


_C2C_MODES = ("directed-max", "directed-mean", "symmetric-max")
_EQ3_MODES = ("as-given", "renormalized")
_LAMBDA_MODES = ("strict", "relaxed")


def _expect_number(raw: Mapping, key: str, default: float) -> float:
    value = raw.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def config_from_dict(raw: Mapping[str, Any]) -> RunConfig:
    """Build and validate a RunConfig from parsed JSON, applying defaults."""
    if not isinstance(raw, Mapping):
        raise ConfigError("config root must be a JSON object")
    known = {
        "voxel_size_m", "lambda1", "lambda2", "lambda3", "alpha", "epsilon",
        "class_weights", "m3c2", "c2c_mode", "eq3_weight_mode",
        "lambda_validation", "seed",
    }
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown config key")

    voxel = _expect_number(raw, "voxel_size_m", 0.5)
    if voxel <= 0:
        raise ConfigError(f"voxel_size_m: must be > 0, got {voxel}")
    lam1 = _expect_number(raw, "lambda1", 0.6)
    lam2 = _expect_number(raw, "lambda2", 0.3)
    lam3 = _expect_number(raw, "lambda3", 0.1)
    alpha = _expect_number(raw, "alpha", -0.2)
    if alpha >= 0:
        raise ConfigError(f"alpha: must be < 0, got {alpha}")
    epsilon = _expect_number(raw, "epsilon", 1e-6)
    if epsilon <= 0:
        raise ConfigError(f"epsilon: must be > 0, got {epsilon}")

    mode = raw.get("lambda_validation", "strict")
    if mode not in _LAMBDA_MODES:
        raise ConfigError(f"lambda_validation: expected one of {_LAMBDA_MODES}, got {mode!r}")
    if min(lam1, lam2, lam3) < 0:
        raise ConfigError("lambda1/lambda2/lambda3: must be non-negative")
    if mode == "strict":
        total = lam1 + lam2 + lam3
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"lambda1+lambda2+lambda3: must sum to 1, got {total!r}")
        if not (lam1 > lam2 > lam3):
            raise ConfigError("lambda1 > lambda2 > lambda3 is required in strict mode")

    weights_raw = raw.get("class_weights")
    if weights_raw is None:
        weights = default_weights()
    else:
        if not isinstance(weights_raw, Mapping):
            raise ConfigError("class_weights: expected an object of class name to weight")
        try:
            weights = ClassWeights.from_json_dict(weights_raw)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"class_weights: {exc}") from exc

    m3c2 = raw.get("m3c2", {})
    if not isinstance(m3c2, Mapping):
        raise ConfigError("m3c2: expected an object")
    for key in m3c2:
        if key not in ("normal_scale_m", "projection_radius_m", "max_depth_m"):
            raise ConfigError(f"m3c2.{key}: unknown config key")
    normal_scale = _expect_number(m3c2, "normal_scale_m", 0.5)
    projection_radius = _expect_number(m3c2, "projection_radius_m", 0.25)
    max_depth = _expect_number(m3c2, "max_depth_m", 1.0)
    for key, value in (
        ("m3c2.normal_scale_m", normal_scale),
        ("m3c2.projection_radius_m", projection_radius),
        ("m3c2.max_depth_m", max_depth),
    ):
        if value <= 0:
            raise ConfigError(f"{key}: must be > 0, got {value}")

    c2c_mode = raw.get("c2c_mode", "directed-max")
    if c2c_mode not in _C2C_MODES:
        raise ConfigError(f"c2c_mode: expected one of {_C2C_MODES}, got {c2c_mode!r}")
    eq3_mode = raw.get("eq3_weight_mode", "as-given")
    if eq3_mode not in _EQ3_MODES:
        raise ConfigError(f"eq3_weight_mode: expected one of {_EQ3_MODES}, got {eq3_mode!r}")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")

    return RunConfig(
        voxel_size_m=voxel,
        lambda1=lam1,
        lambda2=lam2,
        lambda3=lam3,
        alpha=alpha,
        epsilon=epsilon,
        class_weights=weights,
        m3c2_normal_scale_m=normal_scale,
        m3c2_projection_radius_m=projection_radius,
        m3c2_max_depth_m=max_depth,
        c2c_mode=c2c_mode,
        eq3_weight_mode=eq3_mode,
        lambda_validation=mode,
        seed=seed,
    )


def read_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return config_from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def dump_json(payload: Mapping, path) -> None:
    """Deterministic JSON writer: sorted keys, fixed separators, newline end."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def write_report(report, path) -> None:
    """Serialize a report object exposing ``to_json_dict`` (gap or eval)."""
    dump_json(report.to_json_dict(), path)


def read_report(path) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON: {exc}") from exc
