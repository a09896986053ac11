"""On-disk formats: point clouds, depth/IR rasters, flow fields, poses, scenes.

All rasters share one layout: a one-line ASCII header followed by row-major
little-endian float32 payload. Point clouds and poses are plain ASCII.
Field descriptions are an indented text tree, one node per line.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .fields import Box, Cylinder, FieldNode, ProximityField, Sphere, Transformed, Union
from .geometry import PointCloud, RigidPose
from .shear import FlowField
from .tactile import DepthImage, IrImage, PinholeModel

_FLOAT_FMT = "%.10e"


def write_point_cloud(path, cloud: PointCloud) -> None:
    """BPC1: `BPC1 <count> <frame>` header, then one `x y z` line per point."""
    path = Path(path)
    with path.open("w") as f:
        f.write(f"BPC1 {len(cloud)} {cloud.frame}\n")
        for x, y, z in cloud.points:
            f.write(f"{x:.10e} {y:.10e} {z:.10e}\n")


def read_point_cloud(path) -> PointCloud:
    path = Path(path)
    with path.open("r") as f:
        header = f.readline().split()
        if len(header) != 3 or header[0] != "BPC1":
            raise ValueError(f"{path}: not a BPC1 point-cloud file")
        count, frame = int(header[1]), header[2]
        pts = np.loadtxt(f, dtype=float, ndmin=2) if count else np.zeros((0, 3))
    if pts.shape != (count, 3):
        raise ValueError(f"{path}: expected {count} points, found {pts.shape[0]}")
    return PointCloud(pts, frame=frame)


def _write_raster(path, magic: str, arr: np.ndarray) -> None:
    h, w = arr.shape[:2]
    with Path(path).open("wb") as f:
        f.write(f"{magic} {w} {h}\n".encode("ascii"))
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_raster(path, magic: str, channels: int) -> np.ndarray:
    path = Path(path)
    with path.open("rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 3 or header[0] != magic:
            raise ValueError(f"{path}: not a {magic} file")
        w, h = int(header[1]), int(header[2])
        payload = np.frombuffer(f.read(), dtype="<f4")
    expected = w * h * channels
    if payload.size != expected:
        raise ValueError(f"{path}: payload has {payload.size} floats, expected {expected}")
    shape = (h, w) if channels == 1 else (h, w, channels)
    return payload.reshape(shape).astype(float)


def write_depth_image(path, img: DepthImage) -> None:
    """BDI1: meters, 0.0 marks invalid pixels."""
    _write_raster(path, "BDI1", img.data)


def read_depth_image(path, intrinsics: PinholeModel) -> DepthImage:
    return DepthImage(_read_raster(path, "BDI1", 1), intrinsics)


def write_ir_image(path, img: IrImage) -> None:
    """BIR1: normalized intensity in [0, 1]."""
    _write_raster(path, "BIR1", img.data)


def read_ir_image(path) -> IrImage:
    return IrImage(_read_raster(path, "BIR1", 1))


def write_flow_field(path, flow: FlowField) -> None:
    """BFF1: interleaved (vx, vy) pixel displacements."""
    _write_raster(path, "BFF1", flow.vectors)


def read_flow_field(path) -> FlowField:
    return FlowField(_read_raster(path, "BFF1", 2))


def write_pose(path, pose: RigidPose) -> None:
    """Single line `tx ty tz qw qx qy qz`."""
    vec = pose.to_vector()
    Path(path).write_text(" ".join(f"{v:.10e}" for v in vec) + "\n")


def read_pose(path) -> RigidPose:
    values = [float(v) for v in Path(path).read_text().split()]
    if len(values) != 7:
        raise ValueError(f"{path}: pose file must hold exactly 7 numbers")
    return RigidPose.from_vector(np.array(values))


# --- field description files -------------------------------------------------
#
# One node per line, indentation (spaces) encodes tree depth:
#   cylinder r=<m> h=<m>
#   sphere r=<m>
#   box hx=<m> hy=<m> hz=<m>
#   transform tx ty tz qw qx qy qz      (one child)
#   union                               (one or more children)

_KV_RE = re.compile(r"([a-z]+)=([-+0-9.eE]+)")


def _parse_kv(line: str, keys: tuple[str, ...], where: str) -> dict:
    found = dict(_KV_RE.findall(line))
    missing = [k for k in keys if k not in found]
    if missing:
        raise ValueError(f"{where}: missing parameter(s) {missing}")
    return {k: float(v) for k, v in found.items()}


def parse_field_description(text: str) -> ProximityField:
    """Parse the indented field-tree format into a ProximityField."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        depth = len(raw) - len(raw.lstrip(" "))
        entries.append((depth, raw.strip(), lineno))
    if not entries:
        raise ValueError("field description is empty")

    def build(index: int, depth: int):
        d, line, lineno = entries[index]
        where = f"line {lineno}"
        if d != depth:
            raise ValueError(f"{where}: unexpected indentation")
        word = line.split()[0]
        if word == "cylinder":
            kv = _parse_kv(line, ("r", "h"), where)
            return Cylinder(kv["r"], kv["h"]), index + 1
        if word == "sphere":
            kv = _parse_kv(line, ("r",), where)
            return Sphere(kv["r"]), index + 1
        if word == "box":
            kv = _parse_kv(line, ("hx", "hy", "hz"), where)
            return Box((kv["hx"], kv["hy"], kv["hz"])), index + 1
        if word == "transform":
            parts = line.split()
            if len(parts) != 8:
                raise ValueError(f"{where}: transform needs 7 numbers")
            vec = np.array([float(v) for v in parts[1:]])
            child, nxt = build(index + 1, depth + 1)
            return Transformed(RigidPose.from_vector(vec), child), nxt
        if word == "union":
            children = []
            nxt = index + 1
            while nxt < len(entries) and entries[nxt][0] > depth:
                child, nxt = build(nxt, depth + 1)
                children.append(child)
            if not children:
                raise ValueError(f"{where}: union has no children")
            return Union(tuple(children)), nxt
        raise ValueError(f"{where}: unknown node type {word!r}")

    root, nxt = build(0, entries[0][0])
    if nxt != len(entries):
        raise ValueError(f"line {entries[nxt][2]}: trailing nodes outside the root")
    return ProximityField(root)


def read_field_description(path) -> ProximityField:
    return parse_field_description(Path(path).read_text())


def format_field_description(field: ProximityField) -> str:
    lines: list[str] = []

    def emit(node: FieldNode, depth: int):
        pad = " " * depth
        if isinstance(node, Cylinder):
            lines.append(f"{pad}cylinder r={node.radius:.10g} h={node.height:.10g}")
        elif isinstance(node, Sphere):
            lines.append(f"{pad}sphere r={node.radius:.10g}")
        elif isinstance(node, Box):
            hx, hy, hz = node.half_extents
            lines.append(f"{pad}box hx={hx:.10g} hy={hy:.10g} hz={hz:.10g}")
        elif isinstance(node, Transformed):
            vec = " ".join(f"{v:.10g}" for v in node.pose.to_vector())
            lines.append(f"{pad}transform {vec}")
            emit(node.child, depth + 1)
        elif isinstance(node, Union):
            lines.append(f"{pad}union")
            for child in node.children:
                emit(child, depth + 1)
        else:
            raise TypeError(f"unknown field node {type(node)}")

    emit(field.root, 0)
    return "\n".join(lines) + "\n"


# --- scene description files --------------------------------------------------


def parse_key_values(text: str) -> dict:
    """Parse `key = value` lines; blank lines and # comments are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_scene_description(path) -> dict:
    """Scene file: field path, object pose, width, noise, seed, pattern knobs."""
    path = Path(path)
    kv = parse_key_values(path.read_text())
    if "field" not in kv:
        raise ValueError(f"{path}: scene must name a field file")
    scene = {
        "field_path": (path.parent / kv["field"]).resolve(),
        "object_pose": RigidPose.from_vector(
            np.array([float(v) for v in kv.get("object_pose", "0 0 0 1 0 0 0").split()])
        ),
        "gripper_width": float(kv.get("gripper_width", "0.07")),
        "noise_sigma": float(kv.get("noise_sigma", "0.0")),
        "seed": int(kv.get("seed", "0")),
        "pattern_density": float(kv.get("pattern_density", "0.15")),
        "pattern_min_diameter": float(kv.get("pattern_min_diameter", "0.6")),
        "pattern_max_diameter": float(kv.get("pattern_max_diameter", "1.2")),
        "pattern_randomness": float(kv.get("pattern_randomness", "1.0")),
    }
    return scene
