"""PLY reading and writing for labeled point clouds.

Writes binary little-endian by default (double coordinates and normals,
int32 `semantic` and `instance` labels). The reader is deliberately more
tolerant: it accepts ascii or binary little-endian files, any common scalar
type, and skips unknown per-vertex properties. List properties and
big-endian files are rejected.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .cloud import PointCloud


class PlyError(Exception):
    """Malformed or unsupported PLY content."""


_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_header(stream: io.BufferedReader) -> tuple[str, int, list[tuple[str, str]]]:
    """Returns (format, vertex count, [(property name, numpy dtype), ...])."""
    magic = stream.readline().strip()
    if magic != b"ply":
        raise PlyError("not a PLY file")
    fmt = None
    n_vertices = None
    properties: list[tuple[str, str]] = []
    in_vertex = False
    while True:
        raw = stream.readline()
        if not raw:
            raise PlyError("unterminated header")
        line = raw.decode("ascii", errors="replace").strip()
        if line == "end_header":
            break
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] == "binary_big_endian":
                raise PlyError("big-endian PLY is not supported")
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"unknown PLY format {parts[1]!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if parts[1] == "vertex":
                n_vertices = int(parts[2])
                in_vertex = True
            else:
                if in_vertex and properties:
                    in_vertex = False  # vertex block done; ignore the rest
                elif int(parts[2]) != 0:
                    raise PlyError(
                        f"element {parts[1]!r} before vertex data is not supported")
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise PlyError("list properties are not supported")
            if parts[1] not in _SCALAR_TYPES:
                raise PlyError(f"unknown property type {parts[1]!r}")
            properties.append((parts[2], _SCALAR_TYPES[parts[1]]))
    if fmt is None:
        raise PlyError("missing format line")
    if n_vertices is None:
        raise PlyError("missing vertex element")
    return fmt, n_vertices, properties


def read_ply(path: str | Path) -> PointCloud:
    """Load a point cloud; normals are renormalized, labels cast to int32."""
    with open(path, "rb") as stream:
        fmt, n, properties = _parse_header(stream)
        names = [name for name, _ in properties]
        if any(names.count(name) > 1 for name in names):
            raise PlyError("duplicate property name")
        dtype = np.dtype([(name, "<" + kind) for name, kind in properties])
        if n == 0:
            data = np.zeros(0, dtype=dtype)
        elif fmt == "binary_little_endian":
            data = np.fromfile(stream, dtype=dtype, count=n)
        else:
            text = io.StringIO(stream.read().decode("ascii", errors="replace"))
            raw = np.loadtxt(text, dtype=np.float64, max_rows=n,
                             ndmin=2, usecols=range(len(properties)))
            if raw.shape[0] < n:
                raise PlyError("truncated vertex data")
            data = np.zeros(n, dtype=dtype)
            for col, (name, _) in enumerate(properties):
                data[name] = raw[:, col]
        if len(data) < n:
            raise PlyError("truncated vertex data")

    for coord in ("x", "y", "z"):
        if coord not in names:
            raise PlyError(f"missing vertex coordinate {coord!r}")
    points = np.stack([data["x"], data["y"], data["z"]], axis=1).astype(np.float64)

    normals = None
    if all(name in names for name in ("nx", "ny", "nz")):
        normals = np.stack([data["nx"], data["ny"], data["nz"]],
                           axis=1).astype(np.float64)
        lengths = np.linalg.norm(normals, axis=1)
        if n and not (lengths > 1e-12).all():
            raise PlyError("zero-length normal")
        if n:
            normals /= lengths[:, None]

    semantic = data["semantic"].astype(np.int32) if "semantic" in names else None
    instance = data["instance"].astype(np.int32) if "instance" in names else None
    if (semantic is None) != (instance is None):
        missing = "instance" if instance is None else "semantic"
        raise PlyError(f"labels require both properties; missing {missing!r}")

    try:
        return PointCloud(points=points, normals=normals,
                          semantic_labels=semantic, instance_labels=instance)
    except ValueError as exc:
        raise PlyError(str(exc)) from exc


def write_ply(path: str | Path, cloud: PointCloud, binary: bool = True) -> None:
    """Write coordinates plus whichever of normals/labels the cloud carries."""
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {len(cloud)}"]
    fields: list[tuple[str, str, np.ndarray]] = [
        ("x", "f8", cloud.points[:, 0]),
        ("y", "f8", cloud.points[:, 1]),
        ("z", "f8", cloud.points[:, 2])]
    if cloud.has_normals:
        fields += [("nx", "f8", cloud.normals[:, 0]),
                   ("ny", "f8", cloud.normals[:, 1]),
                   ("nz", "f8", cloud.normals[:, 2])]
    if cloud.has_labels:
        fields += [("semantic", "i4", cloud.semantic_labels),
                   ("instance", "i4", cloud.instance_labels)]
    ply_name = {"f8": "double", "i4": "int"}
    header += [f"property {ply_name[kind]} {name}" for name, kind, _ in fields]
    header.append("end_header")

    data = np.zeros(len(cloud), dtype=[(name, "<" + kind) for name, kind, _ in fields])
    for name, _, column in fields:
        data[name] = column

    with open(path, "wb") as stream:
        stream.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            data.tofile(stream)
        else:
            formats = ["%.17g" if kind == "f8" else "%d" for _, kind, _ in fields]
            np.savetxt(stream, np.stack([data[name].astype(np.float64)
                                         for name, _, _ in fields], axis=1),
                       fmt=formats)
