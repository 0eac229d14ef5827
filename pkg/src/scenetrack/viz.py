"""Colored PLY export for labeled scans and composed models.

Colors are a pure function of the label value (golden-angle hue walk), so
the same instance keeps its color across timesteps and across runs.
"""
from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .model import STATIC_CLASS, TemporalModel, UNASSIGNED_INSTANCE

STATIC_GRAY = (128, 128, 128)
_GOLDEN = 0.6180339887498949

VIZ_MODES = ("instance", "semantic")


def label_color(label: int) -> tuple[int, int, int]:
    """Saturated, deterministic color for a positive label id."""
    if label <= 0:
        return STATIC_GRAY
    hue = (label * _GOLDEN) % 1.0
    # two lightness tiers keep near hues apart for consecutive ids
    value = 0.95 if label % 2 else 0.70
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, value)
    return (int(r * 255.0), int(g * 255.0), int(b * 255.0))


def colorize(cloud: PointCloud, mode: str = "instance") -> np.ndarray:
    """(N, 3) uint8 colors; static structure and unassigned points gray."""
    if mode not in VIZ_MODES:
        raise ValueError(f"unknown viz mode {mode!r}")
    if not cloud.has_labels:
        raise ValueError("labels required")
    if mode == "instance":
        labels = np.where(cloud.semantic_labels == STATIC_CLASS,
                          UNASSIGNED_INSTANCE, cloud.instance_labels)
    else:
        labels = cloud.semantic_labels
    colors = np.empty((len(cloud), 3), dtype=np.uint8)
    for value in np.unique(labels):
        colors[labels == value] = label_color(int(value))
    return colors


def write_colored_ply(path: str | Path, points: np.ndarray,
                      colors: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.uint8)
    if points.shape != (len(points), 3) or colors.shape != (len(points), 3):
        raise ValueError("points and colors must both be (N, 3)")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(points)}\n"
        "property double x\nproperty double y\nproperty double z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n")
    row = np.dtype([("xyz", "<f8", (3,)), ("rgb", "u1", (3,))])
    data = np.empty(len(points), dtype=row)
    data["xyz"] = points
    data["rgb"] = colors
    with open(path, "wb") as stream:
        stream.write(header.encode("ascii"))
        stream.write(data.tobytes())


def export_labeled(path: str | Path, cloud: PointCloud,
                   mode: str = "instance") -> None:
    """Labeled scan -> colored PLY."""
    write_colored_ply(path, cloud.points, colorize(cloud, mode))


def export_model(path: str | Path, model: TemporalModel,
                 timestep: int | None = None,
                 mode: str = "instance") -> int:
    """Fused object geometries posed by one arrangement -> colored PLY.

    Uses the latest arrangement unless a timestep is given. Returns the
    exported point count. Objects absent from that arrangement are left
    out, matching their absence from the scene.
    """
    if mode not in VIZ_MODES:
        raise ValueError(f"unknown viz mode {mode!r}")
    if not model.history:
        raise ValueError("model has no arrangements")
    if timestep is None:
        timestep = len(model.history) - 1
    if not 0 <= timestep < len(model.history):
        raise ValueError(f"no arrangement for timestep {timestep}")
    arrangement = model.history[timestep]
    chunks, colors = [], []
    for placed in arrangement.placements:
        obj = model.resolve(placed.uid)
        label = placed.uid if mode == "instance" else obj.semantic_class
        chunks.append(placed.pose.apply(obj.geometry.points))
        colors.append(np.tile(np.array(label_color(int(label)), np.uint8),
                              (len(obj.geometry), 1)))
    points = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    rgb = np.concatenate(colors) if colors else np.zeros((0, 3), np.uint8)
    write_colored_ply(path, points, rgb)
    return len(points)
