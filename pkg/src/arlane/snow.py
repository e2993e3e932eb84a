"""Synthetic forward-view rasters with lane markings, snow speckle and marker dropout.

The viewport is a top-down window in the vehicle frame: rows cover forward
distance ``[0, depth]`` (row 0 is farthest), columns cover lateral offset
``[+span/2, -span/2]`` (column 0 is the vehicle's left). Pixel values are
quantised to multiples of 1/255 so frames round-trip through 8-bit storage
unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .track import Route


@dataclass
class ViewConfig:
    width: int = 64
    height: int = 64
    channels: int = 1
    depth: float = 20.0  # forward extent, m
    span: float = 10.0  # lateral extent, m
    marker_width: float = 0.3  # m
    max_flake_fraction: float = 0.12  # speckles per pixel at snow_density = 1
    snow_contrast_loss: float = 0.4  # marker dimming at snow_density = 1


@dataclass(frozen=True)
class OcclusionConfig:
    dropped_markers: frozenset = frozenset()
    gaps: tuple = ()  # ((s_start, s_end), ...) in route arc length
    snow_density: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.snow_density <= 1.0:
            raise ValueError(f"snow_density must lie in [0, 1], got {self.snow_density}")
        bad = set(self.dropped_markers) - {"left", "right"}
        if bad:
            raise ValueError(f"unknown marker side(s): {sorted(bad)}")

    def to_dict(self) -> dict:
        return {
            "dropped_markers": sorted(self.dropped_markers),
            "gaps": [list(g) for g in self.gaps],
            "snow_density": self.snow_density,
            "seed": self.seed,
        }


@dataclass
class OcclusionSpec:
    """Episode-level sampling probabilities for occlusion."""

    p_drop_left: float = 0.15
    p_drop_right: float = 0.15
    max_gaps: int = 3
    gap_length: tuple[float, float] = (5.0, 30.0)
    snow_density: tuple[float, float] = (0.2, 0.8)
    route_length: float = 300.0


NO_OCCLUSION = OcclusionConfig()


def sample_occlusion(seed: int, spec: OcclusionSpec | None = None) -> OcclusionConfig:
    spec = spec or OcclusionSpec()
    rng = np.random.default_rng([seed, 31337])
    dropped = set()
    if rng.random() < spec.p_drop_left:
        dropped.add("left")
    if rng.random() < spec.p_drop_right:
        dropped.add("right")
    n_gaps = int(rng.integers(0, spec.max_gaps + 1))
    gaps = []
    for _ in range(n_gaps):
        length = rng.uniform(*spec.gap_length)
        start = rng.uniform(0.0, max(spec.route_length - length, 0.0))
        gaps.append((float(start), float(start + length)))
    density = float(rng.uniform(*spec.snow_density))
    return OcclusionConfig(frozenset(dropped), tuple(sorted(gaps)), density, int(seed))


def _pixel_grid(view: ViewConfig):
    dx = view.depth / view.height
    dy = view.span / view.width
    xs = (view.height - 1 - np.arange(view.height) + 0.5) * dx  # forward distance per row
    ys = view.span / 2.0 - (np.arange(view.width) + 0.5) * dy  # lateral offset per column
    return xs, ys, dy


def boundary_polylines(route: Route, x: float, y: float, yaw: float, s0: float, view: ViewConfig,
                       step: float = 0.25):
    """Left/right lane boundaries as (forward, lateral, s) samples in the vehicle frame."""
    ss = np.arange(max(s0 - 3.0, 0.0), min(s0 + view.depth * 1.5 + 3.0, route.s_total) + step, step)
    ss = np.minimum(ss, route.s_total)
    poses = route.poses(ss)
    half = route.lane_width / 2.0
    c, s = math.cos(yaw), math.sin(yaw)
    out = {}
    for side, sign in (("left", 1.0), ("right", -1.0)):
        bx = poses[:, 0] - sign * half * np.sin(poses[:, 2]) - x
        by = poses[:, 1] + sign * half * np.cos(poses[:, 2]) - y
        out[side] = np.stack([c * bx + s * by, -s * bx + c * by, ss], axis=1)
    return out


def render(state, route: Route, occ: OcclusionConfig = NO_OCCLUSION, frame: int = 0,
           s_hint: float | None = None, view: ViewConfig | None = None) -> np.ndarray:
    """Rasterise the lane ahead of ``state``; returns (channels, H, W) with values in [0, 1]."""
    view = view or ViewConfig()
    xs, ys, dy = _pixel_grid(view)
    s0, _ = route.project(state.x, state.y, s_hint)
    img = np.zeros((view.height, view.width))
    hw = view.marker_width / 2.0
    gain = 1.0 - view.snow_contrast_loss * occ.snow_density
    lines = boundary_polylines(route, state.x, state.y, state.yaw, s0, view)
    for side, pts in lines.items():
        if side in occ.dropped_markers:
            continue
        fwd, lat, sarc = pts[:, 0], pts[:, 1], pts[:, 2]
        # boundary is a graph y(x) while heading error < 90 deg; keep the monotone part
        keep = np.concatenate([[True], np.diff(fwd) > 1e-9])
        fwd, lat, sarc = fwd[keep], lat[keep], sarc[keep]
        if len(fwd) < 2:
            continue
        valid = (xs >= fwd[0]) & (xs <= fwd[-1])
        yb = np.interp(xs, fwd, lat)
        sb = np.interp(xs, fwd, sarc)
        for g0, g1 in occ.gaps:
            valid &= ~((sb >= g0) & (sb <= g1))
        # coverage of each pixel column by the marker strip [yb - hw, yb + hw]
        lo = np.maximum(ys[None, :] - dy / 2.0, yb[:, None] - hw)
        hi = np.minimum(ys[None, :] + dy / 2.0, yb[:, None] + hw)
        cov = np.clip(hi - lo, 0.0, None) / dy
        img = np.maximum(img, np.clip(cov, 0.0, 1.0) * valid[:, None] * gain)

    if occ.snow_density > 0.0:
        rng = np.random.default_rng([occ.seed, frame, 2718])
        n_max = int(round(view.max_flake_fraction * view.width * view.height))
        rows = rng.integers(0, view.height, n_max)
        cols = rng.integers(0, view.width, n_max)
        vals = rng.uniform(0.6, 1.0, n_max)
        n = int(round(occ.snow_density * n_max))
        np.maximum.at(img, (rows[:n], cols[:n]), vals[:n])

    img = np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
    return np.repeat(img[None], view.channels, axis=0)


def speckle_count(occ: OcclusionConfig, view: ViewConfig | None = None) -> int:
    view = view or ViewConfig()
    return int(round(occ.snow_density * round(view.max_flake_fraction * view.width * view.height)))


# --------------------------------------------------------------------------
# PGM + JSON datasets
# --------------------------------------------------------------------------


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    a = np.asarray(img)
    if a.ndim == 3:
        a = a[0]
    data = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pos += 1
    data = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
    return data.astype(np.float64) / maxval


def write_labeled_frame(out_dir: Path, index: int, img: np.ndarray, label: dict) -> tuple[Path, Path]:
    stem = out_dir / f"frame_{index:05d}"
    write_pgm(stem.with_suffix(".pgm"), img)
    stem.with_suffix(".json").write_text(json.dumps(label, sort_keys=True, indent=1))
    return stem.with_suffix(".pgm"), stem.with_suffix(".json")
