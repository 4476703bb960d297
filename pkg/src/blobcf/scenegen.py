"""Procedural toy road scenes with exact label and segmentation oracles.

A scene is a three-lane road seen schematically from above: a primary (ego)
lane flanked by two secondary lanes, with a painted marking on each lane
boundary, plus cars and barriers placed on the lanes. Everything is a pure
function of (seed, config).

Label rule table (fixed, documented here):
  forward : no object footprint intersects the primary lane strip
  stop    : always permitted
  left    : left marking not in {solid, double} AND left lane strip clear
  right   : right marking not in {solid, double} AND right lane strip clear
  right (biased variant): additionally requires that no *car* intersects the
  left lane strip; this is the dataset flag used to train a deliberately
  flawed decision model.

Object footprints are exact rotated rectangles; the image renderer rounds
their corners cosmetically. Segmentation categories partition every pixel:
background(0), primary_lane(1), secondary_lane(2), vehicle(3). Barriers
count as background in the mask (obstacles, neither lane nor vehicle).
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .config import ConfigError, SceneGenConfig

MARKINGS = ("none", "dashed", "solid", "double")
SIDES = ("left", "right")
CATEGORY_NAMES = ("background", "primary_lane", "secondary_lane", "vehicle")
BACKGROUND, PRIMARY_LANE, SECONDARY_LANE, VEHICLE = range(4)
LABEL_HEADS = ("forward", "stop", "left", "right")

ROAD_TOP = 0.1875          # normalized y above which everything is background
LANE_EDGES = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)   # left | primary | right strips

_BG_COLOR = np.array([0.32, 0.42, 0.30])
_LANE_COLORS = {PRIMARY_LANE: np.array([0.44, 0.44, 0.48]), SECONDARY_LANE: np.array([0.34, 0.34, 0.39])}
_WHITE = np.array([0.93, 0.93, 0.93])
_YELLOW = np.array([0.95, 0.82, 0.25])
_GLASS = np.array([0.13, 0.17, 0.26])
_BRAKE = np.array([1.0, 0.12, 0.10])
_BARRIER_A = np.array([0.90, 0.55, 0.15])
_BARRIER_B = np.array([0.85, 0.85, 0.82])


@dataclass
class SceneObject:
    category: str              # "car" | "barrier"
    cx: float
    cy: float
    sw: float                  # width as a fraction of image width
    sh: float                  # height as a fraction of image height
    rotation: float            # radians
    color: Tuple[float, float, float]
    brake_light: bool = False


@dataclass
class LaneMarking:
    marking: str
    side: str


@dataclass
class SceneSpec:
    objects: List[SceneObject]
    lanes: List[LaneMarking]
    rng_seed: int

    def marking(self, side: str) -> str:
        for lane in self.lanes:
            if lane.side == side:
                return lane.marking
        return "none"

    def to_dict(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "lanes": [{"marking": l.marking, "side": l.side} for l in self.lanes],
            "objects": [
                {
                    "category": o.category,
                    "cx": o.cx, "cy": o.cy, "sw": o.sw, "sh": o.sh,
                    "rotation": o.rotation, "color": list(o.color),
                    "brake_light": o.brake_light,
                }
                for o in self.objects
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        return SceneSpec(
            objects=[
                SceneObject(
                    category=o["category"], cx=o["cx"], cy=o["cy"], sw=o["sw"], sh=o["sh"],
                    rotation=o["rotation"], color=tuple(o["color"]), brake_light=o["brake_light"],
                )
                for o in d["objects"]
            ],
            lanes=[LaneMarking(l["marking"], l["side"]) for l in d["lanes"]],
            rng_seed=d["rng_seed"],
        )


@dataclass
class SceneLabels:
    forward: bool
    stop: bool
    left: bool
    right: bool

    def as_array(self) -> np.ndarray:
        return np.array([self.forward, self.stop, self.left, self.right], dtype=np.float32)

    def to_dict(self) -> dict:
        return {"forward": self.forward, "stop": self.stop, "left": self.left, "right": self.right}


def _lane_strip(index: int, height: int, width: int) -> Tuple[float, float, float, float]:
    """Pixel-space axis-aligned rect (x0, x1, y0, y1) of lane strip 0/1/2."""
    x0 = LANE_EDGES[index] * width
    x1 = LANE_EDGES[index + 1] * width
    return x0, x1, ROAD_TOP * height, float(height)


def _object_corners(obj: SceneObject, height: int, width: int) -> np.ndarray:
    """Corners of the exact rotated-rectangle footprint, in pixel coords."""
    cx, cy = obj.cx * width, obj.cy * height
    hw, hh = obj.sw * width / 2.0, obj.sh * height / 2.0
    c, s = np.cos(obj.rotation), np.sin(obj.rotation)
    local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def _sat_intersects(poly: np.ndarray, rect: Tuple[float, float, float, float]) -> bool:
    """Separating-axis test between a convex quad and an axis-aligned rect."""
    x0, x1, y0, y1 = rect
    rect_pts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    edges = np.vstack([poly - np.roll(poly, 1, axis=0), rect_pts - np.roll(rect_pts, 1, axis=0)])
    axes = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
    norms = np.linalg.norm(axes, axis=1)
    axes = axes[norms > 1e-12] / norms[norms > 1e-12, None]
    for ax in axes:
        pa = poly @ ax
        pb = rect_pts @ ax
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def object_overlaps_lane(obj: SceneObject, lane_index: int, height: int = 64, width: int = 128) -> bool:
    return _sat_intersects(_object_corners(obj, height, width), _lane_strip(lane_index, height, width))


def label_oracle(spec: SceneSpec, biased: bool = False) -> SceneLabels:
    """Rule-table labels; pure function of the spec geometry and markings."""
    lane_hit = [False, False, False]
    car_left = False
    for obj in spec.objects:
        for lane in range(3):
            if object_overlaps_lane(obj, lane):
                lane_hit[lane] = True
                if lane == 0 and obj.category == "car":
                    car_left = True
    blocked = ("solid", "double")
    right = spec.marking("right") not in blocked and not lane_hit[2]
    if biased:
        right = right and not car_left
    return SceneLabels(
        forward=not lane_hit[1],
        stop=True,
        left=spec.marking("left") not in blocked and not lane_hit[0],
        right=right,
    )


def _local_coords(obj: SceneObject, xs: np.ndarray, ys: np.ndarray, height: int, width: int):
    """Rotate pixel coords into the object frame; returns (x', y', hw, hh)."""
    cx, cy = obj.cx * width, obj.cy * height
    hw, hh = obj.sw * width / 2.0, obj.sh * height / 2.0
    dx, dy = xs - cx, ys - cy
    c, s = np.cos(obj.rotation), np.sin(obj.rotation)
    return dx * c + dy * s, -dx * s + dy * c, hw, hh


def seg_oracle(spec: SceneSpec, dims: Tuple[int, int]) -> np.ndarray:
    """Category grid (H, W) uint8; vehicles occlude lane pixels."""
    height, width = dims
    if height <= 0 or width <= 0:
        raise ConfigError("mask dims must be positive")
    ys, xs = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    mask = np.full((height, width), BACKGROUND, dtype=np.uint8)
    road = ys >= ROAD_TOP * height
    lane_idx = np.minimum((xs / width * 3).astype(int), 2)
    mask[road & (lane_idx == 1)] = PRIMARY_LANE
    mask[road & (lane_idx != 1)] = SECONDARY_LANE
    for obj in spec.objects:
        lx, ly, hw, hh = _local_coords(obj, xs, ys, height, width)
        inside = (np.abs(lx) <= hw) & (np.abs(ly) <= hh)
        mask[inside] = VEHICLE if obj.category == "car" else BACKGROUND
    return mask


def _draw_markings(img: np.ndarray, spec: SceneSpec, xs, ys, height, width):
    line_w = 0.011 * width
    for lane in spec.lanes:
        if lane.marking == "none":
            continue
        bx = LANE_EDGES[1 if lane.side == "left" else 2] * width
        on_road = ys >= ROAD_TOP * height
        if lane.marking == "dashed":
            dash = ((ys / height) % 0.16) < 0.09
            sel = (np.abs(xs - bx) <= line_w) & on_road & dash
            img[sel] = _WHITE
        elif lane.marking == "solid":
            sel = (np.abs(xs - bx) <= line_w) & on_road
            img[sel] = _YELLOW
        else:  # double
            off = 0.014 * width
            sel = ((np.abs(xs - (bx - off)) <= line_w * 0.8) | (np.abs(xs - (bx + off)) <= line_w * 0.8)) & on_road
            img[sel] = _YELLOW


def _draw_object(img: np.ndarray, obj: SceneObject, xs, ys, height, width):
    lx, ly, hw, hh = _local_coords(obj, xs, ys, height, width)
    body = (np.abs(lx) / hw) ** 4 + (np.abs(ly) / hh) ** 4 <= 1.0
    if obj.category == "barrier":
        stripes = (((lx + ly) / max(hw, 1.0)) % 0.8) < 0.4
        img[body & stripes] = _BARRIER_A
        img[body & ~stripes] = _BARRIER_B
        return
    img[body] = np.asarray(obj.color)
    glass = body & (ly >= -0.55 * hh) & (ly <= -0.15 * hh) & (np.abs(lx) <= 0.55 * hw)
    img[glass] = _GLASS
    if obj.brake_light:
        lights = body & (ly >= 0.5 * hh) & (np.abs(lx) >= 0.25 * hw) & (np.abs(lx) <= 0.85 * hw)
        img[lights] = _BRAKE


def render_scene(spec: SceneSpec, config: SceneGenConfig) -> np.ndarray:
    """Deterministic raster (H, W, 3) float32 in [0, 1]."""
    ss = config.supersample
    height, width = config.height * ss, config.width * ss
    ys, xs = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    img = np.empty((height, width, 3), dtype=np.float64)
    img[:] = _BG_COLOR
    road = ys >= ROAD_TOP * height
    lane_idx = np.minimum((xs / width * 3).astype(int), 2)
    img[road & (lane_idx == 1)] = _LANE_COLORS[PRIMARY_LANE]
    img[road & (lane_idx != 1)] = _LANE_COLORS[SECONDARY_LANE]
    _draw_markings(img, spec, xs, ys, height, width)
    for obj in spec.objects:
        _draw_object(img, obj, xs, ys, height, width)
    if ss > 1:
        img = img.reshape(config.height, ss, config.width, ss, 3).mean(axis=(1, 3))
    return img.astype(np.float32)


def _sample_object(rng: np.random.Generator, lane: int | None, config: SceneGenConfig) -> SceneObject:
    category = "barrier" if rng.random() < config.p_barrier else "car"
    if category == "car":
        sw = rng.uniform(0.085, 0.125)
        sh = rng.uniform(0.20, 0.30)
    else:
        sw = rng.uniform(0.10, 0.18)
        sh = rng.uniform(0.08, 0.13)
    if lane is None:
        cx = rng.uniform(sw / 2 + 0.02, 1 - sw / 2 - 0.02)
    else:
        x0, x1 = LANE_EDGES[lane], LANE_EDGES[lane + 1]
        m = sw / 2 + 0.015
        cx = rng.uniform(x0 + m, x1 - m)
    cy = rng.uniform(ROAD_TOP + sh / 2 + 0.03, 1 - sh / 2 - 0.03)
    rotation = float(np.clip(rng.normal(0.0, 0.05), -0.15, 0.15))
    hue = rng.uniform(0, 1)
    color = colorsys.hsv_to_rgb(hue, rng.uniform(0.65, 1.0), rng.uniform(0.55, 0.95))
    brake = bool(rng.random() < config.p_brake_light) if category == "car" else False
    return SceneObject(category, float(cx), float(cy), float(sw), float(sh), rotation, tuple(float(c) for c in color), brake)


def sample_scene_spec(seed: int, config: SceneGenConfig) -> SceneSpec:
    rng = np.random.default_rng(seed)
    markings = [MARKINGS[rng.choice(4, p=config.marking_probs)] for _ in SIDES]
    objects: List[SceneObject] = []
    for lane in (0, 1, 2):
        if rng.random() < config.p_occupy:
            objects.append(_sample_object(rng, lane, config))
            if rng.random() < config.p_second_object:
                objects.append(_sample_object(rng, lane, config))
    if rng.random() < config.p_loose_object:
        objects.append(_sample_object(rng, None, config))
    objects = objects[: config.max_objects]
    return SceneSpec(
        objects=objects,
        lanes=[LaneMarking(markings[i], side) for i, side in enumerate(SIDES)],
        rng_seed=seed,
    )


def generate_scene(seed: int, config: SceneGenConfig):
    """Returns (SceneSpec, image (H,W,3) float32, SegMask (H,W) uint8, SceneLabels)."""
    config.validate()
    spec = sample_scene_spec(seed, config)
    image = render_scene(spec, config)
    mask = seg_oracle(spec, (config.height, config.width))
    labels = label_oracle(spec)
    return spec, image, mask, labels


# ---------------------------------------------------------------------------
# dataset export / load


def export_dataset(out_dir, seeds, config: SceneGenConfig, write_images: bool = True) -> Path:
    """Writes images plus a scenes.jsonl with one record per scene."""
    from PIL import Image

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for seed in seeds:
        spec, image, _, labels = generate_scene(seed, config)
        rel = f"images/scene_{seed:06d}.png"
        if write_images:
            Image.fromarray((image * 255).round().astype(np.uint8)).save(out / rel)
        records.append(
            {
                "seed": seed,
                "image": rel,
                "spec": spec.to_dict(),
                "labels": labels.to_dict(),
                "right_biased": label_oracle(spec, biased=True).right,
            }
        )
    with open(out / "scenes.jsonl", "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    with open(out / "config.json", "w") as f:
        json.dump(
            {k: getattr(config, k) for k in ("height", "width", "max_objects", "bias_flag")},
            f, indent=1,
        )
    return out


@dataclass
class SceneDataset:
    images: np.ndarray          # (N, H, W, 3) float32
    labels: np.ndarray          # (N, 4) float32, rule-table labels
    labels_biased: np.ndarray   # (N, 4) float32, biased `right` head
    masks: np.ndarray           # (N, H, W) uint8
    seeds: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.images)


def load_dataset(path) -> SceneDataset:
    """Reads scenes.jsonl and rebuilds images/masks from the stored specs."""
    path = Path(path)
    with open(path / "config.json") as f:
        meta = json.load(f)
    config = SceneGenConfig(height=meta["height"], width=meta["width"], max_objects=meta["max_objects"])
    images, labels, biased, masks, seeds = [], [], [], [], []
    with open(path / "scenes.jsonl") as f:
        for line in f:
            rec = json.loads(line)
            spec = SceneSpec.from_dict(rec["spec"])
            images.append(render_scene(spec, config))
            masks.append(seg_oracle(spec, (config.height, config.width)))
            lab = rec["labels"]
            labels.append([lab["forward"], lab["stop"], lab["left"], lab["right"]])
            biased.append([lab["forward"], lab["stop"], lab["left"], rec["right_biased"]])
            seeds.append(rec["seed"])
    return SceneDataset(
        images=np.stack(images).astype(np.float32),
        labels=np.array(labels, dtype=np.float32),
        labels_biased=np.array(biased, dtype=np.float32),
        masks=np.stack(masks),
        seeds=seeds,
    )


def build_dataset(seeds, config: SceneGenConfig) -> SceneDataset:
    """In-memory dataset (used by tests and training without an export dir)."""
    images, labels, biased, masks = [], [], [], []
    for seed in seeds:
        spec, image, mask, lab = generate_scene(seed, config)
        images.append(image)
        masks.append(mask)
        labels.append(lab.as_array())
        biased.append(label_oracle(spec, biased=True).as_array())
    return SceneDataset(
        images=np.stack(images),
        labels=np.stack(labels),
        labels_biased=np.stack(biased),
        masks=np.stack(masks),
        seeds=list(seeds),
    )
