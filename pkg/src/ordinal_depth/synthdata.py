"""Deterministic synthetic driving-like scenes.

Camera frame: X right, Y down, Z forward; the camera sits ``camera_height``
metres above a flat ground plane (Y = camera_height) and looks along +Z.
Pixel (u, v) has its centre at (u + 0.5, v + 0.5) and views the ray
``((u + 0.5 - cx) / f, (v + 0.5 - cy) / f, 1)``, so a hit at ray parameter t
has z-depth exactly t.  A ground pixel below the horizon row ``cy`` thus has
depth ``f * camera_height / (v + 0.5 - cy)``.

Objects are axis-aligned boxes standing on the ground.  Each pixel takes the
nearest surface (z-buffer); rays that hit nothing within ``ground_extent``
are sky, with invalid depth.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ShapeError
from .tensorcore import Rng

CLASS_NAMES = ("road", "sky", "car", "truck", "pedestrian", "building")
GROUND, SKY = 0, 1
OBJECT_CLASSES = (2, 3, 4, 5)
# class -> category (flat, sky, vehicle, human, construction)
CATEGORY_MAP = (0, 1, 2, 2, 3, 4)
CATEGORY_NAMES = ("flat", "sky", "vehicle", "human", "construction")

PALETTE = np.array([
    [0.45, 0.42, 0.40],   # road
    [0.55, 0.70, 0.95],   # sky
    [0.80, 0.15, 0.12],   # car
    [0.20, 0.35, 0.75],   # truck
    [0.95, 0.80, 0.30],   # pedestrian
    [0.60, 0.55, 0.45],   # building
])

# (width, height, length) in metres and near-face depth range per class
_CLASS_GEOMETRY = {
    2: ((1.8, 1.5, 4.0), (4.0, 40.0)),
    3: ((2.5, 3.2, 7.0), (8.0, 50.0)),
    4: ((0.6, 1.8, 0.6), (3.0, 25.0)),
    5: ((12.0, 10.0, 10.0), (20.0, 50.0)),
}

# 16-bit millimetre depth files saturate here
MAX_FILE_DEPTH = 65.535


@dataclass(frozen=True)
class Box:
    x: float          # lateral centre (m)
    z: float          # near-face depth (m)
    width: float
    height: float
    length: float
    cls: int
    albedo: tuple = (0.5, 0.5, 0.5)


@dataclass(frozen=True)
class SceneSpec:
    height: int = 40
    width: int = 56
    focal: float = 40.0
    horizon_frac: float = 0.3
    camera_height: float = 1.65
    ground_extent: float = 65.0
    objects: tuple = ()
    light_dir: tuple = (0.3, -0.8, -0.5)  # towards the light
    fog_distance: float = 60.0
    noise: float = 0.02
    seed: int = 0

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height * self.horizon_frac

    def validate(self):
        if not self.focal > 0:
            raise ArgumentError(f"focal length must be positive, got {self.focal}")
        if self.height < 1 or self.width < 1:
            raise ArgumentError("image extents must be positive")
        if not self.camera_height > 0 or not self.ground_extent > 0:
            raise ArgumentError("camera height and ground extent must be positive")
        for b in self.objects:
            if not (b.z > 0 and b.width > 0 and b.height > 0 and b.length > 0):
                raise ArgumentError(f"degenerate box {b}")
            if b.cls in (GROUND, SKY) or not 0 <= b.cls < len(CLASS_NAMES):
                raise ArgumentError(f"box class {b.cls} is not an object class")

    def digest(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


@dataclass
class SampleBundle:
    image: np.ndarray          # (3, H, W) in [0, 1]
    depth: np.ndarray          # (H, W) metres, 0 where invalid
    valid: np.ndarray          # (H, W) dense validity
    sparse_mask: np.ndarray    # (H, W) LIDAR-like subset of ``valid``
    labels: np.ndarray         # (H, W) uint8 class ids
    meta: dict = field(default_factory=dict)   # str -> str

    @property
    def shape(self):
        return self.depth.shape

    def equals(self, other: SampleBundle) -> bool:
        return (np.array_equal(self.image, other.image) and np.array_equal(self.depth, other.depth)
                and np.array_equal(self.valid, other.valid)
                and np.array_equal(self.sparse_mask, other.sparse_mask)
                and np.array_equal(self.labels, other.labels) and self.meta == other.meta)


# ------------------------------------------------------------------ render

def _rays(spec: SceneSpec):
    u = (np.arange(spec.width) + 0.5 - spec.cx) / spec.focal
    v = (np.arange(spec.height) + 0.5 - spec.cy) / spec.focal
    dx = np.broadcast_to(u[None, :], (spec.height, spec.width))
    dy = np.broadcast_to(v[:, None], (spec.height, spec.width))
    return dx, dy


def _box_hit(box: Box, dx, dy, cam_h):
    """Ray parameter and outward normal index of the entry face (inf = miss)."""
    lo = np.array([box.x - box.width / 2, cam_h - box.height, box.z])
    hi = np.array([box.x + box.width / 2, cam_h, box.z + box.length])
    dirs = (dx, dy, np.ones_like(dx))
    t_enter = np.full(dx.shape, -np.inf)
    t_exit = np.full(dx.shape, np.inf)
    axis = np.zeros(dx.shape, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k, d in enumerate(dirs):
            t1 = lo[k] / d
            t2 = hi[k] / d
            near = np.where(d != 0, np.minimum(t1, t2), np.where((lo[k] <= 0) & (0 <= hi[k]), -np.inf, np.inf))
            far = np.where(d != 0, np.maximum(t1, t2), np.where((lo[k] <= 0) & (0 <= hi[k]), np.inf, -np.inf))
            axis = np.where(near > t_enter, k, axis)
            t_enter = np.maximum(t_enter, near)
            t_exit = np.minimum(t_exit, far)
    hit = (t_enter <= t_exit) & (t_enter > 0)
    return np.where(hit, t_enter, np.inf), axis


def _shade(albedo, normal_dot_light, depth, spec: SceneSpec):
    lambert = 0.35 + 0.65 * np.clip(normal_dot_light, 0.0, 1.0)
    fog = np.exp(-depth / spec.fog_distance)
    haze = PALETTE[SKY][:, None, None]
    return albedo * lambert * fog + haze * (1.0 - fog)


def render(spec: SceneSpec) -> SampleBundle:
    """Rasterise ground, boxes and sky into image, depth and labels."""
    spec.validate()
    h, w = spec.height, spec.width
    dx, dy = _rays(spec)
    with np.errstate(divide="ignore"):
        t_ground = np.where(dy > 0, spec.camera_height / np.where(dy > 0, dy, 1.0), np.inf)
    t_ground = np.where(t_ground <= spec.ground_extent, t_ground, np.inf)

    depth = t_ground.copy()
    labels = np.where(np.isfinite(depth), GROUND, SKY).astype(np.uint8)
    light = np.asarray(spec.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    # ground normal is -Y (up)
    ndotl = np.full((h, w), -light[1])
    albedo = np.broadcast_to(PALETTE[GROUND][:, None, None], (3, h, w)).copy()

    for box in spec.objects:
        t, axis = _box_hit(box, dx, dy, spec.camera_height)
        closer = t < depth
        if not closer.any():
            continue
        depth = np.where(closer, t, depth)
        labels = np.where(closer, box.cls, labels).astype(np.uint8)
        ray = (dx, dy, np.ones_like(dx))
        # entry face normal opposes the ray along the entry axis
        n_dot = np.zeros((h, w))
        for k in range(3):
            sign = -np.sign(ray[k])
            n_dot = np.where(axis == k, sign * light[k], n_dot)
        ndotl = np.where(closer, n_dot, ndotl)
        albedo = np.where(closer[None], np.asarray(box.albedo)[:, None, None], albedo)

    valid = np.isfinite(depth)
    depth = np.where(valid, depth, 0.0)
    image = _shade(albedo, ndotl, np.where(valid, depth, spec.ground_extent), spec)
    sky = np.broadcast_to(PALETTE[SKY][:, None, None], (3, h, w))
    image = np.where(valid[None], image, sky * (1.0 - 0.25 * (np.arange(h) / h))[None, :, None])
    rng = Rng(spec.seed).split(0x5EED)
    image = image + spec.noise * rng.uniform((3, h, w), -1.0, 1.0)
    # 8-bit levels so image.ppm stores the image exactly
    image = np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0

    meta = {"seed": spec.seed, "spec_hash": spec.digest(), "height": h, "width": w,
            "focal": spec.focal, "cy": spec.cy, "camera_height": spec.camera_height,
            "n_objects": len(spec.objects)}
    meta = {k: str(v) for k, v in meta.items()}
    return SampleBundle(image, depth, valid, valid.copy(), labels, meta)


# ---------------------------------------------------------------- sparsify

def sparsify(depth, valid, pattern: str, density: float, rng: Rng) -> np.ndarray:
    """LIDAR-like subset of the valid pixels.

    ``uniform`` keeps each valid pixel with probability ``density``.
    ``scanline`` splits the rows into bands of k = round(1/density) rows and
    keeps one whole row per band, at a random offset inside the band.
    """
    if not 0.0 < density <= 1.0:
        raise ArgumentError(f"density must lie in (0, 1], got {density}")
    valid = np.asarray(valid).astype(bool) & (np.asarray(depth) > 0)
    h, w = valid.shape
    if pattern == "uniform":
        keep = rng.random((h, w)) < density
    elif pattern == "scanline":
        k = max(1, int(round(1.0 / density)))
        starts = np.arange(0, h, k)
        offsets = rng.integers(k, (starts.size,))
        rows = np.minimum(starts + offsets, h - 1)
        keep = np.zeros((h, w), bool)
        keep[rows] = True
    else:
        raise ArgumentError(f"unknown sparsity pattern {pattern!r}")
    return keep & valid


# ----------------------------------------------------------------- augment

def hflip(b: SampleBundle) -> SampleBundle:
    return SampleBundle(b.image[:, :, ::-1].copy(), b.depth[:, ::-1].copy(), b.valid[:, ::-1].copy(),
                        b.sparse_mask[:, ::-1].copy(), b.labels[:, ::-1].copy(), dict(b.meta))


def crop(b: SampleBundle, top: int, left: int, h: int, w: int) -> SampleBundle:
    sl = (slice(top, top + h), slice(left, left + w))
    return SampleBundle(b.image[(slice(None),) + sl].copy(), b.depth[sl].copy(), b.valid[sl].copy(),
                        b.sparse_mask[sl].copy(), b.labels[sl].copy(), dict(b.meta))


def augment(b: SampleBundle, flip: bool = False, crop_size=None, rng: Rng | None = None) -> SampleBundle:
    """Apply a horizontal flip and/or a uniformly placed crop to every channel."""
    if crop_size is not None:
        ch, cw = crop_size
        h, w = b.shape
        if ch > h or cw > w or ch < 1 or cw < 1:
            raise ArgumentError(f"crop {ch}x{cw} does not fit image {h}x{w}")
        if rng is None:
            raise ArgumentError("random crop needs an rng")
        top = int(rng.integers(h - ch + 1))
        left = int(rng.integers(w - cw + 1))
        b = crop(b, top, left, ch, cw)
    if flip:
        b = hflip(b)
    return b


# ----------------------------------------------------------------- dataset

@dataclass(frozen=True)
class DatasetSpec:
    n: int = 200
    seed: int = 0
    height: int = 40
    width: int = 56
    max_objects: int = 6
    sparse_pattern: str = "uniform"
    sparse_density: float = 0.3


def scene_for(ds: DatasetSpec, index: int) -> SceneSpec:
    """Scene ``index`` of a dataset, a function of (seed, index) only."""
    rng = Rng(ds.seed).split(index)
    n_obj = 1 + int(rng.integers(ds.max_objects))
    # cycle one guaranteed class per sample so every class shows up
    forced = OBJECT_CLASSES[index % len(OBJECT_CLASSES)]
    classes = [forced] + [OBJECT_CLASSES[int(c)] for c in rng.integers(len(OBJECT_CLASSES), (n_obj - 1,))]
    base = SceneSpec(height=ds.height, width=ds.width)
    # horizontal half-extent of the view at depth z is z * cx / f
    view = base.cx / base.focal
    boxes = []
    for cls in classes:
        (bw, bh, bl), (z_lo, z_hi) = _CLASS_GEOMETRY[cls]
        r = rng.random((6,))
        scale = 0.85 + 0.3 * r[0]
        z = z_lo + (z_hi - z_lo) * r[1]
        if cls == 5:
            side = 1.0 if r[2] < 0.5 else -1.0
            x = side * (bw * scale / 2 + 3.0 + 0.6 * z * view * r[3])
        else:
            x = (2.0 * r[2] - 1.0) * 0.8 * z * view
        tint = 0.85 + 0.3 * rng.random((3,))
        albedo = tuple(float(a) for a in np.clip(PALETTE[cls] * tint, 0.0, 1.0))
        boxes.append(Box(x=float(x), z=float(z), width=bw * scale, height=bh * scale,
                         length=bl * scale, cls=cls, albedo=albedo))
    return replace(base, objects=tuple(boxes), seed=int(rng.split(7).words(1)[0] >> np.uint64(1)))


def make_sample(ds: DatasetSpec, index: int) -> SampleBundle:
    spec = scene_for(ds, index)
    b = render(spec)
    rng = Rng(ds.seed).split(index).split(0x5A)
    b.sparse_mask = sparsify(b.depth, b.valid, ds.sparse_pattern, ds.sparse_density, rng)
    b.meta.update({"dataset_seed": str(ds.seed), "index": str(index)})
    return b


def dataset(ds: DatasetSpec):
    """Generator over ``ds.n`` samples; any sample is reproducible on its own."""
    if ds.n < 1:
        raise ArgumentError("dataset needs n >= 1")
    for i in range(ds.n):
        yield make_sample(ds, i)


def stack(bundles):
    """Batch arrays ``(images, depth, valid, sparse_mask, labels)``."""
    return (np.stack([b.image for b in bundles]), np.stack([b.depth for b in bundles]),
            np.stack([b.valid for b in bundles]), np.stack([b.sparse_mask for b in bundles]),
            np.stack([b.labels for b in bundles]))


def dataset_hash(bundles) -> str:
    h = hashlib.sha256()
    for b in bundles:
        for arr in (b.image, b.depth, b.valid, b.sparse_mask, b.labels):
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------- file I/O
#
# <dir>/image.ppm   P6, 8-bit RGB
# <dir>/depth.pgm   P5, 16-bit big-endian, millimetres, 0 = invalid
# <dir>/labels.pgm  P5, 8-bit class ids
# <dir>/mask.pgm    P5, 8-bit, 255 = sparse sample kept
# <dir>/meta.txt    key=value lines

def write_pnm(path, magic: bytes, arr: np.ndarray, maxval: int):
    h, w = arr.shape[:2]
    head = magic + b"\n%d %d\n%d\n" % (w, h, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    Path(path).write_bytes(head + np.ascontiguousarray(arr, dtype=dtype).tobytes())


def read_pnm(path):
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    channels = 3 if magic == b"P6" else 1
    dtype = ">u2" if maxval > 255 else "u1"
    arr = np.frombuffer(data[pos:], dtype=dtype)
    if arr.size != h * w * channels:
        raise ShapeError(f"{path}: payload size {arr.size} != {h}x{w}x{channels}")
    return arr.reshape((h, w, channels) if channels == 3 else (h, w))


def depth_to_mm(depth, valid) -> np.ndarray:
    mm = np.round(np.where(valid, depth, 0.0) * 1000.0)
    return np.clip(mm, 0, 65535).astype(np.uint16)


def save_bundle(b: SampleBundle, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rgb = np.round(np.clip(b.image, 0, 1) * 255.0).astype(np.uint8).transpose(1, 2, 0)
    write_pnm(d / "image.ppm", b"P6", rgb, 255)
    write_pnm(d / "depth.pgm", b"P5", depth_to_mm(b.depth, b.valid), 65535)
    write_pnm(d / "labels.pgm", b"P5", b.labels.astype(np.uint8), 255)
    write_pnm(d / "mask.pgm", b"P5", np.where(b.sparse_mask, 255, 0).astype(np.uint8), 255)
    lines = [f"{k}={v}" for k, v in sorted(b.meta.items())]
    (d / "meta.txt").write_text("\n".join(lines) + "\n")


def load_bundle(directory) -> SampleBundle:
    """Inverse of ``save_bundle``; depth comes back at millimetre precision."""
    d = Path(directory)
    image = read_pnm(d / "image.ppm").transpose(2, 0, 1).astype(np.float64) / 255.0
    mm = read_pnm(d / "depth.pgm").astype(np.float64)
    labels = read_pnm(d / "labels.pgm").astype(np.uint8)
    mask = read_pnm(d / "mask.pgm") > 0
    meta = {}
    for line in (d / "meta.txt").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k] = v
    valid = mm > 0
    return SampleBundle(np.ascontiguousarray(image), mm / 1000.0, valid, mask, labels, meta)
