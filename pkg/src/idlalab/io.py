"""Binary snapshots, JSON run configs and PPM images.

Snapshot layout (little-endian)::

    magic   4s   b"IDLA"
    version u16
    d       u8
    mode    u8   0 discrete, 1 poisson, 2 sandpile
    seed    u64
    stream  u64
    count   u64  number of site records
    t_max   f64  horizon (particle count, Poisson time or sandpile mass)

Cluster records follow in absorption order: ``packed i64`` plus
``arrival f64`` in poisson mode.  Sandpile snapshots first carry
``tol f64, residual f64, sweeps u64`` and then ``packed i64, mass f64,
odometer f64`` per site.  Coordinates are packed with ``b`` bits per axis
(21 for d <= 3, else ``64 // d``) after adding ``2^(b-1)``.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .cluster import DISCRETE, POISSON, ClusterHistory, LatenessField, lattice_ball, radius_for_volume
from .sandpile import SandpileField

MAGIC = b"IDLA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBBQQQd")
_SANDPILE_EXTRA = struct.Struct("<ddQ")
_MODES = {DISCRETE: 0, POISSON: 1, "sandpile": 2}
_MODE_NAMES = {v: k for k, v in _MODES.items()}


class SnapshotError(ValueError):
    pass


def coord_bits(d: int) -> int:
    return 21 if d <= 3 else 64 // d


def pack_coords(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.int64)
    d = coords.shape[1]
    b = coord_bits(d)
    off = 1 << (b - 1)
    if coords.size and (coords.min() < -off or coords.max() >= off):
        raise SnapshotError(f"coordinates exceed the {b}-bit packing range")
    u = (coords + off).astype(np.uint64)
    out = np.zeros(len(coords), dtype=np.uint64)
    for i in range(d):
        out |= u[:, i] << np.uint64(b * i)
    return out.view(np.int64)


def unpack_coords(packed: np.ndarray, d: int) -> np.ndarray:
    b = coord_bits(d)
    off = 1 << (b - 1)
    u = np.asarray(packed, dtype=np.int64).view(np.uint64)
    mask = np.uint64((1 << b) - 1)
    out = np.empty((len(u), d), dtype=np.int64)
    for i in range(d):
        out[:, i] = ((u >> np.uint64(b * i)) & mask).astype(np.int64) - off
    return out


def save_snapshot(obj, path: str, seed: int = 0, stream: int = 0) -> None:
    """Write a :class:`ClusterHistory` or :class:`SandpileField`."""
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(obj, seed=seed, stream=stream))


def snapshot_bytes(obj, seed: int = 0, stream: int = 0) -> bytes:
    if isinstance(obj, ClusterHistory):
        mode = _MODES[obj.mode]
        head = _HEADER.pack(MAGIC, FORMAT_VERSION, obj.d, mode, obj.seed, obj.stream,
                            len(obj.sites), float(obj.t_max))
        rec = [("packed", "<i8")] + ([("tau", "<f8")] if obj.mode == POISSON else [])
        arr = np.zeros(len(obj.sites), dtype=rec)
        arr["packed"] = pack_coords(obj.sites.reshape(-1, obj.d))
        if obj.mode == POISSON:
            arr["tau"] = obj.arrival_times
        return head + arr.tobytes()
    if isinstance(obj, SandpileField):
        head = _HEADER.pack(MAGIC, FORMAT_VERSION, obj.d, _MODES["sandpile"], seed, stream,
                            len(obj.sites), float(obj.t))
        extra = _SANDPILE_EXTRA.pack(obj.tol, obj.residual, obj.sweeps)
        arr = np.zeros(len(obj.sites), dtype=[("packed", "<i8"), ("mass", "<f8"), ("odo", "<f8")])
        arr["packed"] = pack_coords(obj.sites)
        arr["mass"] = obj.mass
        arr["odo"] = obj.odometer
        return head + extra + arr.tobytes()
    raise TypeError(f"cannot snapshot {type(obj).__name__}")


def load_snapshot(path: str):
    with open(path, "rb") as fh:
        data = fh.read()
    return snapshot_from_bytes(data)


def snapshot_from_bytes(data: bytes):
    if len(data) < _HEADER.size:
        raise SnapshotError("truncated header")
    magic, version, d, mode, seed, stream, count, t_max = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    if mode not in _MODE_NAMES:
        raise SnapshotError(f"unknown mode byte {mode}")
    pos = _HEADER.size
    name = _MODE_NAMES[mode]
    if name == "sandpile":
        if len(data) < pos + _SANDPILE_EXTRA.size:
            raise SnapshotError("truncated sandpile header")
        tol, residual, sweeps = _SANDPILE_EXTRA.unpack_from(data, pos)
        pos += _SANDPILE_EXTRA.size
        rec = np.dtype([("packed", "<i8"), ("mass", "<f8"), ("odo", "<f8")])
    else:
        rec = np.dtype([("packed", "<i8")] + ([("tau", "<f8")] if name == POISSON else []))
    need = pos + count * rec.itemsize
    if len(data) != need:
        raise SnapshotError(f"expected {need} bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype=rec, count=count, offset=pos)
    coords = unpack_coords(arr["packed"], d)
    if name == "sandpile":
        return SandpileField(t=t_max, d=d, sites=coords, mass=arr["mass"].copy(),
                             odometer=arr["odo"].copy(), residual=residual, tol=tol, sweeps=sweeps)
    return ClusterHistory(d=d, sites=coords, mode=name, t_max=t_max,
                          arrival_times=arr["tau"].copy() if name == POISSON else None,
                          seed=seed, stream=stream)


# -- run configuration ---------------------------------------------------

@dataclass
class RunConfig:
    """Everything needed to repeat a CLI run; flags override a JSON file."""

    subcommand: str = ""
    d: int = 2
    mode: str = DISCRETE
    t: Optional[float] = None
    n: Optional[int] = None
    seed: int = 0
    stream: int = 0
    out: Optional[str] = None
    tolerances: dict = field(default_factory=dict)
    palette_bound: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        obj = json.loads(text)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**obj)

    def merged(self, **overrides) -> "RunConfig":
        """Copy with every non-``None`` override applied."""
        obj = asdict(self)
        for k, v in overrides.items():
            if v is None:
                continue
            if k in ("tolerances", "extra"):
                obj[k] = {**obj[k], **v}
            else:
                obj[k] = v
        return RunConfig(**obj)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


# -- images --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit RGB pixels, row 0 at the top (largest y)."""

    pixels: np.ndarray
    comments: tuple = ()

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_ppm(self) -> bytes:
        notes = "".join(f"# {c}\n" for c in self.comments)
        head = f"P6\n{notes}{self.width} {self.height}\n255\n".encode()
        return head + np.ascontiguousarray(self.pixels, dtype=np.uint8).tobytes()

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_ppm())

    def with_comments(self, *comments: str) -> "RasterImage":
        if any("\n" in c for c in comments):
            raise ValueError("PPM comments must be single lines")
        return RasterImage(self.pixels, tuple(self.comments) + tuple(comments))

    def count(self, rgb) -> int:
        return int(np.all(self.pixels == np.array(rgb, dtype=np.uint8), axis=2).sum())


RED = (255, 0, 0)
BLUE = (0, 0, 255)
WHITE = (255, 255, 255)
BLACK = (0, 0, 0)


def _canvas(sites: np.ndarray, fill, margin: int = 1):
    lo = sites.min(axis=0) - margin
    hi = sites.max(axis=0) + margin
    w, h = int(hi[0] - lo[0] + 1), int(hi[1] - lo[1] + 1)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = fill
    return img, lo, hi


def _pixel_index(sites, lo, hi):
    col = sites[:, 0] - lo[0]
    row = hi[1] - sites[:, 1]
    return row, col


def diverging_colors(values: np.ndarray, bound: float) -> np.ndarray:
    """Red for negative, white at zero, blue for positive, clamped at ``+-bound``."""
    v = np.clip(np.asarray(values, dtype=np.float64) / bound, -1.0, 1.0)
    out = np.empty((len(v), 3), dtype=np.float64)
    neg = v < 0
    out[neg] = np.column_stack([np.ones(neg.sum()), 1 + v[neg], 1 + v[neg]])
    pos = ~neg
    out[pos] = np.column_stack([1 - v[pos], 1 - v[pos], np.ones(pos.sum())])
    return np.rint(out * 255).astype(np.uint8)


def render_lateness(field: LatenessField, bound: Optional[float] = None, margin: int = 1) -> RasterImage:
    """Lateness map: early sites red, late sites blue, unoccupied black."""
    if len(field.sites) == 0:
        raise ValueError("empty lateness field")
    if field.sites.shape[1] != 2:
        raise ValueError("rendering needs d = 2")
    if bound is None:
        bound = float(np.abs(field.L).max()) or 1.0
    if bound <= 0:
        raise ValueError("palette bound must be positive")
    img, lo, hi = _canvas(field.sites, BLACK, margin)
    row, col = _pixel_index(field.sites, lo, hi)
    img[row, col] = diverging_colors(field.L, bound)
    return RasterImage(img)


def render_symmetric_difference(history: ClusterHistory, t: float, margin: int = 1) -> RasterImage:
    """Red for cluster sites outside the lattice disk, blue for disk sites missing from the cluster."""
    if history.d != 2:
        raise ValueError("rendering needs d = 2")
    occ = history.sites_at(t)
    ball = lattice_ball(radius_for_volume(t, 2), 2)
    both = np.concatenate([occ.reshape(-1, 2), ball.reshape(-1, 2), np.zeros((1, 2), dtype=np.int64)])
    img, lo, hi = _canvas(both, WHITE, margin)
    a = set(map(tuple, occ.tolist()))
    b = set(map(tuple, ball.tolist()))
    out_only = np.array(sorted(a - b), dtype=np.int64).reshape(-1, 2)
    in_only = np.array(sorted(b - a), dtype=np.int64).reshape(-1, 2)
    for pts, colour in ((out_only, RED), (in_only, BLUE)):
        if len(pts):
            row, col = _pixel_index(pts, lo, hi)
            img[row, col] = colour
    return RasterImage(img)
