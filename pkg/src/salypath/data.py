"""Dataset IO and the synthetic data generator.

File formats, all dependency-free and byte-stable:

* Saliency maps: binary PGM (P5), 8-bit, maxval 255; pixel value k means
  intensity k/255.
* Stimuli: binary PPM (P6), 8-bit RGB.
* Scanpaths: CSV with header ``index,x,y``; x and y are float pixel
  coordinates (x along width). Extra columns are ignored on read, so
  prediction outputs carrying normalized coordinates re-load cleanly.
  Floats are written with repr so write -> read -> write is byte-identical.
* Manifest: JSON {"name", "width", "height", "records": [{"stimulus",
  "map", "scanpaths": [...]}]} with paths relative to the manifest's
  directory.

The synthetic generator is fully deterministic in its arguments: the same
call produces byte-identical trees. Maps are mixtures of 1-3 Gaussian
blobs (peak normalized to 1); stimuli render the map as a warm tint over a
cool background plus smoothed noise so that saliency is actually visible
in the pixels, which is what makes held-out generalization measurable;
scanpaths sample points around the blobs, heaviest blob first.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ContractError, DimensionError, ManifestError
from .types import SaliencyMap, Scanpath

WARM = np.array([0.95, 0.45, 0.15], dtype=np.float64)
COOL = np.array([0.10, 0.30, 0.55], dtype=np.float64)


# -- PGM / PPM ----------------------------------------------------------

def _read_pnm_tokens(raw: bytes, path, n_header_tokens: int) -> tuple[list[int], int]:
    """Parse PNM header tokens (magic already stripped), honoring # comments.
    Returns (tokens, offset of first payload byte)."""
    tokens: list[int] = []
    i = 0
    while len(tokens) < n_header_tokens:
        if i >= len(raw):
            raise ManifestError(f"{path}: truncated header")
        ch = raw[i:i + 1]
        if ch == b"#":
            nl = raw.find(b"\n", i)
            if nl < 0:
                raise ManifestError(f"{path}: unterminated comment")
            i = nl + 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j:j + 1].isspace() and raw[j:j + 1] != b"#":
                j += 1
            tok = raw[i:j]
            if not tok.isdigit():
                raise ManifestError(f"{path}: bad header token {tok!r}")
            tokens.append(int(tok))
            i = j
    # exactly one whitespace byte separates header from payload
    if i >= len(raw) or not raw[i:i + 1].isspace():
        raise ManifestError(f"{path}: missing separator before payload")
    return tokens, i + 1


def write_pgm(path, values) -> None:
    """8-bit binary PGM from a [H, W] array of values in [0, 1]."""
    v = values.values if isinstance(values, SaliencyMap) else np.asarray(values)
    if v.ndim != 2:
        raise DimensionError(f"write_pgm: values must be [H, W], got rank {v.ndim}")
    q = np.rint(np.clip(v, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = q.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(q.tobytes())


def read_pgm(path) -> np.ndarray:
    """[H, W] float32 in [0, 1] (value/255)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] != b"P5":
        raise ManifestError(f"{path}: not a binary PGM (magic {raw[:2]!r})")
    (w, h, maxval), off = _read_pnm_tokens(raw[2:], path, 3)
    off += 2
    if maxval != 255:
        raise ManifestError(f"{path}: unsupported maxval {maxval}, expected 255")
    need = w * h
    payload = raw[off:off + need]
    if len(payload) != need:
        raise ManifestError(
            f"{path}: payload has {len(payload)} bytes, expected {need}"
        )
    img = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return (img.astype(np.float32) / np.float32(255.0))


def write_ppm(path, rgb) -> None:
    """8-bit binary PPM from a [3, H, W] array of values in [0, 1]."""
    v = np.asarray(rgb)
    if v.ndim != 3 or v.shape[0] != 3:
        raise DimensionError(f"write_ppm: rgb must be [3, H, W], got {v.shape}")
    q = np.rint(np.clip(v, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = q.shape[1], q.shape[2]
    inter = np.ascontiguousarray(q.transpose(1, 2, 0))  # H, W, 3 interleaved
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(inter.tobytes())


def read_ppm(path) -> np.ndarray:
    """[3, H, W] float32 in [0, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] != b"P6":
        raise ManifestError(f"{path}: not a binary PPM (magic {raw[:2]!r})")
    (w, h, maxval), off = _read_pnm_tokens(raw[2:], path, 3)
    off += 2
    if maxval != 255:
        raise ManifestError(f"{path}: unsupported maxval {maxval}, expected 255")
    need = w * h * 3
    payload = raw[off:off + need]
    if len(payload) != need:
        raise ManifestError(
            f"{path}: payload has {len(payload)} bytes, expected {need}"
        )
    img = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1)
    return img.astype(np.float32) / np.float32(255.0)


# -- scanpath CSV ---------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_scanpath_csv(path, xy_pixels, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write pixel-coordinate fixations. ``extra`` appends named float
    columns (e.g. normalized coordinates) after x and y."""
    pts = np.asarray(xy_pixels, dtype=np.float64).reshape(-1, 2)
    cols = list((extra or {}).items())
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["index", "x", "y"] + [name for name, _ in cols])
        for i, (x, y) in enumerate(pts):
            row = [str(i), _fmt(x), _fmt(y)]
            for _, arr in cols:
                row.append(_fmt(float(np.asarray(arr).reshape(-1)[i])))
            wr.writerow(row)


def read_scanpath_csv(path) -> np.ndarray:
    """[N, 2] float64 pixel (x, y). Requires the index,x,y header; extra
    columns are ignored; indices must run 0..N-1."""
    with open(path, "r", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ManifestError(f"{path}: empty scanpath file")
    header = [c.strip().lower() for c in rows[0]]
    if header[:3] != ["index", "x", "y"]:
        raise ManifestError(
            f"{path}: header must start with index,x,y, got {rows[0][:3]}"
        )
    pts = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            idx = int(row[0])
            x = float(row[1])
            y = float(row[2])
        except (ValueError, IndexError) as e:
            raise ManifestError(f"{path}: line {ln}: bad row {row!r}") from e
        if idx != len(pts):
            raise ManifestError(
                f"{path}: line {ln}: index {idx}, expected {len(pts)}"
            )
        pts.append((x, y))
    if not pts:
        raise ManifestError(f"{path}: no fixation rows")
    return np.array(pts, dtype=np.float64)


# -- manifest -------------------------------------------------------------

@dataclass
class ManifestRecord:
    stimulus: str
    map: str
    scanpaths: list[str] = field(default_factory=list)


@dataclass
class DatasetManifest:
    name: str
    width: int
    height: int
    records: list[ManifestRecord]
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.records)

    def image_id(self, i: int) -> str:
        return Path(self.records[i].stimulus).stem

    def stimulus_path(self, i: int) -> Path:
        return self.root / self.records[i].stimulus

    def map_path(self, i: int) -> Path:
        return self.root / self.records[i].map

    def load_stimulus(self, i: int) -> np.ndarray:
        return read_ppm(self.stimulus_path(i))

    def load_map(self, i: int) -> SaliencyMap:
        return SaliencyMap(read_pgm(self.map_path(i)))

    def load_scanpaths(self, i: int) -> list[Scanpath]:
        out = []
        for rel in self.records[i].scanpaths:
            px = read_scanpath_csv(self.root / rel)
            out.append(Scanpath.from_pixels(px, self.width, self.height))
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "records": [
                {"stimulus": r.stimulus, "map": r.map, "scanpaths": list(r.scanpaths)}
                for r in self.records
            ],
        }


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w") as f:
        json.dump(manifest.to_dict(), f, indent=1)
        f.write("\n")


def load_manifest(path) -> DatasetManifest:
    """Parse and fully validate a manifest: every referenced file must
    exist, every scanpath must parse with in-bounds coordinates. Errors
    carry the record index and offending path."""
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ManifestError(f"{path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON: {e}") from e
    for key in ("name", "width", "height", "records"):
        if key not in doc:
            raise ManifestError(f"{path}: missing key {key!r}")
    width, height = int(doc["width"]), int(doc["height"])
    if width < 1 or height < 1:
        raise ManifestError(f"{path}: bad dimensions {width}x{height}")
    root = path.parent
    records = []
    for ri, rec in enumerate(doc["records"]):
        try:
            stim, mp = rec["stimulus"], rec["map"]
            sps = list(rec.get("scanpaths", []))
        except (TypeError, KeyError) as e:
            raise ManifestError(f"{path}: record {ri}: malformed entry") from e
        for rel in [stim, mp] + sps:
            if not (root / rel).exists():
                raise ManifestError(
                    f"{path}: record {ri}: referenced path {rel!r} does not exist"
                )
        for rel in sps:
            px = read_scanpath_csv(root / rel)
            if (px[:, 0].min() < 0 or px[:, 0].max() > width - 1
                    or px[:, 1].min() < 0 or px[:, 1].max() > height - 1):
                raise ManifestError(
                    f"{path}: record {ri}: scanpath {rel!r} has fixations "
                    f"outside the {width}x{height} stimulus"
                )
        records.append(ManifestRecord(stimulus=stim, map=mp, scanpaths=sps))
    return DatasetManifest(
        name=str(doc["name"]), width=width, height=height,
        records=records, root=root,
    )


def length_stats(manifest: DatasetManifest) -> dict:
    """Scanpath length distribution over every scanpath in the manifest:
    mean, median, mode (ties -> smallest), histogram {length: count}."""
    lengths = []
    for i in range(len(manifest)):
        for rel in manifest.records[i].scanpaths:
            lengths.append(read_scanpath_csv(manifest.root / rel).shape[0])
    if not lengths:
        raise ContractError("length_stats: manifest has no scanpaths")
    hist: dict[int, int] = {}
    for n in lengths:
        hist[n] = hist.get(n, 0) + 1
    top = max(hist.values())
    mode = min(k for k, v in hist.items() if v == top)
    return {
        "count": len(lengths),
        "mean": float(np.mean(lengths)),
        "median": float(statistics.median(lengths)),
        "mode": int(mode),
        "histogram": {str(k): hist[k] for k in sorted(hist)},
    }


# -- resampling -------------------------------------------------------------

def resample_map(values, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear, corner-anchored resample of a [H, W] array."""
    v = values.values if isinstance(values, SaliencyMap) else np.asarray(values)
    if v.ndim != 2:
        raise DimensionError(f"resample_map: values must be [H, W], got rank {v.ndim}")
    h, w = v.shape
    if (h, w) == (target_h, target_w):
        return v.astype(np.float32).copy()
    if target_h < 1 or target_w < 1:
        raise DimensionError(
            f"resample_map: bad target {target_w}x{target_h}"
        )
    v = v.astype(np.float64)
    ys = np.linspace(0.0, h - 1, target_h) if target_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1, target_w) if target_w > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    out = ((1 - wy) * (1 - wx) * v[np.ix_(y0, x0)]
           + (1 - wy) * wx * v[np.ix_(y0, x1)]
           + wy * (1 - wx) * v[np.ix_(y1, x0)]
           + wy * wx * v[np.ix_(y1, x1)])
    return out.astype(np.float32)


def resample_stimulus(rgb: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Per-channel bilinear resample of a [3, H, W] image."""
    v = np.asarray(rgb)
    if v.ndim != 3:
        raise DimensionError(f"resample_stimulus: rgb must be [3, H, W], got rank {v.ndim}")
    return np.stack([resample_map(v[c], target_w, target_h) for c in range(v.shape[0])])


# -- synthetic data -----------------------------------------------------------

def generate_synthetic(n: int, seed: int, size: tuple[int, int] = (64, 64),
                       out_dir=None, scanpaths_per_image: int = 2,
                       length_weights: dict[int, float] | None = None,
                       min_center_dist: float = 0.0,
                       name: str = "synthetic") -> DatasetManifest:
    """Write ``n`` stimulus/map/scanpath triples plus manifest.json under
    ``out_dir`` and return the loaded manifest.

    size is (width, height). length_weights maps scanpath length ->
    unnormalized probability (default: every path has 8 points).
    min_center_dist rejects blob centers closer than this (normalized) to
    the image center, for building deliberately off-center evaluation sets.
    Deterministic: identical arguments produce byte-identical trees.
    """
    if out_dir is None:
        raise ContractError("generate_synthetic: out_dir is required")
    if n < 1:
        raise ContractError(f"generate_synthetic: n must be >= 1, got {n}")
    w, h = int(size[0]), int(size[1])
    if w < 8 or h < 8:
        raise ContractError(f"generate_synthetic: size too small: {size}")
    if scanpaths_per_image < 1:
        raise ContractError("generate_synthetic: scanpaths_per_image must be >= 1")
    if length_weights:
        lens = sorted(length_weights)
        if any(l < 2 for l in lens):
            raise ContractError("generate_synthetic: scanpath lengths must be >= 2")
        probs = np.array([length_weights[l] for l in lens], dtype=np.float64)
        probs = probs / probs.sum()
    else:
        lens, probs = [8], np.array([1.0])

    out_dir = Path(out_dir)
    for sub in ("stimuli", "maps", "scanpaths"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    gx, gy = np.meshgrid(np.linspace(0, 1, w), np.linspace(0, 1, h))
    records = []
    for i in range(n):
        stem = f"img_{i:03d}"
        k = int(rng.integers(1, 4))
        centers = []
        while len(centers) < k:
            cx, cy = rng.uniform(0.15, 0.85, size=2)
            if min_center_dist > 0.0 and np.hypot(cx - 0.5, cy - 0.5) < min_center_dist:
                continue
            centers.append((cx, cy))
        sigmas = rng.uniform(0.06, 0.15, size=k)
        weights = np.sort(rng.uniform(0.5, 1.0, size=k))[::-1]
        weights = weights / weights.sum()

        m = np.zeros((h, w), dtype=np.float64)
        for (cx, cy), sg, wt in zip(centers, sigmas, weights):
            m += wt * np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2.0 * sg * sg))
        m /= m.max()

        noise = gaussian_filter(rng.standard_normal((3, h, w)), sigma=(0, 2.0, 2.0))
        noise /= max(np.abs(noise).max(), 1e-9)
        img = (COOL[:, None, None] * (1.0 - m)
               + WARM[:, None, None] * m
               + 0.16 * noise)
        img = np.clip(img, 0.0, 1.0)

        write_pgm(out_dir / "maps" / f"{stem}.pgm", m)
        write_ppm(out_dir / "stimuli" / f"{stem}.ppm", img)

        sp_rel = []
        for s in range(scanpaths_per_image):
            length = int(rng.choice(lens, p=probs))
            blob_idx = rng.choice(k, size=length, p=weights)
            pts = np.empty((length, 2), dtype=np.float64)
            for t, bi in enumerate(blob_idx):
                cx, cy = centers[bi]
                jitter = rng.normal(0.0, 0.55 * sigmas[bi], size=2)
                pts[t] = (cx + jitter[0], cy + jitter[1])
            pts = np.clip(pts, 0.0, 1.0)
            order = np.argsort(-weights[blob_idx], kind="stable")
            pts = pts[order]
            px = np.stack([pts[:, 0] * (w - 1), pts[:, 1] * (h - 1)], axis=1)
            rel = f"scanpaths/{stem}_{s}.csv"
            write_scanpath_csv(out_dir / rel, px)
            sp_rel.append(rel)

        records.append(ManifestRecord(
            stimulus=f"stimuli/{stem}.ppm",
            map=f"maps/{stem}.pgm",
            scanpaths=sp_rel,
        ))

    manifest = DatasetManifest(name=name, width=w, height=h,
                               records=records, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return load_manifest(out_dir / "manifest.json")
