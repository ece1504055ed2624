"""Episode generation for the eight command syntaxes.

Digit images come from IDX files when configured, otherwise from a seeded
stroke renderer so nothing here needs network or external data. Image
transforms are exact-grid oracles (clipping shift, 90-degree rotations,
nearest-neighbor scaling about the image center), and every episode's
outcome frame is produced by the matching oracle, so training targets are
reproducible arrays rather than approximations.

An episode is the unit of next-frame training: sentence symbols paired with
the currently visible image, then a single terminal frame holding the pad
symbol and the outcome image.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, FormatError, TransformRangeError
from .language import PAD, MAX_MOVE, ROTATE_ANGLES, parse_sentence

SIDE = 28
PIXELS = SIDE * SIDE

BIG_BAND = (1.2, 1.5)
SMALL_BAND = (0.5, 0.8)
ENLARGE_FACTOR = 1.25
SHRINK_FACTOR = 0.8
SCALE_RANGE = (0.4, 2.0)

SYNTAX_NAMES = {
    1: "move-left", 2: "move-right", 3: "this-is", 4: "size-is",
    5: "size-is-not", 6: "give-me-a", 7: "resize", 8: "rotate",
}


# ---------------------------------------------------------------------------
# transforms

def shift(img: np.ndarray, dx: int) -> np.ndarray:
    """Translate columns by dx (negative = left); content crossing the border is lost."""
    if abs(dx) > SIDE:
        raise TransformRangeError(f"shift of {dx} pixels exceeds the {SIDE}-wide frame")
    out = np.zeros_like(img)
    if dx == 0:
        return img.copy()
    if dx > 0:
        out[:, dx:] = img[:, : SIDE - dx]
    else:
        out[:, : SIDE + dx] = img[:, -dx:]
    return out


def rotate(img: np.ndarray, angle: int) -> np.ndarray:
    """Exact grid rotation about the center; 180 maps (r,c) to (27-r, 27-c)."""
    if angle not in ROTATE_ANGLES:
        raise TransformRangeError(f"angle {angle} not in {ROTATE_ANGLES}")
    return np.ascontiguousarray(np.rot90(img, k=angle // 90))


def scale(img: np.ndarray, factor: float) -> np.ndarray:
    """Nearest-neighbor resample about the center (13.5, 13.5), clipped to frame."""
    if not (SCALE_RANGE[0] <= factor <= SCALE_RANGE[1]):
        raise TransformRangeError(f"scale factor {factor} outside {SCALE_RANGE}")
    if factor == 1.0:
        return img.copy()
    center = (SIDE - 1) / 2.0
    coords = np.arange(SIDE, dtype=np.float64)
    src = np.floor(center + (coords - center) / factor + 0.5).astype(np.int64)
    valid = np.where((src >= 0) & (src < SIDE))[0]
    out = np.zeros_like(img)
    out[np.ix_(valid, valid)] = img[np.ix_(src[valid], src[valid])]
    return out


# ---------------------------------------------------------------------------
# digit sources

@dataclass
class DigitPool:
    images: np.ndarray  # [N, 28, 28] float32 in [0,1]
    labels: np.ndarray  # [N] int
    provenance: str = "synthetic"
    _by_label: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.labels)

    def indices_of(self, digit: int) -> np.ndarray:
        if digit not in self._by_label:
            self._by_label[digit] = np.where(self.labels == digit)[0]
        return self._by_label[digit]

    def sample(self, rng: np.random.Generator, digit: int | None = None) -> tuple[np.ndarray, int]:
        if digit is None:
            i = int(rng.integers(0, len(self)))
        else:
            idxs = self.indices_of(digit)
            if len(idxs) == 0:
                raise ConsistencyError(f"pool holds no instances of digit {digit}")
            i = int(idxs[rng.integers(0, len(idxs))])
        return self.images[i], int(self.labels[i])


IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def load_idx(image_path, label_path) -> DigitPool:
    """Read big-endian IDX image/label files into a pool, pixels scaled by 1/255."""
    with open(image_path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise FormatError("image file shorter than its 16-byte header", offset=len(head))
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(f"image magic 0x{magic:08x} != 0x{IDX_IMAGE_MAGIC:08x}", offset=0)
        body = fh.read()
    expected = count * rows * cols
    if len(body) != expected:
        raise FormatError(f"image payload holds {len(body)} bytes, expected {expected}",
                          offset=16 + min(len(body), expected))
    images = np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)
    images = images.astype(np.float32) / 255.0

    with open(label_path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise FormatError("label file shorter than its 8-byte header", offset=len(head))
        magic, lcount = struct.unpack(">II", head)
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(f"label magic 0x{magic:08x} != 0x{IDX_LABEL_MAGIC:08x}", offset=0)
        lbody = fh.read()
    if len(lbody) != lcount:
        raise FormatError(f"label payload holds {len(lbody)} bytes, expected {lcount}",
                          offset=8 + min(len(lbody), lcount))
    if lcount != count:
        raise ConsistencyError(f"{count} images but {lcount} labels")
    labels = np.frombuffer(lbody, dtype=np.uint8).astype(np.int64)
    return DigitPool(images=images, labels=labels, provenance="idx")


# seven-segment skeleton: segment name -> ((r0,c0),(r1,c1)) in glyph-box coords
_SEGS = {
    "A": ((0.0, 0.0), (0.0, 1.0)),
    "B": ((0.0, 1.0), (0.5, 1.0)),
    "C": ((0.5, 1.0), (1.0, 1.0)),
    "D": ((1.0, 0.0), (1.0, 1.0)),
    "E": ((0.5, 0.0), (1.0, 0.0)),
    "F": ((0.0, 0.0), (0.5, 0.0)),
    "G": ((0.5, 0.0), (0.5, 1.0)),
}
_DIGIT_SEGS = {
    0: "ABCDEF", 1: "BC", 2: "ABGED", 3: "ABGCD", 4: "FGBC",
    5: "AFGCD", 6: "AFGECD", 7: "ABC", 8: "ABCDEFG", 9: "ABCDFG",
}
# glyph box inside the frame; jitter stays clear of the central 20x20 bound
_BOX_TOP, _BOX_BOTTOM = 6.5, 21.5
_BOX_LEFT, _BOX_RIGHT = 9.5, 18.5


def synth_glyph(digit: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded stroke rendering of a digit with positional jitter."""
    if not 0 <= digit <= 9:
        raise TransformRangeError(f"digit {digit} out of range")
    dr = rng.uniform(-1.2, 1.2)
    dc = rng.uniform(-1.2, 1.2)
    stretch_r = rng.uniform(0.9, 1.05)
    stretch_c = rng.uniform(0.9, 1.05)
    thickness = rng.uniform(1.1, 1.5)
    mid_r = (_BOX_TOP + _BOX_BOTTOM) / 2 + dr
    mid_c = (_BOX_LEFT + _BOX_RIGHT) / 2 + dc
    half_r = (_BOX_BOTTOM - _BOX_TOP) / 2 * stretch_r
    half_c = (_BOX_RIGHT - _BOX_LEFT) / 2 * stretch_c

    img = np.zeros((SIDE, SIDE), dtype=np.float32)
    rr, cc = np.mgrid[0:SIDE, 0:SIDE]
    for name in _DIGIT_SEGS[digit]:
        (r0, c0), (r1, c1) = _SEGS[name]
        jitter = rng.uniform(-0.4, 0.4, size=4)
        p0 = np.array([mid_r + (r0 * 2 - 1) * half_r + jitter[0],
                       mid_c + (c0 * 2 - 1) * half_c + jitter[1]])
        p1 = np.array([mid_r + (r1 * 2 - 1) * half_r + jitter[2],
                       mid_c + (c1 * 2 - 1) * half_c + jitter[3]])
        img = np.maximum(img, _stamp_segment(rr, cc, p0, p1, thickness))
    # keep all ink inside the central 20x20 box
    img[:4, :] = 0.0
    img[24:, :] = 0.0
    img[:, :4] = 0.0
    img[:, 24:] = 0.0
    return img


def _stamp_segment(rr, cc, p0, p1, thickness) -> np.ndarray:
    """Soft capsule around the segment: intensity falls off with distance."""
    d = p1 - p0
    length2 = float(d @ d)
    if length2 == 0:
        dist = np.hypot(rr - p0[0], cc - p0[1])
    else:
        t = ((rr - p0[0]) * d[0] + (cc - p0[1]) * d[1]) / length2
        t = np.clip(t, 0.0, 1.0)
        dist = np.hypot(rr - (p0[0] + t * d[0]), cc - (p0[1] + t * d[1]))
    return np.clip(1.25 - dist / thickness, 0.0, 1.0).astype(np.float32)


def synth_pool(n: int, seed: int) -> DigitPool:
    """Balanced synthetic pool of n glyphs."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    images = np.zeros((n, SIDE, SIDE), dtype=np.float32)
    labels = np.zeros(n, dtype=np.int64)
    for i in range(n):
        d = i % 10
        images[i] = synth_glyph(d, rng)
        labels[i] = d
    return DigitPool(images=images, labels=labels, provenance="synthetic")


def vision_training_images(pool: DigitPool, n: int, rng: np.random.Generator) -> np.ndarray:
    """Image set for autoencoder training: pool images plus the transforms
    episodes will ask the decoder to reproduce (shifts, scale bands, rotations,
    a few blanks)."""
    out = np.zeros((n, SIDE, SIDE), dtype=np.float32)
    for i in range(n):
        img, _ = pool.sample(rng)
        kind = rng.uniform()
        if kind < 0.35:
            out[i] = img
        elif kind < 0.60:
            dx = int(rng.integers(-MAX_MOVE, MAX_MOVE + 1))
            out[i] = shift(img, dx)
        elif kind < 0.85:
            lo, hi = SCALE_RANGE
            out[i] = scale(img, float(rng.uniform(lo, min(hi, 1.6))))
        elif kind < 0.98:
            out[i] = rotate(img, int(rng.choice(ROTATE_ANGLES)))
        # else: leave blank; the loop starts from an all-zero imagined image
    return out.reshape(n, PIXELS)


# ---------------------------------------------------------------------------
# episodes

@dataclass
class Frame:
    symbol: str
    image: np.ndarray  # [28, 28] float32


@dataclass
class Episode:
    frames: list[Frame]
    syntax_id: int
    meta: dict = field(default_factory=dict)

    @property
    def sentence(self) -> str:
        return "".join(f.symbol for f in self.frames[:-1])


def _frames_for(sentence: str, visible: np.ndarray, outcome: np.ndarray) -> list[Frame]:
    frames = [Frame(symbol=ch, image=visible) for ch in sentence]
    frames.append(Frame(symbol=PAD, image=outcome))
    return frames


def make_episode(syntax_id: int, pool: DigitPool, rng: np.random.Generator) -> Episode:
    """Sample one grammar-exact episode; the outcome image is the oracle transform."""
    if syntax_id not in SYNTAX_NAMES:
        raise TransformRangeError(f"syntax id {syntax_id} not in 1..8")
    blank = np.zeros((SIDE, SIDE), dtype=np.float32)

    if syntax_id in (1, 2):
        img, label = pool.sample(rng)
        n = int(rng.integers(0, MAX_MOVE + 1))
        word = "left" if syntax_id == 1 else "right"
        sentence = f"move {word} {n}."
        outcome = shift(img, -n if syntax_id == 1 else n)
        meta = {"label": label, "dx": n}
    elif syntax_id == 3:
        img, label = pool.sample(rng)
        factor = float(rng.uniform(0.8, BIG_BAND[1]))
        img = scale(img, factor)
        sentence = f"this is {label}."
        outcome = img
        meta = {"label": label, "factor": factor}
    elif syntax_id in (4, 5):
        img, label = pool.sample(rng)
        big = bool(rng.integers(0, 2))
        band = BIG_BAND if big else SMALL_BAND
        factor = float(rng.uniform(*band))
        img = scale(img, factor)
        word = size_label(factor)
        if syntax_id == 4:
            sentence = f"the size is {word}."
        else:
            opposite = "small" if word == "big" else "big"
            sentence = f"the size is not {opposite}."
        outcome = img
        meta = {"label": label, "factor": factor, "word": word}
    elif syntax_id == 6:
        digit = int(rng.integers(0, 10))
        instance, _ = pool.sample(rng, digit=digit)
        sentence = f"give me a {digit}."
        return Episode(frames=_frames_for(sentence, blank, instance),
                       syntax_id=6, meta={"label": digit})
    elif syntax_id == 7:
        img, label = pool.sample(rng)
        grow = bool(rng.integers(0, 2))
        word = "enlarge" if grow else "shrink"
        factor = ENLARGE_FACTOR if grow else SHRINK_FACTOR
        sentence = f"{word}."
        outcome = scale(img, factor)
        meta = {"label": label, "factor": factor}
    else:
        img, label = pool.sample(rng)
        angle = int(rng.choice(ROTATE_ANGLES))
        sentence = f"rotate {angle}."
        outcome = rotate(img, angle)
        meta = {"label": label, "angle": angle}

    parse_sentence(sentence)  # every generated sentence must be grammar-exact
    return Episode(frames=_frames_for(sentence, img, outcome),
                   syntax_id=syntax_id, meta=meta)


def size_label(factor: float) -> str:
    if BIG_BAND[0] <= factor <= BIG_BAND[1]:
        return "big"
    if SMALL_BAND[0] <= factor <= SMALL_BAND[1]:
        return "small"
    raise TransformRangeError(f"scale factor {factor} falls between the size bands")


# ---------------------------------------------------------------------------
# episode cache files

CACHE_MAGIC = b"LGIE"
CACHE_VERSION = 1


def write_cache(episodes: list[Episode], path) -> None:
    """Flat frame stream: magic, version, u32 frame count, then
    (symbol byte + 784 little-endian float32) per frame. Episode boundaries
    are recoverable because pad appears only on terminal frames."""
    from .language import _BYTE_OF  # byte codes are the codec's business

    frames = [f for ep in episodes for f in ep.frames]
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(bytes([CACHE_VERSION]))
        fh.write(len(frames).to_bytes(4, "little"))
        for f in frames:
            fh.write(bytes([_BYTE_OF[f.symbol]]))
            fh.write(np.ascontiguousarray(f.image, dtype="<f4").tobytes())


def read_cache(path) -> list[Episode]:
    from .language import _SYMBOL_OF

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CACHE_MAGIC:
        raise FormatError(f"bad cache magic {blob[:4]!r}", offset=0)
    if len(blob) < 9:
        raise FormatError("cache shorter than its header", offset=len(blob))
    if blob[4] != CACHE_VERSION:
        raise FormatError(f"unsupported cache version {blob[4]}", offset=4)
    count = int.from_bytes(blob[5:9], "little")
    frame_bytes = 1 + PIXELS * 4
    if len(blob) != 9 + count * frame_bytes:
        raise FormatError(f"cache holds {len(blob)} bytes, expected {9 + count * frame_bytes}",
                          offset=min(len(blob), 9 + count * frame_bytes))
    episodes: list[Episode] = []
    frames: list[Frame] = []
    for i in range(count):
        off = 9 + i * frame_bytes
        sym = _SYMBOL_OF.get(blob[off])
        if sym is None:
            raise FormatError(f"frame {i} carries unmapped symbol byte {blob[off]}", offset=off)
        img = np.frombuffer(blob[off + 1: off + frame_bytes], dtype="<f4").reshape(SIDE, SIDE)
        frames.append(Frame(symbol=sym, image=img.copy()))
        if sym == PAD:
            sentence = "".join(f.symbol for f in frames[:-1])
            sid, _ = parse_sentence(sentence)
            episodes.append(Episode(frames=frames, syntax_id=sid, meta={}))
            frames = []
    if frames:
        raise FormatError("cache ends inside an episode (no terminal pad frame)",
                          offset=len(blob))
    return episodes
