"""PGM images, run configuration files and run manifests."""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ParseError
from .grid import ConvexDomain, Grid, ScalarField

__all__ = [
    "ImageBuffer",
    "read_pgm",
    "write_pgm",
    "image_to_field",
    "field_to_image",
    "RunConfig",
    "load_config",
    "parse_config",
    "RunManifest",
    "config_digest",
]


# images -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Greyscale image; ``pixels`` has shape ``(height, width)``."""

    width: int
    height: int
    max_value: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (self.height, self.width):
            raise InvalidArgument(f"pixel array {px.shape} does not match {self.height}x{self.width}")
        if self.max_value not in (255, 65535):
            raise InvalidArgument("max_value must be 255 or 65535")
        if px.size and (px.min() < 0 or px.max() > self.max_value):
            raise InvalidArgument("pixel out of range")
        px = px.astype(np.uint16 if self.max_value > 255 else np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)


_TOKEN = re.compile(rb"\S+")


def _header_tokens(data: bytes, count: int) -> tuple[list[tuple[bytes, int]], int]:
    """First ``count`` whitespace tokens, skipping ``#`` comments, and the offset after them."""
    out: list[tuple[bytes, int]] = []
    pos = 0
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise ParseError("unexpected end of header", pos)
        if data[pos : pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = n if nl < 0 else nl + 1
            continue
        m = _TOKEN.match(data, pos)
        tok = m.group(0)
        if b"#" in tok:
            tok = tok[: tok.index(b"#")]
        out.append((tok, pos))
        pos += len(tok)
    return out, pos


def _header_int(tok: bytes, off: int, what: str) -> int:
    if not tok.isdigit():
        raise ParseError(f"bad {what} {tok!r}", off)
    return int(tok)


def read_pgm(path: str | Path) -> ImageBuffer:
    """Read a P2 or P5 greyscale image with 8- or 16-bit samples."""
    data = Path(path).read_bytes()
    toks, pos = _header_tokens(data, 4)
    magic, moff = toks[0]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"unsupported magic {magic!r}", moff)
    w = _header_int(*toks[1], "width")
    h = _header_int(*toks[2], "height")
    mx = _header_int(*toks[3], "max value")
    if w < 1 or h < 1:
        raise ParseError("image dimensions must be positive", toks[1][1])
    if mx not in (255, 65535):
        raise ParseError(f"max value {mx} is not 255 or 65535", toks[3][1])
    count = w * h
    if magic == b"P5":
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise ParseError("missing whitespace after header", pos)
        pos += 1
        dtype = np.dtype(">u2") if mx > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise OSError(f"truncated pixel data: need {need} bytes, have {len(data) - pos}")
        px = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    else:
        vals = []
        for m in _TOKEN.finditer(data, pos):
            tok = m.group(0)
            if tok.startswith(b"#"):
                raise ParseError("comment inside pixel data", m.start())
            if not tok.isdigit():
                raise ParseError(f"bad sample {tok!r}", m.start())
            vals.append(int(tok))
            if len(vals) == count:
                break
        if len(vals) < count:
            raise OSError(f"truncated pixel data: need {count} samples, have {len(vals)}")
        px = np.array(vals)
        if px.max(initial=0) > mx:
            raise ParseError("sample exceeds max value", pos)
    return ImageBuffer(w, h, mx, px.reshape(h, w).astype(np.int64))


def write_pgm(path: str | Path, img: ImageBuffer, binary: bool = True) -> None:
    header = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n{img.max_value}\n".encode()
    if binary:
        dtype = ">u2" if img.max_value > 255 else "u1"
        body = np.asarray(img.pixels).astype(dtype).tobytes()
    else:
        body = "\n".join(" ".join(str(int(v)) for v in row) for row in img.pixels).encode() + b"\n"
    Path(path).write_bytes(header + body)


def image_grid(width: int, height: int) -> Grid:
    """Pixel-centred grid of spacing ``1 / max(width, height)``.

    Array axis 0 runs over columns (x) and axis 1 over rows (y).
    """
    h = 1.0 / max(width, height)
    return Grid(((0.5 * h, (width - 0.5) * h), (0.5 * h, (height - 0.5) * h)), (width, height))


def image_to_field(img: ImageBuffer, domain: ConvexDomain | None = None) -> ScalarField:
    """Intensities scaled to ``[0, 1]`` on the pixel-centred grid."""
    g = image_grid(img.width, img.height)
    vals = np.asarray(img.pixels, dtype=float).T / img.max_value
    mask = None if domain is None else domain.mask(g)
    return ScalarField(g, vals, mask)


def field_to_image(f: ScalarField, max_value: int = 255) -> ImageBuffer:
    """Round to the nearest level after clipping to ``[0, 1]``."""
    vals = np.clip(np.asarray(f.values), 0.0, 1.0) * max_value
    px = np.rint(vals).astype(np.int64).T
    return ImageBuffer(px.shape[1], px.shape[0], max_value, px)


# configuration -----------------------------------------------------------

_SCHEMA: dict[str, dict[str, type]] = {
    "problem": {"variant": str, "alpha": float, "beta": float, "gamma": float, "p": float, "input": str,
                "domain": str},
    "solver": {"tol": float, "max_iter": int, "accelerate": bool, "log_every": int, "seed": int,
               "backend": str},
    "grid": {"points": int, "half_width": float},
}


@dataclass
class RunConfig:
    variant: str = "gagliardo"
    alpha: float = 0.5
    beta: float = 0.1
    gamma: float = 1.0
    p: float = 2.0
    input: str = ""
    domain: str = ""
    tol: float = 1e-6
    max_iter: int = 5000
    accelerate: bool = True
    log_every: int = 1
    seed: int = 0
    backend: str = "quadrature"
    points: int = 64
    half_width: float = 2.0
    text: str = field(default="", repr=False)

    def canonical(self) -> str:
        """Sorted ``section.key=value`` lines of every setting."""
        lines = []
        for sec, keys in sorted(_SCHEMA.items()):
            for key in sorted(keys):
                lines.append(f"{sec}.{key}={getattr(self, key)!r}")
        return "\n".join(lines) + "\n"


def _convert(value: str, kind: type, where: str):
    try:
        if kind is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return kind(value.strip())
    except ValueError:
        raise InvalidArgument(f"{where}: cannot read {value!r} as {kind.__name__}") from None


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines under ``[problem]``, ``[solver]`` and ``[grid]``.

    Unknown sections and keys are errors.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # type: ignore[assignment]
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidArgument(f"config: {exc}") from None
    cfg = RunConfig(text=text)
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise InvalidArgument(f"config: unknown section [{sec}]")
        for key, value in cp.items(sec):
            if key not in _SCHEMA[sec]:
                raise InvalidArgument(f"config: unknown key {key!r} in [{sec}]")
            setattr(cfg, key, _convert(value, _SCHEMA[sec][key], f"[{sec}] {key}"))
    return cfg


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


def config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(cfg.canonical().encode()).hexdigest()


# manifests ---------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config_digest: str
    alpha: float
    beta: float
    gamma: float
    p: float
    grid: str
    wall_time: float
    tool_version: str
    files: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def write(self, directory: str | Path, name: str = "manifest.json") -> Path:
        path = Path(directory) / name
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path
