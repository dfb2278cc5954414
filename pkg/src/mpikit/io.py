"""Netpbm images, raw tensor containers, key=value configs and dataset/checkpoint layout.

Every reader raises :class:`FormatError` (a ``ValueError``) on malformed
input and nothing else.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"TNSR"
TENSOR_VERSION = 1
DTYPE_F32 = 0
IGNORE_LABEL = 255
_WS = b" \t\n\r\v\f"


class FormatError(ValueError):
    pass


class ConfigError(FormatError):
    pass


# -- netpbm ---------------------------------------------------------------

def _pnm_header(data: bytes):
    """Parse ``P5``/``P6`` header fields; returns (magic, width, height, maxval, payload offset)."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise FormatError("expected bytes")
    data = bytes(data)
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise FormatError("not a binary PGM/PPM file (magic must be P5 or P6)")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError("truncated header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise FormatError("unterminated comment in header")
            pos = end + 1
        elif ch in _WS:
            pos += 1
        else:
            start = pos
            while pos < len(data) and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
                pos += 1
            token = data[start:pos]
            if not token.isdigit() or len(token) > 9:
                raise FormatError(f"bad header field {token[:16]!r}")
            fields.append(int(token))
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise FormatError("header must end with a single whitespace byte")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError("image dimensions must be >= 1")
    if maxval != 255:
        raise FormatError(f"maxval must be 255, got {maxval}")
    return data[:2].decode(), width, height, maxval, pos + 1


def parse_pnm(data: bytes) -> np.ndarray:
    """Decode P5 to (H, W) or P6 to (H, W, 3) uint8."""
    magic, width, height, _, offset = _pnm_header(data)
    channels = 3 if magic == "P6" else 1
    need = width * height * channels
    payload = bytes(data)[offset:]
    if len(payload) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(payload)}")
    if len(payload) > need:
        raise FormatError("trailing data after payload")
    arr = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape).copy()


def encode_pgm(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("PGM payload must be a 2-D uint8 array")
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(arr).tobytes()


def encode_ppm(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError("PPM payload must be an (H, W, 3) uint8 array")
    h, w, _ = arr.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(arr).tobytes()


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path, data):
    Path(path).write_bytes(data)


def decode_mask(data: bytes) -> np.ndarray:
    raw = parse_pnm(data)
    if raw.ndim != 2:
        raise FormatError("mask must be a PGM (P5) file")
    if not np.isin(raw, (0, 255)).all():
        raise FormatError("mask pixels must be 0 (foreground) or 255 (background)")
    return (raw == 255).astype(np.uint8)


def read_mask(path) -> np.ndarray:
    return decode_mask(_read_bytes(path))


def write_mask(path, mask):
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    _write_bytes(path, encode_pgm((mask.astype(np.uint8) * 255).astype(np.uint8)))


def decode_labels(data: bytes) -> np.ndarray:
    raw = parse_pnm(data)
    if raw.ndim != 2:
        raise FormatError("label map must be a PGM (P5) file")
    return raw


def read_labels(path) -> np.ndarray:
    return decode_labels(_read_bytes(path))


def write_labels(path, labels):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > IGNORE_LABEL):
        raise ValueError("class ids must lie in 0..254 (255 = foreground/ignore)")
    _write_bytes(path, encode_pgm(labels.astype(np.uint8)))


def decode_image(data: bytes) -> np.ndarray:
    """PPM bytes to a (3, H, W) float32 image in [0, 1]."""
    raw = parse_pnm(data)
    if raw.ndim != 3:
        raise FormatError("image must be a PPM (P6) file")
    return (raw.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))


def read_image(path) -> np.ndarray:
    return decode_image(_read_bytes(path))


def image_to_uint8(img) -> np.ndarray:
    """(3, H, W) floats in [0, 1] to an (H, W, 3) uint8 array."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError("image must be (3, H, W)")
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def encode_image(img) -> bytes:
    return encode_ppm(image_to_uint8(img))


def write_image(path, img):
    _write_bytes(path, encode_image(img))


# -- raw tensor container -------------------------------------------------

def tensor_to_bytes(t) -> bytes:
    t = np.asarray(t)
    if t.dtype != np.float32:
        t = t.astype(np.float32)
    if t.ndim < 1 or t.ndim > 255 or min(t.shape) < 1:
        raise ValueError("tensor rank must be 1..255 with all extents >= 1")
    header = TENSOR_MAGIC + struct.pack("<BBB", TENSOR_VERSION, DTYPE_F32, t.ndim)
    header += struct.pack("<%dI" % t.ndim, *t.shape)
    return header + np.ascontiguousarray(t).astype("<f4", copy=False).tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise FormatError("expected bytes")
    data = bytes(data)
    if len(data) < 7:
        raise FormatError("truncated tensor header")
    if data[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}")
    version, dtype, rank = struct.unpack("<BBB", data[4:7])
    if version != TENSOR_VERSION:
        raise FormatError(f"unsupported tensor container version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}")
    if rank < 1:
        raise FormatError("tensor rank must be >= 1")
    end = 7 + 4 * rank
    if len(data) < end:
        raise FormatError("truncated extents")
    shape = struct.unpack("<%dI" % rank, data[7:end])
    if min(shape) < 1:
        raise FormatError("tensor extents must be >= 1")
    need = 4 * int(np.prod(shape, dtype=object))
    if len(data) - end != need:
        raise FormatError(f"payload is {len(data) - end} bytes, expected {need}")
    return np.frombuffer(data, dtype="<f4", offset=end).reshape(shape).astype(np.float32)


def write_tensor(path, t):
    _write_bytes(path, tensor_to_bytes(t))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(_read_bytes(path))


# -- key=value configs ----------------------------------------------------

def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "on", "yes"):
        return True
    if low in ("0", "false", "off", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text):
    return tuple(int(p) for p in text.split(","))


PARSERS = {bool: _parse_bool, int: int, float: float, str: str, tuple: _parse_int_tuple}


def parse_key_values(text) -> dict:
    """Raw ``key=value`` lines; ``#`` starts a comment. Keys must be unique."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config is not valid UTF-8: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key=value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_config(text, schema: dict) -> dict:
    """Typed ``key=value`` config. ``schema`` maps each allowed key to its type."""
    raw = parse_key_values(text)
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}")
        kind = schema[key]
        try:
            out[key] = PARSERS[kind](value)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
    return out


def format_config(values: dict) -> str:
    lines = []
    for k, v in values.items():
        if isinstance(v, bool):
            v = "on" if v else "off"
        elif isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif v is None:
            continue
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


# -- directory layouts ----------------------------------------------------

MANIFEST = "manifest.txt"


def write_manifest(path, header: dict, records):
    lines = [" ".join(f"{k}={v}" for k, v in header.items())]
    for rec in records:
        lines.append(" ".join(f"{k}={v}" for k, v in rec.items()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path):
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        row = {}
        for item in line.split():
            k, sep, v = item.partition("=")
            if not sep:
                raise FormatError(f"bad manifest entry {item!r}")
            row[k] = v
        rows.append(row)
    if not rows:
        raise FormatError("empty manifest")
    return rows[0], rows[1:]


def write_dataset(out_dir, triplets, header=None):
    """Write (image, labels, mask) triplets as PPM/PGM files plus ``manifest.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, (img, labels, mask) in enumerate(triplets):
        stem = f"{i:06d}"
        rec = {"image": f"{stem}_image.ppm", "labels": f"{stem}_labels.pgm", "mask": f"{stem}_mask.pgm"}
        write_image(out_dir / rec["image"], img)
        write_labels(out_dir / rec["labels"], labels)
        write_mask(out_dir / rec["mask"], mask)
        records.append(rec)
    head = {"kind": "mpikit-dataset", "count": len(records)}
    head.update(header or {})
    write_manifest(out_dir / MANIFEST, head, records)


def read_dataset(in_dir):
    """Inverse of :func:`write_dataset`; returns the triplet list and the manifest header."""
    in_dir = Path(in_dir)
    header, records = read_manifest(in_dir / MANIFEST)
    triplets = []
    for rec in records:
        try:
            triplets.append((read_image(in_dir / rec["image"]), read_labels(in_dir / rec["labels"]),
                             read_mask(in_dir / rec["mask"])))
        except KeyError as exc:
            raise FormatError(f"manifest record missing {exc}") from exc
    return triplets, header


def write_checkpoint(out_dir, state: dict):
    """One ``.tnsr`` file per parameter and a ``name=file`` manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, value in state.items():
        fname = name.replace(os.sep, "_") + ".tnsr"
        write_tensor(out_dir / fname, value)
        lines.append(f"{name}={fname}")
    (out_dir / MANIFEST).write_text("\n".join(lines) + "\n")


def read_checkpoint(in_dir) -> dict:
    in_dir = Path(in_dir)
    try:
        text = (in_dir / MANIFEST).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read checkpoint manifest: {exc}") from exc
    entries = parse_key_values(text)
    return {name: read_tensor(in_dir / fname) for name, fname in entries.items()}
