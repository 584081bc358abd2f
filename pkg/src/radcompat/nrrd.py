"""Minimal NRRD reader/writer: attached header, raw little-endian payload.

Supported header fields (exact keys): dimension, type, encoding, endian,
sizes, spacings, space directions (diagonal only). Types: int16, uint8,
float32. Anything else is rejected loudly rather than guessed at.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model import RoiMask, ScalarVolume

_MAGIC = "NRRD"
_TYPES = {
    "int16": np.dtype("<i2"),
    "uint8": np.dtype("u1"),
    "float32": np.dtype("<f4"),
}
_FIELDS = {"dimension", "type", "encoding", "endian", "sizes", "spacings", "space directions"}


class NrrdFormatError(ValueError):
    """Header or payload violates the supported NRRD subset."""


def _parse_space_directions(value: str, line: str) -> tuple[float, float, float]:
    vectors = []
    for chunk in value.replace(") (", ")|(").split("|"):
        chunk = chunk.strip()
        if not (chunk.startswith("(") and chunk.endswith(")")):
            raise NrrdFormatError(f"malformed space directions in header line: {line!r}")
        vectors.append([float(x) for x in chunk[1:-1].split(",")])
    if len(vectors) != 3 or any(len(v) != 3 for v in vectors):
        raise NrrdFormatError(f"space directions must give three 3-vectors: {line!r}")
    spacing = []
    for axis, vec in enumerate(vectors):
        for j, x in enumerate(vec):
            if j != axis and x != 0.0:
                raise NrrdFormatError(f"only diagonal space directions are supported: {line!r}")
        spacing.append(vec[axis])
    return tuple(spacing)


def _parse_header(raw: bytes, path: Path) -> tuple[dict, int]:
    end = raw.find(b"\n\n")
    if end < 0:
        raise NrrdFormatError(f"{path}: missing blank line terminating the NRRD header")
    header_text = raw[:end].decode("ascii", errors="replace")
    lines = header_text.split("\n")
    if not lines[0].startswith(_MAGIC):
        raise NrrdFormatError(f"{path}: not an NRRD file (bad magic line {lines[0]!r})")
    fields: dict[str, str] = {}
    for line in lines[1:]:
        if not line.strip() or line.startswith("#"):
            continue
        if ":" not in line:
            raise NrrdFormatError(f"{path}: malformed header line: {line!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        if key not in _FIELDS:
            raise NrrdFormatError(f"{path}: unsupported header field in line: {line!r}")
        fields[key] = (value.strip(), line)
    return fields, end + 2


def _require(fields: dict, key: str, path: Path) -> tuple[str, str]:
    if key not in fields:
        raise NrrdFormatError(f"{path}: required header field {key!r} is missing")
    return fields[key]


def read_nrrd(path: str | Path, as_mask: bool = False) -> ScalarVolume | RoiMask:
    """Decode a volume (or, on request, a RoiMask from 0/1 uint8 data)."""
    path = Path(path)
    raw = path.read_bytes()
    fields, payload_start = _parse_header(raw, path)

    value, line = _require(fields, "dimension", path)
    if value != "3":
        raise NrrdFormatError(f"{path}: unsupported dimension in line: {line!r}")
    value, line = _require(fields, "type", path)
    if value not in _TYPES:
        raise NrrdFormatError(f"{path}: unsupported type in line: {line!r}")
    dtype = _TYPES[value]
    value, line = _require(fields, "encoding", path)
    if value != "raw":
        raise NrrdFormatError(f"{path}: unsupported encoding in line: {line!r}")
    value, line = _require(fields, "endian", path)
    if value != "little":
        raise NrrdFormatError(f"{path}: unsupported endian in line: {line!r}")

    value, line = _require(fields, "sizes", path)
    try:
        sizes = tuple(int(x) for x in value.split())
    except ValueError:
        raise NrrdFormatError(f"{path}: malformed sizes in line: {line!r}") from None
    if len(sizes) != 3 or min(sizes) < 1:
        raise NrrdFormatError(f"{path}: sizes must be three positive integers: {line!r}")

    if "spacings" in fields:
        value, line = fields["spacings"]
        try:
            spacing = tuple(float(x) for x in value.split())
        except ValueError:
            raise NrrdFormatError(f"{path}: malformed spacings in line: {line!r}") from None
        if len(spacing) != 3:
            raise NrrdFormatError(f"{path}: spacings must give three values: {line!r}")
    elif "space directions" in fields:
        value, line = fields["space directions"]
        spacing = _parse_space_directions(value, line)
    else:
        raise NrrdFormatError(f"{path}: header must declare 'spacings' or 'space directions'")

    nx, ny, nz = sizes
    expected = nx * ny * nz * dtype.itemsize
    payload = raw[payload_start:]
    if len(payload) != expected:
        raise NrrdFormatError(
            f"{path}: payload truncated or oversized: expected {expected} bytes "
            f"for sizes {sizes} ({dtype.name}), found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(nz, ny, nx)

    if as_mask:
        if dtype != _TYPES["uint8"]:
            raise NrrdFormatError(f"{path}: mask files must be uint8, found {dtype.name}")
        if not np.isin(data, (0, 1)).all():
            raise NrrdFormatError(f"{path}: mask payload contains values other than 0/1")
        return RoiMask(dims=(nx, ny, nz), bits=data.astype(bool))
    return ScalarVolume(dims=(nx, ny, nz), spacing=spacing, voxels=data.astype(np.float64))


def write_nrrd(
    obj: ScalarVolume | RoiMask,
    path: str | Path,
    dtype: str | None = None,
    mask_spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> None:
    """Write an attached-header raw NRRD that read_nrrd round-trips.

    Volumes default to float32 (int16 available via dtype= when the values
    fit). Masks are always uint8; they carry no spacing of their own, so the
    companion volume's spacing can be recorded via mask_spacing.
    """
    path = Path(path)
    if isinstance(obj, RoiMask):
        data = obj.bits.astype("u1")
        type_name = "uint8"
        spacing = mask_spacing
    elif isinstance(obj, ScalarVolume):
        type_name = dtype or "float32"
        if type_name not in _TYPES:
            raise NrrdFormatError(f"unsupported output type {type_name!r}")
        values = obj.voxels
        if not np.isfinite(values).all():
            raise ValueError(f"refusing to write {path}: intensities must all be finite")
        if type_name == "int16":
            rounded = np.rint(values)
            if not (np.array_equal(rounded, values) and values.min() >= -32768 and values.max() <= 32767):
                raise ValueError(f"refusing to write {path}: values are not representable as int16")
            data = rounded.astype("<i2")
        else:
            data = values.astype("<f4")
        spacing = obj.spacing
    else:
        raise TypeError(f"cannot write object of type {type(obj).__name__} as NRRD")

    nx, ny, nz = obj.dims
    lines = [
        "NRRD0004",
        f"type: {type_name}",
        "dimension: 3",
        f"sizes: {nx} {ny} {nz}",
        "encoding: raw",
        "endian: little",
        "spacings: " + " ".join(repr(float(s)) for s in spacing),  # repr round-trips exactly
    ]
    header = "\n".join(lines) + "\n\n"
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(data).tobytes())
    except OSError as exc:
        raise OSError(f"failed to write NRRD to {path}: {exc}") from exc
