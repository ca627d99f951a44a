"""Reading and writing masks, fields and per-cell tables.

Masks are NetPBM P4 bitmaps and fields are raw little-endian float64
arrays; both come with a ``<file>.json`` sidecar holding the domain.
Arrays are flattened in C order and the bitmap has ``counts[-1]`` columns.
"""

import csv
import json
import os
from pathlib import Path

import numpy as np

from ._validation import ConfigurationError
from .grid import BinaryMask, GridDomain, ScalarField


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def _write_sidecar(path, domain, kind, **extra):
    head = dict(domain.to_dict(), kind=kind, **extra)
    sidecar_path(path).write_text(json.dumps(head, indent=2, sort_keys=True))


def _read_sidecar(path, kind):
    side = sidecar_path(path)
    if not side.exists():
        raise ConfigurationError(f"missing sidecar header {side}")
    try:
        head = json.loads(side.read_text())
        domain = GridDomain.from_dict(head)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed sidecar {side}: {exc}") from exc
    if head.get("kind", kind) != kind:
        raise ConfigurationError(f"{path} holds a {head.get('kind')}, expected a {kind}")
    return domain, head


def save_mask(path, mask: BinaryMask):
    counts = mask.domain.counts
    cols = counts[-1]
    rows = int(np.prod(counts[:-1]))
    packed = np.packbits(mask.bits.reshape(rows, cols), axis=1)
    with open(path, "wb") as fh:
        fh.write(f"P4\n{cols} {rows}\n".encode("ascii"))
        fh.write(packed.tobytes())
    _write_sidecar(path, mask.domain, "mask")


def _pbm_tokens(data):
    # header tokens: magic, width, height (comments allowed)
    toks, i = [], 0
    while len(toks) < 3:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        toks.append(data[i:j])
        i = j
    return toks, i + 1


def load_mask(path) -> BinaryMask:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"mask file not found: {path}")
    domain, _ = _read_sidecar(path, "mask")
    data = path.read_bytes()
    try:
        toks, start = _pbm_tokens(data)
    except IndexError as exc:
        raise ConfigurationError(f"truncated bitmap header in {path}") from exc
    if toks[0] != b"P4":
        raise ConfigurationError(f"{path} is not a P4 bitmap")
    cols, rows = int(toks[1]), int(toks[2])
    counts = domain.counts
    if cols != counts[-1] or rows != int(np.prod(counts[:-1])):
        raise ConfigurationError(f"bitmap size {cols}x{rows} does not match sidecar counts {counts}")
    stride = (cols + 7) // 8
    raw = np.frombuffer(data[start:start + stride * rows], dtype=np.uint8)
    if raw.size != stride * rows:
        raise ConfigurationError(f"truncated bitmap payload in {path}")
    bits = np.unpackbits(raw.reshape(rows, stride), axis=1)[:, :cols].astype(bool)
    return BinaryMask(domain, bits.reshape(counts))


def save_field(path, fld: ScalarField):
    np.ascontiguousarray(fld.values, dtype="<f8").tofile(path)
    _write_sidecar(path, fld.domain, "field", unit=fld.unit)


def load_field(path) -> ScalarField:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"field file not found: {path}")
    domain, head = _read_sidecar(path, "field")
    vals = np.fromfile(path, dtype="<f8")
    if vals.size != domain.size:
        raise ConfigurationError(f"{path} holds {vals.size} values, sidecar expects {domain.size}")
    return ScalarField(domain, vals.reshape(domain.counts), head.get("unit", ""))


def write_cells_csv(path, domain: GridDomain, columns: dict):
    """Per-cell table: index columns, center coordinates, then named arrays."""
    X = domain.centers().reshape(-1, domain.n)
    idx = np.indices(domain.counts).reshape(domain.n, -1).T
    names = list(columns)
    cols = [np.asarray(columns[k]).reshape(-1) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{k + 1}" for k in range(domain.n)] + [f"x{k + 1}" for k in range(domain.n)] + names)
        for r in range(X.shape[0]):
            w.writerow(list(idx[r]) + [repr(float(v)) for v in X[r]] + [_fmt(c[r]) for c in cols])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    return repr(float(v))


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating, bool, np.bool_)) else v for v in row])


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + os.linesep)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
