"""File formats: long-format series CSV, metadata sidecar, flat config files and the model file."""

from __future__ import annotations

import csv
import json
import math
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .dcae import DcaeModel, _assemble
from .nn import LayerSpec
from .windowing import TimeSeries

MAGIC = b"TSIDEC1\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")  # magic, version, header byte length


class ParseError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = str(path), line


class ModelFormatError(ValueError):
    def __init__(self, offset, message):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


# ---------------------------------------------------------------------------
# series CSV


def _float(text, path, line, column):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, line, f"non-numeric {column} {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, line, f"non-finite {column} {text!r}")
    return v


def _numeric_order(keys):
    try:
        return sorted(keys, key=float)
    except ValueError:
        return sorted(keys)


def ingest_csv(path, metadata_path=None) -> list[TimeSeries]:
    """Read long-format ``series_id,timestamp,value`` rows into series.

    Series keep their order of first appearance.  Within a series rows are
    ordered by timestamp: numerically when every timestamp of that series
    parses as a number, lexicographically otherwise.
    """
    path = Path(path)
    groups: OrderedDict[str, dict] = OrderedDict()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["series_id", "timestamp", "value"]:
            raise ParseError(path, 1, "expected header 'series_id,timestamp,value'")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(path, line, f"expected 3 fields, got {len(row)}")
            sid, ts, val = (c.strip() for c in row)
            if not sid:
                raise ParseError(path, line, "empty series_id")
            value = _float(val, path, line, "value")
            rows = groups.setdefault(sid, {})
            if ts in rows:
                raise ParseError(path, line, f"duplicate timestamp {ts!r} for series {sid!r}")
            rows[ts] = value
    if not groups:
        raise ParseError(path, 2, "no data rows")
    meta = read_metadata_csv(metadata_path) if metadata_path else {}
    series = []
    for sid, rows in groups.items():
        keys = _numeric_order(rows)
        series.append(TimeSeries(sid, [rows[k] for k in keys], dict(meta.get(sid, {}))))
    return series


def read_metadata_csv(path) -> dict:
    """``series_id,weight,energy,duration`` sidecar; any subset of the value columns may appear."""
    path = Path(path)
    out = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if not header or header[0] != "series_id":
            raise ParseError(path, 1, "metadata header must start with 'series_id'")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, line, f"expected {len(header)} fields, got {len(row)}")
            sid = row[0].strip()
            if sid in out:
                raise ParseError(path, line, f"duplicate series_id {sid!r}")
            out[sid] = {h: _float(v, path, line, h) for h, v in zip(header[1:], row[1:]) if v.strip()}
    return out


def write_long_csv(series, path, step: float = 1.0):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "timestamp", "value"])
        for s in series:
            for i, v in enumerate(s.values):
                w.writerow([s.id, repr(float(i * step)), repr(float(v))])


def write_metadata_csv(series, path, columns=("weight", "energy", "duration")):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", *columns])
        for s in series:
            w.writerow([s.id, *(repr(float(s.metadata[c])) if c in s.metadata else "" for c in columns)])


# ---------------------------------------------------------------------------
# config


def parse_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment.  Values stay strings."""
    path = Path(path)
    out = {}
    for n, raw in enumerate(path.read_text().splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ParseError(path, n, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (t.strip() for t in text.split("=", 1))
        if not key:
            raise ParseError(path, n, "empty key")
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# model file


def _header(model: DcaeModel, centroids) -> dict:
    return {
        "config": model.config(),
        "n_params": int(model.n_params),
        "n_encoder_params": int(model.n_encoder_params),
        "centroids_shape": list(centroids.shape),
        "layers": {
            "encoder": [s.to_dict() for s in model.encoder.specs()],
            "decoder": [s.to_dict() for s in model.decoder.specs()],
        },
    }


def save_model(model: DcaeModel, path, centroids=None):
    """Write the model file.

    Layout (all integers little-endian)::

        8 bytes   magic b"TSIDEC1\\0"
        uint32    format version
        uint32    header length H
        H bytes   UTF-8 JSON header, sorted keys
        float64   parameters (encoder then decoder, declaration order)
        float64   centroids, row-major
    """
    cent = np.zeros((0, model.latent_dim)) if centroids is None else np.asarray(centroids, dtype=np.float64)
    header = json.dumps(_header(model, cent), sort_keys=True, separators=(",", ":")).encode()
    with Path(path).open("wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(model.params, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(cent, dtype="<f8").tobytes())


def load_model(path):
    """Read a model file written by :func:`save_model`; returns ``(model, centroids)``."""
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        raise ModelFormatError(len(blob), f"file truncated inside the {_PREFIX.size}-byte prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ModelFormatError(0, f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(8, f"unsupported format version {version} (expected {FORMAT_VERSION})")
    start = _PREFIX.size
    if len(blob) < start + hlen:
        raise ModelFormatError(len(blob), f"file truncated inside the header (needs {start + hlen} bytes)")
    try:
        header = json.loads(blob[start:start + hlen].decode())
        cfg = header["config"]
        model = _assemble(cfg["input_shape"][0], cfg["input_shape"][1], cfg["latent_dim"],
                          tuple(cfg["filters"]), tuple(cfg["dense_widths"]))
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise ModelFormatError(start, f"invalid header: {exc}") from None
    for part, seq in (("encoder", model.encoder), ("decoder", model.decoder)):
        expected = [s.to_dict() for s in seq.specs()]
        stored = header.get("layers", {}).get(part)
        if stored != expected:
            raise ModelFormatError(start, f"{part} layer list does not match the architecture in the header")
    if header.get("n_params") != model.n_params:
        raise ModelFormatError(start, f"header n_params {header.get('n_params')} != rebuilt {model.n_params}")
    cshape = tuple(header["centroids_shape"])
    off = start + hlen
    need = off + 8 * (model.n_params + int(np.prod(cshape)))
    if len(blob) < need:
        raise ModelFormatError(len(blob), f"file truncated: parameter data ends at {need}")
    if len(blob) > need:
        raise ModelFormatError(need, f"{len(blob) - need} unexpected trailing bytes")
    model.params[...] = np.frombuffer(blob, dtype="<f8", count=model.n_params, offset=off)
    off += 8 * model.n_params
    centroids = np.frombuffer(blob, dtype="<f8", count=int(np.prod(cshape)), offset=off).reshape(cshape).copy()
    return model, centroids


def layer_specs_from_file(path) -> list[LayerSpec]:
    blob = Path(path).read_bytes()
    _, _, hlen = _PREFIX.unpack_from(blob, 0)
    header = json.loads(blob[_PREFIX.size:_PREFIX.size + hlen].decode())
    return [LayerSpec.from_dict(d) for part in ("encoder", "decoder") for d in header["layers"][part]]
