"""Field dumps: raw little-endian float64 plus a JSON sidecar; CSV helpers."""
import csv
import json
import os

import numpy as np

META_KEYS = ("shape", "x0", "dx", "xi0", "dxi", "hbar")
FLOAT_FMT = "{:.12e}"


def dump_field(path, values, meta):
    """Write ``path`` (.bin, row-major '<f8') and ``path`` with .json metadata."""
    values = np.ascontiguousarray(values, dtype="<f8")
    base = os.path.splitext(str(path))[0]
    values.tofile(base + ".bin")
    record = {k: meta[k] for k in META_KEYS if k in meta}
    record["shape"] = list(values.shape)
    record.update({k: v for k, v in meta.items() if k not in record})
    with open(base + ".json", "w") as fh:
        json.dump(_plain(record), fh, indent=2, sort_keys=True)
    return base + ".bin", base + ".json"


def load_field(path):
    base = os.path.splitext(str(path))[0]
    with open(base + ".json") as fh:
        meta = json.load(fh)
    values = np.fromfile(base + ".bin", dtype="<f8").reshape(meta["shape"])
    return values, meta


def dump_wigner(path, w):
    return dump_field(path, w.values, w.metadata())


def dump_trajectory(directory, times, fields, meta_fn, stem="frame"):
    """One dump per frame plus ``index.json`` listing file stems and times."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, (t, f) in enumerate(zip(times, fields)):
        name = f"{stem}_{i:05d}"
        meta = dict(meta_fn(f))
        meta["t"] = float(t)
        dump_field(os.path.join(directory, name), getattr(f, "values", f), meta)
        entries.append({"file": name, "t": float(t)})
    with open(os.path.join(directory, "index.json"), "w") as fh:
        json.dump({"frames": entries}, fh, indent=2)
    return entries


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def fmt(v):
    """Deterministic text for CSV cells."""
    if isinstance(v, (bool, np.bool_)):
        return "PASS" if v else "FAIL"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt(v) for v in row])
    return path
