"""On-disk format shared by checkpoints, datasets, and challenge bundles.

Every artifact is a JSON manifest plus one raw binary blob of little-endian
64-bit floats. The manifest lists each array's name, shape and byte offset
into the blob, along with caller-supplied metadata, so files are readable
without this package.
"""

import json
import os

import numpy as np

DTYPE = "<f8"


def write_arrays(json_path, arrays, meta=None):
    """Write `arrays` (ordered dict name -> ndarray) next to a manifest.

    The blob lands at json_path with .bin substituted for .json.
    """
    json_path = os.fspath(json_path)
    if not json_path.endswith(".json"):
        raise ValueError(f"manifest path must end in .json: {json_path}")
    bin_path = json_path[:-5] + ".bin"

    index = []
    offset = 0
    with open(bin_path, "wb") as fh:
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            raw = arr.astype(DTYPE).tobytes()
            index.append({"name": name, "shape": list(arr.shape), "offset": offset})
            fh.write(raw)
            offset += len(raw)

    manifest = {
        "format": "patchbreak-blob-v1",
        "dtype": DTYPE,
        "bin": os.path.basename(bin_path),
        "arrays": index,
        "meta": meta or {},
    }
    with open(json_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return json_path


def read_arrays(json_path):
    """Inverse of write_arrays. Returns (meta, dict name -> ndarray)."""
    json_path = os.fspath(json_path)
    with open(json_path) as fh:
        manifest = json.load(fh)
    bin_path = os.path.join(os.path.dirname(json_path), manifest["bin"])
    with open(bin_path, "rb") as fh:
        raw = fh.read()
    arrays = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(raw, dtype=DTYPE, count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return manifest["meta"], arrays


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
