"""CSV tables, adjacency export, key=value configs and binary checkpoints."""
from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import MedMambaConfig, MedMambaModel, init

CKPT_MAGIC = "medmamba-checkpoint 1"


def fmt(v) -> str:
    """Floats to 9 significant digits (exact float32 round-trip); other values verbatim."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            w.writerow([fmt(v) for v in row])


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty table")
    return rows[0], rows[1:]


def write_adjacency(path, A: np.ndarray) -> None:
    """Square matrix with row ``i`` = target, column ``j`` = source."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got {A.shape}")
    c = A.shape[0]
    write_table(path, ["target"] + [f"src_{j}" for j in range(c)], [[i, *A[i]] for i in range(c)])


def parse_value(text: str):
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if "," in text:
        return tuple(parse_value(t) for t in text.split(",") if t.strip())
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def read_keyvalue(path) -> dict:
    """``key=value`` per line; ``#`` starts a comment; comma lists become tuples."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = parse_value(value)
    return out


def save_checkpoint(model: MedMambaModel, path) -> None:
    """Text header (config, then one ``name shape`` line per tensor) and little-endian f32 payload."""
    named = list(model.named_parameters())
    lines = [CKPT_MAGIC, "config " + json.dumps(dataclasses.asdict(model.config), sort_keys=True)]
    for name, t in named:
        lines.append(f"param {name} {','.join(str(d) for d in t.shape)}")
    lines.append("end")
    payload = b"".join(np.ascontiguousarray(t.data, dtype="<f4").tobytes() for _, t in named)
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8") + payload)


def load_checkpoint(path) -> MedMambaModel:
    blob = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = blob.find(marker)
    if not blob.startswith(CKPT_MAGIC.encode()) or cut < 0:
        raise ValueError(f"{path}: not a checkpoint")
    header = blob[:cut].decode("utf-8").split("\n")
    payload = blob[cut + len(marker) :]
    raw_cfg = json.loads(header[1].split(" ", 1)[1])
    raw_cfg["kernels"] = tuple(raw_cfg["kernels"])
    model = init(MedMambaConfig(**raw_cfg))
    named = dict(model.named_parameters())
    offset = 0
    for line in header[2:]:
        _, name, dims = line.split(" ")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        if name not in named or named[name].shape != shape:
            raise ValueError(f"{path}: parameter {name} {shape} does not fit the configured model")
        count = int(np.prod(shape))
        values = np.frombuffer(payload, dtype="<f4", count=count, offset=offset * 4)
        named[name].data = values.reshape(shape).astype(np.float32)
        offset += count
    if offset * 4 != len(payload):
        raise ValueError(f"{path}: payload size does not match the header")
    return model
