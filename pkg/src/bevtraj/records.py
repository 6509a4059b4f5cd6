"""Split directories: ``manifest.json`` plus NDJSON and optional binary records.

Binary layout of ``scenarios.trjk`` (all integers little-endian)::

    file header, 16 bytes
        0   5  magic b"TRJK1"
        5   1  version (uint8, 1)
        6   2  reserved (zero)
        8   4  record count (uint32)
        12  4  reserved (zero)
    record, repeated
        0   4  body length L in bytes (uint32), excluding this word
        4   4  meta length M (uint32)
        8   M  meta JSON, UTF-8 (scenario_id, rec_id, ta_index, agent_ids,
               maneuver_label, map_ref, frame_origin)
        ..     zero padding to a 4-byte boundary
        F   2  field count n (uint16), then 2 reserved bytes
        F+4    n field entries of 40 bytes:
                  16  name, ASCII, NUL padded
                  1   dtype code (1 float32, 2 uint8 mask, 3 int32)
                  1   ndim
                  2   reserved
                  12  three uint32 dims (unused trailing dims are 0)
                  4   offset of the array from the start of the data section
                  4   array length in bytes
        D      data section; arrays row-major, each starting 4-byte aligned
"""

from __future__ import annotations

import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import (
    MAX_SCORED_NEIGHBORS,
    MIN_SCORED_FUTURE,
    AgentClass,
    DataError,
    Scenario,
    ScenarioError,
    validate_scenario,
)

log = logging.getLogger(__name__)

MAGIC = b"TRJK1"
VERSION = 1
MANIFEST = "manifest.json"
NDJSON_NAME = "scenarios.ndjson"
BINARY_NAME = "scenarios.trjk"

FILE_HEADER = struct.Struct("<5sBHII")
FIELD_ENTRY = struct.Struct("<16sBBH3III")
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("u1"), 3: np.dtype("<i4")}

FLOAT_FIELDS = ("inp_pos", "inp_vel", "inp_psi", "trg_pos", "trg_vel", "trg_psi")
ACC_FIELDS = ("inp_acc", "trg_acc")
MASK_FIELDS = ("input_mask", "valid_mask", "sa_mask", "ma_mask")


@dataclass
class SplitSet:
    split: str
    scenarios: list
    index: dict

    def __len__(self) -> int:
        return len(self.scenarios)

    def by_id(self) -> dict:
        return {s.scenario_id: s for s in self.scenarios}


def _align4(n: int) -> int:
    return (n + 3) & ~3


def _meta(s: Scenario) -> dict:
    return {
        "scenario_id": s.scenario_id,
        "rec_id": s.rec_id,
        "ta_index": s.ta_index,
        "agent_ids": list(s.agent_ids),
        "maneuver_label": s.maneuver_label,
        "map_ref": s.map_ref,
        "frame_origin": None if s.frame_origin is None else [float(v) for v in s.frame_origin],
    }


def _binary_fields(s: Scenario) -> list[tuple[str, int, np.ndarray]]:
    fields = [("atype", 3, s.atype.astype("<i4"))]
    for name in FLOAT_FIELDS:
        fields.append((name, 1, getattr(s, name).astype("<f4")))
    for name in MASK_FIELDS:
        fields.append((name, 2, getattr(s, name).astype("u1")))
    for name in ACC_FIELDS:
        arr = getattr(s, name)
        if arr is not None:
            fields.append((name, 1, arr.astype("<f4")))
    return fields


def encode_binary_record(s: Scenario) -> bytes:
    meta = json.dumps(_meta(s), sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = struct.pack("<I", len(meta)) + meta
    head += b"\0" * (_align4(len(head)) - len(head))
    fields = _binary_fields(s)
    table = struct.pack("<HH", len(fields), 0)
    data = bytearray()
    for name, code, arr in fields:
        dims = list(arr.shape) + [0] * (3 - arr.ndim)
        offset = len(data)
        raw = np.ascontiguousarray(arr).tobytes()
        table += FIELD_ENTRY.pack(name.encode("ascii"), code, arr.ndim, 0, *dims, offset, len(raw))
        data += raw
        data += b"\0" * (_align4(len(data)) - len(data))
    body = head + table + bytes(data)
    return struct.pack("<I", len(body)) + body


def decode_binary_record(body: bytes) -> Scenario:
    (meta_len,) = struct.unpack_from("<I", body, 0)
    meta = json.loads(body[4:4 + meta_len].decode("utf-8"))
    pos = _align4(4 + meta_len)
    n_fields, _ = struct.unpack_from("<HH", body, pos)
    pos += 4
    data_start = pos + n_fields * FIELD_ENTRY.size
    arrays = {}
    for i in range(n_fields):
        raw_name, code, ndim, _, d0, d1, d2, offset, nbytes = FIELD_ENTRY.unpack_from(body, pos + i * FIELD_ENTRY.size)
        name = raw_name.rstrip(b"\0").decode("ascii")
        if code not in DTYPE_CODES:
            raise DataError(f"scenario {meta.get('scenario_id')!r}: unknown dtype code {code} for field {name!r}")
        shape = (d0, d1, d2)[:ndim]
        start = data_start + offset
        arr = np.frombuffer(body[start:start + nbytes], dtype=DTYPE_CODES[code]).reshape(shape)
        arrays[name] = arr
    return _scenario_from(meta, arrays)


def _scenario_from(meta: dict, arrays: dict) -> Scenario:
    sid = meta.get("scenario_id", "?")
    try:
        kwargs = {
            "scenario_id": meta["scenario_id"],
            "rec_id": meta["rec_id"],
            "ta_index": meta["ta_index"],
            "agent_ids": meta["agent_ids"],
            "maneuver_label": meta.get("maneuver_label"),
            "map_ref": meta.get("map_ref"),
            "frame_origin": meta.get("frame_origin"),
            "atype": np.asarray(arrays["atype"], dtype=np.int64),
        }
        for name in FLOAT_FIELDS:
            kwargs[name] = np.asarray(arrays[name], dtype=np.float32).astype(np.float64)
        for name in MASK_FIELDS:
            kwargs[name] = np.asarray(arrays[name]).astype(bool)
        for name in ACC_FIELDS:
            if arrays.get(name) is not None:
                kwargs[name] = np.asarray(arrays[name], dtype=np.float32).astype(np.float64)
    except KeyError as exc:
        raise ScenarioError(sid, str(exc.args[0]), "missing field") from None
    except (TypeError, ValueError) as exc:
        raise ScenarioError(sid, "?", f"malformed record: {exc}") from None
    return Scenario(**kwargs)


def _f32(arr: np.ndarray):
    # '%.9g' is enough digits to round-trip any float32 exactly
    a = np.asarray(arr, dtype=np.float32)
    return np.char.mod("%.9g", a).astype(np.float64).tolist()


def encode_ndjson_record(s: Scenario) -> str:
    rec = _meta(s)
    rec["atype"] = s.atype.astype(int).tolist()
    for name in FLOAT_FIELDS:
        rec[name] = _f32(getattr(s, name))
    for name in MASK_FIELDS:
        rec[name] = getattr(s, name).astype(np.uint8).tolist()
    for name in ACC_FIELDS:
        arr = getattr(s, name)
        if arr is not None:
            rec[name] = _f32(arr)
    return json.dumps(rec, separators=(",", ":"))


def decode_ndjson_record(line: str) -> Scenario:
    rec = json.loads(line)
    arrays = {name: rec.get(name) for name in ("atype",) + FLOAT_FIELDS + MASK_FIELDS + ACC_FIELDS}
    arrays = {k: v for k, v in arrays.items() if v is not None}
    return _scenario_from(rec, arrays)


def split_statistics(scenarios: Iterable[Scenario]) -> dict:
    scenarios = list(scenarios)
    maneuvers = Counter(s.maneuver_label for s in scenarios if s.maneuver_label is not None)
    seen: dict = {}
    for s in scenarios:
        for aid, tok in zip(s.agent_ids, s.atype):
            seen[(s.rec_id, aid)] = int(tok)
    classes = Counter(AgentClass(t).label for t in seen.values())
    return {
        "count": len(scenarios),
        "num_trajectories": int(sum(s.num_agents for s in scenarios)),
        "num_unique_agents": len(seen),
        "maneuver_histogram": {str(k): maneuvers.get(k, 0) for k in range(7)} if maneuvers else {},
        "class_histogram": {c.label: classes.get(c.label, 0) for c in AgentClass},
    }


def write_split(
    scenarios: Iterable[Scenario],
    path,
    *,
    split: str = "train",
    seed: Optional[int] = None,
    config: Optional[dict] = None,
    binary: bool = False,
) -> dict:
    """Validate and write one split directory; return the manifest written.

    Scenarios are written in the order given. Every record is checked against
    the scenario invariants first, so nothing is written for an invalid set.
    """
    scenarios = list(scenarios)
    config = dict(config or {})
    max_nb = int(config.get("neighbors", MAX_SCORED_NEIGHBORS))
    min_future = int(config.get("min_scored_future", MIN_SCORED_FUTURE))
    ids = set()
    for s in scenarios:
        validate_scenario(s, max_neighbors=max_nb, min_scored_future=min_future)
        if s.scenario_id in ids:
            raise ScenarioError(s.scenario_id, "scenario_id", "duplicate scenario id in split")
        ids.add(s.scenario_id)

    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    for stale in (NDJSON_NAME, BINARY_NAME):
        (out / stale).unlink(missing_ok=True)

    files = {"ndjson": None, "binary": None}
    if scenarios:
        with open(out / NDJSON_NAME, "w", encoding="utf-8", newline="\n") as fh:
            for s in scenarios:
                fh.write(encode_ndjson_record(s))
                fh.write("\n")
        files["ndjson"] = NDJSON_NAME
        if binary:
            with open(out / BINARY_NAME, "wb") as fh:
                fh.write(FILE_HEADER.pack(MAGIC, VERSION, 0, len(scenarios), 0))
                for s in scenarios:
                    fh.write(encode_binary_record(s))
            files["binary"] = BINARY_NAME

    manifest = {
        "format": "bevtraj-split",
        "version": VERSION,
        "split": split,
        "seed": seed,
        "config": config,
        "files": files,
        "scenario_ids": [s.scenario_id for s in scenarios],
    }
    manifest.update(split_statistics(scenarios))
    with open(out / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(path) -> dict:
    p = Path(path) / MANIFEST
    try:
        with open(p, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{p}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: corrupt manifest ({exc})") from None
    for key in ("split", "count", "scenario_ids", "files"):
        if key not in manifest:
            raise DataError(f"{p}: corrupt manifest, missing {key!r}")
    if manifest["count"] != len(manifest["scenario_ids"]):
        raise DataError(f"{p}: corrupt manifest, count does not match scenario_ids")
    return manifest


def iter_binary(path):
    with open(path, "rb") as fh:
        header = fh.read(FILE_HEADER.size)
        if len(header) != FILE_HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, version, _, count, _ = FILE_HEADER.unpack(header)
        if magic != MAGIC or version != VERSION:
            raise DataError(f"{path}: not a TRJK1 file")
        for i in range(count):
            word = fh.read(4)
            if len(word) != 4:
                raise DataError(f"{path}: truncated at record {i}")
            (length,) = struct.unpack("<I", word)
            body = fh.read(length)
            if len(body) != length:
                raise DataError(f"{path}: truncated at record {i}")
            yield decode_binary_record(body)


def iter_ndjson(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield decode_ndjson_record(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None


def read_split(path, source: str = "auto", validate: bool = True) -> SplitSet:
    """Load a split directory written by :func:`write_split`.

    ``source`` picks the record encoding: ``"binary"``, ``"ndjson"`` or
    ``"auto"`` (binary when present).
    """
    path = Path(path)
    manifest = read_manifest(path)
    files = manifest["files"]
    if source == "auto":
        source = "binary" if files.get("binary") else "ndjson"
    scenarios: list = []
    if manifest["count"]:
        name = files.get(source)
        if not name:
            raise DataError(f"{path}: split has no {source} records")
        reader = iter_binary if source == "binary" else iter_ndjson
        scenarios = list(reader(path / name))
    ids = [s.scenario_id for s in scenarios]
    if ids != manifest["scenario_ids"]:
        raise DataError(f"{path}: records do not match the manifest scenario list")
    if validate:
        cfg = manifest.get("config") or {}
        for s in scenarios:
            validate_scenario(
                s,
                max_neighbors=int(cfg.get("neighbors", MAX_SCORED_NEIGHBORS)),
                min_scored_future=int(cfg.get("min_scored_future", MIN_SCORED_FUTURE)),
            )
    return SplitSet(manifest["split"], scenarios, manifest)

