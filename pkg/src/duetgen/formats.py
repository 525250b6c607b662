"""Binary file formats. All little-endian, float32 payloads.

=====  =========================================================================
IDM1   motion: magic, u16 version, u32 T, u32 joints (55), f32 fps,
       then per frame 3 f32 root translation + 55*3 f32 axis-angle
IDF1   music features: magic, u32 T, u32 35, f32 fps, T*35 f32 row-major
IDR1   representation cache: magic, u32 T, u32 C (4981), f32 fps, T*C f32
IDC1   checkpoint: magic, u16 schema version, u32 length + UTF-8 JSON config,
       u32 tensor count, then per tensor u16 name length, name, u8 ndim,
       ndim u32 dims, f32 data
=====  =========================================================================

Every reader raises :class:`FormatError` naming the file and byte offset.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from duetgen.body_model import N_JOINTS
from duetgen.motion import MotionSequence
from duetgen.music import N_MUSIC, MusicFeatures
from duetgen.representation import N_CHANNELS, RepSequence

MOTION_VERSION = 1
CHECKPOINT_VERSION = 1
MOTION_HEADER = struct.Struct("<4sHIIf")  # 18 bytes
MATRIX_HEADER = struct.Struct("<4sIIf")  # 16 bytes
FRAME_FLOATS = 3 + 3 * N_JOINTS


class FormatError(ValueError):
    """Corrupted, truncated or mismatched file."""


class _Reader:
    def __init__(self, path):
        self.path = Path(path)
        self.buf = self.path.read_bytes()
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.path}: truncated while reading {what} at byte offset {self.pos} "
                f"(need {n} bytes, {len(self.buf) - self.pos} left)"
            )
        out = self.buf[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct, what: str):
        return st.unpack(self.take(st.size, what))

    def floats(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(4 * count, what), dtype="<f4").copy()

    def magic(self, got: bytes, want: bytes):
        if got != want:
            raise FormatError(f"{self.path}: bad magic {got!r} at byte offset 0, expected {want!r}")

    def done(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{self.path}: {len(self.buf) - self.pos} trailing bytes at byte offset {self.pos}")


def write_motion(path, motion: MotionSequence) -> None:
    T = len(motion)
    payload = np.concatenate(
        [motion.root_translation, motion.joint_rotations.reshape(T, -1)], axis=1
    ).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MOTION_HEADER.pack(b"IDM1", MOTION_VERSION, T, N_JOINTS, motion.fps))
        fh.write(payload.tobytes())


def read_motion(path, subject: str = "leader") -> MotionSequence:
    r = _Reader(path)
    magic, version, T, nj, fps = r.unpack(MOTION_HEADER, "header")
    r.magic(magic, b"IDM1")
    if version != MOTION_VERSION:
        raise FormatError(f"{r.path}: unsupported version {version} at byte offset 4")
    if nj != N_JOINTS:
        raise FormatError(f"{r.path}: joint count {nj} at byte offset 10, expected {N_JOINTS}")
    data = r.floats(T * FRAME_FLOATS, "frames").reshape(T, FRAME_FLOATS)
    r.done()
    return MotionSequence(data[:, :3].astype(float), data[:, 3:].reshape(T, N_JOINTS, 3).astype(float),
                          float(fps), subject)


def _write_matrix(path, magic: bytes, data: np.ndarray, fps: float) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MATRIX_HEADER.pack(magic, data.shape[0], data.shape[1], fps))
        fh.write(data.tobytes())


def _read_matrix(path, magic: bytes, cols: int):
    r = _Reader(path)
    got, T, C, fps = r.unpack(MATRIX_HEADER, "header")
    r.magic(got, magic)
    if C != cols:
        raise FormatError(f"{r.path}: column count {C} at byte offset 8, expected {cols}")
    data = r.floats(T * C, "matrix").reshape(T, C)
    r.done()
    return data, float(fps)


def write_music(path, music: MusicFeatures) -> None:
    if str(path).endswith((".csv", ".txt")):
        write_music_text(path, music)
    else:
        _write_matrix(path, b"IDF1", music.data, music.fps)


def read_music(path) -> MusicFeatures:
    if str(path).endswith((".csv", ".txt")):
        return read_music_text(path)
    data, fps = _read_matrix(path, b"IDF1", N_MUSIC)
    try:
        return MusicFeatures(data, fps)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


load_music_features = read_music


def write_music_text(path, music: MusicFeatures) -> None:
    """Comma-delimited alternative; values written with float32 round-trip precision."""
    rows = [f"# fps={music.fps!r}"]
    data = music.data.astype(np.float32)
    rows += [",".join(repr(float(v)) for v in row) for row in data]
    Path(path).write_text("\n".join(rows) + "\n")


def read_music_text(path) -> MusicFeatures:
    lines = Path(path).read_text().splitlines()
    fps = 30.0
    rows = []
    for n, line in enumerate(lines):
        if line.startswith("#"):
            if "fps=" in line:
                fps = float(line.split("fps=")[1])
            continue
        if not line.strip():
            continue
        vals = line.split(",")
        if len(vals) != N_MUSIC:
            raise FormatError(f"{path}: line {n + 1} has {len(vals)} columns, expected {N_MUSIC}")
        rows.append([float(v) for v in vals])
    data = np.array(rows, dtype=np.float32).reshape(-1, N_MUSIC)
    try:
        return MusicFeatures(data, fps)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_rep(path, rep: RepSequence) -> None:
    _write_matrix(path, b"IDR1", rep.data, rep.fps)


def read_rep(path) -> RepSequence:
    data, fps = _read_matrix(path, b"IDR1", N_CHANNELS)
    return RepSequence(data.astype(np.float64), fps)


def write_checkpoint(path, config: dict, tensors: dict) -> None:
    """``tensors`` maps names to arrays (numpy or anything ``np.asarray`` accepts)."""
    blob = json.dumps(config, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHI", b"IDC1", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
            nb = name.encode()
            fh.write(struct.pack("<HB", len(nb), arr.ndim))
            fh.write(nb)
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path):
    """Returns (config dict, {name: float32 array})."""
    r = _Reader(path)
    magic, version, n = r.unpack(struct.Struct("<4sHI"), "header")
    r.magic(magic, b"IDC1")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{r.path}: unsupported schema version {version} at byte offset 4")
    try:
        config = json.loads(r.take(n, "config block").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{r.path}: unreadable config block at byte offset 10 ({exc})") from exc
    (count,) = r.unpack(struct.Struct("<I"), "tensor count")
    tensors = {}
    for _ in range(count):
        ln, ndim = r.unpack(struct.Struct("<HB"), "tensor header")
        name = r.take(ln, "tensor name").decode()
        shape = r.unpack(struct.Struct(f"<{ndim}I"), f"shape of {name}")
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = r.floats(size, f"data of {name}").reshape(shape)
    r.done()
    return config, tensors
