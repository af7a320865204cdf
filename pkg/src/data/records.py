"""
Dataset file IO. Layout (little-endian throughout, see docs/DATASET_FORMAT.md):

    8 bytes   magic b"HMRDSET1"
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON header
    n records of fixed size, each ending in a CRC-32 of its preceding bytes
"""

import json
import logging
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from src.data.labels import LABELS_3D, LabeledExample
from src.errors import DatasetError

logger = logging.getLogger(__name__)

MAGIC = b"HMRDSET1"
DATASET_FORMAT_VERSION = 1


def record_dtype(image_size: int, num_keypoints: int, pose_dim: int, num_betas: int,
                 num_vertices: int) -> np.dtype:
    return np.dtype([
        ('has_3d', 'u1'),
        ('image', 'u1', (image_size, image_size, 3)),
        ('keypoints2d', '<f8', (num_keypoints, 2)),
        ('joints3d', '<f8', (num_keypoints, 3)),
        ('pose_theta', '<f8', (pose_dim,)),
        ('shape_beta', '<f8', (num_betas,)),
        ('camera_pi', '<f8', (3,)),
        ('vertices', '<f8', (num_vertices, 3)),
        ('crc32', '<u4'),
    ])


def write_records(path: Union[str, Path], examples: Sequence[LabeledExample], dims: Dict[str, int],
                  header_extra: Dict[str, Any]) -> Path:
    """Write examples with their header; absent 3D labels are stored as zeros"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dtype = record_dtype(**dims)
    records = np.zeros(len(examples), dtype=dtype)
    for i, ex in enumerate(examples):
        ex.validate()
        records['has_3d'][i] = 1 if ex.has_3d else 0
        records['image'][i] = ex.image
        records['keypoints2d'][i] = ex.keypoints2d
        records['camera_pi'][i] = ex.camera_pi
        if ex.has_3d:
            for name in LABELS_3D:
                records[name][i] = getattr(ex, name)
        body = records[i:i + 1].tobytes()[:-4]
        records['crc32'][i] = zlib.crc32(body)

    header = {'format_version': DATASET_FORMAT_VERSION, 'n_records': len(examples),
              'record_size': dtype.itemsize, 'dims': dims, **header_extra}
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
    with open(path, 'wb') as handle:
        handle.write(MAGIC)
        handle.write(struct.pack('<I', len(header_bytes)))
        handle.write(header_bytes)
        handle.write(records.tobytes())
    logger.info(f"Wrote {len(examples)} records ({dtype.itemsize} bytes each) to {path}")
    return path


def read_header(path: Union[str, Path]) -> Tuple[Dict[str, Any], int]:
    """Parsed header and the byte offset of the first record"""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Dataset file not found: {path}")
    with open(path, 'rb') as handle:
        magic = handle.read(len(MAGIC))
        if magic != MAGIC:
            raise DatasetError(f"{path} is not a dataset file (bad magic)")
        raw_len = handle.read(4)
        if len(raw_len) != 4:
            raise DatasetError(f"{path} ends inside the header")
        (header_len,) = struct.unpack('<I', raw_len)
        raw = handle.read(header_len)
    if len(raw) != header_len:
        raise DatasetError(f"{path} ends inside the header")
    try:
        header = json.loads(raw.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetError(f"{path} has an unreadable header: {e}")
    version = header.get('format_version')
    if version != DATASET_FORMAT_VERSION:
        raise DatasetError(f"Unsupported dataset format version {version} (expected {DATASET_FORMAT_VERSION})")
    return header, len(MAGIC) + 4 + header_len


def read_records(path: Union[str, Path]) -> Tuple[Dict[str, Any], List[LabeledExample]]:
    """Load and verify every record; truncation or a CRC mismatch names the record"""
    path = Path(path)
    header, offset = read_header(path)
    dtype = record_dtype(**header['dims'])
    if dtype.itemsize != header['record_size']:
        raise DatasetError(f"{path}: record size {header['record_size']} does not match dims ({dtype.itemsize})")

    n = int(header['n_records'])
    data = path.read_bytes()[offset:]
    expected = n * dtype.itemsize
    if len(data) < expected:
        raise DatasetError(f"{path} is truncated: {len(data)} of {expected} record bytes present",
                           record_index=len(data) // dtype.itemsize)
    if len(data) > expected:
        raise DatasetError(f"{path} has {len(data) - expected} trailing bytes after the last record")

    records = np.frombuffer(data, dtype=dtype, count=n)
    examples = []
    for i in range(n):
        body = data[i * dtype.itemsize:(i + 1) * dtype.itemsize - 4]
        if zlib.crc32(body) != int(records[i]['crc32']):
            raise DatasetError(f"{path}: checksum mismatch", record_index=i)
        examples.append(_to_example(records[i], path, i))
    return header, examples


def _to_example(rec: np.void, path: Path, index: int) -> LabeledExample:
    has_3d = bool(rec['has_3d'])
    example = LabeledExample(
        image=np.array(rec['image']),
        has_3d=has_3d,
        keypoints2d=np.array(rec['keypoints2d']),
        camera_pi=np.array(rec['camera_pi']),
        joints3d=np.array(rec['joints3d']) if has_3d else None,
        pose_theta=np.array(rec['pose_theta']) if has_3d else None,
        shape_beta=np.array(rec['shape_beta']) if has_3d else None,
        vertices=np.array(rec['vertices']) if has_3d else None,
    )
    try:
        return example.validate()
    except ValueError as e:
        raise DatasetError(f"{path}: invalid record: {e}", record_index=index)
