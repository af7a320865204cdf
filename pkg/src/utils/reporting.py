"""
Report writing: atomic JSON files and tabular exports of metric tables.
"""

import io
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

EXPORT_FORMATS = ('csv', 'json', 'xlsx')


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def atomic_write_json(path: Union[str, Path], data: Dict[str, Any]) -> Path:
    """Write JSON atomically to prevent corruption"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_suffix(path.suffix + '.tmp')
    with open(temp_path, 'w') as f:
        json.dump(_jsonable(data), f, indent=2)
        f.flush()
        os.fsync(f.fileno())
    os.replace(temp_path, path)
    return path


def create_download_data(df: pd.DataFrame, format_type: str, sheet_name: str = 'Report') -> bytes:
    """Serialise a table as csv, xlsx or json bytes"""
    if format_type == 'csv':
        return df.to_csv(index=False).encode('utf-8')
    elif format_type == 'xlsx':
        output = io.BytesIO()
        with pd.ExcelWriter(output, engine='openpyxl') as writer:
            df.to_excel(writer, index=False, sheet_name=sheet_name)
        return output.getvalue()
    elif format_type == 'json':
        return df.to_json(orient='records', indent=2).encode('utf-8')
    raise ValueError(f"Unknown export format: {format_type}")


def export_table(rows: Iterable[Dict[str, Any]], out_base: Union[str, Path],
                 formats: Iterable[str] = ('csv',), sheet_name: str = 'Report') -> List[Path]:
    """Write rows as <out_base>.<fmt> for every requested format"""
    df = pd.DataFrame(list(rows))
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt in formats:
        if fmt not in EXPORT_FORMATS:
            raise ValueError(f"Export format must be one of {EXPORT_FORMATS}, got {fmt!r}")
        path = out_base.with_suffix(f'.{fmt}')
        path.write_bytes(create_download_data(df, fmt, sheet_name))
        paths.append(path)
        logger.info(f"Exported {len(df)} rows to {path}")
    return paths
