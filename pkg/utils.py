import csv
import io
import json
import math
from typing import Any, IO, Iterable, Optional, Sequence

import numpy as np
from flask import jsonify

FLOAT_FORMAT = ".17g"


def make_json_response(code=200, message="success", data=None):
    return jsonify({"code": code, "message": message, "data": to_jsonable(data)})


def to_jsonable(obj: Any) -> Any:
    """numpy 类型转为 Python 内置类型，NaN/Inf 转为 None"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def format_float(value: Any) -> str:
    """CSV 单元格：浮点数保留 17 位有效数字"""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    if value is None:
        return ""
    return str(value)


def dumps_json(data: Any) -> str:
    """浮点数按 repr 输出，可精确往返"""
    return json.dumps(to_jsonable(data), ensure_ascii=False, indent=2, sort_keys=False) + "\n"


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(v) for v in row])
    return buffer.getvalue()


def write_text(text: str, path: Optional[str], stream: IO[str]) -> None:
    """写入文件；path 为空或 '-' 时写到 stream"""
    if not path or path == "-":
        stream.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
