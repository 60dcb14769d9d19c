# keyvote3d/services/ply.py
"""PLY point clouds: ASCII and binary little-endian, vertex x/y/z only.

Coordinates are meters. Extra vertex properties are ignored; faces and other
elements are skipped.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from keyvote3d.errors import IngestError, ParseError, UnsupportedFormat
from keyvote3d.models.geometry import PointCloud

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class _Property:
    name: str
    dtype: str
    list_count_dtype: Optional[str] = None  # set for list properties


@dataclass
class _Element:
    name: str
    count: int
    properties: List[_Property] = field(default_factory=list)

    @property
    def has_lists(self) -> bool:
        return any(p.list_count_dtype for p in self.properties)

    def binary_dtype(self) -> np.dtype:
        return np.dtype([(p.name, "<" + p.dtype) for p in self.properties])


def _ply_type(token: str, line_no: int) -> str:
    try:
        return _PLY_TYPES[token]
    except KeyError:
        raise ParseError(f"unknown PLY property type '{token}'", line=line_no)


def _read_header(data: bytes) -> Tuple[str, List[_Element], int, int]:
    """Returns (format, elements, body byte offset, header line count)."""
    marker = data.find(b"end_header")
    if marker < 0:
        raise ParseError("missing end_header", offset=len(data))
    body_start = data.find(b"\n", marker)
    body_start = len(data) if body_start < 0 else body_start + 1

    try:
        lines = data[:body_start].decode("ascii").splitlines()
    except UnicodeDecodeError as e:
        raise ParseError("PLY header is not ASCII", offset=e.start)

    if not lines or lines[0].strip() != "ply":
        raise ParseError("not a PLY file (missing 'ply' magic)", line=1)

    fmt = None
    elements: List[_Element] = []
    for line_no, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "format":
            if len(tokens) < 2:
                raise ParseError("incomplete format line", line=line_no)
            fmt = tokens[1]
        elif key == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise ParseError(f"bad element line '{raw.strip()}'", line=line_no)
            elements.append(_Element(tokens[1], int(tokens[2])))
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", line=line_no)
            if len(tokens) == 5 and tokens[1] == "list":
                prop = _Property(tokens[4], _ply_type(tokens[3], line_no), _ply_type(tokens[2], line_no))
            elif len(tokens) == 3:
                prop = _Property(tokens[2], _ply_type(tokens[1], line_no))
            else:
                raise ParseError(f"bad property line '{raw.strip()}'", line=line_no)
            if any(p.name == prop.name for p in elements[-1].properties):
                raise ParseError(
                    f"duplicate property '{prop.name}' in element '{elements[-1].name}'", line=line_no
                )
            elements[-1].properties.append(prop)
        elif key == "end_header":
            break
        else:
            raise ParseError(f"unexpected header keyword '{key}'", line=line_no)

    if fmt is None:
        raise ParseError("missing format line", line=len(lines))
    if fmt == "binary_big_endian":
        raise UnsupportedFormat("big-endian PLY is not supported")
    if fmt not in ("ascii", "binary_little_endian"):
        raise UnsupportedFormat(f"unknown PLY format '{fmt}'")
    return fmt, elements, body_start, len(lines)


def _vertex_element(elements: List[_Element]) -> Tuple[int, _Element]:
    for i, el in enumerate(elements):
        if el.name == "vertex":
            names = {p.name for p in el.properties if not p.list_count_dtype}
            missing = {"x", "y", "z"} - names
            if missing:
                raise ParseError(f"vertex element lacks properties {sorted(missing)}")
            return i, el
    raise ParseError("no vertex element")


def _parse_ascii(body: bytes, elements: List[_Element], vertex_at: int, first_line: int) -> np.ndarray:
    lines = body.decode("ascii", errors="replace").splitlines()
    line = 0
    for el in elements[:vertex_at]:
        line += el.count
    vertex = elements[vertex_at]
    if len(lines) < line + vertex.count:
        raise ParseError(
            f"expected {vertex.count} vertex lines, file ends early", line=first_line + len(lines)
        )

    columns = [p.name for p in vertex.properties]
    out = np.empty((vertex.count, 3))
    wanted = [columns.index(axis) for axis in ("x", "y", "z")]
    for row in range(vertex.count):
        tokens = lines[line + row].split()
        values = []
        pos = 0
        try:
            for prop in vertex.properties:
                if prop.list_count_dtype:
                    pos += 1 + int(tokens[pos])
                    values.append(None)
                else:
                    values.append(tokens[pos])
                    pos += 1
            out[row] = [float(values[i]) for i in wanted]
        except (IndexError, ValueError):
            raise ParseError("malformed vertex line", line=first_line + line + row)
    return out


def _parse_binary(body: bytes, body_offset: int, elements: List[_Element], vertex_at: int) -> np.ndarray:
    offset = 0
    for el in elements[:vertex_at]:
        if el.has_lists:
            raise UnsupportedFormat(f"cannot skip list-valued element '{el.name}' before vertices")
        offset += el.count * el.binary_dtype().itemsize
    vertex = elements[vertex_at]
    if vertex.has_lists:
        raise UnsupportedFormat("list-valued vertex properties are not supported in binary PLY")
    dtype = vertex.binary_dtype()
    needed = offset + vertex.count * dtype.itemsize
    if len(body) < needed:
        raise ParseError(
            f"vertex data truncated: need {needed} bytes, have {len(body)}", offset=body_offset + len(body)
        )
    if vertex.count == 0:
        return np.empty((0, 3))
    records = np.frombuffer(body, dtype=dtype, count=vertex.count, offset=offset)
    return np.stack([records[a].astype(np.float64) for a in ("x", "y", "z")], axis=1)


def load_ply(path: PathLike) -> PointCloud:
    """Vertex positions of an ASCII or binary little-endian PLY file, in file order."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}")

    fmt, elements, body_start, header_lines = _read_header(data)
    vertex_at, vertex = _vertex_element(elements)
    body = data[body_start:]
    if fmt == "ascii":
        points = _parse_ascii(body, elements, vertex_at, header_lines + 1)
    else:
        points = _parse_binary(body, body_start, elements, vertex_at)

    if not np.all(np.isfinite(points)):
        raise ParseError("vertex coordinates contain NaN or Inf")
    logger.debug(f"loaded {vertex.count} vertices from {path} ({fmt})")
    return PointCloud(points=points)


def save_ply(cloud: PointCloud, path: PathLike, binary: bool = False) -> None:
    """Write double-precision x/y/z vertices; ASCII uses 17 significant digits."""
    header = "\n".join([
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        "comment units meters",
        f"element vertex {cloud.count}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes())
        else:
            for x, y, z in cloud.points:
                fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n".encode("ascii"))
