"""CSV and VTK XML PolyData (.vtp) writers plus a reader for round-trips.

Files carry Float32 geometry (in-memory math stays float64 and is quantized
at emission).  Binary .vtp uses the raw appended encoding: an underscore
prefix followed by blocks of [uint32 little-endian byte count][payload].
The reader only supports the subset this writer produces.
"""

from __future__ import annotations

import io
import xml.etree.ElementTree as ET

import numpy as np

from .views import PolyData

CSV_FLOAT_FMT = "%.9g"
ASCII_FLOAT_FMT = "%.9g"  # 9 significant digits round-trip Float32 exactly


class VtpParseError(ValueError):
    pass


def view_filename(view: str, layer: int, step: int, ext: str) -> str:
    """Time-series naming scheme, e.g. weight_grid_0_00001080.vtp."""
    return f"{view}_{layer}_{step:08d}.{ext}"


# ---------------------------------------------------------------------------
# CSV


def write_csv(pd: PolyData, path: str) -> int:
    """Write one row per point: x,y,z then one column per named scalar."""
    pd.validate()
    names = list(pd.point_scalars)
    columns = [pd.points[:, 0], pd.points[:, 1], pd.points[:, 2]]
    columns += [pd.point_scalars[n] for n in names]
    fmt = ",".join([CSV_FLOAT_FMT] * len(columns))
    data = np.column_stack(columns).astype(np.float64)

    total = 0
    with open(path, "w", newline="") as f:
        total += f.write(",".join(["x", "y", "z", *names]) + "\n")
        chunk = 1 << 16
        for start in range(0, pd.n_points, chunk):
            rows = data[start : start + chunk].tolist()
            total += f.write("".join(fmt % tuple(r) + "\n" for r in rows))
    return total


# ---------------------------------------------------------------------------
# VTP writing


def _ascii_floats(arr: np.ndarray) -> str:
    return " ".join(ASCII_FLOAT_FMT % v for v in arr.ravel().tolist())


def _ascii_ints(arr: np.ndarray) -> str:
    return " ".join(str(v) for v in arr.ravel().tolist())


def write_vtp(pd: PolyData, path: str, mode: str = "binary") -> int:
    """Write VTK XML PolyData; mode is "ascii" or "binary" (raw appended)."""
    if mode not in ("ascii", "binary"):
        raise ValueError(f"unknown mode {mode!r}")
    pd.validate()
    n = pd.n_points
    n_verts = pd.verts.shape[0]
    n_polys = pd.quads.shape[0]

    # arrays in document order: point scalars, points, verts, polys
    scalar_names = list(pd.point_scalars)
    arrays: list[tuple[str, str, np.ndarray, int]] = []  # (Name, type, data, ncomp)
    for name in scalar_names:
        arrays.append((name, "Float32", pd.point_scalars[name].astype("<f4"), 1))
    arrays.append(("Points", "Float32", pd.points.astype("<f4"), 3))
    arrays.append(("connectivity", "Int64", pd.verts.astype("<i8"), 1))
    arrays.append(("offsets", "Int64", np.arange(1, n_verts + 1, dtype="<i8"), 1))
    arrays.append(("connectivity", "Int64", pd.quads.astype("<i8").ravel(), 1))
    arrays.append(("offsets", "Int64", (np.arange(n_polys, dtype="<i8") + 1) * 4, 1))

    def data_array(name: str, vtk_type: str, data: np.ndarray, ncomp: int, offset: int) -> str:
        comp = f' NumberOfComponents="{ncomp}"' if ncomp != 1 else ""
        if mode == "ascii":
            text = _ascii_floats(data) if vtk_type == "Float32" else _ascii_ints(data)
            return f'<DataArray type="{vtk_type}" Name="{name}"{comp} format="ascii">{text}</DataArray>'
        return f'<DataArray type="{vtk_type}" Name="{name}"{comp} format="appended" offset="{offset}"/>'

    offsets = []
    pos = 0
    for _, _, data, _ in arrays:
        offsets.append(pos)
        pos += 4 + data.nbytes  # uint32 byte-count header + payload

    tags = [data_array(name, t, data, ncomp, off) for (name, t, data, ncomp), off in zip(arrays, offsets)]

    scalars_attr = f' Scalars="{scalar_names[0]}"' if scalar_names else ""
    out = io.BytesIO()
    out.write(b'<?xml version="1.0"?>\n')
    out.write(b'<VTKFile type="PolyData" version="0.1" byte_order="LittleEndian">\n')
    out.write(b"<PolyData>\n")
    out.write(
        f'<Piece NumberOfPoints="{n}" NumberOfVerts="{n_verts}" NumberOfLines="0" '
        f'NumberOfStrips="0" NumberOfPolys="{n_polys}">\n'.encode()
    )
    out.write(f"<PointData{scalars_attr}>\n".encode())
    for i in range(len(scalar_names)):
        out.write(tags[i].encode() + b"\n")
    out.write(b"</PointData>\n<Points>\n")
    out.write(tags[len(scalar_names)].encode() + b"\n")
    out.write(b"</Points>\n<Verts>\n")
    out.write(tags[len(scalar_names) + 1].encode() + b"\n")
    out.write(tags[len(scalar_names) + 2].encode() + b"\n")
    out.write(b"</Verts>\n<Polys>\n")
    out.write(tags[len(scalar_names) + 3].encode() + b"\n")
    out.write(tags[len(scalar_names) + 4].encode() + b"\n")
    out.write(b"</Polys>\n</Piece>\n</PolyData>\n")
    if mode == "binary":
        out.write(b'<AppendedData encoding="raw">\n_')
        for _, _, data, _ in arrays:
            out.write(np.uint32(data.nbytes).tobytes())
            out.write(data.tobytes())
        out.write(b"\n</AppendedData>\n")
    out.write(b"</VTKFile>\n")

    blob = out.getvalue()
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


# ---------------------------------------------------------------------------
# VTP reading (the writer's subset only)


def _parse_ascii(text: str, vtk_type: str) -> np.ndarray:
    dtype = np.float32 if vtk_type == "Float32" else np.int64
    if text is None or not text.strip():
        return np.empty(0, dtype=dtype)
    return np.array(text.split(), dtype=dtype)


def _read_appended(raw: bytes, offset: int, vtk_type: str) -> np.ndarray:
    if offset + 4 > len(raw):
        raise VtpParseError("appended data truncated")
    nbytes = int(np.frombuffer(raw[offset : offset + 4], dtype="<u4")[0])
    payload = raw[offset + 4 : offset + 4 + nbytes]
    if len(payload) != nbytes:
        raise VtpParseError("appended data truncated")
    dtype = "<f4" if vtk_type == "Float32" else "<i8"
    return np.frombuffer(payload, dtype=dtype).copy()


def read_vtp(path: str) -> PolyData:
    """Parse a .vtp produced by write_vtp back into PolyData."""
    with open(path, "rb") as f:
        blob = f.read()

    raw = b""
    xml_bytes = blob
    marker = blob.find(b"<AppendedData")
    if marker != -1:
        underscore = blob.find(b"_", marker)
        end = blob.rfind(b"</AppendedData>")
        if underscore == -1 or end == -1:
            raise VtpParseError("missing AppendedData body")
        raw = blob[underscore + 1 : end].rstrip(b"\n")
        xml_bytes = blob[:marker] + b"</VTKFile>"

    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as e:
        raise VtpParseError(f"malformed XML: {e}") from None
    if root.tag != "VTKFile" or root.get("type") != "PolyData":
        raise VtpParseError("not a VTKFile of type PolyData")

    piece = root.find("PolyData/Piece")
    if piece is None:
        raise VtpParseError("missing PolyData/Piece element")

    def load_array(el) -> np.ndarray:
        vtk_type = el.get("type")
        if vtk_type not in ("Float32", "Int64"):
            raise VtpParseError(f"unsupported array type {vtk_type}")
        if el.get("format") == "ascii":
            return _parse_ascii(el.text, vtk_type)
        return _read_appended(raw, int(el.get("offset")), vtk_type)

    def section_arrays(tag: str) -> dict[str, np.ndarray]:
        section = piece.find(tag)
        if section is None:
            raise VtpParseError(f"missing {tag} element")
        return {el.get("Name"): load_array(el) for el in section.findall("DataArray")}

    points_el = piece.find("Points/DataArray")
    if points_el is None:
        raise VtpParseError("missing Points element")
    points = load_array(points_el).reshape(-1, 3)

    scalars: dict[str, np.ndarray] = {}
    point_data = piece.find("PointData")
    if point_data is not None:
        for el in point_data.findall("DataArray"):
            scalars[el.get("Name")] = load_array(el)

    verts = section_arrays("Verts")
    polys = section_arrays("Polys")
    vert_conn = verts.get("connectivity", np.empty(0, dtype=np.int64))
    vert_off = verts.get("offsets", np.empty(0, dtype=np.int64))
    if not np.array_equal(vert_off, np.arange(1, vert_conn.size + 1)):
        raise VtpParseError("unsupported Verts layout (expect single-point vertex cells)")
    poly_conn = polys.get("connectivity", np.empty(0, dtype=np.int64))
    poly_off = polys.get("offsets", np.empty(0, dtype=np.int64))
    if poly_conn.size % 4 or not np.array_equal(poly_off, (np.arange(poly_conn.size // 4) + 1) * 4):
        raise VtpParseError("unsupported Polys layout (expect quads)")

    return PolyData(
        points=points,
        verts=vert_conn,
        quads=poly_conn.reshape(-1, 4),
        point_scalars=scalars,
    ).validate()
