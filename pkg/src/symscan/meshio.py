"""ASCII OBJ and ASCII/binary-little-endian PLY readers, plus PLY point writers."""

import struct

import numpy as np

from .errors import ParseError

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_obj(path):
    """Parse an ASCII OBJ file into (vertices, faces) arrays.

    Polygonal faces are fan-triangulated; texture/normal references are
    ignored. Raises ParseError on malformed content.
    """
    verts = []
    faces = []
    try:
        with open(path, "r", errors="replace") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                tag = parts[0]
                if tag == "v":
                    if len(parts) < 4:
                        raise ParseError(f"{path}:{lineno}: vertex with < 3 coordinates")
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif tag == "f":
                    idx = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        if i < 0:
                            i = len(verts) + i + 1
                        if i < 1:
                            raise ParseError(f"{path}:{lineno}: face index out of range")
                        idx.append(i - 1)
                    if len(idx) < 3:
                        raise ParseError(f"{path}:{lineno}: face with < 3 vertices")
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
    except (ValueError, OSError) as exc:
        raise ParseError(f"cannot parse OBJ {path}: {exc}") from exc
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and f.max() >= len(v):
        raise ParseError(f"{path}: face index beyond vertex count")
    return v, f


def _parse_ply_header(fh, path):
    line = fh.readline()
    if line.strip() != b"ply":
        raise ParseError(f"{path}: missing ply magic")
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype) or ('list', count_dt, item_dt, name)])
    while True:
        line = fh.readline()
        if not line:
            raise ParseError(f"{path}: unterminated PLY header")
        tokens = line.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            if tokens[1] == "list":
                elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
            else:
                elements[-1][2].append((tokens[2], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def load_ply(path):
    """Parse a PLY file into (vertices, faces); faces may be empty.

    Supports ASCII and binary_little_endian with scalar vertex properties
    and a single face list property.
    """
    try:
        with open(path, "rb") as fh:
            fmt, elements = _parse_ply_header(fh, path)
            data = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    verts = np.zeros((0, 3))
    faces = []
    try:
        if fmt == "ascii":
            tokens = data.split()
            pos = 0
            for name, count, props in elements:
                if name == "vertex":
                    width = len(props)
                    cols = {p[0]: k for k, p in enumerate(props)}
                    if not {"x", "y", "z"} <= set(cols):
                        raise ParseError(f"{path}: vertex element lacks x/y/z")
                    arr = np.array(tokens[pos:pos + count * width], dtype=np.float64)
                    if arr.size != count * width:
                        raise ParseError(f"{path}: truncated vertex data")
                    arr = arr.reshape(count, width)
                    verts = arr[:, [cols["x"], cols["y"], cols["z"]]]
                    pos += count * width
                elif name == "face":
                    for _ in range(count):
                        k = int(tokens[pos]); pos += 1
                        idx = [int(t) for t in tokens[pos:pos + k]]
                        if len(idx) != k:
                            raise ParseError(f"{path}: truncated face data")
                        pos += k
                        for j in range(1, k - 1):
                            faces.append([idx[0], idx[j], idx[j + 1]])
                else:
                    # skip unknown element (scalar properties only)
                    pos += count * len(props)
        else:
            off = 0
            for name, count, props in elements:
                if name == "vertex":
                    fields = [(p[0], "<" + _PLY_DTYPES[p[1]]) for p in props]
                    dt = np.dtype(fields)
                    end = off + dt.itemsize * count
                    if end > len(data):
                        raise ParseError(f"{path}: truncated vertex data")
                    rec = np.frombuffer(data[off:end], dtype=dt)
                    verts = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(np.float64)
                    off = end
                elif name == "face":
                    if len(props) != 1 or props[0][0] != "list":
                        raise ParseError(f"{path}: unsupported face properties")
                    _, cdt, idt, _ = props[0]
                    csz = np.dtype(_PLY_DTYPES[cdt]).itemsize
                    isz = np.dtype(_PLY_DTYPES[idt]).itemsize
                    for _ in range(count):
                        k = int(np.frombuffer(data[off:off + csz], dtype="<" + _PLY_DTYPES[cdt])[0])
                        off += csz
                        idx = np.frombuffer(data[off:off + k * isz], dtype="<" + _PLY_DTYPES[idt])
                        if idx.size != k:
                            raise ParseError(f"{path}: truncated face data")
                        off += k * isz
                        for j in range(1, k - 1):
                            faces.append([int(idx[0]), int(idx[j]), int(idx[j + 1])])
                else:
                    row = sum(np.dtype(_PLY_DTYPES[p[1]]).itemsize for p in props)
                    off += row * count
    except (ValueError, KeyError, IndexError) as exc:
        raise ParseError(f"cannot parse PLY {path}: {exc}") from exc
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(verts)):
        raise ParseError(f"{path}: face index beyond vertex count")
    return verts, f


def save_ply_points(path, points, colors=None):
    """Write a binary-little-endian PLY point cloud, optionally with uchar RGB."""
    points = np.asarray(points, dtype="<f4")
    n = len(points)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}",
              "property float x", "property float y", "property float z"]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8)
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if colors is None:
            fh.write(points.astype("<f4").tobytes())
        else:
            rec = np.zeros(n, dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                                     ("r", "u1"), ("g", "u1"), ("b", "u1")])
            rec["x"], rec["y"], rec["z"] = points[:, 0], points[:, 1], points[:, 2]
            rec["r"], rec["g"], rec["b"] = colors[:, 0], colors[:, 1], colors[:, 2]
            fh.write(rec.tobytes())


def save_obj(path, vertices, faces):
    """Write an ASCII OBJ mesh."""
    with open(path, "w") as fh:
        for v in np.asarray(vertices, dtype=np.float64):
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in np.asarray(faces, dtype=np.int64):
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
