"""OBJ and PLY triangle-mesh readers/writers.

Only geometry is handled: no materials, UVs, or colors. PLY is written
with double-precision vertices so binary round trips are bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh, MeshError, Topology


def load_mesh(path: str | Path, topology: Topology | None = None) -> Mesh:
    """Load an OBJ or PLY triangle mesh.

    When ``topology`` is given, the file's connectivity must equal it
    index-for-index (broken dense correspondence otherwise) and the
    returned mesh shares that instance.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _read_obj(path)
    elif suffix == ".ply":
        vertices, faces = _read_ply(path)
    else:
        raise MeshError(f"unsupported mesh format: {path.name}")
    if topology is None:
        topo = Topology(faces, len(vertices))
    else:
        candidate = Topology(faces, len(vertices))
        if not topology.equals(candidate):
            raise MeshError(f"{path.name}: topology mismatch with registered topology")
        topo = topology
    return Mesh(vertices, topo)


def save_mesh(mesh: Mesh, path: str | Path, binary: bool = True) -> None:
    """Write a mesh; format chosen by extension (.obj, .ply)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        _write_obj(mesh, path)
    elif suffix == ".ply":
        _write_ply(mesh, path, binary=binary)
    else:
        raise MeshError(f"unsupported mesh format: {path.name}")


def mesh_to_ply_bytes(mesh: Mesh, binary: bool = True) -> bytes:
    """Serialize a mesh to PLY in memory (same layout as :func:`save_mesh`)."""
    import io

    buffer = io.BytesIO()
    _write_ply_stream(mesh, buffer, binary=binary)
    return buffer.getvalue()


def load_mesh_dir(directory: str | Path, topology: Topology | None = None) -> list[Mesh]:
    """Load every .obj/.ply in a directory (sorted), sharing one topology."""
    paths = sorted(
        p for p in Path(directory).iterdir() if p.suffix.lower() in (".obj", ".ply")
    )
    if not paths:
        raise MeshError(f"no mesh files in {directory}")
    meshes = []
    for p in paths:
        m = load_mesh(p, topology)
        topology = m.topology
        meshes.append(m)
    return meshes


# --- OBJ ---


def _read_obj(path: Path) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path.name}:{lineno}: malformed vertex line")
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            elif parts[0] == "f":
                refs = parts[1:]
                if len(refs) != 3:
                    raise MeshError(
                        f"{path.name}:{lineno}: non-triangle face with {len(refs)} vertices"
                    )
                idx = []
                for ref in refs:
                    raw = int(ref.split("/")[0])
                    idx.append(raw - 1 if raw > 0 else len(vertices) + raw)
                faces.append(tuple(idx))
    if not vertices:
        raise MeshError(f"{path.name}: no vertices")
    return np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64)


def _write_obj(mesh: Mesh, path: Path) -> None:
    lines = [f"v {x:.10g} {y:.10g} {z:.10g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.topology.faces]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- PLY ---

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


def _read_ply(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MeshError(f"{path.name}: not a PLY file")
        fmt = None
        elements: list[tuple[str, int, list[tuple]]] = []
        while True:
            line = fh.readline()
            if not line:
                raise MeshError(f"{path.name}: truncated header")
            tokens = line.decode("ascii").split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                elements.append((tokens[1], int(tokens[2]), []))
            elif tokens[0] == "property":
                if tokens[1] == "list":
                    elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
                else:
                    elements[-1][2].append(("scalar", tokens[1], tokens[2]))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MeshError(f"{path.name}: unsupported PLY format {fmt}")
        if fmt == "ascii":
            return _read_ply_ascii(fh, elements, path)
        return _read_ply_binary(fh, elements, path)


def _vertex_components(props) -> dict[str, int]:
    names = [p[2] for p in props if p[0] == "scalar"]
    comp = {axis: names.index(axis) for axis in ("x", "y", "z") if axis in names}
    if len(comp) != 3:
        raise MeshError("PLY vertex element missing x/y/z properties")
    return comp


def _read_ply_ascii(fh, elements, path: Path):
    vertices = faces = None
    for name, count, props in elements:
        rows = [fh.readline().decode("ascii").split() for _ in range(count)]
        if name == "vertex":
            comp = _vertex_components(props)
            vertices = np.array(
                [[float(r[comp["x"]]), float(r[comp["y"]]), float(r[comp["z"]])] for r in rows],
                dtype=np.float64,
            )
        elif name == "face":
            out = []
            for r in rows:
                n = int(r[0])
                if n != 3:
                    raise MeshError(f"{path.name}: non-triangle face with {n} vertices")
                out.append([int(r[1]), int(r[2]), int(r[3])])
            faces = np.array(out, dtype=np.int64)
    if vertices is None or faces is None:
        raise MeshError(f"{path.name}: missing vertex or face element")
    return vertices, faces


def _read_ply_binary(fh, elements, path: Path):
    vertices = faces = None
    for name, count, props in elements:
        if name == "vertex":
            if any(p[0] == "list" for p in props):
                raise MeshError(f"{path.name}: list property in vertex element")
            dtype = np.dtype([(f"p{i}", "<" + _PLY_TYPES[p[1]]) for i, p in enumerate(props)])
            data = np.frombuffer(fh.read(dtype.itemsize * count), dtype=dtype, count=count)
            comp = _vertex_components(props)
            vertices = np.stack(
                [data[f"p{comp[a]}"].astype(np.float64) for a in ("x", "y", "z")], axis=1
            )
        elif name == "face":
            list_props = [p for p in props if p[0] == "list"]
            if len(props) != 1 or not list_props:
                raise MeshError(f"{path.name}: unsupported face element layout")
            count_t = np.dtype("<" + _PLY_TYPES[list_props[0][1]])
            index_t = np.dtype("<" + _PLY_TYPES[list_props[0][2]])
            # all faces must be triangles, so rows have a fixed binary layout
            row = np.dtype([("n", count_t), ("idx", index_t, (3,))])
            data = np.frombuffer(fh.read(row.itemsize * count), dtype=row, count=count)
            if np.any(data["n"] != 3):
                n = int(data["n"][data["n"] != 3][0])
                raise MeshError(f"{path.name}: non-triangle face with {n} vertices")
            faces = data["idx"].astype(np.int64)
        else:
            # skip unknown fixed-size elements
            if any(p[0] == "list" for p in props):
                raise MeshError(f"{path.name}: cannot skip list element {name}")
            row = sum(np.dtype(_PLY_TYPES[p[1]]).itemsize for p in props)
            fh.read(row * count)
    if vertices is None or faces is None:
        raise MeshError(f"{path.name}: missing vertex or face element")
    return vertices, faces


def _write_ply(mesh: Mesh, path: Path, binary: bool) -> None:
    with open(path, "wb") as fh:
        _write_ply_stream(mesh, fh, binary=binary)


def _write_ply_stream(mesh: Mesh, fh, binary: bool) -> None:
    n, f = mesh.vertex_count, mesh.topology.face_count
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {f}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    fh.write(("\n".join(header) + "\n").encode("ascii"))
    if binary:
        fh.write(mesh.vertices.astype("<f8").tobytes())
        faces = mesh.topology.faces.astype("<i4")
        rec = np.empty(f, dtype=[("n", "u1"), ("idx", "<i4", (3,))])
        rec["n"] = 3
        rec["idx"] = faces
        fh.write(rec.tobytes())
    else:
        lines = [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
        lines += [f"3 {a} {b} {c}" for a, b, c in mesh.topology.faces]
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
