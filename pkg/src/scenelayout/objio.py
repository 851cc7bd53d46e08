"""Minimal Wavefront OBJ reading/writing (v, vn, f; faces are fan-triangulated)."""
from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh


def load_obj(path) -> TriangleMesh:
    """Parse an OBJ file. Only v/vn/f directives are honored; others are ignored.

    Face entries may be v, v/vt, v//vn or v/vt/vn; negative (relative) indices
    follow the OBJ convention. Polygons with more than three vertices are
    fan-triangulated.
    """
    vertices = []
    normals = []
    faces = []          # list of (vertex index, normal index or -1)

    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            tag = tokens[0]
            if tag == "v":
                vertices.append([float(x) for x in tokens[1:4]])
            elif tag == "vn":
                normals.append([float(x) for x in tokens[1:4]])
            elif tag == "f":
                corners = []
                for chunk in tokens[1:]:
                    parts = chunk.split("/")
                    vi = int(parts[0])
                    vi = vi - 1 if vi > 0 else len(vertices) + vi
                    ni = -1
                    if len(parts) >= 3 and parts[2]:
                        ni = int(parts[2])
                        ni = ni - 1 if ni > 0 else len(normals) + ni
                    corners.append((vi, ni))
                for k in range(2, len(corners)):
                    faces.append((corners[0], corners[k - 1], corners[k]))

    if not vertices or not faces:
        raise ValueError(f"no usable mesh in {path}")
    verts = np.asarray(vertices, dtype=np.float64)
    tris = np.asarray([[c[0] for c in face] for face in faces], dtype=np.int64)
    if tris.min() < 0 or tris.max() >= len(verts):
        raise ValueError(f"face index out of range in {path}")

    vertex_normals = None
    if normals:
        # Accept per-vertex normals only when every face corner maps vertex i
        # to one consistent normal index; otherwise drop them.
        mapping = np.full(len(verts), -1, dtype=np.int64)
        consistent = True
        for face in faces:
            for vi, ni in face:
                if ni < 0:
                    consistent = False
                    break
                if mapping[vi] == -1:
                    mapping[vi] = ni
                elif mapping[vi] != ni:
                    consistent = False
                    break
            if not consistent:
                break
        if consistent and np.all(mapping >= 0) and mapping.max() < len(normals):
            n = np.asarray(normals, dtype=np.float64)[mapping]
            lengths = np.linalg.norm(n, axis=1, keepdims=True)
            if np.all(lengths > 0):
                vertex_normals = n / lengths

    return TriangleMesh(vertices=verts, triangles=tris, vertex_normals=vertex_normals)


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write a triangulated OBJ (v, optional vn, f); floats keep full precision."""
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    has_normals = mesh.vertex_normals is not None
    if has_normals:
        for x, y, z in mesh.vertex_normals:
            lines.append(f"vn {float(x)!r} {float(y)!r} {float(z)!r}")
    for a, b, c in mesh.triangles:
        if has_normals:
            lines.append(f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}")
        else:
            lines.append(f"f {a + 1} {b + 1} {c + 1}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
