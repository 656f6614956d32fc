"""Procedural meshes usable directly from a scene file (``primitive = ...``)."""

import numpy as np

from activesim.scene.types import InvariantError, Mesh


def quad(width=1.0, height=1.0):
    """Unit-style rectangle in the z = 0 plane, normal -z (faces a camera at the origin when pushed to +z)."""
    w, h = width / 2.0, height / 2.0
    vertices = np.array([[-w, -h, 0], [w, -h, 0], [w, h, 0], [-w, h, 0]], float)
    faces = np.array([[0, 2, 1], [0, 3, 2]])
    normals = np.tile([0.0, 0.0, -1.0], (4, 1))
    uvs = np.array([[0, 1], [1, 1], [1, 0], [0, 0]], float)
    return Mesh(vertices, faces, normals, uvs)


def box(size=(1.0, 1.0, 1.0)):
    sx, sy, sz = (np.asarray(size, float) / 2.0).tolist()
    vertices, faces, normals = [], [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            n = np.zeros(3)
            n[axis] = sign
            u = np.zeros(3)
            v = np.zeros(3)
            u[(axis + 1) % 3] = 1.0
            v[(axis + 2) % 3] = 1.0
            half = np.array([sx, sy, sz])
            c = n * half
            du, dv = u * half, v * half
            base = len(vertices)
            for a, b in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                vertices.append(c + a * du + b * dv)
                normals.append(n)
            if sign > 0:
                faces += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
            else:
                faces += [[base, base + 2, base + 1], [base, base + 3, base + 2]]
    return Mesh(np.array(vertices), np.array(faces), np.array(normals))


def icosphere(radius=1.0, subdivisions=3):
    """Geodesic sphere with smooth outward vertex normals."""
    t = (1.0 + 5**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    unit = np.array(verts)
    return Mesh(unit * radius, np.array(faces), unit.copy())


PRIMITIVES = {"quad": quad, "box": box, "icosphere": icosphere}


def make_primitive(name, **params):
    try:
        factory = PRIMITIVES[name]
    except KeyError:
        raise InvariantError("primitive", f"unknown primitive {name!r}; expected one of {sorted(PRIMITIVES)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise InvariantError("primitive", str(exc)) from None
