"""Structured hexahedral meshes of a box with tagged boundary faces."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "box_mesh", "DIRICHLET", "PRESSURE", "NEUMANN", "HEX_FACES"]

DIRICHLET = "dirichlet"
PRESSURE = "pressure"
NEUMANN = "neumann"

# Local vertex ordering of a trilinear hex (reference coords in {-1, 1}^3):
# 0:(-,-,-) 1:(+,-,-) 2:(+,+,-) 3:(-,+,-) 4:(-,-,+) 5:(+,-,+) 6:(+,+,+) 7:(-,+,+)
HEX_REF = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)

# Faces as local vertex quadruples, ordered counter-clockwise seen from
# outside, so (x_xi x x_eta) points along the outward normal.
HEX_FACES = {
    "x-": (0, 4, 7, 3),
    "x+": (1, 2, 6, 5),
    "y-": (0, 1, 5, 4),
    "y+": (3, 7, 6, 2),
    "z-": (0, 3, 2, 1),
    "z+": (4, 5, 6, 7),
}


@dataclass(frozen=True)
class Mesh:
    """Hexahedral mesh.

    Attributes
    ----------
    vertices : ndarray, shape (n_vertices, 3)
        Reference coordinates [m].
    hexahedra : ndarray of int, shape (n_elements, 8)
        Connectivity in the local ordering of ``HEX_REF``.
    boundary_faces : ndarray of int, shape (n_faces, 2)
        Exterior faces as (element, local face index into ``HEX_FACES``).
    boundary_tags : tuple of str
        One tag per exterior face.
    """

    vertices: np.ndarray
    hexahedra: np.ndarray
    boundary_faces: np.ndarray
    boundary_tags: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_dofs(self):
        return 3 * len(self.vertices)

    def face_vertices(self, tag):
        """Global vertex quadruples of all faces carrying ``tag``."""
        names = list(HEX_FACES)
        out = [
            [self.hexahedra[e, v] for v in HEX_FACES[names[f]]]
            for (e, f), t in zip(self.boundary_faces, self.boundary_tags)
            if t == tag
        ]
        return np.array(out, dtype=int).reshape(-1, 4)

    def dirichlet_dofs(self):
        """Sorted DOF indices on Dirichlet faces (all three components)."""
        if "dirichlet_dofs" not in self._cache:
            verts = np.unique(self.face_vertices(DIRICHLET))
            dofs = (3 * verts[:, None] + np.arange(3)).ravel()
            self._cache["dirichlet_dofs"] = np.sort(dofs)
        return self._cache["dirichlet_dofs"]

    def free_dofs(self):
        if "free_dofs" not in self._cache:
            mask = np.ones(self.n_dofs, dtype=bool)
            mask[self.dirichlet_dofs()] = False
            self._cache["free_dofs"] = np.flatnonzero(mask)
        return self._cache["free_dofs"]

    def nearest_vertex(self, point):
        """Index and coordinates of the vertex closest to ``point``."""
        d = np.linalg.norm(self.vertices - np.asarray(point, dtype=float), axis=1)
        i = int(np.argmin(d))
        return i, self.vertices[i].copy()

    def validate(self):
        """Check connectivity and orientation; raise ``ValueError`` on failure."""
        h = self.hexahedra
        if h.ndim != 2 or h.shape[1] != 8:
            raise ValueError("hexahedra must have shape (n, 8)")
        if h.min() < 0 or h.max() >= self.n_vertices:
            raise ValueError("connectivity references missing vertices")
        for e, conn in enumerate(h):
            if len(set(conn.tolist())) != 8:
                raise ValueError(f"element {e} repeats a vertex")
        from .assembly import reference_jacobians

        detJ = reference_jacobians(self)
        if np.any(detJ <= 0.0):
            bad = int(np.argwhere(detJ <= 0.0)[0, 0])
            raise ValueError(f"element {bad} has non-positive Jacobian")
        if len(self.boundary_tags) != len(self.boundary_faces):
            raise ValueError("one tag per boundary face required")
        for t in self.boundary_tags:
            if t not in (DIRICHLET, PRESSURE, NEUMANN):
                raise ValueError(f"unknown boundary tag {t!r}")

    def to_dict(self):
        return {
            "vertices": self.vertices.tolist(),
            "hexahedra": self.hexahedra.tolist(),
            "boundary_faces": self.boundary_faces.tolist(),
            "boundary_tags": list(self.boundary_tags),
        }

    @classmethod
    def from_dict(cls, d):
        if "box" in d:
            return box_mesh(**d["box"])
        return cls(
            vertices=np.asarray(d["vertices"], dtype=float),
            hexahedra=np.asarray(d["hexahedra"], dtype=int),
            boundary_faces=np.asarray(d["boundary_faces"], dtype=int).reshape(-1, 2),
            boundary_tags=tuple(d["boundary_tags"]),
        )

    def digest(self):
        """SHA-256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def box_mesh(
    nx=10,
    ny=2,
    nz=2,
    lengths=(1.0e-2, 1.0e-3, 1.0e-3),
    dirichlet="x-",
    pressure="z-",
):
    """Uniform ``nx x ny x nz`` hexahedral mesh of ``[0,Lx]x[0,Ly]x[0,Lz]``.

    The default reproduces the clamped beam: clamped at x = 0, pressure on
    z = 0, traction-free elsewhere.
    """
    if min(nx, ny, nz) < 1:
        raise ValueError("need at least one element per direction")
    Lx, Ly, Lz = lengths
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    zs = np.linspace(0.0, Lz, nz + 1)
    # vertex index: i + (nx+1)*(j + (ny+1)*k)
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    hexes = []
    faces = []
    tags = []
    names = list(HEX_FACES)
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                e = len(hexes)
                hexes.append(
                    [
                        vid(i, j, k),
                        vid(i + 1, j, k),
                        vid(i + 1, j + 1, k),
                        vid(i, j + 1, k),
                        vid(i, j, k + 1),
                        vid(i + 1, j, k + 1),
                        vid(i + 1, j + 1, k + 1),
                        vid(i, j + 1, k + 1),
                    ]
                )
                on_side = {
                    "x-": i == 0,
                    "x+": i == nx - 1,
                    "y-": j == 0,
                    "y+": j == ny - 1,
                    "z-": k == 0,
                    "z+": k == nz - 1,
                }
                for name, hit in on_side.items():
                    if not hit:
                        continue
                    faces.append((e, names.index(name)))
                    if name == dirichlet:
                        tags.append(DIRICHLET)
                    elif name == pressure:
                        tags.append(PRESSURE)
                    else:
                        tags.append(NEUMANN)
    return Mesh(
        vertices=vertices,
        hexahedra=np.array(hexes, dtype=int),
        boundary_faces=np.array(faces, dtype=int),
        boundary_tags=tuple(tags),
    )
