"""Tetrahedral meshes of the interior domain and the Prandtl-Glauert map.

A :class:`TetMesh` holds the volume mesh together with its oriented boundary
triangles, each tagged as either the scattering object (``GAMMA_OBJECT``) or
the coupling surface (``GAMMA_INFINITY``).  Normals point out of the meshed
region, i.e. into the exterior domain on the coupling surface.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ParseError, SupersonicError, TagError, TopologyError

logger = logging.getLogger(__name__)

GAMMA_OBJECT = 1
GAMMA_INFINITY = 2

DEFAULT_TAG_NAMES = {"object": GAMMA_OBJECT, "farfield": GAMMA_INFINITY}

# local faces of a tetrahedron, listed opposite vertex 0, 1, 2, 3
_TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
_TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def signed_volumes(vertices, tets):
    v = vertices[tets]
    return np.einsum("ij,ij->i", v[:, 1] - v[:, 0], np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 0])) / 6.0


def triangle_normals(vertices, faces):
    """Unit normals and areas of triangles (right-hand rule on vertex order)."""
    v = vertices[faces]
    c = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    twice_area = np.linalg.norm(c, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = c / twice_area[:, None]
    return n, 0.5 * twice_area


@dataclass(frozen=True)
class BoundaryFaces:
    faces: np.ndarray
    owners: np.ndarray
    normals: np.ndarray


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Immutable tetrahedral mesh with tagged, outward-oriented boundary.

    Attributes
    ----------
    vertices : (n, 3) float array
    tets : (m, 4) int array, positively oriented
    boundary_faces : (f, 3) int array, ordered so the right-hand normal is outward
    face_tags : (f,) int array of ``GAMMA_OBJECT`` / ``GAMMA_INFINITY``
    normals : (f, 3) float array of unit outward normals
    """

    vertices: np.ndarray
    tets: np.ndarray
    boundary_faces: np.ndarray
    face_tags: np.ndarray
    normals: np.ndarray
    h_min: float = field(init=False)
    h_mean: float = field(init=False)
    h_max: float = field(init=False)

    def __post_init__(self):
        for name, dtype in (("vertices", float), ("tets", np.int64), ("boundary_faces", np.int64),
                            ("face_tags", np.int64), ("normals", float)):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype))
        lengths = edge_lengths(self.vertices, self.tets)
        object.__setattr__(self, "h_min", float(lengths.min()))
        object.__setattr__(self, "h_mean", float(lengths.mean()))
        object.__setattr__(self, "h_max", float(lengths.max()))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    def surface(self, tag):
        """Faces (vertex indices into the volume mesh) carrying ``tag``."""
        return self.boundary_faces[self.face_tags == tag]

    def surface_normals(self, tag):
        return self.normals[self.face_tags == tag]

    def volume(self):
        return float(signed_volumes(self.vertices, self.tets).sum())

    def summary(self):
        """Counts and edge statistics as a JSON-serialisable dict."""
        coupling = self.surface(GAMMA_INFINITY)
        return {
            "n_vertices": int(self.n_vertices),
            "n_tets": int(self.n_tets),
            "n_faces_object": int(np.sum(self.face_tags == GAMMA_OBJECT)),
            "n_faces_farfield": int(len(coupling)),
            "n_vertices_farfield": int(len(np.unique(coupling))),
            "smallest_edge": self.h_min,
            "mean_edge": self.h_mean,
            "largest_edge": self.h_max,
        }

    def summary_json(self, **kwargs):
        return json.dumps(self.summary(), **kwargs)


def edge_lengths(vertices, tets):
    e = np.sort(tets[:, _TET_EDGES].reshape(-1, 2), axis=1)
    e = np.unique(e, axis=0)
    return np.linalg.norm(vertices[e[:, 1]] - vertices[e[:, 0]], axis=1)


def extract_boundary(vertices, tets):
    """Find the faces owned by exactly one tetrahedron and orient them outward.

    Returns a :class:`BoundaryFaces` sorted lexicographically by sorted
    vertex triple, so the result does not depend on tetrahedron ordering.
    """
    vertices = np.asarray(vertices, dtype=float)
    tets = np.asarray(tets, dtype=np.int64)
    all_faces = tets[:, _TET_FACES].reshape(-1, 3)
    opposite = tets.reshape(-1)
    owner = np.repeat(np.arange(len(tets)), 4)
    key = np.sort(all_faces, axis=1)
    uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        bad = uniq[counts > 2][:5].tolist()
        raise TopologyError(f"faces shared by more than two tetrahedra: {bad}")
    boundary_ids = np.flatnonzero(counts == 1)
    # position of the single occurrence of each boundary face
    first = np.full(len(uniq), -1)
    first[inverse[::-1]] = np.arange(len(inverse))[::-1]
    occ = first[boundary_ids]
    faces = all_faces[occ].copy()
    opp = vertices[opposite[occ]]
    v = vertices[faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    flip = np.einsum("ij,ij->i", n, opp - v[:, 0]) > 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    normals, _ = triangle_normals(vertices, faces)
    return BoundaryFaces(faces=faces, owners=owner[occ], normals=normals)


def surface_components(faces):
    """Label connected components of a triangle soup (edge connectivity)."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    faces = np.asarray(faces)
    nf = len(faces)
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    fid = np.tile(np.arange(nf), 3)
    _, einv = np.unique(edges, axis=0, return_inverse=True)
    einv = einv.reshape(-1)
    ne = einv.max() + 1 if nf else 0
    # bipartite face-edge graph collapsed to faces
    inc = coo_matrix((np.ones(3 * nf), (fid, einv)), shape=(nf, ne)).tocsr()
    adj = inc @ inc.T
    _, labels = connected_components(adj, directed=False)
    return labels


def euler_characteristic(faces):
    faces = np.asarray(faces)
    V = len(np.unique(faces))
    E = len(np.unique(np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1), axis=0))
    return V - E + len(faces)


def _auto_tags(vertices, faces):
    # the component with the largest extent is taken as the coupling surface
    labels = surface_components(faces)
    extent = [np.ptp(vertices[np.unique(faces[labels == c])], axis=0).max() for c in range(labels.max() + 1)]
    outer = int(np.argmax(extent))
    return np.where(labels == outer, GAMMA_INFINITY, GAMMA_OBJECT)


def build_mesh(vertices, tets, face_tags=None):
    """Validate connectivity and assemble a :class:`TetMesh`.

    ``face_tags`` maps sorted vertex triples to surface tags.  When it is
    omitted the outermost boundary component becomes the coupling surface
    and every other component the object.
    """
    vertices = np.asarray(vertices, dtype=float)
    tets = np.asarray(tets, dtype=np.int64)
    if tets.ndim != 2 or tets.shape[1] != 4:
        raise TopologyError("tetrahedra must be given as 4-tuples")
    if tets.size and (tets.min() < 0 or tets.max() >= len(vertices)):
        raise TopologyError("a tetrahedron references a nonexistent vertex")
    if np.any(np.sort(tets, axis=1)[:, 1:] == np.sort(tets, axis=1)[:, :-1]):
        raise TopologyError("a tetrahedron repeats a vertex")
    vol = signed_volumes(vertices, tets)
    if np.any(vol <= 0):
        raise TopologyError(f"{int(np.sum(vol <= 0))} tetrahedra have non-positive signed volume")
    bnd = extract_boundary(vertices, tets)
    if face_tags is None:
        tags = _auto_tags(vertices, bnd.faces)
    else:
        tags = np.zeros(len(bnd.faces), dtype=np.int64)
        for i, f in enumerate(np.sort(bnd.faces, axis=1)):
            t = face_tags.get(tuple(int(x) for x in f))
            if t is None:
                raise TagError(f"boundary face {f.tolist()} carries no recognised surface tag")
            tags[i] = t
        boundary_keys = {tuple(int(x) for x in f) for f in np.sort(bnd.faces, axis=1)}
        stray = [k for k in face_tags if k not in boundary_keys]
        if stray:
            raise TopologyError(f"{len(stray)} tagged triangles are not boundary faces of the volume mesh, e.g. {list(stray[0])}")
    if not np.any(tags == GAMMA_INFINITY):
        raise TagError("mesh has no coupling (farfield) surface")
    return TetMesh(vertices=vertices, tets=tets, boundary_faces=bnd.faces, face_tags=tags, normals=bnd.normals)


@dataclass(frozen=True)
class PGMap:
    """Prandtl-Glauert dilation along the free-stream direction.

    ``mach_infinity`` is the free-stream Mach vector (a scalar is taken
    along ``z``); points are stretched by
    ``gamma_infinity`` along it and left unchanged orthogonally.
    """

    mach_infinity: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        m = np.asarray(self.mach_infinity, dtype=float)
        if m.ndim == 0:
            m = np.array([0.0, 0.0, float(m)])
        m = m.reshape(3)
        if np.linalg.norm(m) >= 1.0:
            raise SupersonicError(f"free-stream Mach number {np.linalg.norm(m):.4g} is not subsonic")
        object.__setattr__(self, "mach_infinity", tuple(float(x) for x in m))

    @property
    def mach_vector(self):
        return np.array(self.mach_infinity)

    @property
    def mach_number(self):
        return float(np.linalg.norm(self.mach_vector))

    @property
    def gamma_infinity(self):
        return 1.0 / np.sqrt(1.0 - self.mach_number**2)

    @property
    def dilation_axis(self):
        m = self.mach_number
        if m == 0.0:
            return np.array([0.0, 0.0, 1.0])
        return self.mach_vector / m

    @property
    def c_infinity_coeff(self):
        """``(gamma - 1) / M^2`` with a Taylor branch near ``M = 0``."""
        m2 = self.mach_number**2
        if self.mach_number < 1e-4:
            return 0.5 + 3.0 * m2 / 8.0
        return (self.gamma_infinity - 1.0) / m2

    @property
    def matrix_N(self):
        m = self.mach_vector
        return np.eye(3) + self.c_infinity_coeff * np.outer(m, m)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        d = self.dilation_axis
        a = x @ d
        return x + ((self.gamma_infinity - 1.0) * a)[..., None] * d

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        d = self.dilation_axis
        a = x @ d
        return x + ((1.0 / self.gamma_infinity - 1.0) * a)[..., None] * d


def apply_prandtl_glauert(mesh, pg_map):
    """Return the mesh with every vertex mapped by ``pg_map.forward``."""
    verts = pg_map.forward(mesh.vertices)
    normals, _ = triangle_normals(verts, mesh.boundary_faces)
    return TetMesh(vertices=verts, tets=mesh.tets, boundary_faces=mesh.boundary_faces,
                   face_tags=mesh.face_tags, normals=normals)


# ---------------------------------------------------------------------------
# Gmsh ASCII reader / writer


def _sections(text):
    lines = text.splitlines()
    out = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            j = i + 1
            while j < len(lines) and lines[j].strip() != f"$End{name}":
                j += 1
            if j == len(lines):
                raise ParseError(f"section ${name} is not terminated")
            out[name] = [l for l in lines[i + 1:j] if l.strip()]
            i = j
        i += 1
    return out


def _ints(line):
    try:
        return [int(x) for x in line.split()]
    except ValueError as exc:
        raise ParseError(f"expected integers, got {line!r}") from exc


def _read_v2(sec, phys_of_name):
    nodes = {}
    body = sec["Nodes"]
    n = int(body[0])
    for line in body[1:n + 1]:
        parts = line.split()
        nodes[int(parts[0])] = [float(v) for v in parts[1:4]]
    tets, tris = [], []
    body = sec["Elements"]
    n = int(body[0])
    if len(body) < n + 1:
        raise ParseError("element section shorter than announced")
    for line in body[1:n + 1]:
        p = _ints(line)
        etype, ntags = p[1], p[2]
        tags, conn = p[3:3 + ntags], p[3 + ntags:]
        phys = tags[0] if ntags else 0
        if etype == 4:
            tets.append(conn[:4])
        elif etype == 2:
            tris.append((conn[:3], phys_of_name(phys)))
    return nodes, tets, tris


def _read_v4(sec, phys_of_name):
    surf_phys = {}
    if "Entities" in sec:
        body = sec["Entities"]
        counts = _ints(body[0])
        row = 1 + counts[0] + counts[1]
        for line in body[row:row + counts[2]]:
            parts = line.split()
            tag, nphys = int(parts[0]), int(parts[7])
            surf_phys[tag] = [int(x) for x in parts[8:8 + nphys]]
    nodes = {}
    body = sec["Nodes"]
    nblocks = _ints(body[0])[0]
    i = 1
    for _ in range(nblocks):
        _, _, _, nb = _ints(body[i])
        tags = [int(body[i + 1 + k]) for k in range(nb)]
        for k, t in enumerate(tags):
            nodes[t] = [float(v) for v in body[i + 1 + nb + k].split()[:3]]
        i += 1 + 2 * nb
    tets, tris = [], []
    body = sec["Elements"]
    nblocks = _ints(body[0])[0]
    i = 1
    for _ in range(nblocks):
        dim, etag, etype, nb = _ints(body[i])
        phys = surf_phys.get(etag, [0])
        for line in body[i + 1:i + 1 + nb]:
            p = _ints(line)
            if etype == 4:
                tets.append(p[1:5])
            elif etype == 2:
                tris.append((p[1:4], phys_of_name(phys[0] if phys else 0)))
        i += 1 + nb
    return nodes, tets, tris


def load_gmsh(path, tag_names=None):
    """Read a Gmsh ASCII mesh (format 2.2 or 4.1).

    Physical surface names are matched case-insensitively against
    ``tag_names`` (default ``{"object": GAMMA_OBJECT, "farfield":
    GAMMA_INFINITY}``).  Nodes not used by any tetrahedron are dropped.
    """
    path = Path(path)
    text = path.read_text()
    sec = _sections(text)
    for required in ("MeshFormat", "Nodes", "Elements"):
        if required not in sec:
            raise ParseError(f"{path}: missing ${required} section")
    try:
        version = float(sec["MeshFormat"][0].split()[0])
        is_binary = int(sec["MeshFormat"][0].split()[1])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed $MeshFormat") from exc
    if is_binary:
        raise ParseError(f"{path}: binary Gmsh files are not supported")

    names = {k.lower(): v for k, v in (tag_names or DEFAULT_TAG_NAMES).items()}
    phys_names = {}
    for line in sec.get("PhysicalNames", [])[1:]:
        parts = line.split(maxsplit=2)
        phys_names[int(parts[1])] = parts[2].strip().strip('"').lower()

    def phys_of_name(phys):
        return names.get(phys_names.get(phys, ""), None)

    try:
        if version < 3:
            nodes, tets, tris = _read_v2(sec, phys_of_name)
        else:
            nodes, tets, tris = _read_v4(sec, phys_of_name)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{path}: malformed mesh body ({exc})") from exc
    if not tets:
        raise ParseError(f"{path}: no tetrahedra found")

    tets = np.array(tets, dtype=np.int64)
    missing = set(np.unique(tets).tolist()) - nodes.keys()
    if missing:
        raise TopologyError(f"{path}: tetrahedra reference undefined nodes {sorted(missing)[:5]}")
    used = np.unique(tets)
    remap = {int(t): i for i, t in enumerate(used)}
    vertices = np.array([nodes[int(t)] for t in used])
    tets = np.vectorize(remap.__getitem__, otypes=[np.int64])(tets)

    face_tags = {}
    for conn, tag in tris:
        if any(c not in remap for c in conn):
            raise TopologyError(f"{path}: triangle {conn} does not match a tetrahedron face")
        key = tuple(sorted(remap[c] for c in conn))
        if tag is None:
            raise TagError(f"{path}: triangle {conn} lacks a recognised physical surface name")
        face_tags[key] = tag
    # reorient inverted input cells is not our job: report them
    mesh = build_mesh(vertices, tets, face_tags if tris else None)
    logger.info("loaded %s: %d vertices, %d tets", path, mesh.n_vertices, mesh.n_tets)
    return mesh


def save_gmsh(mesh, path, tag_names=None):
    """Write ``mesh`` as a Gmsh 2.2 ASCII file with named physical groups."""
    names = tag_names or {"object": GAMMA_OBJECT, "farfield": GAMMA_INFINITY}
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames", str(len(names) + 1)]
    for name, tag in names.items():
        lines.append(f'2 {tag} "{name}"')
    lines.append('3 100 "domain"')
    lines += ["$EndPhysicalNames", "$Nodes", str(mesh.n_vertices)]
    lines += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(mesh.vertices.tolist())]
    lines += ["$EndNodes", "$Elements", str(len(mesh.boundary_faces) + mesh.n_tets)]
    k = 1
    for f, t in zip(mesh.boundary_faces.tolist(), mesh.face_tags.tolist()):
        lines.append(f"{k} 2 2 {t} {t} {f[0] + 1} {f[1] + 1} {f[2] + 1}")
        k += 1
    for c in mesh.tets.tolist():
        lines.append(f"{k} 4 2 100 1 {c[0] + 1} {c[1] + 1} {c[2] + 1} {c[3] + 1}")
        k += 1
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# built-in geometries


def cubed_sphere(n):
    """Unit-sphere triangulation from an equiangular cubed sphere.

    Returns ``(points (m, 3), triangles (12 n^2, 3))`` with outward
    orientation.
    """
    a = np.tan(np.linspace(-np.pi / 4, np.pi / 4, n + 1))
    U, V = np.meshgrid(a, a, indexing="ij")
    pts, tris = [], []
    offset = 0
    for axis in range(3):
        for sign in (-1.0, 1.0):
            P = np.empty((n + 1, n + 1, 3))
            P[..., axis] = sign
            P[..., (axis + 1) % 3] = U
            P[..., (axis + 2) % 3] = V
            pts.append(P.reshape(-1, 3))
            idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1) + offset
            q00, q10, q01, q11 = idx[:-1, :-1], idx[1:, :-1], idx[:-1, 1:], idx[1:, 1:]
            # alternate diagonals for a symmetric pattern
            alt = ((np.add.outer(np.arange(n), np.arange(n))) % 2).astype(bool)
            t1 = np.where(alt[..., None], np.stack([q00, q10, q11], -1), np.stack([q00, q10, q01], -1))
            t2 = np.where(alt[..., None], np.stack([q00, q11, q01], -1), np.stack([q10, q11, q01], -1))
            tris.append(np.concatenate([t1.reshape(-1, 3), t2.reshape(-1, 3)]))
            offset += (n + 1) ** 2
    pts = np.vstack(pts)
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    tris = np.vstack(tris)
    key = np.round(pts, 12)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    pts = pts[first]
    tris = inv.reshape(-1)[tris]
    n_t, _ = triangle_normals(pts, tris)
    c = pts[tris].mean(axis=1)
    flip = np.einsum("ij,ij->i", n_t, c) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return pts, tris


def _to_ellipsoid(directions, axes, center):
    d = directions
    s = 1.0 / np.sqrt(np.sum((d / axes) ** 2, axis=1))
    return center + d * s[:, None]


def ball_shell(inner_axes=(0.5, 0.5, 0.5), outer_axes=(1.0, 1.0, 1.0), n=4, layers=2,
               center=(0.0, 0.0, 0.0)):
    """Layered tetrahedral mesh between an inner and an outer ellipsoid.

    Both surfaces share the cubed-sphere triangulation with ``12 n^2``
    triangles; ``layers`` prism layers are each split into three
    tetrahedra with a conforming diagonal rule.  The inner surface is tagged
    as the object, the outer one as the coupling surface.
    """
    inner_axes = np.broadcast_to(np.asarray(inner_axes, dtype=float), (3,))
    outer_axes = np.broadcast_to(np.asarray(outer_axes, dtype=float), (3,))
    center = np.asarray(center, dtype=float)
    if np.any(inner_axes >= outer_axes) or np.any(inner_axes <= 0):
        raise ValueError("inner ellipsoid must lie strictly inside the outer one")
    if layers < 1:
        raise ValueError("need at least one layer")
    dirs, tris = cubed_sphere(n)
    m = len(dirs)
    verts = []
    for ell in range(layers + 1):
        axes = inner_axes + (outer_axes - inner_axes) * ell / layers
        verts.append(_to_ellipsoid(dirs, axes, center))
    verts = np.vstack(verts)
    base = np.sort(tris, axis=1)
    tets = []
    for ell in range(layers):
        lo = base + ell * m
        hi = base + (ell + 1) * m
        v0, v1, v2 = lo.T
        w0, w1, w2 = hi.T
        tets += [np.column_stack([v0, v1, v2, w0]), np.column_stack([v1, v2, w0, w1]),
                 np.column_stack([v2, w0, w1, w2])]
    tets = np.vstack(tets)
    vol = signed_volumes(verts, tets)
    tets[vol < 0] = tets[vol < 0][:, [0, 2, 1, 3]]
    tags = {}
    for f in np.sort(tris, axis=1):
        tags[tuple(int(x) for x in f)] = GAMMA_OBJECT
        tags[tuple(int(x) + layers * m for x in f)] = GAMMA_INFINITY
    return build_mesh(verts, tets, tags)


def single_tet_mesh(vertices=None):
    """One tetrahedron, all four faces on the coupling surface."""
    if vertices is None:
        vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    tets = np.array([[0, 1, 2, 3]])
    tags = {tuple(sorted(f)): GAMMA_INFINITY for f in _TET_FACES.tolist()}
    return build_mesh(vertices, tets, tags)
