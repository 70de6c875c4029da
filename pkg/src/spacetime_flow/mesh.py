"""Module providing structured triangular meshes with tagged boundary edges."""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable

import numpy as np
from numpy.typing import NDArray

__all__ = ["BoundaryTag",
           "TriMesh",
           "unit_square_mesh",
           "backstep_mesh",
           "retag_boundary",
           "mesh_edges",
           "mesh_stats"
           ]

class BoundaryTag(Enum):
    """Role of a boundary segment, mapped to Dirichlet/Neumann data by the problems."""
    LID = "lid"
    WALL = "wall"
    INFLOW = "inflow"
    OUTFLOW = "outflow"

@dataclass(frozen=True)
class TriMesh:
    """2D triangulation with counterclockwise triangles and tagged boundary edges."""
    vertices: NDArray[np.floating]
    triangles: NDArray[np.integer]
    boundary_edges: NDArray[np.integer]
    boundary_tags: tuple[BoundaryTag, ...]
    h: float

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def edges_with_tag(self, *tags: BoundaryTag) -> NDArray[np.integer]:
        """Function returning the boundary edges carrying any of the given tags."""
        mask = np.array([tag in tags for tag in self.boundary_tags], dtype=bool)
        return self.boundary_edges[mask]

def _split_squares(n_x: int,
                   n_y: int,
                   keep_cell: NDArray[np.bool_]
                   ) -> NDArray[np.integer]:
    """Function splitting every kept lattice square along its rising diagonal."""

    # Lattice vertex (i, j) has the global index j * (n_x + 1) + i
    j, i = np.nonzero(keep_cell.T)
    v00 = j * (n_x + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n_x + 1)
    v11 = v01 + 1

    # Two counterclockwise triangles per square, sharing the (v00, v11) diagonal
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * lower.shape[0], 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    return triangles

def _oriented_edges(triangles: NDArray[np.integer]) -> NDArray[np.integer]:
    """Function listing the three oriented edges of every triangle, (v0,v1), (v1,v2), (v2,v0)."""
    return triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)

def _boundary_edges(triangles: NDArray[np.integer]) -> NDArray[np.integer]:
    """Function extracting the edges that belong to exactly one triangle."""

    # Count every undirected edge over all triangles
    oriented = _oriented_edges(triangles)
    _, inverse, counts = np.unique(np.sort(oriented, axis=1),
                                   axis=0,
                                   return_inverse=True,
                                   return_counts=True)

    # Keep the counterclockwise orientation of the owning triangle
    return oriented[counts[inverse.ravel()] == 1]

def _max_edge_length(vertices: NDArray[np.floating],
                     triangles: NDArray[np.integer]
                     ) -> float:
    oriented = _oriented_edges(triangles)
    lengths = np.linalg.norm(vertices[oriented[:, 1]] - vertices[oriented[:, 0]], axis=1)
    return float(lengths.max())

def _compress_vertices(vertices: NDArray[np.floating],
                       triangles: NDArray[np.integer]
                       ) -> tuple[NDArray[np.floating], NDArray[np.integer]]:
    """Function dropping lattice vertices not used by any triangle and renumbering."""
    used = np.unique(triangles)
    new_index = np.full(vertices.shape[0], -1, dtype=np.int64)
    new_index[used] = np.arange(used.size)
    return vertices[used], new_index[triangles]

def _structured_mesh(x_min: float,
                     y_min: float,
                     n_x: int,
                     n_y: int,
                     spacing: float,
                     keep_cell: NDArray[np.bool_],
                     tagger: Callable[[float, float], BoundaryTag]
                     ) -> TriMesh:
    """Function building a single-diagonal triangulation of a union of lattice squares."""

    # Lattice of all candidate vertices
    xs = x_min + spacing * np.arange(n_x + 1)
    ys = y_min + spacing * np.arange(n_y + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    lattice = np.column_stack([xx.ravel(), yy.ravel()])

    # Triangulate the kept squares and renumber the vertices in use
    triangles = _split_squares(n_x, n_y, keep_cell)
    vertices, triangles = _compress_vertices(lattice, triangles)

    # Tag each boundary edge from its midpoint
    boundary = _boundary_edges(triangles)
    midpoints = 0.5 * (vertices[boundary[:, 0]] + vertices[boundary[:, 1]])
    tags = tuple(tagger(float(x), float(y)) for x, y in midpoints)

    return TriMesh(vertices=vertices,
                   triangles=triangles,
                   boundary_edges=boundary,
                   boundary_tags=tags,
                   h=_max_edge_length(vertices, triangles))

def _cavity_tagger(x: float, y: float) -> BoundaryTag:
    # Moving lid on top, no-slip elsewhere
    if np.isclose(y, 1.0):
        return BoundaryTag.LID
    return BoundaryTag.WALL

def _backstep_tagger(x: float, y: float) -> BoundaryTag:
    if np.isclose(x, 0.0):
        return BoundaryTag.INFLOW
    if np.isclose(x, 8.0):
        return BoundaryTag.OUTFLOW
    return BoundaryTag.WALL

def unit_square_mesh(r: int) -> TriMesh:
    """Function meshing [0,1]^2 with 2^r squares per side, two triangles each.

    The top side is tagged LID and the remaining sides WALL; other problems
    re-tag the boundary with `retag_boundary`.
    """

    # Ensure a valid refinement level
    if r < 0:
        raise ValueError(f"Refinement level must be non-negative, got r={r}.")

    n = 2 ** r
    keep = np.ones((n, n), dtype=bool)

    return _structured_mesh(x_min=0.0, y_min=0.0, n_x=n, n_y=n, spacing=1.0 / n,
                            keep_cell=keep, tagger=_cavity_tagger)

def backstep_mesh(r: int) -> TriMesh:
    """Function meshing the L-shape [0,8]x[0,1] u [1,8]x[-1,0] with squares of side 2^-r."""

    # Ensure a valid refinement level
    if r < 0:
        raise ValueError(f"Refinement level must be non-negative, got r={r}.")

    # Lattice over the bounding box [0,8]x[-1,1]
    n_unit = 2 ** r
    n_x, n_y = 8 * n_unit, 2 * n_unit

    # Drop the squares below the step, i.e. x < 1 and y < 0
    keep = np.ones((n_x, n_y), dtype=bool)
    keep[:n_unit, :n_unit] = False

    return _structured_mesh(x_min=0.0, y_min=-1.0, n_x=n_x, n_y=n_y, spacing=1.0 / n_unit,
                            keep_cell=keep, tagger=_backstep_tagger)

def retag_boundary(mesh: TriMesh,
                   tagger: Callable[[float, float], BoundaryTag]
                   ) -> TriMesh:
    """Function re-assigning boundary tags from the edge midpoints."""
    midpoints = 0.5 * (mesh.vertices[mesh.boundary_edges[:, 0]]
                       + mesh.vertices[mesh.boundary_edges[:, 1]])
    tags = tuple(tagger(float(x), float(y)) for x, y in midpoints)
    return replace(mesh, boundary_tags=tags)

def mesh_edges(mesh: TriMesh) -> tuple[NDArray[np.integer], NDArray[np.integer]]:
    """Function numbering the unique mesh edges.

    Returns the (n_edges, 2) vertex pairs, sorted within each pair, and the
    (n_triangles, 3) map whose column k holds the edge joining local vertices
    k and (k+1) mod 3.
    """
    oriented = _oriented_edges(mesh.triangles)
    edges, inverse = np.unique(np.sort(oriented, axis=1), axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)

def mesh_stats(mesh: TriMesh) -> dict[str, float]:
    """Function summarising vertex/triangle counts, mesh size and total area."""

    # Signed areas of all triangles
    p0 = mesh.vertices[mesh.triangles[:, 0]]
    p1 = mesh.vertices[mesh.triangles[:, 1]]
    p2 = mesh.vertices[mesh.triangles[:, 2]]
    areas = 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                   - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))

    return {"n_vertices": mesh.n_vertices,
            "n_triangles": mesh.n_triangles,
            "h": _max_edge_length(mesh.vertices, mesh.triangles),
            "area": float(areas.sum())}
