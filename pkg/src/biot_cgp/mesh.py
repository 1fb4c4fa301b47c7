"""Conforming triangulations of the unit square and their facet topology."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# local edge i is opposite local vertex i, traversed counterclockwise
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh with a single global orientation per facet.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counterclockwise vertex ids
    facets : (nf, 2) int array, vertex ids ordered so that the facet runs
        counterclockwise around ``facet_cells[:, 0]``
    facet_cells : (nf, 2) int array, first and second adjacent cell (-1 on the boundary)
    facet_local : (nf, 2) int array, local edge index of the facet in each adjacent cell
    cell_facets : (nc, 3) int array, facet id of each local edge
    cell_facet_sign : (nc, 3) int array, +1 if the cell is the facet's first cell
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray
    facet_local: np.ndarray
    cell_facets: np.ndarray
    cell_facet_sign: np.ndarray
    level: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_cells(cls, vertices, cells, level=0) -> "Mesh":
        vertices = np.asarray(vertices, dtype=float)
        cells = np.asarray(cells, dtype=np.int64)
        if cells.ndim != 2 or cells.shape[1] != 3:
            raise ValueError("cells must be an (n, 3) array")
        a = _signed_areas(vertices, cells)
        if np.any(a <= 0.0):
            raise ValueError("cells must be nondegenerate and counterclockwise")

        nc = len(cells)
        local = cells[:, LOCAL_EDGES]  # (nc, 3, 2)
        key = np.sort(local, axis=2).reshape(-1, 2)
        uniq, first_idx, inverse = np.unique(
            key, axis=0, return_index=True, return_inverse=True
        )
        inverse = inverse.ravel()
        nf = len(uniq)
        cell_of = np.repeat(np.arange(nc), 3)
        edge_of = np.tile(np.arange(3), nc)

        facet_cells = np.full((nf, 2), -1, dtype=np.int64)
        facet_local = np.full((nf, 2), -1, dtype=np.int64)
        # np.unique return_index gives the first occurrence -> deterministic owner
        facet_cells[:, 0] = cell_of[first_idx]
        facet_local[:, 0] = edge_of[first_idx]
        second = np.ones(len(key), dtype=bool)
        second[first_idx] = False
        counts = np.bincount(inverse, minlength=nf)
        if np.any(counts > 2):
            raise ValueError("non-manifold mesh: facet shared by more than two cells")
        facet_cells[inverse[second], 1] = cell_of[second]
        facet_local[inverse[second], 1] = edge_of[second]

        facets = local.reshape(-1, 2)[first_idx]
        cell_facets = inverse.reshape(nc, 3)
        cell_facet_sign = np.where(second, -1, 1).reshape(nc, 3)
        return cls(
            vertices, cells, facets, facet_cells, facet_local,
            cell_facets, cell_facet_sign, level,
        )

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_facets(self) -> int:
        return len(self.facets)

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    @property
    def is_boundary(self) -> np.ndarray:
        return self.facet_cells[:, 1] < 0

    @property
    def cell_areas(self) -> np.ndarray:
        return 0.5 * _signed_areas(self.vertices, self.cells)

    @property
    def facet_lengths(self) -> np.ndarray:
        d = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def cell_diameters(self) -> np.ndarray:
        """h_K: the longest edge of each cell."""
        return self.facet_lengths[self.cell_facets].max(axis=1)

    @property
    def h(self) -> float:
        return float(self.cell_diameters.max())

    @property
    def inradii(self) -> np.ndarray:
        perimeter = self.facet_lengths[self.cell_facets].sum(axis=1)
        return 2.0 * self.cell_areas / perimeter

    @property
    def facet_normals(self) -> np.ndarray:
        """Unit normals pointing out of each facet's first cell."""
        t = self.facet_tangents
        return np.column_stack([t[:, 1], -t[:, 0]])

    @property
    def facet_tangents(self) -> np.ndarray:
        d = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]

    def facet_frame(self, facet_id: int) -> tuple[np.ndarray, np.ndarray, float]:
        """Return (unit normal, unit tangent, length) of one facet."""
        if not 0 <= facet_id < self.num_facets:
            raise IndexError(f"facet id {facet_id} out of range [0, {self.num_facets})")
        p0, p1 = self.vertices[self.facets[facet_id]]
        d = p1 - p0
        he = float(np.hypot(*d))
        t = d / he
        return np.array([t[1], -t[0]]), t, he

    def affine_maps(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Jacobians J (nc, 2, 2), determinants and origins of x = J xhat + x0."""
        if "affine" not in self._cache:
            p = self.vertices[self.cells]
            J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            self._cache["affine"] = (J, det, p[:, 0].copy())
        return self._cache["affine"]


def _signed_areas(vertices, cells):
    p = vertices[cells]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]


def unit_square_mesh(m: int, diagonal: str = "right") -> Mesh:
    """Structured m x m mesh of the unit square with 2 m^2 triangles.

    ``diagonal="right"`` splits every square from bottom-left to top-right,
    ``"left"`` from bottom-right to top-left.
    """
    if m < 1:
        raise ValueError(f"need at least one cell per side, got m={m}")
    if diagonal not in ("right", "left"):
        raise ValueError(f"unknown diagonal direction {diagonal!r}")
    s = np.linspace(0.0, 1.0, m + 1)
    X, Y = np.meshgrid(s, s, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    v00 = (j * (m + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + m + 1
    v11 = v01 + 1
    if diagonal == "right":
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
    else:
        lower = np.column_stack([v00, v10, v01])
        upper = np.column_stack([v10, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh.from_cells(vertices, cells)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into four by its edge midpoints."""
    nv = mesh.num_vertices
    mid = 0.5 * (mesh.vertices[mesh.facets[:, 0]] + mesh.vertices[mesh.facets[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    c = mesh.cells
    m = nv + mesh.cell_facets  # midpoint of local edge i (opposite vertex i)
    children = np.stack(
        [
            np.column_stack([c[:, 0], m[:, 2], m[:, 1]]),
            np.column_stack([m[:, 2], c[:, 1], m[:, 0]]),
            np.column_stack([m[:, 1], m[:, 0], c[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh.from_cells(vertices, children, level=mesh.level + 1)


def refined_mesh(m: int, levels: int, diagonal: str = "right") -> Mesh:
    mesh = unit_square_mesh(m, diagonal)
    for _ in range(levels):
        mesh = refine_uniform(mesh)
    return mesh
