"""Conforming triangulations of the benchmark domains and their refinement.

Triangles are stored counter-clockwise as ``(a, b, c)``. The refinement edge
of every triangle is its first local edge ``(a, b)``, so ``c`` is the newest
vertex. Local edge ``k`` joins local vertices ``k`` and ``k + 1 (mod 3)``.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .constant import DOMAIN_AREAS, DOMAIN_GRID_CELLS, DOMAIN_KINDS


LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class DomainSpec:
    """Benchmark domain and the number of uniform refinements of its grid."""

    kind: str = 'unit_square'
    initial_refinements: int = 0

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError('Unknown domain kind %r, expected one of: %s'
                             % (self.kind, ', '.join(DOMAIN_KINDS)))
        if isinstance(self.initial_refinements, bool) or \
                int(self.initial_refinements) != self.initial_refinements or \
                self.initial_refinements < 0:
            raise ValueError('initial_refinements must be a nonnegative '
                             'integer, got %r' % (self.initial_refinements,))

    @property
    def area(self):
        return DOMAIN_AREAS[self.kind]


def _freeze(array):
    array.flags.writeable = False
    return array


class Mesh():
    """Immutable triangulation with its refinement genealogy.

    :param vertices: (n_vertices, 2) coordinates.
    :param triangles: (n_triangles, 3) counter-clockwise vertex indices.
    :param parent: Triangle index in the previous mesh, -1 on initial meshes.
    :param generation: Number of bisections since the initial mesh.
    :param midpoint_parents: (n_new, 2) endpoints of the edges whose
                             midpoints are the trailing vertices of this mesh.
    """

    def __init__(self, vertices, triangles, parent=None, generation=None,
                 midpoint_parents=None):
        self.vertices = _freeze(
            np.array(vertices, dtype=float).reshape(-1, 2))
        self.triangles = _freeze(
            np.array(triangles, dtype=np.int64).reshape(-1, 3))
        n_triangles = self.triangles.shape[0]

        if parent is None:
            parent = np.full(n_triangles, -1)
        if generation is None:
            generation = np.zeros(n_triangles)
        if midpoint_parents is None:
            midpoint_parents = np.zeros((0, 2))

        self.parent = _freeze(np.array(parent, dtype=np.int64))
        self.generation = _freeze(np.array(generation, dtype=np.int64))
        self.midpoint_parents = _freeze(
            np.array(midpoint_parents, dtype=np.int64).reshape(-1, 2))

        if self.parent.shape != (n_triangles,) or \
                self.generation.shape != (n_triangles,):
            raise ValueError('parent and generation need one entry per '
                             'triangle')
        if n_triangles and (self.triangles.min() < 0 or
                            self.triangles.max() >= self.n_vertices):
            raise ValueError('Triangle vertex index out of range')

    def __repr__(self):
        return 'Mesh(n_vertices=%d, n_triangles=%d)' % (
            self.n_vertices, self.n_triangles)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @cached_property
    def _edge_data(self):
        local = self.triangles[:, [[0, 1], [1, 2], [2, 0]]]
        pairs = np.sort(local, axis=2).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        triangle_edges = inverse.reshape(-1).reshape(-1, 3)
        signs = np.where(local[:, :, 0] < local[:, :, 1], 1.0, -1.0)
        return edges, triangle_edges, signs

    @property
    def edges(self):
        """(n_edges, 2) vertex pairs, lower index first, sorted."""
        return self._edge_data[0]

    @property
    def triangle_edges(self):
        """(n_triangles, 3) global edge of every local edge."""
        return self._edge_data[1]

    @property
    def edge_signs(self):
        """+1 where the local edge runs from lower to higher vertex index."""
        return self._edge_data[2]

    @property
    def refinement_edges(self):
        return self.triangle_edges[:, 0]

    @cached_property
    def edge_multiplicity(self):
        return np.bincount(self.triangle_edges.reshape(-1),
                           minlength=self.n_edges)

    @cached_property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_multiplicity == 1)

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.edges[self.boundary_edges])

    @cached_property
    def is_boundary_vertex(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = True
        return mask

    @cached_property
    def free_vertices(self):
        return np.flatnonzero(~self.is_boundary_vertex)

    @cached_property
    def areas(self):
        p0, p1, p2 = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) -
                      (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))

    @cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def gradients(self):
        """(n_triangles, 3, 2) gradients of the barycentric coordinates."""
        corners = self.vertices[self.triangles]
        opposite = np.roll(corners, -2, axis=1) - np.roll(corners, -1, axis=1)
        # Rotating the opposite edge by +90 degrees gives its inward normal.
        rotated = np.stack([-opposite[:, :, 1], opposite[:, :, 0]], axis=2)
        return rotated / (2.0 * self.areas)[:, None, None]

    @cached_property
    def edge_lengths(self):
        tangents = self.vertices[self.edges[:, 1]] - \
            self.vertices[self.edges[:, 0]]
        return np.hypot(tangents[:, 0], tangents[:, 1])

    @cached_property
    def edge_normals(self):
        """Unit normals to the right of the lower-to-higher tangent."""
        tangents = self.vertices[self.edges[:, 1]] - \
            self.vertices[self.edges[:, 0]]
        normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        return normals / self.edge_lengths[:, None]

    @cached_property
    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] +
                      self.vertices[self.edges[:, 1]])

    @property
    def n_coarse_vertices(self):
        return self.n_vertices - self.midpoint_parents.shape[0]

    def interpolate(self, function):
        """Return nodal values of ``function(x, y)`` (or of a constant)."""
        if np.isscalar(function):
            return np.full(self.n_vertices, float(function))
        values = function(self.vertices[:, 0], self.vertices[:, 1])
        return np.array(np.broadcast_to(values, (self.n_vertices,)),
                        dtype=float)

    def prolongate(self, values):
        """Prolongate nodal values of the previous mesh to this mesh.

        :param values: One value per vertex of the mesh this one was refined
                       from.
        :return: Nodal values of the same piecewise affine function.
        """
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_coarse_vertices,):
            raise ValueError('Expected %d coarse values, got %s'
                             % (self.n_coarse_vertices, values.shape))
        fine = np.empty(self.n_vertices)
        fine[:self.n_coarse_vertices] = values
        fine[self.n_coarse_vertices:] = 0.5 * (
            values[self.midpoint_parents[:, 0]] +
            values[self.midpoint_parents[:, 1]])
        return fine

    def prolongate_cells(self, values):
        """Copy piecewise constant values of the previous mesh to children."""
        values = np.asarray(values, dtype=float)
        if self.parent.min() < 0:
            raise ValueError('Initial meshes have no parent triangles')
        if self.parent.max() >= values.shape[0]:
            raise ValueError('Not enough coarse cell values: %d'
                             % values.shape[0])
        return values[self.parent]

    def hanging_vertices(self):
        """Return vertices lying inside an edge of a neighbouring triangle."""
        adjacency = sp.coo_matrix(
            (np.ones(self.n_edges), (self.edges[:, 0], self.edges[:, 1])),
            shape=(self.n_vertices, self.n_vertices))
        adjacency = ((adjacency + adjacency.T) > 0).tocsr()

        hanging = []
        for first, second in self.edges[self.boundary_edges]:
            common = adjacency[first].multiply(adjacency[second]).nonzero()[1]
            midpoint = 0.5 * (self.vertices[first] + self.vertices[second])
            for vertex in common:
                if np.allclose(self.vertices[vertex], midpoint,
                               rtol=0, atol=1e-14):
                    hanging.append(int(vertex))
        return sorted(set(hanging))

    def validate(self):
        """Raise ValueError unless the mesh is a conforming triangulation."""
        if np.any(self.areas <= 0):
            raise ValueError('%d triangles are not positively oriented'
                             % np.count_nonzero(self.areas <= 0))
        if np.any(self.edge_multiplicity > 2):
            raise ValueError('Edges shared by more than two triangles')
        hanging = self.hanging_vertices()
        if hanging:
            raise ValueError('Hanging vertices: %s' % hanging)


def refine(mesh, marked):
    """Newest vertex bisection of the marked triangles plus closure.

    All three edges of a marked triangle are bisected. Every triangle with a
    bisected edge also bisects its refinement edge, which keeps the result
    conforming. New vertices follow the global edge order.

    :param mesh: Mesh to refine.
    :param marked: Iterable of triangle indices.
    :return: Refined mesh, ``mesh`` itself when nothing is marked.
    """
    marked = np.unique(np.fromiter(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise ValueError('Marked triangle out of range [0, %d)'
                         % mesh.n_triangles)

    triangle_edges = mesh.triangle_edges
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[triangle_edges[marked].reshape(-1)] = True

    while True:
        closure = ~edge_marked[triangle_edges[:, 0]] & (
            edge_marked[triangle_edges[:, 1]] |
            edge_marked[triangle_edges[:, 2]])
        if not closure.any():
            break
        edge_marked[triangle_edges[closure, 0]] = True

    n_new = np.count_nonzero(edge_marked)
    new_vertex = np.full(mesh.n_edges, -1, dtype=np.int64)
    new_vertex[edge_marked] = mesh.n_vertices + np.arange(n_new)
    midpoint_parents = mesh.edges[edge_marked]
    vertices = np.vstack([
        mesh.vertices,
        0.5 * (mesh.vertices[midpoint_parents[:, 0]] +
               mesh.vertices[midpoint_parents[:, 1]]),
    ])

    a, b, c = mesh.triangles.T
    m1, m2, m3 = new_vertex[triangle_edges].T
    has1, has2, has3 = edge_marked[triangle_edges].T
    patterns = [
        (~has1, [(a, b, c)], [0]),
        (has1 & ~has2 & ~has3, [(c, a, m1), (b, c, m1)], [1, 1]),
        (has1 & has2 & ~has3,
         [(c, a, m1), (m1, b, m2), (c, m1, m2)], [1, 2, 2]),
        (has1 & ~has2 & has3,
         [(m1, c, m3), (a, m1, m3), (b, c, m1)], [2, 2, 1]),
        (has1 & has2 & has3,
         [(m1, c, m3), (a, m1, m3), (m1, b, m2), (c, m1, m2)], [2, 2, 2, 2]),
    ]

    triangles, parents, generations = [], [], []
    for mask, children, increments in patterns:
        ids = np.flatnonzero(mask)
        if ids.size == 0:
            continue
        block = np.stack(
            [np.column_stack([corner[ids] for corner in child])
             for child in children], axis=1)
        triangles.append(block.reshape(-1, 3))
        parents.append(np.repeat(ids, len(children)))
        generations.append(
            (mesh.generation[ids][:, None] +
             np.asarray(increments)[None, :]).reshape(-1))

    parents = np.concatenate(parents)
    order = np.argsort(parents, kind='stable')

    refined = Mesh(
        vertices=vertices,
        triangles=np.concatenate(triangles)[order],
        parent=parents[order],
        generation=np.concatenate(generations)[order],
        midpoint_parents=midpoint_parents,
    )
    LOGGER.debug('Refined %d marked of %d triangles: %d triangles, '
                 '%d new vertices', marked.size, mesh.n_triangles,
                 refined.n_triangles, n_new)
    return refined


def refine_uniform(mesh, times=1):
    """Bisect every edge of every triangle ``times`` times."""
    for _ in range(times):
        mesh = refine(mesh, range(mesh.n_triangles))
    return mesh


def _keep_cell(kind, cells):
    half = cells // 2
    if kind == 'l_shape':
        return lambda i, j: not (i >= half and j < half)
    return lambda i, j: True


def create_domain(spec):
    """Return the structured initial mesh of ``spec``, uniformly refined.

    Every grid cell is split along its diagonal from lower left to upper
    right; the diagonal is the refinement edge of both halves. On the slit
    the cells above the slit get their own copies of the slit vertices.

    :param spec: DomainSpec
    :return: Mesh
    """
    cells = DOMAIN_GRID_CELLS[spec.kind]
    keep = _keep_cell(spec.kind, cells)
    half = cells // 2

    grid = np.arange(cells + 1) / cells
    xs, ys = np.meshgrid(grid, grid)
    vertices = [np.column_stack([xs.reshape(-1), ys.reshape(-1)])]

    def index(i, j):
        return j * (cells + 1) + i

    duplicates = {}
    if spec.kind == 'slit':
        for i in range(half + 1, cells + 1):
            duplicates[index(i, half)] = (cells + 1) ** 2 + len(duplicates)
            vertices.append(vertices[0][[index(i, half)]])

    triangles = []
    for j in range(cells):
        for i in range(cells):
            if not keep(i, j):
                continue
            p00, p10 = index(i, j), index(i + 1, j)
            p01, p11 = index(i, j + 1), index(i + 1, j + 1)
            if j == half and i >= half:
                p00 = duplicates.get(p00, p00)
                p10 = duplicates.get(p10, p10)
            triangles.append((p11, p00, p10))
            triangles.append((p00, p11, p01))

    vertices = np.vstack(vertices)
    used, renumbered = np.unique(np.asarray(triangles), return_inverse=True)
    mesh = Mesh(vertices[used], renumbered.reshape(-1).reshape(-1, 3))

    mesh = refine_uniform(mesh, spec.initial_refinements)
    LOGGER.debug('Created %s mesh with %d vertices and %d triangles',
                 spec.kind, mesh.n_vertices, mesh.n_triangles)
    return mesh
