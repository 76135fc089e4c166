import numpy as np
import pytest

from gap_afem.constant import DOMAIN_AREAS, DOMAIN_KINDS
from gap_afem.mesh import (
    DomainSpec,
    Mesh,
    create_domain,
    refine,
    refine_uniform,
)


def test_unit_square_initial_mesh():
    mesh = create_domain(DomainSpec('unit_square', 0))

    assert mesh.n_vertices == 4
    assert mesh.n_triangles == 2
    assert mesh.n_edges == 5
    assert mesh.boundary_edges.size == 4
    assert mesh.free_vertices.size == 0
    assert np.all(mesh.areas > 0)
    assert mesh.areas.sum() == pytest.approx(1.0)


@pytest.mark.parametrize('kind', DOMAIN_KINDS)
@pytest.mark.parametrize('refinements', [0, 1, 2])
def test_domains_are_conforming(kind, refinements):
    mesh = create_domain(DomainSpec(kind, refinements))

    mesh.validate()
    assert mesh.areas.sum() == pytest.approx(DOMAIN_AREAS[kind])
    assert np.all(mesh.edge_multiplicity <= 2)


def test_domain_sizes():
    square = create_domain(DomainSpec('unit_square', 3))
    assert square.n_vertices == 81
    assert square.free_vertices.size == 49
    assert square.n_triangles == 128

    l_shape = create_domain(DomainSpec('l_shape', 0))
    assert l_shape.n_triangles == 54
    assert l_shape.n_vertices == 40

    slit = create_domain(DomainSpec('slit', 0))
    assert slit.n_triangles == 32
    # Two vertices of the slit are duplicated
    assert slit.n_vertices == 27
    assert slit.free_vertices.size == 7


def test_slit_separates_both_sides():
    mesh = create_domain(DomainSpec('slit', 1))
    on_slit = np.flatnonzero(
        (mesh.vertices[:, 0] > 0.5) & (np.abs(mesh.vertices[:, 1] - 0.5) <
                                       1e-12))
    assert np.all(mesh.is_boundary_vertex[on_slit])
    # Every point of the open slit exists twice
    assert on_slit.size == 2 * np.unique(mesh.vertices[on_slit], axis=0).shape[0]


def test_domain_spec_validation():
    with pytest.raises(ValueError):
        DomainSpec('circle', 0)
    with pytest.raises(ValueError):
        DomainSpec('unit_square', -1)
    with pytest.raises(ValueError):
        DomainSpec('unit_square', 1.5)
    assert DomainSpec('l_shape').area == 0.75


def test_refine_nothing_returns_same_mesh():
    mesh = create_domain(DomainSpec('unit_square', 1))
    assert refine(mesh, []) is mesh


def test_refine_out_of_range():
    mesh = create_domain(DomainSpec('unit_square', 0))
    with pytest.raises(ValueError):
        refine(mesh, [2])
    with pytest.raises(ValueError):
        refine(mesh, [-1])


def test_refine_single_triangle():
    mesh = create_domain(DomainSpec('unit_square', 0))
    refined = refine(mesh, [0])

    refined.validate()
    assert refined.n_vertices == 7
    assert refined.n_triangles == 6
    assert np.count_nonzero(refined.parent == 0) == 4
    assert np.count_nonzero(refined.parent == 1) == 2
    assert np.all(np.diff(refined.parent) >= 0)
    assert refined.areas.sum() == pytest.approx(1.0)
    np.testing.assert_array_equal(refined.generation[refined.parent == 0], 2)
    np.testing.assert_array_equal(refined.generation[refined.parent == 1], 1)


def test_refine_uniform_quadruples():
    mesh = create_domain(DomainSpec('l_shape', 0))
    refined = refine_uniform(mesh, 2)

    assert refined.n_triangles == 16 * mesh.n_triangles
    refined.validate()
    assert refined.areas.min() == pytest.approx(mesh.areas.min() / 16)


def test_random_refinement_stays_conforming():
    rng = np.random.default_rng(0)
    mesh = create_domain(DomainSpec('l_shape', 0))
    for _ in range(6):
        marked = rng.choice(mesh.n_triangles, size=max(1, mesh.n_triangles
                                                       // 10),
                            replace=False)
        refined = refine(mesh, marked)
        refined.validate()
        assert refined.n_vertices > mesh.n_vertices
        assert refined.areas.sum() == pytest.approx(0.75)
        for triangle in marked:
            assert np.count_nonzero(refined.parent == triangle) == 4
        mesh = refined


def test_prolongate_is_exact_for_affine_functions():
    mesh = create_domain(DomainSpec('slit', 1))
    refined = refine(mesh, [0, 5, 11])

    def affine(x, y):
        return 1.0 + 2.0 * x - 3.0 * y

    np.testing.assert_allclose(
        refined.prolongate(mesh.interpolate(affine)),
        refined.interpolate(affine), atol=1e-14)
    with pytest.raises(ValueError):
        refined.prolongate(np.zeros(mesh.n_vertices + 1))


def test_prolongate_cells_copies_parent_values():
    mesh = create_domain(DomainSpec('unit_square', 0))
    refined = refine(mesh, [1])
    np.testing.assert_array_equal(
        refined.prolongate_cells([3.0, 7.0]),
        np.where(refined.parent == 0, 3.0, 7.0))


def test_interpolate_constant_and_function():
    mesh = create_domain(DomainSpec('unit_square', 1))
    np.testing.assert_array_equal(mesh.interpolate(2.5), 2.5)
    np.testing.assert_allclose(mesh.interpolate(lambda x, y: x * y),
                               mesh.vertices[:, 0] * mesh.vertices[:, 1])


def test_gradients_of_barycentric_coordinates_sum_to_zero():
    mesh = create_domain(DomainSpec('l_shape', 1))
    np.testing.assert_allclose(mesh.gradients.sum(axis=1), 0.0, atol=1e-12)

    x = mesh.vertices[mesh.triangles][:, :, 0]
    gradient_x = np.einsum('tk,tkd->td', x, mesh.gradients)
    np.testing.assert_allclose(gradient_x, [[1.0, 0.0]] * mesh.n_triangles,
                               atol=1e-12)


def test_edge_normals_are_unit_and_orthogonal():
    mesh = create_domain(DomainSpec('unit_square', 2))
    tangents = mesh.vertices[mesh.edges[:, 1]] - \
        mesh.vertices[mesh.edges[:, 0]]
    np.testing.assert_allclose(np.linalg.norm(mesh.edge_normals, axis=1), 1.0)
    np.testing.assert_allclose((tangents * mesh.edge_normals).sum(axis=1),
                               0.0, atol=1e-14)


def test_hanging_vertex_is_detected():
    vertices = [(1.0, 1.0), (0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 0.5)]
    mesh = Mesh(vertices, [(2, 0, 4), (1, 2, 4), (1, 0, 3)])

    assert mesh.hanging_vertices() == [4]
    with pytest.raises(ValueError):
        mesh.validate()


def test_negative_orientation_is_rejected():
    mesh = Mesh([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [(0, 2, 1)])
    with pytest.raises(ValueError):
        mesh.validate()
