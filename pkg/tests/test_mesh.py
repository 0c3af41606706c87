import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viamr.errors import InvalidArgument
from viamr.mesh import (
    BLUE,
    GREEN,
    RED,
    Mesh,
    build_adjacency,
    build_structured_square,
    cell_angles,
    cell_diameter,
    closure_vertices,
    conformity_defects,
    prolong,
    quality,
    refine_marked,
    star,
    uniform_refine,
    vertex_avg_incident_diameter,
)


def edge_census(mesh):
    """Brute-force count of cells per undirected edge."""
    counts = {}
    for tri in mesh.cells.tolist():
        for a, b in itertools.combinations(tri, 2):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return counts


def hanging_vertices(mesh):
    """Vertices lying strictly inside some edge, found by a dense scan."""
    found = []
    V = mesh.vertices
    for (a, b) in edge_census(mesh):
        p, q = V[a], V[b]
        d = q - p
        L2 = d @ d
        rel = V - p
        t = rel @ d / L2
        cross = rel[:, 0] * d[1] - rel[:, 1] * d[0]
        inside = (t > 1e-12) & (t < 1 - 1e-12) & (np.abs(cross) <= 1e-12 * L2)
        found.extend(np.flatnonzero(inside).tolist())
    return found


def equilateral():
    return Mesh([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]], [[0, 1, 2]])


def test_structured_counts():
    m = build_structured_square(1, 0.0, 1.0)
    assert (m.num_cells, m.num_vertices) == (2, 4)
    assert quality(m).min_angle == pytest.approx(45.0)
    m = build_structured_square(20, -2.0, 2.0)
    assert (m.num_cells, m.num_vertices) == (800, 441)
    assert m.total_area() == pytest.approx(16.0, rel=1e-14)


def test_structured_rejects_bad_input():
    with pytest.raises(InvalidArgument):
        build_structured_square(0)
    with pytest.raises(InvalidArgument):
        build_structured_square(2, 1.0, 0.0)


def test_structured_edge_census_n3():
    m = build_structured_square(3, 0.0, 1.0)
    counts = edge_census(m)
    on_boundary = lambda p: np.isclose(p, 0.0).any() or np.isclose(p, 1.0).any()
    for (a, b), c in counts.items():
        mid = 0.5 * (m.vertices[a] + m.vertices[b])
        collinear_bdry = (np.isclose(mid[0], 0) or np.isclose(mid[0], 1)
                          or np.isclose(mid[1], 0) or np.isclose(mid[1], 1))
        assert c == (1 if collinear_bdry else 2)
    geo = {i for i, p in enumerate(m.vertices) if on_boundary(p)}
    assert set(m.boundary_vertex_ids.tolist()) == geo
    assert len(conformity_defects(m)) == 0


def test_mesh_rejects_invalid_cells():
    with pytest.raises(InvalidArgument):
        Mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])  # clockwise
    with pytest.raises(InvalidArgument):
        Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 1]])
    with pytest.raises(InvalidArgument):
        Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])


def test_adjacency_small_cases():
    m = equilateral()
    adj = build_adjacency(m)
    for v in range(3):
        assert star(adj, v) == {0}
    m = build_structured_square(1)
    adj = build_adjacency(m)
    diag = [e for e, cs in adj.edge_to_cells.items() if len(cs) == 2]
    assert len(diag) == 1 and set(adj.edge_to_cells[diag[0]]) == {0, 1}


def test_adjacency_matches_rebuild():
    m = build_structured_square(4)
    adj = build_adjacency(m)
    v2c = {v: set() for v in range(m.num_vertices)}
    for c, tri in enumerate(m.cells.tolist()):
        for v in tri:
            v2c[v].add(c)
    for v in range(m.num_vertices):
        assert star(adj, v) == v2c[v]
    for c in range(m.num_cells):
        assert closure_vertices(adj, c) == tuple(m.cells[c].tolist())
        for v in closure_vertices(adj, c):
            assert c in star(adj, v)
    dense = np.zeros((m.num_cells, m.num_vertices), dtype=int)
    for c, tri in enumerate(m.cells.tolist()):
        dense[c, tri] = 1
    assert np.array_equal(adj.incidence.toarray(), dense)


def test_star_counts_structured():
    m = build_structured_square(2)
    adj = build_adjacency(m)
    corners = [0, 2, 6, 8]
    sizes = sorted(len(star(adj, v)) for v in corners)
    assert sizes == [1, 1, 2, 2]
    m = build_structured_square(4)
    adj = build_adjacency(m)
    interior = [v for v in range(m.num_vertices) if not m.boundary_mask[v]]
    assert all(len(star(adj, v)) == 6 for v in interior)
    with pytest.raises(InvalidArgument):
        star(adj, m.num_vertices)
    with pytest.raises(InvalidArgument):
        closure_vertices(adj, -1)


def test_diameters_and_average():
    m = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    assert cell_diameter(m, 0) == pytest.approx(np.sqrt(2))
    assert cell_diameter(equilateral(), 0) == pytest.approx(1.0)
    assert np.allclose(vertex_avg_incident_diameter(m), np.sqrt(2))
    n = 5
    s = build_structured_square(n)
    assert np.allclose(s.diameters, np.sqrt(2) / n)
    assert np.allclose(vertex_avg_incident_diameter(s), np.sqrt(2) / n)
    # two cells with diameters 0.2 and 0.4 sharing vertex 0
    two = Mesh([[0, 0], [0.2, 0], [0, 0.1], [-0.4, 0], [0, -0.1]], [[0, 1, 2], [0, 3, 4]])
    assert two.diameters[0] == pytest.approx(np.hypot(0.2, 0.1))
    avg = vertex_avg_incident_diameter(two)
    assert avg[0] == pytest.approx(0.5 * (two.diameters[0] + two.diameters[1]))


def test_quality_equilateral_and_red():
    m = equilateral()
    assert quality(m).min_angle == pytest.approx(60.0)
    r = uniform_refine(uniform_refine(m))
    assert quality(r).min_angle == pytest.approx(60.0)
    assert np.allclose(cell_angles(r).sum(axis=1), 180.0)


def test_refine_all_false_is_identity():
    m = build_structured_square(3)
    r = refine_marked(m, np.zeros(m.num_cells, dtype=bool))
    assert r.num_cells == m.num_cells and r.num_vertices == m.num_vertices
    with pytest.raises(InvalidArgument):
        refine_marked(m, np.zeros(m.num_cells + 1, dtype=bool))


def test_refine_all_true_is_pure_red():
    m = build_structured_square(3)
    r = uniform_refine(m)
    assert r.num_cells == 4 * m.num_cells
    assert np.all(r.kind == RED)
    r2 = uniform_refine(r)
    assert r2.num_cells == 16 * m.num_cells
    assert quality(r2).min_angle == pytest.approx(quality(m).min_angle)


def test_one_marked_cell_on_split_square():
    m = build_structured_square(1)
    r = refine_marked(m, np.array([True, False]))
    assert r.num_cells == 6
    # 4 corners + 3 midpoints of the marked cell's edges
    assert r.num_vertices == 7
    assert sorted(r.kind.tolist()) == [RED] * 4 + [GREEN] * 2
    V, E = r.num_vertices, len(edge_census(r))
    assert V - E + r.num_cells == 1  # Euler characteristic of a disk
    assert hanging_vertices(r) == []


def test_green_split_of_leg_is_avoided():
    # neighbour of the marked cell shares a leg, not its longest edge
    m = build_structured_square(2)
    mask = np.zeros(m.num_cells, dtype=bool)
    mask[0] = True
    r = refine_marked(m, mask)
    assert hanging_vertices(r) == []
    assert (r.kind == BLUE).any()
    assert quality(r).min_angle == pytest.approx(45.0)


def test_marked_transition_cell_restores_parent():
    m = build_structured_square(1)
    r = refine_marked(m, np.array([True, False]))
    green = np.flatnonzero(r.kind == GREEN)
    mask = np.zeros(r.num_cells, dtype=bool)
    mask[green[0]] = True
    r2 = refine_marked(r, mask)
    # the green pair is replaced by the red refinement of the original cell;
    # its other two edges lie on the boundary so nothing else changes
    assert r2.num_cells == 8
    assert np.all(r2.kind == RED)
    assert r2.num_vertices == 9
    assert hanging_vertices(r2) == []
    assert len(conformity_defects(r2)) == 0
    assert quality(r2).min_angle == pytest.approx(45.0)
    assert r2.total_area() == pytest.approx(1.0, rel=1e-12)


def test_surviving_vertices_unchanged():
    m = build_structured_square(4, -1.0, 1.0)
    mask = np.zeros(m.num_cells, dtype=bool)
    mask[[3, 10, 17]] = True
    r = refine_marked(m, mask)
    assert np.array_equal(r.vertices[: m.num_vertices], m.vertices)
    # unmarked cells far from the marks survive unchanged
    kept = {tuple(sorted(c)) for c in r.cells.tolist()}
    assert tuple(sorted(m.cells[31].tolist())) in kept


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rounds=st.integers(1, 4),
       frac=st.floats(0.02, 0.5))
def test_random_refinement_sequences_stay_conforming(seed, rounds, frac):
    rng = np.random.default_rng(seed)
    m = build_structured_square(4, -2.0, 2.0)
    bound = quality(m).min_angle
    for _ in range(rounds):
        m = refine_marked(m, rng.random(m.num_cells) < frac)
        counts = np.array(list(edge_census(m).values()))
        assert counts.max() <= 2
        assert len(conformity_defects(m)) == 0
        assert m.total_area() == pytest.approx(16.0, rel=1e-12)
        assert quality(m).min_angle >= bound - 1e-9
        # boundary vertices are exactly those on the square's edges
        on_sq = np.isclose(np.abs(m.vertices), 2.0).any(axis=1)
        assert np.array_equal(m.boundary_mask, on_sq)


def test_conformity_defects_flags_hanging_node():
    # one big triangle next to two halves of its neighbour: (0.5, 0.5) hangs
    V = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]
    cells = [[0, 1, 2], [0, 4, 3], [4, 2, 3]]
    m = Mesh(V, cells)
    assert len(conformity_defects(m)) == 1
    assert hanging_vertices(m) == [4]


def test_prolong_is_exact_for_linear_functions():
    m = build_structured_square(3, -1.0, 1.0)
    rng = np.random.default_rng(3)
    r = refine_marked(m, rng.random(m.num_cells) < 0.3)
    f = lambda p: 2.0 * p[:, 0] - 3.0 * p[:, 1] + 0.5
    assert np.allclose(prolong(f(m.vertices), r), f(r.vertices), atol=1e-14)
