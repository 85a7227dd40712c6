import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctrlscape.errors import UndefinedResult
from ctrlscape.objectives import make_objective
from ctrlscape.render import (ContourSet, colormap_lookup, contour_svg, default_levels,
                              heightmap_image, line_chart_svg, marching_squares, read_ppm)
from ctrlscape.slices import LandscapeGrid, SlicePlane, evaluate_grid, sample_orthonormal_basis

SVG_NS = "{http://www.w3.org/2000/svg}"


def field_grid(fn, extent=2.0, resolution=41):
    plane = SlicePlane(np.zeros(2), [1.0, 0.0], [0.0, 1.0], extent, resolution)
    c = plane.coords()
    p1, p2 = np.meshgrid(c, c, indexing="ij")
    return LandscapeGrid(fn(p1, p2), plane)


def bilinear_on_edge(grid, point):
    """Interpolate the grid at a point that lies on a cell edge."""
    c = grid.plane.coords()
    h = c[1] - c[0]
    fi = (point[0] - c[0]) / h
    fj = (point[1] - c[0]) / h
    i0 = min(int(np.floor(fi)), len(c) - 2)
    j0 = min(int(np.floor(fj)), len(c) - 2)
    ti, tj = fi - i0, fj - j0
    v = grid.values
    return ((1 - ti) * (1 - tj) * v[i0, j0] + ti * (1 - tj) * v[i0 + 1, j0]
            + (1 - ti) * tj * v[i0, j0 + 1] + ti * tj * v[i0 + 1, j0 + 1])


class TestMarchingSquares:
    def test_linear_field(self):
        grid = field_grid(lambda p1, p2: p1)
        cs = marching_squares(grid, [0.5])
        assert len(cs.polylines[0]) == 1
        line = cs.polylines[0][0]
        assert np.allclose(line[:, 0], 0.5)
        assert line[:, 1].min() == pytest.approx(-2.0) and line[:, 1].max() == pytest.approx(2.0)

    def test_unit_circle(self):
        grid = field_grid(lambda p1, p2: p1 ** 2 + p2 ** 2)
        cs = marching_squares(grid, [1.0])
        assert len(cs.polylines[0]) == 1 and cs.closed[0][0]
        radius = np.hypot(*cs.polylines[0][0].T)
        h = grid.plane.coords()[1] - grid.plane.coords()[0]
        assert np.abs(radius - 1).max() < 2 * np.sqrt(2) * h

    def test_level_outside_range(self):
        grid = field_grid(lambda p1, p2: p1 ** 2 + p2 ** 2)
        assert marching_squares(grid, [-1.0]).polylines == [[]]

    def test_saddle_uses_center_average(self):
        plane = SlicePlane(np.zeros(2), [1.0, 0.0], [0.0, 1.0], 1.0, 3)
        # lower-left cell corners: (0,0)=1, (1,0)=0, (1,1)=1, (0,1)=0; centre mean 0.5
        values = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        grid = LandscapeGrid(values, plane)

        def linked(cs, a, b):
            for line in cs.polylines[0]:
                for p, q in zip(line[:-1], line[1:]):
                    if {tuple(np.round(p, 12)), tuple(np.round(q, 12))} == {a, b}:
                        return True
            return False

        # centre above the level: the low corner (1,0) is cut off on its own
        assert linked(marching_squares(grid, [0.4]), (-0.4, -1.0), (0.0, -0.6))
        # centre below the level: the high corner (0,0) is cut off instead
        assert linked(marching_squares(grid, [0.6]), (-0.6, -1.0), (-1.0, -0.6))

    def test_failed_cells_are_skipped(self):
        grid = field_grid(lambda p1, p2: p1, resolution=11)
        grid.values[5, 5] = np.nan
        cs = marching_squares(grid, [0.1])
        assert all(np.all(np.isfinite(line)) for line in cs.polylines[0])

    @settings(max_examples=30)
    @given(st.floats(0.05, 3.5), st.integers(0, 50))
    def test_vertices_interpolate_level(self, level, seed):
        rng = np.random.default_rng(seed)
        a, b, c = rng.normal(size=3)
        grid = field_grid(lambda p1, p2: p1 ** 2 + p2 ** 2 + a * np.sin(b * p1 + c * p2), resolution=25)
        cs = marching_squares(grid, [level])
        for line in cs.polylines[0]:
            assert len(line) >= 2
            assert np.abs(line).max() <= grid.plane.extent + 1e-12
            for point in line:
                assert abs(bilinear_on_edge(grid, point) - level) < 1e-9

    def test_nested_contours_for_convex_slice(self):
        f = make_objective("quadratic_k", d=6, k=3, eps=0.1)
        u, v = sample_orthonormal_basis(6, 2)
        grid = evaluate_grid(f, SlicePlane(np.zeros(6), u, v, 2.0, 41), episodes=1)
        cs = marching_squares(grid)
        areas = []
        for lines in cs.polylines:
            pts = np.concatenate(lines) if lines else np.zeros((0, 2))
            areas.append(np.ptp(pts[:, 0]) * np.ptp(pts[:, 1]) if len(pts) else 0.0)
        assert all(a1 <= a2 + 1e-12 for a1, a2 in zip(areas, areas[1:]))

    def test_default_levels(self):
        grid = field_grid(lambda p1, p2: p1 + 3 * p2)
        levels = default_levels(grid)
        assert len(levels) == 15 and levels == sorted(levels)


class TestSvg:
    def test_empty(self):
        doc = contour_svg(ContourSet([], [], 1.0))
        root = ET.fromstring(doc)
        assert root.tag == SVG_NS + "svg"
        assert not root.findall(SVG_NS + "path")

    def test_one_path_per_chain(self):
        grid = field_grid(lambda p1, p2: p1 ** 2 + p2 ** 2)
        doc = contour_svg(marching_squares(grid, [1.0]))
        assert len(ET.fromstring(doc).findall(SVG_NS + "path")) == 1

    def test_overlay_and_viewport(self):
        grid = field_grid(lambda p1, p2: p1 ** 2 + p2 ** 2)
        path = np.array([[-2.0, -2.0], [0.0, 0.0], [2.0, 2.0]])
        root = ET.fromstring(contour_svg(marching_squares(grid, [1.0]), [path]))
        overlay = root.findall(SVG_NS + "polyline")
        assert len(overlay) == 1
        # plane corners map to the viewport corners, plane-up is image-up
        assert overlay[0].get("points") == "0.000,400.000 200.000,200.000 400.000,0.000"

    def test_deterministic(self):
        grid = field_grid(lambda p1, p2: np.cos(p1) * p2)
        assert contour_svg(marching_squares(grid)) == contour_svg(marching_squares(grid))

    def test_line_chart(self):
        doc = line_chart_svg({"a": (np.array([1, 2, 3]), np.array([1.0, 0.1, 0.01])),
                              "b": (np.array([1, 2, 3]), np.array([2.0, 1.0, 0.5]))})
        assert len(ET.fromstring(doc).findall(SVG_NS + "polyline")) == 2


class TestHeightmap:
    def test_hand_quantization(self):
        plane = SlicePlane(np.zeros(2), [1.0, 0.0], [0.0, 1.0], 1.0, 2)
        # values[i, j]; image row 0 is the largest p2 (j = 1)
        grid = LandscapeGrid(np.array([[2 / 3, 0.0], [1.0, 1 / 3]]), plane)
        data = heightmap_image(grid, "gray")
        assert data.startswith(b"P6\n2 2\n255\n")
        img = read_ppm(data)
        assert img[..., 0].ravel().tolist() == [0, 85, 170, 255]
        assert (img[..., 0] == img[..., 1]).all() and (img[..., 1] == img[..., 2]).all()

    def test_constant_grid(self):
        with pytest.raises(UndefinedResult):
            heightmap_image(field_grid(lambda p1, p2: 0 * p1 + 3.0))

    def test_deterministic_and_sized(self):
        grid = field_grid(lambda p1, p2: p1 * p2, resolution=17)
        a = heightmap_image(grid)
        assert a == heightmap_image(grid)
        assert read_ppm(a).shape == (17, 17, 3)

    def test_viridis_endpoints(self):
        ends = colormap_lookup(np.array([0.0, 1.0]), "viridis")
        assert ends.tolist() == [[68, 1, 84], [253, 231, 37]]
