"""SVG chart assembly: well-formed markup, deterministic bytes."""

import xml.etree.ElementTree as ET

import pytest

from trafficbench.errors import ConfigurationError
from trafficbench.svgplot import (PALETTE, STATE_COLORS, Series, line_chart,
                                  timeline_chart)


def parse(svg: str) -> ET.Element:
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    return root


class TestSeries:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigurationError, match="x values"):
            Series("s", [1, 2], [3])

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError, match="empty"):
            Series("s", [], [])


class TestLineChart:
    def test_well_formed_with_title_and_legend(self):
        svg = line_chart("speed over time",
                         [Series("north", [0, 10, 20], [1.0, 3.0, 2.0]),
                          Series("south", [0, 10, 20], [2.0, 1.0, 4.0])])
        root = parse(svg)
        text = ET.tostring(root, encoding="unicode")
        assert "speed over time" in text
        assert "north" in text and "south" in text
        assert text.count("polyline") >= 2

    def test_same_input_same_bytes(self):
        args = ("t", [Series("a", [0.0, 1.0, 2.0], [0.1, 0.7, 0.3])])
        assert line_chart(*args) == line_chart(*args)

    def test_step_mode_duplicates_points(self):
        xs, ys = [0.0, 10.0, 20.0], [1.0, 2.0, 3.0]
        plain = line_chart("t", [Series("a", xs, ys)])
        stepped = line_chart("t", [Series("a", xs, ys)], step=True)

        def n_points(svg):
            for line in svg.splitlines():
                if "polyline" in line:
                    return line.split('points="')[1].split('"')[0].count(",")
            raise AssertionError("no polyline")

        assert n_points(plain) == 3
        assert n_points(stepped) == 5

    def test_reference_line_is_dashed(self):
        svg = line_chart("t", [Series("a", [0, 1], [5.0, 15.0])], y_ref=10.0)
        assert "stroke-dasharray" in svg
        no_ref = line_chart("t", [Series("a", [0, 1], [5.0, 15.0])])
        assert "stroke-dasharray" not in no_ref

    def test_axis_labels_rendered(self):
        svg = line_chart("t", [Series("a", [0, 1], [0, 1])],
                         x_label="time (s)", y_label="queue (m)")
        assert "time (s)" in svg
        assert "queue (m)" in svg
        assert "rotate(-90" in svg

    def test_flat_series_still_renders(self):
        parse(line_chart("t", [Series("a", [0, 1, 2], [5.0, 5.0, 5.0])]))

    def test_label_markup_escaped(self):
        svg = line_chart("a < b", [Series("x & y", [0, 1], [0, 1])])
        parse(svg)
        assert "a &lt; b" in svg
        assert "x &amp; y" in svg

    def test_palette_cycles_for_many_series(self):
        n = len(PALETTE) + 2
        series = [Series(f"s{i}", [0, 1], [i, i + 1]) for i in range(n)]
        svg = line_chart("t", series)
        assert svg.count(PALETTE[0]) >= 2 * 2   # polyline + legend, twice

    def test_no_series_rejected(self):
        with pytest.raises(ConfigurationError, match="series"):
            line_chart("t", [])


class TestTimelineChart:
    def test_state_bands_colored(self):
        rows = [("I1 p0", [(0, 30, "G"), (30, 33, "y"), (33, 60, "r")])]
        svg = timeline_chart("phases", rows, t0=0.0, t1=60.0)
        root = parse(svg)
        text = ET.tostring(root, encoding="unicode")
        for color in STATE_COLORS.values():
            assert color in text
        assert "I1 p0" in text

    def test_segments_clipped_to_window(self):
        rows = [("r0", [(100, 200, "G")])]
        svg = timeline_chart("t", rows, t0=0.0, t1=50.0)
        assert STATE_COLORS["G"] not in svg

    def test_height_scales_with_rows(self):
        one = timeline_chart("t", [("a", [(0, 1, "G")])], t0=0, t1=1)
        three = timeline_chart("t", [("a", [(0, 1, "G")]),
                                     ("b", [(0, 1, "r")]),
                                     ("c", [(0, 1, "y")])], t0=0, t1=1)
        h = lambda svg: int(parse(svg).get("height"))
        assert h(three) == h(one) + 2 * 16

    def test_unknown_state_rejected(self):
        rows = [("r0", [(0, 10, "purple")])]
        with pytest.raises(ConfigurationError, match="signal state"):
            timeline_chart("t", rows, t0=0.0, t1=10.0)

    def test_empty_window_rejected(self):
        with pytest.raises(ConfigurationError, match="window"):
            timeline_chart("t", [("a", [(0, 1, "G")])], t0=5.0, t1=5.0)

    def test_no_rows_rejected(self):
        with pytest.raises(ConfigurationError, match="row"):
            timeline_chart("t", [], t0=0.0, t1=1.0)

    def test_same_input_same_bytes(self):
        rows = [("a", [(0, 25, "G"), (25, 28, "y"), (28, 60, "r")])]
        assert timeline_chart("t", rows, t0=0, t1=60) == \
            timeline_chart("t", rows, t0=0, t1=60)
