from __future__ import annotations

import pytest

from rulecube import ModelSession, ViewSpec, materialize_view, visible_members
from rulecube.views import ViewError, grid_csv

from conftest import address_of


def spec(**kwargs) -> ViewSpec:
    return ViewSpec.from_document(kwargs)


FIGURE1_LAYOUT = dict(
    pages={"TIME": "Qtr1", "ORG": "Total Company", "PRODUCT": "Total Products"},
    rows=["ACCTS"],
    cols=["SCENARIO"],
)


class TestLayout:
    def test_figure1_shape(self, lighting_synthetic):
        grid = lighting_synthetic.view(spec(**FIGURE1_LAYOUT))
        assert grid.shape == (14, 4)
        assert grid.row_headers[0] == ("Total sales",)
        assert grid.col_headers == (("Actuals",), ("Budget",), ("$Var",), ("%Var",))

    def test_grid_values_match_cube(self, lighting_synthetic):
        s = lighting_synthetic
        grid = s.view(spec(**FIGURE1_LAYOUT))
        net_row = list(grid.row_headers).index(("Net sales",))
        dollar_col = list(grid.col_headers).index(("$Var",))
        cell = address_of(
            s, ACCTS="Net sales", TIME="Qtr1", ORG="Total Company",
            PRODUCT="Total Products", SCENARIO="$Var",
        )
        assert grid.values[net_row][dollar_col] == s.cube.value_at(cell).value

    def test_collapse_and_expand_time(self, lighting_synthetic):
        s = lighting_synthetic.structure
        collapsed = visible_members(s, "TIME", frozenset())
        assert [s.dimension("TIME").member_name(o) for o in collapsed] == ["Year"]
        expanded = visible_members(s, "TIME", frozenset({"Year"}))
        assert [s.dimension("TIME").member_name(o) for o in expanded] == [
            "Qtr1", "Qtr2", "Qtr3", "Qtr4", "Year",
        ]
        grid = lighting_synthetic.view(
            spec(
                pages={"ACCTS": "Net sales", "ORG": "Total Company",
                       "PRODUCT": "Total Products"},
                rows=["TIME"],
                cols=["SCENARIO"],
                expand={"TIME": []},
            )
        )
        assert grid.row_headers == (("Year",),)

    def test_ragged_hierarchy_partial_expand(self, lighting_synthetic):
        s = lighting_synthetic.structure
        # Expanding only Total Company shows its children, not grandchildren.
        shown = visible_members(s, "ORG", frozenset({"Total Company"}))
        names = [s.dimension("ORG").member_name(o) for o in shown]
        assert names == ["Domestic", "International", "Total Company"]

    def test_member_selection_overrides_expand(self, lighting_synthetic):
        grid = lighting_synthetic.view(
            spec(
                **dict(
                    FIGURE1_LAYOUT,
                    member_selection={"ACCTS": ["Net sales", "Gross profit"]},
                )
            )
        )
        assert grid.row_headers == (("Net sales",), ("Gross profit",))

    def test_nested_row_dimensions(self, lighting_synthetic):
        grid = lighting_synthetic.view(
            spec(
                pages={"ACCTS": "Net sales", "ORG": "Total Company"},
                rows=["PRODUCT", "TIME"],
                cols=["SCENARIO"],
            )
        )
        assert grid.shape == (25, 4)
        assert grid.row_headers[0] == ("Commercial", "Qtr1")

    def test_row_depths_for_indentation(self, lighting_synthetic):
        grid = lighting_synthetic.view(spec(**FIGURE1_LAYOUT))
        by_name = {h[0]: d[0] for h, d in zip(grid.row_headers, grid.row_depths)}
        assert by_name["Total sales"] == 3
        assert by_name["Net sales"] == 2
        assert by_name["Gross profit"] == 1
        assert by_name["Income from operations"] == 0


class TestFlags:
    def test_input_vs_rule_covered(self, lighting_synthetic):
        grid = lighting_synthetic.view(
            spec(
                pages={"TIME": "Qtr1", "ORG": "North", "PRODUCT": "Commercial"},
                rows=["ACCTS"],
                cols=["SCENARIO"],
            )
        )
        names = [h[0] for h in grid.row_headers]
        sales = names.index("Total sales")
        net = names.index("Net sales")
        actuals = list(grid.col_headers).index(("Actuals",))
        dollar = list(grid.col_headers).index(("$Var",))
        assert "input-eligible" in grid.flags[sales][actuals]
        assert "rule-covered" in grid.flags[net][actuals]
        assert "rule-covered" in grid.flags[sales][dollar]

    def test_override_flag(self, lighting_with_europe):
        from rulecube import apply_rules, override_cell

        s = lighting_with_europe
        cell = dict(
            ACCTS="Net sales", TIME="Qtr1", ORG="Europe", PRODUCT="Outdoor",
            SCENARIO="Budget",
        )
        override_cell(s.cube, cell, 10000.0, "pin")
        apply_rules(s.cube, s.rules)
        grid = s.view(
            spec(
                pages={"TIME": "Qtr1", "ORG": "Europe", "PRODUCT": "Outdoor"},
                rows=["ACCTS"],
                cols=["SCENARIO"],
            )
        )
        net = [h[0] for h in grid.row_headers].index("Net sales")
        budget = list(grid.col_headers).index(("Budget",))
        assert "overridden" in grid.flags[net][budget]

    def test_error_flag(self, lighting_doc):
        doc = dict(lighting_doc)
        doc = {**doc, "rules": doc["rules"] + [
            {
                "name": "broken ratio",
                "dimension": "ACCTS",
                "target": "Engineering",
                "formula": "={Total sales}/{Discounts and allowances}",
            }
        ]}
        session = ModelSession.from_document(doc)
        session.calc()
        grid = session.view(
            spec(
                pages={"TIME": "Qtr1", "ORG": "North", "PRODUCT": "Commercial"},
                rows=["ACCTS"],
                cols=["SCENARIO"],
            )
        )
        eng = [h[0] for h in grid.row_headers].index("Engineering")
        actuals = list(grid.col_headers).index(("Actuals",))
        assert "error" in grid.flags[eng][actuals]
        assert grid.errors[eng][actuals] == "DIV0"


class TestValidation:
    def test_dimension_must_appear_exactly_once(self, lighting_synthetic):
        with pytest.raises(ViewError, match="exactly once"):
            lighting_synthetic.view(
                spec(pages={"TIME": "Qtr1"}, rows=["ACCTS"], cols=["SCENARIO"])
            )
        with pytest.raises(ViewError, match="exactly once"):
            lighting_synthetic.view(
                spec(
                    pages={"TIME": "Qtr1", "ORG": "North", "PRODUCT": "Commercial"},
                    rows=["ACCTS", "SCENARIO"],
                    cols=["SCENARIO"],
                )
            )

    def test_selection_only_on_placed_axes(self, lighting_synthetic):
        with pytest.raises(ViewError, match="member_selection"):
            lighting_synthetic.view(
                spec(**dict(FIGURE1_LAYOUT, member_selection={"TIME": ["Qtr1"]}))
            )

    def test_determinism(self, lighting_synthetic):
        a = lighting_synthetic.view(spec(**FIGURE1_LAYOUT))
        b = lighting_synthetic.view(spec(**FIGURE1_LAYOUT))
        assert a == b

    def test_grid_csv_render(self, lighting_synthetic):
        grid = lighting_synthetic.view(spec(**FIGURE1_LAYOUT))
        text = grid_csv(grid)
        assert "TIME=Qtr1" in text
        assert text.count("\n") == 14 + 5  # version + 3 pages + header + rows
