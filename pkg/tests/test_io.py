from __future__ import annotations

import csv
import io
import json

import pytest

from rulecube import (
    DataFormatError,
    DefinitionError,
    ModelSession,
    dumps_model,
    export_cell_ledger,
    export_long_csv,
    loads_long_csv,
    loads_model,
    loads_wide_csv,
)
from rulecube.cube import DATA

from conftest import (
    ACTUALS_ERP_PATH,
    EUROPE_BUDGET_PATH,
    LIGHTING_PATH,
    address_of,
)


class TestModelDocument:
    def test_lighting_document(self, lighting_session):
        assert len(lighting_session.structure.dimensions) == 5
        assert len(lighting_session.rules) == 12
        st = lighting_session.stats()
        assert (st.total_cells, st.input_cells, st.calculated_cells) == (12600, 1728, 10872)

    def test_save_load_fixpoint(self, lighting_session):
        first = dumps_model(lighting_session.structure, lighting_session.rules)
        structure2, rules2 = loads_model(first)
        second = dumps_model(structure2, rules2)
        assert first == second

    def test_bind_error_names_rule_and_position(self, lighting_doc):
        doc = json.loads(json.dumps(lighting_doc))
        doc["rules"][7]["formula"] = "=({Nett sales})-({Total cost of sales})"
        with pytest.raises(DefinitionError, match=r"rule 8 \('ACCTS - Gross profit'\).*Nett sales"):
            ModelSession.from_document(doc)

    def test_format_version_required(self, lighting_doc):
        doc = dict(lighting_doc)
        doc["format_version"] = 2
        with pytest.raises(DefinitionError, match="format_version"):
            ModelSession.from_document(doc)

    def test_string_member_shorthand(self):
        structure, rules = loads_model(
            json.dumps(
                {
                    "format_version": 1,
                    "name": "m",
                    "dimensions": [
                        {"name": "A", "members": ["x", "y"]},
                        {"name": "B", "members": ["p"]},
                    ],
                    "rules": [],
                }
            )
        )
        assert structure.dimension("A").resolve("y") == 1


class TestLongLoad:
    def test_figure6_rows_resolve_aliases(self, lighting_session):
        report = lighting_session.load_csv(
            ACTUALS_ERP_PATH.read_text(encoding="utf-8"), "erp", "long"
        )
        assert report.rows_total == 19
        assert report.rows_loaded == 19
        assert report.rejected == []
        cell = address_of(
            lighting_session,
            ACCTS="Standard cost of sales",
            SCENARIO="Actuals",
            TIME="Qtr1",
            ORG="Asia Pacific",
            PRODUCT="Outdoor",
        )
        lighting_session.calc()
        assert lighting_session.cube.value_at(cell).value == 6602.56

    def test_header_only_file(self, lighting_session):
        text = "ACCTS,SCENARIO,TIME,ORG,PRODUCT,Value\n"
        report = loads_long_csv(lighting_session.cube, lighting_session.rules, text, "t")
        assert (report.rows_total, report.rows_loaded, report.rows_rejected) == (0, 0, 0)

    def test_aggregate_member_rejected(self, lighting_session):
        text = (
            "ACCTS,SCENARIO,TIME,ORG,PRODUCT,Value\n"
            "Total sales,Budget,Qtr1,North,Total Products,100\n"
        )
        report = loads_long_csv(lighting_session.cube, lighting_session.rules, text, "t")
        assert report.rows_loaded == 0
        line, reason = report.rejected[0]
        assert line == 2
        assert "aggregate member not loadable" in reason
        assert "Total Products" in reason

    def test_unknown_member_and_bad_value_rejected_with_lines(self, lighting_session):
        text = (
            "ACCTS,SCENARIO,TIME,ORG,PRODUCT,Value\n"
            "Total sales,Budget,Qtr1,North,Commercial,100\n"
            "Total sales,Budget,Qtr1,Atlantis,Commercial,100\n"
            "Total sales,Budget,Qtr1,North,Outdoor,not-a-number\n"
        )
        report = loads_long_csv(lighting_session.cube, lighting_session.rules, text, "t")
        assert report.rows_total == 3
        assert report.rows_loaded == 1
        assert [line for line, _ in report.rejected] == [3, 4]
        assert report.rows_loaded + report.rows_rejected == report.rows_total

    def test_duplicate_row_last_wins_with_warning(self, lighting_session):
        text = (
            "ACCTS,SCENARIO,TIME,ORG,PRODUCT,Value\n"
            "Total sales,Budget,Qtr1,North,Commercial,100\n"
            "Total sales,Budget,Qtr1,North,Commercial,250\n"
        )
        report = loads_long_csv(lighting_session.cube, lighting_session.rules, text, "t")
        assert report.rows_loaded == 2
        assert len(report.warnings) == 1
        cell = address_of(
            lighting_session, ACCTS="Total sales", SCENARIO="Budget", TIME="Qtr1",
            ORG="North", PRODUCT="Commercial",
        )
        lighting_session.calc()
        assert lighting_session.cube.value_at(cell).value == 250.0

    def test_quoted_thousands_separators(self, lighting_session):
        text = (
            'ACCTS,SCENARIO,TIME,ORG,PRODUCT,Value\n'
            'Cost of Sales,Actuals,Qtr1,Asia Pacific,Outdoor,"6,602.56"\n'
        )
        report = loads_long_csv(lighting_session.cube, lighting_session.rules, text, "t")
        assert report.rows_loaded == 1

    def test_missing_dimension_column(self, lighting_session):
        with pytest.raises(DataFormatError, match="missing dimension"):
            loads_long_csv(
                lighting_session.cube,
                lighting_session.rules,
                "ACCTS,SCENARIO,TIME,ORG,Value\nx,y,z,w,1\n",
                "t",
            )

    def test_unknown_column_rejected(self, lighting_session):
        with pytest.raises(DataFormatError, match="unknown column"):
            loads_long_csv(
                lighting_session.cube,
                lighting_session.rules,
                "ACCTS,SCENARIO,TIME,ORG,PRODUCT,Comment,Value\n",
                "t",
            )


class TestWideLoad:
    def test_figure7_row2_five_cells(self, lighting_session):
        report = lighting_session.load_csv(
            EUROPE_BUDGET_PATH.read_text(encoding="utf-8"), "budget", "wide"
        )
        assert report.rows_total == 16
        assert report.rows_loaded == 16
        assert report.cells_written == 80
        assert report.rejected == []
        lighting_session.calc()
        expected = {
            "Total sales": 9108.738986,
            "Discounts and allowances": 3.449074244,
            "Standard cost of sales": 7091.923907,
            "Manufacturing Variances": 91.48248473,
            "Other Adjustments": 45.57454258,
        }
        for account, value in expected.items():
            cell = address_of(
                lighting_session, ACCTS=account, SCENARIO="Budget", TIME="Qtr1",
                ORG="Europe", PRODUCT="Commercial",
            )
            assert lighting_session.cube.value_at(cell).value == value

    def test_spread_dimension_inferred(self, lighting_session):
        report = lighting_session.load_csv(
            EUROPE_BUDGET_PATH.read_text(encoding="utf-8"), "budget", "wide", None
        )
        assert report.cells_written == 80

    def test_single_column_spread_equals_long(self, lighting_doc):
        wide = ModelSession.from_document(lighting_doc)
        long_ = ModelSession.from_document(lighting_doc)
        wide.load_csv(
            "SCENARIO,TIME,ORG,PRODUCT,Sales\nBudget,Qtr1,Europe,Commercial,42.5\n",
            "w",
            "wide",
        )
        long_.load_csv(
            "ACCTS,SCENARIO,TIME,ORG,PRODUCT,Value\n"
            "Sales,Budget,Qtr1,Europe,Commercial,42.5\n",
            "l",
            "long",
        )
        assert (wide.cube.base_values == long_.cube.base_values).all()
        assert (wide.cube.base_tag == long_.cube.base_tag).all()

    def test_ambiguous_member_header(self):
        doc = {
            "format_version": 1,
            "name": "amb",
            "dimensions": [
                {"name": "A", "members": ["Shared", "a2"]},
                {"name": "B", "members": ["Shared", "b2"]},
                {"name": "C", "members": ["c1"]},
            ],
            "rules": [],
        }
        session = ModelSession.from_document(doc)
        text = "A,C,Shared\n"  # 'Shared' exists in A and B; A already pinned
        with pytest.raises(DataFormatError, match="several dimensions"):
            loads_wide_csv(session.cube, session.rules, text + "a2,c1,5\n", "t")
        report = loads_wide_csv(
            session.cube, session.rules, text + "a2,c1,5\n", "t", spread_dimension="B"
        )
        assert report.rows_loaded == 1

    def test_missing_dimension_column(self, lighting_session):
        text = "SCENARIO,TIME,PRODUCT,Sales\nBudget,Qtr1,Commercial,10\n"
        with pytest.raises(DataFormatError, match="missing dimension column"):
            loads_wide_csv(lighting_session.cube, lighting_session.rules, text, "t")

    def test_row_atomic_rejection(self, lighting_session):
        text = (
            "SCENARIO,TIME,ORG,PRODUCT,Sales,Discounts and allowances\n"
            "Budget,Qtr1,Europe,Commercial,10,garbage\n"
            "Budget,Qtr1,Europe,Outdoor,20,0.5\n"
        )
        report = loads_wide_csv(lighting_session.cube, lighting_session.rules, text, "t")
        assert report.rows_loaded == 1
        assert report.rows_rejected == 1
        assert report.cells_written == 2
        sales = address_of(
            lighting_session, ACCTS="Total sales", SCENARIO="Budget", TIME="Qtr1",
            ORG="Europe", PRODUCT="Commercial",
        )
        assert lighting_session.cube.base_tag[
            lighting_session.structure.linear_index(sales)
        ] != DATA

    def test_blank_cells_skipped(self, lighting_session):
        text = (
            "SCENARIO,TIME,ORG,PRODUCT,Sales,Discounts and allowances\n"
            "Budget,Qtr1,Europe,Commercial,10,\n"
        )
        report = loads_wide_csv(lighting_session.cube, lighting_session.rules, text, "t")
        assert report.rows_loaded == 1
        assert report.cells_written == 1


class TestExports:
    def test_data_export_row_count(self, lighting_with_europe):
        text = export_long_csv(lighting_with_europe.cube, include="data")
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["format_version", "1"]
        assert rows[1] == ["ACCTS", "TIME", "PRODUCT", "ORG", "SCENARIO", "Value"]
        assert len(rows) - 2 == 80

    def test_export_import_export_fixpoint(self, lighting_with_europe, lighting_doc):
        first = export_long_csv(lighting_with_europe.cube, include="data")
        fresh = ModelSession.from_document(lighting_doc)
        report = fresh.load_csv(first, "reimport", "long")
        assert report.rejected == []
        second = export_long_csv(fresh.cube, include="data")
        assert first == second
        assert (
            fresh.cube.base_values == lighting_with_europe.cube.base_values
        ).all()

    def test_calculated_export_includes_europe_net_sales(self, lighting_with_europe):
        text = export_long_csv(
            lighting_with_europe.cube,
            filters={
                "ORG": ["Europe"],
                "SCENARIO": ["Budget"],
                "TIME": ["Qtr1"],
                "PRODUCT": ["Outdoor"],
                "ACCTS": ["Net sales"],
            },
            include="calculated",
        )
        rows = list(csv.reader(io.StringIO(text)))
        assert len(rows) == 3
        assert rows[2][:5] == ["Net sales", "Qtr1", "Outdoor", "Europe", "Budget"]
        assert float(rows[2][5]) == pytest.approx(9863.25760, abs=5e-5)

    def test_data_export_is_bit_identical_text(self, lighting_with_europe):
        # shortest round-trip decimal: re-parsing reproduces the doubles
        text = export_long_csv(lighting_with_europe.cube, include="data")
        for row in list(csv.reader(io.StringIO(text)))[2:]:
            assert float(repr(float(row[5]))) == float(row[5])

    def test_load_order_independence_disjoint_files(self, lighting_doc):
        a = ModelSession.from_document(lighting_doc)
        b = ModelSession.from_document(lighting_doc)
        fig6 = ACTUALS_ERP_PATH.read_text(encoding="utf-8")
        fig7 = EUROPE_BUDGET_PATH.read_text(encoding="utf-8")
        a.load_csv(fig6, "erp", "long")
        a.load_csv(fig7, "budget", "wide")
        b.load_csv(fig7, "budget", "wide")
        b.load_csv(fig6, "erp", "long")
        assert (a.cube.base_values == b.cube.base_values).all()
        assert (a.cube.base_tag == b.cube.base_tag).all()

    def test_ledger_rows_and_rule_text(self, lighting_with_europe):
        s = lighting_with_europe
        text = export_cell_ledger(s.cube, s.rules)
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[1]
        assert header[-3:] == ["Provenance", "Rule", "Formula"]
        target = ["Net sales", "Qtr1", "Outdoor", "Europe", "Budget"]
        match = [r for r in rows[2:] if r[:5] == target]
        assert len(match) == 1
        assert match[0][6] == "rule:6:ACCTS - Net sales"
        assert match[0][7] == "ACCTS - Net sales"
        assert match[0][8] == "{Total sales} - {Discounts and allowances}"

    def test_empty_cube_ledger(self, lighting_session):
        text = export_cell_ledger(lighting_session.cube, lighting_session.rules)
        rows = list(csv.reader(io.StringIO(text)))
        assert len(rows) == 2  # version + header only

    def test_fully_loaded_ledger_row_counts(self, lighting_synthetic):
        s = lighting_synthetic
        text = export_cell_ledger(s.cube, s.rules)
        rows = list(csv.reader(io.StringIO(text)))[2:]
        assert len(rows) == 12600
        rule_rows = [r for r in rows if r[6].startswith("rule:")]
        assert len(rule_rows) == 10872
        data_rows = [r for r in rows if r[6].startswith("data:")]
        assert len(data_rows) == 1728
