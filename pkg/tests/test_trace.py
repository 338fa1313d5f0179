from __future__ import annotations

import csv
import io

import pytest

from rulecube import (
    ModelSession,
    applicable_rules,
    decomposition_check,
    evaluate,
    export_docs,
    model_audit,
    parent_child_pairs,
    trace,
    trace_export,
    trace_path,
)
from rulecube.formula import EvalContext
from rulecube.model import Dimension, Member, ModelStructure
from rulecube.rules import RuleSet
from rulecube.trace import TraceError, parse_label

from conftest import address_of

ROOT_CELL = dict(
    ACCTS="Net sales", TIME="Qtr1", ORG="Total Company", PRODUCT="Total Products",
    SCENARIO="%Var",
)

FIGURE10_PICKS = [1, 2, 4, 2, 2]
FIGURE10_RULES = [
    None,                         # root: winner (SCENARIO - %Var)
    None,                         # $Var: winner (SCENARIO - $Var)
    "PRODUCT - Total Products",   # drill Budget through the product rollup
    "ORG - Total Company",
    "ORG - International",
    None,                         # Europe: winner (ACCTS - Net sales)
]


class TestApplicableRules:
    def test_multi_rule_cell_sequences(self, lighting_session):
        address = address_of(
            lighting_session, ACCTS="Net sales", TIME="Year", ORG="Total Company",
            PRODUCT="Total Products", SCENARIO="%Var",
        )
        rules = applicable_rules(lighting_session.rules, address)
        assert [r.sequence for r in rules] == [3, 4, 5, 6, 12]
        assert rules[-1].name == "SCENARIO - %Var"

    def test_all_leaf_address_has_none(self, lighting_session):
        address = address_of(
            lighting_session, ACCTS="Total sales", TIME="Qtr1", ORG="North",
            PRODUCT="Commercial", SCENARIO="Budget",
        )
        assert applicable_rules(lighting_session.rules, address) == []

    def test_single_rule_cell(self, lighting_session):
        address = address_of(
            lighting_session, ACCTS="Net sales", TIME="Qtr1", ORG="Europe",
            PRODUCT="Outdoor", SCENARIO="Budget",
        )
        rules = applicable_rules(lighting_session.rules, address)
        assert [r.name for r in rules] == ["ACCTS - Net sales"]


class TestTrace:
    def test_root_children_are_variance_operands(self, lighting_with_europe):
        node = trace(lighting_with_europe.cube, lighting_with_europe.rules, ROOT_CELL)
        assert node.label == "L1"
        assert node.rule.name == "SCENARIO - %Var"
        assert [c.label for c in node.children] == ["L1.1", "L1.2"]
        scenario = [c.names[4] for c in node.children]
        assert scenario == ["$Var", "Actuals"]

    def test_drill_via_non_winning_rule(self, lighting_with_europe):
        s = lighting_with_europe
        budget_total = dict(
            ACCTS="Net sales", TIME="Qtr1", ORG="Total Company",
            PRODUCT="Total Products", SCENARIO="Budget",
        )
        node = trace(s.cube, s.rules, budget_total, "PRODUCT - Total Products")
        assert [c.names[2] for c in node.children] == [
            "Commercial", "Energy Savings", "LED Based", "Outdoor",
        ]

    def test_not_applicable_rule_rejected(self, lighting_with_europe):
        with pytest.raises(TraceError, match="not applicable"):
            trace(
                lighting_with_europe.cube,
                lighting_with_europe.rules,
                ROOT_CELL,
                "TIME - Year",
            )

    def test_leaf_cell_has_no_children(self, lighting_with_europe):
        s = lighting_with_europe
        leaf = dict(
            ACCTS="Total sales", TIME="Qtr1", ORG="Europe", PRODUCT="Outdoor",
            SCENARIO="Budget",
        )
        node = trace(s.cube, s.rules, leaf)
        assert node.rule is None and node.children == []

    def test_figure10_drill_path_labels_and_values(self, lighting_with_europe):
        s = lighting_with_europe
        nodes = trace_path(s.cube, s.rules, ROOT_CELL, FIGURE10_PICKS, FIGURE10_RULES)
        assert [n.label for n in nodes] == [
            "L1", "L1.1", "L1.1.2", "L1.1.2.4", "L1.1.2.4.2", "L1.1.2.4.2.2",
        ]
        europe = nodes[-1]
        assert [c.label for c in europe.children] == [
            "L1.1.2.4.2.2.1", "L1.1.2.4.2.2.2",
        ]
        assert europe.value.value == pytest.approx(9863.25760, abs=5e-5)
        assert europe.children[0].value.value == pytest.approx(9866.78635, abs=5e-5)
        assert europe.children[1].value.value == pytest.approx(3.52876, abs=5e-5)
        assert europe.children[0].rule is None

    def test_trace_export_blocks(self, lighting_with_europe):
        s = lighting_with_europe
        nodes = trace_path(s.cube, s.rules, ROOT_CELL, FIGURE10_PICKS, FIGURE10_RULES)
        text = trace_export(s.structure, nodes)
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[1] == ["Level", "ACCTS", "TIME", "PRODUCT", "ORG", "SCENARIO",
                           "Value", "Rule"]
        labels = [r[0] for r in rows[2:] if r]
        assert labels[0] == "L1"
        assert labels[-1] == "L1.1.2.4.2.2.2"
        blanks = sum(1 for r in rows[2:] if not r)
        assert blanks == 5  # six blocks
        chosen = [r for r in rows if r and r[0] == "L1.1.2"]
        assert any("Commercial" in "".join(r) or "{Commercial}" in r[-1] for r in chosen)

    def test_single_node_export(self, lighting_with_europe):
        s = lighting_with_europe
        leaf = dict(
            ACCTS="Total sales", TIME="Qtr1", ORG="Europe", PRODUCT="Outdoor",
            SCENARIO="Budget",
        )
        node = trace(s.cube, s.rules, leaf)
        rows = list(csv.reader(io.StringIO(trace_export(s.structure, [node]))))
        assert len(rows) == 3

    def test_label_algebra(self):
        assert parse_label("L1") == ()
        assert parse_label("L1.1.2.4.2.2") == (1, 2, 4, 2, 2)
        with pytest.raises(ValueError):
            parse_label("X2.1")

    def test_winner_trace_value_identity(self, lighting_synthetic):
        # Re-evaluating the winning rule over the children's displayed
        # values reproduces the parent bit-for-bit.
        s = lighting_synthetic
        state = s.cube.state
        sample = [
            dict(ACCTS="Net sales", TIME="Year", ORG="Total Company",
                 PRODUCT="Total Products", SCENARIO="%Var"),
            dict(ACCTS="Gross profit", TIME="Qtr2", ORG="Domestic",
                 PRODUCT="Commercial", SCENARIO="Actuals"),
            dict(ACCTS="Total sales", TIME="Year", ORG="North",
                 PRODUCT="Outdoor", SCENARIO="Budget"),
        ]
        for names in sample:
            node = trace(s.cube, s.rules, names)
            assert node.rule is not None
            ctx = EvalContext(s.structure, state.values, state.errors, node.address)
            recomputed = evaluate(node.rule.expression, ctx)
            assert recomputed.error == node.value.error
            assert recomputed.value.hex() == node.value.value.hex()


class TestDecomposition:
    def test_additive_rules_agree(self, lighting_with_europe):
        report = decomposition_check(
            lighting_with_europe.cube,
            lighting_with_europe.rules,
            dict(ACCTS="Net sales", TIME="Year", ORG="Europe", PRODUCT="Outdoor",
                 SCENARIO="Budget"),
        )
        assert {r.rule_name for r in report.readings} == {"TIME - Year", "ACCTS - Net sales"}
        assert all(r.agrees for r in report.readings)
        assert report.disagreements == ()

    def test_percent_var_at_year_flagged(self, lighting_synthetic):
        report = decomposition_check(
            lighting_synthetic.cube,
            lighting_synthetic.rules,
            dict(ACCTS="Net sales", TIME="Year", ORG="North", PRODUCT="Commercial",
                 SCENARIO="%Var"),
        )
        time_reading = next(r for r in report.readings if r.rule_name == "TIME - Year")
        assert not time_reading.agrees
        winner = next(r for r in report.readings if r.winner)
        assert winner.rule_name == "SCENARIO - %Var" and winner.agrees

    def test_all_leaf_cell_empty_report(self, lighting_with_europe):
        report = decomposition_check(
            lighting_with_europe.cube,
            lighting_with_europe.rules,
            dict(ACCTS="Total sales", TIME="Qtr1", ORG="North", PRODUCT="Commercial",
                 SCENARIO="Budget"),
        )
        assert report.readings == ()

    def test_audit_soundness(self, lighting_synthetic):
        s = lighting_synthetic
        reports = model_audit(s.cube, s.rules)
        assert reports, "ratio cells under aggregates must be flagged"
        for report in reports:
            assert len(report.readings) >= 2
            assert any(not r.agrees for r in report.readings)
        # Purely additive cells are never flagged: every flagged cell
        # carries the ratio scenario member.
        assert {r.names[4] for r in reports} == {"%Var"}


class TestDocs:
    def test_figure11_variant_pairs(self):
        members = [
            Member("Sales", parent="Net Sales"),
            Member("Discounts and allowances", parent="Net Sales"),
            Member("Net Sales", parent="Margin"),
            Member("Cost of Sales", parent="Total Cost of Sales"),
            Member("Manufacturing Variances", parent="Total Cost of Sales"),
            Member("Other Adjustments", parent="Total Cost of Sales"),
            Member("Total Cost of Sales", parent="Margin"),
            Member("Margin"),
            Member("Margin % Sales"),
            Member("Sales % Total Sales"),
        ]
        structure = ModelStructure(
            "docs variant",
            [Dimension("ACCTS", members), Dimension("COL", [Member("B")])],
        )
        pairs = parent_child_pairs(structure, "ACCTS")
        assert pairs == [
            ("Sales", 1, 3),
            ("Discounts and allowances", 2, 3),
            ("Net Sales", 3, 8),
            ("Cost of Sales", 4, 7),
            ("Manufacturing Variances", 5, 7),
            ("Other Adjustments", 6, 7),
            ("Total Cost of Sales", 7, 8),
            ("Margin", 8, 0),
            ("Margin % Sales", 9, 0),
            ("Sales % Total Sales", 10, 0),
        ]

    def test_flat_dimension_all_roots(self, lighting_session):
        pairs = parent_child_pairs(lighting_session.structure, "SCENARIO")
        assert [p[2] for p in pairs] == [0, 0, 0, 0]

    def test_lighting_docs_rule_listing(self, lighting_session):
        text = export_docs(lighting_session.structure, lighting_session.rules)
        lines = text.splitlines()
        rules_at = lines.index("Rules")
        assert lines[rules_at + 1] == "Main"
        listed = [l for l in lines[rules_at + 2 :] if l and not l.startswith("Main")]
        assert len(listed) == 12
        assert listed[0].startswith("1\tORG - Domestic\t= ")
        assert listed[11].startswith("12\tSCENARIO - %Var\t= IFERROR({$Var} / {Actuals}, 0)")

    def test_docs_reconstruct_hierarchy(self, lighting_session):
        structure = lighting_session.structure
        for dim in structure.dimensions:
            pairs = parent_child_pairs(structure, dim.name)
            rebuilt = {}
            for name, child, parent in pairs:
                rebuilt[name] = None if parent == 0 else pairs[parent - 1][0]
            for member in dim.members:
                assert rebuilt[member.name] == member.parent
