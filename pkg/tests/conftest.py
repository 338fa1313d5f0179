from __future__ import annotations

import functools
import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from rulecube import ModelSession
from rulecube.cube import DATA

SAMPLE_DIR = Path(__file__).resolve().parents[1] / "sample"

LIGHTING_PATH = SAMPLE_DIR / "lighting.json"
EUROPE_BUDGET_PATH = SAMPLE_DIR / "europe_budget.csv"
ACTUALS_ERP_PATH = SAMPLE_DIR / "actuals_erp.csv"


@pytest.fixture(scope="session")
def lighting_doc() -> dict:
    return json.loads(LIGHTING_PATH.read_text(encoding="utf-8"))


@pytest.fixture()
def lighting_session() -> ModelSession:
    return ModelSession.from_path(LIGHTING_PATH)


@pytest.fixture()
def lighting_with_europe(lighting_session: ModelSession) -> ModelSession:
    lighting_session.load_csv(
        EUROPE_BUDGET_PATH.read_text(encoding="utf-8"), "europe-budget", "wide"
    )
    lighting_session.calc()
    return lighting_session


def fill_synthetic(session: ModelSession, seed: int = 20240811) -> None:
    """Deterministically fill every input-eligible cell with data."""
    rng = np.random.default_rng(seed)
    structure = session.structure
    leaf_lists = [np.flatnonzero(m) for m in session.rules.leaf_masks(structure)]
    linear = functools.reduce(
        np.add.outer,
        [leaf * stride for leaf, stride in zip(leaf_lists, structure.strides)],
    ).reshape(-1)
    values = rng.uniform(25.0, 175.0, size=linear.size)
    cube = session.cube
    src = cube.source_index(f"synthetic-{seed}")
    cube.base_values[linear] = values
    cube.base_tag[linear] = DATA
    cube.base_src[linear] = src
    cube.calculated = False


@pytest.fixture()
def lighting_synthetic(lighting_session: ModelSession) -> ModelSession:
    fill_synthetic(lighting_session)
    lighting_session.calc()
    return lighting_session


def figure4_document() -> dict:
    """One-column income statement: the account rollup with printed data."""
    accounts = [
        {"name": "Total sales"},
        {"name": "Discounts and allowances"},
        {"name": "Net sales"},
        {"name": "Standard cost of sales"},
        {"name": "Manufacturing Variances"},
        {"name": "Other Adjustments"},
        {"name": "Total cost of sales"},
        {"name": "Gross profit"},
        {"name": "Engineering"},
        {"name": "Research & development"},
        {"name": "General & administrative"},
        {"name": "Sales & marketing"},
        {"name": "Total operating expenses"},
        {"name": "Income from operations"},
        {"name": "Income % of Total Sales"},
    ]
    rules = [
        ("Net sales", "=({Total sales})-({Discounts and allowances})"),
        (
            "Total cost of sales",
            "=SUM({Standard cost of sales},{Manufacturing Variances},{Other Adjustments})",
        ),
        ("Gross profit", "=({Net sales})-({Total cost of sales})"),
        (
            "Total operating expenses",
            "=SUM({Engineering},{Research & development},"
            "{General & administrative},{Sales & marketing})",
        ),
        ("Income from operations", "=({Gross profit})-({Total operating expenses})"),
        ("Income % of Total Sales", "={Income from operations}/{Total sales}"),
    ]
    return {
        "format_version": 1,
        "name": "one-column income statement",
        "dimensions": [
            {"name": "ACCTS", "members": accounts},
            {"name": "COL", "members": [{"name": "B"}]},
        ],
        "rules": [
            {
                "name": f"ACCTS - {target}",
                "dimension": "ACCTS",
                "target": target,
                "formula": formula,
            }
            for target, formula in rules
        ],
    }


FIGURE4_DATA = {
    "Total sales": 9904.06,
    "Discounts and allowances": 3.48,
    "Standard cost of sales": 6616.63,
    "Manufacturing Variances": 93.74,
    "Other Adjustments": 44.23,
    "Engineering": 447.21,
    "Research & development": 143.23,
    "General & administrative": 551.71,
    "Sales & marketing": 514.10,
}

FIGURE4_PRINTED = {
    "Net sales": 9900.58,
    "Total cost of sales": 6754.60,
    "Gross profit": 3145.98,
    "Total operating expenses": 1656.26,
    "Income from operations": 1489.71,
    "Income % of Total Sales": 0.15,
}


@pytest.fixture()
def figure4_session() -> ModelSession:
    session = ModelSession.from_document(figure4_document(), "figure4")
    cube = session.cube
    src = cube.source_index("printed-data")
    for account, value in FIGURE4_DATA.items():
        address = session.structure.address_from_names({"ACCTS": account, "COL": "B"})
        cube.set_data(session.structure.linear_index(address), value, src)
    session.calc()
    return session


def address_of(session: ModelSession, **names: str) -> tuple[int, ...]:
    return session.structure.address_from_names(names)


def europe_budget_rows() -> list[dict[str, float | str]]:
    """The wide budget file reparsed independently of the loader."""
    import csv

    with EUROPE_BUDGET_PATH.open(encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
