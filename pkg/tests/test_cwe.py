import csv
import io
import logging

import pytest
from hypothesis import given, strategies as st

from hwasset.assets import Objective
from hwasset.cwe import (
    CweDatabase,
    CweEntry,
    description_extract,
    load_cwe,
    objectives_from,
    parse_consequences,
    view_by_objective,
)
from hwasset.errors import CweLoadError

C, I, A = Objective.CONFIDENTIALITY, Objective.INTEGRITY, Objective.AVAILABILITY
HEADER = ["CWE-ID", "Name", "Weakness Abstraction", "Status", "Description", "Common Consequences"]


def csv_text(rows):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(HEADER)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


@pytest.fixture
def hw_db(fixtures_dir):
    return load_cwe(fixtures_dir / "cwe" / "hw_view.csv")


def test_fixture_catalogue_loads(hw_db):
    assert len(hw_db) == 36
    assert C in hw_db.get(1300).objectives
    assert {1262, 1247} <= hw_db.ids()


def test_confidentiality_view_has_key_row_ids(hw_db):
    ids = [e.id for e in view_by_objective(hw_db, C)]
    assert {1300, 1191, 1239, 1258} <= set(ids)
    assert ids == sorted(ids)


def test_views_cover_tagged_entries(hw_db):
    union = set()
    for o in (C, I, A):
        union |= {e.id for e in view_by_objective(hw_db, o)}
    assert union == {e.id for e in hw_db if e.objectives}


def test_view_accepts_objective_strings(hw_db):
    assert view_by_objective(hw_db, "Availability") == view_by_objective(hw_db, A)


def test_empty_file_is_load_error(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(CweLoadError):
        load_cwe(p)


def test_header_only_is_load_error(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text(csv_text([]))
    with pytest.raises(CweLoadError, match="no usable entries"):
        load_cwe(p)


def test_missing_file_is_load_error(tmp_path):
    with pytest.raises(CweLoadError):
        load_cwe(tmp_path / "nope.csv")


def test_not_a_cwe_export(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(CweLoadError, match="CWE-ID"):
        load_cwe(p)


def test_duplicate_rows_keep_first(tmp_path, caplog):
    p = tmp_path / "dup.csv"
    p.write_text(csv_text([
        ["1300", "First", "Base", "Stable", "one", "::SCOPE:Confidentiality:IMPACT:Read Memory::"],
        ["1300", "Second", "Base", "Stable", "two", "::SCOPE:Integrity::"],
    ]))
    with caplog.at_level(logging.WARNING):
        db = load_cwe(p)
    assert len(db) == 1 and db.get(1300).name == "First"
    assert any("duplicate CWE-1300" in r.message for r in caplog.records)


def test_malformed_rows_skipped(tmp_path, caplog):
    p = tmp_path / "bad.csv"
    p.write_text(csv_text([
        ["abc", "Broken", "", "", "", ""],
        ["-4", "Negative", "", "", "", ""],
        ["1191", "", "", "", "no name", ""],
        ["CWE-1231", "Lock bit", "Base", "Stable", "desc", "::SCOPE:Access Control:IMPACT:Modify Memory::"],
    ]))
    with caplog.at_level(logging.WARNING):
        db = load_cwe(p)
    assert db.ids() == {1231}
    assert db.get(1231).objectives == frozenset({I})
    assert sum("malformed CWE row" in r.message for r in caplog.records) == 3


def test_entry_with_all_objectives_in_every_view(tmp_path):
    p = tmp_path / "all.csv"
    p.write_text(csv_text([
        ["1", "All", "", "", "d", "::SCOPE:Confidentiality:SCOPE:Integrity:SCOPE:Availability::"],
        ["2", "None", "", "", "d", "::SCOPE:Other::"],
    ]))
    db = load_cwe(p)
    for o in (C, I, A):
        assert [e.id for e in view_by_objective(db, o)] == [1]


def test_view_with_no_entries_is_empty():
    db = CweDatabase([CweEntry(5, "x", "", frozenset({C}))])
    assert view_by_objective(db, A) == []


def test_json_roundtrip(hw_db, tmp_path):
    p = tmp_path / "cwe.json"
    hw_db.save_json(p)
    again = load_cwe(p)
    assert again.ids() == hw_db.ids()
    for e in hw_db:
        assert again.get(e.id).objectives == e.objectives
        assert again.get(e.id).description == e.description


def test_parse_consequences_multiple_blocks():
    cons = parse_consequences(
        "::SCOPE:Confidentiality:SCOPE:Integrity:IMPACT:Read Memory:IMPACT:Modify Memory:NOTE:x::"
        "::SCOPE:Availability:IMPACT:DoS: Crash, Exit, or Restart::"
    )
    assert cons[0].scopes == ("Confidentiality", "Integrity")
    assert cons[0].impacts == ("Read Memory", "Modify Memory")
    assert cons[1].impacts == ("DoS: Crash, Exit, or Restart",)


def test_objectives_from_impacts_only():
    cons = parse_consequences("::SCOPE:Access Control:IMPACT:Bypass Protection Mechanism:IMPACT:Read Application Data::")
    assert objectives_from(cons) == frozenset({C})
    assert objectives_from(parse_consequences("::SCOPE:Other:IMPACT:DoS: Instability::")) == frozenset({A})


def test_description_extract_first_paragraph_and_consequences():
    cons = parse_consequences("::SCOPE:Integrity:IMPACT:Modify Memory::")
    text = description_extract("First paragraph\nwrapped.\n\nSecond paragraph.", cons, budget=600)
    assert text == "First paragraph wrapped. Scope: Integrity; Impact: Modify Memory"


@given(desc=st.text(max_size=2000), budget=st.integers(10, 800))
def test_description_extract_respects_budget(desc, budget):
    assert len(description_extract(desc, (), budget)) <= budget


def test_budget_applies_to_catalogue(fixtures_dir):
    db = load_cwe(fixtures_dir / "cwe" / "hw_view.csv", description_budget=80)
    assert all(len(e.description) <= 80 for e in db)
