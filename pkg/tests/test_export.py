import csv
import io
import json
import warnings

import numpy as np
import pytest

from hml_tori.errors import InvalidParameterError, UnclosedTorusWarning
from hml_tori.export import CSV_COLUMNS, export_samples, load_bundle, sample_domain
from hml_tori.immersion import eval_psi


@pytest.fixture(scope="module")
def csv_text(torus):
    return export_samples(torus, (8, 8, 8), "csv")


def test_csv_shape_and_header(csv_text):
    lines = csv_text.splitlines()
    assert len(lines) == 513
    assert lines[0].split(",") == CSV_COLUMNS


def test_csv_z_major_and_values(csv_text, torus):
    rows = list(csv.DictReader(io.StringIO(csv_text)))
    xs = [float(r["x"]) for r in rows[:8]]
    assert xs == sorted(xs) and len(set(xs)) == 8
    assert len({r["z"] for r in rows[:64]}) == 1  # z varies slowest
    for r in rows[::37]:
        psi = eval_psi(torus, float(r["x"]), float(r["y"]), float(r["z"]))
        got = np.array([complex(float(r[f"re_psi{j}"]), float(r[f"im_psi{j}"])) for j in range(1, 5)])
        assert np.array_equal(got, psi)


def test_domain_of_candidate(torus, torus_candidate):
    dom = sample_domain(torus)
    assert not dom.provisional
    assert dom.n_periods == torus_candidate.n


def test_ply(torus):
    text = export_samples(torus, (4, 3, 2), "ply")
    assert text.startswith("ply\nformat ascii 1.0\n")
    header, body = text.split("end_header\n")
    assert "element vertex 24" in header
    assert len(body.strip().splitlines()) == 24


def test_json_roundtrip(torus, tmp_path):
    path = tmp_path / "s.json"
    export_samples(torus, (3, 3, 3), "json", path=path)
    doc = json.loads(path.read_text())
    back = load_bundle(path)
    s = np.array(doc["samples"])
    psi = eval_psi(back, s[:, 0], s[:, 1], s[:, 2])
    stored = s[:, 3::2] + 1j * s[:, 4::2]
    assert np.max(np.abs(psi - stored)) <= 1e-15


def test_deterministic(torus):
    for fmt in ("csv", "json", "ply"):
        assert export_samples(torus, (3, 2, 2), fmt) == export_samples(torus, (3, 2, 2), fmt)


def test_unclosed_domain_warns_and_records(reference):
    with pytest.warns(UnclosedTorusWarning):
        text = export_samples(reference, (2, 2, 2), "json")
    dom = json.loads(text)["domain"]
    assert dom["provisional"] and len(dom["warnings"]) == 2 and dom["n_periods"] == 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnclosedTorusWarning)
        assert "comment warning" in export_samples(reference, (2, 2, 2), "ply")


def test_bad_inputs(torus):
    with pytest.raises(InvalidParameterError):
        export_samples(torus, (2, 2, 2), "xyz")
    with pytest.raises(InvalidParameterError):
        export_samples(torus, (0, 2, 2), "csv")
