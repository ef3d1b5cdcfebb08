import json
import math

import numpy as np
import pytest

from quivercap.bl import BLDatum
from quivercap.cli import main
from quivercap.model import datum_equal
from quivercap.serialization import (
    DatumFileError,
    datum_from_dict,
    datum_to_dict,
    parse_datum,
    serialize_datum,
)
from quivercap.instances import (
    hoelder_datum,
    kronecker,
    random_converging_datum,
    row_projector_datum,
    zero_representation,
)


@pytest.fixture
def kron_file(tmp_path):
    path = tmp_path / "kron.json"
    path.write_text(serialize_datum(kronecker(2.0)))
    return str(path)


@pytest.fixture
def hoelder_file(tmp_path):
    path = tmp_path / "hoelder.json"
    path.write_text(serialize_datum(hoelder_datum(3)))
    return str(path)


@pytest.fixture
def zero_file(tmp_path):
    path = tmp_path / "zero.json"
    path.write_text(serialize_datum(zero_representation(2)))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- parsing and round trips -----------------------------------------------


def test_round_trip_weight_form(rng):
    datum, _ = random_converging_datum(rng, size_cap=8)
    assert datum_equal(datum_from_dict(json.loads(serialize_datum(datum))), datum)


def test_round_trip_exponent_form():
    bldatum = hoelder_datum(3)
    parsed = datum_from_dict(json.loads(serialize_datum(bldatum)))
    assert isinstance(parsed, BLDatum)
    assert datum_equal(parsed, bldatum)


def test_parse_rejects_unknown_keys():
    doc = json.loads(serialize_datum(kronecker(2.0)))
    doc["extra"] = 1
    with pytest.raises(DatumFileError, match="unknown keys"):
        datum_from_dict(doc)


def test_parse_requires_exactly_one_weight_form():
    doc = json.loads(serialize_datum(kronecker(2.0)))
    doc["exponents"] = {"w": "1/1"}
    with pytest.raises(DatumFileError, match="exactly one"):
        datum_from_dict(doc)
    del doc["weight"]
    del doc["exponents"]
    with pytest.raises(DatumFileError, match="exactly one"):
        datum_from_dict(doc)


def test_parse_names_arrow_on_shape_error():
    doc = json.loads(serialize_datum(kronecker(2.0)))
    doc["matrices"]["a0"] = [[2.0], [1.0]]
    with pytest.raises(DatumFileError, match="a0"):
        datum_from_dict(doc)


def test_parse_rejects_invalid_datum():
    doc = json.loads(serialize_datum(kronecker(2.0)))
    doc["weight"] = {"v": 1, "w": -2}
    with pytest.raises(DatumFileError, match="orthogonal"):
        datum_from_dict(doc)


def test_parse_error_has_line_context(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"quiver": }')
    with pytest.raises(DatumFileError, match="line 1"):
        parse_datum(str(path))


# --- commands -----------------------------------------------------------------


def test_capacity_command(capsys, kron_file):
    code, out, _ = run_cli(capsys, "capacity", kron_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["status"] == "converged"
    assert doc["capacity"] == pytest.approx(4.0)
    assert doc["version"]
    assert doc["config"]["tol_ds"] == 1e-12


def test_semistable_zero_has_witness_and_exit_zero(capsys, zero_file):
    code, out, _ = run_cli(capsys, "semistable", zero_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["semistable"] == "no"
    assert doc["witness"]["verified"] is True


def test_bl_command(capsys, hoelder_file):
    code, out, _ = run_cli(capsys, "bl", hoelder_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["bl"] == pytest.approx(1.0)
    assert doc["geometric_bl"] is True


def test_bl_requires_exponent_file(capsys, kron_file):
    code, _, err = run_cli(capsys, "bl", kron_file)
    assert code == 2
    assert "exponents" in err


def test_bl_infinite_serializes_as_string(capsys, tmp_path):
    zero = zero_representation(2)
    bldatum = BLDatum(zero.quiver, zero.dims, zero.rep, ["1/1"])
    path = tmp_path / "zero_bl.json"
    path.write_text(serialize_datum(bldatum))
    code, out, _ = run_cli(capsys, "bl", str(path))
    assert code == 0
    doc = json.loads(out)
    assert doc["bl"] == "inf"
    assert doc["feasible"] is False


def test_scale_command_reports_group_and_trace(capsys, kron_file):
    code, out, _ = run_cli(capsys, "scale", kron_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["group"]["v"] == [[2.0]]
    assert doc["ds_trace"][0] == pytest.approx(18.0)


def test_extremisers_command(capsys, kron_file):
    code, out, _ = run_cli(capsys, "extremisers", kron_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["extremiser"] == [[[1.0]]]
    assert doc["stationarity_residual"] <= 1e-8
    assert doc["objective_at_extremiser"] == pytest.approx(4.0)


def test_oracle_command(capsys, kron_file):
    code, out, _ = run_cli(capsys, "oracle", kron_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["capacity"] == pytest.approx(4.0, rel=1e-9)


def test_factorize_command(capsys, tmp_path):
    from quivercap.model import QuiverDatum, direct_sum, sum_dims

    base = kronecker(2.0)
    other = kronecker(3.0)
    rep = direct_sum(base.quiver, base.dims, base.rep, other.dims, other.rep)
    datum = QuiverDatum(base.quiver, sum_dims(base.dims, other.dims), base.weight, rep)
    path = tmp_path / "block.json"
    path.write_text(serialize_datum(datum))
    code, out, _ = run_cli(capsys, "factorize", str(path), "--d1", '{"v": 1, "w": 1}')
    assert code == 0
    doc = json.loads(out)
    assert doc["capacity_total"] == pytest.approx(36.0)
    assert doc["relative_gap"] <= 1e-10


def test_factorize_requires_d1(capsys, kron_file):
    code, _, err = run_cli(capsys, "factorize", kron_file)
    assert code == 2
    assert "--d1" in err


def test_validate_command_reports_violations(capsys, tmp_path):
    doc = json.loads(serialize_datum(kronecker(2.0)))
    doc["weight"] = {"v": 1, "w": -2}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, _, err = run_cli(capsys, "validate", str(path))
    # invalid files are rejected at parse time with the violation listed
    assert code == 2
    assert "orthogonal" in err


def test_validate_command_ok(capsys, kron_file):
    code, out, _ = run_cli(capsys, "validate", kron_file)
    assert code == 0
    assert json.loads(out)["status"] == "ok"


def test_indeterminate_exit_code(capsys, tmp_path):
    from quivercap.model import Arrow, BipartiteQuiver, QuiverDatum

    quiver = BipartiteQuiver(["v"], ["w"], [Arrow("a1", "v", "w"), Arrow("a2", "v", "w")])
    rep = {"a1": [[1.0, 1.0], [0.0, 1.0]], "a2": [[2.0, 0.0], [0.0, 2.0]]}
    datum = QuiverDatum(quiver, {"v": 2, "w": 2}, {"v": 1, "w": -1}, rep)
    path = tmp_path / "strict.json"
    path.write_text(serialize_datum(datum))
    code, out, _ = run_cli(capsys, "capacity", str(path), "--max-iter", "500")
    assert code == 3
    assert json.loads(out)["status"] == "indeterminate"


def test_usage_and_missing_file_exit_codes(capsys):
    with pytest.raises(SystemExit) as info:
        main(["nonsense"])
    assert info.value.code == 1
    capsys.readouterr()
    assert main(["capacity", "/nonexistent/path.json"]) == 2
    capsys.readouterr()
    assert main(["capacity"]) == 1
    capsys.readouterr()


def test_report_determinism(capsys, kron_file):
    code1, out1, _ = run_cli(capsys, "capacity", kron_file, "--seed", "3")
    code2, out2, _ = run_cli(capsys, "capacity", kron_file, "--seed", "3")
    assert code1 == code2 == 0
    assert out1 == out2


def test_text_format(capsys, kron_file):
    code, out, _ = run_cli(capsys, "capacity", kron_file, "--format", "text")
    assert code == 0
    assert "capacity: 4.0" in out
