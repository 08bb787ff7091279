"""
Tests de la CLI y del CsvAdapter (formatos de archivo, códigos de salida)
"""

import json

import numpy as np
import pytest

from app.adapters.csv_adapter import CsvAdapter
from app.core.exceptions import (
    DataException,
    DomainException,
    EmptyDataException,
    InsufficientDataException,
    ParseException,
    SolveFailureException,
)
from app.main import main
from app.routers.common import padded_to
from app.schemas.data import SparseFTS
from app.schemas.grids import SpatialGrid
from app.schemas.regression import FilterSet

FIXED = ["--p", "21", "--n-freq", "64", "--L", "5", "--B-R", "0.25", "--B-V", "0.25", "--B-C", "0.25", "--param", "0.05"]


def write(path, text: str):
    path.write_text(text, encoding="utf-8")
    return path


def error_payload(capsys) -> dict:
    """El reporte JSON de error; el resto de stderr son logs"""
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith('{"error"')]
    assert lines, "no se reportó un error estructurado"
    return json.loads(lines[-1])


# ==================== CSV ====================

class TestSparseCsv:

    def test_reads_observations(self, tmp_path):
        path = write(tmp_path / "x.csv", "t,x,y\n1,0.1,2.0\n1,0.5,-1.0\n3,0.9,0.5\n")
        data = CsvAdapter.ingest_sparse_csv(path)
        assert data.T == 3
        np.testing.assert_array_equal(data.counts, [2, 0, 1])
        np.testing.assert_allclose(data.y, [2.0, -1.0, 0.5])

    def test_wrong_header(self, tmp_path):
        path = write(tmp_path / "x.csv", "t,pos,y\n1,0.1,2.0\n")
        with pytest.raises(ParseException) as info:
            CsvAdapter.ingest_sparse_csv(path)
        assert info.value.details["line"] == 1

    def test_location_outside_unit_interval(self, tmp_path):
        path = write(tmp_path / "x.csv", "t,x,y\n1,0.1,2.0\n2,1.5,0.3\n")
        with pytest.raises(DomainException) as info:
            CsvAdapter.ingest_sparse_csv(path)
        assert info.value.details["line"] == 3
        assert "línea 3" in info.value.message

    def test_non_numeric_value(self, tmp_path):
        path = write(tmp_path / "x.csv", "t,x,y\n1,0.1,2.0\n1,0.2,abc\n")
        with pytest.raises(ParseException) as info:
            CsvAdapter.ingest_sparse_csv(path)
        assert info.value.details["line"] == 3

    @pytest.mark.parametrize("text", ["", "t,x,y\n"])
    def test_empty(self, tmp_path, text):
        path = write(tmp_path / "x.csv", text)
        with pytest.raises(EmptyDataException):
            CsvAdapter.ingest_sparse_csv(path)

    def test_padding_adds_empty_trailing_times(self, tmp_path):
        data = CsvAdapter.ingest_sparse_csv(write(tmp_path / "x.csv", "t,x,y\n1,0.1,2.0\n2,0.4,1.0\n"))
        padded = padded_to(data, 4)
        assert padded.T == 4
        np.testing.assert_array_equal(padded.counts, [1, 1, 0, 0])
        assert padded_to(data, 2) is data


class TestScalarCsv:

    def test_blank_is_missing(self, tmp_path):
        Z = CsvAdapter.ingest_scalar_csv(write(tmp_path / "z.csv", "t,z\n1,1.5\n2,\n3,-0.5\n"))
        assert Z.T == 3
        assert np.isnan(Z.z[1])
        np.testing.assert_allclose(Z.z[[0, 2]], [1.5, -0.5])

    def test_absent_time_is_missing(self, tmp_path):
        Z = CsvAdapter.ingest_scalar_csv(write(tmp_path / "z.csv", "t,z\n1,1.0\n4,2.0\n"))
        assert Z.T == 4
        assert np.isnan(Z.z[1]) and np.isnan(Z.z[2])

    def test_duplicate_time(self, tmp_path):
        with pytest.raises(ParseException) as info:
            CsvAdapter.ingest_scalar_csv(write(tmp_path / "z.csv", "t,z\n1,1.0\n2,2.0\n2,3.0\n"))
        assert info.value.details["line"] == 4

    def test_needs_two_observed(self, tmp_path):
        with pytest.raises(InsufficientDataException):
            CsvAdapter.ingest_scalar_csv(write(tmp_path / "z.csv", "t,z\n1,1.0\n2,\n"))


class TestOtherFiles:

    def test_dense_on_grid(self, tmp_path):
        grid = SpatialGrid(p=5)
        rows = ["t,x,y"] + [f"{t},{float(x)!r},{t * 10 + i}" for t in (1, 2) for i, x in enumerate(grid.points)]
        data = CsvAdapter.ingest_dense_csv(write(tmp_path / "d.csv", "\n".join(rows) + "\n"), grid)
        np.testing.assert_allclose(data.curves, [[10, 11, 12, 13, 14], [20, 21, 22, 23, 24]])

    def test_dense_requires_common_locations(self, tmp_path):
        path = write(tmp_path / "d.csv", "t,x,y\n1,0.0,1.0\n1,1.0,2.0\n2,0.0,1.0\n")
        with pytest.raises(DataException):
            CsvAdapter.ingest_dense_csv(path, SpatialGrid(p=5))

    def test_filters_full_precision(self, tmp_path, rng):
        grid = SpatialGrid(p=7)
        filters = FilterSet(M=2, values=rng.standard_normal((5, 7)) / 3.0)
        path = CsvAdapter.write_filters(filters, grid, tmp_path / "filters.csv")
        again = CsvAdapter.read_filters(path)
        assert again.M == 2
        np.testing.assert_array_equal(again.values, filters.values)


# ==================== COMANDOS ====================

class TestCommands:

    def test_simulate_then_forecast_reproduces_filters(self, tmp_path):
        run = tmp_path / "run"
        code = main(["simulate", "--T", "60", "--nmax", "10", "--seed", "7", "--output", str(run), *FIXED])
        assert code == 0
        for name in ("regressor.csv", "response.csv", "true_filters.csv", "filters.csv",
                     "forecasts.csv", "spectral.csv", "cross_spectral.csv", "manifest.json", "metrics.json"):
            assert (run / name).exists(), name

        metrics = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
        assert {"delta_B", "delta_pred", "delta_pred_oracle"} <= set(metrics)
        payload = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
        assert payload["resolved"]["B_R"] == 0.25
        assert payload["config"]["simulation"]["T"] == 60

        assert main(["forecast", "--manifest", str(run / "manifest.json")]) == 0
        assert (run / "forecast" / "filters.csv").read_bytes() == (run / "filters.csv").read_bytes()

    def test_estimate_from_csv(self, tmp_path, sparse_scenario):
        _, data, Z, _ = sparse_scenario
        regressor = CsvAdapter.write_sparse_csv(data, tmp_path / "x.csv")
        response = CsvAdapter.write_scalar_csv(Z, tmp_path / "z.csv")
        out = tmp_path / "out"

        code = main(["estimate", "--regressor", str(regressor), "--response", str(response),
                     "--output", str(out), *FIXED])
        assert code == 0
        payload = CsvAdapter.read_json(out / "manifest.json")
        assert payload["config"]["command"] == "estimate"
        assert len((out / "forecasts.csv").read_text(encoding="utf-8").splitlines()) == data.T + 1

    def test_invalid_configuration_exits_2(self, tmp_path, capsys):
        code = main(["estimate", "--regressor", "x.csv", "--response", "z.csv", "--B-R", "-1",
                     "--output", str(tmp_path)])
        assert code == 2
        payload = error_payload(capsys)
        assert payload["error"] == "ConfigException"
        assert any(error["field"] == "B_R" for error in payload["details"]["errors"])

    def test_bad_csv_exits_3(self, tmp_path, capsys):
        regressor = write(tmp_path / "x.csv", "t,x,y\n1,0.1,2.0\n2,1.5,0.3\n")
        response = write(tmp_path / "z.csv", "t,z\n1,1.0\n2,2.0\n")
        code = main(["estimate", "--regressor", str(regressor), "--response", str(response),
                     "--output", str(tmp_path / "out"), *FIXED])
        assert code == 3
        payload = error_payload(capsys)
        assert payload["error"] == "DomainException"
        assert payload["details"]["line"] == 3

    def test_numeric_failure_exits_4(self, tmp_path, capsys, monkeypatch, sparse_scenario):
        _, data, Z, _ = sparse_scenario
        regressor = CsvAdapter.write_sparse_csv(data, tmp_path / "x.csv")
        response = CsvAdapter.write_scalar_csv(Z, tmp_path / "z.csv")

        def failing(*args, **kwargs):
            raise SolveFailureException("sistema sin solución")

        monkeypatch.setattr("app.routers.common.PipelineService.estimate", failing)
        code = main(["estimate", "--regressor", str(regressor), "--response", str(response),
                     "--output", str(tmp_path / "out"), *FIXED])
        assert code == 4
        assert error_payload(capsys)["error"] == "SolveFailureException"

    def test_padding_is_applied_on_load(self, tmp_path, sparse_scenario):
        _, data, Z, _ = sparse_scenario
        # Sin observaciones en el último tiempo el archivo t,x,y termina antes
        keep = data.t < data.T
        trimmed = SparseFTS(T=data.T - 1, t=data.t[keep], x=data.x[keep], y=data.y[keep])
        regressor = CsvAdapter.write_sparse_csv(trimmed, tmp_path / "x.csv")
        response = CsvAdapter.write_scalar_csv(Z, tmp_path / "z.csv")
        code = main(["estimate", "--regressor", str(regressor), "--response", str(response),
                     "--output", str(tmp_path / "out"), *FIXED])
        assert code == 0
