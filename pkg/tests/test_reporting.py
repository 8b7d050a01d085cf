import json

import numpy as np
from numpy.testing import assert_allclose

from netspectra import (DensityField, FilterSpec, GridSpec, MeanSpectrum,
                        density_field)
from netspectra.consensus import ConsensusOutcome, MethodSummary, RateRecord
from netspectra import reporting


def small_field():
    spec = MeanSpectrum.from_eigenvalues([0.2], 1.0, "scaled")
    grid = GridSpec(t_min=-0.4, t_max=0.8, s_min=-0.5, s_max=0.5,
                    n_t=25, n_s=21)
    return density_field(0.05, 0.05, spec, grid, n_nodes=60)


class TestDensityRoundTrip:
    def test_csv_header_and_shape(self, tmp_path):
        fld = small_field()
        path = tmp_path / "d.csv"
        reporting.write_density_csv(fld, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,s,density"
        assert len(lines) == 1 + 25 * 21

    def test_round_trip_exact(self, tmp_path):
        fld = small_field()
        reporting.write_density_csv(fld, tmp_path / "d.csv")
        reporting.write_density_sidecar(fld, tmp_path / "d.json")
        back = reporting.read_density_csv(tmp_path / "d.csv")
        assert np.array_equal(back.values, fld.values)
        assert back.grid == fld.grid
        assert back.beta == fld.beta
        assert back.scale == fld.scale

    def test_sidecar_contents(self, tmp_path):
        fld = small_field()
        reporting.write_density_sidecar(fld, tmp_path / "d.json",
                                        params={"seed": 7})
        meta = json.loads((tmp_path / "d.json").read_text())
        assert meta["n_t"] == 25
        assert meta["params"]["seed"] == 7
        assert "mass" in meta and "version" in meta

    def test_row_major_order(self, tmp_path):
        fld = small_field()
        reporting.write_density_csv(fld, tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().strip().split("\n")[1:]
        first_t = [float(line.split(",")[0]) for line in lines[:21]]
        assert len(set(first_t)) == 1  # inner loop varies s


class TestRatesOutput:
    def outcome(self):
        rows = (RateRecord(1, "trivial", 1, -0.5),
                RateRecord(1, "oracle", 1, float("-inf")),
                RateRecord(2, "trivial", 1, -0.75))
        summary = (MethodSummary("trivial", 1, -0.625, -0.6875, -0.5625, 1),)
        return ConsensusOutcome(rows=rows, summary=summary,
                                excluded=((3, "reducible"),), skipped=())

    def test_rates_csv(self, tmp_path):
        reporting.write_rates_csv(self.outcome(), tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().strip().split("\n")
        assert lines[0] == "trial,method,degree,rate"
        assert lines[1] == "1,trivial,1,-0.5"
        assert lines[2] == "1,oracle,1,-inf"

    def test_summary_csv(self, tmp_path):
        reporting.write_summary_csv(self.outcome(), tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().strip().split("\n")
        assert lines[0] == "method,degree,median,q25,q75,excluded_trials"
        assert lines[1].startswith("trivial,1,-0.625,")
        assert lines[1].endswith(",1")


class TestFilterJson:
    def test_round_trip(self, tmp_path):
        filt = FilterSpec(degree=2, coefficients=np.array([0.25, -0.5, 1.25]),
                          epsilon=0.125, provenance="proposed")
        reporting.write_filter_json(filt, tmp_path / "f.json",
                                    kappa=0.1, tau="rel:0.02")
        meta = json.loads((tmp_path / "f.json").read_text())
        assert meta["degree"] == 2
        assert meta["method"] == "proposed"
        assert meta["kappa"] == 0.1
        assert_allclose(meta["coefficients"], [0.25, -0.5, 1.25])
        back = reporting.read_filter_json(tmp_path / "f.json")
        assert_allclose(back.coefficients, filt.coefficients)
        assert back.epsilon == filt.epsilon

    def test_nan_epsilon_becomes_null(self, tmp_path):
        filt = FilterSpec(degree=1, coefficients=np.array([0.0, 1.0]),
                          epsilon=float("nan"), provenance="trivial")
        reporting.write_filter_json(filt, tmp_path / "f.json")
        meta = json.loads((tmp_path / "f.json").read_text())
        assert meta["epsilon"] is None
        assert np.isnan(reporting.read_filter_json(tmp_path / "f.json").epsilon)


class TestManifest:
    def test_manifest_contents(self, tmp_path):
        reporting.write_manifest(tmp_path, "density", 3,
                                 {"beta": 1e-6}, ["a.csv", "b.json"])
        meta = json.loads((tmp_path / "manifest.json").read_text())
        assert meta["command"] == "density"
        assert meta["seed"] == 3
        assert meta["files"] == ["a.csv", "b.json"]
