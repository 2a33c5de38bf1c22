import json
import subprocess
import sys

import numpy as np
import pytest

from qcwork import __version__
from qcwork.classical import cf_classical_closed
from qcwork.cli import (
    RunConfig,
    main,
    parse_config_text,
    read_field,
    read_table,
    resolve_config,
)
from qcwork.errors import ConfigError
from qcwork.operators import DriveProtocol


def run(tmp_path, *args):
    code = main([*args, "--out", str(tmp_path)])
    return code


def table(path):
    columns, rows, summary = read_table(path)
    return columns, rows, summary


def by_definition(rows):
    out = {}
    for eta, re, im, d in rows:
        out.setdefault(d, []).append((float(eta), complex(float(re), float(im))))
    return {d: (np.array([e for e, _ in v]), np.array([c for _, c in v])) for d, v in out.items()}


class TestConfig:
    def test_defaults_mirror_fig1(self):
        cfg = RunConfig()
        assert cfg.protocol() == DriveProtocol.fig1()
        assert cfg.etas().size == 161

    def test_parse(self):
        values = parse_config_text("# comment\nbeta = 2.0\n\ntau-prime = 0  # inline\ndim = auto\n")
        assert values == {"beta": 2.0, "tau_prime": 0.0, "dim": None}

    @pytest.mark.parametrize("text,where", [
        ("beta = 1\nbogus = 3\n", ":2: unknown key 'bogus'"),
        ("beta = 1\n\ntau = abc\n", ":3: field 'tau'"),
        ("justtext\n", ":1: expected"),
        ("format = xml\n", ":1: field 'format'"),
        ("eta_count = 2.5\n", ":1: field 'eta_count'"),
    ])
    def test_errors_name_line_and_field(self, text, where):
        with pytest.raises(ConfigError) as info:
            parse_config_text(text, "run.cfg")
        assert "run.cfg" + where in str(info.value)

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("beta = 2\nu = 0.5\n")
        cfg = resolve_config(path, {"beta": 3.0, "u": None})
        assert cfg.beta == 3.0 and cfg.u == 0.5

    @pytest.mark.parametrize("overrides", [
        {"beta": -1.0}, {"eta_count": 2}, {"eta_min": 1.0, "eta_max": 0.0}, {"dim": 1},
        {"samples": 10}, {"degree": 12}, {"hbar_ratio": 1.5}, {"grid": 16}, {"tau": 0.0},
    ])
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            resolve_config(None, overrides)

    def test_exit_code_for_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("beta = 1\nomega = -2\n")
        assert main(["cf", "--config", str(path), "--out", str(tmp_path)]) == 2
        assert "omega" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["cf", "--config", str(tmp_path / "none.cfg")]) == 2


@pytest.fixture(scope="module")
def cf_default(tmp_path_factory):
    out = tmp_path_factory.mktemp("cf")
    assert main(["cf", "--out", str(out)]) == 0
    return out


class TestCf:
    def test_four_series(self, cf_default):
        columns, rows, _ = table(cf_default / "cf.csv")
        assert columns == ["eta", "re", "im", "definition"]
        series = by_definition(rows)
        assert sorted(series) == ["CLASSICAL", "FCS", "MH", "TPM"]
        for etas, vals in series.values():
            assert etas.size == 161
            assert vals[80] == 1 + 0j or abs(vals[80] - 1) < 1e-10

    def test_classical_column_is_closed_form(self, cf_default):
        _, rows, _ = table(cf_default / "cf.csv")
        etas, vals = by_definition(rows)["CLASSICAL"]
        np.testing.assert_array_equal(vals, cf_classical_closed(etas, DriveProtocol.fig1()).values)

    def test_header(self, cf_default):
        text = (cf_default / "cf.csv").read_text()
        assert text.startswith(f"# qcwork {__version__} schema 1 command cf\n")
        assert "# tau_prime = 1\n" in text and "# dim = auto\n" in text

    def test_seventeen_digits(self, cf_default):
        _, rows, _ = table(cf_default / "cf.csv")
        values = [float(r[1]) for r in rows]
        assert all(format(v, ".17g") == r[1] for v, r in zip(values, rows))

    def test_byte_identical_rerun(self, cf_default, tmp_path):
        assert run(tmp_path, "cf") == 0
        assert (tmp_path / "cf.csv").read_bytes() == (cf_default / "cf.csv").read_bytes()

    def test_no_coherence_collapse(self, tmp_path):
        assert run(tmp_path, "cf", "--tau-prime", "0") == 0
        series = by_definition(table(tmp_path / "cf.csv")[1])
        tpm = series["TPM"][1]
        assert np.abs(series["FCS"][1] - tpm).max() < 1e-10
        assert np.abs(series["MH"][1] - tpm).max() < 1e-10

    def test_json(self, tmp_path):
        assert run(tmp_path, "cf", "--format", "json", "--eta-count", "5") == 0
        doc = json.loads((tmp_path / "cf.json").read_text())
        assert doc["columns"] == ["eta", "re", "im", "definition"]
        assert len(doc["rows"]) == 20 and doc["config"]["eta_count"] == 5

    def test_truncation_exit_code(self, tmp_path, capsys):
        assert run(tmp_path, "cf", "--dim", "10") == 4
        assert "dim" in capsys.readouterr().err.lower()


@pytest.fixture(scope="module")
def dist_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("dist")
    assert main(["dist", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def measure_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("measure")
    assert main(["measure", "--out", str(out)]) == 0
    return out


class TestDist:
    @pytest.mark.parametrize("definition", ["tpm", "fcs", "mh"])
    def test_summary(self, dist_out, definition):
        columns, rows, summary = table(dist_out / f"dist_{definition}.csv")
        assert columns == ["work", "weight", "definition"]
        assert abs(float(summary["weight_sum"]) - 1) < 1e-10
        weights = np.array([float(r[1]) for r in rows])
        assert abs(weights.sum() - 1) < 1e-10
        assert float(summary["min_weight"]) == weights.min()
        if definition == "tpm":
            assert weights.min() >= -1e-12
        else:
            assert int(summary["negativity_count"]) > 0

    def test_fcs_half_spacing(self, dist_out):
        _, rows, _ = table(dist_out / "dist_fcs.csv")
        w = np.array([float(r[0]) for r in rows])
        q = np.array([float(r[1]) for r in rows])
        frac = w[np.abs(q) > 1e-12] / 0.5
        assert np.abs(frac - np.round(frac)).max() < 1e-6

    def test_single_definition(self, tmp_path):
        assert run(tmp_path, "dist", "--definition", "mh") == 0
        assert sorted(p.name for p in tmp_path.iterdir()) == ["dist_mh.csv"]


class TestFig1:
    def test_panels(self, tmp_path):
        assert run(tmp_path, "fig1", "--scan-method", "gaussian", "--eta-count", "41") == 0
        cr, rr, _ = table(tmp_path / "fig1_real.csv")
        ci, ri, _ = table(tmp_path / "fig1_imag.csv")
        expected = ["eta", "classical", "phi0_fcs", "phi0_mh", "fcs_order2", "mh_order2",
                    "fit_residual"]
        assert cr == ci == expected
        assert [r[0] for r in rr] == [r[0] for r in ri]
        etas = np.array([float(r[0]) for r in rr])
        closed = cf_classical_closed(etas, DriveProtocol.fig1()).values
        np.testing.assert_array_equal([float(r[1]) for r in rr], closed.real)
        np.testing.assert_array_equal([float(r[1]) for r in ri], closed.imag)
        phi0 = np.array([float(r[2]) for r in rr]) + 1j * np.array([float(r[2]) for r in ri])
        assert np.abs(phi0 - closed).max() < 1e-3


class TestScanHbar:
    def test_rows(self, tmp_path):
        args = ["scan-hbar", "--scan-method", "gaussian", "--eta-min", "0.5", "--eta-max", "1",
                "--eta-count", "3"]
        assert run(tmp_path, *args) == 0
        columns, rows, _ = table(tmp_path / "scan_hbar.csv")
        assert columns == ["eta", "definition", "order", "re", "im", "sigma", "residual"]
        assert len(rows) == 2 * 3 * 7

    def test_tpm_rejected(self, tmp_path):
        assert run(tmp_path, "scan-hbar", "--definition", "TPM", "--eta-count", "3") == 2

    def test_gate_failure_exit_code(self, tmp_path):
        # far out in eta the CF is tiny and varies fast in hbar, so a cubic fails
        args = ["scan-hbar", "--scan-method", "gaussian", "--eta-min", "10", "--eta-max", "12",
                "--eta-count", "3", "--hbar-count", "5", "--hbar-ratio", "0.3", "--degree", "3"]
        assert run(tmp_path, *args) == 3


class TestJarzynski:
    def read(self, path):
        _, rows, summary = table(path)
        return {r[0]: r for r in rows}, summary

    def test_thermal(self, tmp_path):
        assert run(tmp_path, "jarzynski", "--tau-prime", "0", "--samples", "100000") == 0
        rows, summary = self.read(tmp_path / "jarzynski.csv")
        for d in ("TPM", "FCS", "MH"):
            assert abs(float(rows[d][1]) - 1) < 1e-8 and abs(float(rows[d][2]) - 1) < 1e-8
        lhs, stderr = float(rows["CLASSICAL"][1]), float(rows["CLASSICAL"][6])
        assert abs(lhs - 1) <= 3 * stderr
        assert summary["all_passed"] == "true"

    def test_fig1(self, tmp_path):
        assert run(tmp_path, "jarzynski", "--samples", "100000") == 0
        rows, summary = self.read(tmp_path / "jarzynski.csv")
        assert all(rows[d][8] == "true" for d in rows)
        assert all(abs(float(rows[d][3])) < 1e-7 for d in rows)
        assert float(rows["CLASSICAL"][3]) == 0.0
        assert summary["dim"] == "32"

    def test_ill_conditioned_exit_code(self, tmp_path):
        assert run(tmp_path, "jarzynski", "--dim", "40", "--samples", "1000") == 4


def test_classical(tmp_path):
    assert run(tmp_path, "classical", "--samples", "100000", "--eta-count", "41") == 0
    columns, rows, summary = table(tmp_path / "classical.csv")
    assert columns[0] == "eta" and len(rows) == 41
    assert summary["within_3sigma"] == "true"


class TestMeasure:
    def test_summary(self, measure_out):
        _, rows, _ = table(measure_out / "measure.csv")
        q = {k: float(v) for k, v in rows}
        assert q["linf_average_vs_dephased"] < 1e-4
        assert q["cf_collapse_max_deviation"] < 1e-10
        assert q["linf_initial_vs_dephased"] > 0.01
        assert q["angular_variance_dephased"] < 1e-8

    def test_field_dumps(self, measure_out):
        names = ("wigner_initial", "wigner_dephased", "wigner_average")
        fields = {n: read_field(measure_out / f"{n}.csv") for n in names}
        for xr, pr, values in fields.values():
            assert values.shape == (512, 512)
            assert xr == fields["wigner_initial"][0] and pr == fields["wigner_initial"][1]
        lines = [ln for ln in (measure_out / "wigner_initial.csv").read_text().splitlines()
                 if not ln.startswith("#")]
        assert lines[0].startswith("x_range,") and lines[1].startswith("p_range,")
        assert lines[2] == "counts,512,512"
        diff = np.abs(fields["wigner_average"][2] - fields["wigner_dephased"][2]).max()
        assert diff < 1e-4

    def test_json_field(self, tmp_path):
        assert run(tmp_path, "measure", "--grid", "128", "--format", "json") == 0
        doc = json.loads((tmp_path / "wigner_dephased.json").read_text())
        assert doc["counts"] == [128, 128] and len(doc["values"]) == 128


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qcwork", "--version"],
                          capture_output=True, text=True, check=True)
    assert proc.stdout.strip() == f"qcwork {__version__}"


def test_help_lists_commands():
    proc = subprocess.run([sys.executable, "-m", "qcwork", "--help"],
                          capture_output=True, text=True, check=True)
    for name in ("cf", "dist", "fig1", "scan-hbar", "jarzynski", "classical", "measure"):
        assert name in proc.stdout
