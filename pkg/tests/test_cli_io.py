"""
Test suite for configuration, CSV export and the command surface
"""

import os
import sys

# ensure project root is on path so `import src` works
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

import json
from pathlib import Path

import pytest

from src.aoi_analytic import Scenario, Scheme
from src.cli_io import main
from src.config import RunManifest, parse_config
from src.errors import ExportError, ValidationError
from src.export import CSV_COLUMNS, emit_csv, format_number, profile_rows
from src.fbl_channel import ChannelParams
from src.study import SchemeSelection, SweepRow, SweepSpec, SweepVariable, optimize_blocklength, run_sweep

GOLDEN = Path(__file__).parent / "golden" / "blocklength_sweep.csv"
HEADER = b"swept_var,value,scheme,blocklength,error_rate,aoi_analytic_slots,aoi_sim_slots,aoi_sim_ci95,seed,flags\n"


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in list(os.environ):
        if name.startswith("AOI_"):
            monkeypatch.delenv(name)


def write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


class TestParseConfig:
    """Layered configuration."""

    def test_reference_flags(self):
        """Reference flags give L=480, M=600, M_h=150"""
        run = parse_config({"sensors": 4, "bits_per_sensor": 120, "alpha": 0, "rate": 0.8, "snr": 3})
        sc = run.scenario
        assert (sc.joint_bits, sc.joint_blocklength, sc.sensor_blocklength) == (480, 600, 150)
        assert sc.channel.snr_linear == 3.0

    def test_full_redundancy_names_invariant(self):
        """alpha = N·L_h names the violated invariant"""
        with pytest.raises(ValidationError) as exc:
            parse_config({"alpha": 480, "sensors": 4, "bits_per_sensor": 120})
        assert "L = N·L_h − α must be ≥ 1" in str(exc.value)

    def test_flag_snr_beats_file_snr_db(self, tmp_path):
        """A flag snr overrides a file snr_db"""
        cfg = write(tmp_path / "run.env", "snr_db = 4.771\n")
        run = parse_config({"snr": 3}, cfg)
        assert run.scenario.channel.snr_linear == 3.0

    def test_file_snr_db(self, tmp_path):
        """snr_db in a file is converted to linear"""
        cfg = write(tmp_path / "run.env", "snr_db = 4.771\n")
        run = parse_config({}, cfg)
        assert run.scenario.channel.snr_linear == pytest.approx(3.0, rel=1e-3)

    def test_precedence_env_file_flags(self, tmp_path):
        """Flags beat the file, the file beats the environment"""
        cfg = write(tmp_path / "run.env", "sensors = 3\nrate = 0.6\n")
        env = {"AOI_SENSORS": "2", "AOI_RATE": "0.5", "AOI_SEED": "17"}
        run = parse_config({"sensors": 5}, cfg, environ=env)
        assert run.scenario.num_sensors == 5
        assert run.scenario.coding_rate == 0.6
        assert run.settings.seed == 17

    def test_unknown_key(self, tmp_path):
        """Unknown file keys are refused by name"""
        cfg = write(tmp_path / "run.env", "sensors = 3\nbandwidth = 5\n")
        with pytest.raises(ValidationError) as exc:
            parse_config({}, cfg)
        assert exc.value.key == "bandwidth"

    def test_both_snr_forms_in_one_layer(self, tmp_path):
        """snr and snr_db together in one layer are refused"""
        cfg = write(tmp_path / "run.env", "snr = 3\nsnr_db = 4.771\n")
        with pytest.raises(ValidationError):
            parse_config({}, cfg)

    def test_type_error_names_key(self, tmp_path):
        """Bad values name the key and the expected type"""
        cfg = write(tmp_path / "run.env", "sensors = four\n")
        with pytest.raises(ValidationError) as exc:
            parse_config({}, cfg)
        assert exc.value.key == "sensors"
        assert "int" in str(exc.value)

    def test_missing_file(self, tmp_path):
        """A missing config file is a validation error"""
        with pytest.raises(ValidationError):
            parse_config({}, tmp_path / "absent.env")

    def test_example_scenario_file(self):
        """The shipped scenario file loads"""
        run = parse_config({}, Path(ROOT) / "data" / "scenario.env", environ={})
        assert run.scenario.joint_blocklength == 600
        assert run.settings.frames == 10 ** 6


class TestRunManifest:

    def test_round_trip_reproduces_scenario(self, tmp_path):
        """A written manifest loads back to the same run"""
        run = parse_config({"sensors": 2, "snr_db": 5.0, "forced_error": 0.1})
        path = tmp_path / "run.json"
        RunManifest("analyze", run.scenario, run.settings, run.values).write(path)
        loaded = RunManifest.load(path)
        assert loaded.scenario == run.scenario
        assert loaded.settings == run.settings
        data = json.loads(path.read_text())
        assert data["tool_version"]
        assert data["scenario"]["joint_bits"] == 240

    def test_manifest_as_config_file(self, tmp_path):
        """A manifest works as a config file"""
        run = parse_config({"sensors": 3})
        path = tmp_path / "run.json"
        RunManifest("analyze", run.scenario, None, run.values).write(path)
        assert parse_config({}, path).scenario.num_sensors == 3


class TestEmitCsv:
    """Stable CSV schema."""

    def test_empty_rows_header_only(self, tmp_path):
        """No rows, header only"""
        assert emit_csv([], tmp_path / "out.csv") == HEADER
        assert (tmp_path / "out.csv").read_bytes() == HEADER

    def test_header_matches_columns(self):
        """Header lists the schema columns in order"""
        assert HEADER.decode().strip().split(",") == CSV_COLUMNS

    def test_analytic_only_row(self, tmp_path):
        """Simulation columns stay empty without simulation"""
        row = SweepRow(SweepVariable.CODING_RATE, 0.8, Scheme.DISTRIBUTED, 150, 0.00657135343364938,
                       684.478326501)
        payload = emit_csv([row], tmp_path / "out.csv")
        line = payload.decode().splitlines()[1]
        assert line == "coding_rate,0.8,distributed,150,0.00657135343365,684.478326501,,,,"

    def test_flags_joined(self, tmp_path):
        """Flags are joined with semicolons"""
        row = SweepRow(SweepVariable.CODING_RATE, 1.4, Scheme.JOINT, 343, 1.0, None,
                       flags=("short_block", "unbounded"))
        payload = emit_csv([row], tmp_path / "out.csv")
        assert payload.decode().splitlines()[1].endswith(",,,,,short_block;unbounded")

    def test_golden_file(self, tmp_path):
        """Blocklength sweep matches the stored bytes"""
        base = Scenario(num_sensors=4, per_sensor_bits=120, redundancy_bits=0, coding_rate=0.8,
                        channel=ChannelParams(3.0))
        spec = SweepSpec(SchemeSelection.JOINT, SweepVariable.BLOCKLENGTH, (100, 200, 300), base,
                         forced_error_rate=0.0)
        payload = emit_csv(run_sweep(spec), tmp_path / "out.csv")
        assert payload == GOLDEN.read_bytes()

    def test_profile_rows(self):
        """Optimizer profile becomes blocklength rows"""
        opt = optimize_blocklength(Scheme.JOINT, 480, ChannelParams(3.0), (500, 502), forced_error_rate=0.0)
        rows = profile_rows(opt)
        assert [r.swept_value for r in rows] == [500, 501, 502]
        assert "optimum" in rows[0].flags and "range_boundary" in rows[0].flags

    def test_unwritable_destination(self, tmp_path):
        """Writing into a missing directory raises ExportError"""
        with pytest.raises(ExportError) as exc:
            emit_csv([], tmp_path / "missing" / "out.csv")
        assert "missing" in str(exc.value)

    def test_number_formatting(self):
        """12 significant digits, integral floats as integers"""
        assert format_number(None) == ""
        assert format_number(149.5) == "149.5"
        assert format_number(2.0) == "2"
        assert format_number(1 / 3) == "0.333333333333"


class TestCommands:
    """Command surface and exit codes."""

    def test_analyze_reference_point(self, capsys):
        """analyze prefers distributed at the reference point"""
        code = main(["analyze", "--sensors", "4", "--bits-per-sensor", "120", "--alpha", "0",
                     "--rate", "0.8", "--snr", "3"])
        out = capsys.readouterr().out
        assert code == 0
        assert "preferred scheme: Distributed" in out
        assert "joint:" in out and "distributed:" in out and "alpha_0=" in out

    def test_analyze_in_seconds(self, capsys):
        """--seconds reports AoI times the slot duration"""
        code = main(["analyze", "--forced-error", "0", "--sensors", "1", "--bits-per-sensor", "80",
                     "--slot-duration", "0.001", "--seconds"])
        assert code == 0
        assert "AoI=0.1495 s" in capsys.readouterr().out

    def test_simulate_error_free(self, capsys):
        """simulate without errors prints 149.5 ± 0"""
        code = main(["simulate", "--scheme", "joint", "--sensors", "4", "--bits-per-sensor", "20",
                     "--rate", "0.8", "--forced-error", "0", "--frames", "100", "--replications", "2"])
        out = capsys.readouterr().out
        assert code == 0
        assert "joint: 149.5 ± 0 slots" in out

    def test_compare(self, capsys):
        """compare prints alpha_0 and the exact crossover"""
        code = main(["compare"])
        out = capsys.readouterr().out
        assert code == 0
        assert "alpha_0" in out and "exact crossover" in out

    def test_optimize_writes_profile(self, tmp_path, capsys):
        """optimize writes one profile row per blocklength"""
        out_csv = tmp_path / "profile.csv"
        code = main(["optimize", "--m-min", "480", "--m-max", "1000", "--output", str(out_csv)])
        assert code == 0
        assert "M*=" in capsys.readouterr().out
        lines = out_csv.read_bytes().splitlines()
        assert lines[0] + b"\n" == HEADER
        assert len(lines) == 1 + 521

    def test_custom_sweep(self, tmp_path):
        """A custom sweep writes the golden bytes"""
        out_csv = tmp_path / "sweep.csv"
        code = main(["sweep", "--variable", "blocklength", "--grid", "100,200,300", "--scheme", "joint",
                     "--forced-error", "0", "--output", str(out_csv)])
        assert code == 0
        assert out_csv.read_bytes() == GOLDEN.read_bytes()

    def test_sweep_replay_is_byte_identical(self, tmp_path):
        """Replaying a manifest reproduces the figure CSVs"""
        manifest = tmp_path / "run.json"
        first, second = tmp_path / "a", tmp_path / "b"
        assert main(["sweep", "--figure", "fig3", "--output-dir", str(first),
                     "--manifest", str(manifest)]) == 0
        assert main(["sweep", "--config", str(manifest), "--output-dir", str(second)]) == 0
        for name in ("fig3_lh60.csv", "fig3_lh120.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_figure_rejects_scenario_flags(self, tmp_path, capsys):
        """Figure replicas refuse scenario flags they would ignore"""
        code = main(["sweep", "--figure", "fig3", "--snr", "10", "--sensors", "2",
                     "--output-dir", str(tmp_path), "--manifest", str(tmp_path / "run.json")])
        assert code == 1
        assert "sensors" in capsys.readouterr().err
        assert not (tmp_path / "run.json").exists()
        assert not (tmp_path / "fig3_lh120.csv").exists()

    def test_figure_rejects_snr_from_config_file(self, tmp_path, capsys):
        """Figure replicas refuse a config-file snr"""
        cfg = write(tmp_path / "run.env", "snr = 10\n")
        code = main(["sweep", "--figure", "fig4", "--config", str(cfg), "--output-dir", str(tmp_path)])
        assert code == 1
        assert "snr" in capsys.readouterr().err

    def test_figure_applies_forced_error(self, tmp_path):
        """A forced eps reaches the figure rows"""
        code = main(["sweep", "--figure", "fig5", "--forced-error", "0", "--output-dir", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "fig5_n2.csv").read_text().splitlines()[1:]
        assert lines and all(line.split(",")[4] == "0" for line in lines)

    def test_analyze_reports_joint_error_approximation(self, capsys):
        """analyze prints eps_D^N next to alpha_0"""
        code = main(["analyze", "--forced-error", "0.1", "--sensors", "3"])
        assert code == 0
        assert "eps_J ~ eps_D^N = 0.001" in capsys.readouterr().out

    def test_unknown_subcommand(self):
        """Unknown subcommands exit 1"""
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_validation_error_exit_code(self, capsys):
        """Validation errors exit 1 with the message"""
        code = main(["analyze", "--alpha", "480", "--sensors", "4", "--bits-per-sensor", "120"])
        assert code == 1
        assert "L = N·L_h − α must be ≥ 1" in capsys.readouterr().err

    def test_unbounded_exit_code(self, capsys):
        """Unbounded AoI exits 2"""
        code = main(["analyze", "--sensors", "1", "--bits-per-sensor", "120", "--rate", "2.4"])
        assert code == 2
        assert "unbounded AoI" in capsys.readouterr().err

    def test_no_crossover_exit_code(self, capsys):
        """No crossover in range exits 2"""
        code = main(["compare", "--alpha-max", "60"])
        assert code == 2
        assert "no crossover in range" in capsys.readouterr().err

    def test_sweep_needs_grid(self):
        """A custom sweep needs --grid"""
        assert main(["sweep", "--variable", "redundancy"]) == 1
