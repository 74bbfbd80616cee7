"""
Tests for the mixsing command-line interface.
"""
import json
import logging
from types import SimpleNamespace

import pytest

from mixsing import transport
from mixsing.constants import ExitCode
from mixsing.errors import BadParams, UsageError
from mixsing.mixsing_cmd import STDERR_HANDLER, _fixed, build_parser, main


def write_measure(tmp_path, name, family, atoms, weights):
    path = tmp_path / name
    path.write_text(json.dumps({"family": family, "atoms": atoms, "weights": weights}))
    return str(path)


@pytest.fixture
def s0_file(tmp_path):
    return write_measure(tmp_path, "s0.json", "skew_normal", [[0, 1, 1], [1, 2, -1]], [0.5, 0.5])


class TestClassify:
    def test_s0_report(self, s0_file, capsys):
        assert main(["classify", s0_file]) == ExitCode.OK
        report = json.loads(capsys.readouterr().out)
        assert report["label"] == "S0"
        assert report["level"] == {"exact": 0}
        assert report["index_set"] == [[1, 1, 1]]

    def test_output_file(self, s0_file, tmp_path):
        out = tmp_path / "report.json"
        assert main(["--output", str(out), "classify", s0_file]) == ExitCode.OK
        assert json.loads(out.read_text())["label"] == "S0"

    def test_bad_weights(self, tmp_path, capsys):
        path = write_measure(tmp_path, "bad.json", "skew_normal", [[0, 1, 1], [1, 2, -1]], [0.5, 0.6])
        assert main(["classify", path]) == ExitCode.FAILURE
        payload = json.loads(capsys.readouterr().err)
        assert payload["error"] == "BadWeights"

    def test_missing_file(self, tmp_path):
        assert main(["classify", str(tmp_path / "nope.json")]) == ExitCode.FAILURE

    def test_boundary_warning(self, tmp_path, capsys):
        path = write_measure(tmp_path, "near.json", "skew_normal", [[0, 2, 1], [1e-3, 5, 2]], [0.4, 0.6])
        assert main(["classify", path]) == ExitCode.WARNING
        captured = capsys.readouterr()
        assert json.loads(captured.out)["label"] == "S0"
        assert "boundary-proximity" in captured.err

    def test_overfitted_gaussian(self, tmp_path, capsys):
        path = write_measure(tmp_path, "g.json", "gaussian", [[0, 1]], [1.0])
        assert main(["classify", path, "--setting", "o", "--k", "2", "--known-variance"]) == ExitCode.OK
        assert json.loads(capsys.readouterr().out)["level"] == {"exact": 1}


class TestReduce:
    def test_third_order_table(self, capsys):
        assert main(["reduce", "--order", "3"]) == ExitCode.OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 6
        assert all(" = " in line for line in lines)

    def test_order_too_high(self, capsys):
        assert main(["reduce", "--order", "7"]) == ExitCode.FAILURE
        assert json.loads(capsys.readouterr().err)["error"] == "OrderTooHigh"


class TestDistance:
    def test_kappa(self, tmp_path, capsys):
        first = write_measure(tmp_path, "a.json", "skew_normal", [[0.1, 1.01, 0.1]], [1.0])
        second = write_measure(tmp_path, "b.json", "skew_normal", [[0, 1, 0]], [1.0])
        assert main(["distance", first, second, "--kappa", "2,1,1"]) == ExitCode.OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["value"] == pytest.approx(0.12**0.5)

    def test_order(self, s0_file, capsys):
        assert main(["distance", s0_file, s0_file, "--order", "2"]) == ExitCode.OK
        assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.0, abs=1e-12)

    def test_solver_failure(self, s0_file, monkeypatch, capsys):
        monkeypatch.setattr(transport, "linprog",
                            lambda *a, **kw: SimpleNamespace(success=False, message="infeasible"))
        assert main(["distance", s0_file, s0_file]) == ExitCode.FAILURE
        assert json.loads(capsys.readouterr().err)["error"] == "TransportFailure"


class TestPolysys:
    def test_skew_system(self, capsys):
        argv = ["--starts", "20", "polysys", "--system", "skew", "--l", "1", "--r", "2",
                "--v0", "1", "--m0", "2"]
        assert main(argv) == ExitCode.OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["system"]["equations"] == 3
        assert payload["verdict"] in ("Solvable", "Unsolvable", "Inconclusive")

    def test_known_ladder(self, capsys):
        assert main(["polysys", "--system", "gaussian", "--l", "1", "--ladder"]) == ExitCode.OK
        assert json.loads(capsys.readouterr().out)["ladder"]["value"] == 4

    def test_sbar_closed_form(self, capsys):
        argv = ["polysys", "--system", "sbar", "--a", "1,1,1", "--b", "1,2,-3", "--ladder"]
        assert main(argv) == ExitCode.OK
        assert json.loads(capsys.readouterr().out)["ladder"]["value"] == 2.0


class TestSampleFit:
    def test_sample_then_fit(self, tmp_path, capsys):
        measure = write_measure(tmp_path, "g.json", "gaussian", [[-2, 1], [2, 1]], [0.4, 0.6])
        data = tmp_path / "data.txt"
        assert main(["--seed", "3", "-o", str(data), "sample", measure, "--n", "500"]) == ExitCode.OK
        assert len(data.read_text().split()) == 500
        assert main(["--seed", "3", "fit", str(data), "--family", "gaussian", "--k", "2"]) == ExitCode.OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["measure"]["atoms"]) == 2

    def test_sample_reproducible(self, s0_file, capsys):
        main(["--seed", "9", "sample", s0_file, "--n", "5"])
        first = capsys.readouterr().out
        main(["--seed", "9", "sample", s0_file, "--n", "5"])
        assert capsys.readouterr().out == first


class TestWitness:
    def test_split_witness(self, tmp_path, capsys):
        path = write_measure(tmp_path, "one.json", "skew_normal", [[0, 1, 1]], [1.0])
        assert main(["witness", path, "--kind", "s0-overfit", "--s", "3"]) == ExitCode.OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["checks"] == {"minimal_form": True}
        assert payload["ratios"]["3"]["decay"] >= 10

    def test_label_mismatch(self, s0_file, capsys):
        assert main(["witness", s0_file, "--kind", "s1"]) == ExitCode.FAILURE
        assert json.loads(capsys.readouterr().err)["error"] == "LabelMismatch"


class TestParser:
    def test_fixed_pairs(self):
        assert _fixed(["1=1.0", "0=-2"]) == {1: 1.0, 0: -2.0}
        with pytest.raises(BadParams):
            _fixed(["1:1.0"])

    def test_command_required(self):
        with pytest.raises(UsageError):
            build_parser().parse_args([])

    def test_distance_options_exclusive(self):
        with pytest.raises(UsageError):
            build_parser().parse_args(["distance", "a", "b", "--order", "2", "--kappa", "1,1,1"])

    def test_bad_choice_is_failure(self, capsys):
        assert main(["classify", "x.json", "--setting", "bogus"]) == ExitCode.FAILURE
        payload = json.loads(capsys.readouterr().err)
        assert payload["error"] == "UsageError"
        assert "bogus" in payload["message"]

    def test_bad_int_is_failure(self, capsys):
        assert main(["reduce", "--order", "three"]) == ExitCode.FAILURE
        assert json.loads(capsys.readouterr().err)["error"] == "UsageError"

    def test_missing_command_is_failure(self, capsys):
        assert main([]) == ExitCode.FAILURE
        assert json.loads(capsys.readouterr().err)["error"] == "UsageError"


class TestVerbose:
    @pytest.fixture
    def root_logger(self):
        root = logging.getLogger()
        yield root
        for handler in [h for h in root.handlers if h.get_name() == STDERR_HANDLER]:
            root.removeHandler(handler)

    def test_single_stderr_handler(self, root_logger):
        assert main(["-v", "reduce", "--order", "2"]) == ExitCode.OK
        assert main(["-v", "reduce", "--order", "2"]) == ExitCode.OK
        names = [h.get_name() for h in root_logger.handlers]
        assert names.count(STDERR_HANDLER) == 1
