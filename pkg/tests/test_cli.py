from pathlib import Path

import numpy as np
import pytest

import stomor
from stomor import cli, formats


@pytest.fixture
def scalar_files(tmp_path):
    sys_path = tmp_path / "system.txt"
    formats.save_system(
        stomor.LinearSde(A=[[-1.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]],
                         G=[[1.0]]), sys_path)
    gen_path = tmp_path / "generator.txt"
    formats.save_generator(
        stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                               omega0=[[1.0]]), gen_path)
    return str(sys_path), str(gen_path)


def read_all_csv(folder):
    return {p.name: p.read_bytes() for p in sorted(Path(folder).glob("*.csv"))}


class TestReduce:
    def test_scalar_meansquare_roundtrip(self, scalar_files, tmp_path, capsys):
        sys_path, gen_path = scalar_files
        out = tmp_path / "model.txt"
        code = cli.main(["reduce", "--system", sys_path, "--generator", gen_path,
                         "--method", "meansquare", "--poles", "-1",
                         "--out", str(out)])
        assert code == 0
        assert "certificate" in capsys.readouterr().out
        model = formats.load_model(out)
        assert model.Cr[0, 0] == pytest.approx(np.sqrt(1.5), abs=1e-6)
        assert model.Fr[0, 0] == pytest.approx(np.sqrt(2.0 / 3.0), abs=1e-6)

    def test_certificate_failure_exit_code(self, scalar_files, tmp_path):
        sys_path, gen_path = scalar_files
        code = cli.main(["reduce", "--system", sys_path, "--generator", gen_path,
                         "--method", "mean", "--poles", "0.5",
                         "--out", str(tmp_path / "model.txt")])
        assert code == cli.EXIT_CERTIFICATE

    def test_singular_solver_exit_code(self, tmp_path):
        sys_path = tmp_path / "system.txt"
        formats.save_system(
            stomor.LinearSde(A=[[0.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]],
                             G=[[0.0]]), sys_path)
        gen_path = tmp_path / "generator.txt"
        formats.save_generator(
            stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                   omega0=[[1.0]]), gen_path)
        code = cli.main(["reduce", "--system", str(sys_path),
                         "--generator", str(gen_path), "--method", "mean",
                         "--poles", "-1", "--out", str(tmp_path / "m.txt")])
        assert code == cli.EXIT_SINGULAR

    def test_no_solution_exit_code(self, tmp_path):
        # unforced channel: the second moment is zero, no output row exists
        sys_path = tmp_path / "system.txt"
        formats.save_system(
            stomor.LinearSde(A=[[-1.0]], B=[[0.0]], C=[[1.0]], F=[[0.0]],
                             G=[[0.0]]), sys_path)
        gen_path = tmp_path / "generator.txt"
        formats.save_generator(
            stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                   omega0=[[1.0]]), gen_path)
        code = cli.main(["reduce", "--system", str(sys_path),
                         "--generator", str(gen_path), "--method", "meansquare",
                         "--poles", "-1", "--out", str(tmp_path / "m.txt")])
        assert code == cli.EXIT_CERTIFICATE

    def test_parse_error_exit_code(self, tmp_path, scalar_files):
        _, gen_path = scalar_files
        bad = tmp_path / "bad.txt"
        bad.write_text("[A]\n2 2\n1 2 oops\n")
        code = cli.main(["reduce", "--system", str(bad), "--generator", gen_path,
                         "--method", "exact", "--out", str(tmp_path / "m.txt")])
        assert code == cli.EXIT_IO

    def test_missing_file_exit_code(self, tmp_path, scalar_files):
        _, gen_path = scalar_files
        code = cli.main(["reduce", "--system", str(tmp_path / "nope.txt"),
                         "--generator", gen_path, "--method", "exact",
                         "--out", str(tmp_path / "m.txt")])
        assert code == cli.EXIT_IO


class TestValidate:
    def _reduce(self, scalar_files, tmp_path, method="meansquare"):
        sys_path, gen_path = scalar_files
        model_path = tmp_path / "model.txt"
        code = cli.main(["reduce", "--system", sys_path, "--generator", gen_path,
                         "--method", method, "--poles", "-1",
                         "--out", str(model_path)])
        assert code == 0
        return model_path

    def test_validate_writes_outputs(self, scalar_files, tmp_path, capsys):
        sys_path, gen_path = scalar_files
        model_path = self._reduce(scalar_files, tmp_path)
        out_dir = tmp_path / "out"
        code = cli.main(["validate", "--system", sys_path, "--generator", gen_path,
                         "--model", str(model_path), "--paths", "12",
                         "--seed", "3", "--dt", "0.005", "--horizon", "2",
                         "--probe-times", "1,2", "--csv-dir", str(out_dir)])
        assert code == 0
        assert (out_dir / "errors.csv").exists()
        assert (out_dir / "ecdf.csv").exists()
        assert (out_dir / "errors.png").exists()
        assert "tail mean" in capsys.readouterr().out

    def test_repeat_runs_byte_identical(self, scalar_files, tmp_path, monkeypatch):
        sys_path, gen_path = scalar_files
        model_path = self._reduce(scalar_files, tmp_path)
        args = ["validate", "--system", sys_path, "--generator", gen_path,
                "--model", str(model_path), "--paths", "80", "--seed", "11",
                "--dt", "0.005", "--horizon", "2", "--no-figures"]
        monkeypatch.setenv("STOMOR_THREADS", "1")
        assert cli.main(args + ["--csv-dir", str(tmp_path / "a")]) == 0
        monkeypatch.setenv("STOMOR_THREADS", "4")
        assert cli.main(args + ["--csv-dir", str(tmp_path / "b")]) == 0
        a = read_all_csv(tmp_path / "a")
        b = read_all_csv(tmp_path / "b")
        assert a.keys() == b.keys() and len(a) >= 5
        for name in a:
            assert a[name] == b[name], name

    def test_divergence_exit_code(self, tmp_path, scalar_files):
        _, gen_path = scalar_files
        unstable = tmp_path / "unstable.txt"
        formats.save_system(
            stomor.LinearSde(A=[[6.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]],
                             G=[[0.0]]), unstable)
        model_path = self._reduce(scalar_files, tmp_path, method="exact")
        code = cli.main(["validate", "--system", str(unstable),
                         "--generator", gen_path, "--model", str(model_path),
                         "--paths", "5", "--dt", "0.001", "--horizon", "8"])
        assert code == cli.EXIT_DIVERGENCE

    def test_model_parse_error_exit_code(self, scalar_files, tmp_path):
        sys_path, gen_path = scalar_files
        bad = tmp_path / "bad_model.txt"
        bad.write_text("not a model\n")
        code = cli.main(["validate", "--system", sys_path, "--generator", gen_path,
                         "--model", str(bad)])
        assert code == cli.EXIT_IO

    def test_square_wave_flag(self, scalar_files, tmp_path):
        sys_path, gen_path = scalar_files
        model_path = self._reduce(scalar_files, tmp_path, method="exact")
        code = cli.main(["validate", "--system", sys_path, "--generator", gen_path,
                         "--model", str(model_path), "--paths", "4",
                         "--dt", "0.005", "--horizon", "2", "--square-wave",
                         "--no-figures"])
        assert code == 0

    def test_independent_coupling_flag(self, scalar_files, tmp_path):
        sys_path, gen_path = scalar_files
        model_path = self._reduce(scalar_files, tmp_path, method="exact")
        code = cli.main(["validate", "--system", sys_path, "--generator", gen_path,
                         "--model", str(model_path), "--paths", "4",
                         "--dt", "0.005", "--horizon", "2",
                         "--coupling", "independent", "--no-figures"])
        assert code == 0


class TestOtherCommands:
    def test_check_assumptions(self, capsys):
        code = cli.main(["check-assumptions", "--system",
                         "random:n=4,seed=2,f_scale=0.05",
                         "--generator", "example1:2", "--horizon", "50"])
        assert code == 0
        out = capsys.readouterr().out
        assert "system contraction:  pass" in out
        assert "commuting shortcut" in out

    def test_lyapunov_command(self, tmp_path, capsys):
        a_path = tmp_path / "A.txt"
        formats.save_matrix(np.array([[-1.0]]), a_path)
        csv_path = tmp_path / "exponents.csv"
        code = cli.main(["lyapunov", "--A", str(a_path), "--horizon", "50",
                         "--csv", str(csv_path)])
        assert code == 0
        assert "lambda_1" in capsys.readouterr().out
        header, data = formats.read_csv(csv_path)
        assert header == ["index", "exponent"]
        assert data[0, 1] == pytest.approx(-1.0, abs=0.02)

    def test_unknown_method_rejected(self, scalar_files, tmp_path):
        sys_path, gen_path = scalar_files
        with pytest.raises(SystemExit):
            cli.main(["reduce", "--system", sys_path, "--generator", gen_path,
                      "--method", "nope", "--out", str(tmp_path / "m.txt")])
