import numpy as np
import pytest

import stomor
from stomor import harness
from stomor.errors import CertificateFailed, DivergenceError, SingularSystem


class TestMakeRandomSystem:
    def test_margin_invariant_hundred_seeds(self):
        for seed in range(100):
            sys = stomor.make_random_system(
                stomor.RandomSystemSpec(n=8, nu=2, margin=0.5, seed=seed))
            assert np.max(np.linalg.eigvals(sys.A).real) <= -0.5 + 1e-9

    def test_deterministic(self):
        spec = stomor.RandomSystemSpec(n=5, nu=1, seed=12)
        a = stomor.make_random_system(spec)
        b = stomor.make_random_system(spec)
        assert np.array_equal(a.A, b.A)
        assert np.array_equal(a.B, b.B)
        assert np.array_equal(a.C, b.C)

    def test_scale_rules(self):
        sys = stomor.make_random_system(
            stomor.RandomSystemSpec(n=4, nu=1, f_scale=0.07, g_scale=0.3, seed=1))
        assert np.array_equal(sys.F, 0.07 * sys.A)
        assert np.array_equal(sys.G, 0.3 * sys.B)

    def test_zero_noise_scale(self):
        sys = stomor.make_random_system(
            stomor.RandomSystemSpec(n=3, nu=1, f_scale=0.0, g_scale=0.0, seed=2))
        assert np.array_equal(sys.F, np.zeros((3, 3)))


class TestMakeExample1Generator:
    def test_commutation(self):
        for seed in range(10):
            gen = stomor.make_example1_generator(seed)
            assert np.linalg.norm(gen.S @ gen.J - gen.J @ gen.S) <= 1e-12

    def test_drift_minus_half_noise_squared_is_rotation(self):
        rot = np.array([[0.0, 5.0], [-5.0, 0.0]])
        for seed in range(5):
            gen = stomor.make_example1_generator(seed)
            assert np.allclose(gen.S - 0.5 * gen.J @ gen.J, rot, atol=1e-14)

    def test_zero_noise_coefficients_leave_pure_rotation(self):
        gen = stomor.make_example1_generator(0)
        S_without_noise = gen.S - 0.5 * gen.J @ gen.J
        assert np.allclose(S_without_noise, [[0.0, 5.0], [-5.0, 0.0]])

    def test_neutrality_certified_by_estimator(self):
        gen = stomor.make_example1_generator(7)
        spec = stomor.lyapunov_exponents(gen.S, gen.J, seed=1, dt=1e-3,
                                         horizon=2000.0, reorth_interval=100)
        assert np.max(np.abs(spec.exponents)) < 0.02


class TestResolvers:
    def test_random_spec_string(self):
        sys = stomor.resolve_system("random:n=6,margin=0.7,f_scale=0.02,"
                                    "g_scale=0.5,seed=9")
        assert sys.n == 6
        assert np.array_equal(sys.F, 0.02 * sys.A)

    def test_example1_string(self):
        gen = stomor.resolve_generator("example1:3")
        ref = stomor.make_example1_generator(3)
        assert np.array_equal(gen.S, ref.S)

    def test_passthrough(self):
        sys = stomor.make_random_system(stomor.RandomSystemSpec(n=2, seed=1))
        assert stomor.resolve_system(sys) is sys

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            stomor.resolve_system("random:n=3,oops")


class TestMechanicalFixture:
    def test_block_structure(self):
        sys, parts = stomor.make_mechanical_fixture(n_masses=5, seed=3)
        n = 5
        assert sys.n == 10
        assert np.array_equal(sys.A[:n, :n], np.zeros((n, n)))
        assert np.array_equal(sys.A[:n, n:], np.eye(n))
        assert np.allclose(sys.F, 0.01 * sys.A)
        assert np.array_equal(sys.G, sys.B)
        assert np.max(np.linalg.eigvals(sys.A).real) < 0

    def test_output_selects_single_state(self):
        sys, parts = stomor.make_mechanical_fixture(n_masses=4, seed=0)
        assert sys.C.sum() == 1.0
        assert sys.C[0, parts["output_index"]] == 1.0


class TestRunReduction:
    def test_scalar_meansquare_matches_derivation(self):
        sys = stomor.LinearSde(A=[[-1.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]],
                               G=[[1.0]])
        gen = stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                     omega0=[[1.0]])
        config = stomor.ExperimentConfig(system=sys, generator=gen,
                                         method="meansquare", poles=[-1.0],
                                         gr_rule="zero")
        model, diagnostics = stomor.run_reduction(config)
        assert model.Cr[0, 0] == pytest.approx(np.sqrt(1.5), abs=1e-6)
        assert model.Br[0, 0] == pytest.approx(1.0 / np.sqrt(1.5), abs=1e-6)
        assert model.Fr[0, 0] == pytest.approx(np.sqrt(2.0 / 3.0), abs=1e-6)
        assert diagnostics["r_equation_residual"] <= 1e-10

    def test_scalar_mean_positive_gain_succeeds(self):
        config = stomor.ExperimentConfig(
            system=stomor.LinearSde(A=[[-1.0]], B=[[1.0]], C=[[1.0]],
                                    F=[[0.0]], G=[[0.0]]),
            generator=stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                             omega0=[[1.0]]),
            method="mean", poles=[-2.0])
        model, _ = stomor.run_reduction(config)
        assert model.kind == "moment_mean"
        assert model.Ar[0, 0] == pytest.approx(-2.0)

    def test_scalar_mean_negative_gain_fails_certificate(self):
        config = stomor.ExperimentConfig(
            system=stomor.LinearSde(A=[[-1.0]], B=[[1.0]], C=[[1.0]],
                                    F=[[0.0]], G=[[0.0]]),
            generator=stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                             omega0=[[1.0]]),
            method="mean", poles=[0.5])
        with pytest.raises(CertificateFailed):
            stomor.run_reduction(config)

    def test_singular_mean_raises(self):
        config = stomor.ExperimentConfig(
            system=stomor.LinearSde(A=[[0.0]], B=[[1.0]], C=[[1.0]],
                                    F=[[0.0]], G=[[0.0]]),
            generator=stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                             omega0=[[1.0]]),
            method="mean", poles=[-1.0])
        with pytest.raises(SingularSystem):
            stomor.run_reduction(config)

    def test_exact_uses_gr_rule(self):
        config = stomor.ExperimentConfig(
            system="random:n=6,seed=4,nu=2", generator="example1:4",
            method="exact", gr_rule="scale:0.05")
        model, _ = stomor.run_reduction(config)
        assert np.allclose(model.Gr, 0.05 * model.Br)


class TestRunValidation:
    def _zero_setup(self):
        sys = stomor.LinearSde(A=[[0.0]], B=[[0.0]], C=[[0.0]], F=[[0.0]],
                               G=[[0.0]])
        gen = stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                     omega0=[[1.0]])
        model = stomor.ReducedModel(kind="moment_mean",
                                    Ar=np.zeros((1, 1)), Br=np.zeros((1, 1)),
                                    Fr=np.zeros((1, 1)), Gr=np.zeros((1, 1)),
                                    Cr=np.zeros((1, 1)))
        return sys, gen, model

    def test_zero_system_and_model_zero_error(self):
        sys, gen, model = self._zero_setup()
        config = stomor.ExperimentConfig(system=sys, generator=gen,
                                         n_paths=6, dt=1e-2, horizon=2.0,
                                         probe_times=(0.5, 1.0))
        report = stomor.run_validation(config, model)
        assert np.all(report.mean_abs_err == 0.0)
        assert np.all(report.var_abs_err == 0.0)
        for samples in report.ecdf.values():
            assert np.all(samples == 0.0)

    def test_ecdf_properties(self):
        config = stomor.ExperimentConfig(
            system="random:n=4,seed=6,nu=2,g_scale=0.4",
            generator="example1:6", n_paths=16, dt=1e-2, horizon=3.0,
            probe_times=(1.0, 2.0, 3.0))
        model, _ = stomor.run_reduction(
            stomor.ExperimentConfig(system="random:n=4,seed=6,nu=2,g_scale=0.4",
                                    generator="example1:6", method="mean"))
        report = stomor.run_validation(config, model)
        assert report.probe_times == (1.0, 2.0, 3.0)
        for samples in report.ecdf.values():
            assert len(samples) == 16
            assert np.all(np.diff(samples) >= 0)
            levels = np.arange(1, 17) / 16.0
            assert levels[0] > 0 and levels[-1] == 1.0

    def test_thread_count_does_not_change_results(self, monkeypatch):
        config = stomor.ExperimentConfig(
            system="random:n=3,seed=8,g_scale=0.3", generator="example1:8",
            n_paths=130, dt=5e-3, horizon=1.0)
        model, _ = stomor.run_reduction(
            stomor.ExperimentConfig(system="random:n=3,seed=8,g_scale=0.3",
                                    generator="example1:8", method="exact"))
        monkeypatch.setenv("STOMOR_THREADS", "1")
        r1 = stomor.run_validation(config, model)
        monkeypatch.setenv("STOMOR_THREADS", "3")
        r2 = stomor.run_validation(config, model)
        assert np.array_equal(r1.mean_abs_err, r2.mean_abs_err)
        assert np.array_equal(r1.tail_mean_by_path, r2.tail_mean_by_path)
        assert r1.output_steady == r2.output_steady

    def test_divergence_abort(self):
        sys = stomor.LinearSde(A=[[6.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]],
                               G=[[0.0]])
        gen = stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                     omega0=[[1.0]])
        _, _, model = self._zero_setup()
        config = stomor.ExperimentConfig(system=sys, generator=gen,
                                         n_paths=8, dt=1e-3, horizon=8.0)
        with pytest.raises(DivergenceError) as info:
            stomor.run_validation(config, model)
        assert len(info.value.diverged) == 8

    def test_outputs_written(self, tmp_path):
        config = stomor.ExperimentConfig(
            system="random:n=3,seed=9,g_scale=0.3", generator="example1:9",
            n_paths=8, dt=5e-3, horizon=2.0, probe_times=(1.0, 2.0))
        model, _ = stomor.run_reduction(
            stomor.ExperimentConfig(system="random:n=3,seed=9,g_scale=0.3",
                                    generator="example1:9", method="exact"))
        stomor.run_validation(config, model, csv_dir=tmp_path)
        for name in ("errors.csv", "error_ci.csv", "ecdf.csv",
                     "path_tails.csv", "summary.csv", "errors.png",
                     "ecdf.png", "trajectories.png"):
            assert (tmp_path / name).exists(), name


class TestOmega0Policy:
    def test_default_randomized_for_ensembles(self):
        gen = stomor.make_example1_generator(1)
        config = stomor.ExperimentConfig(system="random:n=2,seed=1",
                                         generator=gen, n_paths=4)
        cols = harness._build_omega0(config, gen, np.arange(4))
        assert cols.shape == (2, 4)
        assert not np.allclose(cols[:, 0], cols[:, 1])

    def test_single_path_uses_generator_start(self):
        gen = stomor.make_example1_generator(1)
        config = stomor.ExperimentConfig(system="random:n=2,seed=1",
                                         generator=gen, n_paths=1)
        cols = harness._build_omega0(config, gen, np.arange(1))
        assert np.array_equal(cols, gen.omega0)

    def test_explicit_override(self):
        gen = stomor.make_example1_generator(1)
        config = stomor.ExperimentConfig(system="random:n=2,seed=1",
                                         generator=gen, n_paths=4,
                                         randomize_omega0=False)
        cols = harness._build_omega0(config, gen, np.arange(4))
        assert np.allclose(cols, np.broadcast_to(gen.omega0, (2, 4)))


class TestWorkerCount:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("STOMOR_THREADS", "7")
        assert harness.worker_count() == 7

    def test_invalid_env(self, monkeypatch):
        monkeypatch.setenv("STOMOR_THREADS", "lots")
        with pytest.raises(ValueError):
            harness.worker_count()

    def test_default_positive(self, monkeypatch):
        monkeypatch.delenv("STOMOR_THREADS", raising=False)
        assert harness.worker_count() >= 1


class TestSquareWave:
    def test_levels_and_period(self):
        u = stomor.square_wave(amplitude=0.05, period=10.0)
        assert u(2.5) == pytest.approx(-0.05)
        assert u(7.5) == pytest.approx(0.05)
        assert u(12.5) == pytest.approx(-0.05)

    def test_config_override_plumbs_through(self):
        sys = stomor.LinearSde(A=[[-1.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]],
                               G=[[0.0]])
        gen = stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                     omega0=[[1.0]])
        config = stomor.ExperimentConfig(system=sys, generator=gen,
                                         square_wave=True, n_paths=1,
                                         dt=1e-2, horizon=2.0)
        override = config.input_override()
        assert override is not None
        _, _, u = stomor.simulate_interconnection(sys, gen, dt=1e-2,
                                                  horizon=2.0,
                                                  input_override=override)
        assert np.allclose(np.abs(u.outputs[1:]), 0.05)
