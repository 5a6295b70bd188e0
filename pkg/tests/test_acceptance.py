"""Acceptance suite: one test per criterion, printing a PASS line each.

Run with ``pytest tests/test_acceptance.py -v -s``. Tolerances are pinned in
the assertions; seeds are fixed so every run is a deterministic replay.
"""

import time

import numpy as np
import pytest

import stomor
from stomor import cli, formats, linalg
from stomor.simulate import StepObserver, co_simulate


def _report(name, detail):
    print(f"\nACCEPTANCE {name}: PASS  ({detail})")


class _FinalSnap(StepObserver):
    """Final-time snapshot of system and model outputs."""

    def __init__(self, final_step):
        self.final_step = final_step
        self.y = None
        self.rom = None

    def step(self, k, t, u, y, rom_outputs, alive):
        if k == self.final_step:
            self.y = y.copy()
            self.rom = [r.copy() for r in rom_outputs]


def _mean_ci(samples, factor=1.96):
    return samples.mean(), factor * samples.std(ddof=1) / np.sqrt(len(samples))


def test_criterion_1_scalar_meansquare_end_to_end():
    # closed-form stationary-moment oracle for the scalar pair
    # a=-1, f=0, b=g=c=1 driven by the constant unit generator:
    #   mean moment: -Pi + 1 = 0            -> Pi = 1, C Pi = 1
    #   second moment: -2 K + (2 b Pi + g^2) = 0 -> K = 3/2
    #   output row: Cr^2 = K                -> Cr = sqrt(3/2)
    #   coordinates: Cr R = C Pi            -> R = 1/sqrt(3/2)
    #   drift pole at -1: Br = R, diffusion Fr^2 = 2 - 2 R^2 = 2/3
    # and the model's steady output then satisfies E[y] = w, E[y^2] = 1.5 w^2.
    start = time.perf_counter()
    sys = stomor.LinearSde(A=[[-1.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]], G=[[1.0]])
    gen = stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]], omega0=[[1.0]])
    mean = stomor.solve_mean_moment(sys, gen)
    second = stomor.solve_second_moment(sys, gen, mean)
    model = stomor.build_meansquare_rom(sys, gen, mean, second, pole_targets=[-1.0])

    assert model.Cr[0, 0] == pytest.approx(np.sqrt(1.5), abs=1e-6)
    assert model.R[0, 0] == pytest.approx(1.0 / np.sqrt(1.5), abs=1e-6)
    assert model.Fr[0, 0] == pytest.approx(np.sqrt(2.0 / 3.0), abs=1e-6)

    n_paths, dt, horizon = 10_000, 1e-3, 20.0
    n_steps = int(round(horizon / dt))
    snap = _FinalSnap(n_steps)
    co_simulate(sys, gen, (model,), seed=42, path_indices=range(n_paths),
                dt=dt, n_steps=n_steps, record_outputs=False, observers=[snap])
    rom_y = snap.rom[0]
    omega = gen.omega0[0, 0]

    m, se3 = _mean_ci(rom_y, factor=3.0)
    assert abs(m - omega) <= se3, (m, se3)
    m2, se3_2 = _mean_ci(rom_y ** 2, factor=3.0)
    assert abs(m2 - 1.5 * omega ** 2) <= se3_2, (m2, se3_2)
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    _report("1 scalar mean-square end-to-end",
            f"Cr/R/Fr to 1e-6; E[y]={m:.4f} (3SE {se3:.4f}), "
            f"E[y^2]={m2:.4f} (3SE {se3_2:.4f}); {elapsed:.0f}s")


@pytest.fixture(scope="module")
def example1_analog():
    sys = stomor.make_random_system(
        stomor.RandomSystemSpec(n=50, nu=2, margin=1.0, f_scale=0.05,
                                g_scale=0.1, seed=1))
    gen = stomor.make_example1_generator(1)
    return sys, gen


def test_criterion_2_example1_analog_matching(example1_analog):
    start = time.perf_counter()
    sys, gen = example1_analog
    poles = stomor.dominant_poles(sys.A, 2)
    Br = stomor.place_poles(gen.S, gen.L, poles)
    Gr = 0.05 * Br
    exact = stomor.build_exact_rom(sys, gen, Br, Gr, certificate_horizon=50.0)
    assert exact.certificate("rom_lyapunov_negative").passed
    mean = stomor.solve_mean_moment(sys, gen)
    mean_rom = stomor.build_mean_rom(sys, gen, mean, Br, gen.J - Gr @ gen.L, Gr)

    n_paths, dt, horizon = 50, 5e-4, 10.0
    n_steps = int(round(horizon / dt))
    from stomor.sde import STREAM_INITIAL, _stream_generator
    omega0 = np.empty((2, n_paths))
    for i in range(n_paths):
        omega0[:, i] = _stream_generator(0, i, STREAM_INITIAL).uniform(-1, 1, 2)
    res = co_simulate(sys, gen, (exact, mean_rom), seed=0,
                      path_indices=range(n_paths), dt=dt, n_steps=n_steps,
                      omega0=omega0, moment_x0=mean.Pi)
    assert np.all(res.diverged_at < 0)

    tail = slice(n_steps - n_steps // 10, None)
    y = res.outputs
    rms = np.sqrt((y[:, tail] ** 2).mean(axis=1))
    e_exact = np.abs(y - res.rom_outputs[0])[:, tail].mean(axis=1)
    e_mean = np.abs(y - res.rom_outputs[1])[:, tail].mean(axis=1)

    n_small = int((e_exact <= 0.02 * rms).sum())
    n_larger = int((e_mean > e_exact).sum())
    assert n_small >= 45, n_small
    assert n_larger >= 45, n_larger
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    _report("2 example1-generator benchmark (n=50)",
            f"exact tail <= 2% RMS on {n_small}/50 paths; moment-mean larger "
            f"on {n_larger}/50; {elapsed:.0f}s")


def test_criterion_3_constant_input_moment_matching():
    # n=10, nu=1, S=0, J=0, F=0.05A, G=B; the instance (margin 0.5, seed 11)
    # keeps the Gr=0 mean-square model's fourth moment stable so the CI
    # estimator of E[y^2] is meaningful
    start = time.perf_counter()
    sys = stomor.make_random_system(
        stomor.RandomSystemSpec(n=10, nu=1, margin=0.5, f_scale=0.05,
                                g_scale=1.0, seed=11))
    gen = stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]], omega0=[[1.0]])
    mean = stomor.solve_mean_moment(sys, gen)
    second = stomor.solve_second_moment(sys, gen, mean)
    poles = stomor.dominant_poles(sys.A, 1)
    Br = stomor.place_poles(gen.S, gen.L, poles)
    Gr = 0.1 * Br
    mean_rom = stomor.build_mean_rom(sys, gen, mean, Br, np.zeros((1, 1)), Gr)
    ms_rom = stomor.build_meansquare_rom(sys, gen, mean, second,
                                         pole_targets=poles)

    target_mean = (sys.C @ mean.Pi).item()
    target_meansq = (linalg.kron(sys.C, sys.C) @ second.K).item()

    n_paths, dt, horizon = 2000, 1e-3, 20.0
    n_steps = int(round(horizon / dt))
    snap = _FinalSnap(n_steps)
    co_simulate(sys, gen, (mean_rom, ms_rom), seed=500,
                path_indices=range(n_paths), dt=dt, n_steps=n_steps,
                record_outputs=False, observers=[snap])

    checks = {}
    for label, samples in (("sys", snap.y), ("mean", snap.rom[0]),
                           ("msq", snap.rom[1])):
        m, ci = _mean_ci(samples)
        m2, ci2 = _mean_ci(samples ** 2)
        checks[label] = (abs(m - target_mean) <= ci,
                         abs(m2 - target_meansq) <= ci2)
    # steady mean matches for BOTH model kinds
    assert checks["mean"][0] and checks["msq"][0], checks
    # steady mean-square matches ONLY for the mean-square model
    assert checks["msq"][1] and not checks["mean"][1], checks
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0
    _report("3 constant-input pair (n=10)",
            f"mean in CI for both kinds; mean-square in CI only for the "
            f"mean-square model; {elapsed:.0f}s")


def test_criterion_4_solver_residual_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    sizes = [(int(rng.integers(1, 13)), int(rng.integers(1, 4)))
             for _ in range(96)]
    sizes += [(20, 2), (25, 3), (30, 2), (30, 3)]
    checked = 0
    for i, (n, nu) in enumerate(sizes):
        sys = stomor.make_random_system(
            stomor.RandomSystemSpec(n=n, nu=nu, margin=0.6, f_scale=0.05,
                                    g_scale=0.3, seed=1000 + i))
        if nu == 1:
            S = np.zeros((1, 1))
        else:
            raw = rng.standard_normal((nu, nu))
            S = raw - raw.T
        gen = stomor.SignalGenerator(S=S, J=np.zeros((nu, nu)),
                                     L=rng.uniform(-1.0, 1.0, (1, nu)),
                                     omega0=np.eye(nu)[:, :1])
        mean = stomor.solve_mean_moment(sys, gen)
        assert mean.solvable
        rhs = sys.B @ gen.L
        assert mean.residual <= 1e-10 * (1.0 + np.linalg.norm(rhs)), (n, nu)
        second = stomor.solve_second_moment(sys, gen, mean)
        assert second.residual <= 1e-10 * (1.0 + np.linalg.norm(second.B_aug)), \
            (n, nu)
        checked += 1
    assert checked == 100

    # offline solve agrees with long-horizon integration of the moment flows
    for n, seed in ((1, 5), (3, 6)):
        sys = stomor.make_random_system(
            stomor.RandomSystemSpec(n=n, nu=1, margin=1.0, f_scale=0.1,
                                    g_scale=0.5, seed=seed))
        gen = stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                                     omega0=[[0.8]])
        mean = stomor.solve_mean_moment(sys, gen)
        second = stomor.solve_second_moment(sys, gen, mean)
        omega = gen.omega0[0, 0]
        u = gen.L[0, 0] * omega
        dt = 1e-3
        m = np.zeros((n, 1))
        M = np.zeros((n, n))
        for _ in range(40_000):
            m = m + dt * (sys.A @ m + sys.B * u)
            M = stomor.second_moment_ode_step(M, m[:, 0], u, sys, dt)
        target = linalg.unvec(second.K * omega ** 2, n, n)
        assert np.linalg.norm(M - target) \
            <= 1e-6 * (1.0 + np.linalg.norm(target)), n
    elapsed = time.perf_counter() - start
    _report("4 solver residual suite",
            f"100 instances up to n=30, nu=3 at 1e-10 relative; "
            f"integration agreement at 1e-6; {elapsed:.0f}s")


def test_criterion_5_lyapunov_estimator():
    start = time.perf_counter()
    details = []
    for a in (-2.0, -1.0):
        for f in (0.5, 1.0):
            spec = stomor.lyapunov_exponents(np.array([[a]]), np.array([[f]]),
                                             seed=3, dt=1e-3, horizon=2000.0,
                                             reorth_interval=500)
            expected = a - f * f / 2.0
            assert spec.exponents[0] == pytest.approx(expected, rel=0.05), (a, f)
            details.append(f"({a},{f})->{spec.exponents[0]:.3f}")

    gen = stomor.make_example1_generator(4)
    spec = stomor.lyapunov_exponents(gen.S, gen.J, seed=5, dt=1e-3,
                                     horizon=3000.0, reorth_interval=100)
    worst = float(np.max(np.abs(spec.exponents)))
    assert worst < 0.02, worst

    sys = stomor.make_random_system(
        stomor.RandomSystemSpec(n=6, nu=1, margin=0.5, seed=9))
    spec0 = stomor.lyapunov_exponents(sys.A, np.zeros((6, 6)), seed=1, dt=1e-3,
                                      horizon=300.0, reorth_interval=100)
    expected = np.sort(np.linalg.eigvals(sys.A).real)[::-1]
    assert np.allclose(spec0.exponents, expected, atol=0.02)
    elapsed = time.perf_counter() - start
    _report("5 Lyapunov estimator",
            f"scalar grid within 5% [{', '.join(details)}]; neutral generator "
            f"|max| {worst:.4f} < 0.02; noise-free case within 0.02; {elapsed:.0f}s")


def test_criterion_6_nearest_kronecker():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    for _ in range(50):
        r1, c1, r2, c2 = rng.integers(1, 4, size=4)
        t1 = rng.standard_normal((r1, c1))
        t2 = rng.standard_normal((r2, c2))
        q = linalg.kron(t1, t2)
        fac = stomor.nearest_kronecker(q, r1, c1, r2, c2)
        assert fac.separability_error < 1e-12
        assert np.allclose(linalg.kron(fac.T1, fac.T2), q,
                           atol=1e-12 * max(1.0, np.abs(q).max()))
    for _ in range(50):
        r1, c1, r2, c2 = rng.integers(1, 4, size=4)
        q = rng.standard_normal((r1 * r2, c1 * c2))
        fac = stomor.nearest_kronecker(q, r1, c1, r2, c2)
        direct = np.linalg.norm(q - linalg.kron(fac.T1, fac.T2))
        assert abs(fac.separability_error - direct) <= 1e-10
    elapsed = time.perf_counter() - start
    _report("6 nearest Kronecker",
            f"50 exact recoveries < 1e-12; 50 reported errors match the "
            f"direct norm to 1e-10; {elapsed:.0f}s")


def test_criterion_7_determinism_formats_exit_codes(tmp_path, monkeypatch):
    start = time.perf_counter()
    sys_path = tmp_path / "system.txt"
    formats.save_system(
        stomor.LinearSde(A=[[-1.0]], B=[[1.0]], C=[[1.0]], F=[[0.1]],
                         G=[[0.5]]), sys_path)
    gen_path = tmp_path / "generator.txt"
    formats.save_generator(
        stomor.SignalGenerator(S=[[0.0]], J=[[0.0]], L=[[1.0]],
                               omega0=[[1.0]]), gen_path)
    model_path = tmp_path / "model.txt"
    assert cli.main(["reduce", "--system", str(sys_path), "--generator",
                     str(gen_path), "--method", "meansquare", "--poles", "-1",
                     "--out", str(model_path)]) == 0

    # byte-identical CSV across repeated runs and worker counts
    args = ["validate", "--system", str(sys_path), "--generator", str(gen_path),
            "--model", str(model_path), "--paths", "96", "--seed", "7",
            "--dt", "0.002", "--horizon", "4", "--no-figures"]
    monkeypatch.setenv("STOMOR_THREADS", "2")
    assert cli.main(args + ["--csv-dir", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("STOMOR_THREADS", "5")
    assert cli.main(args + ["--csv-dir", str(tmp_path / "b")]) == 0
    files_a = sorted((tmp_path / "a").glob("*.csv"))
    assert len(files_a) >= 5
    for fa in files_a:
        fb = tmp_path / "b" / fa.name
        assert fa.read_bytes() == fb.read_bytes(), fa.name

    # matrix round trip is bit exact
    rng = np.random.default_rng(3)
    m = rng.standard_normal((6, 4)) * 10.0 ** rng.integers(-9, 9, (6, 4))
    mpath = tmp_path / "m.txt"
    formats.save_matrix(m, mpath)
    assert np.array_equal(formats.load_matrix(mpath), m)
    loaded = formats.load_model(model_path)
    assert loaded.kind == "mean_square"

    # exit-code contract, one scenario per class
    bad_sys = tmp_path / "bad.txt"
    bad_sys.write_text("[A]\n1 1\nnope\n")
    singular_sys = tmp_path / "singular.txt"
    formats.save_system(
        stomor.LinearSde(A=[[0.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]],
                         G=[[0.0]]), singular_sys)
    unstable_sys = tmp_path / "unstable.txt"
    formats.save_system(
        stomor.LinearSde(A=[[6.0]], B=[[1.0]], C=[[1.0]], F=[[0.0]],
                         G=[[0.0]]), unstable_sys)
    codes = {
        0: cli.main(["check-assumptions", "--system", str(sys_path),
                     "--generator", str(gen_path), "--horizon", "20"]),
        2: cli.main(["reduce", "--system", str(sys_path), "--generator",
                     str(gen_path), "--method", "mean", "--poles", "0.5",
                     "--out", str(tmp_path / "x.txt")]),
        3: cli.main(["reduce", "--system", str(singular_sys), "--generator",
                     str(gen_path), "--method", "mean", "--poles", "-1",
                     "--out", str(tmp_path / "x.txt")]),
        4: cli.main(["validate", "--system", str(unstable_sys), "--generator",
                     str(gen_path), "--model", str(model_path), "--paths", "4",
                     "--dt", "0.001", "--horizon", "8", "--no-figures"]),
        5: cli.main(["reduce", "--system", str(bad_sys), "--generator",
                     str(gen_path), "--method", "exact",
                     "--out", str(tmp_path / "x.txt")]),
    }
    for expected, actual in codes.items():
        assert actual == expected, codes
    elapsed = time.perf_counter() - start
    _report("7 determinism, formats, exit codes",
            f"byte-identical CSVs across thread counts; round trips; exit "
            f"codes {sorted(codes)}; {elapsed:.0f}s")


def test_criterion_8_square_wave_decay(example1_analog):
    # The decay-between-switches mechanism needs constant inputs inside the
    # generator's signal class, so the off-design model is built on the
    # benchmark-structured generator sigma(S) = {0, +-5i} (J = 0) attached
    # to the same n=50 system.
    start = time.perf_counter()
    sys, _ = example1_analog
    S = np.zeros((3, 3))
    S[1, 2], S[2, 1] = 5.0, -5.0
    gen = stomor.SignalGenerator(S=S, J=np.zeros((3, 3)),
                                 L=np.array([[1.0, -0.712, 0.897]]),
                                 omega0=[[1.0], [1.0], [0.0]])
    poles = stomor.dominant_poles(sys.A, 3)
    Br = stomor.place_poles(gen.S, gen.L, poles)
    exact = stomor.build_exact_rom(sys, gen, Br, 0.05 * Br,
                                   certificate_horizon=50.0)
    mean = stomor.solve_mean_moment(sys, gen)

    wave = stomor.square_wave(amplitude=0.05, period=10.0)
    dt, horizon = 5e-4, 30.0
    n_steps = int(round(horizon / dt))
    res = co_simulate(sys, gen, (exact,), seed=3, path_indices=(0,), dt=dt,
                      n_steps=n_steps, input_override=wave, moment_x0=mean.Pi)
    e = np.abs(res.outputs[0] - res.rom_outputs[0][0])
    seg_len = int(round(5.0 / dt))
    quarter = seg_len // 4
    decays = []
    for s in range(6):
        seg = e[s * seg_len:(s + 1) * seg_len]
        decays.append(bool(seg[-quarter:].mean() < seg[:quarter].mean()))
    frac = sum(decays) / len(decays)
    assert frac >= 0.8, decays
    elapsed = time.perf_counter() - start
    _report("8 square-wave robustness",
            f"per-segment decay on {sum(decays)}/6 segments; {elapsed:.0f}s")
