"""Experiment harness: system builders, reduction runs and Monte Carlo validation.

Validation distributes paths over a thread pool in fixed-size chunks (64
paths), each simulated as one vectorized batch. Chunk boundaries and per-path
noise streams depend only on path indices, never on the worker count, so
repeated runs produce byte-identical CSV output whatever ``STOMOR_THREADS``
says. Statistics are merged associatively in chunk order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .errors import DivergenceError, SingularSystem
from .moments import solve_mean_moment, solve_second_moment
from .rom import (
    ReducedModel,
    build_exact_rom,
    build_mean_rom,
    build_meansquare_rom,
    dominant_poles,
    place_poles,
)
from .sde import (
    STREAM_INITIAL,
    LinearSde,
    NoiseCoupling,
    SignalGenerator,
    _stream_generator,
)
from .simulate import StepObserver, co_simulate

__all__ = [
    "RandomSystemSpec",
    "ExperimentConfig",
    "SteadyStats",
    "ValidationReport",
    "make_random_system",
    "make_example1_generator",
    "make_mechanical_fixture",
    "square_wave",
    "resolve_system",
    "resolve_generator",
    "run_reduction",
    "run_validation",
    "write_validation_outputs",
    "worker_count",
]

CHUNK_PATHS = 64  # fixed so results never depend on the worker count

DEFAULT_PROBE_TIMES = (1.5, 2.5, 5.0, 7.5, 10.0)


def worker_count() -> int:
    """Worker pool size: STOMOR_THREADS if set, else min(cpu_count, 4)."""
    env = os.environ.get("STOMOR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"STOMOR_THREADS must be an integer, got {env!r}") from None
    return max(1, min(os.cpu_count() or 1, 4))


# ---------------------------------------------------------------------------
# seeded example systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomSystemSpec:
    """Recipe for a seeded random stable system.

    The drift is A = M - (max Re eig(M) + margin) I for M with uniform
    [-1, 1] entries, so the spectrum sits at least ``margin`` inside the left
    half plane; F = f_scale * A and G = g_scale * B. ``nu`` records the
    intended generator/reduction order for downstream defaults.
    """

    n: int
    nu: int = 1
    margin: float = 0.5
    f_scale: float = 0.05
    g_scale: float = 0.1
    seed: int = 0


def make_random_system(spec: RandomSystemSpec) -> LinearSde:
    """Draw the seeded random system described by ``spec`` (deterministic)."""
    if spec.n < 1:
        raise ValueError("system order must be at least 1")
    rng = np.random.default_rng(spec.seed)
    raw = rng.uniform(-1.0, 1.0, size=(spec.n, spec.n))
    shift = float(np.max(np.linalg.eigvals(raw).real)) + spec.margin
    A = raw - shift * np.eye(spec.n)
    B = rng.uniform(-1.0, 1.0, size=(spec.n, 1))
    C = rng.uniform(-1.0, 1.0, size=(1, spec.n))
    return LinearSde(A=A, B=B, C=C, F=spec.f_scale * A, G=spec.g_scale * B)


def make_example1_generator(seed: int = 0) -> SignalGenerator:
    """Seeded order-2 oscillating generator with commuting noise.

    J is a polynomial c0 I + c1 K in the rotation K = [[0, 5], [-5, 0]], so
    S = K + J^2 / 2 commutes with J by construction and S - J^2 / 2 = K has
    simple purely imaginary eigenvalues: the generator flow is neutral (all
    Lyapunov exponents zero). L is redrawn until it is well scaled, which
    keeps (L, S) observable.
    """
    rng = np.random.default_rng(seed)
    rot = np.array([[0.0, 5.0], [-5.0, 0.0]])
    c = rng.uniform(-0.1, 0.1, size=2)
    J = c[0] * np.eye(2) + c[1] * rot
    S = rot + 0.5 * J @ J
    L = rng.uniform(-1.0, 1.0, size=(1, 2))
    while np.linalg.norm(L) < 0.3:
        L = rng.uniform(-1.0, 1.0, size=(1, 2))
    return SignalGenerator(S=S, J=J, L=L, omega0=np.array([[1.0], [0.0]]))


def make_mechanical_fixture(n_masses: int = 6, seed: int = 0,
                            f_scale: float = 0.01, g_scale: float = 1.0):
    """Small synthetic mass-spring-damper chain as a benchmark stand-in.

    Returns the assembled first-order stochastic system together with the
    second-order pieces (M, C, K, B, output_index) so they can be written to
    a ``form second_order`` file and re-ingested.
    """
    rng = np.random.default_rng(seed)
    masses = rng.uniform(1.0, 2.0, size=n_masses)
    springs = rng.uniform(50.0, 150.0, size=n_masses)
    M = np.diag(masses)
    K = np.zeros((n_masses, n_masses))
    for i in range(n_masses):  # fixed-free chain
        K[i, i] += springs[i]
        if i + 1 < n_masses:
            K[i, i] += springs[i + 1]
            K[i, i + 1] -= springs[i + 1]
            K[i + 1, i] -= springs[i + 1]
    C = 0.05 * M + 0.002 * K
    B = np.zeros((n_masses, 1))
    B[-1, 0] = 1.0
    output_index = n_masses - 1  # displacement of the last mass
    sys = formats._assemble_second_order(M, C, K, B, output_index, f_scale, g_scale)
    parts = {"M": M, "C": C, "K": K, "B": B, "output_index": output_index,
             "f_scale": f_scale, "g_scale": g_scale}
    return sys, parts


def square_wave(amplitude: float = 0.05, period: float = 10.0):
    """Off-design input u(t) = -amplitude * sign(sin(2 pi t / period))."""
    def u(t: float) -> float:
        return -amplitude * float(np.sign(np.sin(2.0 * np.pi * t / period)))
    return u


# ---------------------------------------------------------------------------
# source resolution ("random:...", "example1:N", file paths)
# ---------------------------------------------------------------------------

def _parse_kv(spec: str) -> dict:
    out = {}
    if not spec:
        return out
    for item in spec.split(","):
        key, _, value = item.partition("=")
        if not _:
            raise ValueError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def resolve_system(source) -> LinearSde:
    """Accept a LinearSde, a ``random:key=value,...`` spec or a file path."""
    if isinstance(source, LinearSde):
        return source
    text = str(source)
    if text.startswith("random:"):
        kv = _parse_kv(text[len("random:"):])
        spec = RandomSystemSpec(
            n=int(kv["n"]), nu=int(kv.get("nu", "1")),
            margin=float(kv.get("margin", "0.5")),
            f_scale=float(kv.get("f_scale", kv.get("f", "0.05"))),
            g_scale=float(kv.get("g_scale", kv.get("g", "0.1"))),
            seed=int(kv.get("seed", "0")))
        return make_random_system(spec)
    if text.startswith("mechfixture:"):
        return make_mechanical_fixture(seed=int(text.split(":", 1)[1] or "0"))[0]
    return formats.load_system(text)


def resolve_generator(source) -> SignalGenerator:
    """Accept a SignalGenerator, ``example1:SEED`` or a file path."""
    if isinstance(source, SignalGenerator):
        return source
    text = str(source)
    if text.startswith("example1:"):
        return make_example1_generator(int(text.split(":", 1)[1] or "0"))
    if text == "example1":
        return make_example1_generator(0)
    return formats.load_generator(text)


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Everything one reduction + validation run needs.

    ``poles`` default to the dominant (largest real part) eigenvalues of the
    system drift, conjugate-closed; ``gr_rule`` is ``"zero"`` or
    ``"scale:ALPHA"`` (Gr = ALPHA * Br); ``fr_rule`` selects the moment-mean
    model diffusion, ``"exactlike"`` (Fr = J - Gr L) or ``"neg_grl"``
    (Fr = -Gr L). ``randomize_omega0=None`` means on for ensembles and off
    for single-path runs.
    """

    system: object
    generator: object
    method: str = "exact"
    dt: float = 1e-3
    horizon: float = 10.0
    burn_in_fraction: float = 0.2
    n_paths: int = 50
    base_seed: int = 0
    poles: object = None
    gr_rule: str = "scale:0.05"
    fr_rule: str = "exactlike"
    coupling: object = NoiseCoupling.SHARED
    probe_times: tuple = DEFAULT_PROBE_TIMES
    tail_fraction: float = 0.1
    randomize_omega0: bool | None = None
    square_wave: bool = False
    square_wave_amplitude: float = 0.05
    square_wave_period: float = 10.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.method not in ("exact", "mean", "meansquare"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ValueError("tail_fraction must lie in (0, 1]")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def input_override(self):
        if not self.square_wave:
            return None
        return square_wave(self.square_wave_amplitude, self.square_wave_period)


def _gr_from_rule(rule: str, Br: np.ndarray) -> np.ndarray:
    if rule == "zero":
        return np.zeros_like(Br)
    if rule.startswith("scale:"):
        return float(rule.split(":", 1)[1]) * Br
    raise ValueError(f"unknown gr_rule {rule!r}")


def run_reduction(config: ExperimentConfig):
    """Build the reduced model requested by ``config``.

    Returns ``(model, diagnostics)`` where diagnostics collects solver
    residuals and build metrics. Certificate failures, singular solves and
    missing solutions propagate as their exception types.
    """
    sys = resolve_system(config.system)
    gen = resolve_generator(config.generator)
    nu = gen.nu
    poles = config.poles
    if poles is None:
        poles = dominant_poles(sys.A, nu)
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))

    diagnostics: dict = {}
    if config.method == "exact":
        Br = place_poles(gen.S, gen.L, poles)
        Gr = _gr_from_rule(config.gr_rule, Br)
        model = build_exact_rom(sys, gen, Br, Gr)
    elif config.method == "mean":
        mean = solve_mean_moment(sys, gen)
        if not mean.solvable:
            raise SingularSystem("mean moment equation is singular for this pair")
        Br = place_poles(gen.S, gen.L, poles)
        Gr = _gr_from_rule(config.gr_rule, Br)
        if config.fr_rule == "exactlike":
            Fr = gen.J - Gr @ gen.L
        elif config.fr_rule == "neg_grl":
            Fr = -Gr @ gen.L
        else:
            raise ValueError(f"unknown fr_rule {config.fr_rule!r}")
        model = build_mean_rom(sys, gen, mean, Br, Fr, Gr)
        diagnostics["mean_attractive"] = float(mean.attractive)
    else:  # meansquare
        mean = solve_mean_moment(sys, gen)
        if not mean.solvable:
            raise SingularSystem("mean moment equation is singular for this pair")
        second = solve_second_moment(sys, gen, mean)
        gr_scale = None
        if config.gr_rule.startswith("scale:"):
            gr_scale = float(config.gr_rule.split(":", 1)[1])
        model = build_meansquare_rom(sys, gen, mean, second,
                                     pole_targets=poles, gr_scale=gr_scale)
    diagnostics.update(model.diagnostics)
    return model, diagnostics


# ---------------------------------------------------------------------------
# validation: streaming observers
# ---------------------------------------------------------------------------

class _ErrorMoments(StepObserver):
    """Per-time sums of |e| and e^2 across paths."""

    def __init__(self, n_steps):
        self.sum = np.zeros(n_steps + 1)
        self.sumsq = np.zeros(n_steps + 1)
        self.n = 0

    def start(self, times, path_indices, n_roms):
        self.n = len(path_indices)

    def step(self, k, t, u, y, rom_outputs, alive):
        e = np.abs(y - rom_outputs[0])
        self.sum[k] += e.sum()
        self.sumsq[k] += (e * e).sum()


class _TailStats(StepObserver):
    """Per-path means of |e| and y^2 over the trailing window."""

    def __init__(self, tail_start, n_steps):
        self.tail_start = tail_start
        self.count = n_steps + 1 - tail_start
        self.sum_e = None
        self.sum_ysq = None

    def start(self, times, path_indices, n_roms):
        self.sum_e = np.zeros(len(path_indices))
        self.sum_ysq = np.zeros(len(path_indices))

    def step(self, k, t, u, y, rom_outputs, alive):
        if k >= self.tail_start:
            self.sum_e += np.abs(y - rom_outputs[0])
            self.sum_ysq += y * y


class _ProbeCapture(StepObserver):
    """|e| snapshots at the requested probe steps."""

    def __init__(self, probe_steps):
        self.probe_steps = set(int(s) for s in probe_steps)
        self.samples = {}

    def step(self, k, t, u, y, rom_outputs, alive):
        if k in self.probe_steps:
            self.samples[k] = np.abs(y - rom_outputs[0])


class _FinalSnapshot(StepObserver):
    """System and model outputs at the final time."""

    def __init__(self, final_step):
        self.final_step = final_step
        self.y = None
        self.rom_y = None

    def step(self, k, t, u, y, rom_outputs, alive):
        if k == self.final_step:
            self.y = y.copy()
            self.rom_y = rom_outputs[0].copy()


class _TimeAverages(StepObserver):
    """Post-burn-in time averages of output moments (per path)."""

    def __init__(self, start_step):
        self.start_step = start_step
        self.acc = None  # rows: y, y^2, rom, rom^2

    def start(self, times, path_indices, n_roms):
        self.acc = np.zeros((4, len(path_indices)))

    def step(self, k, t, u, y, rom_outputs, alive):
        if k >= self.start_step:
            ry = rom_outputs[0]
            self.acc[0] += y
            self.acc[1] += y * y
            self.acc[2] += ry
            self.acc[3] += ry * ry


class _SampleTrajectories(StepObserver):
    """Full output histories for a handful of paths (for figures)."""

    def __init__(self, n_samples, n_steps):
        self.n_samples = n_samples
        self.n_steps = n_steps
        self.y = None
        self.rom_y = None
        self.u = None

    def start(self, times, path_indices, n_roms):
        take = min(self.n_samples, len(path_indices))
        self.y = np.empty((take, self.n_steps + 1))
        self.rom_y = np.empty((take, self.n_steps + 1))
        self.u = np.empty((take, self.n_steps + 1))

    def step(self, k, t, u, y, rom_outputs, alive):
        take = self.y.shape[0]
        self.y[:, k] = y[:take]
        self.rom_y[:, k] = rom_outputs[0][:take]
        self.u[:, k] = u[:take]


# ---------------------------------------------------------------------------
# validation report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteadyStats:
    """Monte Carlo estimate of a steady output mean and mean-square with
    standard errors (snapshot at the final time, i.i.d. across paths)."""

    mean: float
    meansq: float
    se_mean: float
    se_meansq: float


@dataclass
class ValidationReport:
    """Monte Carlo matching statistics of one reduced model.

    ``ecdf`` maps each probe time to the sorted |e| samples across paths
    (the empirical CDF puts mass i/n at the i-th sorted sample, so it is
    non-decreasing with range [0, 1] by construction).
    """

    times: np.ndarray
    mean_abs_err: np.ndarray
    var_abs_err: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    tail_mean_by_path: np.ndarray
    tail_rms_by_path: np.ndarray
    tail_mean: float
    tail_rms_output: float
    tail_ratio: float
    probe_times: tuple
    ecdf: dict
    output_steady: SteadyStats
    rom_steady: SteadyStats
    time_avg_output_mean: float
    time_avg_output_meansq: float
    time_avg_rom_mean: float
    time_avg_rom_meansq: float
    n_paths: int
    diverged: list
    dt: float
    horizon: float
    base_seed: int
    burn_in_fraction: float
    tail_fraction: float
    sample_times: np.ndarray | None = None
    sample_outputs: np.ndarray | None = None
    sample_rom_outputs: np.ndarray | None = None
    sample_inputs: np.ndarray | None = None


def _steady_from_samples(values: np.ndarray) -> SteadyStats:
    n = len(values)
    sq = values * values
    se = lambda v: float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return SteadyStats(mean=float(values.mean()), meansq=float(sq.mean()),
                       se_mean=se(values), se_meansq=se(sq))


def _build_omega0(config: ExperimentConfig, gen: SignalGenerator, indices) -> np.ndarray:
    randomize = config.randomize_omega0
    if randomize is None:
        randomize = config.n_paths > 1
    if not randomize:
        return np.broadcast_to(gen.omega0, (gen.nu, len(indices))).copy()
    cols = np.empty((gen.nu, len(indices)))
    for i, p in enumerate(indices):
        rng = _stream_generator(config.base_seed, p, STREAM_INITIAL)
        cols[:, i] = rng.uniform(-1.0, 1.0, size=gen.nu)
    return cols


def run_validation(config: ExperimentConfig, model: ReducedModel,
                   csv_dir=None, figures: bool = True) -> ValidationReport:
    """Monte Carlo co-simulation of system and model on shared seeded paths.

    Paths are processed in fixed chunks of 64 across a thread pool; a chunk
    with diverged paths is re-simulated without them (per-path streams are
    identical either way), so statistics cover exactly the surviving paths.
    The run aborts with :class:`DivergenceError` when more than 10% of paths
    diverge. With ``csv_dir`` set, CSV files (and figures unless disabled)
    are written there.
    """
    sys = resolve_system(config.system)
    gen = resolve_generator(config.generator)
    n_steps = config.n_steps
    if n_steps < 1:
        raise ValueError("horizon must cover at least one step")
    tail_start = max(0, n_steps - int(round(config.tail_fraction * n_steps)))
    burn_start = min(n_steps, int(round(config.burn_in_fraction * n_steps)))
    probe_steps = {}
    for pt in config.probe_times:
        k = int(round(pt / config.dt))
        if 0 <= k <= n_steps:
            probe_steps[k] = float(pt)

    moment_x0 = None
    if model.time_varying_output:
        mean = solve_mean_moment(sys, gen)
        moment_x0 = mean.Pi if mean.solvable else None
    input_override = config.input_override()

    all_indices = np.arange(config.n_paths)
    chunks = [all_indices[i:i + CHUNK_PATHS]
              for i in range(0, config.n_paths, CHUNK_PATHS)]

    def make_observers(first):
        observers = {
            "moments": _ErrorMoments(n_steps),
            "tail": _TailStats(tail_start, n_steps),
            "probes": _ProbeCapture(probe_steps.keys()),
            "snapshot": _FinalSnapshot(n_steps),
            "avg": _TimeAverages(burn_start),
        }
        if first:
            observers["samples"] = _SampleTrajectories(4, n_steps)
        return observers

    def run_chunk(indices):
        # a pass with diverged paths is replayed without them; per-path
        # streams do not depend on batch composition, so survivors repeat
        # their trajectories and the loop shrinks until a pass is clean
        indices = np.asarray(indices)
        first = bool(len(indices) and indices[0] == 0)
        observers = make_observers(first)
        diverged: list = []
        while len(indices):
            result = co_simulate(
                sys, gen, (model,), seed=config.base_seed, path_indices=indices,
                dt=config.dt, n_steps=n_steps, coupling=config.coupling,
                omega0=_build_omega0(config, gen, indices),
                moment_x0=moment_x0, input_override=input_override,
                observers=list(observers.values()), record_outputs=False)
            bad = result.diverged_at >= 0
            if not bad.any():
                break
            diverged.extend(
                (int(p), int(s)) for p, s in
                zip(indices[bad], result.diverged_at[bad]))
            indices = indices[~bad]
            observers = make_observers(first)
        return observers, diverged, len(indices)

    n_workers = worker_count()
    if n_workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]

    diverged: list = []
    survivors = 0
    sum_e = np.zeros(n_steps + 1)
    sumsq_e = np.zeros(n_steps + 1)
    tails_e, tails_y = [], []
    probe_samples = {k: [] for k in probe_steps}
    snap_y, snap_rom = [], []
    avg_acc = np.zeros(4)
    samples = None
    for observers, chunk_diverged, n_ok in results:
        diverged.extend(chunk_diverged)
        if n_ok == 0:
            continue
        survivors += n_ok
        sum_e += observers["moments"].sum
        sumsq_e += observers["moments"].sumsq
        tail = observers["tail"]
        tails_e.append(tail.sum_e / tail.count)
        tails_y.append(np.sqrt(tail.sum_ysq / tail.count))
        for k in probe_steps:
            probe_samples[k].append(observers["probes"].samples[k])
        snap_y.append(observers["snapshot"].y)
        snap_rom.append(observers["snapshot"].rom_y)
        avg_acc += observers["avg"].acc.sum(axis=1)
        if "samples" in observers:
            samples = observers["samples"]

    if survivors == 0:
        raise DivergenceError("all paths diverged", diverged=diverged)
    if len(diverged) > 0.1 * config.n_paths:
        raise DivergenceError(
            f"{len(diverged)} of {config.n_paths} paths diverged "
            f"(> 10%); first at step {min(s for _, s in diverged)}",
            diverged=sorted(diverged),
        )

    mean_e = sum_e / survivors
    if survivors > 1:
        var_e = np.maximum(sumsq_e - sum_e * sum_e / survivors, 0.0) / (survivors - 1)
    else:
        var_e = np.zeros_like(sum_e)
    half = 1.96 * np.sqrt(var_e / survivors)
    tail_mean_by_path = np.concatenate(tails_e)
    tail_rms_by_path = np.concatenate(tails_y)
    ecdf = {probe_steps[k]: np.sort(np.concatenate(probe_samples[k]))
            for k in sorted(probe_steps)}
    snap_y = np.concatenate(snap_y)
    snap_rom = np.concatenate(snap_rom)
    steps_avg = n_steps + 1 - burn_start
    avg_per_path = avg_acc / (survivors * steps_avg)

    report = ValidationReport(
        times=np.arange(n_steps + 1) * config.dt,
        mean_abs_err=mean_e,
        var_abs_err=var_e,
        ci_lower=np.maximum(mean_e - half, 0.0),
        ci_upper=mean_e + half,
        tail_mean_by_path=tail_mean_by_path,
        tail_rms_by_path=tail_rms_by_path,
        tail_mean=float(tail_mean_by_path.mean()),
        tail_rms_output=float(np.sqrt(np.mean(tail_rms_by_path ** 2))),
        tail_ratio=float(tail_mean_by_path.mean()
                         / max(np.sqrt(np.mean(tail_rms_by_path ** 2)), 1e-300)),
        probe_times=tuple(sorted(probe_steps.values())),
        ecdf=ecdf,
        output_steady=_steady_from_samples(snap_y),
        rom_steady=_steady_from_samples(snap_rom),
        time_avg_output_mean=float(avg_per_path[0]),
        time_avg_output_meansq=float(avg_per_path[1]),
        time_avg_rom_mean=float(avg_per_path[2]),
        time_avg_rom_meansq=float(avg_per_path[3]),
        n_paths=survivors,
        diverged=sorted(diverged),
        dt=config.dt,
        horizon=config.horizon,
        base_seed=config.base_seed,
        burn_in_fraction=config.burn_in_fraction,
        tail_fraction=config.tail_fraction,
    )
    if samples is not None:
        report.sample_times = report.times
        report.sample_outputs = samples.y
        report.sample_rom_outputs = samples.rom_y
        report.sample_inputs = samples.u
    if csv_dir is not None:
        write_validation_outputs(report, csv_dir, figures=figures)
    return report


def write_validation_outputs(report: ValidationReport, out_dir, figures: bool = True):
    """Write the report's CSV files (and figures) into ``out_dir``.

    Files: errors.csv (t, mean_abs_err, var_abs_err), error_ci.csv,
    ecdf.csv (probe_time, abs_err, cum_prob), path_tails.csv and summary.csv;
    figures errors.png / ecdf.png / trajectories.png unless disabled.
    Returns the list of written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "errors.csv"
    formats.emit_csv(report, path)
    written.append(path)

    path = out_dir / "error_ci.csv"
    formats.write_csv(path, ["t", "ci_lower", "ci_upper"],
                      np.column_stack([report.times, report.ci_lower, report.ci_upper]))
    written.append(path)

    rows = []
    for pt in report.probe_times:
        samples = report.ecdf[pt]
        levels = np.arange(1, len(samples) + 1) / len(samples)
        rows.append(np.column_stack([np.full(len(samples), pt), samples, levels]))
    path = out_dir / "ecdf.csv"
    formats.write_csv(path, ["probe_time", "abs_err", "cum_prob"],
                      np.vstack(rows) if rows else np.zeros((0, 3)))
    written.append(path)

    path = out_dir / "path_tails.csv"
    formats.write_csv(path, ["path_index", "tail_mean_abs_err", "tail_rms_output"],
                      np.column_stack([np.arange(len(report.tail_mean_by_path)),
                                       report.tail_mean_by_path,
                                       report.tail_rms_by_path]))
    written.append(path)

    summary = {
        "n_paths": report.n_paths,
        "n_diverged": len(report.diverged),
        "dt": report.dt,
        "horizon": report.horizon,
        "base_seed": report.base_seed,
        "burn_in_fraction": report.burn_in_fraction,
        "tail_fraction": report.tail_fraction,
        "tail_mean_abs_err": report.tail_mean,
        "tail_rms_output": report.tail_rms_output,
        "tail_ratio": report.tail_ratio,
        "steady_output_mean": report.output_steady.mean,
        "steady_output_meansq": report.output_steady.meansq,
        "steady_output_se_mean": report.output_steady.se_mean,
        "steady_output_se_meansq": report.output_steady.se_meansq,
        "steady_rom_mean": report.rom_steady.mean,
        "steady_rom_meansq": report.rom_steady.meansq,
        "steady_rom_se_mean": report.rom_steady.se_mean,
        "steady_rom_se_meansq": report.rom_steady.se_meansq,
        "time_avg_output_mean": report.time_avg_output_mean,
        "time_avg_output_meansq": report.time_avg_output_meansq,
        "time_avg_rom_mean": report.time_avg_rom_mean,
        "time_avg_rom_meansq": report.time_avg_rom_meansq,
    }
    path = out_dir / "summary.csv"
    lines = ["key,value"]
    for key, value in summary.items():
        lines.append(f"{key},{formats._fmt(value)}")
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    if figures:
        from . import figures as fig_mod
        written.extend(fig_mod.render_validation_figures(report, out_dir))
    return written
