"""Co-simulation of system, generator, reduced models and the moment process.

One Euler-Maruyama loop advances every participant on the SAME Brownian
increment stream (shared coupling), which is what makes reduced-model output
errors meaningful path by path. With independent coupling the system (and
the moment process' system factor) uses noise stream 0 while the generator
and the generator-tracking reduced models use stream 1.

Paths are batched: states are stored column-per-path and all updates are
whole-batch matrix operations, so simulating an ensemble costs little more
than simulating one path. Per-path increments come from counter-derived
streams (see :mod:`stomor.sde`), so any subset of paths reproduces exactly
the same trajectories regardless of batching or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError
from .moments import (
    MomentProcess,
    _moment_drift_diffusion,
    _moment_drift_diffusion_two_noise,
    _moment_terms,
    solve_mean_moment,
)
from .rom import ReducedModel
from .sde import (
    STREAM_GENERATOR,
    STREAM_SYSTEM,
    LinearSde,
    NoiseCoupling,
    SignalGenerator,
    Trajectory,
    _stream_generator,
)

__all__ = [
    "CoSimulationResult",
    "StepObserver",
    "co_simulate",
    "simulate_interconnection",
]

DIVERGENCE_LIMIT = 1e12


class StepObserver:
    """Streaming hook receiving per-step batch data during co-simulation.

    Subclasses override what they need. Arrays passed to :meth:`step` are
    views into live buffers and must not be mutated or stored without
    copying.
    """

    def start(self, times: np.ndarray, path_indices: np.ndarray, n_roms: int) -> None:
        pass

    def step(self, k: int, t: float, u: np.ndarray, y: np.ndarray,
             rom_outputs: list, alive: np.ndarray) -> None:
        pass

    def finish(self, diverged_at: np.ndarray) -> None:
        pass


@dataclass
class CoSimulationResult:
    """Batched co-simulation output.

    ``diverged_at[p]`` is the first step index at which path p tripped the
    divergence guard, or -1. Recorded samples of a diverged path are NaN from
    that step on. Optional recordings are None unless requested.
    """

    times: np.ndarray
    path_indices: np.ndarray
    diverged_at: np.ndarray
    dt: float
    coupling: NoiseCoupling
    outputs: np.ndarray | None = None
    rom_outputs: list | None = None
    inputs: np.ndarray | None = None
    states: np.ndarray | None = None
    omega_states: np.ndarray | None = None
    rom_states: list | None = None
    moment_history: np.ndarray | None = None

    def moment_process(self, position: int = 0) -> MomentProcess:
        """Recorded moment history of one path (requires record_moment)."""
        if self.moment_history is None:
            raise ValueError("run co_simulate with record_moment=True first")
        return MomentProcess(X=self.moment_history[position], dt=self.dt,
                             coupling=self.coupling)


def _init_columns(value, dim: int, n_paths: int, default=None) -> np.ndarray:
    if value is None:
        if default is None:
            return np.zeros((dim, n_paths))
        value = default
    arr = np.asarray(value, dtype=float)
    if arr.shape == (dim,) or arr.shape == (dim, 1):
        return np.broadcast_to(arr.reshape(dim, 1), (dim, n_paths)).copy()
    if arr.shape == (dim, n_paths):
        return arr.copy()
    raise ValueError(f"initial condition must have shape ({dim},), ({dim}, 1) "
                     f"or ({dim}, {n_paths}), got {arr.shape}")


def co_simulate(sys: LinearSde, gen: SignalGenerator, roms=(), *,
                seed: int = 0, path_indices=(0,), dt: float = 1e-3,
                n_steps: int = 10_000,
                coupling: NoiseCoupling = NoiseCoupling.SHARED,
                x0=None, omega0=None, rom_x0=None, moment_x0=None,
                input_override=None, observers=(),
                record_outputs: bool = True, record_states: bool = False,
                record_moment: bool = False,
                divergence_limit: float = DIVERGENCE_LIMIT,
                chunk_steps: int = 2048) -> CoSimulationResult:
    """Advance generator, system, reduced models and moment process together.

    Parameters
    ----------
    roms : sequence of ReducedModel
        Models co-advanced on the same increments. Exact-kind models share a
        single co-simulated moment process; its initial value is ``moment_x0``
        (zeros by default; pass the mean moment for a steady start).
    path_indices : sequence of int
        Monte Carlo path identities. Increments depend only on
        ``(seed, path_index)``, never on batch composition.
    input_override : callable or None
        When given, ``u(t) = input_override(t)`` replaces the generator
        output (the generator state is then left untouched); used for
        off-design inputs such as square waves.
    observers : sequence of StepObserver
        Streaming statistics hooks (used by the validation harness to avoid
        storing full ensembles).

    Notes
    -----
    A path whose state magnitude exceeds ``divergence_limit`` (or goes
    non-finite) is frozen and reported in ``diverged_at``; remaining paths
    are unaffected.
    """
    coupling = NoiseCoupling.coerce(coupling)
    roms = tuple(roms)
    if isinstance(path_indices, (int, np.integer)):
        path_indices = (int(path_indices),)
    path_indices = np.asarray(list(path_indices), dtype=int)
    n_paths = len(path_indices)
    n, nu = sys.n, gen.nu
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    for model in roms:
        if model.time_varying_output and model.order != nu:
            raise ValueError("an exact-kind model must have the generator order")

    need_moment = record_moment or any(m.time_varying_output for m in roms)
    independent = coupling is NoiseCoupling.INDEPENDENT

    x = _init_columns(x0, n, n_paths)
    om = _init_columns(omega0, nu, n_paths, default=gen.omega0)
    if rom_x0 is None:
        rom_x0 = [None] * len(roms)
    elif len(roms) == 1 and not isinstance(rom_x0, (list, tuple)):
        rom_x0 = [rom_x0]
    rom_state = [_init_columns(rx0, m.order, n_paths)
                 for m, rx0 in zip(roms, rom_x0)]
    X = None
    terms = None
    if need_moment:
        terms = _moment_terms(sys, gen)
        if moment_x0 is None:
            X = np.zeros((n_paths, n, nu))
        else:
            m0 = np.asarray(moment_x0, dtype=float)
            if m0.shape == (n, nu):
                X = np.broadcast_to(m0, (n_paths, n, nu)).copy()
            elif m0.shape == (n_paths, n, nu):
                X = m0.copy()
            else:
                raise ValueError(f"moment_x0 must be ({n}, {nu}) or batched")

    times = np.arange(n_steps + 1) * dt
    gens_x = [_stream_generator(seed, p, STREAM_SYSTEM) for p in path_indices]
    gens_s = ([_stream_generator(seed, p, STREAM_GENERATOR) for p in path_indices]
              if independent else None)

    rec_y = np.empty((n_paths, n_steps + 1)) if record_outputs else None
    rec_u = np.empty((n_paths, n_steps + 1)) if record_outputs else None
    rec_rom = ([np.empty((n_paths, n_steps + 1)) for _ in roms]
               if record_outputs else None)
    rec_x = np.empty((n_paths, n_steps + 1, n)) if record_states else None
    rec_om = np.empty((n_paths, n_steps + 1, nu)) if record_states else None
    rec_rs = ([np.empty((n_paths, n_steps + 1, m.order)) for m in roms]
              if record_states else None)
    rec_X = np.empty((n_paths, n_steps + 1, n, nu)) if record_moment else None

    diverged_at = np.full(n_paths, -1, dtype=int)
    alive = np.ones(n_paths, dtype=bool)
    sqdt = np.sqrt(dt)
    for obs in observers:
        obs.start(times, path_indices, len(roms))

    ones = np.ones(n_paths)

    def current_u(t):
        if input_override is not None:
            return float(input_override(t)) * ones
        return (gen.L @ om)[0]

    def rom_output(i, model):
        st = rom_state[i]
        if model.time_varying_output:
            z = st if model.output_transform is None else model.output_transform @ st
            cx = (sys.C @ X)[:, 0, :]  # (P, nu)
            return np.einsum("pj,jp->p", cx, z)
        return (model.Cr @ st)[0]

    def emit(k, t, u):
        y = (sys.C @ x)[0]
        rom_ys = [rom_output(i, m) for i, m in enumerate(roms)]
        if record_outputs:
            rec_y[:, k] = y
            rec_u[:, k] = u
            for i, ry in enumerate(rom_ys):
                rec_rom[i][:, k] = ry
        if record_states:
            rec_x[:, k, :] = x.T
            rec_om[:, k, :] = om.T
            for i, st in enumerate(rom_state):
                rec_rs[i][:, k, :] = st.T
        if record_moment:
            rec_X[:, k] = X
        for obs in observers:
            obs.step(k, t, u, y, rom_ys, alive)

    # chunk the increment buffers so memory stays modest for huge ensembles
    steps_per_chunk = max(1, min(int(chunk_steps), 4_000_000 // max(n_paths, 1)))
    k = 0
    while k < n_steps:
        span = min(steps_per_chunk, n_steps - k)
        inc_x = np.empty((n_paths, span))
        for i, g in enumerate(gens_x):
            inc_x[i] = g.standard_normal(span)
        inc_x *= sqdt
        if independent:
            inc_s = np.empty((n_paths, span))
            for i, g in enumerate(gens_s):
                inc_s[i] = g.standard_normal(span)
            inc_s *= sqdt
        for j in range(span):
            t = times[k]
            u = current_u(t)
            emit(k, t, u)
            dWx = inc_x[:, j]
            dWs = inc_s[:, j] if independent else dWx
            if input_override is None:
                om_new = om + (gen.S @ om) * dt + (gen.J @ om) * dWs
            else:
                om_new = om
            x = x + (sys.A @ x + sys.B * u) * dt + (sys.F @ x + sys.G * u) * dWx
            if need_moment:
                if independent:
                    dr, dx_, ds_ = _moment_drift_diffusion_two_noise(X, sys, gen, terms)
                    X = X + dr * dt + dx_ * dWx[:, None, None] + ds_ * dWs[:, None, None]
                else:
                    dr, df = _moment_drift_diffusion(X, sys, gen, terms)
                    X = X + dr * dt + df * dWx[:, None, None]
            for i, m in enumerate(roms):
                st = rom_state[i]
                dW_rom = dWs  # generator-side object: shared noise or stream 1
                rom_state[i] = (st + (m.Ar @ st + m.Br * u) * dt
                                + (m.Fr @ st + m.Gr * u) * dW_rom)
            om = om_new
            k += 1

            # divergence guard: freeze exploding or non-finite paths
            mx = np.abs(x).max(axis=0)
            mx = np.maximum(mx, np.abs(om).max(axis=0))
            for st in rom_state:
                mx = np.maximum(mx, np.abs(st).max(axis=0))
            if need_moment:
                mx = np.maximum(mx, np.abs(X).max(axis=(1, 2)))
            bad = ~(mx <= divergence_limit)
            if bad.any():
                newly = alive & bad
                if newly.any():
                    diverged_at[newly] = k
                    alive &= ~newly
                    x[:, newly] = 0.0
                    om[:, newly] = 0.0
                    for st in rom_state:
                        st[:, newly] = 0.0
                    if need_moment:
                        X[newly] = 0.0

    emit(n_steps, times[n_steps], current_u(times[n_steps]))
    for obs in observers:
        obs.finish(diverged_at)

    # blank recorded samples of diverged paths from their divergence step on
    if record_outputs or record_states or record_moment:
        for p in np.flatnonzero(diverged_at >= 0):
            start = diverged_at[p]
            for arr in (rec_y, rec_u, rec_x, rec_om, rec_X):
                if arr is not None:
                    arr[p, start:] = np.nan
            for group in (rec_rom, rec_rs):
                if group is not None:
                    for arr in group:
                        arr[p, start:] = np.nan

    return CoSimulationResult(
        times=times, path_indices=path_indices, diverged_at=diverged_at,
        dt=float(dt), coupling=coupling,
        outputs=rec_y, rom_outputs=rec_rom, inputs=rec_u,
        states=rec_x, omega_states=rec_om, rom_states=rec_rs,
        moment_history=rec_X,
    )


def _steady_moment_start(sys: LinearSde, gen: SignalGenerator):
    mean = solve_mean_moment(sys, gen)
    return mean.Pi if mean.solvable else None


def simulate_interconnection(sys: LinearSde, gen: SignalGenerator,
                             rom: ReducedModel | None = None,
                             coupling: NoiseCoupling = NoiseCoupling.SHARED, *,
                             seed: int = 0, path_index: int = 0, dt: float = 1e-3,
                             horizon: float = 10.0, x0=None, omega0=None,
                             rom_x0=None, input_override=None,
                             record_states: bool = True):
    """Simulate one path of the system driven by the generator.

    Returns the triple ``(system_trajectory, model_trajectory, input_trajectory)``
    where the model trajectory is None when no reduced model is given. All
    participants advance on the same increments (shared coupling); for an
    exact-kind model the moment process is co-advanced and started at the
    mean moment when it exists.

    Raises
    ------
    DivergenceError
        Naming the step at which the path blew up.
    """
    n_steps = int(round(horizon / dt))
    moment_x0 = None
    if rom is not None and rom.time_varying_output:
        moment_x0 = _steady_moment_start(sys, gen)
    res = co_simulate(
        sys, gen, (rom,) if rom is not None else (),
        seed=seed, path_indices=(path_index,), dt=dt, n_steps=n_steps,
        coupling=coupling, x0=x0, omega0=omega0,
        rom_x0=[rom_x0] if rom is not None else None, moment_x0=moment_x0,
        input_override=input_override,
        record_outputs=True, record_states=record_states,
    )
    if res.diverged_at[0] >= 0:
        raise DivergenceError(
            f"path {path_index} diverged at step {res.diverged_at[0]} "
            f"(t = {res.diverged_at[0] * dt:.6g})",
            step_index=int(res.diverged_at[0]),
        )

    def traj(outputs, states):
        return Trajectory(times=res.times.copy(), states=states, outputs=outputs)

    empty = np.zeros((n_steps + 1, 0))
    sys_traj = traj(res.outputs[0], res.states[0] if record_states else empty)
    in_traj = traj(res.inputs[0], res.omega_states[0] if record_states else empty)
    rom_traj = None
    if rom is not None:
        rom_traj = traj(res.rom_outputs[0][0],
                        res.rom_states[0][0] if record_states else empty)
    return sys_traj, rom_traj, in_traj
