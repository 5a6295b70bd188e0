"""Stochastic moment objects of a linear system driven by a signal generator.

Three objects are computed here:

* the exact moment process X_t, advanced online path-by-path through the
  matrix stochastic differential equation
  dX = (A X - X (S - J^2) - F X J + B L - G L J) dt + (F X - X J + G L) dW;
* its expectation Pi, the offline solution of the generalized Sylvester
  equation A Pi - Pi (S - J^2) - F Pi J + B L - G L J = 0;
* the steady second-moment map K relating vec E[x x^T] to vec(w w^T) through
  the augmented Sylvester equation Aa K + Bb = K Ss (J = 0 regime), with
  Aa = I(x)A + A(x)I + F(x)F, Ss = I(x)S + S(x)I and
  Bb = BL(x)Pi + Pi(x)BL + GL(x)FPi + FPi(x)GL + GL(x)GL.

Both offline solves go through dense Kronecker vectorization (operator sizes
n*nu and n^2*nu^2), which is the intended desk-scale regime of this package;
residuals are always computed from the matrix equation and reported.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ModelReductionWarning, SingularSystem
from .sde import LinearSde, NoiseCoupling, SignalGenerator

__all__ = [
    "MomentProcess",
    "MeanMoment",
    "SecondMoment",
    "KroneckerFactorization",
    "moment_sde_step",
    "moment_sde_step_two_noise",
    "solve_mean_moment",
    "solve_second_moment",
    "second_moment_ode_step",
    "nearest_kronecker",
]


@dataclass(frozen=True)
class MomentProcess:
    """Recorded history of the exact moment process along one path.

    ``X`` has shape (n_steps + 1, n, nu). The process is normally streamed
    (one matrix live at a time inside the simulator); storing the history is
    an opt-in debug feature.
    """

    X: np.ndarray
    dt: float
    coupling: NoiseCoupling


@dataclass(frozen=True)
class MeanMoment:
    """Solution Pi of the generalized Sylvester equation for E[X_t].

    ``solvable`` is False (and ``Pi`` is None) when the vectorized operator
    I(x)A - (S - J^2)^T(x)I - J^T(x)F is singular to tolerance. ``attractive``
    reports whether that operator is Hurwitz, i.e. whether the mean flow
    d Pi = (A Pi - Pi (S - J^2) - F Pi J + B L - G L J) dt is attractive.
    """

    Pi: np.ndarray | None
    residual: float
    solvable: bool
    attractive: bool


@dataclass(frozen=True)
class SecondMoment:
    """Solution K of the augmented Sylvester equation Aa K + Bb = K Ss.

    The coefficient matrices are retained for audit: ``A_aug`` (n^2 x n^2),
    ``S_aug`` (nu^2 x nu^2) and ``B_aug`` (n^2 x nu^2).
    """

    K: np.ndarray
    residual: float
    A_aug: np.ndarray
    S_aug: np.ndarray
    B_aug: np.ndarray


def _moment_terms(sys: LinearSde, gen: SignalGenerator) -> dict:
    """Constant coefficient blocks of the moment update law."""
    S_eff = gen.S - gen.J @ gen.J
    BL = sys.B @ gen.L
    GL = sys.G @ gen.L
    return {
        "S_eff": S_eff,
        "BL": BL,
        "GL": GL,
        "BL_minus_GLJ": BL - GL @ gen.J,
    }


def _moment_drift_diffusion(X, sys: LinearSde, gen: SignalGenerator, terms: dict):
    """Shared-noise drift and diffusion of the moment process.

    Works on a single (n, nu) matrix or on a batch (..., n, nu).
    """
    drift = sys.A @ X - X @ terms["S_eff"] - sys.F @ (X @ gen.J) + terms["BL_minus_GLJ"]
    diffusion = sys.F @ X - X @ gen.J + terms["GL"]
    return drift, diffusion


def _moment_drift_diffusion_two_noise(X, sys: LinearSde, gen: SignalGenerator, terms: dict):
    """Two-noise drift plus the two diffusion factors (system, generator)."""
    drift = sys.A @ X - X @ terms["S_eff"] + terms["BL"]
    diff_x = sys.F @ X + terms["GL"]
    diff_s = -(X @ gen.J)
    return drift, diff_x, diff_s


def moment_sde_step(X: np.ndarray, sys: LinearSde, gen: SignalGenerator,
                    dt: float, dW: float) -> np.ndarray:
    """One Euler-Maruyama step of the moment process on a shared noise.

    Advances dX = (A X - X (S - J^2) - F X J + B L - G L J) dt
    + (F X - X J + G L) dW with the same increment that drives system and
    generator.
    """
    X = np.asarray(X, dtype=float)
    terms = _moment_terms(sys, gen)
    drift, diffusion = _moment_drift_diffusion(X, sys, gen, terms)
    return X + drift * dt + diffusion * dW


def moment_sde_step_two_noise(X: np.ndarray, sys: LinearSde, gen: SignalGenerator,
                              dt: float, dWx: float, dWs: float) -> np.ndarray:
    """One step of the moment process under two uncorrelated noises.

    Advances dX = (A X - X (S - J^2) + B L) dt + (F X + G L) dWx - X J dWs,
    where dWx drives the system and dWs the generator.
    """
    X = np.asarray(X, dtype=float)
    terms = _moment_terms(sys, gen)
    drift, diff_x, diff_s = _moment_drift_diffusion_two_noise(X, sys, gen, terms)
    return X + drift * dt + diff_x * dWx + diff_s * dWs


def solve_mean_moment(sys: LinearSde, gen: SignalGenerator) -> MeanMoment:
    """Solve A Pi - Pi (S - J^2) - F Pi J + B L - G L J = 0 for Pi.

    The equation is vectorized to
    (I(x)A - (S - J^2)^T(x)I - J^T(x)F) vec Pi = -vec(B L - G L J)
    and solved densely. When that operator is singular to tolerance the
    result has ``solvable=False`` and no Pi; downstream model builders raise
    :class:`~stomor.errors.SingularSystem` on such input.
    """
    n, nu = sys.n, gen.nu
    S_eff = gen.S - gen.J @ gen.J
    op = (linalg.kron(np.eye(nu), sys.A)
          - linalg.kron(S_eff.T, np.eye(n))
          - linalg.kron(gen.J.T, sys.F))
    rhs = sys.B @ gen.L - sys.G @ gen.L @ gen.J
    attractive = linalg.spectrum(op).is_hurwitz
    try:
        x = linalg.solve_dense(op, -linalg.vec(rhs))
    except SingularSystem:
        return MeanMoment(Pi=None, residual=math.inf, solvable=False, attractive=attractive)
    Pi = linalg.unvec(x, n, nu)
    residual = float(np.linalg.norm(sys.A @ Pi - Pi @ S_eff - sys.F @ Pi @ gen.J + rhs))
    return MeanMoment(Pi=Pi, residual=residual, solvable=True, attractive=attractive)


def _warn_generator_spectrum(S: np.ndarray) -> None:
    # Steady second moments assume a neutral generator: spectrum on the
    # imaginary axis with simple eigenvalues. Deviations degrade the result
    # but do not invalidate the solve, hence warnings.
    eigs = linalg.spectrum(S).eigenvalues
    scale = 1.0 + np.max(np.abs(eigs))
    if np.any(np.abs(eigs.real) > 1e-9 * scale):
        warnings.warn(
            "generator drift spectrum is not purely imaginary; the steady "
            "second moment may not exist",
            ModelReductionWarning, stacklevel=3,
        )
    for i in range(len(eigs)):
        if np.any(np.abs(eigs[i + 1:] - eigs[i]) < 1e-9 * scale):
            warnings.warn(
                "generator drift spectrum has repeated eigenvalues; the "
                "steady second moment may be fragile",
                ModelReductionWarning, stacklevel=3,
            )
            break


def solve_second_moment(sys: LinearSde, gen: SignalGenerator,
                        mean: MeanMoment) -> SecondMoment:
    """Solve the augmented Sylvester equation Aa K + Bb = K Ss for K.

    Valid in the noise-free generator regime (J = 0). The solve is the dense
    Kronecker vectorization (I(x)Aa - Ss^T(x)I) vec K = -vec Bb; the matrix
    residual ||Aa K + Bb - K Ss|| is reported. A non-Hurwitz Aa or an
    irregular generator spectrum triggers a warning, not an error.

    Raises
    ------
    SingularSystem
        If ``mean`` is unsolvable or the combined operator is singular.
    ValueError
        If the generator has J != 0.
    """
    if not np.all(gen.J == 0.0):
        raise ValueError("second-moment solve requires a noise-free generator (J = 0)")
    if not mean.solvable or mean.Pi is None:
        raise SingularSystem("second-moment solve needs a solvable mean moment")
    n, nu = sys.n, gen.nu
    eye_n, eye_nu = np.eye(n), np.eye(nu)
    A_aug = linalg.kron(eye_n, sys.A) + linalg.kron(sys.A, eye_n) + linalg.kron(sys.F, sys.F)
    S_aug = linalg.kron(eye_nu, gen.S) + linalg.kron(gen.S, eye_nu)
    BL = sys.B @ gen.L
    GL = sys.G @ gen.L
    FPi = sys.F @ mean.Pi
    B_aug = (linalg.kron(BL, mean.Pi) + linalg.kron(mean.Pi, BL)
             + linalg.kron(GL, FPi) + linalg.kron(FPi, GL)
             + linalg.kron(GL, GL))
    if not linalg.spectrum(A_aug).is_hurwitz:
        warnings.warn(
            "augmented drift operator is not Hurwitz; K solves the equation "
            "but is not a steady state",
            ModelReductionWarning, stacklevel=2,
        )
    _warn_generator_spectrum(gen.S)
    op = linalg.kron(np.eye(nu * nu), A_aug) - linalg.kron(S_aug.T, np.eye(n * n))
    x = linalg.solve_dense(op, -linalg.vec(B_aug))
    K = linalg.unvec(x, n * n, nu * nu)
    residual = float(np.linalg.norm(A_aug @ K + B_aug - K @ S_aug))
    return SecondMoment(K=K, residual=residual, A_aug=A_aug, S_aug=S_aug, B_aug=B_aug)


def second_moment_ode_step(M: np.ndarray, m: np.ndarray, u: float,
                           sys: LinearSde, dt: float) -> np.ndarray:
    """One explicit Euler step of the second-moment matrix flow.

    Advances dM/dt = A M + M A^T + F M F^T + B u m^T + m (B u)^T
    + F m (G u)^T + G u (F m)^T + (G u)(G u)^T, where m is the current state
    mean and u the (deterministic) input value. The increment is symmetrized
    so M stays symmetric despite roundoff.
    """
    M = np.asarray(M, dtype=float)
    m = np.asarray(m, dtype=float).reshape(-1, 1)
    Bu = sys.B * u
    Gu = sys.G * u
    Fm = sys.F @ m
    rate = (sys.A @ M + M @ sys.A.T + sys.F @ M @ sys.F.T
            + Bu @ m.T + m @ Bu.T + Fm @ Gu.T + Gu @ Fm.T + Gu @ Gu.T)
    return M + 0.5 * dt * (rate + rate.T)


@dataclass(frozen=True)
class KroneckerFactorization:
    """Best rank-one Kronecker factorization Q ~ T1 (x) T2.

    ``separability_error`` is the Frobenius norm of the unexplained part,
    i.e. the root sum of squares of the trailing singular values of the
    rearranged matrix; it equals ||Q - T1 (x) T2||. T1 is sign-normalized so
    its largest-magnitude entry is positive (T2 carries the matching sign).
    """

    T1: np.ndarray
    T2: np.ndarray
    separability_error: float
    singular_values: np.ndarray


def _rearrange(Q: np.ndarray, r1: int, c1: int, r2: int, c2: int) -> np.ndarray:
    # Each (i, j) block of Q, vectorized, becomes a row; blocks are taken in
    # column-major order, so Q = T1 (x) T2 maps to vec(T1) vec(T2)^T.
    return Q.reshape(r1, r2, c1, c2).transpose(2, 0, 3, 1).reshape(r1 * c1, r2 * c2)


def nearest_kronecker(Q: np.ndarray, r1: int, c1: int, r2: int, c2: int) -> KroneckerFactorization:
    """Nearest Kronecker product of ``Q`` with factor shapes (r1, c1), (r2, c2).

    Rearranges Q block-wise, truncates its SVD to rank one and splits the
    leading singular pair evenly between the two factors:
    vec T1 = sqrt(s1) u1 and vec T2 = sqrt(s1) v1. An all-zero Q yields zero
    factors with zero error.
    """
    Q = linalg._as_matrix(Q, "Q")
    if Q.shape != (r1 * r2, c1 * c2):
        raise ValueError(f"Q has shape {Q.shape}, expected {(r1 * r2, c1 * c2)}")
    rearranged = _rearrange(Q, r1, c1, r2, c2)
    u, s, v = linalg.svd(rearranged)
    if s[0] == 0.0:
        return KroneckerFactorization(
            T1=np.zeros((r1, c1)), T2=np.zeros((r2, c2)),
            separability_error=0.0, singular_values=s.copy(),
        )
    root = np.sqrt(s[0])
    T1 = linalg.unvec(root * u[:, 0], r1, c1)
    T2 = linalg.unvec(root * v[:, 0], r2, c2)
    flat = np.abs(T1).argmax()
    if T1.flat[flat] < 0.0:
        T1 = -T1
        T2 = -T2
    separability = float(np.sqrt(np.sum(s[1:] ** 2)))
    return KroneckerFactorization(T1=T1, T2=T2, separability_error=separability,
                                  singular_values=s.copy())
