"""Construction of reduced-order models that match stochastic moments.

Three families are built here, all of generator order nu:

* ``exact``: Ar = S - Br L, Fr = J - Gr L with the time-varying output map
  C X_t (the moment process is co-simulated alongside the model); matches the
  full steady-state output almost surely.
* ``moment_mean``: Ar = S - Br L with fixed output map C Pi; matches the
  expectation of the moment. Construction requires the spectrum of
  I(x)(S - Br L) - (S - J^2)^T(x)I - J^T(x)Fr to lie in the open left half
  plane, so the identity is the unique attractive mean of the matching flow.
* ``mean_square``: output map Cr recovered from Cr (x) Cr ~ (C (x) C) K via a
  nearest Kronecker factorization, Ar = R S R^-1 - Br L R^-1 with Cr R = C Pi,
  and Fr extracted from the coupling equation (J = 0 regime); matches steady
  output mean and mean-square.

Free parameters Br and Gr select where the model drift/diffusion poles go;
:func:`place_poles` provides the standard choice (a subset of the spectrum of
the full drift matrix).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    CertificateFailed,
    ModelReductionWarning,
    NoSolution,
    NotPlaceable,
    SingularSystem,
)
from .moments import MeanMoment, SecondMoment, nearest_kronecker
from .sde import LinearSde, SignalGenerator, lyapunov_exponents

__all__ = [
    "KIND_EXACT",
    "KIND_MOMENT_MEAN",
    "KIND_MEAN_SQUARE",
    "Certificate",
    "ReducedModel",
    "RConstruction",
    "build_exact_rom",
    "build_mean_rom",
    "build_meansquare_rom",
    "construct_R",
    "normalize_coordinates",
    "place_poles",
    "dominant_poles",
]

KIND_EXACT = "exact"
KIND_MOMENT_MEAN = "moment_mean"
KIND_MEAN_SQUARE = "mean_square"

# Separability beyond this is reported as degraded-mode via a warning.
SEPARABILITY_WARN_LIMIT = 1e-8


@dataclass(frozen=True)
class Certificate:
    """Outcome of one named stability/consistency check on a model."""

    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ReducedModel:
    """A reduced-order stochastic model
    dx = (Ar x + Br u) dt + (Fr x + Gr u) dW with its build certificates.

    ``Cr`` is the fixed output row for the moment_mean and mean_square kinds
    and None for the exact kind, whose output is the co-simulated time-varying
    map y = (C X_t) @ (output_transform @ x). ``R`` is the coordinate matrix
    of the mean_square construction (None otherwise). ``diagnostics`` carries
    scalar build metrics (residuals, separability errors, factor asymmetries).
    """

    kind: str
    Ar: np.ndarray
    Br: np.ndarray
    Fr: np.ndarray
    Gr: np.ndarray
    Cr: np.ndarray | None
    output_transform: np.ndarray | None = None
    R: np.ndarray | None = None
    certificates: tuple[Certificate, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.Ar.shape[0]

    @property
    def time_varying_output(self) -> bool:
        return self.kind == KIND_EXACT

    def certificate(self, name: str) -> Certificate:
        for cert in self.certificates:
            if cert.name == name:
                return cert
        raise KeyError(name)


@dataclass(frozen=True)
class RConstruction:
    """Invertible R with Cr @ R = C Pi, and how it was obtained."""

    R: np.ndarray
    Rinv: np.ndarray
    method: str  # "rank_one_update" or "rotation_fallback"


def _fmt_eig(value: complex) -> str:
    return f"{value.real:.6g}{value.imag:+.6g}j"


def build_exact_rom(sys: LinearSde, gen: SignalGenerator, Br: np.ndarray,
                    Gr: np.ndarray, certificate_seed: int = 0,
                    certificate_horizon: float = 100.0,
                    certificate_dt: float = 1e-3) -> ReducedModel:
    """Build the exact-matching model Ar = S - Br L, Fr = J - Gr L.

    The output map is time varying (C X_t, co-simulated on the shared noise).
    A Lyapunov-exponent certificate of the homogeneous pair (Ar, Fr) is
    estimated and recorded; a failed certificate is not fatal because the
    matching property itself does not require model stability, but without it
    the model forgets its initial condition slowly or not at all.
    """
    nu = gen.nu
    Br = linalg._as_matrix(Br, "Br")
    Gr = linalg._as_matrix(Gr, "Gr")
    if Br.shape != (nu, 1) or Gr.shape != (nu, 1):
        raise ValueError(f"Br and Gr must be {nu}x1")
    Ar = gen.S - Br @ gen.L
    Fr = gen.J - Gr @ gen.L
    spec = lyapunov_exponents(Ar, Fr, seed=certificate_seed, dt=certificate_dt,
                              horizon=certificate_horizon)
    top = float(spec.exponents.max())
    cert = Certificate(
        name="rom_lyapunov_negative",
        passed=top < 0.0,
        detail=f"largest exponent {top:.4g} over horizon {spec.horizon:g}s "
               f"(converged={spec.converged})",
    )
    return ReducedModel(kind=KIND_EXACT, Ar=Ar, Br=Br, Fr=Fr, Gr=Gr, Cr=None,
                        certificates=(cert,),
                        diagnostics={"rom_max_lyapunov_exponent": top})


def build_mean_rom(sys: LinearSde, gen: SignalGenerator, mean: MeanMoment,
                   Br: np.ndarray, Fr: np.ndarray, Gr: np.ndarray) -> ReducedModel:
    """Build a moment-mean model: Ar = S - Br L with fixed output map C Pi.

    Fr and Gr are free. Construction is refused when the spectrum of
    I(x)(S - Br L) - (S - J^2)^T(x)I - J^T(x)Fr is not contained in the open
    left half plane, since only then is the identity the unique attractive
    mean of the matching flow.

    Raises
    ------
    SingularSystem
        If ``mean`` is unsolvable.
    CertificateFailed
        If the spectrum condition fails (names the offending eigenvalue).
    """
    if not mean.solvable or mean.Pi is None:
        raise SingularSystem("moment-mean model needs a solvable mean moment")
    nu = gen.nu
    Br = linalg._as_matrix(Br, "Br")
    Fr = linalg._as_matrix(Fr, "Fr")
    Gr = linalg._as_matrix(Gr, "Gr")
    if Br.shape != (nu, 1) or Gr.shape != (nu, 1) or Fr.shape != (nu, nu):
        raise ValueError(f"Br, Gr must be {nu}x1 and Fr {nu}x{nu}")
    Ar = gen.S - Br @ gen.L
    S_eff = gen.S - gen.J @ gen.J
    operator = (linalg.kron(np.eye(nu), Ar)
                - linalg.kron(S_eff.T, np.eye(nu))
                - linalg.kron(gen.J.T, Fr))
    report = linalg.spectrum(operator)
    worst = report.eigenvalues[0]
    cert = Certificate(
        name="mean_matching_spectrum",
        passed=report.is_hurwitz,
        detail=f"max eigenvalue {_fmt_eig(worst)} of the mean matching operator",
    )
    if not report.is_hurwitz:
        raise CertificateFailed(
            f"mean matching operator has eigenvalue {_fmt_eig(worst)} outside "
            f"the open left half plane",
            eigenvalue=complex(worst),
        )
    Cr = sys.C @ mean.Pi
    return ReducedModel(kind=KIND_MOMENT_MEAN, Ar=Ar, Br=Br, Fr=Fr, Gr=Gr, Cr=Cr,
                        certificates=(cert,),
                        diagnostics={"mean_moment_residual": mean.residual})


def construct_R(Cr: np.ndarray, CPi: np.ndarray) -> RConstruction:
    """Find an invertible R with Cr @ R = CPi.

    The primary construction is the rank-one update
    R = I + Cr^T (CPi - Cr) / (Cr Cr^T), whose determinant is
    (CPi Cr^T) / (Cr Cr^T); when the two rows are orthogonal to tolerance it
    falls back to a scaled rotation taking the Cr direction onto the CPi
    direction inside their common plane.

    Raises
    ------
    NoSolution
        If Cr is zero, or CPi is zero while Cr is not (no invertible R can
        send a nonzero row to zero).
    """
    Cr = linalg._as_matrix(Cr, "Cr")
    CPi = linalg._as_matrix(CPi, "CPi")
    if Cr.shape != CPi.shape or Cr.shape[0] != 1:
        raise ValueError("Cr and CPi must be rows of equal length")
    nu = Cr.shape[1]
    cr_norm = np.linalg.norm(Cr)
    cpi_norm = np.linalg.norm(CPi)
    if cr_norm == 0.0:
        raise NoSolution("output row Cr is zero; no output-consistent R exists")
    if cpi_norm == 0.0:
        raise NoSolution("CPi is zero while Cr is not; no invertible R exists")

    det = (CPi @ Cr.T).item() / (Cr @ Cr.T).item()
    if abs(det) > 1e-8 * (cpi_norm / cr_norm):
        R = np.eye(nu) + Cr.T @ (CPi - Cr) / (Cr @ Cr.T).item()
        method = "rank_one_update"
    else:
        # Rotation in the plane spanned by Cr^T and CPi^T, then a global
        # rescale: R = (|CPi| / |Cr|) O^T with O a = b for the unit directions.
        a = (Cr / cr_norm).T
        b = (CPi / cpi_norm).T
        cross = b @ a.T - a @ b.T
        O = np.eye(nu) + cross + cross @ cross / (1.0 + (a.T @ b).item())
        R = (cpi_norm / cr_norm) * O.T
        method = "rotation_fallback"
    Rinv = linalg.solve_dense(R, np.eye(nu))
    return RConstruction(R=R, Rinv=Rinv, method=method)


def _reconcile_square_factor(fac, what: str):
    """Collapse the two factors of a T (x) T factorization into one matrix.

    The two factors estimate the same matrix up to reciprocal scaling; the
    symmetrized estimate is sqrt(|T1| |T2|) * T1 / |T1| and the directional
    mismatch |T1/|T1| - T2/|T2|| is returned as a diagnostic. A negatively
    aligned pair means the rank-one direction is negative definite, so no
    real matrix T with T (x) T near Q exists.
    """
    t1 = np.linalg.norm(fac.T1)
    t2 = np.linalg.norm(fac.T2)
    if t1 == 0.0 or t2 == 0.0:
        return np.zeros_like(fac.T1), 0.0
    u1 = fac.T1 / t1
    u2 = fac.T2 / t2
    if float(np.sum(u1 * u2)) < 0.0:
        raise NoSolution(
            f"no real {what} factor: the dominant rank-one direction of the "
            f"rearranged matrix is negative"
        )
    asymmetry = float(np.linalg.norm(u1 - u2))
    return np.sqrt(t1 * t2) * u1, asymmetry


def build_meansquare_rom(sys: LinearSde, gen: SignalGenerator, mean: MeanMoment,
                         second: SecondMoment, Br: np.ndarray | None = None,
                         Gr: np.ndarray | None = None,
                         pole_targets=None, gr_scale: float | None = None) -> ReducedModel:
    """Build a mean-square model from the mean and second-moment solutions.

    Steps: (1) recover Cr from the nearest Kronecker factorization of
    (C (x) C) K; (2) construct R with Cr R = C Pi; (3) set
    Ar = R S R^-1 - Br L R^-1 and require it Hurwitz (fatal); (4) with Gr
    zero, extract Fr from the nearest Kronecker factorization of
    -I(x)Ar - Ar(x)I + I(x)S + S(x)I - Br L(x)R - R(x)Br L; with Gr given,
    iterate the same extraction against the Gr coupling terms and record the
    residual of the full equation; (5) require
    I(x)Ar + Ar(x)I + Fr(x)Fr Hurwitz (fatal).

    Exactly one of ``Br`` and ``pole_targets`` must be given; with
    ``pole_targets`` the drift poles of Ar are placed there (Br = R Br0 with
    Br0 from :func:`place_poles`). ``gr_scale`` sets Gr = gr_scale * Br once
    Br is known.

    Separability errors above 1e-8 are reported as warnings, not errors.

    Raises
    ------
    ValueError
        If the generator has J != 0 (the construction is a J = 0 result).
    SingularSystem
        If ``mean`` is unsolvable.
    NoSolution
        From :func:`construct_R`, or when no real Fr/Cr factor exists.
    CertificateFailed
        If either spectrum certificate fails.
    """
    if not np.all(gen.J == 0.0):
        raise ValueError("mean-square construction requires J = 0")
    if not mean.solvable or mean.Pi is None:
        raise SingularSystem("mean-square model needs a solvable mean moment")
    if (Br is None) == (pole_targets is None):
        raise ValueError("give exactly one of Br and pole_targets")
    nu = gen.nu
    eye = np.eye(nu)

    cc_k = linalg.kron(sys.C, sys.C) @ second.K  # 1 x nu^2
    fac_c = nearest_kronecker(cc_k, 1, nu, 1, nu)
    Cr, cr_asymmetry = _reconcile_square_factor(fac_c, "output")
    if np.linalg.norm(Cr) == 0.0:
        raise NoSolution("second moment of the output is zero; no output row exists")
    if fac_c.separability_error > SEPARABILITY_WARN_LIMIT:
        warnings.warn(
            f"output factorization separability error "
            f"{fac_c.separability_error:.3e}; the mean-square match is approximate",
            ModelReductionWarning, stacklevel=2,
        )

    CPi = sys.C @ mean.Pi
    rcon = construct_R(Cr, CPi)
    R, Rinv = rcon.R, rcon.Rinv

    if pole_targets is not None:
        Br = R @ place_poles(gen.S, gen.L, pole_targets)
    else:
        Br = linalg._as_matrix(Br, "Br")
        if Br.shape != (nu, 1):
            raise ValueError(f"Br must be {nu}x1")
    if gr_scale is not None:
        if Gr is not None:
            raise ValueError("give at most one of Gr and gr_scale")
        Gr = gr_scale * Br

    Ar = R @ gen.S @ Rinv - Br @ gen.L @ Rinv
    ar_report = linalg.spectrum(Ar)
    cert_ar = Certificate(
        name="drift_spectrum",
        passed=ar_report.is_hurwitz,
        detail=f"max eigenvalue {_fmt_eig(ar_report.eigenvalues[0])} of Ar",
    )
    if not ar_report.is_hurwitz:
        raise CertificateFailed(
            f"reduced drift Ar has eigenvalue {_fmt_eig(ar_report.eigenvalues[0])} "
            f"outside the open left half plane",
            eigenvalue=complex(ar_report.eigenvalues[0]),
        )

    BrL = Br @ gen.L
    rhs = (-linalg.kron(eye, Ar) - linalg.kron(Ar, eye)
           + linalg.kron(eye, gen.S) + linalg.kron(gen.S, eye)
           - linalg.kron(BrL, R) - linalg.kron(R, BrL))

    def _coupling_residual(Fr, Gr):
        GrL = Gr @ gen.L
        FrR = Fr @ R
        lhs = (linalg.kron(Fr, Fr) + linalg.kron(GrL, FrR)
               + linalg.kron(FrR, GrL) + linalg.kron(GrL, GrL))
        return float(np.linalg.norm(lhs - rhs))

    if Gr is None or np.all(np.asarray(Gr) == 0.0):
        Gr = np.zeros((nu, 1))
        fac_f = nearest_kronecker(rhs, nu, nu, nu, nu)
        Fr, fr_asymmetry = _reconcile_square_factor(fac_f, "diffusion")
        fr_separability = fac_f.separability_error
        fr_residual = _coupling_residual(Fr, Gr)
    else:
        Gr = linalg._as_matrix(Gr, "Gr")
        if Gr.shape != (nu, 1):
            raise ValueError(f"Gr must be {nu}x1")
        # Fixed-point sweep on Fr against the Gr coupling terms; the final
        # residual of the full equation is recorded either way.
        GrL = Gr @ gen.L
        Fr = np.zeros((nu, nu))
        fr_asymmetry = 0.0
        fr_separability = 0.0
        fr_residual = np.inf
        for _ in range(25):
            FrR = Fr @ R
            target = (rhs - linalg.kron(GrL, FrR) - linalg.kron(FrR, GrL)
                      - linalg.kron(GrL, GrL))
            fac_f = nearest_kronecker(target, nu, nu, nu, nu)
            Fr_new, fr_asymmetry = _reconcile_square_factor(fac_f, "diffusion")
            fr_separability = fac_f.separability_error
            new_residual = _coupling_residual(Fr_new, Gr)
            if new_residual >= fr_residual - 1e-14:
                if new_residual < fr_residual:
                    Fr, fr_residual = Fr_new, new_residual
                break
            Fr, fr_residual = Fr_new, new_residual
    if fr_separability > SEPARABILITY_WARN_LIMIT:
        warnings.warn(
            f"diffusion factorization separability error {fr_separability:.3e}; "
            f"the mean-square match is approximate",
            ModelReductionWarning, stacklevel=2,
        )

    ms_op = linalg.kron(eye, Ar) + linalg.kron(Ar, eye) + linalg.kron(Fr, Fr)
    ms_report = linalg.spectrum(ms_op)
    cert_ms = Certificate(
        name="mean_square_spectrum",
        passed=ms_report.is_hurwitz,
        detail=f"max eigenvalue {_fmt_eig(ms_report.eigenvalues[0])} of "
               f"I(x)Ar + Ar(x)I + Fr(x)Fr",
    )
    if not ms_report.is_hurwitz:
        raise CertificateFailed(
            f"second-moment operator has eigenvalue "
            f"{_fmt_eig(ms_report.eigenvalues[0])} outside the open left half plane",
            eigenvalue=complex(ms_report.eigenvalues[0]),
        )

    r_residual = float(np.linalg.norm(Cr @ R - CPi))
    cert_r = Certificate(
        name="output_consistency",
        passed=r_residual <= 1e-10 * (1.0 + np.linalg.norm(CPi)),
        detail=f"||Cr R - C Pi|| = {r_residual:.3e} ({rcon.method})",
    )
    diagnostics = {
        "cr_separability_error": float(fac_c.separability_error),
        "cr_factor_asymmetry": float(cr_asymmetry),
        "fr_separability_error": float(fr_separability),
        "fr_factor_asymmetry": float(fr_asymmetry),
        "fr_equation_residual": float(fr_residual),
        "r_equation_residual": r_residual,
        "mean_moment_residual": mean.residual,
        "second_moment_residual": second.residual,
    }
    return ReducedModel(kind=KIND_MEAN_SQUARE, Ar=Ar, Br=Br, Fr=Fr, Gr=Gr, Cr=Cr,
                        R=R, certificates=(cert_ar, cert_ms, cert_r),
                        diagnostics=diagnostics)


def normalize_coordinates(model: ReducedModel, Rt: np.ndarray) -> ReducedModel:
    """Rewrite a model in the coordinates z = Rt^-1 x (constant Rt).

    The state matrices transform by similarity, the input column by Rt^-1 and
    the output map composes with Rt, so the simulated input-output behavior
    is preserved path-wise. Certificates are inherited (spectra are
    similarity invariant).

    Raises
    ------
    SingularSystem
        If Rt is singular to tolerance.
    """
    Rt = linalg._as_matrix(Rt, "Rt")
    nu = model.order
    if Rt.shape != (nu, nu):
        raise ValueError(f"Rt must be {nu}x{nu}")
    Rtinv = linalg.solve_dense(Rt, np.eye(nu))
    if model.Cr is not None:
        Cr = model.Cr @ Rt
        transform = None
    else:
        Cr = None
        base = model.output_transform if model.output_transform is not None else np.eye(nu)
        transform = base @ Rt
    return ReducedModel(
        kind=model.kind,
        Ar=Rtinv @ model.Ar @ Rt,
        Br=Rtinv @ model.Br,
        Fr=Rtinv @ model.Fr @ Rt,
        Gr=Rtinv @ model.Gr,
        Cr=Cr,
        output_transform=transform,
        R=model.R,
        certificates=model.certificates,
        diagnostics=dict(model.diagnostics),
    )


def place_poles(S: np.ndarray, L: np.ndarray, targets) -> np.ndarray:
    """Compute Br such that S - Br L has the given eigenvalues.

    Placement runs in controllable form on the transposed pair (S^T, L^T)
    (Ackermann's formula), so the targets must be closed under conjugation
    and number exactly the generator order.

    Raises
    ------
    NotPlaceable
        If (L, S) is not observable (carries the unobservable subspace
        dimension), or the placement is too ill conditioned to hit the
        targets to 1e-8.
    """
    S = linalg._as_matrix(S, "S")
    L = linalg._as_matrix(L, "L")
    nu = S.shape[0]
    targets = np.atleast_1d(np.asarray(targets, dtype=complex))
    if targets.shape != (nu,):
        raise ValueError(f"need exactly {nu} target eigenvalues, got {targets.shape}")
    sorted_t = np.sort_complex(targets)
    if not np.allclose(sorted_t, np.sort_complex(np.conj(targets)), atol=1e-12):
        raise ValueError("target eigenvalues must be closed under conjugation")

    At = S.T
    Bt = L.T
    ctrb = np.hstack([np.linalg.matrix_power(At, k) @ Bt for k in range(nu)])
    rank = int(np.linalg.matrix_rank(ctrb, tol=1e-10 * max(1.0, np.linalg.norm(ctrb))))
    if rank < nu:
        raise NotPlaceable(
            f"(L, S) is not observable: unobservable subspace has dimension {nu - rank}",
            unobservable_dim=nu - rank,
        )
    coeffs = np.poly(targets)
    if np.max(np.abs(coeffs.imag)) > 1e-9 * max(1.0, np.max(np.abs(coeffs))):
        raise ValueError("target set is not conjugate-closed (complex polynomial)")
    coeffs = coeffs.real
    p_at = np.zeros((nu, nu))
    for c in coeffs:  # Horner on the matrix argument
        p_at = p_at @ At + c * np.eye(nu)
    last_row = np.zeros((1, nu))
    last_row[0, -1] = 1.0
    k_row = last_row @ linalg.solve_dense(ctrb, p_at)
    Br = k_row.T

    achieved = np.sort_complex(np.linalg.eigvals(S - Br @ L))
    if not np.allclose(achieved, sorted_t, atol=1e-8 * max(1.0, np.max(np.abs(sorted_t)))):
        raise NotPlaceable(
            "placement too ill conditioned: achieved spectrum "
            f"{achieved} differs from targets {sorted_t}"
        )
    return Br


def dominant_poles(A: np.ndarray, count: int) -> np.ndarray:
    """Pick the ``count`` eigenvalues of A with the largest real parts.

    Conjugate pairs stay together: a pair is taken only when two slots
    remain, otherwise it is skipped in favor of the next real eigenvalue,
    so the result is always closed under conjugation.
    """
    eigs = np.linalg.eigvals(linalg._as_matrix(A, "A"))
    if count > len(eigs) or count < 1:
        raise ValueError(f"cannot pick {count} of {len(eigs)} eigenvalues")
    order = np.lexsort((-eigs.imag, np.abs(eigs.imag), -eigs.real))
    eigs = eigs[order]  # conjugate partners adjacent, +imag first
    chosen: list[complex] = []
    i = 0
    while len(chosen) < count and i < len(eigs):
        lam = eigs[i]
        if abs(lam.imag) <= 1e-12 * max(1.0, abs(lam)):
            chosen.append(complex(lam.real))
            i += 1
        elif count - len(chosen) >= 2:
            chosen.extend([complex(lam), complex(np.conj(lam))])
            i += 2
        else:
            i += 2
    if len(chosen) < count:
        raise ValueError(
            f"no conjugate-closed subset of size {count}; matrix has too few "
            f"real eigenvalues"
        )
    return np.asarray(chosen)
