"""File formats: matrices, system/generator/model files and CSV emission.

Two matrix encodings are read: a structured-text format (a ``rows cols``
line followed by row-major whitespace-separated reals, ``#`` comments) and
Matrix Market import (coordinate and array formats, real field only).
System, generator and model files are structured text with ``key value``
header lines and ``[name]`` matrix sections, so they parse with no
dependencies in any language. All numeric output uses 17 significant digits,
which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import MatrixFormatError
from .rom import Certificate, ReducedModel
from .sde import LinearSde, SignalGenerator

__all__ = [
    "load_matrix",
    "save_matrix",
    "load_sections",
    "save_sections",
    "load_system",
    "save_system",
    "load_generator",
    "save_generator",
    "load_model",
    "save_model",
    "write_csv",
    "read_csv",
    "emit_csv",
]

FLOAT_FORMAT = "%.17g"


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % float(value)


def _float(token: str, line_no: int, path) -> float:
    try:
        return float(token)
    except ValueError:
        raise MatrixFormatError(
            f"{path}: invalid number {token!r} at line {line_no}",
            line_number=line_no,
        ) from None


def _int(token: str, line_no: int, path) -> int:
    try:
        return int(token)
    except ValueError:
        raise MatrixFormatError(
            f"{path}: invalid integer {token!r} at line {line_no}",
            line_number=line_no,
        ) from None


# ---------------------------------------------------------------------------
# single-matrix files
# ---------------------------------------------------------------------------

def _parse_structured_text(lines, path) -> np.ndarray:
    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines)]
    body = [(no, ln) for no, ln in body if ln and not ln.startswith("#")]
    if not body:
        raise MatrixFormatError(f"{path}: empty matrix file", line_number=1)
    no, header = body[0]
    parts = header.split()
    if len(parts) != 2:
        raise MatrixFormatError(
            f"{path}: expected 'rows cols' at line {no}", line_number=no)
    rows, cols = _int(parts[0], no, path), _int(parts[1], no, path)
    values = []
    for no, ln in body[1:]:
        for tok in ln.split():
            values.append(_float(tok, no, path))
    if len(values) != rows * cols:
        last = body[-1][0]
        raise MatrixFormatError(
            f"{path}: expected {rows * cols} values for a {rows}x{cols} "
            f"matrix, found {len(values)}", line_number=last)
    return np.asarray(values).reshape(rows, cols)


def _parse_matrix_market(lines, path) -> np.ndarray:
    header = lines[0].strip().split()
    if len(header) < 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixFormatError(f"{path}: bad MatrixMarket banner", line_number=1)
    obj, fmt, field, symmetry = (tok.lower() for tok in header[1:5])
    if obj != "matrix":
        raise MatrixFormatError(f"{path}: unsupported object {obj!r}", line_number=1)
    if field != "real":
        raise MatrixFormatError(
            f"{path}: only the real field is supported, got {field!r}", line_number=1)
    if symmetry not in ("general", "symmetric", "skew-symmetric"):
        raise MatrixFormatError(
            f"{path}: unsupported symmetry {symmetry!r}", line_number=1)

    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines)]
    body = [(no, ln) for no, ln in body[1:] if ln and not ln.startswith("%")]
    if not body:
        raise MatrixFormatError(f"{path}: missing size line", line_number=len(lines))

    no, size_line = body[0]
    sizes = size_line.split()
    if fmt == "coordinate":
        if len(sizes) != 3:
            raise MatrixFormatError(
                f"{path}: coordinate size line needs 'rows cols nnz'", line_number=no)
        rows, cols, nnz = (_int(t, no, path) for t in sizes)
        out = np.zeros((rows, cols))
        entries = body[1:]
        if len(entries) != nnz:
            raise MatrixFormatError(
                f"{path}: expected {nnz} entries, found {len(entries)}",
                line_number=entries[-1][0] if entries else no)
        for no, ln in entries:
            parts = ln.split()
            if len(parts) != 3:
                raise MatrixFormatError(
                    f"{path}: coordinate entry needs 'i j value'", line_number=no)
            i = _int(parts[0], no, path) - 1
            j = _int(parts[1], no, path) - 1
            v = _float(parts[2], no, path)
            if not (0 <= i < rows and 0 <= j < cols):
                raise MatrixFormatError(
                    f"{path}: index ({i + 1}, {j + 1}) out of range", line_number=no)
            out[i, j] = v
            if symmetry == "symmetric" and i != j:
                out[j, i] = v
            elif symmetry == "skew-symmetric" and i != j:
                out[j, i] = -v
        return out
    if fmt == "array":
        if len(sizes) != 2:
            raise MatrixFormatError(
                f"{path}: array size line needs 'rows cols'", line_number=no)
        rows, cols = (_int(t, no, path) for t in sizes)
        values = []
        for no, ln in body[1:]:
            for tok in ln.split():
                values.append(_float(tok, no, path))
        if symmetry == "general":
            if len(values) != rows * cols:
                raise MatrixFormatError(
                    f"{path}: expected {rows * cols} array values, found "
                    f"{len(values)}", line_number=body[-1][0])
            return np.asarray(values).reshape(cols, rows).T  # column-major
        # packed lower triangle
        expected = rows * (rows + 1) // 2
        if symmetry == "skew-symmetric":
            expected = rows * (rows - 1) // 2
        if rows != cols or len(values) != expected:
            raise MatrixFormatError(
                f"{path}: bad packed {symmetry} array data", line_number=body[-1][0])
        out = np.zeros((rows, cols))
        it = iter(values)
        for j in range(cols):
            start = j + 1 if symmetry == "skew-symmetric" else j
            for i in range(start, rows):
                v = next(it)
                out[i, j] = v
                out[j, i] = -v if symmetry == "skew-symmetric" else v
        return out
    raise MatrixFormatError(f"{path}: unsupported format {fmt!r}", line_number=1)


def load_matrix(path, format: str = "auto") -> np.ndarray:
    """Load a matrix from structured text or Matrix Market.

    With ``format='auto'`` the Matrix Market banner decides.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise MatrixFormatError(f"{path}: empty file", line_number=1)
    if format == "auto":
        format = ("matrix_market"
                  if lines[0].lower().startswith("%%matrixmarket") else "structured_text")
    if format == "matrix_market":
        return _parse_matrix_market(lines, path)
    if format == "structured_text":
        return _parse_structured_text(lines, path)
    raise ValueError(f"unknown format {format!r}")


def _matrix_block(a: np.ndarray) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rows = [" ".join(_fmt(v) for v in row) for row in a]
    return f"{a.shape[0]} {a.shape[1]}\n" + "\n".join(rows) + "\n"


def save_matrix(a: np.ndarray, path) -> None:
    """Write a matrix in the structured-text format (17 significant digits)."""
    Path(path).write_text(_matrix_block(a))


# ---------------------------------------------------------------------------
# sectioned files (key-value header + named matrix sections)
# ---------------------------------------------------------------------------

def load_sections(path):
    """Parse a sectioned file into (header dict, ordered section dict).

    Sections hold raw (line_number, text) pairs; matrix sections are decoded
    by the callers that know their meaning.
    """
    path = Path(path)
    header: dict[str, str] = {}
    sections: dict[str, list] = {}
    current = None
    for no, raw in enumerate(path.read_text().splitlines(), start=1):
        ln = raw.strip()
        if not ln or ln.startswith("#"):
            continue
        if ln.startswith("[") and ln.endswith("]"):
            name = ln[1:-1].strip()
            if not name:
                raise MatrixFormatError(f"{path}: empty section name", line_number=no)
            if name in sections:
                raise MatrixFormatError(
                    f"{path}: duplicate section [{name}]", line_number=no)
            sections[name] = []
            current = name
        elif current is None:
            parts = ln.split(None, 1)
            if len(parts) != 2:
                raise MatrixFormatError(
                    f"{path}: header line needs 'key value'", line_number=no)
            header[parts[0]] = parts[1]
        else:
            sections[current].append((no, ln))
    return header, sections


def _section_matrix(name, sections, path, optional_shape=None):
    if name not in sections:
        if optional_shape is not None:
            return np.zeros(optional_shape)
        raise MatrixFormatError(f"{path}: missing section [{name}]", line_number=1)
    body = sections[name]
    if not body:
        raise MatrixFormatError(f"{path}: empty section [{name}]", line_number=1)
    lines = [ln for _, ln in body]
    try:
        return _parse_structured_text(lines, path)
    except MatrixFormatError as exc:
        raise MatrixFormatError(
            f"{path}: in section [{name}]: {exc}", line_number=body[0][0]) from None


def save_sections(path, header: dict, matrices: dict, extra: str = "") -> None:
    """Write a sectioned file: header key-value pairs then matrix sections."""
    out = []
    for key, value in header.items():
        out.append(f"{key} {value}")
    for name, mat in matrices.items():
        if mat is None:
            continue
        out.append(f"\n[{name}]")
        out.append(_matrix_block(mat).rstrip("\n"))
    text = "\n".join(out) + "\n"
    if extra:
        text += extra
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# system and generator files
# ---------------------------------------------------------------------------

def _assemble_second_order(M, C, K, B, output_index, f_scale, g_scale) -> LinearSde:
    # x = (q, qdot); standard first-order companion of M qdd + C qd + K q = B u
    kappa = M.shape[0]
    minv = np.linalg.inv(M)
    A = np.block([[np.zeros((kappa, kappa)), np.eye(kappa)],
                  [-minv @ K, -minv @ C]])
    Bc = np.vstack([np.zeros((kappa, 1)), -minv @ B])
    Cc = np.zeros((1, 2 * kappa))
    Cc[0, output_index] = 1.0
    return LinearSde(A=A, B=Bc, C=Cc, F=f_scale * A, G=g_scale * Bc)


def load_system(path) -> LinearSde:
    """Load a linear system from a sectioned or JSON file.

    First-order files carry sections A, B, C and optional F, G (zero when
    absent). Second-order mechanical files (``form second_order``) carry
    mass/damping/stiffness/input sections M, C, K, B plus header keys
    ``output_index`` (default 0), ``f_scale`` (default 0.01) and ``g_scale``
    (default 1.0); the state is assembled as positions stacked on velocities.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        if data.get("form", "first_order") == "second_order":
            return _assemble_second_order(
                np.asarray(data["M"], float), np.asarray(data["C"], float),
                np.asarray(data["K"], float), np.asarray(data["B"], float),
                int(data.get("output_index", 0)),
                float(data.get("f_scale", 0.01)), float(data.get("g_scale", 1.0)))
        A = np.asarray(data["A"], dtype=float)
        n = A.shape[0]
        return LinearSde(
            A=A, B=np.asarray(data["B"], float), C=np.asarray(data["C"], float),
            F=np.asarray(data.get("F", np.zeros((n, n))), float),
            G=np.asarray(data.get("G", np.zeros((n, 1))), float))
    header, sections = load_sections(path)
    if header.get("form", "first_order") == "second_order":
        M = _section_matrix("M", sections, path)
        return _assemble_second_order(
            M,
            _section_matrix("C", sections, path),
            _section_matrix("K", sections, path),
            _section_matrix("B", sections, path),
            int(header.get("output_index", "0")),
            float(header.get("f_scale", "0.01")),
            float(header.get("g_scale", "1.0")))
    A = _section_matrix("A", sections, path)
    n = A.shape[0]
    return LinearSde(
        A=A,
        B=_section_matrix("B", sections, path),
        C=_section_matrix("C", sections, path),
        F=_section_matrix("F", sections, path, optional_shape=(n, n)),
        G=_section_matrix("G", sections, path, optional_shape=(n, 1)))


def save_system(sys: LinearSde, path) -> None:
    save_sections(path, {"form": "first_order"},
                  {"A": sys.A, "B": sys.B, "C": sys.C, "F": sys.F, "G": sys.G})


def load_generator(path) -> SignalGenerator:
    """Load a signal generator (sections S, L, optional J, omega0)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        S = np.asarray(data["S"], dtype=float)
        nu = S.shape[0]
        omega0 = np.asarray(data.get("omega0", np.eye(nu)[:, :1]), float)
        return SignalGenerator(
            S=S, J=np.asarray(data.get("J", np.zeros((nu, nu))), float),
            L=np.asarray(data["L"], float), omega0=omega0.reshape(nu, 1))
    _, sections = load_sections(path)
    S = _section_matrix("S", sections, path)
    nu = S.shape[0]
    if "omega0" in sections:
        omega0 = _section_matrix("omega0", sections, path)
    else:
        omega0 = np.zeros((nu, 1))
        omega0[0, 0] = 1.0
    return SignalGenerator(
        S=S,
        J=_section_matrix("J", sections, path, optional_shape=(nu, nu)),
        L=_section_matrix("L", sections, path),
        omega0=np.asarray(omega0, float).reshape(nu, 1))


def save_generator(gen: SignalGenerator, path) -> None:
    save_sections(path, {},
                  {"S": gen.S, "J": gen.J, "L": gen.L, "omega0": gen.omega0})


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def save_model(model: ReducedModel, path) -> None:
    """Write a reduced model: named matrix sections plus a certificate block."""
    header = {"format": "stomor-model", "version": "1", "kind": model.kind}
    matrices = {"Ar": model.Ar, "Br": model.Br, "Fr": model.Fr, "Gr": model.Gr}
    if model.Cr is not None:
        matrices["Cr"] = model.Cr
    if model.output_transform is not None:
        matrices["output_transform"] = model.output_transform
    if model.R is not None:
        matrices["R"] = model.R
    extra = ["\n[certificates]"]
    for cert in model.certificates:
        verdict = "pass" if cert.passed else "fail"
        extra.append(f"{cert.name} {verdict} {cert.detail}")
    extra.append("\n[diagnostics]")
    for key in sorted(model.diagnostics):
        extra.append(f"{key} {_fmt(model.diagnostics[key])}")
    save_sections(path, header, matrices, extra="\n".join(extra) + "\n")


def load_model(path) -> ReducedModel:
    path = Path(path)
    header, sections = load_sections(path)
    if header.get("format") != "stomor-model":
        raise MatrixFormatError(f"{path}: not a stomor model file", line_number=1)
    kind = header.get("kind")
    if kind not in ("exact", "moment_mean", "mean_square"):
        raise MatrixFormatError(f"{path}: unknown model kind {kind!r}", line_number=1)
    certs = []
    for no, ln in sections.get("certificates", []):
        parts = ln.split(None, 2)
        if len(parts) < 2 or parts[1] not in ("pass", "fail"):
            raise MatrixFormatError(
                f"{path}: bad certificate line", line_number=no)
        certs.append(Certificate(name=parts[0], passed=parts[1] == "pass",
                                 detail=parts[2] if len(parts) > 2 else ""))
    diagnostics = {}
    for no, ln in sections.get("diagnostics", []):
        parts = ln.split(None, 1)
        if len(parts) != 2:
            raise MatrixFormatError(f"{path}: bad diagnostics line", line_number=no)
        diagnostics[parts[0]] = _float(parts[1], no, path)
    return ReducedModel(
        kind=kind,
        Ar=_section_matrix("Ar", sections, path),
        Br=_section_matrix("Br", sections, path),
        Fr=_section_matrix("Fr", sections, path),
        Gr=_section_matrix("Gr", sections, path),
        Cr=_section_matrix("Cr", sections, path) if "Cr" in sections else None,
        output_transform=(_section_matrix("output_transform", sections, path)
                          if "output_transform" in sections else None),
        R=_section_matrix("R", sections, path) if "R" in sections else None,
        certificates=tuple(certs),
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_csv(path, header, rows) -> None:
    """Write a numeric CSV: header row then comma-separated %.17g values."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    lines = [",".join(header)]
    if rows.size:
        if rows.shape[1] != len(header):
            raise ValueError(
                f"rows have {rows.shape[1]} columns, header has {len(header)}")
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Read a CSV written by :func:`write_csv`: (header list, float array)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise MatrixFormatError(f"{path}: empty CSV", line_number=1)
    header = lines[0].split(",")
    data = []
    for no, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        data.append([_float(tok, no, path) for tok in ln.split(",")])
    arr = np.asarray(data) if data else np.zeros((0, len(header)))
    return header, arr


def emit_csv(obj, path) -> None:
    """Write a trajectory or a validation report to one CSV file.

    Trajectories produce columns ``t, output, state_0..``; validation
    reports produce ``t, mean_abs_err, var_abs_err``.
    """
    if hasattr(obj, "outputs") and hasattr(obj, "states"):
        states = np.atleast_2d(obj.states)
        cols = [f"state_{i}" for i in range(states.shape[1])]
        rows = np.column_stack([obj.times, obj.outputs, states]) if len(obj.times) \
            else np.zeros((0, 2 + states.shape[1]))
        write_csv(path, ["t", "output", *cols], rows)
    elif hasattr(obj, "mean_abs_err"):
        rows = np.column_stack([obj.times, obj.mean_abs_err, obj.var_abs_err])
        write_csv(path, ["t", "mean_abs_err", "var_abs_err"], rows)
    else:
        raise TypeError(f"cannot emit {type(obj).__name__} as CSV")
