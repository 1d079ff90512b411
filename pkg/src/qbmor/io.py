"""On-disk formats: Matrix Market matrices, plain-text vectors, QuadMaps,
and system/generator bundle directories."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .kron_core import QuadMap, as_csr
from .qb_model import QBSystem, SignalGenerator

__all__ = [
    "read_matrix",
    "read_vector",
    "write_dense",
    "write_matrix",
    "write_vector",
    "read_quadmap",
    "write_quadmap",
    "read_generator",
    "read_system",
    "write_generator",
    "write_system",
]


def write_matrix(path, M, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), as_csr(M).tocoo(), comment=comment, precision=17)


def write_dense(path, M, comment: str = "") -> None:
    """Dense ``array`` Matrix Market file (used for bases)."""
    scipy.io.mmwrite(str(path), np.atleast_2d(np.asarray(M, dtype=float)), comment=comment, precision=17)


def read_matrix(path) -> sp.csr_matrix:
    try:
        M = scipy.io.mmread(str(path))
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: cannot parse Matrix Market file ({exc})") from exc
    return as_csr(M)


def write_vector(path, v) -> None:
    v = np.asarray(v, dtype=float).ravel()
    Path(path).write_text("".join(f"{float(x)!r}\n" for x in v))


def read_vector(path) -> np.ndarray:
    vals = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("%") or line.startswith("#"):
            continue
        try:
            vals.append(float(line))
        except ValueError as exc:
            raise ValueError(f"{path}:{n}: not a number: {line!r}") from exc
    return np.array(vals)


def write_quadmap(path, G: QuadMap) -> None:
    G.write(path)


def read_quadmap(path) -> QuadMap:
    return QuadMap.read(path)


# ---------------------------------------------------------------------------
# bundles: one directory per system or generator
# ---------------------------------------------------------------------------

_SYS_MATS = ("E", "A", "B", "C")
_GEN_MATS = ("Az", "Cz")


def write_system(directory, S: QBSystem) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in _SYS_MATS:
        write_matrix(d / f"{name}.mtx", getattr(S, name))
    write_quadmap(d / "G.qmap", S.G)
    write_quadmap(d / "D.qmap", S.D)
    if S.Gu is not None:
        write_quadmap(d / "Gu.qmap", S.Gu)
    if S.Bp is not None:
        write_matrix(d / "Bp.mtx", S.Bp)
    write_vector(d / "x0.vec", S.x0)
    (d / "name.txt").write_text(S.name + "\n")
    return d


def read_system(directory) -> QBSystem:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"system bundle {d} does not exist")
    mats = {name: read_matrix(_need(d / f"{name}.mtx")) for name in _SYS_MATS}
    Gu = read_quadmap(d / "Gu.qmap") if (d / "Gu.qmap").exists() else None
    Bp = read_matrix(d / "Bp.mtx") if (d / "Bp.mtx").exists() else None
    name = (d / "name.txt").read_text().strip() if (d / "name.txt").exists() else d.name
    return QBSystem(mats["E"], mats["A"], read_quadmap(_need(d / "G.qmap")), read_quadmap(_need(d / "D.qmap")),
                    mats["B"], mats["C"], read_vector(_need(d / "x0.vec")), Gu, Bp, name)


def write_generator(directory, T: SignalGenerator) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in _GEN_MATS:
        write_matrix(d / f"{name}.mtx", getattr(T, name))
    write_quadmap(d / "Gz.qmap", T.Gz)
    if T.Bz is not None:
        write_matrix(d / "Bz.mtx", T.Bz)
    write_vector(d / "z0.vec", T.z0)
    (d / "name.txt").write_text(T.name + "\n")
    return d


def read_generator(directory) -> SignalGenerator:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"generator bundle {d} does not exist")
    Bz = read_matrix(d / "Bz.mtx") if (d / "Bz.mtx").exists() else None
    name = (d / "name.txt").read_text().strip() if (d / "name.txt").exists() else d.name
    return SignalGenerator(read_matrix(_need(d / "Az.mtx")), read_quadmap(_need(d / "Gz.qmap")),
                           read_matrix(_need(d / "Cz.mtx")), read_vector(_need(d / "z0.vec")), Bz, name)


def _need(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing bundle file {path}")
    return path
