"""Command-line front-end.

Subcommands: ``bench``, ``reduce``, ``simulate``, ``moments``, ``compare``.
Run configurations are INI files with the sections ``[benchmark]``,
``[reducer]``, ``[integrator]`` and ``[run]``. Exit status is 0 on success,
2 on a configuration or input error and 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchmarkSpec, build
from .io import read_generator, read_system, write_dense, write_generator, write_system
from .lyap_lowrank import LyapunovError
from .moments import MomentSet, SingularShiftError, w2_moments, w3_moments
from .qb_model import (
    QBSystem,
    SignalGenerator,
    assemble_driven,
    assemble_driven_extended,
    galerkin_project,
)
from .reduction import (
    DEFAULT_LYAP_TOL,
    DEFLATION_TOL,
    MULTM_DEFLATION_TOL,
    AssmConfig,
    assm_reduce,
    irka_frequencies,
    multm_iw_reduce,
    multm_reduce,
    pod_reduce,
)
from .simulate import IntegratorConfig, SimulationError, integrate, output_error, read_trajectory, write_trajectory

log = logging.getLogger("qbmor")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
REDUCERS = ("assm", "assm-q", "multm", "multm-iw", "pod", "pod-block")


class ConfigError(ValueError):
    pass


@dataclass
class ReducerConfig:
    kind: str = "assm"
    freqs_w2: tuple = ()
    orders_w2: tuple = (1,)
    freqs_w1: tuple = ()
    orders_w1: tuple = (1,)
    tol: float = 1e-3
    lyap_tol: float | None = None
    freqs: tuple = ()
    q1: tuple = (1,)
    q2: tuple = (1,)
    n: int = 0
    blocks: tuple = ()
    train_case: int = 0
    weight: tuple = (-1.0, 1.0, 1.0)  # (Az, Bz, Cz) of the scalar input filter

    def __post_init__(self):
        if self.kind not in REDUCERS:
            raise ConfigError(f"unknown reducer {self.kind!r}; choose from {', '.join(REDUCERS)}")
        if self.kind in ("assm", "assm-q") and not (self.freqs_w2 or self.freqs_w1):
            raise ConfigError("assm needs freqs_w2 and/or freqs_w1")
        if self.kind in ("multm", "multm-iw") and not self.freqs:
            raise ConfigError(f"{self.kind} needs freqs, q1 and q2")
        if self.kind in ("pod", "pod-block") and self.n < 1:
            raise ConfigError(f"{self.kind} needs n >= 1")
        if self.kind == "pod-block" and not self.blocks:
            raise ConfigError("pod-block needs blocks = rows:n_b, rows:n_b, ...")


@dataclass
class RunConfig:
    benchmark: BenchmarkSpec
    reducer: ReducerConfig
    integrator: IntegratorConfig
    outdir: Path = Path("out")
    seed: int = 0
    jobs: int = 1
    source: str = ""
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(";", ",").split(",") if x.strip())


def _section(cp, name):
    return cp[name] if cp.has_section(name) else {}


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    known = {"benchmark", "reducer", "integrator", "run"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"{path}: unknown section [{sec}]")
    where = ""
    try:
        where = "[benchmark]"
        b = _section(cp, "benchmark")
        if "name" not in b or "size" not in b:
            raise ConfigError("[benchmark] needs name and size")
        bench = BenchmarkSpec(b["name"], int(b["size"]), int(b.get("case", 1)), float(b.get("nu", 0.01)),
                              b.get("diode_law", "shifted"))
        where = "[reducer]"
        r = _section(cp, "reducer")
        rkw = {"kind": r.get("kind", "assm")}
        for key in ("freqs_w2", "freqs_w1", "freqs", "weight"):
            if key in r:
                rkw[key] = _floats(r[key]) if not r[key].strip().startswith("irka") else r[key].strip()
        for key in ("orders_w2", "orders_w1", "q1", "q2"):
            if key in r:
                rkw[key] = _ints(r[key])
        if "tol" in r:
            rkw["tol"] = float(r["tol"])
        if "lyap_tol" in r:
            rkw["lyap_tol"] = float(r["lyap_tol"])
        if "n" in r:
            rkw["n"] = int(r["n"])
        if "train_case" in r:
            rkw["train_case"] = int(r["train_case"])
        if "blocks" in r:
            rkw["blocks"] = tuple(tuple(int(v) for v in item.split(":")) for item in r["blocks"].split(",") if item.strip())
        reducer = ReducerConfig(**rkw)
        where = "[integrator]"
        i = _section(cp, "integrator")
        integ = IntegratorConfig(
            t_end=float(i.get("t_end", bench.horizon)),
            abs_tol=float(i.get("abs_tol", 1e-8)),
            rel_tol=float(i.get("rel_tol", 1e-6)),
            max_step=float(i.get("max_step", "inf")),
            output_grid=int(i.get("output_grid", 300)),
        )
        where = "[run]"
        run = _section(cp, "run")
        return RunConfig(bench, reducer, integ, Path(run.get("outdir", "out")), int(run.get("seed", 0)),
                         int(run.get("jobs", 1)), str(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {where}: {exc}") from exc
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: {where}: {exc}") from exc


# ---------------------------------------------------------------------------
# reducers
# ---------------------------------------------------------------------------

def _resolve_freqs(S: QBSystem, value, label):
    if isinstance(value, str):  # "irka:<count>"
        try:
            count = int(value.split(":")[1])
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"{label}: expected 'irka:<count>', got {value!r}") from exc
        freqs = irka_frequencies(S, count)
        log.info("%s from IRKA: %s", label, freqs)
        return tuple(freqs)
    return tuple(value)


def _driven(S: QBSystem, T: SignalGenerator):
    return assemble_driven_extended(S, T) if S.extended else assemble_driven(S, T)


def _snapshots(S: QBSystem, T: SignalGenerator, cfg: IntegratorConfig) -> np.ndarray:
    traj = integrate(_driven(S, T), cfg)
    return traj.states[: S.N]


def run_reducer(S: QBSystem, T: SignalGenerator, rc: ReducerConfig, cfg: RunConfig):
    """Returns ``(basis, info)``; ``info`` is JSON-serialisable."""
    info: dict = {}
    if rc.kind in ("assm", "assm-q"):
        fw2 = _resolve_freqs(S, rc.freqs_w2, "freqs_w2")
        fw1 = _resolve_freqs(S, rc.freqs_w1, "freqs_w1")
        ac = AssmConfig(fw2, _orders(rc.orders_w2, fw2), fw1, _orders(rc.orders_w1, fw1), rc.tol,
                        rc.lyap_tol if rc.lyap_tol is not None else DEFAULT_LYAP_TOL)
        basis, _ = assm_reduce(S, T, ac, jobs=cfg.jobs)
        info.update(freqs_w2=list(ac.freqs_w2), orders_w2=list(ac.orders_w2), freqs_w1=list(ac.freqs_w1),
                    orders_w1=list(ac.orders_w1), lowrank_tol=ac.lowrank_tol, lyap_tol=ac.lyap_tol,
                    n_a=basis.info["n_a"], n_b=basis.info["n_b"], n_1=basis.info["n_1"],
                    singular_values=[float(x) for x in basis.info.get("singular_values", [])],
                    lyap_residuals=[float(x) for x in basis.info.get("lyap_residuals", [])],
                    input_nonlinear=S.extended)
    elif rc.kind in ("multm", "multm-iw"):
        fr = _resolve_freqs(S, rc.freqs, "freqs")
        q1, q2 = _orders(rc.q1, fr), _orders(rc.q2, fr)
        if rc.kind == "multm":
            if S.extended:
                raise ConfigError("multm needs an input-linear system; use multm-iw")
            basis = multm_reduce(S, fr, q1, q2, jobs=cfg.jobs)
        else:
            az, bz, cz = rc.weight
            F = SignalGenerator([[az]], _zero_quad(1), [[cz]], [0.0], Bz=[[bz]], name="input_filter")
            basis = multm_iw_reduce(S, F, fr, q1, q2, jobs=cfg.jobs)
            info["extended_n"] = basis.info["extended_n"]
            info["weight"] = {"Az": az, "Bz": bz, "Cz": cz}
        info.update(freqs=list(fr), q1=list(q1), q2=list(q2), deflation_tol=MULTM_DEFLATION_TOL)
    else:
        train = rc.train_case or cfg.benchmark.case
        _, Ttrain = build(BenchmarkSpec(cfg.benchmark.name, cfg.benchmark.size, train, cfg.benchmark.nu,
                                        cfg.benchmark.diode_law))
        X = _snapshots(S, Ttrain, cfg.integrator)
        basis = pod_reduce(X, rc.n, rc.blocks if rc.kind == "pod-block" else None)
        info.update(train_case=train, snapshots=int(X.shape[1]), blocks=[list(b) for b in rc.blocks])
    info["deflated"] = int(basis.info.get("deflated", 0))
    return basis, info


def _orders(orders, freqs):
    orders = tuple(orders)
    return orders * len(freqs) if len(orders) == 1 else orders


def _zero_quad(q):
    from .kron_core import QuadMap
    return QuadMap(q, q, q)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    spec = BenchmarkSpec(args.name, args.size, args.case, args.nu, args.diode_law)
    S, T = build(spec)
    out = Path(args.out)
    write_system(out / "system", S)
    write_generator(out / "generator", T)
    (out / "spec.json").write_text(json.dumps(asdict(spec) | {"horizon": spec.horizon}, indent=2) + "\n")
    print(f"wrote {spec.name} (N={S.N}, q={T.q}) to {out}")
    return 0


def cmd_reduce(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg.outdir = Path(args.out)
    if args.jobs:
        cfg.jobs = args.jobs
    np.random.seed(cfg.seed)
    S, T = build(cfg.benchmark)
    if cfg.reducer.kind == "assm-q" and not S.extended:
        log.warning("assm-q selected on an input-linear system; running plain assm")
    t0 = time.perf_counter()
    basis, info = run_reducer(S, T, cfg.reducer, cfg)
    elapsed = time.perf_counter() - t0
    Sr = galerkin_project(S, basis.V)
    out = cfg.outdir
    out.mkdir(parents=True, exist_ok=True)
    write_dense(out / "basis.mtx", basis.V)
    write_system(out / "reduced", Sr)
    write_generator(out / "generator", T)
    if args.write_full:
        write_system(out / "full", S)
    meta = {
        "version": __version__,
        "config": cfg.source,
        "benchmark": asdict(cfg.benchmark),
        "reducer": cfg.reducer.kind,
        "n": basis.n,
        "N": S.N,
        "provenance": basis.provenance,
        "seed": cfg.seed,
        "jobs": cfg.jobs,
        "offline_seconds": round(elapsed, 3),
        "integrator": asdict(cfg.integrator),
        "decisions": {
            "svd_threshold": "absolute",
            "orthogonalisation": "MGS + one reorthogonalisation pass",
            "deflation_tol": DEFLATION_TOL,
            "multm_deflation_tol": MULTM_DEFLATION_TOL,
            "lyap_residual": "backward error |R| / (|F K F^T| + 2 |A X E^T|)",
            "lyap_solver": "tangential rational Krylov, block-triangular split for driven pencils",
            "diode_law": cfg.benchmark.diode_law,
        },
    }
    meta.update(info)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, default=_jsonable) + "\n")
    print(f"n={basis.n}")
    return 0


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def cmd_simulate(args) -> int:
    if args.config:
        cfg = load_config(args.config).integrator
    else:
        cfg = IntegratorConfig()
    overrides = {k: v for k, v in (("t_end", args.t_end), ("abs_tol", args.abs_tol), ("rel_tol", args.rel_tol),
                                   ("output_grid", args.grid)) if v is not None}
    cfg = IntegratorConfig(**(asdict(cfg) | overrides))
    S = read_system(args.system)
    T = read_generator(args.generator)
    traj = integrate(_driven(S, T), cfg, C=S.C)
    if args.states:
        traj.states = traj.states[: S.N]
    write_trajectory(args.out, traj, with_states=args.states)
    print(f"wrote {traj.times.size} samples to {args.out}")
    return 0


def cmd_compare(args) -> int:
    full, red = read_trajectory(args.full), read_trajectory(args.reduced)
    err, emax, rel = output_error(full, red)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("t," + ",".join(f"err{i + 1}" for i in range(err.shape[0])) + "\n")
            for t, row in zip(full.times, err.T):
                fh.write(f"{t:.17e}," + ",".join(f"{v:.17e}" for v in row) + "\n")
    print(f"max_error={emax:.6e} rel_error={rel:.6e}")
    return 0


def cmd_moments(args) -> int:
    S = read_system(args.system)
    T = read_generator(args.generator)
    D = _driven(S, T)
    fn = w2_moments if args.order == 2 else w3_moments
    ms = fn(D, args.s0, args.L, lyap_tol=args.lyap_tol)
    proj = MomentSet(ms.s0, ms.L, [np.ravel(m)[: S.N] for m in ms.m], ms.mhat, ms.mhathat, ms.residuals)
    text = proj.dump(args.out)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qbmor", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="write a benchmark system and generator bundle")
    b.add_argument("--name", required=True)
    b.add_argument("--size", type=int, required=True)
    b.add_argument("--case", type=int, default=1)
    b.add_argument("--nu", type=float, default=0.01)
    b.add_argument("--diode-law", default="shifted")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("reduce", help="build a reduced model from a run config")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--jobs", type=int)
    r.add_argument("--write-full", action="store_true", help="also write the full system bundle")
    r.set_defaults(func=cmd_reduce)

    s = sub.add_parser("simulate", help="simulate a system driven by a generator")
    s.add_argument("--system", required=True)
    s.add_argument("--generator", required=True)
    s.add_argument("--config")
    s.add_argument("--t-end", type=float)
    s.add_argument("--abs-tol", type=float)
    s.add_argument("--rel-tol", type=float)
    s.add_argument("--grid", type=int)
    s.add_argument("--states", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("moments", help="print input-tailored moments")
    m.add_argument("--system", required=True)
    m.add_argument("--generator", required=True)
    m.add_argument("--s0", type=float, default=0.0)
    m.add_argument("--L", type=int, default=2)
    m.add_argument("--order", type=int, choices=(2, 3), default=2)
    m.add_argument("--lyap-tol", type=float, default=1e-8)
    m.add_argument("--out")
    m.set_defaults(func=cmd_moments)

    c = sub.add_parser("compare", help="output error between two trajectory CSV files")
    c.add_argument("full")
    c.add_argument("reduced")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (LyapunovError, SimulationError, SingularShiftError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
