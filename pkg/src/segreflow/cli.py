"""Command-line entry point: ``segreflow {solve,eigs,oracle1d,ladder,validate}``.

Exit codes: 0 success, 2 configuration error, 3 numerical
non-convergence, 4 invariant violation. Errors are printed to stderr as
one JSON object.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import load_config
from .errors import ConfigError, SegreflowError
from .io import dumps_json, write_json

__all__ = ["main", "build_parser"]

log = logging.getLogger("segreflow")

LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "trace": logging.DEBUG}
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INVARIANT = 0, 2, 3, 4


def _setup_logging() -> None:
    name = os.environ.get("SEGREFLOW_LOG", "quiet").lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"SEGREFLOW_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}", field="SEGREFLOW_LOG")
    logging.basicConfig(level=LOG_LEVELS[name], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _grid_arg(text: str) -> list[int]:
    try:
        counts = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--grid expects N or N,N, got {text!r}") from None
    if not 1 <= len(counts) <= 2:
        raise argparse.ArgumentTypeError("--grid takes one or two counts")
    return counts


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=_u64, help="RNG seed (overrides seed)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for independent jobs")
    common.add_argument("--beta", type=float, help="competition parameter (overrides beta)")
    common.add_argument("--grid", type=_grid_arg, help="interior point counts N or N,N (overrides domain.counts)")

    p = argparse.ArgumentParser(prog="segreflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="single-beta flow run")
    e = sub.add_parser("eigs", parents=[common], help="lowest Dirichlet eigenvalues of the domain")
    e.add_argument("--k", type=int, default=3, help="number of eigenvalues")
    o = sub.add_parser("oracle1d", parents=[common], help="brute-force optimal partition of (0, 1)")
    o.add_argument("--m", type=int, default=2)
    o.add_argument("--k", type=_int_list, default=None, help="k_i per label, e.g. 2,2")
    o.add_argument("--segments", type=int, default=8)
    sub.add_parser("ladder", parents=[common], help="beta-continuation with warm starts")
    sub.add_parser("validate", parents=[common], help="run the invariant suite")
    return p


def _config(args):
    return load_config(args.config, seed=args.seed, beta=args.beta, grid=args.grid)


def _out_dir(args, cfg) -> Path:
    return args.out if args.out is not None else Path(cfg.output_dir)


def cmd_solve(args) -> int:
    from .runner import solve

    cfg = _config(args)
    outcome = solve(cfg, _out_dir(args, cfg))
    s = outcome.summary
    print(
        f"status={s['status']} J={s['J']:.10g} (J/pi^2={s['J'] / math.pi**2:.6f}) "
        f"residual={s['residual']:.2e} bounds=[{s['bounds']['lower']:.6g}, {s['bounds']['upper']:.6g}]"
    )
    return EXIT_OK if s["converged"] else EXIT_NONCONVERGED


def cmd_eigs(args) -> int:
    from .grid import build_grid
    from .linops import LinearOperator
    from .spectrum import dirichlet_eigs

    cfg = _config(args)
    if args.k < 1:
        raise ConfigError("--k must be >= 1", field="k")
    grid = build_grid(cfg.domain.extents, cfg.domain.counts)
    res = dirichlet_eigs(LinearOperator(grid), args.k, seed=cfg.seed)
    for j, lam in enumerate(res.values, 1):
        print(f"lambda_{j} = {lam:.10g}  ({lam / math.pi**2:.6f} pi^2)  residual {res.residuals[j - 1]:.1e}")
    if args.out is not None:
        write_json(
            args.out / "summary.json",
            {
                "command": "eigs",
                "grid": grid.describe(),
                "seed": cfg.seed,
                "eigenvalues": res.values,
                "residuals": res.residuals,
            },
        )
    return EXIT_OK


def cmd_oracle1d(args) -> int:
    from .partition import oracle_1d

    k = args.k if args.k is not None else [2] * args.m
    res = oracle_1d(args.m, k, args.segments)
    print(f"minimum = {res.value:.10g} ({res.value / math.pi**2:.6f} pi^2) over {res.evaluated} labelings")
    for lay in res.layouts:
        iv = ", ".join(f"{lab}:({lo:g},{hi:g})" for lab, lo, hi in res.intervals(lay))
        print(f"  {lay}  {iv}")
    if args.out is not None:
        write_json(
            args.out / "oracle.json",
            {"m": args.m, "k": list(k), "segments": args.segments, "value": res.value, "layouts": list(res.layouts)},
        )
    return EXIT_OK


def cmd_ladder(args) -> int:
    from .runner import ladder

    cfg = _config(args)
    if cfg.betas is None:
        cfg = cfg.with_overrides(betas=[1.0, 10.0, 100.0, 1000.0])
    report, _ = ladder(cfg, _out_dir(args, cfg))
    for r in report.rungs:
        energy = "n/a" if r.partition_energy is None else f"{r.partition_energy / math.pi**2:.5f} pi^2"
        print(f"beta={r.beta:<8g} {r.status:<17s} J={r.J:.8g} partition={energy} defect={r.defect:.4g}")
    return EXIT_OK if all(r.status == "converged" for r in report.rungs) else EXIT_NONCONVERGED


def cmd_validate(args) -> int:
    from .validate import format_table, run_suite

    rows = run_suite(seed=args.seed or 0, workers=max(1, args.workers))
    print(format_table(rows))
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_INVARIANT


COMMANDS = {
    "solve": cmd_solve,
    "eigs": cmd_eigs,
    "oracle1d": cmd_oracle1d,
    "ladder": cmd_ladder,
    "validate": cmd_validate,
}


def _error_json(exc: BaseException, code: int) -> str:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("field", "component", "residual", "iterations"):
        val = getattr(exc, attr, None)
        if val is not None:
            doc[attr] = val
    return dumps_json(doc)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging()
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1", field="workers")
        return COMMANDS[args.command](args)
    except SegreflowError as exc:
        code = exc.exit_code
        sys.stderr.write(_error_json(exc, code))
        return code
    except AssertionError as exc:
        sys.stderr.write(_error_json(exc, EXIT_INVARIANT))
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
