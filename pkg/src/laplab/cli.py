"""Command line front end.

Subcommands:

    assemble   build one operator matrix and save it (binary, .llop)
    recover    load an operator, run recovery, write a JSON report
    verify     run scenarios S1..S6 (or one of them), write reports
    converge   Monte-Carlo convergence study, write a CSV

Exit codes: 0 success / all scenarios pass, 1 scenario failure,
2 bad usage or invalid parameters, 3 numerical failure during recovery.

--threads caps the numeric thread pools (env vars for pools not yet
started, threadpoolctl for ones that are).  --config points at a JSON
file whose keys fill in defaults; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="laplab",
        description="graph Laplace operators on tori and spheres: "
        "assembly, recovery, scenario verification",
    )
    ap.add_argument("--config", help="JSON file with default values for flags")
    ap.add_argument("--threads", type=int, help="cap BLAS/OpenMP thread pools")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("assemble", help="build and save one operator matrix")
    a.add_argument("--mode", choices=("intrinsic", "extrinsic"), default="intrinsic")
    a.add_argument(
        "--metric",
        default="flat",
        help="flat | aniso:<a> | scaled:<c> | sphere:<R>",
    )
    a.add_argument(
        "--embedding",
        default=None,
        help="clifford | donut:<R>:<r> | sphere (extrinsic mode only)",
    )
    a.add_argument(
        "--density",
        default="uniform",
        help="uniform | cosine:<alpha>:<axis>",
    )
    a.add_argument("--grid", type=int, default=32)
    a.add_argument("--bandwidth", type=float, default=0.5)
    a.add_argument("--out", required=True, help="output .llop path")

    r = sub.add_parser("recover", help="run recovery on a saved operator")
    r.add_argument("--operator", required=True, help="input .llop path")
    r.add_argument("--out", required=True, help="output JSON report path")
    r.add_argument(
        "--externalize",
        default=None,
        help="directory for full matrices as .llmx instead of embedding",
    )
    r.add_argument("--refine", action="store_true",
                   help="least-squares mass refinement over all edges")

    v = sub.add_parser("verify", help="run standard scenarios")
    v.add_argument("--scenario", default="all",
                   help="S1..S6 or 'all'")
    v.add_argument("--grid", type=int, default=32)
    v.add_argument("--bandwidth", type=float, default=0.5)
    v.add_argument("--seed", type=int, default=1234)
    v.add_argument("--out", default=None, help="directory for JSON reports")

    c = sub.add_parser("converge", help="Monte-Carlo convergence study")
    c.add_argument("--n", default="1000,4000,16000,64000",
                   help="comma-separated sample sizes")
    c.add_argument("--seeds", type=int, default=20)
    c.add_argument("--bandwidth", type=float, default=0.5)
    c.add_argument("--seed", type=int, default=1234)
    c.add_argument("--out", required=True, help="output CSV path")
    return ap


def _merge_config(args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    """Fill unset flags from the JSON config; explicit flags keep priority."""
    if not args.config:
        return args
    with open(args.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    explicit = {a.lstrip("-").split("=")[0].replace("-", "_")
                for a in argv if a.startswith("--")}
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if attr in explicit or not hasattr(args, attr):
            continue
        setattr(args, attr, value)
    return args


def _parse_metric(text: str):
    from .geometry import SphereMetric, TorusMetric

    name, _, rest = text.partition(":")
    if name == "flat":
        return TorusMetric.flat()
    if name == "aniso":
        return TorusMetric.anisotropic(float(rest))
    if name == "scaled":
        return TorusMetric.scaled_flat(float(rest))
    if name == "sphere":
        return SphereMetric(float(rest) if rest else 1.0)
    raise ValueError(f"unknown metric {text!r}")


def _parse_embedding(text: str):
    from .geometry import CliffordTorus, DonutTorus, UnitSphere

    name, _, rest = text.partition(":")
    if name == "clifford":
        return CliffordTorus()
    if name == "donut":
        major, _, minor = rest.partition(":")
        return DonutTorus(float(major), float(minor))
    if name == "sphere":
        return UnitSphere()
    raise ValueError(f"unknown embedding {text!r}")


def _parse_density(text: str):
    from .discretization import CosineBump, UniformDensity

    name, _, rest = text.partition(":")
    if name == "uniform":
        return UniformDensity()
    if name == "cosine":
        alpha, _, axis = rest.partition(":")
        return CosineBump(float(alpha), axis or "u")
    raise ValueError(f"unknown density {text!r}")


def _cmd_assemble(args) -> int:
    from .discretization import build_grid, normalize_density
    from .operators import (
        ExtrinsicKernel,
        IntrinsicKernel,
        assemble_continuous,
        save_operator,
    )

    metric = _parse_metric(args.metric)
    if args.mode == "extrinsic":
        if args.embedding is None:
            raise ValueError("extrinsic mode needs --embedding")
        kernel = ExtrinsicKernel(_parse_embedding(args.embedding))
    else:
        kernel = IntrinsicKernel(metric)
    rule = build_grid(metric, args.grid)
    density = normalize_density(_parse_density(args.density), rule)
    op = assemble_continuous(kernel, density, rule, args.bandwidth)
    save_operator(op, args.out)
    print(f"wrote {args.out}: {op.n} nodes, t={op.t}, mode={args.mode}")
    if op.warning:
        print(f"warning: {op.warning}", file=sys.stderr)
    return 0


def _cmd_recover(args) -> int:
    from .identify import report_payload, run_recovery
    from .operators import load_operator

    op = load_operator(args.operator)
    report = run_recovery(op, refine=args.refine)
    payload = report_payload(report, externalize_dir=args.externalize)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.out}: {payload['n']} nodes, "
          f"{len(payload['metric']['indices'])} recovered tensors")
    return 0


def _cmd_verify(args) -> int:
    import dataclasses

    from .verify import SCENARIO_IDS, ScenarioConfig, run_scenario

    wanted = SCENARIO_IDS if args.scenario == "all" else (args.scenario,)
    base = ScenarioConfig(
        scenario="S1",
        grid=args.grid,
        bandwidth=args.bandwidth,
        seed=args.seed,
        out_dir=args.out,
    )
    ok = True
    for sid in wanted:
        result = run_scenario(dataclasses.replace(base, scenario=sid))
        status = "pass" if result.passed else "FAIL"
        detail = ", ".join(
            f"{k}={v:.3e}" for k, v in sorted(result.discrepancies.items())
        )
        print(f"{sid}: {status} ({detail})")
        ok = ok and result.passed
    return 0 if ok else 1


def _cmd_converge(args) -> int:
    from .verify import convergence_study

    n_values = tuple(int(s) for s in str(args.n).split(",") if s)
    study = convergence_study(
        n_values=n_values,
        n_seeds=args.seeds,
        bandwidth=args.bandwidth,
        seed=args.seed,
        cache_dir=os.path.dirname(os.path.abspath(args.out)) or None,
    )
    study.to_csv(args.out, args.seed, args.bandwidth, 128)
    print(f"wrote {args.out}: slope {study.slope:.3f}")
    return 0


def _cap_threads(count: int) -> None:
    """Bound numeric thread pools to `count`.

    Env vars cover pools not yet started (and subprocesses); pools the
    linear-algebra libraries already opened are resized through
    threadpoolctl when it is installed.
    """
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(count)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(count)
    except ImportError:
        pass


_COMMANDS = {
    "assemble": _cmd_assemble,
    "recover": _cmd_recover,
    "verify": _cmd_verify,
    "converge": _cmd_converge,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors already; normalize others
        return int(exc.code) if exc.code else 0

    from .errors import NumericalError

    try:
        args = _merge_config(args, argv)
        if args.threads is not None:
            if args.threads < 1:
                raise ValueError("--threads must be positive")
            _cap_threads(args.threads)
        return _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
