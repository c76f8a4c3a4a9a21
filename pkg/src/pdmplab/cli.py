"""Command-line interface.

Subcommands: gen-data, analyze, train, sweep, compare, gradcheck, bench.
Exit codes: 0 success, 1 failed check (gradcheck), 2 config error,
3 divergence, 4 I/O error.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from . import analyze, datagen, harness, kernels
from .errors import ConfigError, DivergenceError, InputError, PdmplabError


def parse_int_list(text: str) -> list[int]:
    """Comma-separated integers; each entry may be an inclusive a..b range."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise InputError(f"no integers in {text!r}")
    return out


def parse_float_list(text: str) -> list[float]:
    values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise InputError(f"no numbers in {text!r}")
    return values


def parse_strategy_names(text: str) -> list[dict]:
    """Strategy list like 'vanilla,balanced,pdmp' or 'pdmp=15,naive_lr_scale=15'."""
    specs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, value = part.partition("=")
        if name == "vanilla":
            spec = {"kind": "vanilla"}
        elif name == "pdmp":
            spec = {"kind": "pdmp"}
            if value:
                spec["gamma_p"] = float(value)
        elif name == "balanced":
            spec = {"kind": "balanced"}
            if value:
                spec["alpha"] = float(value)
        elif name == "naive_lr_scale":
            if not value:
                raise ConfigError("naive_lr_scale needs a factor, e.g. naive_lr_scale=15")
            spec = {"kind": "naive_lr_scale", "k": float(value)}
        else:
            raise ConfigError(f"unknown strategy name {name!r}")
        specs.append(spec)
    return specs


def _cmd_gen_data(args) -> int:
    spec = datagen.preset(args.preset)
    if args.seed is not None:
        spec = datagen.with_seed(spec, args.seed)
    dataset = datagen.generate(spec)
    datagen.save_dataset(dataset, args.out)
    ranking = datagen.bayes_ranking(spec, n_mc=args.bayes_mc)
    print(f"wrote {args.preset} dataset to {args.out}")
    print(f"optimal-accuracy estimates: "
          f"{[round(a, 4) for a in ranking.accuracies]} (ranking {ranking.ranking})")
    return 0


def _cmd_analyze(args) -> int:
    cfg = harness.load_config(args.config)
    dataset = harness.resolve_dataset(cfg)
    analysis = analyze.AnalysisConfig(
        epochs=args.analysis_epochs,
        subset_fraction=args.subset_fraction,
        early_epoch=args.early_epoch,
        method=args.method,
    )
    result = analyze.run_modality_analysis(dataset, cfg, analysis)
    analyze.save_profile(result.profile, args.out)
    curves_path = Path(args.out).with_name(Path(args.out).stem + "_curves.csv")
    curves_path.write_text(analyze.curves_to_csv(result.unimodal_curves))
    print(f"profile: m_p={result.profile.m_p} m_o={result.profile.m_o} "
          f"(method {result.profile.method_used})")
    print(f"wrote {args.out} and {curves_path}")
    return 0


def _cmd_train(args) -> int:
    cfg = harness.load_config(args.config)
    profile = analyze.load_profile(args.profile) if args.profile else None
    log = harness.train(cfg, profile=profile)
    harness.write_metrics(log, args.out)
    print(f"test_acc={log.test_acc!r} test_macro_f1={log.test_macro_f1!r}")
    print(f"wrote {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    gammas = parse_float_list(args.gammas)
    seeds = parse_int_list(args.seeds)
    result = harness.sweep_gamma(cfg, gammas, seeds)
    Path(args.out).write_text(harness.sweep_to_csv(result))
    raw_path = Path(args.out).with_name(Path(args.out).stem + "_raw.csv")
    raw_path.write_text(harness.raw_to_csv(result.raw))
    for row in result.rows:
        print(f"gamma_p={row.gamma_p:g}: mean_acc={row.mean_acc:.4f} "
              f"std={row.std_acc:.4f} diverged={row.n_diverged}/{row.n_seeds}")
    print(f"wrote {args.out} and {raw_path}")
    return 0


def _cmd_compare(args) -> int:
    cfg = harness.load_config(args.config)
    strategies = parse_strategy_names(args.strategies)
    seeds = parse_int_list(args.seeds)
    result = harness.compare_strategies(cfg, strategies, seeds)
    Path(args.out).write_text(harness.compare_to_csv(result))
    raw_path = Path(args.out).with_name(Path(args.out).stem + "_raw.csv")
    raw_path.write_text(harness.raw_to_csv(result.raw))
    for row in result.rows:
        print(f"{row.strategy}: mean_acc={row.mean_acc:.4f} std={row.std_acc:.4f} "
              f"mean_macro_f1={row.mean_macro_f1:.4f} diverged={row.n_diverged}/{row.n_seeds}")
    print(f"wrote {args.out} and {raw_path}")
    return 0


def _cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    ok, errors = harness.run_gradcheck(num_configs=args.configs, eps=args.eps,
                                       tol=args.tol)
    elapsed = time.perf_counter() - t0
    print(f"{len(errors)} configurations, max relative error "
          f"{max(errors):.3e} (tolerance {args.tol:g}), {elapsed:.1f}s")
    print("gradcheck PASS" if ok else "gradcheck FAIL")
    return 0 if ok else 1


def _cmd_bench(args) -> int:
    import numpy as np

    from . import _core_py
    from .numkit import Rng

    backends = [("python", _core_py)]
    try:
        from . import _core
        backends.append(("cython", _core))
    except ImportError:
        print("compiled backend not built; benchmarking the numpy fallback only")

    rng = Rng(123)
    batch, d_in, d_out = args.batch, args.dims, args.dims
    x = np.ascontiguousarray(rng.normal((batch, d_in)))
    w = np.ascontiguousarray(rng.normal((d_out, d_in)))
    b = np.ascontiguousarray(rng.normal(d_out))
    g = np.ascontiguousarray(rng.normal((batch, d_out)))

    results = {}
    for name, impl in backends:
        for _ in range(3):  # warm up
            impl.affine_forward(x, w, b)
        t0 = time.perf_counter()
        for _ in range(args.repeats):
            impl.affine_forward(x, w, b)
        fwd = (time.perf_counter() - t0) / args.repeats
        t0 = time.perf_counter()
        for _ in range(args.repeats):
            impl.affine_backward(x, w, g)
        bwd = (time.perf_counter() - t0) / args.repeats
        results[name] = (fwd, bwd)
        print(f"{name:7s} affine fwd {fwd * 1e6:8.1f} us   bwd {bwd * 1e6:8.1f} us   "
              f"(batch {batch}, {d_in}x{d_out})")
    if len(backends) == 2:
        py = backends[0][1]
        cy = backends[1][1]
        same_fwd = py.affine_forward(x, w, b).tobytes() == cy.affine_forward(x, w, b).tobytes()
        same_bwd = all(a.tobytes() == c.tobytes() for a, c in
                       zip(py.affine_backward(x, w, g), cy.affine_backward(x, w, g)))
        print(f"bitwise parity: forward {'OK' if same_fwd else 'MISMATCH'}, "
              f"backward {'OK' if same_bwd else 'MISMATCH'}")
        speed = results["python"][0] / results["cython"][0]
        print(f"forward speedup: {speed:.1f}x")
    print(f"active backend for this process: {kernels.backend_name()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdmplab",
        description="Synthetic-benchmark lab for modality-prioritized gradient modulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a preset dataset to a directory")
    p.add_argument("--preset", required=True, choices=datagen.PRESET_NAMES)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bayes-mc", type=int, default=10000)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("analyze", help="run modality analysis, write profile JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--subset-fraction", type=float, default=1.0)
    p.add_argument("--method", choices=analyze.M_O_METHODS, default="branch_ranking")
    p.add_argument("--analysis-epochs", type=int, default=None)
    p.add_argument("--early-epoch", type=int, default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("train", help="train one model, write metrics CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--profile", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="gamma_p sweep across seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--gammas", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="strategy comparison across seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--strategies", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--configs", type=int, default=24)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("bench", help="compare kernel backends")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--repeats", type=int, default=2000)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except PdmplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
