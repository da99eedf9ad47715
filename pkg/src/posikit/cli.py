"""Command-line interface with reproducible, machine-readable output.

Exit codes: 0 success, 1 usage or validation problem, 2 data error (parsing,
rank), 3 infeasible request. All results go to stdout; diagnostics and
warnings go to stderr. JSON output is byte-identical for identical
configurations including the seed, regardless of --threads.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .constants import (
    ConstantEstimate,
    ErrorModel,
    asymptotic_cap_constant,
    cap_bonferroni_bound,
    orth_constant,
    posi1_constant,
    posi_constant,
    scheffe_constant,
    _nominal_pair_count,
)
from .design import (
    CanonicalDesign,
    ModelId,
    ModelUniverse,
    canonicalize,
    direction_stream,
    load_design,
)
from .errors import DataError, InfeasibleError
from .families import exchangeable_ratio_table, worst_posi1_table
from .geometry import orthogonality_census, verify_duality
from .inference import (
    TargetSpec,
    coverage_experiment,
    posi_intervals,
    spar1_select,
    spar_select,
)

_STREAM_WARN_P = 16


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_df(text: str) -> ErrorModel:
    if text.strip().lower() in ("inf", "infinity"):
        return ErrorModel.known_sigma()
    try:
        r = int(text)
    except ValueError:
        raise _usage_error(f"--df must be a positive integer or 'inf', got {text!r}")
    if r < 1:
        raise _usage_error("--df must be >= 1")
    return ErrorModel.with_df(r)


def _usage_error(message: str) -> SystemExit:
    print(f"error: {message}", file=sys.stderr)
    return SystemExit(1)


def _resolve_threads(text: str) -> int:
    # BLAS already parallelizes the inner products, so extra Python-level
    # workers rarely help; "auto" stays single-threaded. Results are
    # bitwise identical for every setting.
    if text == "auto":
        return 1
    n = int(text)
    if n < 1:
        raise _usage_error("--threads must be >= 1")
    return n


def _load_vector(path: str, expected: int, what: str) -> np.ndarray:
    values = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                for tok in line.replace(",", " ").split():
                    try:
                        values.append(float(tok))
                    except ValueError:
                        raise DataError(
                            f"non-numeric {what} value {tok!r} at line {lineno}"
                        ) from None
    except OSError as exc:
        raise DataError(f"cannot read {what} file {path!r}: {exc}") from exc
    if len(values) != expected:
        raise DataError(f"{what} file has {len(values)} values, expected {expected}")
    return np.asarray(values)


def _load_canonical(args) -> tuple[CanonicalDesign, ModelUniverse]:
    if not getattr(args, "design", None):
        raise _usage_error("this command requires --design")
    dm = load_design(
        args.design,
        header=args.header,
        intercept=args.intercept,
        rank_tolerance=args.rank_tolerance,
    )
    form = getattr(args, "form", "upper_triangular")
    design = canonicalize(dm, form=form)
    universe = ModelUniverse.from_spec(getattr(args, "universe", "all"), p=design.p)
    return design, universe


def _warn_large_stream(design: CanonicalDesign, universe: ModelUniverse, n_samples: int):
    hint = _nominal_pair_count(universe, design.p)
    if design.p > _STREAM_WARN_P and hint is not None and hint > (1 << 20):
        gen_s = hint * 2e-6
        mc_s = hint * max(n_samples, 1) * 2.0 / 5e9
        print(
            f"warning: p={design.p} with this universe streams about {hint} "
            f"directions; projected time ~{gen_s + mc_s:.0f}s "
            f"(~{gen_s:.0f}s enumeration + ~{mc_s:.0f}s Monte Carlo)",
            file=sys.stderr,
        )


def _df_json(em: ErrorModel):
    return "inf" if em.sigma_known else int(em.df)


def _base_payload(args, *, k=None, alpha=None, em=None, mc_samples=None,
                  mc_se=None, seed=None, d=None, p=None, direction_count=None,
                  universe=None) -> dict:
    return {
        "K": k,
        "alpha": alpha,
        "df": _df_json(em) if em is not None else None,
        "mc_samples": mc_samples,
        "mc_standard_error": mc_se,
        "seed": seed,
        "d": d,
        "p": p,
        "direction_count": direction_count,
        "universe": universe,
        "tool_version": __version__,
    }


def _payload_from_estimate(args, est: ConstantEstimate, design=None) -> dict:
    return _base_payload(
        args,
        k=est.k,
        alpha=est.alpha,
        em=est.error_model,
        mc_samples=est.mc_samples,
        mc_se=est.mc_standard_error,
        seed=est.seed,
        d=design.d if design is not None else None,
        p=design.p if design is not None else None,
        direction_count=est.direction_count,
        universe=est.universe.spec_string() if est.universe is not None else None,
    )


def _emit(payload: dict, args, rows_key: str | None = None):
    fmt = args.output
    if fmt == "json":
        print(json.dumps(payload, sort_keys=True))
        return
    if fmt == "csv":
        rows = payload.get(rows_key) if rows_key else None
        if isinstance(rows, list) and rows and isinstance(rows[0], dict):
            cols = list(rows[0].keys())
            print(",".join(cols))
            for row in rows:
                print(",".join(_csv_cell(row[c]) for c in cols))
        else:
            scalars = {k: v for k, v in payload.items()
                       if not isinstance(v, (list, dict))}
            print(",".join(scalars.keys()))
            print(",".join(_csv_cell(v) for v in scalars.values()))
        return
    for key in sorted(payload):
        value = payload[key]
        if isinstance(value, list):
            print(f"{key}:")
            for row in value:
                print(f"  {row}")
        else:
            print(f"{key}: {value}")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    return str(value)


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------


def _cmd_k(args) -> int:
    design, universe = _load_canonical(args)
    em = _parse_df(args.df)
    _warn_large_stream(design, universe, args.mc_samples)
    est = posi_constant(
        design,
        universe,
        alpha=args.alpha,
        error_model=em,
        n_samples=args.mc_samples,
        seed=args.seed,
        threads=_resolve_threads(args.threads),
    )
    _emit(_payload_from_estimate(args, est, design), args)
    return 0


def _cmd_k1(args) -> int:
    design, universe = _load_canonical(args)
    em = _parse_df(args.df)
    _warn_large_stream(design, universe, args.mc_samples)
    est = posi1_constant(
        design,
        universe,
        predictor=args.predictor,
        alpha=args.alpha,
        error_model=em,
        n_samples=args.mc_samples,
        seed=args.seed,
        threads=_resolve_threads(args.threads),
    )
    payload = _payload_from_estimate(args, est, design)
    payload["predictor"] = args.predictor
    _emit(payload, args)
    return 0


def _cmd_scheffe(args) -> int:
    em = _parse_df(args.df)
    d = _dimension_for(args)
    est = scheffe_constant(args.alpha, d, em)
    payload = _payload_from_estimate(args, est)
    payload["d"] = d
    _emit(payload, args)
    return 0


def _cmd_orth(args) -> int:
    em = _parse_df(args.df)
    d = _dimension_for(args)
    est = orth_constant(args.alpha, d, em)
    payload = _payload_from_estimate(args, est)
    payload["d"] = d
    _emit(payload, args)
    return 0


def _dimension_for(args) -> int:
    if getattr(args, "d", None):
        return args.d
    if getattr(args, "design", None):
        design, _ = _load_canonical(args)
        return design.d
    raise _usage_error("provide --d or --design")


def _cmd_bound(args) -> int:
    if args.direction_count is not None:
        count = args.direction_count
        d = args.d
        if d is None:
            raise _usage_error("--direction-count also needs --d")
        p = None
    else:
        design, universe = _load_canonical(args)
        _warn_large_stream(design, universe, 0)
        count = direction_stream(design, universe).count
        d = design.d
        p = design.p
    est = cap_bonferroni_bound(count, d, args.alpha)
    payload = _payload_from_estimate(args, est)
    payload["d"] = d
    payload["p"] = p
    a_hat = count ** (1.0 / d)
    payload["cardinality_rate"] = a_hat
    payload["asymptotic_rate_constant"] = (
        asymptotic_cap_constant(a_hat) if a_hat > 1.0 else None
    )
    _emit(payload, args)
    return 0


def _cmd_intervals(args) -> int:
    design, universe = _load_canonical(args)
    em = _parse_df(args.df)
    y = design.reduce_response(
        _load_vector(args.response, design.basis.shape[0], "response")
    )
    model = ModelId(int(t) for t in args.model.split(","))
    if args.k_source == "scheffe":
        est = scheffe_constant(args.alpha, design.d, em)
    else:
        est = posi_constant(
            design, universe, alpha=args.alpha, error_model=em,
            n_samples=args.mc_samples, seed=args.seed,
            threads=_resolve_threads(args.threads),
        )
    target = None
    if args.mu:
        target = TargetSpec.from_mean(
            design, _load_vector(args.mu, design.basis.shape[0], "mu")
        )
    report = posi_intervals(design, y, args.sigma_hat, em, model, est, target)
    payload = _payload_from_estimate(args, est, design)
    payload["model"] = list(model.members)
    payload["sigma_hat"] = args.sigma_hat
    payload["intervals"] = [
        {
            "predictor": row.predictor,
            "name": row.name,
            "estimate": row.estimate,
            "lower": row.lower,
            "upper": row.upper,
            "t_observed": row.t_observed,
            "K_used": row.k_used,
            "covers_target": row.covers_target,
        }
        for row in report.rows
    ]
    _emit(payload, args, rows_key="intervals")
    return 0


def _cmd_spar(args) -> int:
    design, universe = _load_canonical(args)
    y = design.reduce_response(
        _load_vector(args.response, design.basis.shape[0], "response")
    )
    if args.predictor is not None:
        model, stat = spar1_select(design, y, args.sigma_hat, universe, args.predictor)
    else:
        model, stat = spar_select(design, y, args.sigma_hat, universe)
    payload = _base_payload(
        args, alpha=None, em=None, seed=None, d=design.d, p=design.p,
        universe=universe.spec_string(),
    )
    payload["selected_model"] = list(model.members)
    payload["max_abs_t"] = stat
    payload["sigma_hat"] = args.sigma_hat
    payload["predictor"] = args.predictor
    _emit(payload, args)
    return 0


def _cmd_coverage(args) -> int:
    design, universe = _load_canonical(args)
    em = _parse_df(args.df)
    threads = _resolve_threads(args.threads)
    if args.k_source == "scheffe":
        est: ConstantEstimate | float = scheffe_constant(args.alpha, design.d, em)
    elif args.k_source == "naive":
        from scipy import stats as _st

        est = float(
            _st.norm.ppf(1 - args.alpha / 2)
            if em.sigma_known
            else _st.t.ppf(1 - args.alpha / 2, em.df)
        )
    else:
        est = posi_constant(
            design, universe, alpha=args.alpha, error_model=em,
            n_samples=args.mc_samples, seed=args.seed, threads=threads,
        )
    selector: str | tuple = "spar"
    if args.selector.startswith("spar1:"):
        selector = ("spar1", int(args.selector.split(":", 1)[1]))
    elif args.selector != "spar":
        raise _usage_error(f"unknown --selector {args.selector!r}")
    target = None
    if args.mu:
        target = TargetSpec.from_mean(
            design, _load_vector(args.mu, design.basis.shape[0], "mu")
        )
    result = coverage_experiment(
        design, universe, selector, args.alpha, em, est,
        replications=args.replications, seed=args.seed, target=target,
    )
    k_value = est.k if isinstance(est, ConstantEstimate) else est
    payload = _base_payload(
        args, k=k_value, alpha=args.alpha, em=em,
        mc_samples=args.mc_samples if isinstance(est, ConstantEstimate) else 0,
        mc_se=(est.mc_standard_error if isinstance(est, ConstantEstimate) else 0.0),
        seed=args.seed, d=design.d, p=design.p,
        direction_count=(est.direction_count if isinstance(est, ConstantEstimate) else None),
        universe=universe.spec_string(),
    )
    payload["k_source"] = args.k_source
    payload["selector"] = args.selector
    payload["replications"] = args.replications
    payload["coverage"] = result.coverage
    payload["binomial_se"] = result.binomial_se
    _emit(payload, args)
    return 0


def _cmd_analyze(args) -> int:
    design, universe = _load_canonical(args)
    _warn_large_stream(design, universe, 0)
    streamed = direction_stream(design, universe)
    count = streamed.count
    skips = streamed.degenerate_skips
    distinct = direction_stream(design, universe, dedup="up_to_sign").count
    census = orthogonality_census(direction_stream(design, universe))
    payload = _base_payload(
        args, d=design.d, p=design.p, direction_count=count,
        universe=universe.spec_string(),
    )
    payload["distinct_directions"] = distinct
    payload["degenerate_skips"] = skips
    payload["orthogonality_histogram"] = {
        str(k): v for k, v in census.histogram.items()
    }
    if design.d == design.p:
        report = verify_duality(design)
        payload["duality"] = {
            "matched_pairs": report.matched_pairs,
            "max_direction_mismatch": report.max_direction_mismatch,
            "max_norm_product_error": report.max_norm_product_error,
        }
    else:
        payload["duality"] = None
    _emit(payload, args)
    return 0


def _cmd_family(args) -> int:
    em = ErrorModel.known_sigma()
    if args.family == "exchangeable":
        p_list = [int(t) for t in args.p_list.split(",")]
        a_grid = [float(t) for t in args.a_grid.split(",")] if args.a_grid else None
        rows = exchangeable_ratio_table(
            p_list, alpha=args.alpha, n_samples=args.mc_samples,
            seed=args.seed, a_grid=a_grid, threads=_resolve_threads(args.threads),
        )
        table = [
            {"p": r.p, "best_a": r.best_a, "K": r.k,
             "mc_standard_error": r.mc_standard_error, "ratio": r.ratio}
            for r in rows
        ]
        payload = _base_payload(args, alpha=args.alpha, em=em,
                                mc_samples=args.mc_samples, seed=args.seed)
        payload["family"] = "exchangeable"
        payload["rows"] = table
        payload["ratio_denominator"] = "sqrt(2 log p)"
        _emit(payload, args, rows_key="rows")
        return 0
    if args.family == "worst-posi1":
        c_grid = [float(t) for t in args.c_grid.split(",")] if args.c_grid else None
        rows = worst_posi1_table(
            args.p, alpha=args.alpha, n_samples=args.mc_samples,
            seed=args.seed, c_grid=c_grid,
        )
        table = [
            {"p": r.p, "c": r.c, "K1": r.k1,
             "mc_standard_error": r.mc_standard_error, "ratio": r.ratio}
            for r in rows
        ]
        payload = _base_payload(args, alpha=args.alpha, em=em,
                                mc_samples=args.mc_samples, seed=args.seed,
                                p=args.p)
        payload["family"] = "worst-posi1"
        payload["rows"] = table
        payload["sup_ratio"] = max(r.ratio for r in rows)
        payload["ratio_denominator"] = "sqrt(p)"
        _emit(payload, args, rows_key="rows")
        return 0
    raise _usage_error(f"unknown family {args.family!r}")


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _add_common(sub, design=True, mc=True):
    sub.add_argument("--alpha", type=float, default=0.05)
    sub.add_argument("--df", default="inf",
                     help="error degrees of freedom, integer or 'inf'")
    sub.add_argument("--output", choices=("json", "csv", "text"), default="json")
    sub.add_argument("--threads", default="auto")
    if design:
        sub.add_argument("--design", help="design matrix file (CSV or whitespace)")
        sub.add_argument("--header", action="store_true",
                         help="first line of the design file is a header")
        sub.add_argument("--intercept", action="store_true",
                         help="prepend a constant column")
        sub.add_argument("--rank-tolerance", type=float, default=1e-10)
        sub.add_argument("--universe", default="all",
                         help="model universe spec, e.g. 'size<=2&forced=1'")
    if mc:
        sub.add_argument("--mc-samples", type=int, default=100_000)
        sub.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="posikit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("k", parents=[], help="simultaneous max-|t| constant")
    _add_common(sub)
    sub.set_defaults(handler=_cmd_k)

    sub = commands.add_parser("k1", help="single-predictor constant")
    _add_common(sub)
    sub.add_argument("--predictor", type=int, required=True)
    sub.set_defaults(handler=_cmd_k1)

    sub = commands.add_parser("scheffe", help="Scheffe constant (closed form)")
    _add_common(sub, mc=False)
    sub.add_argument("--d", type=int)
    sub.set_defaults(handler=_cmd_scheffe)

    sub = commands.add_parser("orth", help="orthogonal-design constant (closed form)")
    _add_common(sub, mc=False)
    sub.add_argument("--d", type=int)
    sub.set_defaults(handler=_cmd_orth)

    sub = commands.add_parser("bound", help="sphere-cap union upper bound")
    _add_common(sub, mc=False)
    sub.add_argument("--direction-count", type=int)
    sub.add_argument("--d", type=int)
    sub.set_defaults(handler=_cmd_bound)

    sub = commands.add_parser("intervals", help="simultaneous confidence intervals")
    _add_common(sub)
    sub.add_argument("--response", required=True)
    sub.add_argument("--sigma-hat", type=float, required=True)
    sub.add_argument("--model", required=True, help="comma-separated 1-based indices")
    sub.add_argument("--k-source", choices=("posi", "scheffe"), default="posi")
    sub.add_argument("--mu", help="optional mean vector file for coverage flags")
    sub.set_defaults(handler=_cmd_intervals)

    sub = commands.add_parser("spar", help="significance-hunting selection")
    _add_common(sub, mc=False)
    sub.add_argument("--response", required=True)
    sub.add_argument("--sigma-hat", type=float, required=True)
    sub.add_argument("--predictor", type=int,
                     help="restrict to models containing this predictor")
    sub.set_defaults(handler=_cmd_spar)

    sub = commands.add_parser("coverage", help="family-wise coverage experiment")
    _add_common(sub)
    sub.add_argument("--selector", default="spar", help="spar or spar1:<j>")
    sub.add_argument("--replications", type=int, default=10_000)
    sub.add_argument("--mu", help="mean vector file (length n)")
    sub.add_argument("--k-source", choices=("posi", "scheffe", "naive"),
                     default="posi")
    sub.set_defaults(handler=_cmd_coverage)

    sub = commands.add_parser("analyze", help="direction counts, census, duality")
    _add_common(sub, mc=False)
    sub.add_argument("--form", choices=("upper_triangular", "symmetric"),
                     default="upper_triangular")
    sub.set_defaults(handler=_cmd_analyze)

    sub = commands.add_parser("family", help="tables for the analyzed design families")
    _add_common(sub, design=False)
    sub.add_argument("family", choices=("exchangeable", "worst-posi1"))
    sub.add_argument("--p-list", default="5,8,11")
    sub.add_argument("--a-grid")
    sub.add_argument("--p", type=int, default=2000)
    sub.add_argument("--c-grid")
    sub.set_defaults(handler=_cmd_family)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible request: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
