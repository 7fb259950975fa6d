"""``rrglm`` command-line interface.

Exit status is 0 on success, 1 for bad input and 2 for a numerical failure;
a numerical failure also writes ``diagnostics.json`` to the output
directory.
"""
from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    Standardization,
    estimate_from_dict,
    load_dataset,
    model_to_dict,
    path_to_dict,
    read_csv_matrix,
    read_json,
    write_csv_matrix,
    write_json,
)
from .errors import DescentError, EmptyExtractionError, InputError, RuleUsageError
from .extraction import CoolingSchedule, extract_type1, extract_type2, progressive_reduce
from .families import DataSet, get_family
from .solvers import FitOptions, constrained_fit, fit_path, penalized_fit
from .thresholding import parse_rule, quantile
from .tuning import DEFAULT_ETA_GRID, lambda_grid, pcv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated integers, got {text!r}") from None


def _grid_spec(text: str) -> tuple[int, float]:
    parts = text.split(",")
    try:
        L, ratio = int(parts[0]), float(parts[1])
    except (ValueError, IndexError):
        raise InputError(f"--grid expects L,ratio, got {text!r}") from None
    return L, ratio


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="worker threads for independent fits")

    data = _Parser(add_help=False)
    data.add_argument("--design", required=True, help="design CSV with header")
    data.add_argument("--response", required=True, help="response CSV with header")
    data.add_argument("--family", default="gaussian", choices=["gaussian", "bernoulli"])
    data.add_argument("--standardize", action="store_true", help="center and scale predictor columns")
    data.add_argument("--no-intercept", action="store_true")
    data.add_argument("--max-iter", type=int, default=5000)
    data.add_argument("--tol", type=float, default=1e-9)

    grid = _Parser(add_help=False)
    grid.add_argument("--rule", required=True, help="e.g. hard, soft:lambda=1, hardridge:eta=0.1, quantile:eta=0")
    grid.add_argument("--grid", default="20,0.01", help="L,ratio for the lambda grid (default 20,0.01)")
    grid.add_argument("--ranks", help="comma-separated ranks for the quantile rule")
    grid.add_argument("--eta-grid", help="comma-separated eta values crossed with the grid")

    p = _Parser(prog="rrglm", description="Reduced-rank vector GLMs by singular value thresholding.")
    p.add_argument("--version", action="version", version=f"rrglm {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", parents=[common, data], help="fit a single estimate")
    g = f.add_mutually_exclusive_group(required=True)
    g.add_argument("--rule", help="penalised fit, e.g. hard:lambda=2")
    g.add_argument("--rank", type=int, help="rank-constrained fit")
    f.add_argument("--eta", type=float, default=0.0, help="ridge weight for --rank")

    sub.add_parser("path", parents=[common, data, grid], help="fit a solution path")

    t = sub.add_parser("tune", parents=[common, data, grid], help="path plus projective cross-validation")
    t.add_argument("--folds", type=int, default=5)
    t.add_argument("--bic", action="store_true", help="add the BIC correction to the CV deviance")
    t.add_argument("--eta", type=float, help="ridge weight of the fold refits (default: each candidate's eta)")

    r = sub.add_parser("reduce", parents=[common, data], help="progressive rank reduction of the design")
    r.add_argument("--rank", type=int, required=True, help="target rank")
    r.add_argument("--decay", type=float, default=0.7)
    r.add_argument("--inner-iter", type=int, default=10)
    r.add_argument("--eta", type=float, default=0.0)

    e = sub.add_parser("extract", parents=[common], help="Type-I or Type-II features from a fitted model")
    e.add_argument("--model", required=True)
    e.add_argument("--design", required=True)
    e.add_argument("--type", default="1", choices=["1", "1s", "2"], help="1, 1s (scaled by D) or 2")

    q = sub.add_parser("predict", parents=[common], help="mean responses for a new design")
    q.add_argument("--model", required=True)
    q.add_argument("--design", required=True)
    q.add_argument("--labels", action="store_true", help="0/1 labels by a 0.5 cut (bernoulli)")

    v = sub.add_parser("verify", parents=[common], help="run the oracle self-checks")
    v.add_argument("--trials", type=int, default=200)
    return p


def _load(args) -> tuple[DataSet, Standardization | None]:
    return load_dataset(args.design, args.response, args.family, not args.no_intercept, args.standardize)


def _opts(args) -> FitOptions:
    return FitOptions(max_iter=args.max_iter, tol=args.tol)


def _say(msg: str) -> None:
    print(msg, file=sys.stdout)


def _build_path(args, data: DataSet):
    template = parse_rule(args.rule)
    eta_grid = _float_list(args.eta_grid) if args.eta_grid else None
    if eta_grid is None and template.kind == "hard_ridge" and "eta=" not in args.rule:
        eta_grid = list(DEFAULT_ETA_GRID)
    if template.kind == "quantile":
        grid = _int_list(args.ranks) if args.ranks else list(range(1, min(data.p, data.m) + 1))
        return grid, fit_path(data, template, grid, _opts(args), eta_grid, args.jobs)
    L, ratio = _grid_spec(args.grid)
    grid = lambda_grid(data, L, ratio, template)
    return grid, fit_path(data, template, grid, _opts(args), eta_grid, args.jobs)


def cmd_fit(args, out: Path) -> int:
    data, st = _load(args)
    if args.rank is not None:
        est = constrained_fit(data, args.rank, args.eta, _opts(args))
    else:
        est = penalized_fit(data, parse_rule(args.rule), _opts(args))
    write_json(out / "estimate.json", model_to_dict(est, data, st))
    _say(
        f"rule={est.rule.spec()} rank={est.rank} objective={est.objective!r} "
        f"iterations={est.iterations} converged={est.converged} residual={est.fixed_point_residual:.3e}"
    )
    if not est.converged:
        print("warning: iteration limit reached before convergence", file=sys.stderr)
    return 0


def cmd_path(args, out: Path) -> int:
    data, _ = _load(args)
    _, path = _build_path(args, data)
    write_json(out / "path.json", path_to_dict(path, data))
    for e in path:
        status = f"FAILED {e.message}" if e.failed else f"rank={e.rank}"
        _say(f"value={e.value!r} eta={e.eta!r} {status}")
    return 0


def cmd_tune(args, out: Path) -> int:
    data, st = _load(args)
    _, path = _build_path(args, data)
    report = pcv(data, path, args.folds, args.eta, args.bic, args.seed, args.jobs)
    doc = {
        "kind": "pcv_report",
        "family": data.family.tag,
        "rule": path.rule.spec(),
        "mode": path.mode,
        "n": data.n,
        "p": data.p,
        "m": data.m,
        **report.to_dict(),
    }
    write_json(out / "report.json", doc)
    for c in report.candidates:
        score = "inf" if c.failed else repr(c.score)
        _say(f"[{c.index}] value={c.value!r} eta={c.eta!r} rank={c.rank} score={score}")
    if report.selected is None:
        raise ArithmeticError("every PCV candidate failed")
    best = path.entries[report.selected]
    write_json(out / "estimate.json", model_to_dict(best.estimate, data, st))
    _say(f"selected index={report.selected} rank={best.rank} value={best.value!r}")
    return 0


def cmd_reduce(args, out: Path) -> int:
    data, _ = _load(args)
    sched = CoolingSchedule(data.p, args.rank, args.decay, args.inner_iter)
    res = progressive_reduce(data, args.rank, sched, args.eta, args.tol)
    cols = [f"z{j + 1}" for j in range(args.rank)]
    comments = [
        f"source design: {args.design}",
        f"source response: {args.response}",
        f"target rank: {args.rank}",
        "schedule: " + " ".join(str(r) for r in res.ranks),
    ]
    write_csv_matrix(out / "reduced_design.csv", res.data.X_slope, cols, comments)
    write_csv_matrix(out / "transform.csv", res.U, cols, comments + ["rows follow the design columns"])
    _say(f"reduced {data.p} -> {args.rank} columns; schedule {res.ranks}")
    return 0


def _load_model(path):
    doc = read_json(path)
    if doc.get("kind") != "estimate":
        raise InputError(f"{path} is not a fitted model file")
    st = Standardization.from_dict(doc["standardization"]) if doc.get("standardization") else None
    return doc, estimate_from_dict(doc["estimate"]), st


def _model_design(est, st, design_path) -> np.ndarray:
    X, _ = read_csv_matrix(design_path)
    if st is not None:
        X = st.apply(X)
    p = est.B.shape[0] - (1 if est.intercept else 0)
    if X.shape[1] != p:
        raise InputError(f"design has {X.shape[1]} columns, model expects {p}")
    return np.column_stack([np.ones(X.shape[0]), X]) if est.intercept else X


def cmd_extract(args, out: Path) -> int:
    _, est, st = _load_model(args.model)
    X = _model_design(est, st, args.design)
    if args.type == "2":
        res = extract_type2(est, X)
    else:
        res = extract_type1(est, X, scaled=args.type == "1s")
    cols = [f"f{j + 1}" for j in range(res.r)]
    comments = [f"model: {args.model}", f"extraction: {res.kind}", f"rank: {res.r}"]
    write_csv_matrix(out / "features.csv", res.features, cols, comments)
    write_csv_matrix(out / "feature_transform.csv", res.transform, cols, comments)
    _say(f"{res.kind}: {res.features.shape[0]} x {res.r} features")
    return 0


def cmd_predict(args, out: Path) -> int:
    doc, est, st = _load_model(args.model)
    fam = get_family(doc["family"])
    X = _model_design(est, st, args.design)
    mu = fam.mean(X @ est.B)
    if args.labels:
        if fam.tag != "bernoulli_logit":
            raise InputError("--labels needs a bernoulli model")
        mu = (mu > 0.5).astype(float)
    names = doc.get("response_columns") or [f"y{k + 1}" for k in range(mu.shape[1])]
    write_csv_matrix(out / "predictions.csv", mu, list(names))
    _say(f"wrote {mu.shape[0]} x {mu.shape[1]} predictions")
    return 0


def cmd_verify(args, out: Path) -> int:
    from . import oracles
    from .thresholding import apply_matrix, berhu, hard, hard_ridge, ridge, soft

    rng = np.random.default_rng(args.seed)
    results = []
    for rule in (soft(0.7), hard(0.9), ridge(0.8), hard_ridge(0.9, 0.5), berhu(0.6, 1.0), quantile(2, 0.3)):
        worst = 0.0
        for _ in range(20):
            Y = rng.standard_normal((4, 3))
            opt = oracles.matrix_approx_oracle(Y, rule, 1e-4)
            B = apply_matrix(rule, Y)
            if rule.kind == "quantile":
                val = 0.5 * float(np.sum((Y - B) ** 2)) + 0.5 * rule.eta * float(np.sum(B**2))
            else:
                val = oracles.approx_objective(Y, B, rule)
            worst = max(worst, val - opt.value)
        results.append((f"matrix_approx {rule.kind}", oracles.OracleVerdict.from_gap(worst, 1e-4)))
    results.append(("von_neumann", oracles.von_neumann_trials(args.trials * 5, args.seed)))
    for rule in (soft(0.7), ridge(0.8), berhu(0.6, 1.0)):
        Y = rng.standard_normal((4, 3))
        results.append((f"perturbation {rule.kind}", oracles.perturbation_check(Y, rule, args.trials, args.seed)))
    for fam in ("gaussian", "bernoulli"):
        X = rng.standard_normal((30, 4))
        B = 0.5 * rng.standard_normal((5, 3))
        data = DataSet.from_predictors(X, (rng.random((30, 3)) < 0.5).astype(float), fam)
        results.append((f"gradcheck {fam}", oracles.finite_diff_gradcheck(fam, data, B)))
    ok = True
    for name, v in results:
        ok &= v.passed
        _say(f"{'PASS' if v.passed else 'FAIL'} {name} gap={v.gap:.3e}")
    return 0 if ok else 2


COMMANDS = {
    "fit": cmd_fit,
    "path": cmd_path,
    "tune": cmd_tune,
    "reduce": cmd_reduce,
    "extract": cmd_extract,
    "predict": cmd_predict,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = _build_parser()
    out = None
    try:
        args = parser.parse_args(argv)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out)
    except (InputError, RuleUsageError, EmptyExtractionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DescentError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if out is not None:
            write_json(
                out / "diagnostics.json",
                {
                    "kind": "diagnostics",
                    "error": type(exc).__name__,
                    "message": str(exc),
                    "argv": list(sys.argv[1:] if argv is None else argv),
                    "traceback": traceback.format_exc().splitlines(),
                },
            )
        return 2


if __name__ == "__main__":
    sys.exit(main())
