"""CSV ingestion and JSON/CSV report writers.

Reports are JSON with floats written by ``repr``, which is the shortest
decimal string that reads back to the same double, so a saved estimate
reloads bit for bit.  Reports carry no timestamps.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InputError
from .families import DataSet, get_family
from .linalg import numerical_rank, thin_svd
from .solvers import CoefficientEstimate, PathEntry, SolutionPath
from .thresholding import parse_rule

FORMAT_VERSION = 1


@dataclass
class Standardization:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.mean.size:
            raise InputError(f"design has {X.shape[1]} columns, model expects {self.mean.size}")
        return (X - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {"mean": _floats(self.mean), "sd": _floats(self.sd)}

    @classmethod
    def from_dict(cls, d) -> "Standardization":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["sd"], dtype=float))


def read_csv_matrix(path) -> tuple[np.ndarray, list[str]]:
    """Numeric CSV with a header row; lines starting with ``#`` are skipped."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
    rows = [r for r in rows if r]
    if not rows:
        raise InputError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if not body:
        raise InputError(f"{path}: no data rows")
    out = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise InputError(f"{path}: row {i + 1} has {len(row)} fields, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise InputError(f"{path}: non-numeric value {cell.strip()!r} at row {i + 1}, column {header[j]!r}") from None
            if not math.isfinite(out[i, j]):
                raise InputError(f"{path}: non-finite value at row {i + 1}, column {header[j]!r}")
    return out, header


def standardize(X: np.ndarray) -> tuple[np.ndarray, Standardization]:
    """Center columns and scale them to unit (population) standard deviation."""
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd == 0):
        j = int(np.flatnonzero(sd == 0)[0])
        raise InputError(f"cannot standardize constant column {j}")
    st = Standardization(mean, sd)
    return st.apply(X), st


def load_dataset(design_path, response_path, family, intercept: bool = True, standardize_design: bool = False):
    """Read a design and a response CSV into a :class:`DataSet`.

    Returns ``(data, standardization)``; the latter is ``None`` unless
    ``standardize_design`` is set.
    """
    X, xnames = read_csv_matrix(design_path)
    Y, ynames = read_csv_matrix(response_path)
    if X.shape[0] != Y.shape[0]:
        raise InputError(f"design has {X.shape[0]} rows but response has {Y.shape[0]}")
    fam = get_family(family)
    if fam.tag == "bernoulli_logit":
        bad = np.argwhere((Y != 0) & (Y != 1))
        if bad.size:
            i, j = bad[0]
            raise InputError(
                f"{response_path}: bernoulli response must be 0 or 1; found {float(Y[i, j])!r} "
                f"at row {i + 1}, column {ynames[j]!r}"
            )
    st = None
    if standardize_design:
        X, st = standardize(X)
    data = DataSet.from_predictors(X, Y, fam, intercept=intercept)
    return replace(data, names=(tuple(xnames), tuple(ynames))), st


def write_csv_matrix(path, M: np.ndarray, header: list[str], comments: list[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(M):
            w.writerow([repr(float(v)) for v in row])


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def matrix_to_dict(M: np.ndarray) -> dict:
    M = np.asarray(M, dtype=float)
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": _floats(M)}


def matrix_from_dict(d) -> np.ndarray:
    data = np.asarray(d["data"], dtype=float)
    if data.size != d["rows"] * d["cols"]:
        raise InputError("matrix record size does not match its dimensions")
    return data.reshape(d["rows"], d["cols"])


def estimate_to_dict(est: CoefficientEstimate) -> dict:
    return {
        "rule": est.rule.spec(),
        "intercept": est.intercept,
        "scale": float(est.scale),
        "rank": int(est.rank),
        "objective": _finite_or_none(est.objective),
        "converged": bool(est.converged),
        "iterations": int(est.iterations),
        "fixed_point_residual": _finite_or_none(est.fixed_point_residual),
        "B": matrix_to_dict(est.B),
    }


def estimate_from_dict(d) -> CoefficientEstimate:
    B = matrix_from_dict(d["B"])
    intercept = bool(d["intercept"])
    svd = thin_svd(B[1:] if intercept else B)
    rank = int(d.get("rank", numerical_rank(svd.s)))
    return CoefficientEstimate(
        B=B,
        intercept=intercept,
        svd=svd,
        rank=rank,
        objective=d.get("objective") if d.get("objective") is not None else math.nan,
        converged=bool(d.get("converged", True)),
        iterations=int(d.get("iterations", 0)),
        fixed_point_residual=d.get("fixed_point_residual") if d.get("fixed_point_residual") is not None else math.nan,
        rule=parse_rule(d["rule"]),
        scale=float(d.get("scale", 1.0)),
    )


def model_to_dict(est: CoefficientEstimate, data: DataSet, st: Standardization | None = None) -> dict:
    """An estimate plus what is needed to apply it to a new design."""
    return {
        "format": FORMAT_VERSION,
        "kind": "estimate",
        "family": data.family.tag,
        "design_columns": list(data.names[0]) if data.names else None,
        "response_columns": list(data.names[1]) if data.names else None,
        "standardization": st.to_dict() if st is not None else None,
        "estimate": estimate_to_dict(est),
    }


def path_to_dict(path: SolutionPath, data: DataSet) -> dict:
    return {
        "format": FORMAT_VERSION,
        "kind": "path",
        "family": data.family.tag,
        "mode": path.mode,
        "rule": path.rule.spec(),
        "entries": [
            {
                "value": float(e.value),
                "eta": float(e.eta),
                "rank": int(e.rank),
                "failed": bool(e.failed),
                "message": e.message,
                "estimate": estimate_to_dict(e.estimate) if e.estimate is not None else None,
            }
            for e in path.entries
        ],
    }


def path_from_dict(d) -> SolutionPath:
    if d.get("kind") != "path":
        raise InputError("not a solution path document")
    entries = [
        PathEntry(
            e["value"], e["eta"], estimate_from_dict(e["estimate"]) if e["estimate"] else None, e["failed"], e["message"]
        )
        for e in d["entries"]
    ]
    return SolutionPath(d["mode"], parse_rule(d["rule"]), entries)


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_json(path, doc: dict) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
