"""JSON and CSV import/export for models, belief sets, results and simulation data.

Floats go through ``json`` (shortest round-trip repr), so a value written
and read back is bit-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .belief import BeliefSets, check_belief
from .lp import LPInstance
from .model import GridworldConfig, ModelError, PerceptionMDP
from .policy import PerceptionActionPolicy
from .simulator import ResidenceHistogram, RolloutTrace
from .solver import SolveResult

RESULT_FILE = "result.json"
MANIFEST_FILE = "manifest.json"


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, allow_nan=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def load_model_file(path) -> PerceptionMDP | GridworldConfig:
    """Read a model or gridworld config file.

    Raises ``json.JSONDecodeError`` on malformed JSON and ``ModelError`` on a
    structurally wrong document.  A document with a ``width`` key is taken to
    be a gridworld config.
    """
    data = read_json(path)
    if not isinstance(data, dict):
        raise ModelError("top-level JSON value must be an object")
    if "width" in data:
        try:
            return GridworldConfig.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"bad gridworld config: {exc}") from exc
    return PerceptionMDP.from_dict(data, name=Path(path).stem)


def save_model(model: PerceptionMDP, path) -> None:
    write_json(path, model.to_dict())


def beliefs_to_json(rows) -> list[list[float]]:
    return np.asarray(rows, dtype=float).tolist()


def beliefs_from_json(data, num_states: int | None = None) -> np.ndarray:
    rows = np.array(data, dtype=float)
    if rows.ndim != 2:
        raise ValueError("belief set must be a list of equal-length vectors")
    for row in rows:
        check_belief(row, num_states, tol=1e-9)
    return rows


def sets_to_dict(sets: BeliefSets) -> dict:
    return {
        "posteriors": beliefs_to_json(sets.posteriors),
        "priors": beliefs_to_json(sets.priors),
        "prior_index": sets.prior_index.tolist(),
        "vertex_index": sets.vertex_index.tolist(),
        "num_prior_images": sets.num_prior_images,
        "initial": list(sets.initial),
    }


def sets_from_dict(data: dict) -> BeliefSets:
    arrays = [np.array(data["posteriors"], dtype=float), np.array(data["priors"], dtype=float),
              np.array(data["prior_index"], dtype=int), np.array(data["vertex_index"], dtype=int)]
    for arr in arrays:
        arr.setflags(write=False)
    return BeliefSets(*arrays, int(data["num_prior_images"]), tuple(int(i) for i in data.get("initial", ())))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def save_result(result: SolveResult, out_dir) -> Path:
    """Write ``result.json`` plus the value, action and alpha CSV tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "model": result.model.to_dict(),
        "model_name": result.model.name,
        "sets": sets_to_dict(result.sets),
        "V": result.V.tolist(),
        "V_hat": result.V_hat.tolist(),
        "best_action": result.best_action.tolist(),
        "alpha_index": [i.tolist() for i in result.alpha_index],
        "alpha_value": [v.tolist() for v in result.alpha_value],
        "residuals": list(result.residuals),
        "iterations": result.iterations,
        "converged": result.converged,
        "tol": result.tol,
        "error_bound": result.error_bound,
    }
    write_json(out / RESULT_FILE, doc)
    _write_csv(out / "values_prior.csv", ["prior", "value"],
               ((p, repr(float(v))) for p, v in enumerate(result.V)))
    _write_csv(out / "values_posterior.csv", ["posterior", "value"],
               ((m, repr(float(v))) for m, v in enumerate(result.V_hat)))
    _write_csv(out / "actions.csv", ["posterior", "action"], enumerate(result.best_action.tolist()))
    _write_csv(out / "alpha.csv", ["prior", "posterior", "alpha"],
               ((p, int(m), repr(float(a)))
                for p, (idx, val) in enumerate(zip(result.alpha_index, result.alpha_value))
                for m, a in zip(idx, val)))
    return out


def load_result(out_dir) -> SolveResult:
    path = Path(out_dir) / RESULT_FILE
    if not path.exists():
        raise FileNotFoundError(f"no solve result at {path}")
    doc = read_json(path)
    model = PerceptionMDP.from_dict(doc["model"], name=doc.get("model_name", "model"))
    return SolveResult(
        model=model,
        sets=sets_from_dict(doc["sets"]),
        V=np.array(doc["V"], dtype=float),
        V_hat=np.array(doc["V_hat"], dtype=float),
        best_action=np.array(doc["best_action"], dtype=int),
        alpha_index=[np.array(i, dtype=int) for i in doc["alpha_index"]],
        alpha_value=[np.array(v, dtype=float) for v in doc["alpha_value"]],
        residuals=[float(r) for r in doc["residuals"]],
        iterations=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        tol=float(doc["tol"]),
    )


def save_policy(policy: PerceptionActionPolicy, path, dense_kernels: bool = False) -> None:
    write_json(path, policy.to_dict(dense_kernels))


def write_residence_csv(hist: ResidenceHistogram, path, slices=None) -> None:
    _write_csv(path, ["time", "state", "fraction"],
               ((t, s, repr(f)) for t, s, f in hist.rows(slices)))


def read_residence_csv(path) -> list[tuple[int, int, float]]:
    with open(path, newline="") as fh:
        return [(int(r["time"]), int(r["state"]), float(r["fraction"])) for r in csv.DictReader(fh)]


def write_trace_jsonl(traces: list[RolloutTrace], path) -> None:
    with open(path, "w") as fh:
        for trial, tr in enumerate(traces):
            for rec in tr.records():
                fh.write(json.dumps({"trial": trial, **rec}) + "\n")
            fh.write(json.dumps({"trial": trial, "t": tr.horizon, "state": int(tr.states[-1]), "final": True}) + "\n")


def write_lp_dump(instances: list[LPInstance], path) -> None:
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict()) + "\n")


def write_table_csv(rows: list[dict], path, columns) -> None:
    _write_csv(path, columns, ([r[c] for c in columns] for r in rows))
