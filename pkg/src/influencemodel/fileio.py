"""JSON file formats for models, chains, trajectories, and observations.

All formats are plain JSON objects with a fixed set of keys; unknown
keys are rejected so typos fail loudly.  Site indices are 1-based in
files (matching how sites are numbered in reports) and converted to the
0-based API indices on read.  Statuses are 1-based everywhere.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .chain import MasterChain
from .model import (
    InfluenceModel,
    InvalidModelError,
    ModelStructure,
    model_fingerprint,
    validate_model,
)
from .simulate import ObservationSequence, Trajectory

STATE_ORDER = "site-1-most-significant"


class FileFormatError(ValueError):
    """A file does not follow the expected format."""


def _load(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise FileFormatError(f"{path}: top level must be a JSON object")
    return doc


def _dump(doc: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _check_keys(doc: dict, path: str, required: set, optional: set = frozenset()):
    keys = set(doc)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise FileFormatError(f"{path}: missing keys {sorted(missing)}")
    if unknown:
        raise FileFormatError(f"{path}: unknown keys {sorted(unknown)}")


def write_model(model: InfluenceModel, path: str) -> None:
    doc: dict = {"n": model.n, "m": list(model.m), "D": model.D.tolist()}
    if model.A_shared is not None:
        doc["A_shared"] = model.A_shared.tolist()
    else:
        doc["A_pairs"] = [
            {"from": j + 1, "to": i + 1, "matrix": mat.tolist()}
            for (j, i), mat in sorted(model.A_pairs.items())
        ]
    _dump(doc, path)


def read_model(path: str) -> InfluenceModel:
    """Read and validate a model file; invalid models are refused."""
    doc = _load(path)
    _check_keys(doc, path, {"m", "D"}, {"n", "A_shared", "A_pairs"})
    if ("A_shared" in doc) == ("A_pairs" in doc):
        raise FileFormatError(f"{path}: exactly one of A_shared / A_pairs required")
    m = doc["m"]
    if not isinstance(m, list) or not all(isinstance(v, int) for v in m):
        raise FileFormatError(f"{path}: m must be a list of integers")
    if "n" in doc and doc["n"] != len(m):
        raise FileFormatError(f"{path}: n = {doc['n']} but m has {len(m)} entries")
    try:
        if "A_shared" in doc:
            model = InfluenceModel(
                D=np.asarray(doc["D"], dtype=float),
                m=tuple(m),
                A_shared=np.asarray(doc["A_shared"], dtype=float),
            )
        else:
            pairs = {}
            for entry in doc["A_pairs"]:
                _check_keys(entry, path, {"from", "to", "matrix"})
                j, i = int(entry["from"]) - 1, int(entry["to"]) - 1
                pairs[(j, i)] = np.asarray(entry["matrix"], dtype=float)
            model = InfluenceModel(D=np.asarray(doc["D"], dtype=float),
                                   m=tuple(m), A_pairs=pairs)
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    report = validate_model(model)
    if not report.ok:
        raise InvalidModelError(report)
    return model


def write_chain(chain: MasterChain, path: str) -> None:
    _dump(
        {"m": list(chain.m), "state_order": STATE_ORDER, "G": chain.G.tolist()},
        path,
    )


def read_chain(path: str) -> MasterChain:
    doc = _load(path)
    _check_keys(doc, path, {"m", "G"}, {"state_order"})
    if doc.get("state_order", STATE_ORDER) != STATE_ORDER:
        raise FileFormatError(f"{path}: unsupported state_order {doc['state_order']!r}")
    try:
        chain = MasterChain(G=np.asarray(doc["G"], dtype=float), m=tuple(doc["m"]))
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    G = chain.G
    if (G < -1e-12).any() or np.max(np.abs(G.sum(axis=1) - 1.0)) > 1e-9:
        raise FileFormatError(f"{path}: G is not row-stochastic")
    return chain


def write_trajectory(traj: Trajectory, path: str) -> None:
    _dump(
        {
            "m": list(traj.m),
            "seed": traj.seed,
            "fingerprint": traj.fingerprint,
            "states": traj.states.tolist(),
        },
        path,
    )


def read_trajectory(path: str) -> Trajectory:
    doc = _load(path)
    _check_keys(doc, path, {"m", "states"}, {"seed", "fingerprint"})
    try:
        return Trajectory(
            states=np.asarray(doc["states"], dtype=np.int64),
            m=tuple(doc["m"]),
            seed=doc.get("seed"),
            fingerprint=doc.get("fingerprint"),
        )
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def write_observations(obs: ObservationSequence, path: str) -> None:
    doc = {
        "observed": [i + 1 for i in obs.observed],
        "values": obs.values.tolist(),
    }
    if obs.m is not None:
        doc["m"] = list(obs.m)
    _dump(doc, path)


def read_observations(path: str) -> ObservationSequence:
    doc = _load(path)
    _check_keys(doc, path, {"observed", "values"}, {"m"})
    try:
        observed = tuple(int(v) - 1 for v in doc["observed"])
        return ObservationSequence(
            observed=observed,
            values=np.asarray(doc["values"], dtype=np.int64),
            m=tuple(doc["m"]) if "m" in doc else None,
        )
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def read_structure(path: str) -> ModelStructure:
    doc = _load(path)
    _check_keys(doc, path, {"m"}, {"A_sharing"})
    sharing = doc.get("A_sharing", "shared")
    if sharing not in ("shared", "per-pair"):
        raise FileFormatError(
            f"{path}: A_sharing must be 'shared' or 'per-pair', got {sharing!r}"
        )
    try:
        return ModelStructure(m=tuple(doc["m"]), shared_A=sharing == "shared")
    except (ValueError, TypeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def write_report(doc: dict, path: str) -> None:
    """Write a report dict as JSON, NaN-safe (NaN becomes null)."""

    def clean(obj):
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return clean(obj.tolist())
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating, float)):
            v = float(obj)
            return None if np.isnan(v) else v
        if isinstance(obj, (np.bool_,)):
            return bool(obj)
        return obj

    _dump(clean(doc), path)
