"""Bundled benchmark datasets and the recipes that regenerate them."""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .models.gmm import gmm_generate_data
from .models.goodwin import goodwin_generate_data
from .models.pet import default_input_function, pet_generate_data

# name -> (file, recipe); every recipe is deterministic given its seed
RECIPES = {
    "conjugate": {"file": "conjugate.csv", "kind": "gaussian", "seed": 20,
                  "n": 20, "d": 1, "mean": 0.5},
    "conjugate_bias": {"file": "conjugate_bias.csv", "kind": "gaussian", "seed": 7,
                       "n": 20, "d": 2, "mean": 1.0},
    "gmm": {"file": "gmm.csv", "kind": "gmm", "seed": 1, "n": 100},
    "goodwin_m3": {"file": "goodwin_m3.csv", "kind": "goodwin", "seed": 3, "m": 3,
                   "rho": 10.0, "sigma": 0.2, "n_obs": 80},
    "goodwin_m5": {"file": "goodwin_m5.csv", "kind": "goodwin", "seed": 5, "m": 5,
                   "rho": 10.0, "sigma": 0.2, "n_obs": 80},
    "pet": {"file": "pet.csv", "kind": "pet", "seed": 11,
            "phi": [0.08, 0.02], "theta": [0.01, 0.25], "sigma": 0.5},
    "pet_input": {"file": "pet_input.csv", "kind": "pet_input", "n_knots": 32},
}


def generate(name: str):
    """Regenerate dataset ``name``; returns ``(header, rows, extra)`` where
    ``extra`` holds generator outputs worth recording (e.g. true parameters)."""
    r = RECIPES[name]
    kind = r["kind"]
    rng = np.random.default_rng(r.get("seed", 0))
    if kind == "gaussian":
        y = r["mean"] + rng.standard_normal((r["n"], r["d"]))
        return [f"y{j + 1}" for j in range(r["d"])], y, {}
    if kind == "gmm":
        return ["y"], gmm_generate_data(rng, r["n"])[:, None], {}
    if kind == "goodwin":
        params, y = goodwin_generate_data(rng, r["m"], r["rho"], r["sigma"], r["n_obs"])
        t = 0.5 * np.arange(121)[-r["n_obs"]:]
        return ["t", "x1", "x2"], np.column_stack([t, y]), {"true_params": params.tolist()}
    if kind == "pet":
        times, y = pet_generate_data(rng, r["phi"], r["theta"], r["sigma"])
        return ["t", "ct"], np.column_stack([times, y]), {}
    if kind == "pet_input":
        t, c = default_input_function(r["n_knots"])
        return ["t", "cp"], np.column_stack([t, c]), {}
    raise ValueError(f"unknown recipe kind {kind!r}")


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(rows):
            w.writerow([format(float(v), ".17g") for v in row])


def read_csv(path) -> tuple[list, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return rows[0], data.reshape(-1, len(rows[0]))


def write_all(out_dir) -> dict:
    """Regenerate every dataset into ``out_dir`` plus a ``metadata.json``
    sidecar recording the recipes and seeds."""
    out = Path(out_dir)
    meta = {}
    for name, recipe in RECIPES.items():
        header, rows, extra = generate(name)
        write_csv(out / recipe["file"], header, rows)
        meta[name] = {**recipe, **extra}
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta


def data_path(name: str) -> Path:
    return Path(str(resources.files("smcevidence") / "data" / RECIPES[name]["file"]))


def load(ref: str, base: Path | None = None) -> np.ndarray:
    """Load ``builtin:<name>`` or a CSV path (relative to ``base``)."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name not in RECIPES:
            raise KeyError(f"unknown builtin dataset {name!r}")
        path = data_path(name)
    else:
        path = Path(ref)
        if base is not None and not path.is_absolute():
            path = base / path
    return read_csv(path)[1]


def metadata() -> dict:
    with open(Path(str(resources.files("smcevidence") / "data" / "metadata.json"))) as fh:
        return json.load(fh)
