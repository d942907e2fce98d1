#!/usr/bin/env python3
"""Regenerate the bundled corpus data and reference posterior samples.

References come from sources independent of the variational path:

* multimodal / conjugate: exact simulation of the known posterior,
* linreg / eight_schools / mixture: long adaptive random-walk Metropolis
  chains over the unconstrained log-joint, thinned to the target row count.

Run from the repository root:  python tools/make_references.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from stanvi import frontend, model as model_mod  # noqa: E402
from stanvi.svi import constrain_table  # noqa: E402
from stanvi.samples import SampleTable  # noqa: E402

CORPUS = ROOT / "corpus"
REFS = CORPUS / "refs"
N_REF = 10_000


def rwm(prepared, n_keep, rng, warmup=20_000, thin=20, scale0=0.5):
    """Adaptive random-walk Metropolis in unconstrained space."""
    d = prepared.layout.dim
    x = np.zeros(d)
    lp = float(prepared.log_joint(x))
    scale = scale0
    draws = np.empty((n_keep, d))
    accepted = 0
    total = warmup + n_keep * thin
    kept = 0
    for t in range(total):
        prop = x + scale * rng.standard_normal(d)
        lp_prop = float(prepared.log_joint(prop))
        if np.log(rng.random()) < lp_prop - lp:
            x, lp = prop, lp_prop
            accepted += 1
        if t < warmup and t % 100 == 99:
            rate = accepted / (t + 1)
            scale *= 1.1 if rate > 0.3 else 0.9
        if t >= warmup and (t - warmup) % thin == 0 and kept < n_keep:
            draws[kept] = x
            kept += 1
    print(f"  acceptance rate {accepted / total:.2f}, proposal scale {scale:.3f}")
    return draws


def prepared_for(name, data):
    source = (CORPUS / f"{name}.stan").read_text()
    gm = model_mod.compile_model(frontend.check_source(source))
    return gm.prepare(data)


def write_table(prepared, draws, rng, path):
    table = constrain_table(prepared, draws, rng)
    table.to_csv(path)
    print(f"  wrote {path} ({table.num_rows} x {len(table.columns)})")


def make_multimodal():
    print("multimodal: exact simulation")
    rng = np.random.default_rng(100)
    cluster = rng.standard_normal(N_REF)
    theta = np.where(cluster > 0, 20.0, 0.0) + rng.standard_normal(N_REF)
    table = SampleTable(["cluster", "theta"], np.column_stack([cluster, theta]))
    table.to_csv(REFS / "multimodal.csv")


def make_conjugate():
    print("conjugate: exact posterior N(y/2, 1/sqrt(2))")
    rng = np.random.default_rng(101)
    mu = 0.5 + np.sqrt(0.5) * rng.standard_normal(N_REF)
    SampleTable(["mu"], mu[:, None]).to_csv(REFS / "conjugate.csv")


def make_linreg():
    print("linreg: synthetic data + RWM reference")
    rng = np.random.default_rng(42)
    n = 20
    x = np.round(np.linspace(-2.0, 2.0, n), 6)
    y = np.round(1.5 + 2.0 * x + 0.5 * rng.standard_normal(n), 6)
    data = {"N": n, "x": x.tolist(), "y": y.tolist()}
    with open(CORPUS / "data" / "linreg.json", "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
    prepared = prepared_for("linreg", data)
    draws = rwm(prepared, N_REF, np.random.default_rng(7))
    write_table(prepared, draws, np.random.default_rng(8), REFS / "linreg.csv")


def make_mixture():
    print("mixture: synthetic data + RWM reference")
    rng = np.random.default_rng(43)
    n = 40
    comp = rng.random(n) < 0.4
    y = np.where(comp, -2.0, 2.0) + 0.7 * rng.standard_normal(n)
    data = {"N": n, "y": np.round(y, 6).tolist()}
    with open(CORPUS / "data" / "mixture.json", "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
    prepared = prepared_for("mixture", data)
    draws = rwm(prepared, N_REF, np.random.default_rng(9))
    write_table(prepared, draws, np.random.default_rng(10), REFS / "mixture.csv")


def make_eight_schools():
    print("eight_schools: RWM reference")
    data = json.loads((CORPUS / "data" / "eight_schools.json").read_text())
    prepared = prepared_for("eight_schools", data)
    draws = rwm(prepared, N_REF, np.random.default_rng(11), warmup=30_000, thin=30)
    write_table(prepared, draws, np.random.default_rng(12),
                REFS / "eight_schools.csv")


def main():
    REFS.mkdir(parents=True, exist_ok=True)
    make_multimodal()
    make_conjugate()
    make_linreg()
    make_mixture()
    make_eight_schools()


if __name__ == "__main__":
    main()
