"""Synthetic six-trait frequency file used by ``twinmix analyze`` demos and tests.

The data are simulated, not measured. Each trait is drawn on the probit
scale from the combined model and mapped to frequencies with the normal CDF.
Correlations follow a published pattern of immune-cell traits; the DZ mean
gap is chosen so that Pearson's limit lands near the Pearson correlation
reported alongside, which makes three traits heterogeneous.
"""

import math
from importlib import resources

import numpy as np
from scipy import special

from ._parallel import stream
from .dataio import TwinDataset, write_dataset_csv
from .estimation import fit_combined

__all__ = ["DEMO_TRAITS", "DEMO_N_MZ", "DEMO_N_DZ", "DEMO_SEED", "demo_gap", "demo_datasets",
           "write_demo", "demo_path"]

DEMO_N_MZ = 96
DEMO_N_DZ = 144
DEMO_SEED = 20190901

# name, rho_m, rho_d, Pearson rho_d, probit-scale mean, probit-scale SD
DEMO_TRAITS = (
    ("L", 0.56, 0.44, 0.45, -0.55, 0.35),
    ("L:B", 0.54, 0.38, 0.11, -1.15, 0.30),
    ("L:T", 0.57, 0.28, 0.29, 0.60, 0.30),
    ("L:CD27", 0.75, 0.40, 0.26, 0.35, 0.40),
    ("L:CD8", 0.71, 0.30, 0.13, -0.45, 0.30),
    ("L:CD4", 0.77, 0.25, 0.26, 0.25, 0.30),
)


def demo_gap(rho, pearson, sd):
    """DZ mean gap whose Pearson limit equals ``pearson`` (0 when no gap can)."""
    g = (rho - pearson) / (1.0 + pearson)
    return 2.0 * sd * math.sqrt(g) if g > 0.0 else 0.0


def _draw(rng, mu1, mu2, rho, sd, n):
    z = rng.standard_normal((n, 2))
    y1 = mu1 + sd * z[:, 0]
    y2 = mu2 + sd * (rho * z[:, 0] + math.sqrt(1.0 - rho * rho) * z[:, 1])
    swap = rng.random(n) < 0.5
    return np.column_stack([np.where(swap, y2, y1), np.where(swap, y1, y2)])


def _frequencies(seed, attempt):
    out = []
    for k, (name, rm, rd, rp, mu, sd) in enumerate(DEMO_TRAITS):
        rng = stream(seed, k, attempt)
        gap = demo_gap(rd, rp, sd)
        mz = special.ndtr(_draw(rng, mu, mu, rm, sd, DEMO_N_MZ))
        dz = special.ndtr(_draw(rng, mu - gap / 2.0, mu + gap / 2.0, rd, sd, DEMO_N_DZ))
        out.append((name, mz, dz))
    return out


def demo_datasets(seed=DEMO_SEED, max_attempts=100):
    """``(datasets on the frequency scale, attempt)``.

    Attempts are drawn in order until the combined delta estimate is positive
    for every trait, which is what makes that property hold by construction.
    """
    for attempt in range(max_attempts):
        traits = _frequencies(seed, attempt)
        ok = True
        for _, mz, dz in traits:
            p = fit_combined(special.ndtri(mz), special.ndtri(dz)).params
            if not p.rho_m - p.rho_d > 0.0:
                ok = False
                break
        if ok:
            return [TwinDataset(mz, dz, name) for name, mz, dz in traits], attempt
    raise RuntimeError("no attempt produced positive delta for every trait")


def write_demo(path_or_fh, seed=DEMO_SEED):
    datasets, _ = demo_datasets(seed)
    write_dataset_csv(datasets, path_or_fh)


def demo_path():
    """Path of the bundled copy generated with the default seed."""
    return resources.files("twinmix").joinpath("data", "demo_traits.csv")
