import numpy as np
import pytest

from casegrowth.panel import ModelingTable


def table_from_ln(ln, counties=None, features=None, feature_names=None, static_mask=None):
    """ModelingTable straight from a (T+1, C) log-incidence matrix.

    Row 0 is forced missing; incident is exp(ln); features default to a single
    per-county static column so clustering and forests have something to split.
    """
    ln = np.asarray(ln, dtype=float).copy()
    ln[0, :] = np.nan
    n_days, n_counties = ln.shape[0] - 1, ln.shape[1]
    if counties is None:
        counties = [f"c{i:03d}" for i in range(n_counties)]
    if features is None:
        features = np.zeros((n_days + 1, n_counties, 1))
        for ci in range(n_counties):
            features[:, ci, 0] = float(ci)
        features[0] = np.nan
        feature_names = ["county_code"]
        static_mask = np.array([True])
    features = np.asarray(features, dtype=float)
    if static_mask is None:
        static_mask = np.zeros(features.shape[2], dtype=bool)
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(features.shape[2])]
    with np.errstate(invalid="ignore"):
        incident = np.exp(ln)
    return ModelingTable(
        counties=list(counties),
        ln_incident=ln,
        incident=incident,
        features=features,
        feature_names=list(feature_names),
        static_mask=np.asarray(static_mask, dtype=bool),
    )


@pytest.fixture
def exp_table():
    """Noiseless exponential panel: 3 counties, 40 days, rate 0.1 each."""
    n_days, n_counties = 40, 3
    ln = np.full((n_days + 1, n_counties), np.nan)
    for ci in range(n_counties):
        for t in range(1, n_days + 1):
            ln[t, ci] = 4.0 + 0.3 * ci + 0.1 * t
    return table_from_ln(ln)
