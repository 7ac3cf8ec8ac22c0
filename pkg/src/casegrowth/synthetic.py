"""Seeded piecewise-exponential panel generator.

Each county's log incidence follows a shared two-regime random walk: steps of
``rate_before`` per day up to the break day, ``rate_after`` afterwards, plus
i.i.d. normal observation noise on the log scale.  A policy-date feature flips
exactly at the regime change (0 before, then a days-elapsed counter), giving
transfer-learning estimators a cross-county signal aligned with the break;
the remaining static features are pure noise.  The generating rate of the
step into each day is kept alongside the table for oracle scoring.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from casegrowth._rng import SplitMix64, derive_seed
from casegrowth.panel import CountyPanel, FeatureFrame, apply_min_count_filter, build_modeling_table

EPOCH = date(2020, 3, 1)
POLICY_COLUMN = "containment_policy"


@dataclass(frozen=True)
class SynthConfig:
    counties: int = 20
    days: int = 120
    break_day: int = 60  # last day of the first regime
    rate_before: float = 0.10
    rate_after: float = -0.15
    base_incident: float = 200.0
    base_jitter: float = 0.3  # per-county log-level offset sd
    noise_sigma: float = 0.01  # log-scale observation noise sd
    noise_features: int = 8  # static standard-normal columns per county
    min_count: float = 20.0
    seed: int = 0


def _county_ids(n):
    return [f"c{i:03d}" for i in range(n)]


def true_rate_matrix(cfg: SynthConfig) -> np.ndarray:
    """Rate of the step into each day, (T + 1, C); day 1 carries the first regime."""
    rates = np.full((cfg.days + 1, cfg.counties), np.nan)
    for t in range(1, cfg.days + 1):
        rates[t, :] = cfg.rate_before if t <= cfg.break_day else cfg.rate_after
    return rates


def synth_table(cfg: SynthConfig):
    """Generate the modeling table directly (no file round trip)."""
    counties = _county_ids(cfg.counties)
    rng = SplitMix64(derive_seed(cfg.seed, 0x53594E54))

    jitter = np.array([cfg.base_jitter * rng.normal() for _ in counties])
    statics = np.array(
        [[rng.normal() for _ in range(cfg.noise_features)] for _ in counties]
    )
    noise = np.empty((cfg.days + 1, cfg.counties))
    for ci in range(cfg.counties):
        for t in range(1, cfg.days + 1):
            noise[t, ci] = cfg.noise_sigma * rng.normal()

    rates = true_rate_matrix(cfg)
    ln_true = np.full((cfg.days + 1, cfg.counties), np.nan)
    ln_true[1] = math.log(cfg.base_incident) + jitter
    for t in range(2, cfg.days + 1):
        ln_true[t] = ln_true[t - 1] + rates[t]
    incident = np.full_like(ln_true, np.nan)
    incident[1:] = np.exp(ln_true[1:] + noise[1:])

    panel = CountyPanel(counties, EPOCH, cumulative=None, incident=incident)
    panel = apply_min_count_filter(panel, cfg.min_count)

    names = [f"static_noise_{i:02d}" for i in range(cfg.noise_features)] + [POLICY_COLUMN]
    kinds = ["static"] * cfg.noise_features + ["policy_date"]
    values = np.full((cfg.days + 1, cfg.counties, len(names)), np.nan)
    for ci in range(cfg.counties):
        values[1:, ci, : cfg.noise_features] = statics[ci]
    for t in range(1, cfg.days + 1):
        values[t, :, -1] = max(0, t - cfg.break_day)
    static_mask = np.array([k == "static" for k in kinds])
    features = FeatureFrame(names, kinds, values, static_mask, counties)

    table = build_modeling_table(panel, features)
    return replace(table, true_rates=rates)


def write_synth_files(cfg: SynthConfig, outdir) -> dict:
    """Emit the generated panel as the canonical file set.

    ``cases.csv`` holds the incident series (load with ``kind="incident"``);
    values use 17 significant digits so the file round trip is exact.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    table = synth_table(cfg)
    counties = table.counties

    paths = {
        "cases": outdir / "cases.csv",
        "static": outdir / "features_static.csv",
        "policy": outdir / "features_policy.csv",
        "schema": outdir / "schema.ini",
        "truth": outdir / "truth.csv",
        "config": outdir / "synth_config.ini",
    }

    with open(paths["cases"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "county", "cases"])
        for ci, county in enumerate(counties):
            for t in range(1, cfg.days + 1):
                v = table.incident[t, ci]
                if math.isfinite(v):
                    day = (EPOCH + timedelta(days=t - 1)).isoformat()
                    writer.writerow([day, county, format(v, ".17g")])

    noise_names = [f"static_noise_{i:02d}" for i in range(cfg.noise_features)]
    with open(paths["static"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["county", *noise_names])
        for ci, county in enumerate(counties):
            row = [format(table.features[1, ci, j], ".17g") for j in range(cfg.noise_features)]
            writer.writerow([county, *row])

    policy_date = (EPOCH + timedelta(days=cfg.break_day)).isoformat()  # day break_day + 1
    with open(paths["policy"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["county", POLICY_COLUMN])
        for county in counties:
            writer.writerow([county, policy_date])

    schema = configparser.ConfigParser()
    schema.optionxform = str
    schema["columns"] = {name: "static" for name in noise_names}
    schema["columns"][POLICY_COLUMN] = "policy_date"
    with open(paths["schema"], "w") as fh:
        schema.write(fh)

    with open(paths["truth"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["county", "day", "rate"])
        for ci, county in enumerate(counties):
            for t in range(1, cfg.days + 1):
                writer.writerow([county, t, format(table.true_rates[t, ci], ".17g")])

    cp = configparser.ConfigParser()
    cp["synth"] = {
        "counties": str(cfg.counties),
        "days": str(cfg.days),
        "break_day": str(cfg.break_day),
        "rate_before": format(cfg.rate_before, ".17g"),
        "rate_after": format(cfg.rate_after, ".17g"),
        "base_incident": format(cfg.base_incident, ".17g"),
        "base_jitter": format(cfg.base_jitter, ".17g"),
        "noise_sigma": format(cfg.noise_sigma, ".17g"),
        "noise_features": str(cfg.noise_features),
        "min_count": format(cfg.min_count, ".17g"),
        "seed": str(cfg.seed),
    }
    with open(paths["config"], "w") as fh:
        cp.write(fh)

    return paths
