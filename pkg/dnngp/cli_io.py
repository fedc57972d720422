"""
File formats and run artifacts.

Handles the dataset CSV (site_id, s1[, s2[, s3]], t, y, x1..xp), prediction
target files, holdout policies, the posterior CSV with its metadata sidecar
and full-w archive, and the run manifest. Every CSV goes through pandas with
17 significant digits so that values survive a round trip exactly.
"""

import json
import logging
import platform
import shutil
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import joblib
import numpy as np
import pandas as pd
import pydantic
import scipy

import dnngp
from dnngp.config import HoldoutPolicy, ResponseTransform, RunConfig, scratch_dir
from dnngp.covariance import CovarianceForm
from dnngp.datagen import SyntheticData
from dnngp.errors import ConfigError, DatasetError
from dnngp.mcmc import ModelSpec, PosteriorSamples
from dnngp.spacetime import ReferenceSet, SpaceTimePoint, enumerate_reference
from utils.logging_config import log_io_operation

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
COORD_COLUMNS = ("s1", "s2", "s3")
MAX_LISTED = 10

@dataclass(eq=False)
class Dataset:
    """A validated dataset laid out over its reference set."""
    ref: ReferenceSet
    site_ids: List[str]
    x: np.ndarray
    y: np.ndarray
    present: np.ndarray
    covariate_names: List[str]
    transform: ResponseTransform = ResponseTransform.NONE

    @property
    def r(self) -> int:
        return self.ref.size

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def observed(self) -> np.ndarray:
        """Reference indices with a response (the I = 1 points)."""
        return np.flatnonzero(np.isfinite(self.y))

    @property
    def n_obs(self) -> int:
        return self.observed.shape[0]

    def raw_y(self) -> np.ndarray:
        return self.transform.inverse(self.y)

    def model_spec(self, config: RunConfig, holdout: Optional[np.ndarray] = None) -> ModelSpec:
        """ModelSpec over the observed cells minus any held-out ones."""
        observed = self.observed
        if holdout is not None and len(holdout):
            observed = np.setdiff1d(observed, holdout)
        beta_mean, beta_cov = config.beta_prior_arrays(self.p)
        return ModelSpec(
            ref=self.ref,
            x=self.x[observed],
            y=self.y[observed],
            observed=observed,
            theta_priors=config.theta_priors(),
            scheme=config.scheme,
            m=config.m,
            covariance_form=config.covariance_form,
            tau2_a=config.tau2_prior.a,
            tau2_b=config.tau2_prior.b,
            beta_mean=beta_mean,
            beta_cov=beta_cov,
            include_own_site=config.include_own_site
        )

def _rows(mask: pd.Series) -> List[int]:
    """1-based file line numbers (header is line 1) of flagged rows."""
    return [int(i) + 2 for i in np.flatnonzero(mask.to_numpy())][:MAX_LISTED]

def _site_order(site_ids: List[str]) -> List[str]:
    try:
        return sorted(site_ids, key=lambda s: float(s))
    except ValueError:
        return sorted(site_ids)

def _numbered_columns(columns: List[str], prefix: str) -> List[str]:
    found = []
    k = 1
    while f"{prefix}{k}" in columns:
        found.append(f"{prefix}{k}")
        k += 1
    return found

def _coerce_numeric(frame: pd.DataFrame, column: str, required: bool) -> pd.Series:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = raw.notna() & values.isna()
    if bad.any():
        raise DatasetError(f"non-numeric values in column '{column}' at rows {_rows(bad)}")
    if required and values.isna().any():
        raise DatasetError(f"missing values in column '{column}' at rows {_rows(values.isna())}")
    return values.astype(float)

def load_dataset(
    path,
    transform: ResponseTransform = ResponseTransform.NONE,
    allow_missing_cells: bool = False
) -> Dataset:
    """Read and validate a dataset file.

    Sites are ordered by site_id (numerically when every id is a number) and
    times ascending. Empty y fields are missing responses. Grid cells absent
    from the file are an error unless allow_missing_cells is set, in which case
    they become missing responses without covariates.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"site_id": str})
    except FileNotFoundError:
        raise DatasetError(f"dataset file not found: {path}")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DatasetError(f"dataset file {path} is not valid CSV: {e}")

    columns = list(frame.columns)
    coord_cols = _numbered_columns(columns, "s")
    cov_cols = _numbered_columns(columns, "x")
    for required in ("site_id", "t", "y"):
        if required not in columns:
            raise DatasetError(f"dataset is missing column '{required}'")
    if not 1 <= len(coord_cols) <= 3:
        raise DatasetError("dataset needs coordinate columns s1[, s2[, s3]]")
    if not cov_cols:
        raise DatasetError("dataset needs at least one covariate column x1")
    unknown = sorted(set(columns) - {"site_id", "t", "y", *coord_cols, *cov_cols})
    if unknown:
        raise DatasetError(f"unknown dataset columns {unknown}")
    if frame.empty:
        raise DatasetError("dataset has no rows")

    if frame["site_id"].isna().any():
        raise DatasetError(f"missing site_id at rows {_rows(frame['site_id'].isna())}")
    coords = np.column_stack([_coerce_numeric(frame, c, required=True) for c in coord_cols])
    times = _coerce_numeric(frame, "t", required=True).to_numpy()
    y = _coerce_numeric(frame, "y", required=False).to_numpy()
    x = np.column_stack([_coerce_numeric(frame, c, required=True) for c in cov_cols])
    if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(times)) and np.all(np.isfinite(x))):
        raise DatasetError("coordinates, times and covariates must be finite")

    dupes = frame.duplicated(subset=["site_id", "t"], keep=False)
    if dupes.any():
        raise DatasetError(f"duplicate (site_id, t) pairs at rows {_rows(dupes)}")

    site_frame = pd.DataFrame(coords, columns=coord_cols)
    site_frame["site_id"] = frame["site_id"].to_numpy()
    spread = site_frame.groupby("site_id")[coord_cols].nunique().max(axis=1)
    inconsistent = spread[spread > 1].index.tolist()
    if inconsistent:
        raise DatasetError(f"sites with differing coordinates across rows: {inconsistent[:MAX_LISTED]}")

    site_ids = _site_order(site_frame["site_id"].unique().tolist())
    site_pos = {s: j for j, s in enumerate(site_ids)}
    first_rows = site_frame.drop_duplicates("site_id").set_index("site_id")
    locations = first_rows.loc[site_ids, coord_cols].to_numpy(dtype=float)
    unique_times = np.unique(times)
    ref = enumerate_reference(locations, unique_times)

    n_sites = len(site_ids)
    index = np.searchsorted(unique_times, times) * n_sites + np.array([site_pos[s] for s in frame["site_id"]])
    present = np.zeros(ref.size, dtype=bool)
    present[index] = True
    if not present.all() and not allow_missing_cells:
        absent = np.flatnonzero(~present)[:MAX_LISTED]
        cells = [(site_ids[i % n_sites], float(unique_times[i // n_sites])) for i in absent]
        raise DatasetError(
            f"{int((~present).sum())} (site, time) cells are absent from the file, e.g. {cells}; "
            f"pass --allow-missing-cells to treat them as missing responses"
        )

    transform = ResponseTransform(transform)
    if transform is ResponseTransform.SQRT and np.any(y[np.isfinite(y)] < 0):
        raise DatasetError(f"negative responses cannot be square-root transformed (rows {_rows(pd.Series(y < 0))})")

    y_ref = np.full(ref.size, np.nan)
    x_ref = np.full((ref.size, len(cov_cols)), np.nan)
    y_ref[index] = transform.forward(y)
    x_ref[index] = x

    dataset = Dataset(ref=ref, site_ids=site_ids, x=x_ref, y=y_ref, present=present,
                      covariate_names=cov_cols, transform=transform)
    log_io_operation("Loaded dataset", str(path), len(frame))
    logger.info(f"Dataset: {n_sites} sites x {len(unique_times)} times, {dataset.n_obs} observed of {ref.size}")
    return dataset

def holdout_indices(dataset: Dataset, policy: HoldoutPolicy) -> np.ndarray:
    """Observed reference indices withheld from fitting under a policy."""
    rng = np.random.default_rng(policy.seed)
    observed = dataset.observed
    if policy.kind == "none" or observed.size == 0:
        return np.empty(0, dtype=np.int64)

    if policy.kind == "random_fraction":
        n_hold = max(1, int(round(policy.fraction * observed.size)))
        return np.sort(rng.choice(observed, size=n_hold, replace=False)).astype(np.int64)

    n_sites, n_times = dataset.ref.n_sites, dataset.ref.n_times
    if policy.days > n_times:
        raise ConfigError(f"block of {policy.days} days is longer than the {n_times} available times")
    starts = rng.integers(0, n_times - policy.days + 1, size=n_sites)
    held = [(starts[j] + np.arange(policy.days)) * n_sites + j for j in range(n_sites)]
    held = np.concatenate(held)
    return np.sort(held[np.isfinite(dataset.y[held])]).astype(np.int64)

def write_frame(frame: pd.DataFrame, path) -> None:
    """Write a CSV through a scratch file so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", suffix=".csv", dir=scratch_dir(), delete=False, newline="") as handle:
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT)
        staged = handle.name
    shutil.move(staged, path)
    log_io_operation("Wrote CSV", str(path), len(frame))

def write_json(payload: Dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    log_io_operation("Wrote JSON", str(path))

def read_json(path) -> Dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise DatasetError(f"file not found: {path}")

def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")

def points_frame(
    ids: List[str],
    coords: np.ndarray,
    times: np.ndarray,
    x: np.ndarray,
    y: Optional[np.ndarray] = None,
    id_column: str = "site_id"
) -> pd.DataFrame:
    coords = np.atleast_2d(coords)
    frame = pd.DataFrame({id_column: ids})
    for k in range(coords.shape[1]):
        frame[COORD_COLUMNS[k]] = coords[:, k]
    frame["t"] = times
    if y is not None:
        frame["y"] = y
    for k in range(x.shape[1]):
        frame[f"x{k + 1}"] = x[:, k]
    return frame

def reference_frame(ref: ReferenceSet, site_ids: List[str], y: np.ndarray, x: np.ndarray) -> pd.DataFrame:
    """Dataset-file rows in enumeration order."""
    ids = [site_ids[i % ref.n_sites] for i in range(ref.size)]
    return points_frame(ids, ref.coords, ref.point_times, x, y)

def write_simulation(data: SyntheticData, out_dir) -> Dict[str, Path]:
    """data.csv (grid), holdout.csv (off-grid points) and truth.json."""
    out_dir = Path(out_dir)
    site_ids = [str(j) for j in range(data.ref.n_sites)]
    paths = {"data": out_dir / "data.csv", "holdout": out_dir / "holdout.csv", "truth": out_dir / "truth.json"}
    write_frame(reference_frame(data.ref, site_ids, data.y, data.x), paths["data"])
    holdout_ids = [f"h{k}" for k in range(data.holdout_times.shape[0])]
    coords = data.holdout_coords if data.holdout_coords.size else np.empty((0, data.ref.dim))
    write_frame(points_frame(holdout_ids, coords, data.holdout_times, data.holdout_x, data.holdout_y), paths["holdout"])
    write_json({"truth": data.spec.truth(), "spec": data.spec.model_dump(mode="json")}, paths["truth"])
    return paths

@dataclass(eq=False)
class Targets:
    """Prediction targets read from a CSV."""
    ids: List[str]
    points: List[SpaceTimePoint]
    x: np.ndarray
    y: Optional[np.ndarray] = None

def load_targets(path, p: int) -> Targets:
    """Targets with columns id (or site_id), s1.., t, x1..xp and optional y."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"id": str, "site_id": str})
    except FileNotFoundError:
        raise DatasetError(f"targets file not found: {path}")
    columns = list(frame.columns)
    id_column = "id" if "id" in columns else ("site_id" if "site_id" in columns else None)
    coord_cols = _numbered_columns(columns, "s")
    cov_cols = _numbered_columns(columns, "x")
    if "t" not in columns or not coord_cols:
        raise DatasetError("targets need columns s1[, s2[, s3]] and t")
    if len(cov_cols) != p:
        raise DatasetError(f"targets carry {len(cov_cols)} covariates, the model has {p}")

    coords = np.column_stack([_coerce_numeric(frame, c, required=True) for c in coord_cols])
    times = _coerce_numeric(frame, "t", required=True).to_numpy()
    x = np.column_stack([_coerce_numeric(frame, c, required=True) for c in cov_cols])
    y = _coerce_numeric(frame, "y", required=False).to_numpy() if "y" in columns else None
    ids = frame[id_column].astype(str).tolist() if id_column else [str(k) for k in range(len(frame))]
    points = [SpaceTimePoint(tuple(s), t) for s, t in zip(coords, times)]
    log_io_operation("Loaded targets", str(path), len(frame))
    return Targets(ids=ids, points=points, x=x, y=y)

def _companion(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)

def write_posterior(samples: PosteriorSamples, path, w_subset: Optional[List[int]] = None) -> None:
    """Posterior CSV plus a .meta.json sidecar and the full w draws as .npz.

    Columns: chain, iter, beta_0..beta_{p-1}, tau2, theta names, w_<i> for
    the requested subset of reference indices.
    """
    path = Path(path)
    frame = pd.DataFrame({"chain": samples.chain, "iter": samples.iteration})
    frame = pd.concat([frame, samples.parameter_frame()], axis=1)
    if w_subset:
        block = samples.w_at(w_subset)
        for col, j in enumerate(w_subset):
            frame[f"w_{j}"] = block[:, col]
    if len(samples) == 0:
        logger.warning(f"No stored posterior draws; writing header-only {path}")
    write_frame(frame, path)

    w_path = _companion(path, "_w.npz")
    np.savez_compressed(w_path, w=samples.w, w_index=samples.w_index)
    log_io_operation("Wrote w draws", str(w_path), len(samples))

    write_json({
        "acceptance": {str(k): v for k, v in sorted(samples.acceptance.items())},
        "theta_names": list(samples.theta_names),
        "covariance_form": samples.covariance_form.value,
        "n_draws": len(samples),
        "p": samples.p,
        "w_file": w_path.name
    }, path.with_name(path.name + ".meta.json"))

def read_posterior(path) -> PosteriorSamples:
    """Inverse of write_posterior, at full precision."""
    path = Path(path)
    if path.is_dir():
        path = path / "posterior.csv"
    meta = read_json(path.with_name(path.name + ".meta.json"))
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DatasetError(f"posterior file not found: {path}")

    p = int(meta["p"])
    theta_names = tuple(meta["theta_names"])
    w_path = path.with_name(meta["w_file"])
    if w_path.exists():
        with np.load(w_path) as archive:
            w, w_index = archive["w"], archive["w_index"]
    else:
        w_cols = [c for c in frame.columns if c.startswith("w_")]
        w = frame[w_cols].to_numpy(dtype=float)
        w_index = np.array([int(c[2:]) for c in w_cols], dtype=np.int64)

    samples = PosteriorSamples(
        theta_names=theta_names,
        covariance_form=CovarianceForm(meta["covariance_form"]),
        chain=frame["chain"].to_numpy(dtype=np.int64),
        iteration=frame["iter"].to_numpy(dtype=np.int64),
        beta=frame[[f"beta_{k}" for k in range(p)]].to_numpy(dtype=float).reshape(len(frame), p),
        tau2=frame["tau2"].to_numpy(dtype=float),
        theta=frame[list(theta_names)].to_numpy(dtype=float).reshape(len(frame), len(theta_names)),
        w=w.reshape(len(frame), -1) if len(frame) else w.reshape(0, w_index.shape[0]),
        w_index=w_index,
        acceptance={int(k): float(v) for k, v in meta["acceptance"].items()}
    )
    log_io_operation("Loaded posterior", str(path), len(frame))
    return samples

def package_versions() -> Dict[str, str]:
    return {
        "dnngp": dnngp.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "joblib": joblib.__version__
    }

def build_manifest(config: RunConfig, command: str, **details) -> Dict:
    """Run manifest: config hash, seed, full config and package versions."""
    return {
        "command": command,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "threads": config.threads,
        "config": config.model_dump(mode="json"),
        "versions": package_versions(),
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **details
    }

def resolve_data_path(path) -> Path:
    """A dataset path, or a simulate output directory holding data.csv."""
    path = Path(path)
    return path / "data.csv" if path.is_dir() else path

def resolve_run_dir(path) -> Tuple[Path, Path]:
    """(run directory, posterior CSV) from either of the two."""
    path = Path(path)
    if path.is_dir():
        return path, path / "posterior.csv"
    return path.parent, path
