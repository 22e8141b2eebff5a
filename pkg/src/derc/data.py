"""Dataset loading, saving, synthetic generation and the model container.

Samples are rows internally. GEO series-matrix files store samples as
columns and are transposed on load.
"""

from __future__ import annotations

import io
import json
import logging
import struct
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "null", "nan"}

CONTAINER_MAGIC = b"DERCMDL1"
CONTAINER_VERSION = 1


@dataclass
class Dataset:
    """Sample x feature matrix of beta values in [0, 1] with optional binary labels."""

    values: np.ndarray
    feature_ids: list[str]
    sample_ids: list[str]
    labels: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def validate(self) -> None:
        if self.values.ndim != 2:
            raise ValidationError("dataset matrix must be 2-D")
        n, d = self.values.shape
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("dataset contains non-finite values")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            bad = np.argwhere((self.values < 0.0) | (self.values > 1.0))[0]
            raise ValidationError(
                f"value outside [0, 1] at sample {bad[0]}, feature {bad[1]}: "
                f"{self.values[bad[0], bad[1]]}"
            )
        if len(self.feature_ids) != d:
            raise ValidationError("feature_ids length does not match matrix width")
        if len(set(self.feature_ids)) != d:
            raise ValidationError("feature_ids are not unique")
        if len(self.sample_ids) != n:
            raise ValidationError("sample_ids length does not match matrix height")
        if self.labels is not None:
            if len(self.labels) != n:
                raise ValidationError("labels length does not match sample count")
            if not np.all(np.isin(self.labels, (0, 1))):
                raise ValidationError("labels must be binary 0/1")

    def subset_features(self, indices: np.ndarray | list[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            values=self.values[:, indices].copy(),
            feature_ids=[self.feature_ids[i] for i in indices],
            sample_ids=list(self.sample_ids),
            labels=None if self.labels is None else self.labels.copy(),
        )


@dataclass
class SynthSpec:
    """Recipe for a reproducible synthetic methylation-like cohort."""

    n_samples: int = 100
    n_features: int = 500
    n_informative: int = 50
    class_ratio: float = 0.5
    seed: int = 0
    # (a, b) shape pairs for class 0 and class 1 informative features
    beta_params_informative: tuple[tuple[float, float], tuple[float, float]] = (
        (2.0, 8.0),
        (8.0, 2.0),
    )
    beta_params_noise: tuple[float, float] = (2.0, 2.0)

    def validate(self) -> None:
        if self.n_informative > self.n_features:
            raise ValidationError("n_informative must be <= n_features")
        if not 0.0 < self.class_ratio < 1.0:
            raise ValidationError("class_ratio must be in (0, 1)")
        shapes = [*self.beta_params_informative[0], *self.beta_params_informative[1],
                  *self.beta_params_noise]
        if any(s <= 0 for s in shapes):
            raise ValidationError("all Beta shape parameters must be > 0")


def _parse_cell(token: str, row: int, col: int) -> float:
    token = token.strip().strip('"')
    if token.lower() in MISSING_TOKENS:
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"non-numeric cell at table row {row}, column {col}: {token!r}")


def _impute_feature_means(values: np.ndarray, feature_ids: list[str]):
    """Replace NaNs by per-feature means; drop features that are all-missing."""
    keep = []
    dropped = []
    for j in range(values.shape[1]):
        col = values[:, j]
        mask = np.isnan(col)
        if mask.all():
            dropped.append(feature_ids[j])
            continue
        if mask.any():
            col[mask] = col[~mask].mean()
        keep.append(j)
    if dropped:
        logger.warning("dropped %d all-missing features: %s",
                       len(dropped), ", ".join(dropped[:10]))
    return values[:, keep], [feature_ids[j] for j in keep], dropped


def load_series_matrix(path) -> Dataset:
    """Parse a GEO series-matrix text file into a Dataset (samples as rows)."""
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()

    begin = end = None
    for i, line in enumerate(lines):
        if "series_matrix_table_begin" in line:
            begin = i
        elif "series_matrix_table_end" in line:
            end = i
    if begin is None:
        raise ParseError(f"{path}: missing series_matrix_table_begin marker")
    if end is None or end <= begin + 1:
        raise ParseError(
            f"{path}: missing or misplaced series_matrix_table_end marker "
            f"(begin at line {begin + 1})"
        )

    header = [t.strip().strip('"') for t in lines[begin + 1].split("\t")]
    sample_ids = header[1:]
    probe_ids: list[str] = []
    rows: list[list[float]] = []
    for r, line in enumerate(lines[begin + 2:end]):
        parts = line.split("\t")
        if len(parts) != len(header):
            raise ParseError(
                f"{path}: table row {r} has {len(parts)} columns, expected {len(header)}"
            )
        probe_ids.append(parts[0].strip().strip('"'))
        rows.append([_parse_cell(tok, r, c + 1) for c, tok in enumerate(parts[1:])])

    # file orientation is probe x sample; transpose to samples-as-rows
    values = np.asarray(rows, dtype=float).T
    values, feature_ids, _ = _impute_feature_means(values, probe_ids)
    ds = Dataset(values=values, feature_ids=feature_ids, sample_ids=sample_ids)
    ds.validate()
    return ds


def load_csv(path, has_labels: bool = False) -> Dataset:
    """Load a comma-separated matrix with a header of feature ids.

    When has_labels is true, the final column must be named "label" and
    contain binary class ids.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = [t.strip() for t in lines[0].split(",")]
    if has_labels:
        if header[-1] != "label":
            raise ValidationError(f"{path}: expected final column 'label', got {header[-1]!r}")
        feature_ids = header[:-1]
    else:
        feature_ids = header

    rows = []
    labels = []
    for r, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != len(header):
            raise ParseError(
                f"{path}: row {r} has {len(parts)} columns, expected {len(header)}"
            )
        if has_labels:
            lab = parts[-1].strip()
            if lab not in ("0", "1"):
                raise ValidationError(f"{path}: non-binary label {lab!r} at row {r}")
            labels.append(int(lab))
            parts = parts[:-1]
        rows.append([_parse_cell(tok, r, c) for c, tok in enumerate(parts)])

    values = np.asarray(rows, dtype=float)
    values, feature_ids, _ = _impute_feature_means(values, list(feature_ids))
    ds = Dataset(
        values=values,
        feature_ids=feature_ids,
        sample_ids=[f"s{i}" for i in range(values.shape[0])],
        labels=np.asarray(labels, dtype=int) if has_labels else None,
    )
    ds.validate()
    return ds


def save_csv(dataset: Dataset, path) -> None:
    """Write a Dataset in the load_csv format (label column when present)."""
    with open(path, "w", encoding="utf-8") as fh:
        header = list(dataset.feature_ids)
        if dataset.labels is not None:
            header.append("label")
        fh.write(",".join(header) + "\n")
        for i in range(dataset.n_samples):
            cells = [repr(float(v)) for v in dataset.values[i]]
            if dataset.labels is not None:
                cells.append(str(int(dataset.labels[i])))
            fh.write(",".join(cells) + "\n")


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Deterministic synthetic cohort with class-conditional Beta features."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, d, k = spec.n_samples, spec.n_features, spec.n_informative
    n1 = int(round(n * spec.class_ratio))
    labels = np.zeros(n, dtype=int)
    labels[n - n1:] = 1

    values = np.empty((n, d))
    a_noise, b_noise = spec.beta_params_noise
    values[:, k:] = rng.beta(a_noise, b_noise, size=(n, d - k))
    for cls in (0, 1):
        a, b = spec.beta_params_informative[cls]
        idx = labels == cls
        values[idx, :k] = rng.beta(a, b, size=(int(idx.sum()), k))

    ds = Dataset(
        values=values,
        feature_ids=[f"f{j}" for j in range(d)],
        sample_ids=[f"s{i}" for i in range(n)],
        labels=labels,
    )
    ds.validate()
    return ds


# --- model container -------------------------------------------------------
#
# Single file layout: 8-byte magic, 4-byte little-endian version, then an
# npz archive holding the tensors plus a JSON metadata blob.


def save_container(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(struct.pack("<I", CONTAINER_VERSION))
        fh.write(buf.getvalue())


def save_model(path, params, centroids: np.ndarray | None = None,
               extra_meta: dict | None = None) -> None:
    """Persist trained network parameters (AE or VAE) and optional centroids."""
    from .autoencoder import VaeParams
    from .network import NetworkParams

    arrays: dict[str, np.ndarray] = {}
    meta: dict = dict(extra_meta or {})
    if isinstance(params, VaeParams):
        meta["kind"] = "vae"
        stacks = {"trunk": params.trunk_layers, "dec": params.decoder_layers,
                  "mu": [params.mu_head], "lv": [params.logvar_head]}
    elif isinstance(params, NetworkParams):
        meta["kind"] = "ae"
        stacks = {"enc": params.encoder_layers, "dec": params.decoder_layers}
    else:
        raise ValidationError(f"cannot serialise model of type {type(params).__name__}")
    activations: dict[str, list[str]] = {}
    for name, layers in stacks.items():
        activations[name] = [ly.activation for ly in layers]
        for i, ly in enumerate(layers):
            arrays[f"{name}{i}_w"] = ly.weights
            arrays[f"{name}{i}_b"] = ly.bias
    meta["activations"] = activations
    meta["input_dim"] = int(params.input_dim)
    meta["latent_dim"] = int(params.latent_dim)
    if centroids is not None:
        arrays["centroids"] = np.asarray(centroids, dtype=float)
    save_container(path, arrays, meta)


def load_model(path):
    """Inverse of save_model; returns (params, centroids-or-None, meta)."""
    from .autoencoder import VaeParams
    from .network import DenseLayer, NetworkParams

    arrays, meta = load_container(path)

    def stack(name):
        acts = meta["activations"][name]
        return [
            DenseLayer(weights=arrays[f"{name}{i}_w"], bias=arrays[f"{name}{i}_b"],
                       activation=acts[i])
            for i in range(len(acts))
        ]

    if meta["kind"] == "vae":
        params = VaeParams(trunk_layers=stack("trunk"), mu_head=stack("mu")[0],
                           logvar_head=stack("lv")[0], decoder_layers=stack("dec"))
    else:
        params = NetworkParams(encoder_layers=stack("enc"),
                               decoder_layers=stack("dec"))
    centroids = arrays.get("centroids")
    return params, centroids, meta


def load_container(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        head = fh.read(len(CONTAINER_MAGIC))
        if head != CONTAINER_MAGIC:
            raise ParseError(f"{path}: not a model container (bad magic bytes)")
        raw = fh.read(4)
        if len(raw) < 4:
            raise ParseError(f"{path}: truncated container header")
        version = struct.unpack("<I", raw)[0]
        if version > CONTAINER_VERSION:
            raise ValidationError(
                f"{path}: container version {version} is newer than supported "
                f"version {CONTAINER_VERSION}"
            )
        payload = fh.read()
    try:
        archive = np.load(io.BytesIO(payload), allow_pickle=False)
        arrays = {k: archive[k] for k in archive.files}
    except (zipfile.BadZipFile, ValueError, OSError, EOFError) as exc:
        raise ParseError(f"{path}: truncated or corrupt container payload: {exc}")
    meta = json.loads(bytes(arrays.pop("__meta__")).decode())
    return arrays, meta
