# core/artifact_store.py
"""
Files a run leaves behind: model parameters as versioned JSON, sample sets
as a columnar .npz with a JSON sidecar, and SHA-256 fingerprints.
"""
import hashlib
import json
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.data_pipeline import FEATURE_NAMES, stack_samples
from core.model import ModelParams, ModelSpec, init_params
from utils.data_models import Sample, StandardizationStats, WindowSpec
from utils.errors import ConfigError, DataIngestionError
from utils.tensor_math import SeededRng

PARAMS_FORMAT = 'loan-kan-params'
SAMPLES_FORMAT = 'loan-kan-samples'
FORMAT_VERSION = 1


def save_params(spec: ModelSpec, params: ModelParams, path: str) -> str:
    """Trainable tensors and buffers (running statistics, KAN grids) with their shapes"""
    tensors = {**params.named_tensors(), **params.named_buffers()}
    document = {
        'format': PARAMS_FORMAT,
        'version': FORMAT_VERSION,
        'spec': spec.to_dict(),
        'tensors': {name: {'shape': list(arr.shape), 'data': arr.ravel().tolist()} for name, arr in tensors.items()},
    }
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(document, f)
    return path


def load_params(path: str) -> Tuple[ModelSpec, ModelParams]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read parameter file {path}: {e}") from e
    if document.get('format') != PARAMS_FORMAT or document.get('version') != FORMAT_VERSION:
        raise ConfigError(f"{path} is not a version {FORMAT_VERSION} {PARAMS_FORMAT} file")

    spec = ModelSpec.from_dict(document['spec'])
    params = init_params(spec, SeededRng(0))
    groups = params.groups()
    expected = {**params.named_tensors(), **params.named_buffers()}
    if set(document['tensors']) != set(expected):
        raise ConfigError(f"{path}: tensor names do not match the stored model spec")
    for name, entry in document['tensors'].items():
        array = np.array(entry['data'], dtype=np.float64).reshape(entry['shape'])
        if array.shape != expected[name].shape:
            raise ConfigError(f"{path}: tensor {name} has shape {array.shape}, expected {expected[name].shape}")
        group, attr = name.split('.', 1)
        setattr(groups[group], attr, array)
    return spec, params


def _sidecar_path(path: str) -> str:
    return os.path.splitext(path)[0] + '.json'


def save_samples(samples: Sequence[Sample], path: str, window: Optional[WindowSpec] = None,
                 standardization: Optional[StandardizationStats] = None,
                 extra: Optional[Dict[str, Any]] = None) -> str:
    """Write `<path>` (.npz arrays) and `<stem>.json` (window, feature names, standardization)"""
    if not path.endswith('.npz'):
        path += '.npz'
    batch = stack_samples(samples, window.feature_len if window else None)
    _ensure_parent(path)
    np.savez(
        path,
        features=batch.features,
        mask=batch.mask,
        labels=np.array([s.label for s in samples], dtype=np.int64),
        loan_ids=np.array([s.loan_id for s in samples], dtype=str),
        cohort_years=np.array([s.cohort_year for s in samples], dtype=np.int64),
    )
    sidecar = {
        'format': SAMPLES_FORMAT,
        'version': FORMAT_VERSION,
        'count': len(samples),
        'window': list(window.as_tuple()) if window else None,
        'feature_names': list(FEATURE_NAMES),
        'standardization': None if standardization is None else {
            'feature_names': standardization.feature_names,
            'continuous': standardization.continuous,
            'mean': standardization.mean.tolist(),
            'scale': standardization.scale.tolist(),
        },
        **(extra or {}),
    }
    with open(_sidecar_path(path), 'w', encoding='utf-8') as f:
        json.dump(sidecar, f, indent=2)
    return path


def load_samples(path: str) -> Tuple[List[Sample], Dict[str, Any]]:
    """Inverse of save_samples; the sidecar's standardization comes back as StandardizationStats"""
    try:
        with np.load(path) as data:
            arrays = {key: data[key] for key in data.files}
        with open(_sidecar_path(path), 'r', encoding='utf-8') as f:
            sidecar = json.load(f)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        raise DataIngestionError(f"Cannot read samples {path}: {e}") from e
    if sidecar.get('format') != SAMPLES_FORMAT:
        raise DataIngestionError(f"{_sidecar_path(path)} is not a {SAMPLES_FORMAT} sidecar")

    samples = [
        Sample(arrays['features'][i], arrays['mask'][i], int(arrays['labels'][i]), str(arrays['loan_ids'][i]),
               int(arrays['cohort_years'][i]))
        for i in range(len(arrays['labels']))
    ]
    stats = sidecar.get('standardization')
    if stats is not None:
        sidecar['standardization'] = StandardizationStats(stats['feature_names'], stats['continuous'],
                                                          np.array(stats['mean']), np.array(stats['scale']))
    if sidecar.get('window'):
        sidecar['window'] = WindowSpec(*sidecar['window'])
    return samples, sidecar


def fingerprint_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def fingerprint_samples(samples: Sequence[Sample]) -> str:
    """SHA-256 over features, masks and labels in order"""
    digest = hashlib.sha256()
    for s in samples:
        digest.update(np.ascontiguousarray(s.features).tobytes())
        digest.update(np.ascontiguousarray(s.mask).tobytes())
        digest.update(bytes([s.label]))
    return digest.hexdigest()


def fingerprint_json(value: Any) -> str:
    return hashlib.sha256(json.dumps(value, sort_keys=True, default=str).encode('utf-8')).hexdigest()


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
