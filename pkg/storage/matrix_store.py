"""
Matrix Store for the Sylvester LCU toolkit
Reads and writes instance files, run reports and sweep CSVs using the
row-major matrix JSON format {"rows", "cols", "entries": [[re, im], ...]}
"""

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from services.error_handler import InstanceParseError, SylvesterError, get_logger
from services.problem_model import SylvesterInstance, reduce_rectangular, rescale_instance

DEFAULT_OUTPUT_DIR = 'results'
CSV_COLUMNS = ['case', 'n', 'kappa', 'epsilon', 'y', 'x', 'mult_err', 'residual', 'q_est',
               'term_count', 'max_evolution_time', 'wall_time', 'pass']

logger = get_logger(__name__)


def encode_matrix(m) -> Dict[str, Any]:
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise InstanceParseError(f"Only 2-D arrays can be encoded, got shape {arr.shape}")
    return {
        'rows': int(arr.shape[0]),
        'cols': int(arr.shape[1]),
        'entries': [[float(z.real), float(z.imag)] for z in arr.reshape(-1)],
    }


def decode_matrix(obj: Any, name: str = 'matrix') -> np.ndarray:
    """Inverse of encode_matrix; plain real entries are accepted too"""
    if not isinstance(obj, dict) or not {'rows', 'cols', 'entries'} <= set(obj):
        raise InstanceParseError(f"{name}: expected an object with rows, cols and entries")
    rows, cols, entries = obj['rows'], obj['cols'], obj['entries']
    if not isinstance(rows, int) or not isinstance(cols, int) or rows < 0 or cols < 0:
        raise InstanceParseError(f"{name}: rows and cols must be non-negative integers")
    if not isinstance(entries, list) or len(entries) != rows * cols:
        raise InstanceParseError(f"{name}: expected {rows * cols} entries, got "
                                 f"{len(entries) if isinstance(entries, list) else type(entries).__name__}")
    values = np.empty(rows * cols, dtype=np.complex128)
    for k, entry in enumerate(entries):
        try:
            if isinstance(entry, (list, tuple)):
                if len(entry) != 2:
                    raise ValueError
                values[k] = complex(float(entry[0]), float(entry[1]))
            else:
                values[k] = complex(float(entry), 0.0)
        except (TypeError, ValueError):
            raise InstanceParseError(f"{name}: entry {k} is not a [re, im] pair")
    return values.reshape(rows, cols)


@dataclass
class LoadedProblem:
    """An instance file after validation, rescaling and (for M×N files) embedding"""
    instance: SylvesterInstance
    scale: float = 1.0
    rectangular: Optional[Dict[str, Any]] = None
    source: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'scale': self.scale, 'rectangular': self.rectangular, 'source': self.source,
                'notes': list(self.notes)}


def instance_to_dict(inst: SylvesterInstance) -> Dict[str, Any]:
    data = {
        'a': encode_matrix(inst.a),
        'b': encode_matrix(inst.b),
        'c': encode_matrix(inst.c),
        'alpha': inst.alpha,
    }
    if inst.has_roots:
        data['p_a'] = encode_matrix(inst.p_a)
        data['p_b'] = encode_matrix(inst.p_b)
    return data


def problem_from_dict(data: Dict[str, Any], source: Optional[str] = None) -> LoadedProblem:
    """
    Validate an instance object

    Square problems are rescaled so ‖A‖, ‖B‖ ≤ 1/2; rectangular ones are embedded
    into a square instance first. alpha defaults to ‖C‖.
    """
    if not isinstance(data, dict):
        raise InstanceParseError("Instance file must hold a JSON object")
    missing = [key for key in ('a', 'b', 'c') if key not in data]
    if missing:
        raise InstanceParseError(f"Instance is missing {', '.join(missing)}")
    a = decode_matrix(data['a'], 'a')
    b = decode_matrix(data['b'], 'b')
    c = decode_matrix(data['c'], 'c')
    roots = [decode_matrix(data[key], key) if data.get(key) is not None else None for key in ('p_a', 'p_b')]
    alpha = data.get('alpha')
    if alpha is not None and not isinstance(alpha, (int, float)):
        raise InstanceParseError("alpha must be a number")

    mapping = None
    try:
        if c.shape[0] != c.shape[1]:
            inst, mapping = reduce_rectangular(a, b, c)
            if alpha is not None:
                inst = inst.replace(alpha=float(alpha))
        else:
            c_norm = float(np.linalg.norm(c, 2)) if c.size else 0.0
            inst = SylvesterInstance(a=a, b=b, c=c, alpha=float(alpha) if alpha is not None else max(c_norm, 1e-300),
                                     p_a=roots[0], p_b=roots[1], normalized=False)
        inst, scale = rescale_instance(inst)
    except SylvesterError as e:
        raise e.with_stage('load')

    notes = list(inst.notes)
    if scale != 1.0:
        notes.append(f"A, B, C and alpha rescaled by {scale:.6g}; kappa grows by {1.0 / scale:.6g}")
    return LoadedProblem(instance=inst, scale=scale, rectangular=mapping, source=source, notes=notes)


def load_problem(path: str) -> LoadedProblem:
    if not os.path.exists(path):
        raise InstanceParseError(f"Instance file not found: {path}", stage='load')
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceParseError(f"{path}: malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}",
                                 stage='load', context={'line': e.lineno, 'column': e.colno})
    try:
        return problem_from_dict(data, source=path)
    except InstanceParseError as e:
        raise InstanceParseError(f"{path}: {e}", stage='load', context=e.context)


def load_instance(path: str) -> SylvesterInstance:
    return load_problem(path).instance


def save_instance(inst: SylvesterInstance, path: str) -> str:
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(instance_to_dict(inst), f, indent=2)
    return path


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def sibling_path(report_path: str, label: str) -> str:
    """results/run.json → results/run.<label>.json"""
    stem, ext = os.path.splitext(report_path)
    return f"{stem}.{label}{ext or '.json'}"


def dumps_report(report: Dict[str, Any]) -> str:
    """Canonical JSON text: sorted keys so equal reports serialize byte-identically"""
    return json.dumps(report, indent=2, sort_keys=True, default=str)


class MatrixStore:
    """
    Output directory for run artifacts

    Layout:
    - <root>/<name>.json: run reports
    - <root>/<name>.<label>.json: artifacts of that run (program, x_hat, unitary)
    - <root>/<name>.csv: sweep rows (header written once)
    """

    def __init__(self, root: Optional[str] = None):
        self.root = root or DEFAULT_OUTPUT_DIR

    def _path(self, name_or_path: str, suffix: str) -> str:
        if os.path.isabs(name_or_path) or os.path.dirname(name_or_path):
            return name_or_path
        name = name_or_path if name_or_path.endswith(suffix) else name_or_path + suffix
        return os.path.join(self.root, name)

    def write_report(self, report: Dict[str, Any], name_or_path: str) -> str:
        path = self._path(name_or_path, '.json')
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(dumps_report(report))
            f.write('\n')
        logger.info(f"Report written to {path}")
        return path

    def write_artifact(self, data: Dict[str, Any], report_path: str, label: str) -> str:
        """Compact (unindented) JSON next to a written report"""
        path = sibling_path(report_path, label)
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, sort_keys=True, default=str)
        logger.info(f"Artifact '{label}' written to {path}")
        return path

    def read_report(self, name_or_path: str) -> Dict[str, Any]:
        path = self._path(name_or_path, '.json')
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    def append_rows(self, rows: Iterable[Dict[str, Any]], name_or_path: str,
                    columns: Optional[List[str]] = None) -> str:
        path = self._path(name_or_path, '.csv')
        _ensure_parent(path)
        columns = columns or CSV_COLUMNS
        new_file = not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, 'a', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=columns, extrasaction='ignore')
            if new_file:
                writer.writeheader()
            for row in rows:
                writer.writerow(row)
        return path

    def read_rows(self, name_or_path: str) -> List[Dict[str, str]]:
        path = self._path(name_or_path, '.csv')
        with open(path, 'r', newline='', encoding='utf-8') as f:
            return list(csv.DictReader(f))

    def export_matrix(self, m, name_or_path: str) -> str:
        path = self._path(name_or_path, '.json')
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(encode_matrix(m), f)
        return path
