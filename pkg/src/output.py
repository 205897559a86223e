"""CSV and JSON writers; every float is written with 17 significant digits."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Sequence

import numpy as np

from src.errors import ConfigError
from src.geometry import QuotientManifold
from src.models.trajectory import Trajectory

logger = logging.getLogger(__name__)

EMBED_COLUMNS = ['k1', 'k2', 'k3']


def fmt(value: float) -> str:
    return format(float(value), '.17g')


def _plain(obj):
    """JSON-ready copy: numpy scalars and arrays become Python values"""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def to_json(data: Dict[str, Any]) -> str:
    return json.dumps(_plain(data), sort_keys=True, indent=2) + '\n'


def write_json(data: Dict[str, Any], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(data), encoding='utf-8')
    logger.info(f"Wrote {path}")
    return path


def trajectory_header(traj: Trajectory) -> List[str]:
    first = traj.samples[0]
    return (['t'] + traj.coordinate_names + ['mode']
            + [f"s{i}" for i in range(len(first.s))]
            + [f"u{i}" for i in range(len(first.u))] + ['drift'])


def trajectory_rows(traj: Trajectory, prefix: Sequence[str] = ()) -> Iterable[List[str]]:
    width_s = len(traj.samples[0].s)
    width_u = len(traj.samples[0].u)
    for sample in traj.samples:
        u = sample.u if len(sample.u) == width_u else np.zeros(width_u)
        yield (list(prefix) + [fmt(sample.t)] + [fmt(v) for v in sample.x] + [sample.mode.label]
               + [fmt(v) for v in sample.s[:width_s]] + [fmt(v) for v in u] + [fmt(sample.drift)])


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(trajectory_header(traj))
        writer.writerows(trajectory_rows(traj))
    logger.info(f"Wrote {path} ({len(traj)} samples)")
    return path


def embedding_rows(times, states, quotient: QuotientManifold,
                   embed: Callable[[float, float], np.ndarray]) -> Iterable[List[str]]:
    for t, x in zip(times, states):
        c = quotient.canonicalize(x)
        k = embed(c[0], c[1])
        yield [fmt(t), fmt(c[0]), fmt(c[1])] + [fmt(v) for v in k]


def write_embedding_csv(times, states, quotient: QuotientManifold,
                        embed: Callable[[float, float], np.ndarray], path) -> Path:
    """R^3 coordinates of the canonical representatives"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh, lineterminator='\n')
        writer.writerow(['t', 'theta', 'omega'] + EMBED_COLUMNS)
        writer.writerows(embedding_rows(times, states, quotient, embed))
    logger.info(f"Wrote {path}")
    return path


def read_quotient_csv(path) -> Dict[str, np.ndarray]:
    """Columns t (optional), theta and omega of a trajectory CSV"""
    path = Path(path)
    try:
        with path.open(newline='', encoding='utf-8') as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            missing = [c for c in ('theta', 'omega') if c not in fields]
            if missing:
                raise ConfigError(f"missing column(s) {', '.join(missing)}", str(path), 1)
            times, states = [], []
            for row in reader:
                try:
                    states.append([float(row['theta']), float(row['omega'])])
                    times.append(float(row['t']) if 't' in fields else float(len(times)))
                except (TypeError, ValueError):
                    raise ConfigError("non-numeric value", str(path), reader.line_num)
    except OSError as exc:
        raise ConfigError(f"cannot read CSV: {exc.strerror}", str(path)) from exc
    return {'t': np.array(times), 'x': np.array(states).reshape(-1, 2)}
