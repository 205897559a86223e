"""Scenario files: TOML parsing, validation and the resolved run configuration."""

import logging
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from src.config import DEFAULT_TOLERANCES, Tolerances, settings
from src.controllers import (
    DISTURBANCE_KINDS,
    ControllerFamily,
    ControllerInstance,
    DisturbanceSpec,
    DisturbanceTerm,
)
from src.errors import ConfigError, SimulationError
from src.geometry import EuclideanSpace, rotation_bundle, sphere_bundle
from src.integrator import IntegratorOptions
from src.prng import SplitMix64
from src.systems import build_closed_loop

logger = logging.getLogger(__name__)

MANIFOLD_FAMILIES = {
    'so3': (ControllerFamily.SO3_FIRST_ORDER,),
    's2': (ControllerFamily.S2_FIRST_ORDER, ControllerFamily.S2_TERMINAL),
    'cylinder': (ControllerFamily.CYLINDER_TWISTING,),
    'mobius': (ControllerFamily.MOBIUS,),
    'line': (ControllerFamily.FILIPPOV_LINE,),
}

# user-facing coordinates of one initial point
POINT_SIZES = {'so3': 6, 's2': 6, 'cylinder': 2, 'mobius': 2, 'line': 1}
DISTURBANCE_DIMS = {'so3': 3, 's2': 3, 'cylinder': 1, 'mobius': 1, 'line': 0}
QUOTIENTS = ('cylinder', 'mobius')

RETRACTION_LIMIT = 1e-6

CONTROLLER_DEFAULTS = {
    ControllerFamily.FILIPPOV_LINE: {'bias': 0.5},
    ControllerFamily.CYLINDER_TWISTING: {'k1': 5.0, 'k2': 2.0, 'd_bar': 0.0},
    ControllerFamily.MOBIUS: {'theta_star': 1.0, 'gain': 1.0, 'd_bar': 0.0},
    ControllerFamily.SO3_FIRST_ORDER: {'J': np.eye(3).tolist(), 'd_bar': 0.0, 'eta': 0.1,
                                       'R_d': [0.0, 0.0, 0.0]},
    ControllerFamily.S2_FIRST_ORDER: {'J': np.eye(3).tolist(), 'd_bar': 0.0, 'eta': 0.1,
                                      'L_d': [0.0, 0.0, 1.0]},
    ControllerFamily.S2_TERMINAL: {'J': np.eye(3).tolist(), 'd_bar': 0.0, 'eta': 0.1,
                                   'L_d': [0.0, 0.0, 1.0], 'k_max': 1e3},
}

INTEGRATOR_KEYS = ('step', 'tol_event', 'tol_surface', 'tol_corner', 'lambda_margin', 'max_steps',
                   'equilibrium_tol', 'equilibrium_steps', 'projection_cadence')


@dataclass(frozen=True)
class InitialSpec:
    """Initial conditions: explicit points, a (theta, omega) grid or seeded random draws"""

    kind: str
    points: Tuple[Tuple[float, ...], ...] = ()
    theta: Tuple[float, ...] = ()
    omega: Tuple[float, ...] = ()
    count: int = 0
    seed: Optional[int] = None
    low: Tuple[float, ...] = ()
    high: Tuple[float, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == 'points':
            return {'points': [list(p) for p in self.points]}
        if self.kind == 'grid':
            return {'grid': {'theta': list(self.theta), 'omega': list(self.omega)}}
        return {'random': {'count': self.count, 'seed': self.seed, 'low': list(self.low), 'high': list(self.high)}}


@dataclass(frozen=True)
class DescentSettings:
    samples: int = 200
    z_range: int = 3
    bounds: Tuple[Tuple[float, float], ...] = ((-math.pi, math.pi), (-2.0, 2.0))
    seed: int = settings.descent_seed

    def to_dict(self) -> Dict[str, Any]:
        return {'samples': self.samples, 'z_range': self.z_range,
                'bounds': [list(b) for b in self.bounds], 'seed': self.seed}


@dataclass(frozen=True)
class PortraitSettings:
    probe_radius: float = 0.05
    probe_time: float = 10.0
    probe_count: int = 8
    polyline_points: int = 201

    def to_dict(self) -> Dict[str, Any]:
        return {'probe_radius': self.probe_radius, 'probe_time': self.probe_time,
                'probe_count': self.probe_count, 'polyline_points': self.polyline_points}


@dataclass(frozen=True)
class Scenario:
    name: str
    manifold: str
    controller: ControllerInstance
    disturbance: DisturbanceSpec
    initial: InitialSpec
    t_span: Tuple[float, float]
    integrator: IntegratorOptions
    seed: int = 0
    tolerances: Tolerances = DEFAULT_TOLERANCES
    outputs: Dict[str, bool] = field(default_factory=dict)
    descent: DescentSettings = field(default_factory=DescentSettings)
    portrait: PortraitSettings = field(default_factory=PortraitSettings)
    source: Optional[str] = None

    def with_overrides(self, seed: Optional[int] = None, step: Optional[float] = None,
                       epsilon: Optional[float] = None) -> 'Scenario':
        """Copy with CLI overrides applied; a new seed also reseeds random initial points"""
        out = self
        if seed is not None:
            initial = replace(out.initial, seed=None) if out.initial.kind == 'random' else out.initial
            out = replace(out, seed=int(seed), initial=initial)
        if step is not None:
            out = replace(out, integrator=replace(out.integrator, step=float(step)))
        if epsilon is not None:
            if epsilon <= 0.0:
                raise ConfigError(f"boundary layer width must be positive, got {epsilon}")
            out = replace(out, controller=replace(out.controller, regularization=float(epsilon)),
                          integrator=replace(out.integrator, regularized=True))
        return out

    def initial_points(self) -> List[np.ndarray]:
        """Initial states in ambient coordinates, retracted onto the manifold"""
        spec = self.initial
        if spec.kind == 'points':
            raw = [np.asarray(p, dtype=float) for p in spec.points]
        elif spec.kind == 'grid':
            raw = [np.array([th, om]) for th in spec.theta for om in spec.omega]
        else:
            raw = self._random_points()
        return [to_ambient(self.manifold, p, checked=spec.kind != 'random', source=self.source) for p in raw]

    def _random_points(self) -> List[np.ndarray]:
        rng = SplitMix64(self.initial.seed if self.initial.seed is not None else self.seed)
        spec = self.initial
        points = []
        for _ in range(spec.count):
            if self.manifold == 's2':
                # direction from three normals, rates from the box
                L = np.array([rng.normal() for _ in range(3)])
                w = rng.uniform_array(spec.low, spec.high, 1)[0]
                points.append(np.concatenate([L / np.linalg.norm(L), w]))
            else:
                points.append(rng.uniform_array(spec.low, spec.high, 1)[0])
        return points

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'manifold': self.manifold,
            'seed': self.seed,
            't_span': list(self.t_span),
            'controller': self.controller.to_dict(),
            'disturbance': self.disturbance.to_dict(),
            'initial': self.initial.to_dict(),
            'integrator': self.integrator.to_dict(),
            'tolerances': self.tolerances.to_dict(),
            'outputs': dict(self.outputs),
            'descent': self.descent.to_dict(),
            'portrait': self.portrait.to_dict(),
        }


def manifold_for(name: str):
    if name == 'so3':
        return rotation_bundle()
    if name == 's2':
        return sphere_bundle()
    if name == 'line':
        return EuclideanSpace(1, names=['x'], name='line')
    return EuclideanSpace(2, names=['theta', 'omega'], name=name)


def to_ambient(manifold: str, point, checked: bool = True, source: Optional[str] = None) -> np.ndarray:
    """User coordinates to ambient state; so3 points are rotation vector then body rates"""
    p = np.asarray(point, dtype=float)
    if p.size != POINT_SIZES[manifold]:
        raise ConfigError(f"{manifold} initial points need {POINT_SIZES[manifold]} numbers, got {p.size}", source)
    if manifold == 'so3':
        R = Rotation.from_rotvec(p[:3]).as_matrix()
        return rotation_bundle().retract(np.concatenate([R.ravel(), p[3:]]))
    x = manifold_for(manifold).retract(p)
    correction = float(np.linalg.norm(x - p))
    if checked and correction > RETRACTION_LIMIT:
        raise ConfigError(f"initial point {p.tolist()} is {correction:.3g} away from the {manifold} state space", source)
    return x


# parsing

def _line_of(text: str, key: str, table: Optional[str] = None) -> Optional[int]:
    """Line number of `key = ...` (inside [table] when given) or of the table header"""
    lines = text.splitlines()
    start = 0
    if table is not None:
        header = re.compile(r'^\s*\[\[?\s*' + re.escape(table) + r'\s*\]\]?\s*$')
        for i, line in enumerate(lines):
            if header.match(line):
                start = i
                if key is None:
                    return i + 1
                break
    if key is None:
        return None
    pattern = re.compile(r'^\s*' + re.escape(key) + r'\s*=')
    for i in range(start, len(lines)):
        if pattern.match(lines[i]):
            return i + 1
    return start + 1 if table is not None else None


class _Reader:
    """Typed access to one parsed file, with line-anchored errors"""

    def __init__(self, data: Dict[str, Any], text: str, path: Optional[str]):
        self.data = data
        self.text = text
        self.path = path

    def fail(self, message: str, table: Optional[str] = None, key: Optional[str] = None):
        raise ConfigError(message, self.path, _line_of(self.text, key, table))

    def table(self, name: str, required: bool = False) -> Dict[str, Any]:
        value = self.data.get(name)
        if value is None:
            if required:
                self.fail(f"missing required table [{name}]")
            return {}
        if not isinstance(value, dict):
            self.fail(f"'{name}' must be a table", key=name)
        return value

    def number(self, tbl: Dict[str, Any], table: str, key: str, default=None, positive: bool = False,
               integer: bool = False):
        if key not in tbl:
            if default is None:
                self.fail(f"missing required key '{key}' in [{table}]", table, None)
            return default
        value = tbl[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"'{key}' must be a number", table, key)
        if integer and not isinstance(value, int):
            self.fail(f"'{key}' must be an integer", table, key)
        if not math.isfinite(value):
            self.fail(f"'{key}' must be finite", table, key)
        if positive and value <= 0:
            self.fail(f"'{key}' must be positive, got {value}", table, key)
        return value

    def vector(self, tbl: Dict[str, Any], table: str, key: str, size: Optional[int] = None,
               default=None) -> List[float]:
        if key not in tbl:
            if default is None:
                self.fail(f"missing required key '{key}' in [{table}]", table, None)
            return list(default)
        value = tbl[key]
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            self.fail(f"'{key}' must be a list of numbers", table, key)
        if size is not None and len(value) != size:
            self.fail(f"'{key}' must have {size} entries, got {len(value)}", table, key)
        return [float(v) for v in value]


def _parse_controller(r: _Reader, manifold: str) -> ControllerInstance:
    tbl = r.table('controller', required=True)
    family_name = tbl.get('family')
    allowed = MANIFOLD_FAMILIES[manifold]
    if family_name is None:
        family = allowed[0]
    else:
        try:
            family = ControllerFamily(family_name)
        except ValueError:
            r.fail(f"unknown controller family '{family_name}'", 'controller', 'family')
        if family not in allowed:
            r.fail(f"family '{family_name}' does not act on manifold '{manifold}' "
                   f"(expected {', '.join(f.value for f in allowed)})", 'controller', 'family')
    params = dict(CONTROLLER_DEFAULTS[family])
    for key, default in CONTROLLER_DEFAULTS[family].items():
        if key == 'J':
            if 'J' in tbl:
                J = tbl['J']
                if not (isinstance(J, list) and len(J) == 3 and all(isinstance(row, list) for row in J)):
                    r.fail("'J' must be a 3x3 array", 'controller', 'J')
                params['J'] = [r.vector({'J': row}, 'controller', 'J', 3) for row in J]
        elif isinstance(default, list):
            params[key] = r.vector(tbl, 'controller', key, 3, default)
        else:
            params[key] = float(r.number(tbl, 'controller', key, default))
    unknown = set(tbl) - set(params) - {'family', 'boundary_layer'}
    if unknown:
        r.fail(f"unknown controller keys: {', '.join(sorted(unknown))}", 'controller', sorted(unknown)[0])
    if family == ControllerFamily.SO3_FIRST_ORDER:
        params['R_d'] = Rotation.from_rotvec(params['R_d']).as_matrix().tolist()
    if family in (ControllerFamily.S2_FIRST_ORDER, ControllerFamily.S2_TERMINAL):
        norm = float(np.linalg.norm(params['L_d']))
        if abs(norm - 1.0) > RETRACTION_LIMIT:
            r.fail(f"'L_d' must be a unit vector (norm {norm:.6g})", 'controller', 'L_d')
    epsilon = None
    if 'boundary_layer' in tbl:
        epsilon = float(r.number(tbl, 'controller', 'boundary_layer', positive=True))
    return ControllerInstance(family, params, epsilon)


def _parse_disturbance(r: _Reader, manifold: str) -> DisturbanceSpec:
    tbl = r.table('disturbance')
    terms = tbl.get('terms', [])
    dim = DISTURBANCE_DIMS[manifold]
    if not isinstance(terms, list):
        r.fail("'disturbance.terms' must be an array of tables", 'disturbance.terms')
    channels: List[List[DisturbanceTerm]] = [[] for _ in range(dim)]
    for term in terms:
        channel = term.get('channel', 0)
        if not isinstance(channel, int) or not 0 <= channel < dim:
            r.fail(f"disturbance channel {channel} out of range for {manifold} (dimension {dim})",
                   'disturbance.terms', 'channel')
        kind = term.get('kind')
        if kind not in DISTURBANCE_KINDS:
            r.fail(f"unknown disturbance kind '{kind}' (expected one of {', '.join(DISTURBANCE_KINDS)})",
                   'disturbance.terms', 'kind')
        channels[channel].append(DisturbanceTerm(
            kind,
            float(r.number(term, 'disturbance.terms', 'amplitude', 0.0)),
            float(r.number(term, 'disturbance.terms', 'frequency', 0.0)),
            float(r.number(term, 'disturbance.terms', 'phase', 0.0)),
        ))
    return DisturbanceSpec(tuple(tuple(ch) for ch in channels))


def _parse_initial(r: _Reader, manifold: str) -> InitialSpec:
    tbl = r.table('initial', required=True)
    present = [k for k in ('points', 'grid', 'random') if k in tbl]
    if len(present) != 1:
        r.fail("[initial] needs exactly one of 'points', 'grid' or 'random'", 'initial', None)
    kind = present[0]
    size = POINT_SIZES[manifold]
    if kind == 'points':
        points = tbl['points']
        if not isinstance(points, list) or not points:
            r.fail("'points' must be a non-empty array of points", 'initial', 'points')
        return InitialSpec('points', tuple(tuple(r.vector({'points': p}, 'initial', 'points', size))
                                           for p in points))
    if kind == 'grid':
        if manifold not in QUOTIENTS:
            r.fail(f"grid initial conditions need a quotient manifold, not '{manifold}'", 'initial', 'grid')
        grid = tbl['grid']
        theta = r.vector(grid, 'initial.grid', 'theta')
        omega = r.vector(grid, 'initial.grid', 'omega')
        if not theta or not omega:
            r.fail("initial grid is empty", 'initial', 'grid')
        return InitialSpec('grid', theta=tuple(theta), omega=tuple(omega))
    rnd = tbl['random']
    box = 3 if manifold == 's2' else size
    count = int(r.number(rnd, 'initial.random', 'count', positive=True, integer=True))
    seed = rnd.get('seed')
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        r.fail("'seed' must be a nonnegative integer", 'initial.random', 'seed')
    low = r.vector(rnd, 'initial.random', 'low', box)
    high = r.vector(rnd, 'initial.random', 'high', box)
    if any(h < l for l, h in zip(low, high)):
        r.fail("random box needs low <= high", 'initial.random', 'high')
    return InitialSpec('random', count=count, seed=seed, low=tuple(low), high=tuple(high))


def _parse_integrator(r: _Reader) -> IntegratorOptions:
    tbl = r.table('integrator')
    unknown = set(tbl) - set(INTEGRATOR_KEYS)
    if unknown:
        r.fail(f"unknown integrator keys: {', '.join(sorted(unknown))}", 'integrator', sorted(unknown)[0])
    kwargs = {}
    for key in INTEGRATOR_KEYS:
        if key in tbl:
            integer = key in ('max_steps', 'equilibrium_steps', 'projection_cadence')
            kwargs[key] = r.number(tbl, 'integrator', key, positive=True, integer=integer)
    try:
        return IntegratorOptions(**kwargs)
    except ValueError as exc:
        r.fail(str(exc), 'integrator', None)


def _parse_tolerances(r: _Reader) -> Tolerances:
    tbl = r.table('tolerances')
    try:
        return Tolerances(**{k: v for k, v in tbl.items()})
    except (TypeError, ValueError) as exc:
        r.fail(f"invalid tolerances: {exc}", 'tolerances', None)


def _parse_descent(r: _Reader) -> DescentSettings:
    tbl = r.table('descent')
    base = DescentSettings()
    bounds = base.bounds
    if 'bounds' in tbl:
        raw = tbl['bounds']
        if not isinstance(raw, list) or not raw:
            r.fail("'bounds' must be a list of [low, high] pairs", 'descent', 'bounds')
        bounds = tuple(tuple(r.vector({'bounds': b}, 'descent', 'bounds', 2)) for b in raw)
    return DescentSettings(
        samples=int(r.number(tbl, 'descent', 'samples', base.samples, positive=True, integer=True)),
        z_range=int(r.number(tbl, 'descent', 'z_range', base.z_range, positive=True, integer=True)),
        bounds=bounds,
        seed=int(r.number(tbl, 'descent', 'seed', base.seed, integer=True)),
    )


def _parse_portrait(r: _Reader) -> PortraitSettings:
    tbl = r.table('portrait')
    base = PortraitSettings()
    return PortraitSettings(
        probe_radius=float(r.number(tbl, 'portrait', 'probe_radius', base.probe_radius, positive=True)),
        probe_time=float(r.number(tbl, 'portrait', 'probe_time', base.probe_time, positive=True)),
        probe_count=int(r.number(tbl, 'portrait', 'probe_count', base.probe_count, positive=True, integer=True)),
        polyline_points=int(r.number(tbl, 'portrait', 'polyline_points', base.polyline_points,
                                     positive=True, integer=True)),
    )


def parse_scenario(text: str, path: Optional[str] = None) -> Scenario:
    """Parse and validate a scenario file's text"""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = re.search(r'line (\d+)', str(exc))
        raise ConfigError(f"invalid TOML: {exc}", path, int(match.group(1)) if match else None) from exc
    r = _Reader(data, text, path)

    head = r.table('scenario', required=True)
    name = head.get('name') or (Path(path).stem if path else 'scenario')
    manifold = head.get('manifold')
    if manifold not in MANIFOLD_FAMILIES:
        r.fail(f"unknown manifold '{manifold}' (expected one of {', '.join(MANIFOLD_FAMILIES)})",
               'scenario', 'manifold')
    seed = head.get('seed', 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        r.fail("'seed' must be an unsigned 64-bit integer", 'scenario', 'seed')
    t_span = r.vector(head, 'scenario', 't_span', 2)
    if not t_span[1] > t_span[0]:
        r.fail(f"t_span must be increasing, got {t_span}", 'scenario', 't_span')

    controller = _parse_controller(r, manifold)
    disturbance = _parse_disturbance(r, manifold)
    bound = controller.parameters.get('d_bar', 0.0)
    sup = disturbance.sup_norm(t_span)
    if sup > bound + 1e-12:
        r.fail(f"disturbance reaches {sup:.6g} over t_span, above the declared bound d_bar = {bound:g}",
               'controller', 'd_bar')

    integrator = _parse_integrator(r)
    if controller.regularization is not None:
        integrator = replace(integrator, regularized=True)
    outputs_tbl = r.table('outputs')
    outputs = {
        'trajectory_csv': bool(outputs_tbl.get('trajectory_csv', True)),
        'summary_json': bool(outputs_tbl.get('summary_json', True)),
        'embedding_csv': bool(outputs_tbl.get('embedding_csv', manifold in QUOTIENTS)),
    }
    if outputs['embedding_csv'] and manifold not in QUOTIENTS:
        r.fail(f"embedding output needs a quotient manifold, not '{manifold}'", 'outputs', 'embedding_csv')

    scenario = Scenario(
        name=str(name),
        manifold=manifold,
        controller=controller,
        disturbance=disturbance,
        initial=_parse_initial(r, manifold),
        t_span=(t_span[0], t_span[1]),
        integrator=integrator,
        seed=seed,
        tolerances=_parse_tolerances(r),
        outputs=outputs,
        descent=_parse_descent(r),
        portrait=_parse_portrait(r),
        source=path,
    )
    _validate_gains(scenario, r)
    scenario.initial_points()
    return scenario


def _validate_gains(scenario: Scenario, r: _Reader):
    try:
        build_closed_loop(scenario.controller, scenario.disturbance, scenario.tolerances)
    except SimulationError as exc:
        key = {'cylinder': 'k1', 'mobius': 'gain', 'line': 'bias'}.get(scenario.manifold, 'eta')
        r.fail(str(exc), 'controller', key)


def load_scenario(path) -> Scenario:
    path = str(path)
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc.strerror}", path) from exc
    scenario = parse_scenario(text, path)
    logger.debug(f"Loaded scenario '{scenario.name}' from {path}")
    return scenario
