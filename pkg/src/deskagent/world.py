"""Deterministic 2D tabletop simulator.

Objects live on the unit table [0,1]x[0,1]. An effector with a 1-DoF
gripper and a tilt angle moves by bounded deltas; grasping is a radius
test, pouring is a tilt-over-plate event, stacking is proximity after
release. All transitions are pure: ``step`` returns a new SceneState.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

CATEGORIES = ("apple", "peach", "orange", "pomegranate", "cup", "block", "plate")
COLORS = ("red", "green", "white", "blue", "yellow", "natural")
FRUITS = ("apple", "peach", "orange", "pomegranate")

# raster channel layout: 5 category planes (pomegranate aliases onto the
# apple plane), 1 pomegranate marker bit, 6 color planes, effector, plate
CATEGORY_PLANES = ("apple", "peach", "orange", "cup", "block")
N_CHANNELS = len(CATEGORY_PLANES) + 1 + len(COLORS) + 2
POM_MARKER = len(CATEGORY_PLANES)
COLOR_BASE = len(CATEGORY_PLANES) + 1
EFFECTOR_PLANE = COLOR_BASE + len(COLORS)
PLATE_PLANE = EFFECTOR_PLANE + 1


class PlacementError(RuntimeError):
    """Raised when a collision-free layout cannot be sampled."""


class AmbiguousTaskError(ValueError):
    """Raised when a task descriptor matches zero or multiple objects."""


class ExpertFailureError(RuntimeError):
    """Raised when the scripted expert cannot reach success."""


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def dist(self, other: "Vec2") -> float:
        return float(np.hypot(self.x - other.x, self.y - other.y))

    def clamped(self) -> "Vec2":
        return Vec2(min(max(self.x, 0.0), 1.0), min(max(self.y, 0.0), 1.0))


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    category: str
    color: str
    position: Vec2
    radius: float = 0.02
    held: bool = False
    tilt: float = 0.0
    water: bool = False


@dataclass(frozen=True)
class EffectorState:
    position: Vec2
    gripper: float = 1.0
    tilt: float = 0.0


@dataclass(frozen=True)
class SceneState:
    objects: tuple[ObjectSpec, ...]
    effector: EffectorState
    brightness: float = 1.0
    step_count: int = 0
    poured: tuple[str, ...] = ()
    resting: tuple[str, ...] = ()

    def find(self, oid: str) -> ObjectSpec:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def held_object(self) -> ObjectSpec | None:
        for o in self.objects:
            if o.held:
                return o
        return None


@dataclass(frozen=True)
class ActionStep:
    dx: float = 0.0
    dy: float = 0.0
    d_gripper: float = 0.0
    d_tilt: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.d_gripper, self.d_tilt])

    @staticmethod
    def from_array(a) -> "ActionStep":
        return ActionStep(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


ACTION_DIM = 4
CHUNK_LEN = 50


@dataclass(frozen=True)
class ActionChunk:
    steps: tuple[ActionStep, ...]

    def __post_init__(self):
        if len(self.steps) != CHUNK_LEN:
            raise ValueError(f"chunk must have {CHUNK_LEN} steps, got {len(self.steps)}")

    def as_array(self) -> np.ndarray:
        return np.stack([s.as_array() for s in self.steps])

    @staticmethod
    def from_array(a) -> "ActionChunk":
        return ActionChunk(tuple(ActionStep.from_array(row) for row in a))


@dataclass(frozen=True)
class TaskSpec:
    family: str  # place | pour | stack
    target_descriptor: frozenset[str]
    destination_descriptor: frozenset[str]


@dataclass(frozen=True)
class Observation:
    raster: np.ndarray  # (G, G, N_CHANNELS)
    proprio: np.ndarray  # (x, y, gripper, tilt)


@dataclass(frozen=True)
class WorldConfig:
    grid: int = 16
    delta_pos_max: float = 0.05
    delta_grip_max: float = 0.25
    delta_tilt_max: float = 0.3
    grasp_radius: float = 0.03
    place_radius: float = 0.08
    stack_radius: float = 0.05
    pour_radius: float = 0.08
    tilt_threshold: float = 1.0
    grip_threshold: float = 0.5
    max_tilt: float = 1.6
    home: tuple[float, float] = (0.5, 0.9)


@dataclass
class ObjectTemplate:
    category: str
    color: str
    position: tuple[float, float] | None = None
    water: bool = False
    radius: float = 0.02


@dataclass
class SceneConfig:
    objects: list[ObjectTemplate] = field(default_factory=list)
    brightness: float = 1.0
    snap_to_grid: bool = True
    # sampled positions land on centers of a coarse snap_divisions x
    # snap_divisions lattice, matching the granularity at which the
    # downstream observation features localize objects
    snap_divisions: int = 4
    min_separation: float = 0.09
    max_attempts: int = 200


DEFAULT_CONFIG = WorldConfig()

# canonical plate location used by the scene generators (cell center)
PLATE_POS = (0.53125, 0.21875)


# -- construction ----------------------------------------------------------


def _snap(p: tuple[float, float], grid: int) -> tuple[float, float]:
    cx = (np.floor(p[0] * grid) + 0.5) / grid
    cy = (np.floor(p[1] * grid) + 0.5) / grid
    return float(cx), float(cy)


def reset(config: SceneConfig, seed: int, world: WorldConfig = DEFAULT_CONFIG) -> SceneState:
    """Deterministically instantiate a scene from a config and a seed.

    Objects without explicit positions are sampled collision-free on the
    table interior; with ``snap_to_grid`` positions land on coarse lattice
    centers so the observation fully determines object locations.
    """
    if not config.objects:
        raise ValueError("scene config needs at least one object")
    rng = np.random.default_rng(seed)
    placed: list[tuple[float, float]] = [
        t.position for t in config.objects if t.position is not None
    ]
    objects: list[ObjectSpec] = []
    for i, tmpl in enumerate(config.objects):
        if tmpl.position is not None:
            pos = tmpl.position
        else:
            pos = None
            for _ in range(config.max_attempts):
                cand = (rng.uniform(0.08, 0.92), rng.uniform(0.08, 0.78))
                if config.snap_to_grid:
                    cand = _snap(cand, config.snap_divisions)
                    if not (0.08 <= cand[0] <= 0.92
                            and 0.08 <= cand[1] <= 0.78):
                        continue
                if all(np.hypot(cand[0] - q[0], cand[1] - q[1]) >= config.min_separation
                       for q in placed):
                    pos = cand
                    break
            if pos is None:
                raise PlacementError("could not place object collision-free")
            placed.append(pos)
        objects.append(ObjectSpec(
            id=f"obj{i}", category=tmpl.category, color=tmpl.color,
            position=Vec2(*pos), radius=tmpl.radius, water=tmpl.water,
        ))
    effector = EffectorState(position=Vec2(*world.home))
    return SceneState(objects=tuple(objects), effector=effector,
                      brightness=config.brightness)


# -- transition ------------------------------------------------------------


def step(state: SceneState, a: ActionStep, world: WorldConfig = DEFAULT_CONFIG) -> SceneState:
    """One transition: clamped kinematics, grasp/release/pour/rest events."""
    w = world
    dx = float(np.clip(a.dx, -w.delta_pos_max, w.delta_pos_max))
    dy = float(np.clip(a.dy, -w.delta_pos_max, w.delta_pos_max))
    dg = float(np.clip(a.d_gripper, -w.delta_grip_max, w.delta_grip_max))
    dt = float(np.clip(a.d_tilt, -w.delta_tilt_max, w.delta_tilt_max))

    eff = state.effector
    pos = Vec2(eff.position.x + dx, eff.position.y + dy).clamped()
    grip = float(np.clip(eff.gripper + dg, 0.0, 1.0))
    tilt = float(np.clip(eff.tilt + dt, 0.0, w.max_tilt))

    objects = list(state.objects)
    poured = state.poured
    resting = state.resting
    held_idx = next((i for i, o in enumerate(objects) if o.held), None)

    if held_idx is not None and grip >= w.grip_threshold:
        # release in place; a block released next to another block rests on it
        obj = replace(objects[held_idx], held=False, tilt=0.0)
        objects[held_idx] = obj
        if obj.category == "block":
            for other in objects:
                if (other.id != obj.id and other.category == "block"
                        and obj.position.dist(other.position) <= w.stack_radius
                        and obj.id not in resting):
                    resting = resting + (obj.id,)
                    break
        held_idx = None

    if held_idx is not None:
        obj = replace(objects[held_idx], position=pos, tilt=tilt)
        objects[held_idx] = obj
        if (obj.category == "cup" and obj.water and tilt > w.tilt_threshold):
            plate = next((o for o in objects if o.category == "plate"), None)
            if plate is not None and pos.dist(plate.position) <= w.pour_radius:
                poured = poured + (obj.id,)
                objects[held_idx] = replace(obj, water=False)

    if held_idx is None and grip < w.grip_threshold:
        best, best_d = None, w.grasp_radius
        for i, o in enumerate(objects):
            if o.category == "plate":
                continue
            d = o.position.dist(pos)
            if d <= best_d:
                best, best_d = i, d
        if best is not None:
            objects[best] = replace(objects[best], held=True, position=pos)

    return replace(
        state,
        objects=tuple(objects),
        effector=EffectorState(position=pos, gripper=grip, tilt=tilt),
        step_count=state.step_count + 1,
        poured=poured,
        resting=resting,
    )


def run_chunk(state: SceneState, chunk: ActionChunk,
              world: WorldConfig = DEFAULT_CONFIG) -> SceneState:
    for a in chunk.steps:
        state = step(state, a, world)
    return state


# -- observation -----------------------------------------------------------


def render_observation(state: SceneState, world: WorldConfig = DEFAULT_CONFIG) -> Observation:
    g = world.grid
    raster = np.zeros((g, g, N_CHANNELS))

    def cell(p: Vec2) -> tuple[int, int]:
        return (min(int(p.x * g), g - 1), min(int(p.y * g), g - 1))

    for o in state.objects:
        cx, cy = cell(o.position)
        if o.category == "plate":
            raster[cx, cy, PLATE_PLANE] = 1.0
        elif o.category == "pomegranate":
            raster[cx, cy, CATEGORY_PLANES.index("apple")] = 1.0
            raster[cx, cy, POM_MARKER] = 1.0
        else:
            raster[cx, cy, CATEGORY_PLANES.index(o.category)] = 1.0
        raster[cx, cy, COLOR_BASE + COLORS.index(o.color)] = 1.0
    ex, ey = cell(state.effector.position)
    raster[ex, ey, EFFECTOR_PLANE] = 1.0
    raster *= state.brightness
    proprio = np.array([
        state.effector.position.x, state.effector.position.y,
        state.effector.gripper, state.effector.tilt,
    ])
    return Observation(raster=raster, proprio=proprio)


# -- tasks and success -----------------------------------------------------


def matches(obj: ObjectSpec, descriptor: frozenset[str]) -> bool:
    attrs = {obj.category, obj.color}
    if obj.category in FRUITS:
        attrs.add("fruit")
    return descriptor <= attrs


def find_target(state: SceneState, descriptor: frozenset[str]) -> ObjectSpec:
    hits = [o for o in state.objects if matches(o, descriptor)]
    if len(hits) != 1:
        raise AmbiguousTaskError(
            f"descriptor {sorted(descriptor)} matches {len(hits)} objects"
        )
    return hits[0]


def success(state: SceneState, task: TaskSpec,
            world: WorldConfig = DEFAULT_CONFIG) -> bool:
    target = find_target(state, task.target_descriptor)
    if task.family == "place":
        plate = find_target(state, task.destination_descriptor)
        return (not target.held
                and target.position.dist(plate.position) <= world.place_radius)
    if task.family == "pour":
        return target.id in state.poured
    if task.family == "stack":
        base = find_target(state, task.destination_descriptor)
        return (target.id in state.resting
                and target.position.dist(base.position) <= world.stack_radius)
    raise ValueError(f"unknown family {task.family}")


# -- scripted expert -------------------------------------------------------


def _toward(eff: Vec2, goal: Vec2, dmax: float) -> tuple[float, float]:
    dx, dy = goal.x - eff.x, goal.y - eff.y
    d = np.hypot(dx, dy)
    if d <= dmax:
        return dx, dy
    return dx / d * dmax, dy / d * dmax


def expert_step(state: SceneState, task: TaskSpec,
                world: WorldConfig = DEFAULT_CONFIG) -> ActionStep:
    """One closed-loop controller step toward the task goal."""
    w = world
    target = find_target(state, task.target_descriptor)
    dest = find_target(state, task.destination_descriptor)
    eff = state.effector

    if task.family == "pour" and target.id in state.poured:
        return ActionStep()

    if not target.held:
        d = eff.position.dist(target.position)
        if d > 0.004:
            dx, dy = _toward(eff.position, target.position, w.delta_pos_max)
            dg = min(w.delta_grip_max, 1.0 - eff.gripper)
            return ActionStep(dx, dy, dg, 0.0)
        return ActionStep(0.0, 0.0, -w.delta_grip_max, 0.0)

    if task.family == "pour":
        d = eff.position.dist(dest.position)
        if d > w.pour_radius * 0.5:
            dx, dy = _toward(eff.position, dest.position, w.delta_pos_max)
            return ActionStep(dx, dy, 0.0, 0.0)
        return ActionStep(0.0, 0.0, 0.0, w.delta_tilt_max)

    # place / stack: carry over the destination, then open
    d = eff.position.dist(dest.position)
    if d > 0.004:
        dx, dy = _toward(eff.position, dest.position, w.delta_pos_max)
        return ActionStep(dx, dy, 0.0, 0.0)
    return ActionStep(0.0, 0.0, w.delta_grip_max, 0.0)


def scripted_expert(state: SceneState, task: TaskSpec,
                    world: WorldConfig = DEFAULT_CONFIG,
                    max_steps: int = 400) -> list[ActionChunk]:
    """Roll the waypoint controller to success and pack steps into chunks."""
    steps: list[ActionStep] = []
    cur = state
    for _ in range(max_steps):
        if success(cur, task, world):
            break
        a = expert_step(cur, task, world)
        steps.append(a)
        cur = step(cur, a, world)
    else:
        raise ExpertFailureError(f"expert failed on {task}")
    while len(steps) % CHUNK_LEN != 0 or not steps:
        steps.append(ActionStep())
    return [ActionChunk(tuple(steps[i:i + CHUNK_LEN]))
            for i in range(0, len(steps), CHUNK_LEN)]


# -- serialization ---------------------------------------------------------


def _f(x: float) -> float:
    return float(x)


def scene_to_lines(state: SceneState) -> list[str]:
    """Line-delimited scene record: one header line, one line per object.

    Field order per object line: id, category, color, x, y, radius, held,
    tilt, water. Header: brightness, step_count, effector x/y/gripper/tilt,
    poured ids, resting ids.
    """
    head = {
        "kind": "scene",
        "brightness": _f(state.brightness),
        "step_count": state.step_count,
        "effector": [_f(state.effector.position.x),
                     _f(state.effector.position.y),
                     _f(state.effector.gripper),
                     _f(state.effector.tilt)],
        "poured": list(state.poured),
        "resting": list(state.resting),
    }
    lines = [json.dumps(head, sort_keys=True, separators=(",", ":"))]
    for o in state.objects:
        rec = {
            "kind": "object", "id": o.id, "category": o.category,
            "color": o.color, "x": _f(o.position.x),
            "y": _f(o.position.y), "radius": _f(o.radius),
            "held": o.held, "tilt": _f(o.tilt), "water": o.water,
        }
        lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
    return lines


def scene_from_lines(lines: list[str]) -> SceneState:
    head = json.loads(lines[0])
    if head.get("kind") != "scene":
        raise ValueError("first line must be a scene header")
    objects = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        objects.append(ObjectSpec(
            id=rec["id"], category=rec["category"], color=rec["color"],
            position=Vec2(rec["x"], rec["y"]), radius=rec["radius"],
            held=rec["held"], tilt=rec["tilt"], water=rec["water"],
        ))
    ex, ey, g, t = head["effector"]
    return SceneState(
        objects=tuple(objects),
        effector=EffectorState(Vec2(ex, ey), g, t),
        brightness=head["brightness"], step_count=head["step_count"],
        poured=tuple(head["poured"]), resting=tuple(head["resting"]),
    )


def config_to_json(config: SceneConfig) -> str:
    return json.dumps(dataclasses.asdict(config), sort_keys=True,
                      separators=(",", ":"))


def config_from_json(text: str) -> SceneConfig:
    d = json.loads(text)
    objs = [ObjectTemplate(
        category=o["category"], color=o["color"],
        position=tuple(o["position"]) if o.get("position") else None,
        water=o.get("water", False), radius=o.get("radius", 0.02),
    ) for o in d["objects"]]
    return SceneConfig(objects=objs, brightness=d["brightness"],
                       snap_to_grid=d["snap_to_grid"],
                       min_separation=d["min_separation"],
                       max_attempts=d["max_attempts"])


def save_replay(path: str | Path, config: SceneConfig, seed: int,
                steps: list[ActionStep]) -> None:
    """Replay record: (seed, config, steps) is enough for bit-exact re-simulation."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"kind": "replay", "seed": seed,
                             "config": json.loads(config_to_json(config))},
                            sort_keys=True, separators=(",", ":")) + "\n")
        for a in steps:
            # full precision: replay must be bit-exact
            fh.write(json.dumps([a.dx, a.dy, a.d_gripper, a.d_tilt]) + "\n")


def load_replay(path: str | Path) -> tuple[SceneConfig, int, list[ActionStep]]:
    lines = Path(path).read_text().splitlines()
    head = json.loads(lines[0])
    config = config_from_json(json.dumps(head["config"]))
    steps = [ActionStep(*json.loads(ln)) for ln in lines[1:]]
    return config, head["seed"], steps


def replay(path: str | Path, world: WorldConfig = DEFAULT_CONFIG) -> SceneState:
    config, seed, steps = load_replay(path)
    state = reset(config, seed, world)
    for a in steps:
        state = step(state, a, world)
    return state
