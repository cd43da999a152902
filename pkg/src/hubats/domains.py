"""The two experimental domains: conference recommendation and vaccine testing.

Recommendation tasks are random on-grid hubs in which the first conference
is strictly the most relevant. The vaccine-testing hub is a single fixed
instance whose test rationalities come from diagnostic sensitivities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .beta import beta_from_sensitivity
from .errors import GeneratorExhaustedError, InvalidParameterError
from .hub import (
    ArmDistribution,
    HubInstance,
    QueryProfile,
    Teacher,
    UtilityFunction,
    hub_from_dict,
    hub_to_dict,
    validate_hub,
)
from .pomdp import HubPomdpModel, SimplexGrid, UtilityGrid

REC_ITEMS = ("Application", "Benchmark", "Theory")
REC_ARMS = ("ICLR", "ICML", "AAAI")
REC_BETAS = (0.0, 0.01, 50.0)
REC_GAMMA = 0.99


@dataclass(frozen=True)
class DomainGrids:
    """Discretisation used both to generate tasks and to build planner models."""

    levels: tuple[float, ...]
    resolution: int

    @property
    def u_grid(self) -> UtilityGrid:
        return UtilityGrid(self.levels)

    @property
    def d_grid(self) -> SimplexGrid:
        return SimplexGrid(self.resolution)

    def num_states(self, n_items: int, n_arms: int) -> int:
        return len(self.u_grid.functions(n_items)) * len(self.d_grid.points(n_items)) ** n_arms


REC_GRIDS = DomainGrids((0.0, 2.0, 4.0, 6.0, 8.0, 10.0), 4)
COVID_GRIDS = DomainGrids(tuple(float(v) for v in range(10)), 4)


def build_model(hub: HubInstance, grids: DomainGrids, mode: str = "specific",
                general_teacher: Optional[int] = None) -> HubPomdpModel:
    return HubPomdpModel.for_hub(hub, grids.u_grid, grids.d_grid, mode, general_teacher)


# --- recommendation ---------------------------------------------------------

@dataclass
class Task:
    hub: HubInstance
    seed: int
    metadata: dict = field(default_factory=dict)


@dataclass
class TaskSuite:
    tasks: list
    settings: dict

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def hubs(self) -> list:
        return [t.hub for t in self.tasks]


def rec_constraint_violations(hub: HubInstance) -> list[str]:
    """Task constraints: arm 0 strictly best, arm 1 no worse than arm 2,
    arms pairwise distinct, no deterministic arm."""
    out = []
    v = hub.arm_values
    if not v[0] > v[1]:
        out.append(f"arms: expected utility of arm 0 ({v[0]:.6g}) must exceed arm 1 ({v[1]:.6g})")
    if len(v) > 2 and not v[1] >= v[2]:
        out.append(f"arms: expected utility of arm 1 ({v[1]:.6g}) must be >= arm 2 ({v[2]:.6g})")
    rows = hub.arm_matrix
    for a in range(len(rows)):
        if np.any(np.isclose(rows[a], 1.0)):
            out.append(f"arms[{a}]: distribution is deterministic")
        for b in range(a + 1, len(rows)):
            if np.allclose(rows[a], rows[b]):
                out.append(f"arms[{a}], arms[{b}]: distributions are identical")
    return out


def rec_hub(utility, arm_probs, costs=(0.0, 0.0, 0.0), meta=None) -> HubInstance:
    return HubInstance(
        REC_ITEMS,
        UtilityFunction(tuple(utility), REC_GRIDS.levels[0], REC_GRIDS.levels[-1]),
        tuple(ArmDistribution(tuple(p), name) for p, name in zip(arm_probs, REC_ARMS)),
        tuple(Teacher(b, c, f"Professor {m + 1}") for m, (b, c) in enumerate(zip(REC_BETAS, costs))),
        QueryProfile.uniform(len(REC_ITEMS)),
        REC_GAMMA,
        dict(meta or {}),
    )


def generate_recommendation_suite(n_tasks: int, rng: np.random.Generator,
                                  grids: DomainGrids = REC_GRIDS,
                                  max_attempts: int = 100_000) -> TaskSuite:
    """Rejection-sample ``n_tasks`` distinct on-grid tasks satisfying the constraints."""
    if n_tasks < 1:
        raise InvalidParameterError("n_tasks must be >= 1")
    U = grids.u_grid.functions(len(REC_ITEMS))
    D = grids.d_grid.points(len(REC_ITEMS))
    D = D[~np.any(D == 1.0, axis=1)]
    seen = set()
    tasks = []
    attempts = 0
    while len(tasks) < n_tasks:
        if attempts >= max_attempts:
            raise GeneratorExhaustedError(
                f"found {len(tasks)} of {n_tasks} valid tasks in {max_attempts} attempts"
            )
        attempts += 1
        u = int(rng.integers(len(U)))
        ds = tuple(int(x) for x in rng.integers(len(D), size=len(REC_ARMS)))
        key = (u, ds)
        if key in seen:
            continue
        hub = rec_hub(U[u], [D[d] for d in ds])
        if rec_constraint_violations(hub):
            continue
        seen.add(key)
        seed = int(rng.integers(2**31 - 1))
        idx = len(tasks)
        tasks.append(Task(
            rec_hub(U[u], [D[d] for d in ds], meta={"domain": "recommendation", "task": idx}),
            seed, {"task": idx, "attempt": attempts},
        ))
    settings = {
        "domain": "recommendation",
        "n_tasks": n_tasks,
        "levels": list(grids.levels),
        "resolution": grids.resolution,
        "attempts": attempts,
    }
    return TaskSuite(tasks, settings)


def validate_suite(suite: TaskSuite) -> list[str]:
    out = []
    keys = set()
    for k, task in enumerate(suite.tasks):
        for msg in validate_hub(task.hub) + rec_constraint_violations(task.hub):
            out.append(f"task {k}: {msg}")
        key = (task.hub.utility.values, tuple(a.probs for a in task.hub.arms))
        if key in keys:
            out.append(f"task {k}: duplicate of an earlier task")
        keys.add(key)
    return out


def save_suite(suite: TaskSuite, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, task in enumerate(suite.tasks):
        name = f"task_{k:03d}.json"
        (out / name).write_text(json.dumps(hub_to_dict(task.hub), indent=2) + "\n")
        entries.append({"file": name, "seed": task.seed, "metadata": task.metadata})
    manifest = {
        "settings": suite.settings,
        "tasks": entries,
        "violations": validate_suite(suite),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_suite(path) -> TaskSuite:
    """Load a suite from its directory (or manifest file)."""
    path = Path(path)
    root = path if path.is_dir() else path.parent
    manifest = json.loads((root / "manifest.json").read_text())
    tasks = [
        Task(hub_from_dict(json.loads((root / e["file"]).read_text())), int(e["seed"]), e["metadata"])
        for e in manifest["tasks"]
    ]
    return TaskSuite(tasks, manifest["settings"])


# --- vaccine testing --------------------------------------------------------

@dataclass(frozen=True)
class CovidConfig:
    """Vaccine-testing parameters.

    The sensitivities, symptom utilities and symptom distributions below are
    placeholder estimates; swap in measured values as they become available.
    """

    sensitivities: dict = field(default_factory=lambda: {"Survey": 0.70, "Antigen": 0.85, "RT-PCR": 0.95})
    dollar_costs: dict = field(default_factory=lambda: {"Survey": 1.20, "Antigen": 42.0, "RT-PCR": 62.0})
    cost_scale: float = 0.05
    items: tuple = ("None", "Cough", "Fever")
    symptom_utilities: tuple = (9.0, 5.0, 1.0)
    u_min: float = 0.0
    u_max: float = 9.0
    arms: tuple = (
        ("Vaccine A", (0.75, 0.25, 0.0)),
        ("Vaccine B", (0.5, 0.25, 0.25)),
        ("No Vaccine", (0.25, 0.25, 0.5)),
    )
    tests: tuple = ("Survey", "Antigen", "RT-PCR")
    gamma: float = 0.99

    def validate(self):
        if self.cost_scale <= 0:
            raise InvalidParameterError("cost_scale must be positive")
        for t in self.tests:
            if t not in self.sensitivities:
                raise InvalidParameterError(f"no sensitivity for test {t!r}")
            if t not in self.dollar_costs:
                raise InvalidParameterError(f"no dollar cost for test {t!r}")
            if self.dollar_costs[t] <= 0:
                raise InvalidParameterError(f"dollar cost of {t!r} must be positive")


def build_covid_instance(config: CovidConfig = CovidConfig()) -> HubInstance:
    config.validate()
    teachers = tuple(
        Teacher(beta_from_sensitivity(config.sensitivities[t], config.u_min, config.u_max),
                -config.dollar_costs[t] * config.cost_scale, t)
        for t in config.tests
    )
    return HubInstance(
        tuple(config.items),
        UtilityFunction(config.symptom_utilities, config.u_min, config.u_max),
        tuple(ArmDistribution(tuple(p), name) for name, p in config.arms),
        teachers,
        QueryProfile.uniform(len(config.items)),
        config.gamma,
        {"domain": "covid"},
    )
