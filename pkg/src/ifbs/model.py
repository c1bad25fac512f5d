"""Perception MDPs: containers, validation and the two benchmark environments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable

import numpy as np

Cell = tuple[int, int]

STOCHASTIC_TOL = 1e-12

# (drow, dcol) for left, right, up, down; rows grow downwards
MOVES: tuple[Cell, ...] = ((0, -1), (0, 1), (-1, 0), (1, 0))
ACTION_NAMES = ("left", "right", "up", "down")


class ModelError(ValueError):
    """Raised when a model or gridworld description cannot be built."""


@dataclass(frozen=True, eq=False)
class PerceptionMDP:
    """Finite MDP with an information-cost weight.

    ``transition[a, s, s2]`` is the probability of moving from ``s`` to ``s2``
    under action ``a``; ``cost[s, a]`` is the stage cost.  ``beta`` prices one
    nat of perceived information in cost units.
    """

    transition: np.ndarray
    cost: np.ndarray
    gamma: float
    beta: float
    name: str = "model"

    def __post_init__(self):
        t = np.array(self.transition, dtype=float)
        c = np.array(self.cost, dtype=float)
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "cost", c)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def num_states(self) -> int:
        return self.transition.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[0]

    def with_params(self, *, gamma: float | None = None, beta: float | None = None) -> PerceptionMDP:
        return replace(
            self,
            gamma=self.gamma if gamma is None else gamma,
            beta=self.beta if beta is None else beta,
        )

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "transition": self.transition.tolist(),
            "cost": self.cost.tolist(),
            "gamma": self.gamma,
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, data: dict, name: str = "model") -> PerceptionMDP:
        """Build a model from its JSON form.

        Structural problems (missing keys, ragged arrays, declared sizes that
        disagree with the arrays) raise :class:`ModelError`; numerical
        invariants are left to :func:`validate_model`.
        """
        try:
            t = np.array(data["transition"], dtype=float)
            c = np.array(data["cost"], dtype=float)
            gamma = float(data["gamma"])
            beta = float(data["beta"])
        except KeyError as exc:
            raise ModelError(f"missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ModelError(f"malformed array: {exc}") from None
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise ModelError(f"transition must have shape (A, S, S), got {t.shape}")
        if c.shape != (t.shape[1], t.shape[0]):
            raise ModelError(f"cost must have shape (S, A) = {(t.shape[1], t.shape[0])}, got {c.shape}")
        for key, actual in (("num_states", t.shape[1]), ("num_actions", t.shape[0])):
            if key in data and int(data[key]) != actual:
                raise ModelError(f"{key}={data[key]} disagrees with array shape ({actual})")
        return cls(t, c, gamma, beta, name=name)


def validate_model(model: PerceptionMDP) -> list[str]:
    """Return the list of violated invariants; empty iff the model is valid."""
    problems = []
    t, c = model.transition, model.cost
    if t.ndim != 3 or t.shape[1] != t.shape[2]:
        return [f"transition has shape {t.shape}, expected (A, S, S)"]
    n_a, n_s = t.shape[0], t.shape[1]
    if n_a < 1 or n_s < 1:
        problems.append("model needs at least one state and one action")
    if c.shape != (n_s, n_a):
        problems.append(f"cost has shape {c.shape}, expected {(n_s, n_a)}")
    if not np.all(np.isfinite(t)):
        problems.append("transition contains non-finite entries")
    for a, s in zip(*np.nonzero((t < 0).any(axis=2) | (t > 1).any(axis=2))):
        problems.append(f"transition row (a={a}, s={s}) has entries outside [0, 1]")
    sums = t.sum(axis=2)
    for a, s in zip(*np.nonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)):
        problems.append(f"transition row (a={a}, s={s}) sums to {sums[a, s]:.15g}, not 1")
    if c.shape == (n_s, n_a):
        if not np.all(np.isfinite(c)):
            problems.append("cost contains non-finite entries")
        elif (c < 0).any():
            problems.append(f"cost has {(c < 0).sum()} negative entries")
    if not 0.0 <= model.gamma < 1.0:
        problems.append(f"discount gamma={model.gamma} is not in [0, 1)")
    if not model.beta >= 0.0:
        problems.append(f"information weight beta={model.beta} is negative")
    return problems


def build_three_state(gamma: float = 0.95, beta: float = 5.0) -> PerceptionMDP:
    """Three-state, three-action benchmark where the agent must avoid state 3."""
    t = np.array([
        [[0.1, 0.9, 0.0],
         [0.0, 0.1, 0.9],
         [0.5, 0.5, 0.0]],
        [[0.1, 0.0, 0.9],
         [0.9, 0.1, 0.0],
         [0.5, 0.5, 0.0]],
        [[0.998, 0.001, 0.001],
         [0.001, 0.998, 0.001],
         [0.001, 0.001, 0.998]],
    ])
    c = np.zeros((3, 3))
    c[2, :] = 1.0
    return PerceptionMDP(t, c, gamma, beta, name="three-state")


@dataclass(frozen=True)
class GridworldConfig:
    """Rover gridworld.  Cells are ``(row, col)``; state = row * width + col."""

    width: int
    height: int
    start_cell: Cell
    goal_cells: tuple[Cell, ...]
    rock_cells: tuple[Cell, ...] = ()
    slip_mass: float = 0.05
    step_cost: float = 1.0
    gamma: float = 0.95
    beta: float = 0.0
    note: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "start_cell", tuple(self.start_cell))
        object.__setattr__(self, "goal_cells", tuple(tuple(c) for c in self.goal_cells))
        object.__setattr__(self, "rock_cells", tuple(tuple(c) for c in self.rock_cells))

    @property
    def num_states(self) -> int:
        return self.width * self.height

    @property
    def absorbing_cells(self) -> frozenset[Cell]:
        return frozenset(self.goal_cells) | frozenset(self.rock_cells)

    def state(self, cell: Cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell(self, state: int) -> Cell:
        return divmod(state, self.width)

    def clip(self, row: int, col: int) -> Cell:
        """Nearest in-bounds cell."""
        return min(max(row, 0), self.height - 1), min(max(col, 0), self.width - 1)

    def states_of(self, cells: Iterable[Cell]) -> list[int]:
        return [self.state(c) for c in cells]

    def problems(self) -> list[str]:
        out = []
        if self.width < 1 or self.height < 1:
            out.append("width and height must be positive")
            return out
        for label, cells in (("start", [self.start_cell]), ("goal", self.goal_cells), ("rock", self.rock_cells)):
            for r, c in cells:
                if not (0 <= r < self.height and 0 <= c < self.width):
                    out.append(f"{label} cell {(r, c)} is outside the {self.height}x{self.width} grid")
        if not self.goal_cells:
            out.append("at least one goal cell is required")
        overlap = set(self.goal_cells) & set(self.rock_cells)
        if overlap:
            out.append(f"cells {sorted(overlap)} are both goal and rock")
        if self.start_cell in set(self.rock_cells):
            out.append("start cell is a rock")
        if not 0.0 <= self.slip_mass < 1.0:
            out.append(f"slip_mass={self.slip_mass} is not in [0, 1)")
        if self.step_cost < 0:
            out.append("step_cost must be nonnegative")
        return out

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "start_cell": list(self.start_cell),
            "goal_cells": [list(c) for c in self.goal_cells],
            "rock_cells": [list(c) for c in self.rock_cells],
            "slip_mass": self.slip_mass,
            "step_cost": self.step_cost,
            "gamma": self.gamma,
            "beta": self.beta,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: dict) -> GridworldConfig:
        known = {"width", "height", "start_cell", "goal_cells", "rock_cells",
                 "slip_mass", "step_cost", "gamma", "beta", "note"}
        try:
            return cls(**{k: v for k, v in data.items() if k in known})
        except TypeError as exc:
            raise ModelError(f"bad gridworld config: {exc}") from None


def build_gridworld(config: GridworldConfig) -> PerceptionMDP:
    """Slippery four-action gridworld with absorbing goal and rock cells.

    The intended move gets ``1 - slip_mass``; the other eight cells of the 3x3
    neighbourhood (including staying put) get ``slip_mass / 8`` each.  Any
    target off the grid is replaced by its nearest in-bounds cell and
    coinciding targets are merged.
    """
    problems = config.problems()
    if problems:
        raise ModelError("; ".join(problems))
    n = config.num_states
    t = np.zeros((len(MOVES), n, n))
    cost = np.full((n, len(MOVES)), float(config.step_cost))
    goals = set(config.goal_cells)
    absorbing = config.absorbing_cells
    slip = config.slip_mass / 8.0
    for s in range(n):
        r, c = config.cell(s)
        if (r, c) in goals:
            cost[s, :] = 0.0
        for a, move in enumerate(MOVES):
            if (r, c) in absorbing:
                t[a, s, s] = 1.0
                continue
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    p = 1.0 - config.slip_mass if (dr, dc) == move else slip
                    t[a, s, config.state(config.clip(r + dr, c + dc))] += p
    return PerceptionMDP(t, cost, config.gamma, config.beta, name="gridworld")


def load_builtin_config(name: str) -> GridworldConfig:
    """Packaged rover layouts: ``mars`` (12x12) and ``mars-8x8``."""
    fname = {"mars": "mars.json", "mars-8x8": "mars_8x8.json"}.get(name)
    if fname is None:
        raise ModelError(f"unknown builtin gridworld {name!r}")
    text = resources.files("ifbs.data").joinpath(fname).read_text()
    return GridworldConfig.from_dict(json.loads(text))
