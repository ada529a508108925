"""Declarative dataset/model/training recipes.

A recipe is a JSON file naming a topology family with its parameter grid,
instance counts, sampling ranges, and the solver/model/training settings used
downstream. Every derived artifact embeds the recipe hash so mixed datasets
are detectable.

Grid semantics: Erdos-Renyi recipes take the full product of `nodes` and `q`;
Waxman recipes pair `nodes[i]` with `beta[i]` (index-aligned, like the
descending beta sequences used for growing network sizes); file recipes have
a single configuration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

FAMILIES = ("erdos_renyi", "waxman", "file")


class RecipeError(ValueError):
    """Invalid recipe contents."""


@dataclass(frozen=True)
class Recipe:
    name: str
    family: str
    grid: dict
    instances_per_config: int
    pairs_per_instance: int
    demand_range: tuple
    capacity_range: tuple
    k_paths: int
    seed: int
    ipm: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    def configs(self) -> list:
        """Expanded topology configurations, in deterministic order."""
        if self.family == "erdos_renyi":
            return [
                {"nodes": n, "q": q}
                for n in self.grid["nodes"]
                for q in self.grid["q"]
            ]
        if self.family == "waxman":
            return [
                {"nodes": n, "alpha": self.grid.get("alpha", 0.1), "beta": b}
                for n, b in zip(self.grid["nodes"], self.grid["beta"])
            ]
        return [{"path": self.grid["path"]}]

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "grid": self.grid,
            "instances_per_config": self.instances_per_config,
            "pairs_per_instance": self.pairs_per_instance,
            "demand_range": list(self.demand_range),
            "capacity_range": list(self.capacity_range),
            "k_paths": self.k_paths,
            "seed": self.seed,
            "ipm": self.ipm,
            "model": self.model,
            "train": self.train,
        }


def recipe_hash(recipe: Recipe) -> str:
    canonical = json.dumps(recipe.as_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _require(cond, message):
    if not cond:
        raise RecipeError(message)


def validate(data: dict) -> Recipe:
    """Validate raw recipe JSON; raises RecipeError before any work starts."""
    _require(isinstance(data.get("name"), str) and data["name"], "recipe needs a name")
    family = data.get("family")
    _require(family in FAMILIES, f"family must be one of {FAMILIES}, got {family!r}")
    grid = data.get("grid", {})
    if family == "erdos_renyi":
        _require(
            grid.get("nodes") and grid.get("q"), "erdos_renyi grid needs nodes and q"
        )
        _require(all(n >= 2 for n in grid["nodes"]), "node counts must be >= 2")
        _require(all(0 < q <= 1 for q in grid["q"]), "q values must be in (0, 1]")
    elif family == "waxman":
        _require(
            grid.get("nodes") and grid.get("beta"), "waxman grid needs nodes and beta"
        )
        _require(
            len(grid["nodes"]) == len(grid["beta"]),
            "waxman nodes and beta lists pair by index and must have equal length",
        )
        alpha = grid.get("alpha", 0.1)
        _require(0 < alpha <= 1, "waxman alpha must be in (0, 1]")
        _require(all(0 < b <= 1 for b in grid["beta"]), "beta values must be in (0, 1]")
    else:
        _require(grid.get("path"), "file recipes need grid.path")

    _require(int(data.get("instances_per_config", 0)) >= 1, "instances_per_config >= 1")
    _require(int(data.get("pairs_per_instance", 0)) >= 1, "pairs_per_instance >= 1")
    for key in ("demand_range", "capacity_range"):
        rng = data.get(key)
        _require(
            isinstance(rng, (list, tuple)) and len(rng) == 2 and 0 < rng[0] <= rng[1],
            f"{key} must be a positive (low, high) pair",
        )
    _require(int(data.get("k_paths", 0)) >= 1, "k_paths >= 1")
    _require("seed" in data, "recipe needs a seed")

    model = data.get("model", {})
    for field_name in ("hidden_dim", "num_inner", "k_max"):
        if field_name in model:
            _require(int(model[field_name]) >= 1, f"model.{field_name} must be >= 1")
    return Recipe(
        name=data["name"],
        family=family,
        grid=grid,
        instances_per_config=int(data["instances_per_config"]),
        pairs_per_instance=int(data["pairs_per_instance"]),
        demand_range=tuple(data["demand_range"]),
        capacity_range=tuple(data["capacity_range"]),
        k_paths=int(data["k_paths"]),
        seed=int(data["seed"]),
        ipm=data.get("ipm", {}),
        model=data.get("model", {}),
        train=data.get("train", {}),
    )


def load_recipe(path) -> Recipe:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise RecipeError(f"{path}: not valid JSON ({exc})") from exc
    return validate(data)


# defaults used when a recipe leaves sections empty
DEFAULT_MODEL = {"hidden_dim": 360, "num_inner": 2, "k_max": 8, "attr_mode": "row_col_stats"}
DEFAULT_TRAIN = {
    "epochs": 30,
    "batch_size": 16,
    "learning_rate": 1e-3,
    "seed": 0,
    "grad_clip": 1.0,
    "checkpoint_every": 10,
    "loss": {"rho1": 1.0, "rho2": 1.0, "rho3": 1.0, "xi": 0.9},
}


def model_settings(recipe_model: dict) -> dict:
    out = dict(DEFAULT_MODEL)
    out.update(recipe_model)
    return out


def train_settings(recipe_train: dict) -> dict:
    out = {k: v for k, v in DEFAULT_TRAIN.items() if k != "loss"}
    loss = dict(DEFAULT_TRAIN["loss"])
    loss.update(recipe_train.get("loss", {}))
    out.update({k: v for k, v in recipe_train.items() if k != "loss"})
    out["loss"] = loss
    return out
