"""Command-line pipeline: generate datasets, solve and record trajectories,
encode graphs, train the model, and evaluate it against the solver.

    tegnn gen    --recipe recipes/er_desk.json --out data/er_desk
    tegnn solve  --data data/er_desk [--jobs N]
    tegnn encode --data data/er_desk --out data/er_desk_graphs
    tegnn train  --data data/er_desk --out runs/er_desk [--strict-repro]
    tegnn eval   --ckpt runs/er_desk/checkpoint.pt --data data/er_desk_test --out reports/er_desk

Exit codes: 0 success, 1 validation error, 2 partial batch failure,
3 internal error. TEGNN_JOBS sets the default worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, gnn, ipm, lpgraph, metrics, netmodel, teprog
from . import train as train_mod
from .recipe import (
    Recipe,
    RecipeError,
    load_recipe,
    model_settings,
    recipe_hash,
    train_settings,
)

MANIFEST_VERSION = 1


class PartialFailure(RuntimeError):
    """Some batch items failed; the rest completed."""


def _jobs(value) -> int:
    if value:
        return int(value)
    return int(os.environ.get("TEGNN_JOBS", "1"))


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _instance_seeds(recipe_seed: int, cfg_idx: int, inst_idx: int, attempt: int = 0):
    ss = np.random.SeedSequence([recipe_seed, cfg_idx, inst_idx, attempt])
    topo_seed, inst_seed = (int(v) for v in ss.generate_state(2))
    return topo_seed, inst_seed


def _build_topology(recipe: Recipe, config: dict, topo_seed: int) -> netmodel.NetworkTopology:
    if recipe.family == "erdos_renyi":
        return netmodel.generate_erdos_renyi(
            config["nodes"], config["q"], topo_seed, recipe.capacity_range
        )
    if recipe.family == "waxman":
        return netmodel.generate_waxman(
            config["nodes"], config["alpha"], config["beta"], topo_seed, recipe.capacity_range
        )
    return netmodel.load_topology_file(config["path"])


def _gen_worker(recipe_dict, cfg_idx, inst_idx, path_str):
    """Generate one instance file; retries fresh topologies when sampling
    cannot find connected pairs."""
    recipe = Recipe(**{**recipe_dict, "demand_range": tuple(recipe_dict["demand_range"]),
                       "capacity_range": tuple(recipe_dict["capacity_range"])})
    config = recipe.configs()[cfg_idx]
    rhash = recipe_hash(recipe)
    last_error = None
    for attempt in range(20):
        topo_seed, inst_seed = _instance_seeds(recipe.seed, cfg_idx, inst_idx, attempt)
        try:
            topology = _build_topology(recipe, config, topo_seed)
            instance = netmodel.sample_instance(
                topology,
                recipe.pairs_per_instance,
                recipe.demand_range,
                recipe.k_paths,
                inst_seed,
            )
        except netmodel.GenerationError as exc:
            last_error = str(exc)
            if recipe.family == "file":
                break  # a fixed topology will not get better by retrying
            continue
        data = netmodel.instance_to_dict(instance, rhash)
        data["config_index"] = cfg_idx
        path = Path(path_str)
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, json.dumps(data, sort_keys=True))
        return path_str, None
    return path_str, last_error or "exhausted attempts"


def cmd_gen(recipe_path, out_dir, jobs=None) -> int:
    recipe = load_recipe(recipe_path)
    configs = recipe.configs()
    # validate sampling feasibility per configuration before writing anything
    for config in configs:
        if recipe.family != "file":
            n = config["nodes"]
            if recipe.pairs_per_instance > n * (n - 1):
                raise RecipeError(
                    f"{recipe.pairs_per_instance} pairs do not fit in a {n}-node topology"
                )
        else:
            if not Path(config["path"]).exists():
                raise RecipeError(f"topology file {config['path']} not found")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    idx = 0
    for cfg_idx in range(len(configs)):
        for inst_idx in range(recipe.instances_per_config):
            rel = f"instances/instance_{idx:06d}.json"
            tasks.append((cfg_idx, inst_idx, str(out / rel), rel))
            idx += 1

    recipe_dict = recipe.as_dict()
    failures = []
    workers = _jobs(jobs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    _gen_worker,
                    [recipe_dict] * len(tasks),
                    [t[0] for t in tasks],
                    [t[1] for t in tasks],
                    [t[2] for t in tasks],
                    chunksize=8,
                )
            )
    else:
        results = [_gen_worker(recipe_dict, t[0], t[1], t[2]) for t in tasks]
    for (cfg_idx, inst_idx, _path, rel), (_p, error) in zip(tasks, results):
        if error is not None:
            failures.append({"instance": rel, "config": cfg_idx, "error": error})

    manifest = {
        "format_version": MANIFEST_VERSION,
        "tool_version": __version__,
        "recipe": recipe_dict,
        "recipe_hash": recipe_hash(recipe),
        "configs": [
            {**config, "count": recipe.instances_per_config, "index": i}
            for i, config in enumerate(configs)
        ],
        "instances": [t[3] for t in tasks if t[3] not in {f["instance"] for f in failures}],
        "num_instances": len(tasks) - len(failures),
        "gen_failures": failures,
        "solve": {"solved": 0, "failures": []},
    }
    _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    print(f"generated {manifest['num_instances']} instances in {out} "
          f"({len(failures)} failures)")
    return 2 if failures else 0


def _read_manifest(data_dir) -> dict:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.json in {data_dir}")
    return json.loads(path.read_text())


def _solve_worker(path_str, ipm_overrides):
    path = Path(path_str)
    try:
        data = json.loads(path.read_text())
    except (json.JSONDecodeError, OSError) as exc:
        return path_str, "skipped", f"unreadable instance file: {exc}"
    if "trajectory" in data:
        return path_str, "already", None
    try:
        instance = netmodel.instance_from_dict(data)
        lp = teprog.build_lp(instance)
        trajectory = ipm.solve(lp, ipm.IPMConfig(**ipm_overrides))
    except (netmodel.TopologyError, ipm.SolverError, ValueError) as exc:
        return path_str, "failed", f"{type(exc).__name__}: {exc}"
    data["trajectory"] = ipm.trajectory_to_dict(trajectory)
    _atomic_write(path, json.dumps(data, sort_keys=True))
    return path_str, "solved", None


def cmd_solve(data_dir, jobs=None) -> int:
    manifest = _read_manifest(data_dir)
    base = Path(data_dir)
    files = [str(base / rel) for rel in manifest["instances"]]
    overrides = manifest["recipe"].get("ipm", {})
    workers = _jobs(jobs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_worker, files, [overrides] * len(files), chunksize=4))
    else:
        results = [_solve_worker(f, overrides) for f in files]
    solved = sum(1 for _p, status, _e in results if status in ("solved", "already"))
    failures = [
        {"instance": str(Path(p).relative_to(base)), "error": err}
        for p, status, err in results
        if status in ("failed", "skipped")
    ]
    manifest["solve"] = {"solved": solved, "failures": failures}
    _atomic_write(base / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    print(f"solved {solved}/{len(files)} instances ({len(failures)} failures)")
    return 2 if failures else 0


def load_dataset(data_dir, attr_mode: str, require_trajectory: bool = True):
    """Instance files -> entry dicts (unsolved instances skipped when required)."""
    manifest = _read_manifest(data_dir)
    base = Path(data_dir)
    entries = []
    for rel in manifest["instances"]:
        data = json.loads((base / rel).read_text())
        if "trajectory" not in data and require_trajectory:
            continue
        trajectory = (
            ipm.trajectory_from_dict(data["trajectory"]) if "trajectory" in data else None
        )
        instance = netmodel.instance_from_dict(data)
        lp = teprog.build_lp(instance)
        graph = lpgraph.encode(teprog.normalize(lp), attr_mode)
        entries.append(
            {
                "instance": instance,
                "lp": lp,
                "graph": graph,
                "trajectory": trajectory,
                "instance_id": rel,
            }
        )
    return manifest, entries


def cmd_train(data_dir, out_dir, model_path=None, train_path=None, strict_repro=False) -> int:
    manifest = _read_manifest(data_dir)
    msettings = model_settings(manifest["recipe"].get("model", {}))
    tsettings = train_settings(manifest["recipe"].get("train", {}))
    for path, target in ((model_path, msettings), (train_path, tsettings)):
        if path:
            override = json.loads(Path(path).read_text())
            if override.get("recipe_hash") and override["recipe_hash"] != manifest["recipe_hash"]:
                warnings.warn(
                    f"config {path} was made for recipe {override['recipe_hash']}, "
                    f"dataset is {manifest['recipe_hash']}"
                )
            target.update({k: v for k, v in override.items() if k != "recipe_hash"})

    _manifest, entries = load_dataset(data_dir, msettings["attr_mode"])
    samples = [
        train_mod.TrainingSample(e["graph"], e["lp"], e["trajectory"], e["instance_id"])
        for e in entries
    ]
    if not samples:
        print("no solved instances in dataset; run `tegnn solve` first", file=sys.stderr)
        return 1

    out = Path(out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    loss_cfg = tsettings.pop("loss")
    weights = train_mod.LossWeights(**loss_cfg)
    config = train_mod.TrainConfig(
        epochs=int(tsettings["epochs"]),
        batch_size=int(tsettings["batch_size"]),
        learning_rate=float(tsettings["learning_rate"]),
        seed=int(tsettings["seed"]),
        grad_clip=float(tsettings.get("grad_clip", 1.0)),
        checkpoint_every=int(tsettings.get("checkpoint_every", 10)),
        strict_repro=strict_repro,
    )
    params = gnn.init_parameters(
        hidden_dim=int(msettings["hidden_dim"]),
        num_inner=int(msettings["num_inner"]),
        k_max=int(msettings["k_max"]),
        seed=int(tsettings.get("init_seed", config.seed)),
        in_dims=(2, 2, 2) if msettings["attr_mode"] == "row_col_stats" else (1, 1, 1),
    )
    snapshot = {
        "recipe": manifest["recipe"],
        "recipe_hash": manifest["recipe_hash"],
        "model": msettings,
        "train": {**tsettings, "loss": loss_cfg, "strict_repro": strict_repro},
        "tool_version": __version__,
    }
    _atomic_write(out / "config.json", json.dumps(snapshot, indent=2, sort_keys=True))

    params, curve = train_mod.train(
        samples,
        config,
        weights,
        params,
        checkpoint_dir=ckpt_dir,
        recipe_hash=manifest["recipe_hash"],
        log=lambda row: print(
            f"epoch {row['epoch']:4d}  variable {row['variable']:.5g}  "
            f"constraint {row['constraint']:.5g}  objective {row['objective']:.5g}  "
            f"total {row['total']:.5g}"
        ),
    )
    train_mod.write_loss_curve(curve, out / "losses.csv")
    gnn.save_checkpoint(params, out / "checkpoint.pt", manifest["recipe_hash"])
    print(f"trained {config.epochs} epochs on {len(samples)} samples -> {out/'checkpoint.pt'}")
    return 0


def cmd_eval(
    ckpt_path,
    data_dir,
    out_dir,
    include_encoding_time=False,
    allow_recipe_mismatch=False,
) -> int:
    params, meta = gnn.load_checkpoint(ckpt_path)
    manifest = _read_manifest(data_dir)
    if meta.get("recipe_hash") and meta["recipe_hash"] != manifest["recipe_hash"]:
        if not allow_recipe_mismatch:
            print(
                f"checkpoint recipe {meta['recipe_hash']} != dataset recipe "
                f"{manifest['recipe_hash']}; pass --allow-recipe-mismatch to evaluate anyway",
                file=sys.stderr,
            )
            return 1
    attr_mode = "row_col_stats" if params.in_dims[0] == 2 else "fixed"
    _m, entries = load_dataset(data_dir, attr_mode, require_trajectory=False)
    overrides = manifest["recipe"].get("ipm", {})
    report = metrics.benchmark(
        entries,
        params,
        ipm.IPMConfig(**overrides),
        include_encoding_time=include_encoding_time,
        recipe_meta={
            "recipe_hash": manifest["recipe_hash"],
            "recipe_name": manifest["recipe"]["name"],
            "configs": manifest["configs"],
            "checkpoint_recipe_hash": meta.get("recipe_hash"),
        },
    )
    metrics.write_report(report, out_dir)
    metrics.soft_speed_check(report)
    agg = report.aggregates
    print(
        f"evaluated {len(report.results)} instances: "
        f"mean ogap {agg['ogap'].get('mean', float('nan')):.4f}, "
        f"mean cgap {agg['cgap'].get('mean', float('nan')):.4f}, "
        f"mean onocgap {agg['onocgap'].get('mean', float('nan')):.4f}"
    )
    return 0


def cmd_encode(data_dir, out_dir) -> int:
    manifest = _read_manifest(data_dir)
    attr_mode = model_settings(manifest["recipe"].get("model", {}))["attr_mode"]
    base = Path(data_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for rel in manifest["instances"]:
        data = json.loads((base / rel).read_text())
        instance = netmodel.instance_from_dict(data)
        nlp = teprog.normalize(teprog.build_lp(instance))
        graph = lpgraph.encode(nlp, attr_mode)
        payload = lpgraph.graph_to_dict(graph)
        payload["recipe"] = manifest["recipe_hash"]
        payload["instance"] = rel
        target = out / (Path(rel).stem + ".graph.json")
        _atomic_write(target, json.dumps(payload, sort_keys=True))
        count += 1
    print(f"encoded {count} graphs -> {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tegnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset from a recipe")
    p.add_argument("--recipe", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)

    p = sub.add_parser("solve", help="record solver trajectories for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--jobs", type=int, default=None)

    p = sub.add_parser("train", help="train the model on a solved dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="model config JSON override")
    p.add_argument("--train", dest="train_cfg", default=None, help="train config JSON override")
    p.add_argument("--strict-repro", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--include-encoding-time", action="store_true")
    p.add_argument("--allow-recipe-mismatch", action="store_true")

    p = sub.add_parser("encode", help="serialize LP graphs for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args.recipe, args.out, args.jobs)
        if args.command == "solve":
            return cmd_solve(args.data, args.jobs)
        if args.command == "train":
            return cmd_train(
                args.data, args.out, args.model, args.train_cfg, args.strict_repro
            )
        if args.command == "eval":
            return cmd_eval(
                args.ckpt,
                args.data,
                args.out,
                args.include_encoding_time,
                args.allow_recipe_mismatch,
            )
        if args.command == "encode":
            return cmd_encode(args.data, args.out)
        return 3
    except (RecipeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PartialFailure as exc:
        print(f"partial failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal errors get a distinct exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
