"""Dataset files.

Layout of a dataset directory::

    manifest.json           splits, world ids, episode counts, generation config
    worlds/<world_id>.json  one document per world
    episodes/<split>.jsonl  one episode per line, referencing its world by id

Documents are dumped with sorted keys so that regenerating a dataset with the
same seed gives byte-identical files.
"""
import hashlib
import json
import logging
import os
from typing import Any, Dict, Iterable, List

from gbe_nav import constants
from gbe_nav.experiment import DatasetConfig, WorldConfig
from gbe_nav.geometry import PolarExtent, PolarPoint
from gbe_nav.worldgen.episodes import Dataset, EpisodeSpec
from gbe_nav.worldgen.instructions import Instruction
from gbe_nav.worldgen.world import (
    EdgeSpec, NodeSpec, ObjectSpec, RegionSpec, Relation, World
)

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


def _dumps(document: Any) -> str:
    return json.dumps(document, sort_keys=True, indent=1)


def _extent_to_dict(extent: PolarExtent) -> Dict[str, Any]:
    return {"heading": extent.center.heading, "elevation": extent.center.elevation,
            "width": extent.width, "height": extent.height}


def _extent_from_dict(d: Dict[str, Any]) -> PolarExtent:
    return PolarExtent(PolarPoint(d["heading"], d["elevation"]), d["width"], d["height"])


def world_to_dict(world: World) -> Dict[str, Any]:
    return {
        "world_id": world.world_id,
        "nodes": [{"id": n.node_id, "position": list(n.position), "region": n.region_id,
                   "feature": list(n.feature)} for n in world.nodes],
        "edges": [[e.a, e.b, e.length] for e in world.edges],
        "regions": [{"id": r.region_id, "type": r.region_type, "neighbors": list(r.neighbors)}
                    for r in world.regions],
        "objects": [{
            "id": o.object_id,
            "class": o.class_token,
            "attributes": list(o.attributes),
            "relations": [[r.object_id, r.relation] for r in o.relations],
            "home_nodes": [[node_id, _extent_to_dict(extent)] for node_id, extent in o.home_nodes],
            "region": o.region_id,
            "position": list(o.position),
            "height": o.height,
        } for o in world.objects],
    }


def world_from_dict(d: Dict[str, Any]) -> World:
    nodes = tuple(
        NodeSpec(n["id"], tuple(n["position"]), n["region"], tuple(n["feature"]))
        for n in d["nodes"])
    for i, node in enumerate(nodes):
        if node.node_id != i:
            raise ValueError(f"{d['world_id']}: node ids must be dense from 0, got {node.node_id}")
    edges = tuple(EdgeSpec(a, b, length) for a, b, length in d["edges"])
    regions = tuple(RegionSpec(r["id"], r["type"], tuple(r["neighbors"])) for r in d["regions"])
    objects = tuple(ObjectSpec(
        o["id"], o["class"], tuple(o["attributes"]),
        tuple(Relation(object_id, relation) for object_id, relation in o["relations"]),
        tuple((node_id, _extent_from_dict(extent)) for node_id, extent in o["home_nodes"]),
        o["region"], tuple(o["position"]), o["height"]) for o in d["objects"])
    return World(d["world_id"], nodes, edges, objects, regions)  # type: ignore


def episode_to_dict(episode: EpisodeSpec) -> Dict[str, Any]:
    d = {
        "episode_id": episode.episode_id,
        "world_id": episode.world_id,
        "start_node": episode.start_node,
        "object_id": episode.object_id,
        "tokens": list(episode.instruction.tokens),
        "granularity_mask": list(episode.instruction.mask),
        "instruction_id": episode.instruction_id,
        "shortest_path_length": episode.shortest_path_length,
        "start_threshold": episode.start_threshold,
        "targets_visible": episode.targets_visible,
    }
    # test episodes keep their targets on disk for scoring, policies never read them
    d["target_nodes"] = list(episode.target_nodes)
    d["polar_labels"] = [[p.heading, p.elevation] for p in episode.polar_labels]
    return d


def episode_from_dict(d: Dict[str, Any]) -> EpisodeSpec:
    return EpisodeSpec(
        episode_id=d["episode_id"],
        world_id=d["world_id"],
        start_node=d["start_node"],
        object_id=d["object_id"],
        target_nodes=tuple(d["target_nodes"]),
        instruction=Instruction(tuple(d["tokens"]), tuple(d["granularity_mask"])),  # type: ignore
        polar_labels=tuple(PolarPoint(h, e) for h, e in d["polar_labels"]),
        shortest_path_length=d["shortest_path_length"],
        start_threshold=d["start_threshold"],
        instruction_id=d["instruction_id"],
        targets_visible=d["targets_visible"])


def save_world(world: World, path: str) -> None:
    with open(path, "w") as fd:
        fd.write(_dumps(world_to_dict(world)))


def load_world(path: str) -> World:
    with open(path) as fd:
        return world_from_dict(json.load(fd))


def save_episodes(episodes: Iterable[EpisodeSpec], path: str) -> None:
    with open(path, "w") as fd:
        for episode in episodes:
            fd.write(json.dumps(episode_to_dict(episode), sort_keys=True) + "\n")


def load_episodes(path: str) -> List[EpisodeSpec]:
    with open(path) as fd:
        return [episode_from_dict(json.loads(line)) for line in fd if line.strip()]


def _config_to_dict(config: DatasetConfig) -> Dict[str, Any]:
    d = config._asdict()
    d["world"] = config.world._asdict()
    d["granularity"] = sorted(config.granularity)
    return d


def _config_from_dict(d: Dict[str, Any]) -> DatasetConfig:
    d = dict(d)
    d["world"] = WorldConfig(**d["world"])
    d["granularity"] = frozenset(d["granularity"])
    return DatasetConfig(**d)


def file_digest(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fd:
        for block in iter(lambda: fd.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def save_dataset(dataset: Dataset, output_dir: str) -> str:
    """Write a dataset directory, return the manifest path."""
    os.makedirs(os.path.join(output_dir, "worlds"), exist_ok=True)
    os.makedirs(os.path.join(output_dir, "episodes"), exist_ok=True)

    files: Dict[str, str] = {}
    for world_id in sorted(dataset.worlds):
        relpath = os.path.join("worlds", f"{world_id}.json")
        save_world(dataset.worlds[world_id], os.path.join(output_dir, relpath))
        files[relpath] = file_digest(os.path.join(output_dir, relpath))

    splits = {}
    for split in constants.SPLITS:
        episodes = dataset.splits.get(split, [])
        relpath = os.path.join("episodes", f"{split}.jsonl")
        save_episodes(episodes, os.path.join(output_dir, relpath))
        files[relpath] = file_digest(os.path.join(output_dir, relpath))
        splits[split] = {
            "file": relpath,
            "n_episodes": len(episodes),
            "world_ids": sorted({e.world_id for e in episodes}),
        }

    manifest = {
        "format_version": FORMAT_VERSION,
        "config": _config_to_dict(dataset.config),
        "splits": splits,
        "sha256": files,
    }
    manifest_path = os.path.join(output_dir, MANIFEST)
    with open(manifest_path, "w") as fd:
        fd.write(_dumps(manifest))
    logger.info(f"dataset written to {output_dir}")
    return manifest_path


def load_manifest(dataset_dir: str) -> Dict[str, Any]:
    path = os.path.join(dataset_dir, MANIFEST)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no {MANIFEST} in {dataset_dir}")
    with open(path) as fd:
        return json.load(fd)


def load_dataset(dataset_dir: str) -> Dataset:
    manifest = load_manifest(dataset_dir)
    worlds = {}
    for relpath in manifest["sha256"]:
        if relpath.startswith("worlds"):
            world = load_world(os.path.join(dataset_dir, relpath))
            worlds[world.world_id] = world
    splits = {
        split: load_episodes(os.path.join(dataset_dir, entry["file"]))
        for split, entry in manifest["splits"].items()
    }
    return Dataset(worlds, splits, _config_from_dict(manifest["config"]))
