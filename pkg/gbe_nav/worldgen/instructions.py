"""Templated instructions at several levels of granularity.

Segments:
  1. object name
  2. attributes and relationships to co-visible objects
  3. region description
  4. neighbor-region description
  5. rewrite: the content of 1-4 merged into one re-templated stream
"""
from typing import AbstractSet, FrozenSet, List, NamedTuple, Tuple

from gbe_nav.worldgen import vocabulary
from gbe_nav.worldgen.world import ObjectSpec, World

LEVELS = (1, 2, 3, 4, 5)
FULL = frozenset({1, 2, 3, 4})
REWRITTEN = frozenset({5})


class InstructionError(ValueError):
    """Invalid instruction granularity."""


class Instruction(NamedTuple):
    tokens: Tuple[int, ...]
    # one flag per segment, in LEVELS order
    mask: Tuple[bool, bool, bool, bool, bool]

    @property
    def words(self) -> List[str]:
        return vocabulary.decode(self.tokens)

    @property
    def granularity(self) -> FrozenSet[int]:
        return frozenset(level for level, on in zip(LEVELS, self.mask) if on)


def check_granularity(granularity: AbstractSet[int]) -> FrozenSet[int]:
    levels = frozenset(granularity)
    if not levels:
        raise InstructionError("granularity must not be empty")
    unknown = levels - set(LEVELS)
    if unknown:
        raise InstructionError(f"unknown granularity levels {sorted(unknown)}")
    return levels


def parse_granularity(text: str) -> FrozenSet[int]:
    """Parse '1,2,3' (or '1+2+3') into a granularity set."""
    try:
        levels = {int(part) for part in text.replace("+", ",").split(",") if part.strip()}
    except ValueError:
        raise InstructionError(f"cannot parse granularity {text!r}") from None
    return check_granularity(levels)


def generate_instruction(
    world: World,
    obj: ObjectSpec,
    granularity: AbstractSet[int]
) -> Instruction:
    levels = check_granularity(granularity)
    if 5 in levels:
        words = _rewritten(world, obj)
        mask = (True, True, True, True, True)
    else:
        words = []
        if 1 in levels:
            words += _object_name(obj)
        if 2 in levels:
            words += _attributes_and_relations(world, obj)
        if 3 in levels:
            words += _region(world, obj)
        if 4 in levels:
            words += _neighbor_regions(world, obj)
        mask = tuple(level in levels for level in LEVELS)  # type: ignore
    if not words:
        raise InstructionError(f"empty instruction for object {obj.object_id}")
    return Instruction(vocabulary.encode(words), mask)


def _object_name(obj: ObjectSpec) -> List[str]:
    return [obj.class_token]


def _relation_phrases(world: World, obj: ObjectSpec) -> List[str]:
    words: List[str] = []
    for i, relation in enumerate(obj.relations):
        if i:
            words.append("and")
        words += [relation.relation, "the", world.object(relation.object_id).class_token]
    return words


def _attributes_and_relations(world: World, obj: ObjectSpec) -> List[str]:
    color, size, shape = obj.attributes
    words = ["it", "is", size, shape, "and", color]
    if obj.relations:
        words += ["which", "is"] + _relation_phrases(world, obj)
    return words + ["."]


def _region(world: World, obj: ObjectSpec) -> List[str]:
    return ["it", "is", "in", "the", world.region_type(obj.region_id), "."]


def _neighbor_regions(world: World, obj: ObjectSpec) -> List[str]:
    neighbors = world.regions[obj.region_id].neighbors
    if not neighbors:
        return ["there", "is", "no", "other", "room", "."]
    words = ["the", "room", "is", "next", "to"]
    for i, region_id in enumerate(neighbors):
        if i:
            words.append("and")
        words += ["the", world.region_type(region_id)]
    return words + ["."]


def _rewritten(world: World, obj: ObjectSpec) -> List[str]:
    color, size, shape = obj.attributes
    words = ["go", "to", "the", world.region_type(obj.region_id)]
    neighbors = world.regions[obj.region_id].neighbors
    for i, region_id in enumerate(neighbors):
        words += ["next", "to" if i == 0 else "and", "the", world.region_type(region_id)]
    words += [".", "find", "the", color, size, shape, obj.class_token]
    if obj.relations:
        words += ["that", "is"] + _relation_phrases(world, obj)
    return words + ["."]


def content_tokens(instruction: Instruction) -> List[str]:
    """Semantic tokens of an instruction, in emission order."""
    return [w for w in instruction.words if w in vocabulary.CONTENT_TOKENS]
