"""The fixed token inventory shared by world generation and instructions."""
from typing import Dict, List, Tuple

REGION_TYPES = (
    "bedroom", "kitchen", "bathroom", "living_room", "dining_room",
    "office", "hallway", "laundry_room", "garage", "closet",
)
OBJECT_CLASSES = (
    "chair", "table", "sofa", "bed", "lamp", "plant", "television", "picture",
    "pillow", "vase", "clock", "mirror", "cabinet", "shelf", "sink", "towel",
)
COLORS = ("red", "blue", "green", "white", "black", "yellow", "brown", "gray")
SIZES = ("small", "medium", "large")
SHAPES = ("round", "square", "long", "tall")
RELATIONS = ("near", "above", "below", "left_of", "right_of")

# physical extent in meters of each size token
SIZE_METERS = {"small": 0.3, "medium": 0.6, "large": 1.0}

FUNCTION_WORDS = (
    "find", "the", "a", "it", "is", "in", "which", "next", "to", "and",
    "there", "of", "with", "go", "room", "located", "that", "near_to", ".", "no",
    "other",
)
PAD = "<pad>"
UNK = "<unk>"

CONTENT_TOKENS = frozenset(
    REGION_TYPES + OBJECT_CLASSES + COLORS + SIZES + SHAPES + RELATIONS)


def _build() -> Tuple[str, ...]:
    tokens: List[str] = [PAD, UNK]
    for group in (FUNCTION_WORDS, OBJECT_CLASSES, COLORS, SIZES, SHAPES,
                  RELATIONS, REGION_TYPES):
        tokens.extend(t for t in group if t not in tokens)
    return tuple(tokens)


TOKENS = _build()
TOKEN_IDS: Dict[str, int] = {token: i for i, token in enumerate(TOKENS)}
VOCAB_SIZE = len(TOKENS)


def encode(words: List[str]) -> Tuple[int, ...]:
    return tuple(TOKEN_IDS[w] for w in words)


def decode(token_ids: Tuple[int, ...]) -> List[str]:
    return [TOKENS[i] for i in token_ids]
