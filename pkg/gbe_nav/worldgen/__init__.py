from gbe_nav.worldgen.world import World, ObjectSpec, generate_world  # noqa
from gbe_nav.worldgen.instructions import Instruction, generate_instruction  # noqa
from gbe_nav.worldgen.episodes import (  # noqa
    Dataset, EpisodeSpec, build_dataset, dataset_stats, sample_trajectory
)
