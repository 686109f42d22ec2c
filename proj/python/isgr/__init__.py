"""Python access to the scene-graph pipeline, query generation and reward scoring."""

from ._core import (
    IsgrError,
    build_graph,
    default_generation_params,
    default_reward_weights,
    generate_instructions,
    parse_triples,
    rank_group,
    reward,
)

__all__ = [
    "IsgrError",
    "build_graph",
    "default_generation_params",
    "default_reward_weights",
    "generate_instructions",
    "parse_triples",
    "rank_group",
    "reward",
]
