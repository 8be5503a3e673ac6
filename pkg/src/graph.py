"""Level pipeline wiring and the full coarse-to-fine forward pass."""

import logging
from typing import List, Optional, Union

from langgraph.graph import END, StateGraph
from scipy.special import expit

from .cascade import CascadeConfig, LevelConfig, resample_task
from .data.task import TaskInstance
from .nodes import CascadeNodes
from .numerics import ParamSet, RngStream
from .numerics import functional as F
from .state import LevelInputs, LevelPrediction, LevelState, PredictionPyramid

logger = logging.getLogger(__name__)

LEVEL_NODES = ("sampling", "encoding", "attention", "decoding", "aggregation", "fusion")


def build_level_graph(config: CascadeConfig, level: LevelConfig, params: ParamSet):
    """Compile the node chain of one level; each node feeds the next."""
    nodes = CascadeNodes(config=config, level=level, params=params)
    graph = StateGraph(LevelState)
    graph.add_node("sampling", nodes.sampling_node)
    graph.add_node("encoding", nodes.encoding_node)
    graph.add_node("attention", nodes.attention_node)
    graph.add_node("decoding", nodes.decoding_node)
    graph.add_node("aggregation", nodes.aggregation_node)
    graph.add_node("fusion", nodes.fusion_node)
    graph.set_entry_point("sampling")
    graph.add_edge("sampling", "encoding")
    graph.add_edge("encoding", "attention")
    graph.add_edge("attention", "decoding")
    graph.add_edge("decoding", "aggregation")
    graph.add_edge("aggregation", "fusion")
    graph.add_edge("fusion", END)
    return graph.compile()


def run_level(
    task: Union[TaskInstance, LevelInputs],
    level: LevelConfig,
    prev: Optional[LevelPrediction],
    params: ParamSet,
    rng: RngStream,
    config: CascadeConfig,
    level_index: int = 0,
) -> LevelPrediction:
    inputs = task if isinstance(task, LevelInputs) else resample_task(task, level.resolution)
    initial: LevelState = {"level_index": level_index, "inputs": inputs, "prev": prev, "rng": rng}
    state = build_level_graph(config, level, params).invoke(initial)
    logger.debug("level %d (r=%d) done", level_index, level.resolution)
    return LevelPrediction(
        resolution=level.resolution,
        logits=state["logits"],
        coverage=state["coverage"],
        combined=state["combined"],
        patches=state["target_patches"],
        context_patches=state["context_patches"],
        uniform_fallback=state["uniform_fallback"],
    )


def forward(task: TaskInstance, config: CascadeConfig, params: ParamSet, rng: RngStream) -> PredictionPyramid:
    """Run every level in order and upsample the last probabilities to the input size."""
    prev: Optional[LevelPrediction] = None
    levels: List[LevelPrediction] = []
    for index, level in enumerate(config.levels):
        prev = run_level(task, level, prev, params, rng.child(index), config, level_index=index)
        levels.append(prev)
    final = F.resize_array(expit(prev.combined.numpy()), task.resolution, "bilinear")
    return PredictionPyramid(levels=levels, final=final.clip(0.0, 1.0))
