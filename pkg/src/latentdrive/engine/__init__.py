from latentdrive.engine.branches import ActionBranchHeads, ConvBranch, IndepBranch
from latentdrive.engine.config import EngineConfig
from latentdrive.engine.engine import (
    DynamicsEngine,
    EngineState,
    EngineStepOutput,
    EpsTriple,
    PartialEpsError,
)
from latentdrive.engine.fusion import ContentFusion

__all__ = [
    "ActionBranchHeads",
    "ContentFusion",
    "ConvBranch",
    "DynamicsEngine",
    "EngineConfig",
    "EngineState",
    "EngineStepOutput",
    "EpsTriple",
    "IndepBranch",
    "PartialEpsError",
]
