from .ops import (
    DEFAULT_GAIN,
    DEFAULT_WEAKEN,
    auto_strength,
    box_to_cells,
    control_active,
    dd_edit,
    p2p_dd_edit,
    p2p_edit,
    strengthening_mask,
    validate_box,
    weakening_mask,
)
from .specs import AppearanceEdit, StructureEdit, edit_from_dict
from .controllers import EditController, SourceRecorder
from .goals import (
    DatasetRejected,
    GoalDataset,
    GoalResult,
    PreconditionError,
    generate_goal,
    generate_goal_dataset,
    oracle_goal_dataset,
    run_edit_processes,
)
from .attention_viz import (
    DEFAULT_TIMESTEPS,
    average_map,
    export_attention_grid,
    to_grayscale,
)

__all__ = [
    "DEFAULT_GAIN", "DEFAULT_WEAKEN", "auto_strength", "box_to_cells",
    "control_active", "dd_edit", "p2p_dd_edit", "p2p_edit",
    "strengthening_mask", "validate_box", "weakening_mask",
    "AppearanceEdit", "StructureEdit", "edit_from_dict",
    "EditController", "SourceRecorder",
    "DatasetRejected", "GoalDataset", "GoalResult", "PreconditionError",
    "generate_goal", "generate_goal_dataset", "oracle_goal_dataset",
    "run_edit_processes",
    "DEFAULT_TIMESTEPS", "average_map", "export_attention_grid", "to_grayscale",
]
