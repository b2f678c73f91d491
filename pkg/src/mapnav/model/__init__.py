from .cm2 import CM2Model, ModelConfig, apply_map_encoder, init_map_encoder
from .attention import cross_modal_attend, init_cross_modal, apply_self_attention, init_self_attention
from .unet import UNetSpec, init_unet, apply_unet
from .supervision import (
    PathSupervision, sample_waypoints, nearest_arc_length,
    make_gt_heatmaps, make_path_supervision,
    ego_to_heatmap_cell, heatmap_cell_to_ego, HEATMAP_CELL,
)
from .losses import loss_waypoint, loss_map, loss_total
