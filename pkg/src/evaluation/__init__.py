from .benchmark import SWEEP_COLUMNS, benchmark_sweep, crossover_resolution
from .flops import flops_cascade, flops_cascade_at, flops_global
from .metrics import dice_score
from .runner import class_table, evaluate_episodes, episodes_frame
