"""Self-exciting point processes on graphs with low-rank deep influence kernels."""

from .events import EventDataError, EventSequence, load_events_csv, save_events_csv, train_test_split
from .filters import FilterBank, FilterBankError, chebyshev_bank, filter_grad, gat_bank, l3net_bank, materialize
from .graphs import (Graph, GraphError, NeighborhoodIndex, SpectralData, build_graph,
                     complete_graph, hop_distances, khop_index, lattice_graph, path_graph,
                     read_edge_list, ring_graph, scaled_laplacian, write_edge_list)
from .metrics import (MetricsReport, default_probe, event_rate_mae, kernel_recovery_error,
                      test_loglik, time_mae, truth_loglik, type_kld)
from .model import (KernelModel, build_model, discardable, intensity, intensity_grad,
                    kernel_eval, kernel_matrix, rank_report, truncate_alpha)
from .objective import (BarrierGrid, InfeasibleIntensityError, LossBreakdown,
                        SequenceCache, log_barrier, ls, make_barrier_grid,
                        min_grid_intensity, nll, total_loss_and_grad)
from .simulate import (GT_KINDS, GroundTruthKernel, SimConfig, ground_truth,
                       gt50_ring_kernel_matrix, thinning_simulate)
from .temporal import (ScalarNet, TemporalGrid, build_grid, interp_cum, interp_phi,
                       net_backward, net_forward)
from .training import Adam, TrainConfig, TrainingAbort, gradient_check, train

__version__ = "0.1.0"
