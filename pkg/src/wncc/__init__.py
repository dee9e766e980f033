"""Latency-optimal co-design of user association, transmit power and time
allocation for wireless networked control over multi-cell edge networks."""

from .model import (Topology, NetworkConfig, ChannelSet, GainTensors,
                    PowerAllocation, TimeAllocation, ConfigError,
                    load_config, generate_channels, effective_gains)
from .comms import q_func, q_inv, uplink_sinr, downlink_sinr, outage, overall_outage
from .control import (PlantModel, DiscreteDynamics, StabilityForm, Trajectory,
                      default_plant, discretize, stability_matrices,
                      stability_holds, feasible_T_interval,
                      simulate_closed_loop, average_control_cost)
from .convex import ConvexProgram, ProgramBuilder, Solution, solve, check_solution
from .codesign import (CoDesignSolution, InitializationError, initialize,
                       sca_loop, alternating_optimize)
from .benchmarks import (SchemeResult, association_only, resource_only,
                         fdma_design, proposed, run_scheme, SCHEMES)
from .validate import validate_solution, FeasibilityReport
from .harness import ExperimentSpec, ResultTable, run, summarize

__version__ = "0.1.0"
