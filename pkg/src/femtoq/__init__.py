"""Distributed Q-learning power allocation for cognitive femtocell networks."""

from .channel import (MBS, MU, CapacityReport, GainMatrix, Kind, NodeId, PowerAction,
                      compute_capacities, compute_sinr, fbs, probe_estimate,
                      synthesize_probe_samples)
from .errors import (AdmissionError, ConfigurationError, EstimationError, FemtoError,
                     NumericError, ProtocolError, ScenarioError)
from .learning import (ActionSpace, LearnerConfig, QTable, compute_reward, observe_state,
                       q_update, select_action_cooperative, select_action_independent)
from .mac import Algorithm, EstimationMode, FrameSchedule, MetricsRecord, PaqNetwork
from .scenario import ScenarioConfig, load_config, run_scenario, run_sweep

__version__ = "0.1.0"
