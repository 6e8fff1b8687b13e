"""Distributed formation tracking for networks of port-Hamiltonian mechanical agents."""

from .controller import (ContractivityReport, ControllerGains, ReferencePoint,
                         certify_contractivity, compute_L, control_law, desired_hamiltonian)
from .errors import (CertificationError, ConfigurationError, FormnetError, GraphError,
                     InputError, SimulationAbort)
from .network import (FormationSpec, GcoTrajectory, MeshGraph, NetworkSnapshot,
                      PolynomialTrajectory, StaticTrajectory, build_mesh, follower_reference,
                      formation_errors, leader_reference)
from .pde import (PdeCoefficients, SasSweepResult, TemporalStabilityReport,
                  build_pde_coefficients, certify_temporal_stability,
                  discretization_residual, sas_sweep)
from .phcore import (AgentState, PlantModel, SpacecraftPlantParams, hamiltonian,
                     mechanical_plant, open_loop_rhs, passive_output, spacecraft_plant)
from .simulator import (ClosedLoopNetwork, SimConfig, TrajectoryLog, closed_loop_rhs,
                        integration_step_rk4, simulate)
from .config import Scenario, dump_scenario, load_scenario, preset

__version__ = "0.1.0"
