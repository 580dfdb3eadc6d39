"""plumetrace: deterministic multi-UAV chemical plume source localization.

Library layout mirrors the simulation stack: `flowfield` (wind solver and
meander), `plume` (filaments and sensors), `world` (UAV/obstacle kinematics
and the safety override), `env` (the multi-agent POMDP), `baselines`
(controllers), `harness` (batch runner and exports), `report` (figures),
`cli` (command line).
"""

from .env import (AnchorNode, CpslEnv, EpisodeFinishedError, Observation,
                  SensorWindow, WorldView, build_observation, compute_return,
                  compute_reward, flat_layout_fields, flat_layout_size,
                  flatten_observation, update_anchor)
from .flowfield import (ColoredNoiseState, DiffusionSpec, FlowGrid,
                        init_flowfield, sample_wind, step_colored_noise,
                        step_flowfield)
from .harness import (BatchResult, EpisodeResult, export_results,
                      generate_plume_table, run_batch, run_episode)
from .plume import (Anemometer, ChemicalSensor, EmitterSpec, GasConstants,
                    PlumeState, PlumeTable, advect_filaments, concentration_at,
                    cull_filaments, grow_filaments, release_filaments,
                    sense_concentration, sense_wind)
from .scenario import (DeclarationConfig, FluxConfig, RewardConfig,
                       ScenarioConfig, load_scenario, save_scenario)
from .world import (ActuationLimits, CollisionGeometry, ObstacleState,
                    UavState, check_collisions, safety_override, step_obstacle,
                    step_uav)

__version__ = "0.1.0"
