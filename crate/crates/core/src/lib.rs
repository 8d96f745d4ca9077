//! Coalition formation for cooperative cognitive radio.
//!
//! Secondary users relay traffic of primary users in exchange for channel
//! access time. Within a coalition the relays forward sequentially and the
//! time split comes from a small linear program (or its closed form when
//! every relay is used); across coalitions an annealed Gibbs sampler searches
//! for the welfare-maximizing assignment of secondary users.
//!
//! * [`scenario`]: geometry, pathloss and Shannon capacities.
//! * [`coalition`]: relay ordering, time fractions, rates and utilities.
//! * [`game`]: coalition structures, welfare and repercussion utilities.
//! * [`sampler`]: the Gibbs sampler and its traces.
//! * [`oracle`]: exhaustive solvers for small instances.
//! * [`cli`]: the `coalradio` command line.

pub mod cli;
pub mod coalition;
pub mod game;
pub mod oracle;
pub mod sampler;
pub mod scenario;
pub mod simplex;

pub use coalition::{order_relays, Coalition, OrderedCapacityMatrix, TimeFractions};
pub use game::{Action, CoalitionStructure};
pub use sampler::{SamplerConfig, SamplerTrace, TemperatureSchedule};
pub use scenario::{CapacityTable, Network, NodeId, Scenario, ScenarioFile};
