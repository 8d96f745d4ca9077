//! Network geometry, channel physics and the pairwise link-capacity table.
//!
//! A [`Scenario`] places a base station, primary users and secondary users on
//! a plane, and derives Shannon capacities from a pathloss model. Everything
//! downstream of this module works on a [`Network`]: the capacity table plus
//! the primary users' rate demands. A network can also be written down
//! directly as a raw capacity table, which is how hand-built instances are
//! expressed (see [`ScenarioFile`]).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("nodes {0} and {1} coincide")]
    ZeroDistance(NodeId, NodeId),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no capacity recorded for link {0} -> {1}")]
    MissingLink(NodeId, NodeId),
    #[error("node {0} does not exist in this network")]
    UnknownNode(NodeId),
    #[error("capacity of link {from} -> {to} must be positive and finite, got {value}")]
    InvalidCapacity {
        from: NodeId,
        to: NodeId,
        value: f64,
    },
    #[error("demand {demand} of {pu} exceeds its direct link capacity {capacity}")]
    DemandExceedsCapacity {
        pu: NodeId,
        demand: f64,
        capacity: f64,
    },
    #[error("cannot parse node id `{0}`")]
    BadNodeId(String),
    #[error("malformed scenario file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

/// A node of the network: the single base station, a primary user or a
/// secondary user. Displayed as `B`, `p<i>` and `s<i>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Base,
    Primary(usize),
    Secondary(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Base => write!(f, "B"),
            NodeId::Primary(i) => write!(f, "p{i}"),
            NodeId::Secondary(i) => write!(f, "s{i}"),
        }
    }
}

impl FromStr for NodeId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "B" {
            return Ok(NodeId::Base);
        }
        let bad = || ScenarioError::BadNodeId(s.to_string());
        let (kind, index) = s.split_at_checked(1).ok_or_else(bad)?;
        let index: usize = index.parse().map_err(|_| bad())?;
        match kind {
            "p" => Ok(NodeId::Primary(index)),
            "s" => Ok(NodeId::Secondary(index)),
            _ => Err(bad()),
        }
    }
}

/// Dense indexing of the `1 + num_pu + num_su` nodes: base station first,
/// then primaries, then secondaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLayout {
    pub num_pu: usize,
    pub num_su: usize,
}

impl NodeLayout {
    pub fn len(&self) -> usize {
        1 + self.num_pu + self.num_su
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, node: NodeId) -> Result<usize> {
        match node {
            NodeId::Base => Ok(0),
            NodeId::Primary(i) if i < self.num_pu => Ok(1 + i),
            NodeId::Secondary(i) if i < self.num_su => Ok(1 + self.num_pu + i),
            _ => Err(ScenarioError::UnknownNode(node)),
        }
    }

    pub fn node(&self, index: usize) -> NodeId {
        if index == 0 {
            NodeId::Base
        } else if index <= self.num_pu {
            NodeId::Primary(index - 1)
        } else {
            NodeId::Secondary(index - 1 - self.num_pu)
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.index(node).is_ok()
    }
}

/// `10^((dbm - 30) / 10)`.
pub fn linear_from_dbm(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn dbm_from_linear(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Pathloss model: `d^-a * P`.
pub fn received_power(distance: f64, tx_power: f64, exponent: f64) -> f64 {
    distance.powf(-exponent) * tx_power
}

/// Shannon capacity in bits/s/Hz of a link with fading gain `|h|^2`.
pub fn shannon_capacity(gain: f64, received_power: f64, noise: f64) -> f64 {
    (1.0 + gain * received_power / noise).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A power quantity as written in a configuration; converted to watts on use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerSpec {
    Watts(f64),
    Dbm(f64),
}

impl PowerSpec {
    pub fn watts(&self) -> f64 {
        match *self {
            PowerSpec::Watts(w) => w,
            PowerSpec::Dbm(d) => linear_from_dbm(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadingMode {
    /// Every `|h|^2` is one.
    Off,
    /// `|h|^2` drawn i.i.d. from a unit-mean exponential per ordered link.
    Rayleigh { seed: u64 },
}

/// Draws `count` i.i.d. unit-mean exponential values (`|h|^2` of a Rayleigh
/// channel).
pub fn sample_fading(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.sample::<f64, _>(Exp1)).collect()
}

/// Per-ordered-link fading gains `|h|^2`, dense over a [`NodeLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct FadingGains {
    layout: NodeLayout,
    gains: Vec<f64>,
}

impl FadingGains {
    pub fn new(layout: NodeLayout, mode: FadingMode) -> Self {
        let n = layout.len();
        let gains = match mode {
            FadingMode::Off => vec![1.0; n * n],
            FadingMode::Rayleigh { seed } => sample_fading(seed, n * n),
        };
        FadingGains { layout, gains }
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Result<f64> {
        let n = self.layout.len();
        Ok(self.gains[self.layout.index(from)? * n + self.layout.index(to)?])
    }
}

/// How primary-user demands are set when a scenario is generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DemandPolicy {
    /// Demand equals the base-station-to-PU capacity.
    DirectCapacity,
    /// Demand is this fraction (in `(0, 1]`) of the direct capacity.
    FractionOfDirect(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub tx_power_watts: f64,
    pub noise: PowerSpec,
    pub pathloss_exponent: f64,
    pub fading: FadingMode,
    pub demand: DemandPolicy,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            tx_power_watts: 0.5,
            noise: PowerSpec::Dbm(-40.87),
            pathloss_exponent: 3.4,
            fading: FadingMode::Off,
            demand: DemandPolicy::DirectCapacity,
        }
    }
}

/// Node placement plus channel physics.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid_size: f64,
    pub base: Point,
    pub primaries: Vec<Point>,
    pub secondaries: Vec<Point>,
    pub tx_power_watts: f64,
    pub noise: PowerSpec,
    pub pathloss_exponent: f64,
    pub fading: FadingMode,
    pub demands: Vec<f64>,
    pub seed: Option<u64>,
    gains: FadingGains,
}

impl Scenario {
    /// Builds and validates a scenario with explicit demands.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid_size: f64,
        base: Point,
        primaries: Vec<Point>,
        secondaries: Vec<Point>,
        tx_power_watts: f64,
        noise: PowerSpec,
        pathloss_exponent: f64,
        fading: FadingMode,
        demands: Vec<f64>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let layout = NodeLayout {
            num_pu: primaries.len(),
            num_su: secondaries.len(),
        };
        let scenario = Scenario {
            grid_size,
            base,
            primaries,
            secondaries,
            tx_power_watts,
            noise,
            pathloss_exponent,
            fading,
            demands,
            seed,
            gains: FadingGains::new(layout, fading),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn layout(&self) -> NodeLayout {
        NodeLayout {
            num_pu: self.primaries.len(),
            num_su: self.secondaries.len(),
        }
    }

    pub fn noise_watts(&self) -> f64 {
        self.noise.watts()
    }

    pub fn position(&self, node: NodeId) -> Result<Point> {
        match node {
            NodeId::Base => Some(self.base),
            NodeId::Primary(i) => self.primaries.get(i).copied(),
            NodeId::Secondary(i) => self.secondaries.get(i).copied(),
        }
        .ok_or(ScenarioError::UnknownNode(node))
    }

    pub fn distance(&self, from: NodeId, to: NodeId) -> Result<f64> {
        Ok(self.position(from)?.distance(&self.position(to)?))
    }

    pub fn gain(&self, from: NodeId, to: NodeId) -> Result<f64> {
        self.gains.get(from, to)
    }

    pub fn received_power(&self, from: NodeId, to: NodeId) -> Result<f64> {
        let d = self.distance(from, to)?;
        if d <= 0.0 {
            return Err(ScenarioError::ZeroDistance(from, to));
        }
        Ok(received_power(
            d,
            self.tx_power_watts,
            self.pathloss_exponent,
        ))
    }

    pub fn link_capacity(&self, from: NodeId, to: NodeId) -> Result<f64> {
        let pr = self.received_power(from, to)?;
        Ok(shannon_capacity(
            self.gain(from, to)?,
            pr,
            self.noise_watts(),
        ))
    }

    /// Capacities of every link a coalition can use: `B -> s`, `B -> p`,
    /// `s -> s'` and `s -> p`.
    pub fn capacity_table(&self) -> Result<CapacityTable> {
        let layout = self.layout();
        let mut table = CapacityTable::new(layout);
        let mut set = |from, to| -> Result<()> {
            let c = self.link_capacity(from, to)?;
            table.set(from, to, c)
        };
        for p in 0..layout.num_pu {
            set(NodeId::Base, NodeId::Primary(p))?;
        }
        for s in 0..layout.num_su {
            let su = NodeId::Secondary(s);
            set(NodeId::Base, su)?;
            for p in 0..layout.num_pu {
                set(su, NodeId::Primary(p))?;
            }
            for other in 0..layout.num_su {
                if other != s {
                    set(su, NodeId::Secondary(other))?;
                }
            }
        }
        Ok(table)
    }

    pub fn network(&self) -> Result<Network> {
        Network::new(self.capacity_table()?, self.demands.clone())
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ScenarioError::InvalidParams(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("grid size", self.grid_size)?;
        positive("transmit power", self.tx_power_watts)?;
        positive("noise power", self.noise_watts())?;
        positive("pathloss exponent", self.pathloss_exponent)?;
        let layout = self.layout();
        if layout.num_pu == 0 {
            return Err(ScenarioError::InvalidParams(
                "at least one primary user is required".into(),
            ));
        }
        if self.demands.len() != layout.num_pu {
            return Err(ScenarioError::InvalidParams(format!(
                "{} demands given for {} primary users",
                self.demands.len(),
                layout.num_pu
            )));
        }
        for (i, a) in layout.nodes().enumerate() {
            for b in layout.nodes().skip(i + 1) {
                if self.distance(a, b)? <= 0.0 {
                    return Err(ScenarioError::ZeroDistance(a, b));
                }
            }
        }
        // Building the network checks demands against direct capacities.
        self.network().map(|_| ())
    }
}

/// Generates a scenario with primaries and secondaries uniform on
/// `[0, grid_size]^2` and the base station at the centre. Pure in
/// `(seed, params)`.
pub fn generate_scenario(
    num_pu: usize,
    num_su: usize,
    grid_size: f64,
    seed: u64,
    params: &ScenarioParams,
) -> Result<Scenario> {
    if num_pu == 0 {
        return Err(ScenarioError::InvalidParams(
            "at least one primary user is required".into(),
        ));
    }
    if !(grid_size.is_finite() && grid_size > 0.0) {
        return Err(ScenarioError::InvalidParams(format!(
            "grid size must be positive, got {grid_size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Point::new(grid_size / 2.0, grid_size / 2.0);
    let mut placed = vec![base];
    let mut draw = |rng: &mut ChaCha8Rng| loop {
        let p = Point::new(
            rng.random_range(0.0..=grid_size),
            rng.random_range(0.0..=grid_size),
        );
        if placed.iter().all(|q| q.distance(&p) > 0.0) {
            placed.push(p);
            return p;
        }
    };
    let primaries: Vec<Point> = (0..num_pu).map(|_| draw(&mut rng)).collect();
    let secondaries: Vec<Point> = (0..num_su).map(|_| draw(&mut rng)).collect();

    let fading = params.fading;
    let layout = NodeLayout { num_pu, num_su };
    let gains = FadingGains::new(layout, fading);
    let noise = params.noise.watts();
    let mut demands = Vec::with_capacity(num_pu);
    for (i, p) in primaries.iter().enumerate() {
        let pr = received_power(
            base.distance(p),
            params.tx_power_watts,
            params.pathloss_exponent,
        );
        let direct = shannon_capacity(gains.get(NodeId::Base, NodeId::Primary(i))?, pr, noise);
        demands.push(match params.demand {
            DemandPolicy::DirectCapacity => direct,
            DemandPolicy::FractionOfDirect(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(ScenarioError::InvalidParams(format!(
                        "demand fraction must lie in (0, 1], got {f}"
                    )));
                }
                f * direct
            }
        });
    }

    Scenario::new(
        grid_size,
        base,
        primaries,
        secondaries,
        params.tx_power_watts,
        params.noise,
        params.pathloss_exponent,
        fading,
        demands,
        Some(seed),
    )
}

/// Link capacities in bits/s/Hz for ordered (transmitter, receiver) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityTable {
    layout: NodeLayout,
    entries: Vec<Option<f64>>,
}

impl CapacityTable {
    pub fn new(layout: NodeLayout) -> Self {
        let n = layout.len();
        CapacityTable {
            layout,
            entries: vec![None; n * n],
        }
    }

    pub fn layout(&self) -> NodeLayout {
        self.layout
    }

    fn slot(&self, from: NodeId, to: NodeId) -> Result<usize> {
        Ok(self.layout.index(from)? * self.layout.len() + self.layout.index(to)?)
    }

    pub fn set(&mut self, from: NodeId, to: NodeId, capacity: f64) -> Result<()> {
        if !(capacity.is_finite() && capacity > 0.0) || from == to {
            return Err(ScenarioError::InvalidCapacity {
                from,
                to,
                value: capacity,
            });
        }
        let slot = self.slot(from, to)?;
        self.entries[slot] = Some(capacity);
        Ok(())
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Result<f64> {
        self.entries[self.slot(from, to)?].ok_or(ScenarioError::MissingLink(from, to))
    }

    pub fn contains(&self, from: NodeId, to: NodeId) -> bool {
        self.get(from, to).is_ok()
    }

    /// Present entries in dense index order.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        let n = self.layout.len();
        self.entries.iter().enumerate().filter_map(move |(i, e)| {
            e.map(|c| (self.layout.node(i / n), self.layout.node(i % n), c))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The capacity-level view of an instance: what coalitions and the game need.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    table: CapacityTable,
    demands: Vec<f64>,
}

impl Network {
    /// Checks that every primary has a direct link and a positive demand no
    /// larger than it.
    pub fn new(table: CapacityTable, demands: Vec<f64>) -> Result<Self> {
        let layout = table.layout();
        if layout.num_pu == 0 {
            return Err(ScenarioError::InvalidParams(
                "at least one primary user is required".into(),
            ));
        }
        if demands.len() != layout.num_pu {
            return Err(ScenarioError::InvalidParams(format!(
                "{} demands given for {} primary users",
                demands.len(),
                layout.num_pu
            )));
        }
        for (p, &demand) in demands.iter().enumerate() {
            let pu = NodeId::Primary(p);
            let capacity = table.get(NodeId::Base, pu)?;
            if !(demand.is_finite() && demand > 0.0) {
                return Err(ScenarioError::InvalidParams(format!(
                    "demand of {pu} must be positive, got {demand}"
                )));
            }
            if demand > capacity * (1.0 + 1e-12) {
                return Err(ScenarioError::DemandExceedsCapacity {
                    pu,
                    demand,
                    capacity,
                });
            }
        }
        Ok(Network { table, demands })
    }

    pub fn table(&self) -> &CapacityTable {
        &self.table
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn demand(&self, pu: usize) -> f64 {
        self.demands[pu]
    }

    pub fn num_pu(&self) -> usize {
        self.table.layout().num_pu
    }

    pub fn num_su(&self) -> usize {
        self.table.layout().num_su
    }
}

/// A scenario as stored on disk: either geometry (capacities derived from
/// the physics) or a raw capacity table.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioFile {
    Geometric(Scenario),
    Tabulated(Network),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    num_pu: usize,
    num_su: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    demands: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometry: Option<GeometryDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    links: Vec<LinkDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryDoc {
    grid_size: f64,
    tx_power_watts: f64,
    pathloss_exponent: f64,
    noise: NoiseDoc,
    fading: FadingDoc,
    base: [f64; 2],
    primaries: Vec<[f64; 2]>,
    secondaries: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseDoc {
    value: f64,
    unit: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FadingDoc {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkDoc {
    from: String,
    to: String,
    capacity: f64,
}

fn point(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

impl ScenarioFile {
    pub fn network(&self) -> Result<Network> {
        match self {
            ScenarioFile::Geometric(s) => s.network(),
            ScenarioFile::Tabulated(n) => Ok(n.clone()),
        }
    }

    pub fn layout(&self) -> NodeLayout {
        match self {
            ScenarioFile::Geometric(s) => s.layout(),
            ScenarioFile::Tabulated(n) => n.table().layout(),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let doc = match self {
            ScenarioFile::Geometric(s) => {
                let layout = s.layout();
                let (value, unit) = match s.noise {
                    PowerSpec::Watts(w) => (w, "W"),
                    PowerSpec::Dbm(d) => (d, "dBm"),
                };
                let fading = match s.fading {
                    FadingMode::Off => FadingDoc {
                        mode: "off".into(),
                        seed: None,
                    },
                    FadingMode::Rayleigh { seed } => FadingDoc {
                        mode: "rayleigh".into(),
                        seed: Some(seed),
                    },
                };
                ScenarioDoc {
                    num_pu: layout.num_pu,
                    num_su: layout.num_su,
                    seed: s.seed,
                    demands: s.demands.clone(),
                    geometry: Some(GeometryDoc {
                        grid_size: s.grid_size,
                        tx_power_watts: s.tx_power_watts,
                        pathloss_exponent: s.pathloss_exponent,
                        noise: NoiseDoc {
                            value,
                            unit: unit.into(),
                        },
                        fading,
                        base: [s.base.x, s.base.y],
                        primaries: s.primaries.iter().map(|p| [p.x, p.y]).collect(),
                        secondaries: s.secondaries.iter().map(|p| [p.x, p.y]).collect(),
                    }),
                    links: Vec::new(),
                }
            }
            ScenarioFile::Tabulated(n) => {
                let layout = n.table().layout();
                ScenarioDoc {
                    num_pu: layout.num_pu,
                    num_su: layout.num_su,
                    seed: None,
                    demands: n.demands().to_vec(),
                    geometry: None,
                    links: n
                        .table()
                        .entries()
                        .map(|(from, to, capacity)| LinkDoc {
                            from: from.to_string(),
                            to: to.to_string(),
                            capacity,
                        })
                        .collect(),
                }
            }
        };
        toml::to_string(&doc).map_err(|e| ScenarioError::Format(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: ScenarioDoc =
            toml::from_str(text).map_err(|e| ScenarioError::Format(e.to_string()))?;
        match (doc.geometry, doc.links.is_empty()) {
            (Some(g), true) => {
                let noise = match g.noise.unit.as_str() {
                    "W" => PowerSpec::Watts(g.noise.value),
                    "dBm" => PowerSpec::Dbm(g.noise.value),
                    other => {
                        return Err(ScenarioError::Format(format!(
                            "unknown noise unit `{other}` (expected W or dBm)"
                        )))
                    }
                };
                let fading = match (g.fading.mode.as_str(), g.fading.seed) {
                    ("off", None) => FadingMode::Off,
                    ("rayleigh", Some(seed)) => FadingMode::Rayleigh { seed },
                    (mode, _) => {
                        return Err(ScenarioError::Format(format!(
                            "bad fading spec `{mode}` (expected `off`, or `rayleigh` with a seed)"
                        )))
                    }
                };
                if g.primaries.len() != doc.num_pu || g.secondaries.len() != doc.num_su {
                    return Err(ScenarioError::Format(
                        "position counts do not match num_pu/num_su".into(),
                    ));
                }
                Scenario::new(
                    g.grid_size,
                    point(g.base),
                    g.primaries.into_iter().map(point).collect(),
                    g.secondaries.into_iter().map(point).collect(),
                    g.tx_power_watts,
                    noise,
                    g.pathloss_exponent,
                    fading,
                    doc.demands,
                    doc.seed,
                )
                .map(ScenarioFile::Geometric)
            }
            (None, false) => {
                let layout = NodeLayout {
                    num_pu: doc.num_pu,
                    num_su: doc.num_su,
                };
                let mut table = CapacityTable::new(layout);
                for link in doc.links {
                    let from: NodeId = link.from.parse()?;
                    let to: NodeId = link.to.parse()?;
                    if table.contains(from, to) {
                        return Err(ScenarioError::Format(format!(
                            "duplicate link {from} -> {to}"
                        )));
                    }
                    table.set(from, to, link.capacity)?;
                }
                Network::new(table, doc.demands).map(ScenarioFile::Tabulated)
            }
            _ => Err(ScenarioError::Format(
                "exactly one of [geometry] or [[links]] must be present".into(),
            )),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()?).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(d: f64, power: f64, a: f64) -> Scenario {
        Scenario::new(
            10.0,
            Point::new(0.0, 0.0),
            vec![Point::new(d, 0.0)],
            vec![],
            power,
            PowerSpec::Watts(1.0),
            a,
            FadingMode::Off,
            vec![1e-9],
            None,
        )
        .unwrap()
    }

    #[test]
    fn dbm_conversion() {
        assert_eq!(linear_from_dbm(30.0), 1.0);
        assert!((linear_from_dbm(0.0) - 0.001).abs() < 1e-18);
        // 10^(-70.87/10)
        let n0 = linear_from_dbm(-40.87);
        assert!((n0 - 8.184647881347e-8).abs() / n0 < 1e-10, "{n0}");
        assert!((dbm_from_linear(n0) + 40.87).abs() < 1e-12);
    }

    #[test]
    fn received_power_examples() {
        assert_eq!(received_power(1.0, 0.5, 3.4), 0.5);
        assert!((received_power(2.0, 0.5, 3.4) - 0.0473661).abs() < 1e-7);
        assert_eq!(received_power(1.0, 0.0, 2.0), 0.0);
        let s = two_node(2.0, 0.5, 3.4);
        let pr = s.received_power(NodeId::Base, NodeId::Primary(0)).unwrap();
        assert!((pr - 0.5 * 2f64.powf(-3.4)).abs() < 1e-15);
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(shannon_capacity(1.0, 1.0, 1.0), 1.0);
        assert_eq!(shannon_capacity(1.0, 3.0, 1.0), 2.0);
        assert_eq!(shannon_capacity(0.0, 3.0, 1.0), 0.0);
    }

    #[test]
    fn zero_distance_rejected() {
        let err = Scenario::new(
            10.0,
            Point::new(1.0, 1.0),
            vec![Point::new(1.0, 1.0)],
            vec![],
            0.5,
            PowerSpec::Watts(1.0),
            3.4,
            FadingMode::Off,
            vec![1.0],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, ScenarioError::ZeroDistance(..)));
    }

    #[test]
    fn demand_above_direct_capacity_rejected() {
        let err = Scenario::new(
            10.0,
            Point::new(0.0, 0.0),
            vec![Point::new(1.0, 0.0)],
            vec![],
            1.0,
            PowerSpec::Watts(1.0),
            3.4,
            FadingMode::Off,
            vec![1.5],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, ScenarioError::DemandExceedsCapacity { .. }));
    }

    #[test]
    fn generated_default_setup() {
        let s = generate_scenario(3, 10, 10.0, 4, &ScenarioParams::default()).unwrap();
        assert_eq!(s.layout().len(), 14);
        assert_eq!(s.base, Point::new(5.0, 5.0));
        for p in s.primaries.iter().chain(&s.secondaries) {
            assert!((0.0..=10.0).contains(&p.x) && (0.0..=10.0).contains(&p.y));
        }
        let net = s.network().unwrap();
        for p in 0..3 {
            let direct = net.table().get(NodeId::Base, NodeId::Primary(p)).unwrap();
            assert_eq!(net.demand(p), direct);
        }
        assert_eq!(
            generate_scenario(3, 10, 10.0, 4, &ScenarioParams::default()).unwrap(),
            s
        );
    }

    #[test]
    fn generation_rejects_bad_params() {
        let params = ScenarioParams::default();
        assert!(generate_scenario(0, 3, 10.0, 0, &params).is_err());
        assert!(generate_scenario(1, 3, 0.0, 0, &params).is_err());
        let bad_power = ScenarioParams {
            tx_power_watts: -1.0,
            ..params
        };
        assert!(matches!(
            generate_scenario(1, 3, 10.0, 0, &bad_power),
            Err(ScenarioError::InvalidParams(_))
        ));
    }

    #[test]
    fn degenerate_scenario_without_secondaries() {
        let s = generate_scenario(1, 0, 10.0, 9, &ScenarioParams::default()).unwrap();
        let table = s.capacity_table().unwrap();
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn table_for_one_pair_has_four_entries() {
        let s = generate_scenario(1, 1, 10.0, 2, &ScenarioParams::default()).unwrap();
        let table = s.capacity_table().unwrap();
        // B->p, B->s, s->p, and nothing from s to itself.
        assert_eq!(table.len(), 3);
        assert!(table.contains(NodeId::Base, NodeId::Secondary(0)));
        assert!(table.contains(NodeId::Base, NodeId::Primary(0)));
        assert!(table.contains(NodeId::Secondary(0), NodeId::Primary(0)));
        assert!(!table.contains(NodeId::Secondary(0), NodeId::Secondary(0)));
    }

    #[test]
    fn fading_off_is_all_ones() {
        let layout = NodeLayout {
            num_pu: 2,
            num_su: 3,
        };
        let g = FadingGains::new(layout, FadingMode::Off);
        for a in layout.nodes() {
            for b in layout.nodes() {
                assert_eq!(g.get(a, b).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn fading_is_seeded_and_unit_mean() {
        assert_eq!(sample_fading(11, 50), sample_fading(11, 50));
        assert_ne!(sample_fading(11, 50), sample_fading(12, 50));
        let draws = sample_fading(3, 100_000);
        assert!(draws.iter().all(|&g| g >= 0.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn node_ids_parse() {
        for n in [NodeId::Base, NodeId::Primary(2), NodeId::Secondary(13)] {
            assert_eq!(n.to_string().parse::<NodeId>().unwrap(), n);
        }
        assert!("x1".parse::<NodeId>().is_err());
        assert!("s".parse::<NodeId>().is_err());
    }

    #[test]
    fn network_requires_direct_links() {
        let layout = NodeLayout {
            num_pu: 1,
            num_su: 0,
        };
        let table = CapacityTable::new(layout);
        assert!(matches!(
            Network::new(table, vec![1.0]),
            Err(ScenarioError::MissingLink(..))
        ));
    }
}
