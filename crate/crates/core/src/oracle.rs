//! Exhaustive ground truth for small instances.
//!
//! Every enumeration runs in a fixed lexicographic order and keeps the first
//! strict maximizer, so results and failures are reproducible by index.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::coalition::{
    build_matrix, full_support_times, solve_times_lp, CoalitionError, STRUCTURAL_TOL,
};
use crate::game::{form_coalition, Action, CoalitionStructure, GameError};
use crate::scenario::{CapacityTable, Network, NodeId, NodeLayout, ScenarioError, ScenarioFile};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration needs {needed} candidates, budget allows {allowed}")]
    BudgetExceeded { needed: String, allowed: usize },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Coalition(#[from] CoalitionError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("malformed witness: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_structures: usize,
    pub max_permutation_size: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_structures: 1_000_000,
            max_permutation_size: 7,
        }
    }
}

/// Improvement threshold when comparing candidate optima.
const TIE_TOL: f64 = 1e-12;

/// The welfare-maximizing structure over all `(num_pu + 1)^num_su`
/// assignments.
///
/// Coalition values depend only on (primary, member set), so each of the
/// `num_pu * 2^num_su` coalitions is evaluated once and assignments are
/// scored by summing table lookups. Assignments are visited with secondary
/// user 0 as the most significant digit and actions in [`Action::all`]
/// order.
pub fn brute_force_structure(
    net: &Network,
    budget: &OracleBudget,
) -> Result<(CoalitionStructure, f64)> {
    let num_su = net.num_su();
    let num_pu = net.num_pu();
    let radix = num_pu + 1;
    let total = u32::try_from(num_su)
        .ok()
        .and_then(|e| radix.checked_pow(e))
        .filter(|&n| n <= budget.max_structures)
        .ok_or_else(|| OracleError::BudgetExceeded {
            needed: format!("{radix}^{num_su}"),
            allowed: budget.max_structures,
        })?;

    let mut values = vec![vec![0.0; 1 << num_su]; num_pu];
    for (p, row) in values.iter_mut().enumerate() {
        for (mask, v) in row.iter_mut().enumerate() {
            let members: Vec<usize> = (0..num_su).filter(|s| mask >> s & 1 == 1).collect();
            *v = form_coalition(net, p, &members)?.value();
        }
    }

    let actions: Vec<Action> = Action::all(num_pu).collect();
    let mut digits = vec![0usize; num_su];
    let mut best_index = 0;
    let mut best_value = f64::NEG_INFINITY;
    let mut masks = vec![0usize; num_pu];
    for index in 0..total {
        let mut rest = index;
        for d in digits.iter_mut().rev() {
            *d = rest % radix;
            rest /= radix;
        }
        masks.iter_mut().for_each(|m| *m = 0);
        for (s, &d) in digits.iter().enumerate() {
            if d < num_pu {
                masks[d] |= 1 << s;
            }
        }
        let w: f64 = (0..num_pu).map(|p| values[p][masks[p]]).sum();
        if w > best_value + TIE_TOL {
            best_value = w;
            best_index = index;
        }
    }

    let mut rest = best_index;
    let mut assignment = vec![Action::Idle; num_su];
    for a in assignment.iter_mut().rev() {
        *a = actions[rest % radix];
        rest /= radix;
    }
    let structure = CoalitionStructure::new(net, assignment)?;
    let welfare = structure.welfare();
    Ok((structure, welfare))
}

/// Advances `v` to its next lexicographic permutation; false after the last.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v
        .iter()
        .rposition(|&x| x > v[i])
        .expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

fn check_permutation_budget(len: usize, budget: &OracleBudget) -> Result<()> {
    if len > budget.max_permutation_size {
        return Err(OracleError::BudgetExceeded {
            needed: format!("permutations of {len} relays"),
            allowed: budget.max_permutation_size,
        });
    }
    Ok(())
}

fn sorted_unique(members: &[usize]) -> Vec<usize> {
    let mut v = members.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// LP-optimal rate of `pu` served through `order`.
pub fn order_rate(table: &CapacityTable, pu: usize, order: &[usize]) -> Result<f64> {
    Ok(solve_times_lp(&build_matrix(table, pu, order)?)?.1)
}

/// The best rate over every subset of `members` and every ordering of it.
/// Subsets are visited by increasing bitmask, orderings lexicographically.
pub fn best_permutation(
    table: &CapacityTable,
    pu: usize,
    members: &[usize],
    budget: &OracleBudget,
) -> Result<(Vec<usize>, f64)> {
    let members = sorted_unique(members);
    check_permutation_budget(members.len(), budget)?;
    let mut best: (Vec<usize>, f64) = (Vec::new(), f64::NEG_INFINITY);
    for mask in 0usize..1 << members.len() {
        let mut order: Vec<usize> = members
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &s)| s)
            .collect();
        loop {
            let rate = order_rate(table, pu, &order)?;
            if rate > best.1 + TIE_TOL {
                best = (order.clone(), rate);
            }
            if !next_permutation(&mut order) {
                break;
            }
        }
    }
    Ok(best)
}

/// Orderings of the whole member set whose optimal schedule uses every
/// relay: the equal-rate times are positive and no schedule idling a relay
/// does better.
pub fn full_support_orders(
    table: &CapacityTable,
    pu: usize,
    members: &[usize],
    budget: &OracleBudget,
) -> Result<Vec<Vec<usize>>> {
    let mut order = sorted_unique(members);
    check_permutation_budget(order.len(), budget)?;
    let mut found = Vec::new();
    loop {
        let matrix = build_matrix(table, pu, &order)?;
        let fs = full_support_times(&matrix)?;
        if fs.times.iter().all(|&t| t > STRUCTURAL_TOL) {
            let (_, lp_rate) = solve_times_lp(&matrix)?;
            if fs.rate >= lp_rate - STRUCTURAL_TOL {
                found.push(order.clone());
            }
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    Ok(found)
}

/// A table for one primary user and `num_relays` secondary users with every
/// coalition link drawn uniformly from `[low, high]`.
pub fn random_capacity_table<R: Rng + ?Sized>(
    rng: &mut R,
    num_relays: usize,
    low: f64,
    high: f64,
) -> CapacityTable {
    let layout = NodeLayout {
        num_pu: 1,
        num_su: num_relays,
    };
    let mut table = CapacityTable::new(layout);
    let mut draw = |from, to| {
        table
            .set(from, to, rng.random_range(low..=high))
            .expect("positive capacity");
    };
    draw(NodeId::Base, NodeId::Primary(0));
    for s in 0..num_relays {
        draw(NodeId::Base, NodeId::Secondary(s));
        draw(NodeId::Secondary(s), NodeId::Primary(0));
        for r in (0..num_relays).filter(|&r| r != s) {
            draw(NodeId::Secondary(s), NodeId::Secondary(r));
        }
    }
    table
}

/// An instance exhibiting some property, with the orders that show it.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub property: String,
    pub pu: usize,
    pub orders: Vec<(String, Vec<usize>, f64)>,
    pub scenario: ScenarioFile,
}

impl Witness {
    pub fn to_toml_string(&self) -> Result<String> {
        let mut doc = toml::Table::new();
        doc.insert("property".into(), self.property.clone().into());
        doc.insert("pu".into(), NodeId::Primary(self.pu).to_string().into());
        let orders: Vec<toml::Value> = self
            .orders
            .iter()
            .map(|(label, order, rate)| {
                let mut t = toml::Table::new();
                t.insert("label".into(), label.clone().into());
                t.insert(
                    "order".into(),
                    order
                        .iter()
                        .map(|&s| toml::Value::from(NodeId::Secondary(s).to_string()))
                        .collect::<Vec<_>>()
                        .into(),
                );
                t.insert("rate".into(), (*rate).into());
                t.into()
            })
            .collect();
        doc.insert("orders".into(), orders.into());
        let scenario: toml::Table = toml::from_str(&self.scenario.to_toml_string()?)
            .map_err(|e| OracleError::Format(e.to_string()))?;
        doc.insert("scenario".into(), scenario.into());
        toml::to_string(&doc).map_err(|e| OracleError::Format(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let bad = |what: &str| OracleError::Format(what.to_string());
        let doc: toml::Table =
            toml::from_str(text).map_err(|e| OracleError::Format(e.to_string()))?;
        let property = doc
            .get("property")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("property"))?;
        let pu = match doc
            .get("pu")
            .and_then(|v| v.as_str())
            .map(str::parse::<NodeId>)
        {
            Some(Ok(NodeId::Primary(p))) => p,
            _ => return Err(bad("pu")),
        };
        let mut orders = Vec::new();
        for o in doc
            .get("orders")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("orders"))?
        {
            let label = o
                .get("label")
                .and_then(|v| v.as_str())
                .ok_or_else(|| bad("label"))?;
            let rate = o
                .get("rate")
                .and_then(|v| v.as_float())
                .ok_or_else(|| bad("rate"))?;
            let mut order = Vec::new();
            for s in o
                .get("order")
                .and_then(|v| v.as_array())
                .ok_or_else(|| bad("order"))?
            {
                match s.as_str().map(str::parse::<NodeId>) {
                    Some(Ok(NodeId::Secondary(i))) => order.push(i),
                    _ => return Err(bad("order entry")),
                }
            }
            orders.push((label.to_string(), order, rate));
        }
        let scenario = doc
            .get("scenario")
            .and_then(|v| v.as_table())
            .ok_or_else(|| bad("scenario"))?;
        let scenario = ScenarioFile::from_toml_str(
            &toml::to_string(scenario).map_err(|e| OracleError::Format(e.to_string()))?,
        )?;
        Ok(Witness {
            property: property.to_string(),
            pu,
            orders,
            scenario,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()?).map_err(|source| {
            OracleError::Scenario(ScenarioError::Io {
                path: path.display().to_string(),
                source,
            })
        })
    }
}

/// Largest best/worst LP-rate ratio over orderings of a full relay set.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderGap {
    pub ratio: f64,
    pub witness: Option<Witness>,
}

/// Samples `trials` random tables with `num_relays` relays (links uniform on
/// `[0.1, 10]`) and returns the largest ratio between the best and the worst
/// ordering of all relays, with the instance that achieves it.
pub fn find_order_gap(
    seed: u64,
    num_relays: usize,
    trials: usize,
    budget: &OracleBudget,
) -> Result<OrderGap> {
    check_permutation_budget(num_relays, budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = OrderGap {
        ratio: 1.0,
        witness: None,
    };
    for _ in 0..trials {
        let table = random_capacity_table(&mut rng, num_relays, 0.1, 10.0);
        let (best, worst) = extreme_orders(&table, 0, num_relays)?;
        let ratio = best.1 / worst.1;
        if ratio > gap.ratio || gap.witness.is_none() {
            let direct = table.get(NodeId::Base, NodeId::Primary(0))?;
            gap = OrderGap {
                ratio,
                witness: Some(Witness {
                    property: "order gap".into(),
                    pu: 0,
                    orders: vec![
                        ("best".into(), best.0, best.1),
                        ("worst".into(), worst.0, worst.1),
                    ],
                    scenario: ScenarioFile::Tabulated(Network::new(table, vec![direct])?),
                }),
            };
        }
    }
    Ok(gap)
}

type Ranked = (Vec<usize>, f64);

fn extreme_orders(table: &CapacityTable, pu: usize, num_relays: usize) -> Result<(Ranked, Ranked)> {
    let mut order: Vec<usize> = (0..num_relays).collect();
    let mut best: Ranked = (order.clone(), f64::NEG_INFINITY);
    let mut worst: Ranked = (order.clone(), f64::INFINITY);
    loop {
        let rate = order_rate(table, pu, &order)?;
        if rate > best.1 + TIE_TOL {
            best = (order.clone(), rate);
        }
        if rate < worst.1 - TIE_TOL {
            worst = (order.clone(), rate);
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    Ok((best, worst))
}
