//! One primary user and the secondary users relaying for it.
//!
//! Relays transmit sequentially: the base station sends during slot 0, then
//! the `k`-th relay sends during slot `k`, and every later receiver
//! accumulates the information of every earlier slot. With time fractions
//! `t` the information collected by receiver `k` is `(t^T L)_k`, where `L`
//! is the upper-triangular [`OrderedCapacityMatrix`]. The coalition rate is
//! the smallest such component.

use std::fmt;

use thiserror::Error;

use crate::scenario::{CapacityTable, NodeId, ScenarioError};
use crate::simplex::{self, SimplexError};

/// Tolerance for structural comparisons (activity, equal rates).
pub const STRUCTURAL_TOL: f64 = 1e-8;
/// Tolerance for conservation checks (time fractions summing to one).
pub const CONSERVATION_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CoalitionError {
    #[error(transparent)]
    MissingLink(#[from] ScenarioError),
    #[error("dimension mismatch: matrix of size {matrix}, vector of length {vector}")]
    DimensionMismatch { matrix: usize, vector: usize },
    #[error("diagonal entry {0} is zero")]
    SingularMatrix(usize),
    #[error("linear program failed: {0}")]
    NumericalFailure(#[from] SimplexError),
    #[error("{0} is not a member of this coalition")]
    NotMember(NodeId),
    #[error("relay {0} appears twice")]
    DuplicateRelay(NodeId),
    #[error("invalid time fractions: {0}")]
    InvalidTimes(String),
}

pub type Result<T> = std::result::Result<T, CoalitionError>;

/// Capacities of one ordered coalition. Row `a` is the transmitter of slot
/// `a` (row 0 the base station), column `b` the `b`-th receiver (the last
/// column is the primary user). Only entries with `a <= b` are defined; the
/// rest are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedCapacityMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl OrderedCapacityMatrix {
    /// Builds a matrix from its upper-triangular rows: row `a` lists the
    /// entries of columns `a..size`.
    pub fn from_upper_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut entries = vec![0.0; size * size];
        for (a, row) in rows.iter().enumerate() {
            if row.len() != size - a {
                return Err(CoalitionError::DimensionMismatch {
                    matrix: size,
                    vector: row.len(),
                });
            }
            entries[a * size + a..(a + 1) * size].copy_from_slice(row);
        }
        Ok(OrderedCapacityMatrix { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.size + col]
    }

    pub fn upper_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size)
            .map(|a| self.entries[a * self.size + a..(a + 1) * self.size].to_vec())
            .collect()
    }
}

/// The capacity matrix of `pu` served through `order`.
pub fn build_matrix(
    table: &CapacityTable,
    pu: usize,
    order: &[usize],
) -> Result<OrderedCapacityMatrix> {
    for (i, s) in order.iter().enumerate() {
        if order[..i].contains(s) {
            return Err(CoalitionError::DuplicateRelay(NodeId::Secondary(*s)));
        }
    }
    let size = order.len() + 1;
    let transmitter = |a: usize| {
        if a == 0 {
            NodeId::Base
        } else {
            NodeId::Secondary(order[a - 1])
        }
    };
    let receiver = |b: usize| {
        if b == order.len() {
            NodeId::Primary(pu)
        } else {
            NodeId::Secondary(order[b])
        }
    };
    let mut entries = vec![0.0; size * size];
    for a in 0..size {
        for b in a..size {
            entries[a * size + b] = table.get(transmitter(a), receiver(b))?;
        }
    }
    Ok(OrderedCapacityMatrix { size, entries })
}

/// A non-negative vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFractions(Vec<f64>);

impl TimeFractions {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoalitionError::InvalidTimes("empty vector".into()));
        }
        if values.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(CoalitionError::InvalidTimes(format!(
                "negative or non-finite component in {values:?}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > CONSERVATION_TOL {
            return Err(CoalitionError::InvalidTimes(format!("sum is {sum}")));
        }
        Ok(TimeFractions(values))
    }

    /// The unit vector giving all time to slot `slot`.
    pub fn unit(len: usize, slot: usize) -> Self {
        let mut v = vec![0.0; len];
        v[slot] = 1.0;
        TimeFractions(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Information accumulated by each receiver: `(t^T L)_k`.
pub fn rates(matrix: &OrderedCapacityMatrix, t: &TimeFractions) -> Result<Vec<f64>> {
    if t.len() != matrix.size() {
        return Err(CoalitionError::DimensionMismatch {
            matrix: matrix.size(),
            vector: t.len(),
        });
    }
    let t = t.as_slice();
    Ok((0..matrix.size())
        .map(|k| (0..=k).map(|j| t[j] * matrix.get(j, k)).sum())
        .collect())
}

/// The rate every receiver can decode: the minimum of [`rates`].
pub fn coalition_rate(matrix: &OrderedCapacityMatrix, t: &TimeFractions) -> Result<f64> {
    Ok(rates(matrix, t)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// The equal-rate solution of `t^T L = R 1^T`, `sum(t) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullSupport {
    /// May contain non-positive components, in which case this point is not
    /// a valid schedule.
    pub times: Vec<f64>,
    pub rate: f64,
}

impl FullSupport {
    pub fn is_positive(&self) -> bool {
        self.times.iter().all(|&t| t > 0.0)
    }

    pub fn time_fractions(&self) -> Option<TimeFractions> {
        TimeFractions::new(self.times.clone()).ok()
    }
}

/// Solves `t^T L = 1^T` column by column (forward substitution over the
/// triangular layout) and normalizes. The result is the optimal schedule
/// whenever every relay is used, which holds exactly when the returned times
/// are positive and no schedule with idle relays does better.
pub fn full_support_times(matrix: &OrderedCapacityMatrix) -> Result<FullSupport> {
    let n = matrix.size();
    let mut times = vec![0.0; n];
    for k in 0..n {
        let diag = matrix.get(k, k);
        if diag == 0.0 {
            return Err(CoalitionError::SingularMatrix(k));
        }
        let received: f64 = (0..k).map(|j| times[j] * matrix.get(j, k)).sum();
        times[k] = (1.0 - received) / diag;
    }
    let total: f64 = times.iter().sum();
    for t in &mut times {
        *t /= total;
    }
    Ok(FullSupport {
        times,
        rate: 1.0 / total,
    })
}

/// Maximizes the coalition rate over all schedules (idle relays allowed)
/// with the dense simplex.
///
/// The program `max R  s.t.  t >= 0, sum(t) = 1, R <= (t^T L)_k` is solved
/// through the rescaling `x = t / R`, i.e. `min sum(x)  s.t.  L^T x >= 1`,
/// whose dual `max sum(y)  s.t.  L y <= 1, y >= 0` starts feasible at the
/// slack basis. The optimal `x` is read off the dual multipliers.
pub fn solve_times_lp(matrix: &OrderedCapacityMatrix) -> Result<(TimeFractions, f64)> {
    let n = matrix.size();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|k| matrix.get(j, k)).collect())
        .collect();
    let cap = 10 * (n + 1) * (n + 1);
    let sol = simplex::maximize(&vec![1.0; n], &rows, &vec![1.0; n], cap)?;
    let mut x: Vec<f64> = sol.duals.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = x.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(CoalitionError::NumericalFailure(SimplexError::Unbounded));
    }
    for v in &mut x {
        *v /= total;
    }
    let times = TimeFractions(x);
    let rate = coalition_rate(matrix, &times)?;
    Ok((times, rate))
}

/// A primary user together with its relaying secondary users.
#[derive(Debug, Clone, PartialEq)]
pub struct Coalition {
    pu: usize,
    order: Vec<usize>,
    base_links: Vec<f64>,
    times: TimeFractions,
    unused: Vec<usize>,
    rate: f64,
    alpha: f64,
}

impl Coalition {
    pub fn pu(&self) -> usize {
        self.pu
    }

    /// Active relays in transmission order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Slot 0 is the base station; slot `k` the `k`-th active relay.
    pub fn times(&self) -> &TimeFractions {
        &self.times
    }

    /// Members given no transmission slot, ascending.
    pub fn unused(&self) -> &[usize] {
        &self.unused
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Fraction of the horizon spent serving the primary user.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// All members, ascending.
    pub fn members(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.order.iter().chain(&self.unused).copied().collect();
        m.sort_unstable();
        m
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty() && self.unused.is_empty()
    }

    pub fn contains(&self, su: usize) -> bool {
        self.order.contains(&su) || self.unused.contains(&su)
    }

    /// Throughput of `su` in the secondary transmission phase:
    /// `(1 - alpha) t_k L_{B,k}` for an active relay, zero for an unused one.
    pub fn member_utility(&self, su: usize) -> Result<f64> {
        if let Some(pos) = self.order.iter().position(|&s| s == su) {
            Ok((1.0 - self.alpha) * self.times.as_slice()[pos + 1] * self.base_links[pos])
        } else if self.unused.contains(&su) {
            Ok(0.0)
        } else {
            Err(CoalitionError::NotMember(NodeId::Secondary(su)))
        }
    }

    /// Sum of member utilities.
    pub fn value(&self) -> f64 {
        self.order
            .iter()
            .map(|&s| self.member_utility(s).unwrap_or(0.0))
            .fold(0.0, |acc, u| acc + u)
    }
}

/// Orders `members` into a relay chain for `pu` and allocates time.
///
/// Starting from the base station, each step computes for every remaining
/// relay the time the current transmitter needs to bring it up to the
/// information already decoded by the chain, and likewise for the primary
/// user. The relay with the smallest catch-up time is appended (lowest index
/// on ties) unless the primary user would be served sooner, in which case
/// construction stops and the remaining relays are unused. Final times are
/// the equal-rate solution of the active chain.
pub fn order_relays(
    table: &CapacityTable,
    pu: usize,
    members: &[usize],
    demand: f64,
) -> Result<Coalition> {
    let pu_node = NodeId::Primary(pu);
    let mut remaining: Vec<usize> = members.to_vec();
    remaining.sort_unstable();
    if let Some(w) = remaining.windows(2).find(|w| w[0] == w[1]) {
        return Err(CoalitionError::DuplicateRelay(NodeId::Secondary(w[0])));
    }
    // Information still missing at each remaining relay / the primary user,
    // measured against a message of unit size.
    let mut missing = vec![1.0; remaining.len()];
    let mut missing_pu = 1.0;
    let mut tx = NodeId::Base;
    let mut order = Vec::new();
    let mut unused = Vec::new();

    loop {
        let to_pu = table.get(tx, pu_node)?;
        let catch_up_pu = missing_pu / to_pu;
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in remaining.iter().enumerate() {
            let t = missing[i] / table.get(tx, NodeId::Secondary(s))?;
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((i, t));
            }
        }
        let Some((i, slot)) = best.filter(|&(_, t)| t < catch_up_pu) else {
            unused.append(&mut remaining);
            break;
        };
        if slot <= CONSERVATION_TOL {
            // Already decoded for free: forwarding from it would leave the
            // current transmitter an empty slot.
            unused.push(remaining.remove(i));
            missing.remove(i);
            continue;
        }
        for (k, &s) in remaining.iter().enumerate() {
            missing[k] = (missing[k] - slot * table.get(tx, NodeId::Secondary(s))?).max(0.0);
        }
        missing_pu -= slot * to_pu;
        let next = remaining.remove(i);
        missing.remove(i);
        order.push(next);
        tx = NodeId::Secondary(next);
    }
    unused.sort_unstable();

    let matrix = build_matrix(table, pu, &order)?;
    let solution = full_support_times(&matrix)?;
    let times = TimeFractions(solution.times.iter().map(|&t| t.max(0.0)).collect());
    let base_links = order
        .iter()
        .map(|&s| table.get(NodeId::Base, NodeId::Secondary(s)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let rate = solution.rate;
    Ok(Coalition {
        pu,
        order,
        base_links,
        times,
        unused,
        rate,
        alpha: (demand / rate).min(1.0),
    })
}

/// Plain-text report of one coalition: one row per receiver with its
/// position, node, the time of the slot it transmits in and the cumulative
/// information it holds at the end of the cooperation phase.
pub struct CoalitionReport<'a> {
    pub coalition: &'a Coalition,
    pub matrix: &'a OrderedCapacityMatrix,
}

impl fmt::Display for CoalitionReport<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.coalition;
        let t = c.times().as_slice();
        let received = rates(self.matrix, c.times()).map_err(|_| fmt::Error)?;
        writeln!(
            f,
            "{:>8}  {:>6}  {:>14}  {:>16}",
            "position", "node", "t_k", "cumulative_rate"
        )?;
        writeln!(f, "{:>8}  {:>6}  {:>14.10}  {:>16}", 0, "B", t[0], "-")?;
        for (k, &s) in c.order().iter().enumerate() {
            let node = NodeId::Secondary(s).to_string();
            writeln!(
                f,
                "{:>8}  {:>6}  {:>14.10}  {:>16.10}",
                k + 1,
                node,
                t[k + 1],
                received[k]
            )?;
        }
        let node = NodeId::Primary(c.pu()).to_string();
        writeln!(
            f,
            "{:>8}  {:>6}  {:>14}  {:>16.10}",
            c.order().len() + 1,
            node,
            "-",
            received[c.order().len()]
        )?;
        writeln!(f, "rate R = {:.12}", c.rate())?;
        writeln!(f, "alpha  = {:.12}", c.alpha())?;
        let unused: Vec<String> = c
            .unused()
            .iter()
            .map(|&s| NodeId::Secondary(s).to_string())
            .collect();
        writeln!(f, "unused = [{}]", unused.join(", "))?;
        write!(f, "value  = {:.12}", c.value())
    }
}
