//! Coalition structures over all primary users.
//!
//! Each secondary user either assists one primary user or stays out. A
//! coalition's value depends only on its own primary user and member set, so
//! moving one secondary user changes at most two coalitions. Advertising the
//! repercussion utility (own utility plus the externality imposed on
//! coalition mates) turns social welfare into an exact potential.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coalition::{order_relays, Coalition, CoalitionError};
use crate::scenario::{Network, NodeId, ScenarioError};

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Coalition(#[from] CoalitionError),
    #[error("secondary user s{0} does not exist")]
    UnknownSecondary(usize),
    #[error("primary user p{0} does not exist")]
    UnknownPrimary(usize),
    #[error("assignment has {got} entries, expected {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("cannot parse action `{0}`")]
    BadAction(String),
    #[error("malformed structure file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GameError>;

/// What a secondary user does: relay for a primary user, or nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Assist(usize),
    Idle,
}

impl Action {
    /// Every action available with `num_pu` primaries: `Assist(0..num_pu)`
    /// followed by `Idle`.
    pub fn all(num_pu: usize) -> impl Iterator<Item = Action> {
        (0..num_pu)
            .map(Action::Assist)
            .chain(std::iter::once(Action::Idle))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Assist(p) => write!(f, "{}", NodeId::Primary(*p)),
            Action::Idle => write!(f, "none"),
        }
    }
}

impl FromStr for Action {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Action::Idle),
            other => match other.parse::<NodeId>() {
                Ok(NodeId::Primary(p)) => Ok(Action::Assist(p)),
                _ => Err(GameError::BadAction(s.to_string())),
            },
        }
    }
}

/// Coalition of `pu` formed by `members` in `net`.
pub fn form_coalition(net: &Network, pu: usize, members: &[usize]) -> Result<Coalition> {
    if pu >= net.num_pu() {
        return Err(GameError::UnknownPrimary(pu));
    }
    Ok(order_relays(net.table(), pu, members, net.demand(pu))?)
}

/// Assignment of every secondary user plus the coalition it induces for
/// every primary user.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionStructure {
    assignment: Vec<Action>,
    coalitions: Vec<Coalition>,
}

impl CoalitionStructure {
    pub fn new(net: &Network, assignment: Vec<Action>) -> Result<Self> {
        if assignment.len() != net.num_su() {
            return Err(GameError::AssignmentLength {
                expected: net.num_su(),
                got: assignment.len(),
            });
        }
        for a in &assignment {
            check_action(net, *a)?;
        }
        let coalitions = (0..net.num_pu())
            .map(|p| form_coalition(net, p, &members_of(&assignment, p)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CoalitionStructure {
            assignment,
            coalitions,
        })
    }

    /// Everybody idle.
    pub fn empty(net: &Network) -> Result<Self> {
        Self::new(net, vec![Action::Idle; net.num_su()])
    }

    pub fn assignment(&self) -> &[Action] {
        &self.assignment
    }

    pub fn action(&self, su: usize) -> Action {
        self.assignment[su]
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn coalition(&self, pu: usize) -> &Coalition {
        &self.coalitions[pu]
    }

    /// Sum of coalition values.
    pub fn welfare(&self) -> f64 {
        self.coalitions
            .iter()
            .map(Coalition::value)
            .fold(0.0, |acc, v| acc + v)
    }

    /// Utility of `su` in its current coalition (zero when idle).
    pub fn utility(&self, su: usize) -> f64 {
        match self.assignment[su] {
            Action::Assist(p) => self.coalitions[p].member_utility(su).unwrap_or(0.0),
            Action::Idle => 0.0,
        }
    }

    /// The structure with `su` switched to `target`. Only the coalitions it
    /// leaves and joins are recomputed.
    pub fn apply_move(&self, net: &Network, su: usize, target: Action) -> Result<Self> {
        check_su(net, su)?;
        check_action(net, target)?;
        let source = self.assignment[su];
        if source == target {
            return Ok(self.clone());
        }
        let mut next = self.clone();
        next.assignment[su] = target;
        for a in [source, target] {
            if let Action::Assist(p) = a {
                next.coalitions[p] = form_coalition(net, p, &members_of(&next.assignment, p))?;
            }
        }
        Ok(next)
    }

    /// The utility `su` advertises for `target`: its own utility in the
    /// target coalition (joined by `su`) minus the utility its presence takes
    /// away from the other members. Zero for `Idle`.
    pub fn repercussion_utility(&self, net: &Network, su: usize, target: Action) -> Result<f64> {
        check_su(net, su)?;
        check_action(net, target)?;
        let Action::Assist(p) = target else {
            return Ok(0.0);
        };
        let mut with: Vec<usize> = self.coalitions[p].members();
        with.retain(|&s| s != su);
        let without = form_coalition(net, p, &with)?;
        with.push(su);
        let joined = form_coalition(net, p, &with)?;

        let own = joined.member_utility(su)?;
        let mut externality = 0.0;
        for &j in with.iter().filter(|&&j| j != su) {
            externality += without.member_utility(j)? - joined.member_utility(j)?;
        }
        Ok(own - externality)
    }

    /// True when no secondary user can raise its repercussion utility by
    /// more than `tol` with a unilateral move.
    pub fn is_nash_stable(&self, net: &Network, tol: f64) -> Result<bool> {
        for su in 0..net.num_su() {
            let current = self.repercussion_utility(net, su, self.assignment[su])?;
            for a in Action::all(net.num_pu()) {
                if self.repercussion_utility(net, su, a)? > current + tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn report(&self) -> StructureReport {
        StructureReport {
            welfare: self.welfare(),
            assignment: self.assignment.iter().map(ToString::to_string).collect(),
            coalitions: self
                .coalitions
                .iter()
                .map(|c| CoalitionRecord {
                    pu: NodeId::Primary(c.pu()).to_string(),
                    order: c
                        .order()
                        .iter()
                        .map(|&s| NodeId::Secondary(s).to_string())
                        .collect(),
                    unused: c
                        .unused()
                        .iter()
                        .map(|&s| NodeId::Secondary(s).to_string())
                        .collect(),
                    times: c.times().as_slice().to_vec(),
                    rate: c.rate(),
                    alpha: c.alpha(),
                    value: c.value(),
                })
                .collect(),
        }
    }
}

fn members_of(assignment: &[Action], pu: usize) -> Vec<usize> {
    assignment
        .iter()
        .enumerate()
        .filter(|(_, a)| **a == Action::Assist(pu))
        .map(|(s, _)| s)
        .collect()
}

fn check_su(net: &Network, su: usize) -> Result<()> {
    if su < net.num_su() {
        Ok(())
    } else {
        Err(GameError::UnknownSecondary(su))
    }
}

fn check_action(net: &Network, a: Action) -> Result<()> {
    match a {
        Action::Assist(p) if p >= net.num_pu() => Err(GameError::UnknownPrimary(p)),
        _ => Ok(()),
    }
}

/// Serialized form of a structure: one record per primary user plus the
/// total welfare. Field order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub welfare: f64,
    pub assignment: Vec<String>,
    pub coalitions: Vec<CoalitionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionRecord {
    pub pu: String,
    pub order: Vec<String>,
    pub unused: Vec<String>,
    pub times: Vec<f64>,
    pub rate: f64,
    pub alpha: f64,
    pub value: f64,
}

impl StructureReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| GameError::Format(e.to_string()))
    }

    pub fn actions(&self) -> Result<Vec<Action>> {
        self.assignment.iter().map(|a| a.parse()).collect()
    }

    /// Rebuilds the structure from the stored assignment.
    pub fn rebuild(&self, net: &Network) -> Result<CoalitionStructure> {
        CoalitionStructure::new(net, self.actions()?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| GameError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GameError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

impl From<ScenarioError> for GameError {
    fn from(e: ScenarioError) -> Self {
        GameError::Coalition(CoalitionError::MissingLink(e))
    }
}
