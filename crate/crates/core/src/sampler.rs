//! Annealed Gibbs sampling over coalition structures.
//!
//! Each iteration picks a secondary user uniformly at random, evaluates its
//! repercussion utility for every action and draws the next action from the
//! Gibbs measure at the current temperature.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{Action, CoalitionStructure, GameError};
use crate::scenario::{Network, NodeId};

/// Temperature as a function of the (1-based) iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemperatureSchedule {
    /// `T(t) = 1 / ln(t + offset)`; `offset = 1` starts at `1 / ln 2`.
    LogAnneal {
        offset: f64,
    },
    Fixed(f64),
}

impl TemperatureSchedule {
    pub fn log_anneal() -> Self {
        TemperatureSchedule::LogAnneal { offset: 1.0 }
    }

    pub fn temperature(&self, iteration: usize) -> f64 {
        match *self {
            TemperatureSchedule::LogAnneal { offset } => 1.0 / (iteration as f64 + offset).ln(),
            TemperatureSchedule::Fixed(t) => t,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            TemperatureSchedule::LogAnneal { offset } => offset.is_finite() && offset > 0.0,
            TemperatureSchedule::Fixed(t) => t.is_finite() && t > 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub max_iterations: usize,
    pub schedule: TemperatureSchedule,
    pub seed: u64,
    /// Starting assignment; everybody idle when absent.
    pub initial: Option<Vec<Action>>,
}

impl SamplerConfig {
    pub fn new(max_iterations: usize, schedule: TemperatureSchedule, seed: u64) -> Self {
        SamplerConfig {
            max_iterations,
            schedule,
            seed,
            initial: None,
        }
    }
}

/// `exp(v_i / T) / sum_j exp(v_j / T)`, computed after subtracting the
/// maximum so large `v / T` cannot overflow.
pub fn gibbs_measure(values: &[f64], temperature: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values
        .iter()
        .map(|&v| ((v - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` just below one: fall back to the last candidate
    // with positive mass.
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub temperature: f64,
    /// `None` only when there are no secondary users.
    pub mover: Option<usize>,
    pub action: Option<Action>,
    /// Probabilities over `Action::all(num_pu)`.
    pub distribution: Vec<f64>,
    pub welfare: f64,
    pub best_welfare: f64,
    pub assignment: Vec<Action>,
}

/// The mover, its chosen action and the distribution it was drawn from.
pub type Move = (usize, Action, Vec<f64>);

/// One Gibbs update at temperature `temperature`.
pub fn step<R: Rng + ?Sized>(
    net: &Network,
    structure: &CoalitionStructure,
    rng: &mut R,
    temperature: f64,
) -> Result<(CoalitionStructure, Option<Move>), GameError> {
    if net.num_su() == 0 {
        return Ok((structure.clone(), None));
    }
    let mover = rng.random_range(0..net.num_su());
    let actions: Vec<Action> = Action::all(net.num_pu()).collect();
    let values = actions
        .iter()
        .map(|&a| structure.repercussion_utility(net, mover, a))
        .collect::<Result<Vec<_>, _>>()?;
    let distribution = gibbs_measure(&values, temperature);
    let action = actions[sample_index(&distribution, rng)];
    let next = structure.apply_move(net, mover, action)?;
    Ok((next, Some((mover, action, distribution))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerTrace {
    pub initial_welfare: f64,
    pub records: Vec<StepRecord>,
    /// Best structure visited (the initial one counts as iteration 0).
    pub best: CoalitionStructure,
    pub best_welfare: f64,
    pub best_iteration: usize,
}

impl SamplerTrace {
    /// First iteration whose best-so-far welfare is within `tol` of `target`.
    pub fn first_iteration_reaching(&self, target: f64, tol: f64) -> Option<usize> {
        if self.initial_welfare >= target - tol {
            return Some(0);
        }
        self.records
            .iter()
            .find(|r| r.best_welfare >= target - tol)
            .map(|r| r.iteration)
    }

    /// One row per iteration:
    /// `iteration,mover,temperature,action,welfare,best_welfare`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "iteration,mover,temperature,action,welfare,best_welfare"
        )?;
        for r in &self.records {
            let mover = r
                .mover
                .map(|s| NodeId::Secondary(s).to_string())
                .unwrap_or_default();
            let action = r.action.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                mover,
                format_sig12(r.temperature),
                action,
                format_sig12(r.welfare),
                format_sig12(r.best_welfare)
            )?;
        }
        Ok(())
    }
}

/// Runs the chain for `config.max_iterations` steps. Deterministic in
/// `(net, config)`.
pub fn run(net: &Network, config: &SamplerConfig) -> Result<SamplerTrace, GameError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = match &config.initial {
        Some(a) => CoalitionStructure::new(net, a.clone())?,
        None => CoalitionStructure::empty(net)?,
    };
    let initial_welfare = current.welfare();
    let mut best = current.clone();
    let mut best_welfare = initial_welfare;
    let mut best_iteration = 0;
    let mut records = Vec::with_capacity(config.max_iterations);

    for iteration in 1..=config.max_iterations {
        let temperature = config.schedule.temperature(iteration);
        let (next, update) = step(net, &current, &mut rng, temperature)?;
        current = next;
        let welfare = current.welfare();
        if welfare > best_welfare {
            best_welfare = welfare;
            best = current.clone();
            best_iteration = iteration;
        }
        let (mover, action, distribution) = match update {
            Some((m, a, d)) => (Some(m), Some(a), d),
            None => (None, None, Vec::new()),
        };
        records.push(StepRecord {
            iteration,
            temperature,
            mover,
            action,
            distribution,
            welfare,
            best_welfare,
            assignment: current.assignment().to_vec(),
        });
    }
    Ok(SamplerTrace {
        initial_welfare,
        records,
        best,
        best_welfare,
        best_iteration,
    })
}

/// Plain decimal with 12 significant digits (trailing zeros trimmed);
/// scientific notation outside `[1e-6, 1e12)`.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    if !(-6..12).contains(&exponent) {
        return format!("{x:.11e}");
    }
    let decimals = (11 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, DemandPolicy, ScenarioParams};

    #[test]
    fn gibbs_examples() {
        assert_eq!(gibbs_measure(&[1.0, 1.0], 0.3), vec![0.5, 0.5]);
        let t = 0.7;
        let p = gibbs_measure(&[0.0, t * 2f64.ln()], t);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
        let p = gibbs_measure(&[0.0, 1.0], 0.001);
        // e^-1000 underflows to zero; the favoured action gets all the mass.
        assert_eq!(p[1], 1.0);
        assert!(p[0] >= 0.0);
        let p = gibbs_measure(&[0.0, 2000.0], 1.0);
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn gibbs_limits() {
        let v = [0.3, 0.9, 0.9, -0.2];
        let cold = gibbs_measure(&v, 1e-6);
        assert_eq!(cold, vec![0.0, 0.5, 0.5, 0.0]);
        let hot = gibbs_measure(&v, 1e9);
        for p in hot {
            assert!((p - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn schedule_values() {
        let s = TemperatureSchedule::log_anneal();
        assert!((s.temperature(1) - 1.0 / 2f64.ln()).abs() < 1e-15);
        assert!(s.temperature(1500) > 0.0);
        assert!(s.temperature(10) < s.temperature(9));
        assert_eq!(TemperatureSchedule::Fixed(0.001).temperature(77), 0.001);
        assert!(!TemperatureSchedule::Fixed(0.0).is_valid());
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(1.0), "1");
        assert_eq!(format_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig12(20.0 / 11.0), "1.81818181818");
        assert_eq!(format_sig12(-2.5), "-2.5");
        assert_eq!(format_sig12(1234.5), "1234.5");
        assert_eq!(format_sig12(1e-9), "1.00000000000e-9");
    }

    fn net() -> Network {
        let params = ScenarioParams {
            demand: DemandPolicy::FractionOfDirect(0.5),
            ..ScenarioParams::default()
        };
        generate_scenario(2, 4, 10.0, 21, &params)
            .unwrap()
            .network()
            .unwrap()
    }

    #[test]
    fn no_secondaries_means_no_moves() {
        let params = ScenarioParams::default();
        let net = generate_scenario(2, 0, 10.0, 1, &params)
            .unwrap()
            .network()
            .unwrap();
        let trace = run(
            &net,
            &SamplerConfig::new(5, TemperatureSchedule::log_anneal(), 3),
        )
        .unwrap();
        assert_eq!(trace.records.len(), 5);
        assert!(trace
            .records
            .iter()
            .all(|r| r.mover.is_none() && r.welfare == 0.0));
        assert_eq!(trace.best_welfare, 0.0);
    }

    #[test]
    fn cold_step_picks_unique_maximizer() {
        let net = net();
        let cs = CoalitionStructure::new(
            &net,
            vec![
                Action::Assist(0),
                Action::Assist(1),
                Action::Idle,
                Action::Assist(0),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut hits = 0;
        let mut total = 0;
        for _ in 0..10_000 {
            let (_, update) = step(&net, &cs, &mut rng, 1e-6).unwrap();
            let (mover, action, _) = update.unwrap();
            let values: Vec<f64> = Action::all(2)
                .map(|a| cs.repercussion_utility(&net, mover, a).unwrap())
                .collect();
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let argmax: Vec<usize> = (0..values.len()).filter(|&i| values[i] == max).collect();
            if argmax.len() == 1
                && max
                    - values
                        .iter()
                        .copied()
                        .filter(|&v| v != max)
                        .fold(f64::NEG_INFINITY, f64::max)
                    > 1e-3
            {
                total += 1;
                if Action::all(2).nth(argmax[0]).unwrap() == action {
                    hits += 1;
                }
            }
        }
        assert!(total > 1000, "too few informative draws: {total}");
        assert!(hits as f64 / total as f64 >= 0.999);
    }

    #[test]
    fn trace_invariants() {
        let net = net();
        let config = SamplerConfig::new(300, TemperatureSchedule::log_anneal(), 8);
        let trace = run(&net, &config).unwrap();
        assert_eq!(trace, run(&net, &config).unwrap());
        let mut best = trace.initial_welfare;
        for r in &trace.records {
            assert!(r.best_welfare >= best);
            best = r.best_welfare;
            let rebuilt = CoalitionStructure::new(&net, r.assignment.clone()).unwrap();
            assert!((rebuilt.welfare() - r.welfare).abs() < 1e-12);
            assert!((r.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(trace.best_welfare, best);
        assert!((trace.best.welfare() - trace.best_welfare).abs() < 1e-15);
    }

    #[test]
    fn csv_has_one_row_per_iteration() {
        let net = net();
        let trace = run(
            &net,
            &SamplerConfig::new(7, TemperatureSchedule::Fixed(0.001), 1),
        )
        .unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "iteration,mover,temperature,action,welfare,best_welfare"
        );
        assert_eq!(lines.len(), 8);
        assert!(lines[1].starts_with("1,s"));
        assert!(lines[1].contains(",0.001,"));
    }
}
