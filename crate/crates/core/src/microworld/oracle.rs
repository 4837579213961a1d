//! Exact dynamic-programming oracle.

use super::config::PersonaName;
use super::world::{Hidden, World};
use crate::dialogue::Domain;
use crate::vocab::AgentAction;
use rayon::prelude::*;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("value iteration did not converge within {iters} sweeps (last max update {residual:e})")]
    NotConverged { iters: usize, residual: f64 },
    #[error("discount must lie in [0, 1] (got {0})")]
    Discount(f64),
    #[error("no solution for persona {0} with initial intensity {1:?}")]
    Unsolved(PersonaName, Option<u8>),
}

/// One branch of a transition: `next = None` ends the episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    pub prob: f64,
    pub reward: f64,
    pub next: Option<usize>,
}

pub trait FiniteMdp {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Appends the branches of `(s, a)` to `out`.
    fn branches(&self, s: usize, a: usize, out: &mut Vec<Branch>);
}

/// Explicit transition table.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub num_actions: usize,
    /// `table[s * num_actions + a]`.
    pub table: Vec<Vec<Branch>>,
}

impl TabularMdp {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self { num_actions, table: vec![Vec::new(); num_states * num_actions] }
    }

    pub fn add(&mut self, s: usize, a: usize, prob: f64, reward: f64, next: Option<usize>) {
        self.table[s * self.num_actions + a].push(Branch { prob, reward, next });
    }

    /// A deterministic chain of `len` states with one action and reward `r`
    /// on leaving the last state.
    pub fn chain(len: usize, r: f64) -> Self {
        let mut m = Self::new(len, 1);
        for s in 0..len {
            let last = s + 1 == len;
            m.add(s, 0, 1.0, if last { r } else { 0.0 }, (!last).then_some(s + 1));
        }
        m
    }
}

impl FiniteMdp for TabularMdp {
    fn num_states(&self) -> usize {
        self.table.len() / self.num_actions
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn branches(&self, s: usize, a: usize, out: &mut Vec<Branch>) {
        out.extend_from_slice(&self.table[s * self.num_actions + a]);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueSolution {
    pub num_actions: usize,
    pub v: Vec<f64>,
    /// `q[s * num_actions + a]`.
    pub q: Vec<f64>,
    pub sweeps: usize,
}

impl ValueSolution {
    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.q_row(s))
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Gauss–Seidel value iteration until the largest update is below `tol`.
pub fn value_iteration<M: FiniteMdp + ?Sized>(
    mdp: &M,
    gamma: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ValueSolution, OracleError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(OracleError::Discount(gamma));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut buf = Vec::new();
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_iters {
        residual = 0.0;
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                buf.clear();
                mdp.branches(s, a, &mut buf);
                let val: f64 = buf.iter().map(|b| b.prob * (b.reward + b.next.map_or(0.0, |n| gamma * v[n]))).sum();
                q[s * na + a] = val;
                best = best.max(val);
            }
            residual = residual.max((best - v[s]).abs());
            v[s] = best;
        }
        if residual < tol {
            return Ok(ValueSolution { num_actions: na, v, q, sweeps: sweep });
        }
    }
    Err(OracleError::NotConverged { iters: max_iters, residual })
}

/// The micro-world as a finite-horizon MDP for one persona and start.
///
/// States are `(turn, hidden)` for turns `0..limit`, ordered latest turn
/// first so a single Gauss–Seidel sweep already propagates values back to
/// the start.
pub struct MicroMdp {
    limit: usize,
    initial_intensity: Option<u8>,
    /// `kernel[hidden * A + a]` aggregated over user responses.
    kernel: Vec<Vec<(u16, f64)>>,
    terminal: Vec<f64>,
}

impl MicroMdp {
    pub fn new(world: &World, persona: PersonaName, initial_intensity: Option<u8>) -> Self {
        let na = AgentAction::COUNT;
        let kernel = (0..Hidden::SPACE * na)
            .map(|i| {
                let h = Hidden::from_index(i / na);
                let mut acc = std::collections::BTreeMap::<u16, f64>::new();
                for o in world.outcomes(persona, &h, AgentAction::ALL[i % na]) {
                    *acc.entry(o.next.index() as u16).or_default() += o.prob;
                }
                acc.into_iter().collect()
            })
            .collect();
        let terminal =
            (0..Hidden::SPACE).map(|i| world.terminal_reward(&Hidden::from_index(i), initial_intensity)).collect();
        Self { limit: world.turn_limit(), initial_intensity, kernel, terminal }
    }

    pub fn state(&self, turn: usize, hidden: &Hidden) -> usize {
        (self.limit - 1 - turn) * Hidden::SPACE + hidden.index()
    }

    pub fn initial_intensity(&self) -> Option<u8> {
        self.initial_intensity
    }
}

impl FiniteMdp for MicroMdp {
    fn num_states(&self) -> usize {
        self.limit * Hidden::SPACE
    }
    fn num_actions(&self) -> usize {
        AgentAction::COUNT
    }
    fn branches(&self, s: usize, a: usize, out: &mut Vec<Branch>) {
        let turn = self.limit - 1 - s / Hidden::SPACE;
        let h = s % Hidden::SPACE;
        let ends = a == AgentAction::Close.index() || turn + 1 == self.limit;
        for &(n, p) in &self.kernel[h * AgentAction::COUNT + a] {
            let n = n as usize;
            out.push(if ends {
                Branch { prob: p, reward: self.terminal[n], next: None }
            } else {
                Branch { prob: p, reward: 0.0, next: Some((self.limit - 2 - turn) * Hidden::SPACE + n) }
            });
        }
    }
}

/// Optimal values for every persona (and counseling start intensity).
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub domain: Domain,
    pub gamma: f64,
    pub limit: usize,
    pub mix: [f64; 4],
    pub intensities: Vec<Option<u8>>,
    /// Indexed `[persona][intensity slot]`.
    pub solutions: Vec<Vec<ValueSolution>>,
    initial: Vec<Vec<Hidden>>,
}

impl OracleSolution {
    pub fn solve(world: &World, gamma: f64) -> Result<Self, OracleError> {
        Self::solve_with(world, gamma, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS)
    }

    pub fn solve_with(world: &World, gamma: f64, tol: f64, max_iters: usize) -> Result<Self, OracleError> {
        let intensities: Vec<Option<u8>> = match world.domain() {
            Domain::Persuasion => vec![None],
            Domain::Counseling => (1..=5).map(Some).collect(),
        };
        let jobs: Vec<(PersonaName, Option<u8>)> =
            PersonaName::ALL.iter().flat_map(|&p| intensities.iter().map(move |&i| (p, i))).collect();
        let solved: Vec<ValueSolution> = jobs
            .par_iter()
            .map(|&(p, i)| value_iteration(&MicroMdp::new(world, p, i), gamma, tol, max_iters))
            .collect::<Result<_, _>>()?;
        let k = intensities.len();
        let mut it = solved.into_iter();
        let solutions = (0..4).map(|_| it.by_ref().take(k).collect()).collect();
        let initial = PersonaName::ALL.iter().map(|&p| intensities.iter().map(|&i| world.initial_hidden(p, i)).collect()).collect();
        Ok(Self { domain: world.domain(), gamma, limit: world.turn_limit(), mix: world.mix, intensities, solutions, initial })
    }

    fn slot(&self, persona: PersonaName, initial_intensity: Option<u8>) -> Result<&ValueSolution, OracleError> {
        let i = self
            .intensities
            .iter()
            .position(|x| *x == initial_intensity)
            .ok_or(OracleError::Unsolved(persona, initial_intensity))?;
        Ok(&self.solutions[persona.index()][i])
    }

    fn state(&self, turn: usize, hidden: &Hidden) -> usize {
        (self.limit - 1 - turn) * Hidden::SPACE + hidden.index()
    }

    /// Q*(persona, start, hidden, turn, ·) for all actions.
    pub fn q(&self, persona: PersonaName, init: Option<u8>, hidden: &Hidden, turn: usize) -> Result<&[f64], OracleError> {
        Ok(self.slot(persona, init)?.q_row(self.state(turn, hidden)))
    }

    pub fn value(&self, persona: PersonaName, init: Option<u8>, hidden: &Hidden, turn: usize) -> Result<f64, OracleError> {
        Ok(self.slot(persona, init)?.v[self.state(turn, hidden)])
    }

    pub fn greedy(&self, persona: PersonaName, init: Option<u8>, hidden: &Hidden, turn: usize) -> Result<AgentAction, OracleError> {
        Ok(AgentAction::ALL[argmax(self.q(persona, init, hidden, turn)?)])
    }

    pub fn initial_value(&self, persona: PersonaName, init: Option<u8>) -> Result<f64, OracleError> {
        let i = self.intensities.iter().position(|x| *x == init).ok_or(OracleError::Unsolved(persona, init))?;
        self.value(persona, init, &self.initial[persona.index()][i], 0)
    }

    /// Expected optimal return under the persona mix and the start-intensity
    /// distribution of `world`.
    pub fn optimal_mean(&self, world: &World) -> Result<f64, OracleError> {
        let starts: Vec<Option<u8>> = match world.domain() {
            Domain::Persuasion => vec![None],
            Domain::Counseling => world.config.initial_intensity.iter().map(|&i| Some(i)).collect(),
        };
        let mut total = 0.0;
        for p in PersonaName::ALL {
            for &s in &starts {
                total += world.mix[p.index()] * self.initial_value(p, s)? / starts.len() as f64;
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microworld::behavior::BehaviorPolicy;
    use crate::microworld::config::SimConfig;
    use crate::microworld::sim::rng_from;

    #[test]
    fn chain_discounts_the_terminal_reward() {
        let sol = value_iteration(&TabularMdp::chain(3, 1.0), 0.99, DEFAULT_TOLERANCE, 100).unwrap();
        assert!((sol.v[0] - 0.99f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn zero_discount_is_myopic() {
        let mut m = TabularMdp::new(2, 2);
        m.add(0, 0, 0.5, 1.0, Some(1));
        m.add(0, 0, 0.5, 0.0, Some(1));
        m.add(0, 1, 1.0, 0.3, Some(1));
        m.add(1, 0, 1.0, 5.0, None);
        m.add(1, 1, 1.0, 0.0, None);
        let sol = value_iteration(&m, 0.0, DEFAULT_TOLERANCE, 100).unwrap();
        assert_eq!(sol.v, vec![0.5, 5.0]);
        assert_eq!(sol.greedy(0), 0);
    }

    #[test]
    fn cycles_hit_the_iteration_cap() {
        let mut m = TabularMdp::new(1, 1);
        m.add(0, 0, 1.0, 1.0, Some(0));
        assert!(matches!(value_iteration(&m, 1.0, DEFAULT_TOLERANCE, 50), Err(OracleError::NotConverged { .. })));
    }

    #[test]
    fn oracle_beats_every_script() {
        let world = World::new(SimConfig::persuasion()).unwrap();
        let oracle = OracleSolution::solve(&world, 1.0).unwrap();
        let opt = oracle.optimal_mean(&world).unwrap();
        for id in ["greeter_then_ask", "emotional_only", "logical_only", "random", "mixture"] {
            let p = BehaviorPolicy::from_id(id, 0.1).unwrap();
            let mut rng = rng_from(17);
            let n = 2000;
            let mean: f64 = (0..n).map(|i| p.rollout(&world, format!("{i}"), &mut rng).reward.unwrap()).sum::<f64>() / n as f64;
            assert!(opt >= mean, "{id}: {mean} > {opt}");
        }
    }
}
