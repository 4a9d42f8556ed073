//! Fork-decision MDP: when does a miner holding a private chain prefer to
//! fork for an MEV payout over mining honestly?
//!
//! States are `(l_a, l_h, fork)`. Every action is followed by one mining
//! round: the adversary finds the next block with probability `alpha`, the
//! honest network with `(1 - alpha)(1 - omega)(1 - r_s)`, and otherwise the
//! round produces a stale block and the state is kept. Each round costs
//! `c_m` block rewards. Rewards are in block-reward units scaled by
//! `block_reward`.
//!
//! Solved under the average-reward criterion with relative value iteration.

use num_traits::Float;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP spec: {0}")]
    InvalidSpec(String),
    #[error("value iteration did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("no threshold below {0} block rewards")]
    NoThreshold(f64),
}

pub const MAX_ITER: usize = 1_000_000;
/// Self-loop weight of the aperiodicity transform. It leaves every
/// stationary distribution, hence every gain, unchanged.
const TAU: f64 = 0.5;
/// Gain margin by which forking must beat honest mining.
pub const BEAT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MdpSpec<T> {
    pub alpha: T,
    pub gamma: T,
    pub r_s: T,
    pub k: usize,
    pub omega: T,
    /// Mining cost per round, block-reward fraction.
    pub c_m: T,
    pub cutoff: usize,
    pub mev_value: T,
    pub block_reward: T,
}

impl<T: Float> MdpSpec<T> {
    /// Defaults: `gamma = omega = 0`, `k = 1`, `c_m = alpha`, cutoff 20, no MEV.
    pub fn new(alpha: T, r_s: T) -> Self {
        MdpSpec {
            alpha,
            gamma: T::zero(),
            r_s,
            k: 1,
            omega: T::zero(),
            c_m: alpha,
            cutoff: 20,
            mev_value: T::zero(),
            block_reward: T::one(),
        }
    }

    pub fn with_mev(self, mev_value: T) -> Self {
        MdpSpec { mev_value, ..self }
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        let (z, one) = (T::zero(), T::one());
        let half = T::from(0.5).unwrap();
        let unit = |v: T| v >= z && v <= one;
        let bad = |m: &str| Err(MdpError::InvalidSpec(m.into()));
        if !(self.alpha > z && self.alpha < half) {
            return bad("alpha must lie in (0, 0.5)");
        }
        if !unit(self.gamma) || !unit(self.omega) {
            return bad("gamma and omega must lie in [0, 1]");
        }
        if !(self.r_s >= z && self.r_s < one) {
            return bad("r_s must lie in [0, 1)");
        }
        if self.cutoff < self.k + 1 {
            return bad("cutoff must be at least k + 1");
        }
        if !(self.c_m >= z) || !(self.mev_value >= z) || !self.mev_value.is_finite() || !(self.block_reward > z) {
            return bad("c_m, mev_value and block_reward must be non-negative and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fork {
    /// The last block was the adversary's.
    Irrelevant,
    /// The last block was honest; a match is possible.
    Relevant,
    /// The adversary has published a competing chain of equal length.
    Active,
}

const FORKS: [Fork; 3] = [Fork::Irrelevant, Fork::Relevant, Fork::Active];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Adopt,
    Override,
    Match,
    Wait,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MdpState {
    pub l_a: usize,
    pub l_h: usize,
    pub fork: Fork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Choice<T> {
    pub action: Move,
    /// Expected immediate reward, including the round's cost.
    pub reward: T,
    pub next: Vec<(usize, T)>,
}

#[derive(Debug, Clone)]
pub struct MdpTables<T> {
    pub spec: MdpSpec<T>,
    pub states: Vec<MdpState>,
    /// Available choices per state, in [`Move`] order.
    pub choices: Vec<Vec<Choice<T>>>,
    pub start: usize,
}

impl<T: Float> MdpTables<T> {
    pub fn index(&self, l_a: usize, l_h: usize, fork: Fork) -> usize {
        index(self.spec.cutoff, l_a, l_h, fork)
    }

    pub fn choice(&self, s: usize, m: Move) -> Option<&Choice<T>> {
        self.choices[s].iter().find(|c| c.action == m)
    }
}

fn index(cutoff: usize, a: usize, h: usize, f: Fork) -> usize {
    (a * (cutoff + 1) + h) * 3 + f as usize
}

pub fn build_mdp<T: Float>(spec: &MdpSpec<T>) -> Result<MdpTables<T>, MdpError> {
    spec.validate()?;
    let one = T::one();
    let n = spec.cutoff;
    let r = spec.block_reward;
    let p_a = spec.alpha;
    let p_h = (one - spec.alpha) * (one - spec.omega) * (one - spec.r_s);
    let p_s = one - p_a - p_h;
    let cost = spec.c_m * r;
    let t = |x: usize| T::from(x).unwrap();

    // one mining round out of the post-action state (a, h, f)
    let round = |a: usize, h: usize, f: Fork| -> Option<(T, Vec<(usize, T)>)> {
        if a + 1 > n || h + 1 > n {
            return None;
        }
        let mut next = Vec::with_capacity(4);
        let mut bonus = T::zero();
        let adv_fork = if f == Fork::Active { Fork::Active } else { Fork::Irrelevant };
        next.push((index(n, a + 1, h, adv_fork), p_a));
        if f == Fork::Active && a >= h && spec.gamma > T::zero() {
            // honest miners building on the adversary's published prefix
            let g = spec.gamma * p_h;
            next.push((index(n, a - h, 1, Fork::Relevant), g));
            bonus = g * t(h) * r;
            next.push((index(n, a, h + 1, Fork::Relevant), p_h - g));
        } else {
            next.push((index(n, a, h + 1, Fork::Relevant), p_h));
        }
        next.push((index(n, a, h, f), p_s));
        next.retain(|(_, p)| *p > T::zero());
        Some((bonus, next))
    };

    let mut states = Vec::with_capacity((n + 1) * (n + 1) * 3);
    let mut choices = Vec::with_capacity(states.capacity());
    for a in 0..=n {
        for h in 0..=n {
            for f in FORKS {
                states.push(MdpState { l_a: a, l_h: h, fork: f });
                let mut cs = Vec::new();
                let mut add = |action, gain: T, post: Option<(T, Vec<(usize, T)>)>| {
                    if let Some((bonus, next)) = post {
                        cs.push(Choice { action, reward: gain + bonus - cost, next });
                    }
                };
                add(Move::Adopt, T::zero(), round(0, 0, Fork::Irrelevant));
                if a > h {
                    add(Move::Override, t(h + 1) * r, round(a - h - 1, 0, Fork::Irrelevant));
                }
                if f == Fork::Relevant && h >= 1 && a >= h {
                    add(Move::Match, T::zero(), round(a, h, Fork::Active));
                }
                add(Move::Wait, T::zero(), round(a, h, f));
                if a > h && a > spec.k {
                    add(Move::Exit, spec.mev_value + t(a) * r, round(0, 0, Fork::Irrelevant));
                }
                choices.push(cs);
            }
        }
    }
    Ok(MdpTables { spec: *spec, states, choices, start: index(n, 0, 0, Fork::Irrelevant) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution<T> {
    pub policy: Vec<Move>,
    /// Long-run reward per mining round.
    pub gain: T,
    pub iterations: usize,
}

/// Relative value iteration. With `fixed` set, evaluates that choice per state.
fn rvi<T: Float>(tables: &MdpTables<T>, eps: T, fixed: Option<&[usize]>) -> Result<(Vec<usize>, T, usize), MdpError> {
    let tau = T::from(TAU).unwrap();
    let keep = T::one() - tau;
    let ns = tables.states.len();
    let mut v = vec![T::zero(); ns];
    let mut nv = vec![T::zero(); ns];
    let mut pick = vec![0usize; ns];
    for it in 1..=MAX_ITER {
        for s in 0..ns {
            let q = |c: &Choice<T>| {
                let ev = c.next.iter().fold(T::zero(), |acc, (t, p)| acc + *p * v[*t]);
                c.reward + tau * ev + keep * v[s]
            };
            match fixed {
                Some(f) => {
                    nv[s] = q(&tables.choices[s][f[s]]);
                    pick[s] = f[s];
                }
                None => {
                    let mut best = T::neg_infinity();
                    for (i, c) in tables.choices[s].iter().enumerate() {
                        let x = q(c);
                        if x > best {
                            best = x;
                            pick[s] = i;
                        }
                    }
                    nv[s] = best;
                }
            }
        }
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for s in 0..ns {
            let d = nv[s] - v[s];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if hi - lo <= eps {
            let two = T::one() + T::one();
            return Ok((pick, (hi + lo) / two, it));
        }
        let anchor = nv[tables.start];
        for s in 0..ns {
            v[s] = nv[s] - anchor;
        }
    }
    Err(MdpError::NoConvergence(MAX_ITER))
}

pub fn solve_policy<T: Float>(tables: &MdpTables<T>, eps: T) -> Result<Solution<T>, MdpError> {
    let (pick, gain, iterations) = rvi(tables, eps, None)?;
    let policy = pick.iter().zip(&tables.choices).map(|(i, cs)| cs[*i].action).collect();
    Ok(Solution { policy, gain, iterations })
}

/// Gain of a given stationary policy. Every state must offer its move.
pub fn evaluate_policy<T: Float>(tables: &MdpTables<T>, policy: &[Move], eps: T) -> Result<T, MdpError> {
    let fixed = policy
        .iter()
        .enumerate()
        .map(|(s, m)| {
            tables.choices[s]
                .iter()
                .position(|c| c.action == *m)
                .ok_or_else(|| MdpError::InvalidSpec(format!("{m:?} unavailable in {:?}", tables.states[s])))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rvi(tables, eps, Some(&fixed))?.1)
}

/// Publish every own block at once, adopt every honest one.
pub fn honest_policy<T: Float>(tables: &MdpTables<T>) -> Vec<Move> {
    tables.states.iter().map(|s| if s.l_a > s.l_h { Move::Override } else { Move::Adopt }).collect()
}

/// Gain of honest mining: every own block is kept, every round is paid for.
pub fn honest_gain<T: Float>(spec: &MdpSpec<T>) -> T {
    (spec.alpha - spec.c_m) * spec.block_reward
}

/// Whether the optimal policy strictly beats honest mining at `mev`.
pub fn forking_pays<T: Float>(spec: &MdpSpec<T>, mev: T, eps: T) -> Result<bool, MdpError> {
    let s = spec.with_mev(mev);
    let sol = solve_policy(&build_mdp(&s)?, eps)?;
    Ok(sol.gain > honest_gain(&s) + T::from(BEAT_TOL).unwrap() * s.block_reward)
}

/// Smallest MEV (block rewards, to within `margin`) that makes forking pay.
/// Returns the upper end of the final bracket.
pub fn mev_threshold<T: Float>(spec: &MdpSpec<T>, margin: T, eps: T) -> Result<T, MdpError> {
    if !(margin > T::zero()) {
        return Err(MdpError::InvalidSpec("margin must be positive".into()));
    }
    let r = spec.block_reward;
    let (mut lo, mut hi) = (T::zero(), r);
    let cap = T::from(1u64 << 40).unwrap() * r;
    while !forking_pays(spec, hi, eps)? {
        if hi > cap {
            return Err(MdpError::NoThreshold(hi.to_f64().unwrap_or(f64::INFINITY)));
        }
        lo = hi;
        hi = hi + hi;
    }
    let two = T::one() + T::one();
    while hi - lo > margin * r {
        let mid = (lo + hi) / two;
        if forking_pays(spec, mid, eps)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow<T> {
    pub alpha: T,
    pub r_s: T,
    pub mev_v: T,
}

/// Threshold for each `alpha`, other parameters from `spec`; `c_m` follows alpha.
pub fn sweep<T: Float + Send + Sync>(
    spec: &MdpSpec<T>,
    alphas: &[T],
    margin: T,
    eps: T,
) -> Result<Vec<SweepRow<T>>, MdpError> {
    alphas
        .par_iter()
        .map(|&alpha| {
            let s = MdpSpec { alpha, c_m: alpha, ..*spec };
            Ok(SweepRow { alpha, r_s: s.r_s, mev_v: mev_threshold(&s, margin, eps)? })
        })
        .collect()
}
