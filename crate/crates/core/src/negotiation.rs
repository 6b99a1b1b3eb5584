//! Broadcast proposal/evaluation protocol and commitment masking.
//!
//! Every region proposes one mitigation level and evaluates every proposal,
//! its own included. A region commits to the highest proposal it accepted and
//! the commitment is enforced by forbidding all lower levels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::types::{ActionDimension, MAX_LEVEL, N_LEVELS};

/// Which action(s) the commitment constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegotiatedDimension {
    Savings,
    #[default]
    Mitigation,
    Both,
}

impl NegotiatedDimension {
    pub fn covers(self, dim: ActionDimension) -> bool {
        matches!(
            (self, dim),
            (
                NegotiatedDimension::Savings | NegotiatedDimension::Both,
                ActionDimension::Savings
            ) | (
                NegotiatedDimension::Mitigation | NegotiatedDimension::Both,
                ActionDimension::Mitigation
            )
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegotiationConfig {
    pub dimension: NegotiatedDimension,
    /// When false, commitments are still computed and recorded but actions are unconstrained.
    pub enforce_masks: bool,
    /// Probability that a region accepts any given proposal.
    pub accept_probability: f64,
}

impl Default for NegotiationConfig {
    fn default() -> Self {
        Self {
            dimension: NegotiatedDimension::Mitigation,
            enforce_masks: true,
            accept_probability: 1.0,
        }
    }
}

impl NegotiationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.accept_probability) {
            return Err(SimError::config(
                "negotiation.accept_probability",
                format!("must lie in [0, 1], got {}", self.accept_probability),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposer: usize,
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub evaluator: usize,
    /// `accept[j]` is this region's verdict on region `j`'s proposal.
    pub accept: Vec<bool>,
}

/// Permitted levels per action dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask {
    allowed: [[bool; N_LEVELS]; 5],
}

impl Default for ActionMask {
    fn default() -> Self {
        Self::full()
    }
}

impl ActionMask {
    pub fn full() -> Self {
        Self {
            allowed: [[true; N_LEVELS]; 5],
        }
    }

    /// Builds a mask from explicit per-dimension level sets; every dimension
    /// must keep at least one level.
    pub fn from_levels(allowed: [[bool; N_LEVELS]; 5]) -> Result<Self> {
        let mask = Self { allowed };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        for dim in ActionDimension::ALL {
            if !self.allowed[dim.index()].iter().any(|a| *a) {
                return Err(SimError::Protocol(format!("mask forbids every {dim} level")));
            }
        }
        Ok(())
    }

    pub fn levels(&self, dim: ActionDimension) -> &[bool; N_LEVELS] {
        &self.allowed[dim.index()]
    }

    pub fn permits(&self, dim: ActionDimension, level: u8) -> bool {
        level <= MAX_LEVEL && self.allowed[dim.index()][level as usize]
    }

    pub fn permitted(&self, dim: ActionDimension) -> impl Iterator<Item = u8> + '_ {
        self.allowed[dim.index()]
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(l, _)| l as u8)
    }

    /// Lowest permitted level in `dim`.
    pub fn floor(&self, dim: ActionDimension) -> Option<u8> {
        self.permitted(dim).next()
    }

    /// The permitted level closest to `level`, preferring the smallest one at or above it.
    pub fn snap(&self, dim: ActionDimension, level: u8) -> Result<u8> {
        let mut below = None;
        for l in self.permitted(dim) {
            if l >= level {
                return Ok(l);
            }
            below = Some(l);
        }
        below.ok_or_else(|| SimError::Protocol(format!("mask forbids every {dim} level")))
    }

    pub fn is_full(&self) -> bool {
        self.allowed.iter().flatten().all(|a| *a)
    }
}

/// Highest accepted proposal per region; zero when nothing was accepted.
pub fn commitments(proposals: &[Proposal], evaluations: &[Evaluation]) -> Result<Vec<u8>> {
    let n = proposals.len();
    if evaluations.len() != n {
        return Err(SimError::Protocol(format!(
            "{n} proposals but {} evaluations",
            evaluations.len()
        )));
    }
    evaluations
        .iter()
        .map(|e| {
            if e.accept.len() != n {
                return Err(SimError::Protocol(format!(
                    "evaluation by region {} covers {} proposals, expected {n}",
                    e.evaluator,
                    e.accept.len()
                )));
            }
            let committed = proposals
                .iter()
                .zip(&e.accept)
                .filter(|(_, accepted)| **accepted)
                .map(|(p, _)| p.level)
                .max()
                .unwrap_or(0);
            if committed > MAX_LEVEL {
                return Err(SimError::Protocol(format!("proposal level {committed} outside 0..=9")));
            }
            Ok(committed)
        })
        .collect()
}

/// Forbids every level below `committed` in the negotiated dimension(s).
pub fn build_mask(committed: u8, dimension: NegotiatedDimension) -> ActionMask {
    let mut mask = ActionMask::full();
    for dim in ActionDimension::ALL.into_iter().filter(|d| dimension.covers(*d)) {
        for (level, allowed) in mask.allowed[dim.index()].iter_mut().enumerate() {
            *allowed = level >= committed as usize;
        }
    }
    mask
}

/// Uniform draw over the levels a mask permits in one dimension.
pub fn masked_sample<R: Rng + ?Sized>(mask: &ActionMask, dim: ActionDimension, rng: &mut R) -> Result<u8> {
    let count = mask.permitted(dim).count();
    if count == 0 {
        return Err(SimError::Protocol(format!("mask forbids every {dim} level")));
    }
    let k = rng.gen_range(0..count);
    Ok(mask.permitted(dim).nth(k).expect("k < count"))
}

/// Outcome of one propose/evaluate round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationRound {
    pub proposals: Vec<Proposal>,
    pub evaluations: Vec<Evaluation>,
    pub commitments: Vec<u8>,
    pub masks: Vec<ActionMask>,
}

/// Runs one round with uniformly random proposals and independent
/// acceptances at `config.accept_probability`.
pub fn negotiate<R: Rng + ?Sized>(n: usize, config: &NegotiationConfig, rng: &mut R) -> Result<NegotiationRound> {
    let proposals: Vec<Proposal> = (0..n)
        .map(|proposer| Proposal {
            proposer,
            level: rng.gen_range(0..=MAX_LEVEL),
        })
        .collect();
    let evaluations: Vec<Evaluation> = (0..n)
        .map(|evaluator| Evaluation {
            evaluator,
            accept: (0..n)
                .map(|_| config.accept_probability >= 1.0 || rng.gen_bool(config.accept_probability))
                .collect(),
        })
        .collect();
    let commitments = commitments(&proposals, &evaluations)?;
    let masks = commitments
        .iter()
        .map(|&c| {
            if config.enforce_masks {
                build_mask(c, config.dimension)
            } else {
                ActionMask::full()
            }
        })
        .collect();
    Ok(NegotiationRound {
        proposals,
        evaluations,
        commitments,
        masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn proposals(levels: &[u8]) -> Vec<Proposal> {
        levels
            .iter()
            .enumerate()
            .map(|(proposer, &level)| Proposal { proposer, level })
            .collect()
    }

    fn evals(rows: &[Vec<bool>]) -> Vec<Evaluation> {
        rows.iter()
            .enumerate()
            .map(|(evaluator, accept)| Evaluation {
                evaluator,
                accept: accept.clone(),
            })
            .collect()
    }

    #[test]
    fn commitment_examples() {
        let p = proposals(&[3, 9, 5]);
        let none = vec![false; 3];
        let c = commitments(&p, &evals(&[none.clone(), none.clone(), none])).unwrap();
        assert_eq!(c, vec![0, 0, 0]);

        let c = commitments(
            &p,
            &evals(&[vec![false, true, true], vec![false; 3], vec![false, false, true]]),
        )
        .unwrap();
        assert_eq!(c, vec![9, 0, 5]);
    }

    #[test]
    fn commitment_length_mismatch() {
        let p = proposals(&[3, 9]);
        assert!(commitments(&p, &evals(&[vec![true, true]])).is_err());
        assert!(commitments(&p, &evals(&[vec![true], vec![true, false]])).is_err());
    }

    #[test]
    fn mask_examples() {
        let m = build_mask(7, NegotiatedDimension::Mitigation);
        assert_eq!(
            m.permitted(ActionDimension::Mitigation).collect::<Vec<_>>(),
            vec![7, 8, 9]
        );
        assert_eq!(m.permitted(ActionDimension::Savings).count(), 10);
        assert!(build_mask(0, NegotiatedDimension::Both).is_full());
        let m = build_mask(9, NegotiatedDimension::Both);
        assert_eq!(m.permitted(ActionDimension::Mitigation).collect::<Vec<_>>(), vec![9]);
        assert_eq!(m.permitted(ActionDimension::Savings).collect::<Vec<_>>(), vec![9]);
        assert_eq!(m.permitted(ActionDimension::Tariff).count(), 10);
    }

    #[test]
    fn sample_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let only_nine = build_mask(9, NegotiatedDimension::Mitigation);
        for _ in 0..20 {
            assert_eq!(
                masked_sample(&only_nine, ActionDimension::Mitigation, &mut rng).unwrap(),
                9
            );
        }
        let full = ActionMask::full();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| masked_sample(&full, ActionDimension::Savings, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn sample_frequencies() {
        let mask = build_mask(7, NegotiatedDimension::Mitigation);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 10];
        let draws = 30_000;
        for _ in 0..draws {
            counts[masked_sample(&mask, ActionDimension::Mitigation, &mut rng).unwrap() as usize] += 1;
        }
        assert_eq!(counts[..7].iter().sum::<usize>(), 0);
        for c in &counts[7..] {
            assert!((*c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn empty_mask_rejected() {
        let mut allowed = [[true; N_LEVELS]; 5];
        allowed[ActionDimension::Tariff.index()] = [false; N_LEVELS];
        assert!(ActionMask::from_levels(allowed).is_err());
        let mask = ActionMask { allowed };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(masked_sample(&mask, ActionDimension::Tariff, &mut rng).is_err());
    }

    #[test]
    fn snap_prefers_next_higher() {
        let m = build_mask(7, NegotiatedDimension::Mitigation);
        assert_eq!(m.snap(ActionDimension::Mitigation, 2).unwrap(), 7);
        assert_eq!(m.snap(ActionDimension::Mitigation, 8).unwrap(), 8);
        let mut allowed = [[true; N_LEVELS]; 5];
        allowed[0] = [true, true, false, false, false, false, false, false, false, false];
        let m = ActionMask::from_levels(allowed).unwrap();
        assert_eq!(m.snap(ActionDimension::Savings, 5).unwrap(), 1);
    }

    #[test]
    fn unenforced_round_keeps_full_masks() {
        let cfg = NegotiationConfig {
            enforce_masks: false,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let round = negotiate(5, &cfg, &mut rng).unwrap();
        assert!(round.masks.iter().all(|m| m.is_full()));
        let top = round.proposals.iter().map(|p| p.level).max().unwrap();
        assert!(round.commitments.iter().all(|c| *c == top));
    }
}
