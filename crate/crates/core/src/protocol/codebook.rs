//! Random codebooks for Alice and Bob, and the empirical `E₀` frequency check.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::typicality::{sample_sequence, PrunedDistribution, Sequence};

use super::params::{CodebookCase, ProtocolParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CodebookEntry {
    /// `j_B` (case 2) or `j'_B` (case 1).
    pub index: usize,
    /// Position of the codeword in the conditional pruned law of the cell.
    pub member: usize,
}

/// Codewords Bob uses for one `(x_Aⁿ, m_B)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BobCell {
    pub entries: Vec<CodebookEntry>,
    /// Event `E_c`: fewer than `s_B` jointly typical entries were found (case 1 only).
    pub ec: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Codebook {
    pub case: CodebookCase,
    /// `[m_A][j_A]` → member of Alice's pruned law.
    pub alice: Vec<Vec<usize>>,
    /// Case 1 only: `[m_B][j'_B]` → sequence drawn from the marginal pruned law.
    pub shared: Option<Vec<Vec<Sequence>>>,
    /// `[x_Aⁿ][m_B]`, aligned with Alice's typical set; empty for degenerate cells.
    pub bob: Vec<Vec<BobCell>>,
}

impl Codebook {
    pub fn bob_sequence<'a>(&self, cond: &'a PrunedDistribution, entry: &CodebookEntry) -> &'a [usize] {
        &cond.members[entry.member]
    }
}

/// Draws every codebook of one trial.
///
/// Alice and Bob consume separate streams keyed by `trial`, so Alice's codebook
/// does not depend on Bob's sizes. Case 2 fills cells in `(x_Aⁿ, m_B, j_B)` order;
/// case 1 draws `s'_B` sequences per `m_B` and each `x_Aⁿ` keeps the first `s_B`
/// that are jointly typical with it.
pub fn generate_codebook(
    params: &ProtocolParams,
    alice: &PrunedDistribution,
    marginal: Option<&PrunedDistribution>,
    conditionals: &[Option<&PrunedDistribution>],
    trial: u64,
) -> Result<Codebook> {
    if alice.is_empty() {
        return Err(Error::EmptySupport);
    }
    let mut rng = stream(params.seed, Purpose::AliceCodebook, trial);
    let index: HashMap<&[usize], usize> = alice.members.iter().enumerate().map(|(i, m)| (m.as_slice(), i)).collect();
    let alice_cb = (0..params.m_a)
        .map(|_| (0..params.s_a).map(|_| index[sample_sequence(alice, &mut rng)]).collect())
        .collect();

    let mut rng = stream(params.seed, Purpose::BobCodebook, trial);
    let (m_b, s_b) = (params.m_b as usize, params.s_b as usize);
    match params.case {
        CodebookCase::Conditional => {
            let bob = conditionals
                .iter()
                .map(|cond| match cond {
                    None => Vec::new(),
                    Some(pd) => {
                        let lookup = member_lookup(pd);
                        (0..m_b)
                            .map(|_| BobCell {
                                entries: (0..s_b)
                                    .map(|j| CodebookEntry {
                                        index: j,
                                        member: lookup[sample_sequence(pd, &mut rng)],
                                    })
                                    .collect(),
                                ec: false,
                            })
                            .collect()
                    }
                })
                .collect();
            Ok(Codebook {
                case: params.case,
                alice: alice_cb,
                shared: None,
                bob,
            })
        }
        CodebookCase::Shared => {
            let marginal = marginal.filter(|m| !m.is_empty()).ok_or(Error::EmptySupport)?;
            let shared: Vec<Vec<Sequence>> = (0..m_b)
                .map(|_| {
                    (0..params.s_b_prime)
                        .map(|_| sample_sequence(marginal, &mut rng).to_vec())
                        .collect()
                })
                .collect();
            let bob = conditionals
                .iter()
                .map(|cond| match cond {
                    None => Vec::new(),
                    Some(pd) => {
                        let lookup = member_lookup(pd);
                        shared
                            .iter()
                            .map(|list| {
                                let entries: Vec<CodebookEntry> = list
                                    .iter()
                                    .enumerate()
                                    .filter_map(|(j, seq)| {
                                        lookup.get(seq.as_slice()).map(|&member| CodebookEntry { index: j, member })
                                    })
                                    .take(s_b)
                                    .collect();
                                BobCell {
                                    ec: entries.len() < s_b,
                                    entries,
                                }
                            })
                            .collect()
                    }
                })
                .collect();
            Ok(Codebook {
                case: params.case,
                alice: alice_cb,
                shared: Some(shared),
                bob,
            })
        }
    }
}

fn member_lookup(pd: &PrunedDistribution) -> HashMap<&[usize], usize> {
    pd.members.iter().enumerate().map(|(i, m)| (m.as_slice(), i)).collect()
}

/// Empirical frequencies `C = c(x_Bⁿ|x_Aⁿ)/(s_B M_B)` against `P = p̃(x_Bⁿ|x_Aⁿ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E0Report {
    /// `(1−ε)P ≤ C ≤ (1+ε)P` for every member of every conditioning.
    pub holds: bool,
    /// `max |C − P| / P`.
    pub max_relative_deviation: f64,
    /// Per conditioning sequence; `None` for degenerate cells.
    pub per_conditioning: Vec<Option<f64>>,
}

pub fn empirical_e0_check(
    codebook: &Codebook,
    conditionals: &[Option<&PrunedDistribution>],
    params: &ProtocolParams,
) -> E0Report {
    let total = (params.s_b * params.m_b) as f64;
    let mut per = Vec::with_capacity(conditionals.len());
    let mut holds = true;
    let mut worst: f64 = 0.0;
    for (cells, cond) in codebook.bob.iter().zip(conditionals) {
        let Some(pd) = cond else {
            per.push(None);
            continue;
        };
        let mut counts = vec![0u64; pd.len()];
        for cell in cells {
            for e in &cell.entries {
                counts[e.member] += 1;
            }
        }
        let mut dev: f64 = 0.0;
        for (&c, &p) in counts.iter().zip(&pd.probs) {
            if p <= 0.0 {
                continue;
            }
            let freq = c as f64 / total;
            dev = dev.max((freq - p).abs() / p);
            if freq < (1.0 - params.eps) * p || freq > (1.0 + params.eps) * p {
                holds = false;
            }
        }
        worst = worst.max(dev);
        per.push(Some(dev));
    }
    E0Report {
        holds,
        max_relative_deviation: worst,
        per_conditioning: per,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::params::Mode;
    use crate::typicality::{build_typical_set, conditional_typical_set, product_prob, prune};
    use statrs::distribution::{Binomial, DiscreteCDF};

    fn params(case: CodebookCase, s_b: u64, s_b_prime: u64, m_b: u64) -> ProtocolParams {
        ProtocolParams {
            n: 2,
            delta: 0.5,
            delta2: 0.25,
            eps: 0.1,
            s_a: 3,
            s_b,
            s_b_prime,
            m_a: 2,
            m_b,
            case,
            mode: Mode::WithAliceRandomness,
            seed: 11,
            trivial_projectors: false,
            dim_cap: 4096,
        }
    }

    fn pd(members: Vec<Sequence>, probs: Vec<f64>) -> PrunedDistribution {
        PrunedDistribution {
            members,
            probs,
            normalizer: 1.0,
            alphabet_size: 2,
            n: 2,
        }
    }

    #[test]
    fn deterministic_conditional_case2() {
        let alice = pd(vec![vec![0, 1], vec![1, 0]], vec![0.5, 0.5]);
        let c0 = pd(vec![vec![1, 1]], vec![1.0]);
        let c1 = pd(vec![vec![0, 0]], vec![1.0]);
        let p = params(CodebookCase::Conditional, 4, 4, 3);
        let cb = generate_codebook(&p, &alice, None, &[Some(&c0), Some(&c1)], 0).unwrap();
        assert_eq!(cb.alice.len(), 2);
        assert!(cb.alice.iter().all(|row| row.len() == 3));
        for (cells, cond) in cb.bob.iter().zip([&c0, &c1]) {
            assert_eq!(cells.len(), 3);
            for cell in cells {
                assert_eq!(cell.entries.len(), 4);
                for e in &cell.entries {
                    assert_eq!(cb.bob_sequence(cond, e), cond.members[0].as_slice());
                }
            }
        }
        let e0 = empirical_e0_check(&cb, &[Some(&c0), Some(&c1)], &p);
        assert!(e0.holds);
        assert_eq!(e0.max_relative_deviation, 0.0);
    }

    #[test]
    fn forced_ec() {
        let alice = pd(vec![vec![0, 0]], vec![1.0]);
        let marginal = pd(vec![vec![0, 0]], vec![1.0]);
        let cond = pd(vec![vec![1, 1]], vec![1.0]);
        let p = params(CodebookCase::Shared, 1, 1, 1);
        let cb = generate_codebook(&p, &alice, Some(&marginal), &[Some(&cond)], 0).unwrap();
        assert!(cb.bob[0][0].ec);
        assert!(cb.bob[0][0].entries.is_empty());
    }

    #[test]
    fn independent_case1_rarely_fails() {
        // p(x_B) = (0.7, 0.3), independent of x_A: T_{X_B} = {00, 01, 10} equals every
        // conditional set, so each draw is jointly typical and E_c never occurs.
        let p_b = [0.7, 0.3];
        let ts = build_typical_set(&p_b, 2, 0.5, 64).unwrap();
        let marginal = prune(|s| product_prob(&p_b, s), &ts).unwrap();
        let p_cond = vec![p_b.to_vec(), p_b.to_vec()];
        let ct = conditional_typical_set(&p_cond, &[0, 1], 0.5, 64).unwrap();
        let cond = prune(|s| crate::typicality::conditional_product_prob(&p_cond, &[0, 1], s), &ct).unwrap();
        let alice = pd(vec![vec![0, 1]], vec![1.0]);
        let p = params(CodebookCase::Shared, 2, 8, 50);
        let cb = generate_codebook(&p, &alice, Some(&marginal), &[Some(&cond)], 3).unwrap();
        assert!(cb.bob[0].iter().all(|c| !c.ec && c.entries.len() == 2));
        // A narrower conditional set makes each draw typical with probability q; E_c is a
        // binomial lower tail `P(Bin(s'_B, q) < s_B)`.
        let narrow = pd(vec![vec![0, 0]], vec![1.0]);
        let q = marginal.prob_of(&[0, 0]);
        let expected = Binomial::new(q, 8).unwrap().cdf(1);
        let trials = 400;
        let mut fails = 0;
        for t in 0..trials {
            let cb = generate_codebook(&p, &alice, Some(&marginal), &[Some(&narrow)], t).unwrap();
            fails += cb.bob[0].iter().filter(|c| c.ec).count();
        }
        let rate = fails as f64 / (trials * 50) as f64;
        let sd = (expected * (1.0 - expected) / (trials * 50) as f64).sqrt();
        assert!((rate - expected).abs() < 5.0 * sd + 1e-9, "rate {rate} vs {expected}");
    }

    #[test]
    fn selection_is_first_typical_entries() {
        let alice = pd(vec![vec![0, 0]], vec![1.0]);
        let marginal = pd(vec![vec![0, 0], vec![1, 1]], vec![0.5, 0.5]);
        let cond = pd(vec![vec![1, 1]], vec![1.0]);
        let p = params(CodebookCase::Shared, 2, 10, 4);
        let cb = generate_codebook(&p, &alice, Some(&marginal), &[Some(&cond)], 1).unwrap();
        let shared = cb.shared.as_ref().unwrap();
        for (m, cell) in cb.bob[0].iter().enumerate() {
            let expected: Vec<usize> = (0..10).filter(|&j| shared[m][j] == vec![1, 1]).take(2).collect();
            let got: Vec<usize> = cell.entries.iter().map(|e| e.index).collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn reproducible_and_alice_independent_of_bob_sizes() {
        let alice = pd(vec![vec![0, 1], vec![1, 0], vec![0, 0]], vec![0.3, 0.3, 0.4]);
        let c = pd(vec![vec![0, 1], vec![1, 1]], vec![0.5, 0.5]);
        let p = params(CodebookCase::Conditional, 4, 4, 3);
        let a = generate_codebook(&p, &alice, None, &[Some(&c)], 7).unwrap();
        let b = generate_codebook(&p, &alice, None, &[Some(&c)], 7).unwrap();
        assert_eq!(a, b);
        let p2 = params(CodebookCase::Conditional, 9, 9, 5);
        let d = generate_codebook(&p2, &alice, None, &[Some(&c)], 7).unwrap();
        assert_eq!(a.alice, d.alice);
        let e = generate_codebook(&p, &alice, None, &[Some(&c)], 8).unwrap();
        assert_ne!(a, e);
    }

    #[test]
    fn e0_single_draw_violates() {
        let alice = pd(vec![vec![0, 0]], vec![1.0]);
        let c = pd(vec![vec![0, 1], vec![1, 1]], vec![0.5, 0.5]);
        let p = params(CodebookCase::Conditional, 1, 1, 1);
        let cb = generate_codebook(&p, &alice, None, &[Some(&c)], 0).unwrap();
        let r = empirical_e0_check(&cb, &[Some(&c)], &p);
        assert!(!r.holds);
        assert_eq!(r.max_relative_deviation, 1.0);
    }

    #[test]
    fn e0_concentrates_with_many_draws() {
        // Multinomial oracle: each frequency has sd √(P(1−P)/N); with N = 10⁴ and
        // P ≥ 0.23 the ε = 0.1 band sits more than 5 sd away.
        let c = pd(vec![vec![0, 0], vec![0, 1], vec![1, 0]], vec![0.538, 0.231, 0.231]);
        let alice = pd(vec![vec![0, 0]], vec![1.0]);
        let p = params(CodebookCase::Conditional, 100, 100, 100);
        let mut ok = 0;
        for t in 0..20 {
            let cb = generate_codebook(&p, &alice, None, &[Some(&c)], t).unwrap();
            ok += empirical_e0_check(&cb, &[Some(&c)], &p).holds as usize;
        }
        assert_eq!(ok, 20);
    }
}
