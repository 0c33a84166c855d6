//! Single-letter ingredients and the per-conditioning operator pipeline
//! `ξ' → ξ̄ → (Π, Ω, ξ) → Γ`, shared by Alice (trivial conditioning) and Bob.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::{
    conditional_branch, joint_outcome_model, post_measurement_state, JointOutcomeModel, OutcomeFunction, Povm,
};
use crate::operator::{
    checked_pow, kron_all, pinv_sqrt_on_support, relative_cutoff, sqrt_psd, ComplexOperator, DensityOperator,
};
use crate::rates::{conditional_rate_quantities, shannon_entropy, RateQuantities};
use crate::scalar::Real;
use crate::typicality::{
    build_typical_set, conditional_product_prob, conditional_quantum_typical_projector, conditional_typical_set,
    product_prob, prune, sequence_from_index, PrunedDistribution, Sequence, TypicalSet,
};

use super::params::{CodebookCase, ProtocolParams};

/// State, measurement and the two outcome functions.
#[derive(Debug, Clone)]
pub struct Scenario<T: Real> {
    pub rho: DensityOperator<T>,
    pub povm: Povm<T>,
    pub g_a: OutcomeFunction,
    pub g_b: OutcomeFunction,
}

impl<T: Real> Scenario<T> {
    pub fn new(rho: DensityOperator<T>, povm: Povm<T>, g_a: OutcomeFunction, g_b: OutcomeFunction) -> Result<Self> {
        if !povm.is_complete() {
            return Err(Error::InvalidParameter("scenario measurement must be a complete POVM".into()));
        }
        if rho.dim() != povm.dim() {
            return Err(Error::DimensionMismatch {
                expected: povm.dim(),
                actual: rho.dim(),
            });
        }
        for (what, g) in [("gA length vs POVM outcomes", &g_a), ("gB length vs POVM outcomes", &g_b)] {
            if g.domain_size() != povm.len() {
                return Err(Error::SizeMismatch {
                    what,
                    expected: povm.len(),
                    actual: g.domain_size(),
                });
            }
        }
        Ok(Scenario { rho, povm, g_a, g_b })
    }

    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn joint_model(&self) -> Result<JointOutcomeModel<T>> {
        joint_outcome_model(&self.rho, &self.povm, &self.g_a, &self.g_b)
    }

    pub fn rate_quantities(&self) -> Result<RateQuantities> {
        conditional_rate_quantities(&self.joint_model()?)
    }
}

/// One-copy laws, operators and states entering the block construction.
#[derive(Debug, Clone)]
pub struct SingleLetter<T: Real> {
    pub p_a: Vec<f64>,
    pub p_b: Vec<f64>,
    /// `p(x_B | x_A)`; uniform placeholder rows where `p(x_A)` is negligible.
    pub p_cond: Vec<Vec<f64>>,
    pub lambda_a: Vec<ComplexOperator<T>>,
    pub sqrt_lambda_a: Vec<ComplexOperator<T>>,
    pub lambda_b: Vec<ComplexOperator<T>>,
    /// `ρ_{x_A} = √Λ_{x_A} ρ √Λ_{x_A} / p(x_A)`.
    pub post_states: Vec<DensityOperator<T>>,
    /// `ρ̂_{x_B|x_A} = √ρ_{x_A} Λ_{x_B|x_A} √ρ_{x_A} / p(x_B|x_A)` at `x_A·|X_B| + x_B`.
    pub bob_states: Vec<DensityOperator<T>>,
    /// `ρ̂_{x_A} = √ρ Λ_{x_A} √ρ / p(x_A)`.
    pub alice_states: Vec<DensityOperator<T>>,
    pub quantities: RateQuantities,
    /// `H(R | X_A X_B)`, only reported through `β`.
    pub h_r_given_xaxb: f64,
}

impl<T: Real> SingleLetter<T> {
    pub fn new(sc: &Scenario<T>) -> Result<Self> {
        let jm = sc.joint_model()?;
        let quantities = conditional_rate_quantities(&jm)?;
        let tol = T::default_tolerances().prob;
        let dim = sc.dim();
        let (na, nb) = (jm.a_size, jm.b_size);
        // Renormalized in f64 so single-precision round-off does not trip the distribution checks.
        let f = |v: Vec<T>| {
            let v: Vec<f64> = v.into_iter().map(|x| x.to_f64_lossy().max(0.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let p_a = f(jm.probs_a());
        let p_b = f(jm.probs_b());
        let p_cond: Vec<Vec<f64>> = jm
            .conditional_b_given_a()
            .into_iter()
            .map(|row| match row {
                Some(r) => f(r),
                None => vec![1.0 / nb as f64; nb],
            })
            .collect();

        let coarse = |g: &OutcomeFunction, k: usize| {
            sc.povm
                .elements()
                .iter()
                .enumerate()
                .filter(|(x, _)| g.apply(*x) == k)
                .fold(ComplexOperator::zeros(dim), |acc, (_, e)| acc + e.clone())
        };
        let lambda_a: Vec<_> = (0..na).map(|a| coarse(&sc.g_a, a)).collect();
        let lambda_b: Vec<_> = (0..nb).map(|b| coarse(&sc.g_b, b)).collect();
        let sqrt_lambda_a = lambda_a.iter().map(sqrt_psd).collect::<Result<Vec<_>>>()?;

        let mixed = DensityOperator::maximally_mixed(dim);
        let sqrt_rho = sqrt_psd(sc.rho.op())?;
        let mut post_states = Vec::with_capacity(na);
        let mut alice_states = Vec::with_capacity(na);
        let mut bob_states = Vec::with_capacity(na * nb);
        for a in 0..na {
            let rho_a = if p_a[a] > tol {
                match post_measurement_state(&sc.rho, &lambda_a[a]) {
                    Ok((_, s)) => Some(s),
                    Err(Error::NegligibleProbability { .. }) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            alice_states.push(match &rho_a {
                Some(_) => normalized_or(lambda_a[a].conjugate_by(&sqrt_rho), &mixed),
                None => mixed.clone(),
            });
            let branch = match (&rho_a, conditional_branch(&sc.povm, &sc.g_a, &sc.g_b, a)) {
                (Some(_), Ok(b)) => Some(b),
                (_, Err(Error::EmptyBranch { .. })) | (None, _) => None,
                (_, Err(e)) => return Err(e),
            };
            match (rho_a, branch) {
                (Some(rho_a), Some(branch)) => {
                    let root = sqrt_psd(rho_a.op())?;
                    for b in 0..nb {
                        let st = if p_cond[a][b] > tol {
                            normalized_or(branch.povm.element(b).conjugate_by(&root), &mixed)
                        } else {
                            mixed.clone()
                        };
                        bob_states.push(st);
                    }
                    post_states.push(rho_a);
                }
                _ => {
                    bob_states.extend(std::iter::repeat_n(mixed.clone(), nb));
                    post_states.push(mixed.clone());
                }
            }
        }

        let joint: Vec<T> = jm.cq.probs.clone();
        let h_ab = shannon_entropy(&joint)?.to_f64_lossy();
        let s_all = crate::rates::HybridState::new(jm.cq.weighted.clone()).entropy().to_f64_lossy();
        Ok(SingleLetter {
            p_a,
            p_b,
            p_cond,
            lambda_a,
            sqrt_lambda_a,
            lambda_b,
            post_states,
            bob_states,
            alice_states,
            quantities,
            h_r_given_xaxb: (s_all - h_ab).max(0.0),
        })
    }

    pub fn a_size(&self) -> usize {
        self.p_a.len()
    }

    pub fn b_size(&self) -> usize {
        self.p_b.len()
    }
}

fn normalized_or<T: Real>(op: ComplexOperator<T>, fallback: &DensityOperator<T>) -> DensityOperator<T> {
    let t = op.tr();
    if t > T::of(T::default_tolerances().prob) {
        DensityOperator::from_op_unchecked(op.scale(T::one() / t).hermitian_part())
    } else {
        fallback.clone()
    }
}

/// `ξ' = Π_C Π_ρ̂ ρ̂ Π_ρ̂ Π_C`; `None` stands for the identity.
pub fn build_xi_prime<T: Real>(
    rho_hat: &ComplexOperator<T>,
    cond_projector: Option<&ComplexOperator<T>>,
    state_projector: Option<&ComplexOperator<T>>,
) -> ComplexOperator<T> {
    let mut x = rho_hat.clone();
    if let Some(p) = state_projector {
        x = x.conjugate_by(p);
    }
    if let Some(p) = cond_projector {
        x = x.conjugate_by(p);
    }
    x.hermitian_part()
}

/// Output of [`build_omega_and_cutoff`].
#[derive(Debug, Clone)]
pub struct Cutoff<T: Real> {
    pub projector: ComplexOperator<T>,
    pub rank: usize,
    pub threshold: f64,
    /// Set when no eigenvalue clears the threshold.
    pub empty: bool,
    pub omega: ComplexOperator<T>,
    /// `ξ = Π ξ' Π` for every input `ξ'`.
    pub xi: Vec<ComplexOperator<T>>,
}

/// Π keeps eigenvalues of `ξ̄` above `ε·2^{−n(H+δ)}` (and above the numerical support cutoff).
pub fn build_omega_and_cutoff<T: Real>(
    xi_bar: &ComplexOperator<T>,
    xi_primes: &[ComplexOperator<T>],
    n: usize,
    eps: f64,
    entropy_rate: f64,
    delta: f64,
) -> Cutoff<T> {
    let threshold = eps * (-(n as f64) * (entropy_rate + delta)).exp2();
    let floor = T::of(threshold).max(relative_cutoff(xi_bar));
    let sd = crate::operator::decompose_hermitian_part(xi_bar);
    let rank = sd.eigenvalues.iter().filter(|&&l| l > floor).count();
    let projector = sd.projector_where(|l| l > floor);
    let omega = xi_bar.conjugate_by(&projector).hermitian_part();
    let xi = xi_primes.iter().map(|x| x.conjugate_by(&projector).hermitian_part()).collect();
    Cutoff {
        projector,
        rank,
        threshold,
        empty: rank == 0,
        omega,
        xi,
    }
}

/// Operators attached to one conditioning sequence.
#[derive(Debug, Clone)]
pub struct CellOperators<T: Real> {
    pub conditioning: Sequence,
    /// `ρ_{x_Aⁿ} = ⊗ ρ_{a_i}` (or `ρ^{⊗n}` for Alice).
    pub state: ComplexOperator<T>,
    pub pinv_sqrt_state: ComplexOperator<T>,
    pub pruned: PrunedDistribution,
    pub xi_bar: ComplexOperator<T>,
    pub cutoff: Cutoff<T>,
    /// `(√ρ)⁺ ξ (√ρ)⁺` per member of `pruned`; Γ is this times the prefactor.
    pub unit_gamma: Vec<ComplexOperator<T>>,
}

impl<T: Real> CellOperators<T> {
    /// `S`, the mass of the typical set the codewords are drawn from.
    pub fn normalizer(&self) -> f64 {
        self.pruned.normalizer
    }
}

/// Inputs of [`build_cell`].
pub struct CellInput<'a, T: Real> {
    pub conditioning: &'a [usize],
    pub cond_states: &'a [DensityOperator<T>],
    /// Indexed `c·out_alphabet + x`.
    pub out_states: &'a [DensityOperator<T>],
    pub out_alphabet: usize,
    pub pruned: PrunedDistribution,
    /// `H(R|X_A)` for Bob, `H(R)` for Alice.
    pub entropy_rate: f64,
    pub delta: f64,
    pub eps: f64,
    pub trivial_projectors: bool,
    pub cap: usize,
}

pub fn build_cell<T: Real>(inp: CellInput<'_, T>) -> Result<CellOperators<T>> {
    let n = inp.conditioning.len();
    let cond_ops: Vec<&ComplexOperator<T>> = inp.conditioning.iter().map(|&c| inp.cond_states[c].op()).collect();
    let state = kron_all(&cond_ops);
    let roots: Vec<ComplexOperator<T>> = cond_ops
        .iter()
        .map(|o| pinv_sqrt_on_support(o, relative_cutoff(o)))
        .collect();
    let pinv_sqrt_state = kron_all(&roots.iter().collect::<Vec<_>>());
    let cond_proj = if inp.trivial_projectors {
        None
    } else {
        Some(conditional_quantum_typical_projector(inp.cond_states, inp.conditioning, inp.delta, inp.cap)?.projector)
    };
    let mut xi_primes = Vec::with_capacity(inp.pruned.len());
    let mut xi_bar = ComplexOperator::zeros(state.dim());
    for (member, &p) in inp.pruned.members.iter().zip(&inp.pruned.probs) {
        let pair: Vec<usize> = inp
            .conditioning
            .iter()
            .zip(member)
            .map(|(&c, &x)| c * inp.out_alphabet + x)
            .collect();
        let factors: Vec<&ComplexOperator<T>> = pair.iter().map(|&k| inp.out_states[k].op()).collect();
        let rho_hat = kron_all(&factors);
        let state_proj = if inp.trivial_projectors {
            None
        } else {
            Some(conditional_quantum_typical_projector(inp.out_states, &pair, inp.delta, inp.cap)?.projector)
        };
        let xp = build_xi_prime(&rho_hat, cond_proj.as_ref(), state_proj.as_ref());
        xi_bar += &xp.scale(T::of(p));
        xi_primes.push(xp);
    }
    let xi_bar = xi_bar.hermitian_part();
    let cutoff = build_omega_and_cutoff(&xi_bar, &xi_primes, n, inp.eps, inp.entropy_rate, inp.delta);
    let unit_gamma = build_gamma(&cutoff.xi, &pinv_sqrt_state, 1.0);
    Ok(CellOperators {
        conditioning: inp.conditioning.to_vec(),
        state,
        pinv_sqrt_state,
        pruned: inp.pruned,
        xi_bar,
        cutoff,
        unit_gamma,
    })
}

/// `prefactor · (√ρ)⁺ ξ (√ρ)⁺` for every `ξ`.
pub fn build_gamma<T: Real>(
    xi: &[ComplexOperator<T>],
    pinv_sqrt_state: &ComplexOperator<T>,
    prefactor: f64,
) -> Vec<ComplexOperator<T>> {
    xi.iter()
        .map(|x| x.conjugate_by(pinv_sqrt_state).scale(T::of(prefactor)).hermitian_part())
        .collect()
}

/// Bob's operators for one `x_Aⁿ ∈ T_{X_A}`; `ops` is `None` when the conditional
/// typical set is empty.
#[derive(Debug, Clone)]
pub struct BobConditioning<T: Real> {
    pub x_a: Sequence,
    pub ops: Option<CellOperators<T>>,
}

/// Everything that depends on the scenario and parameters but not on a codebook draw.
#[derive(Debug, Clone)]
pub struct ProtocolSetup<T: Real> {
    pub params: ProtocolParams,
    pub single: SingleLetter<T>,
    pub dim_n: usize,
    pub rho_n: ComplexOperator<T>,
    pub sqrt_rho_n: ComplexOperator<T>,
    pub alice_set: TypicalSet,
    pub alice: CellOperators<T>,
    pub bob_marginal_set: TypicalSet,
    pub bob_marginal: Option<PrunedDistribution>,
    /// Aligned with `alice_set.members`.
    pub bob: Vec<BobConditioning<T>>,
    /// `⊗ √Λ_{a_i}` per member of `alice_set`.
    pub sqrt_lambda_a_n: Vec<ComplexOperator<T>>,
    /// `⊗ Λ_{a_i}` over all `|X_A|ⁿ` sequences.
    pub reference_alice: Vec<ComplexOperator<T>>,
    /// `⊗ Λ_{b_i}` over all `|X_B|ⁿ` sequences.
    pub reference_bob: Vec<ComplexOperator<T>>,
}

/// Read-only diagnostics of a setup.
#[derive(Debug, Clone, Serialize)]
pub struct SetupSummary {
    pub alice_typical: usize,
    pub alice_mass: f64,
    pub bob_marginal_typical: usize,
    pub bob_degenerate_cells: usize,
    pub alice_cutoff_rank: usize,
    pub bob_cutoff_empty: usize,
    /// `β = 2^{n(H(R|X_A X_B) − δ'')}`.
    pub beta: f64,
}

impl<T: Real> ProtocolSetup<T> {
    pub fn new(sc: &Scenario<T>, params: &ProtocolParams) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        let cap = params.dim_cap;
        let dim_n = checked_pow(sc.dim(), n, cap)?;
        let single = SingleLetter::new(sc)?;
        let (na, nb) = (single.a_size(), single.b_size());
        checked_pow(na, n, cap)?;
        checked_pow(nb, n, cap)?;
        let q = single.quantities;

        let rho_ops = vec![sc.rho.op(); n];
        let rho_n = kron_all(&rho_ops);
        let sqrt_rho = sqrt_psd(sc.rho.op())?;
        let sqrt_rho_n = kron_all(&vec![&sqrt_rho; n]);

        let alice_set = build_typical_set(&single.p_a, n, params.delta, cap)?;
        let alice_pruned = prune(|s| product_prob(&single.p_a, s), &alice_set)?;
        let rho_state = [sc.rho.clone()];
        let zeros = vec![0; n];
        let alice = build_cell(CellInput {
            conditioning: &zeros,
            cond_states: &rho_state,
            out_states: &single.alice_states,
            out_alphabet: na,
            pruned: alice_pruned,
            entropy_rate: q.h_r,
            delta: params.delta,
            eps: params.eps,
            trivial_projectors: params.trivial_projectors,
            cap,
        })?;

        let bob_marginal_set = build_typical_set(&single.p_b, n, params.delta, cap)?;
        let bob_marginal = prune(|s| product_prob(&single.p_b, s), &bob_marginal_set).ok();
        if params.case == CodebookCase::Shared && bob_marginal.is_none() {
            return Err(Error::EmptySupport);
        }

        let bob = alice_set
            .members
            .par_iter()
            .map(|x_a| -> Result<BobConditioning<T>> {
                let ts = match conditional_typical_set(&single.p_cond, x_a, params.delta, cap) {
                    Ok(ts) => ts,
                    Err(Error::EmptySupport) => {
                        return Ok(BobConditioning {
                            x_a: x_a.clone(),
                            ops: None,
                        })
                    }
                    Err(e) => return Err(e),
                };
                let pruned = match prune(|s| conditional_product_prob(&single.p_cond, x_a, s), &ts) {
                    Ok(p) => p,
                    Err(Error::EmptySupport) => {
                        return Ok(BobConditioning {
                            x_a: x_a.clone(),
                            ops: None,
                        })
                    }
                    Err(e) => return Err(e),
                };
                let ops = build_cell(CellInput {
                    conditioning: x_a,
                    cond_states: &single.post_states,
                    out_states: &single.bob_states,
                    out_alphabet: nb,
                    pruned,
                    entropy_rate: q.h_r_given_xa,
                    delta: params.delta,
                    eps: params.eps,
                    trivial_projectors: params.trivial_projectors,
                    cap,
                })?;
                Ok(BobConditioning {
                    x_a: x_a.clone(),
                    ops: Some(ops),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let sqrt_lambda_a_n = alice_set
            .members
            .iter()
            .map(|s| kron_all(&s.iter().map(|&a| &single.sqrt_lambda_a[a]).collect::<Vec<_>>()))
            .collect();
        let all = |alphabet: usize, ops: &[ComplexOperator<T>]| -> Vec<ComplexOperator<T>> {
            (0..alphabet.pow(n as u32))
                .map(|i| {
                    let s = sequence_from_index(i, alphabet, n);
                    kron_all(&s.iter().map(|&k| &ops[k]).collect::<Vec<_>>())
                })
                .collect()
        };
        let reference_alice = all(na, &single.lambda_a);
        let reference_bob = all(nb, &single.lambda_b);

        Ok(ProtocolSetup {
            params: params.clone(),
            single,
            dim_n,
            rho_n,
            sqrt_rho_n,
            alice_set,
            alice,
            bob_marginal_set,
            bob_marginal,
            bob,
            sqrt_lambda_a_n,
            reference_alice,
            reference_bob,
        })
    }

    pub fn summary(&self) -> SetupSummary {
        let p = &self.params;
        SetupSummary {
            alice_typical: self.alice_set.len(),
            alice_mass: self.alice_set.total_prob,
            bob_marginal_typical: self.bob_marginal_set.len(),
            bob_degenerate_cells: self.bob.iter().filter(|b| b.ops.is_none()).count(),
            alice_cutoff_rank: self.alice.cutoff.rank,
            bob_cutoff_empty: self
                .bob
                .iter()
                .filter(|b| b.ops.as_ref().is_some_and(|o| o.cutoff.empty))
                .count(),
            beta: (p.n as f64 * (self.single.h_r_given_xaxb - p.delta2)).exp2(),
        }
    }

    /// Index of `x_Aⁿ` within `alice_set.members`.
    pub fn alice_index(&self, x_a: &[usize]) -> Option<usize> {
        self.alice_set.members.iter().position(|m| m == x_a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{support_projector, DEFAULT_DIM_CAP};
    use crate::protocol::params::{Mode, ProtocolSpec};
    use crate::sizing::SizeSpec;
    use crate::protocol::fixtures::{bell, split};
    use approx::assert_relative_eq;

    fn params(sc: &Scenario<f64>, n: usize, delta: f64, trivial: bool) -> ProtocolParams {
        let mut spec = ProtocolSpec::with_n(n);
        spec.delta = delta;
        spec.trivial_projectors = trivial;
        spec.s_a = SizeSpec::Fixed(4);
        spec.s_b = SizeSpec::Fixed(4);
        spec.resolve(Mode::WithAliceRandomness, &sc.rate_quantities().unwrap(), DEFAULT_DIM_CAP)
            .unwrap()
    }

    #[test]
    fn single_letter_states() {
        let sc = split();
        let sl = SingleLetter::new(&sc).unwrap();
        for a in 0..2 {
            let total: f64 = sl.p_cond[a].iter().sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            for b in 0..2 {
                // Tr(ρ_a Λ_{b|a}) reproduces p(b|a) and the normalized state has trace 1.
                assert_relative_eq!(sl.bob_states[a * 2 + b].op().tr(), 1.0, epsilon = 1e-12);
            }
        }
        // Σ_b p(b|a) ρ̂_{b|a} = ρ_a because Σ_b Λ_{b|a} is the support projector of Λ_a.
        for a in 0..2 {
            let mix = (0..2).fold(ComplexOperator::zeros(2), |acc, b| {
                acc + sl.bob_states[a * 2 + b].op().scale(sl.p_cond[a][b])
            });
            assert!((&mix - sl.post_states[a].op()).op_norm() < 1e-10);
        }
        // Alice's ensemble averages back to ρ.
        let avg = (0..2).fold(ComplexOperator::zeros(2), |acc, a| acc + sl.alice_states[a].op().scale(sl.p_a[a]));
        assert!((&avg - sc.rho.op()).op_norm() < 1e-10);
    }

    #[test]
    fn xi_prime_projector_cases() {
        let rho = ComplexOperator::diag(&[0.75, 0.25]);
        assert_eq!(build_xi_prime(&rho, None, None), rho);
        let orth = ComplexOperator::diag(&[0.0, 0.0]);
        assert!(build_xi_prime(&rho, Some(&orth), None).max_abs() == 0.0);
        let p1 = ComplexOperator::diag(&[0.0, 1.0]);
        let p0 = ComplexOperator::diag(&[1.0, 0.0]);
        assert!(build_xi_prime(&rho, Some(&p1), Some(&p0)).max_abs() == 0.0);
    }

    #[test]
    fn xi_prime_full_rank_projectors_at_n1() {
        // A loose window keeps every eigenvector, so ξ' equals ρ̂.
        let sc = split();
        let sl = SingleLetter::new(&sc).unwrap();
        let st = &sl.bob_states[0];
        let pc = conditional_quantum_typical_projector(&sl.post_states, &[0], 50.0, 64).unwrap();
        let ps = conditional_quantum_typical_projector(&sl.bob_states, &[0], 50.0, 64).unwrap();
        let full = [pc.rank, ps.rank];
        // Rank oracle: both projectors have rank equal to the number of nonzero eigenvalues.
        let nz = |o: &ComplexOperator<f64>| o.eigenvalues().iter().filter(|&&l| l > 1e-12).count();
        assert_eq!(full, [nz(sl.post_states[0].op()), nz(st.op())]);
        let xp = build_xi_prime(st.op(), Some(&pc.projector), Some(&ps.projector));
        assert!((&xp - st.op()).op_norm() < 1e-12);
    }

    #[test]
    fn cutoff_cases() {
        let xi = ComplexOperator::diag(&[0.6, 0.3, 0.1, 0.0]);
        let parts = vec![xi.clone()];
        // Threshold above the top eigenvalue.
        let c = build_omega_and_cutoff(&xi, &parts, 1, 100.0, 0.0, 0.0);
        assert!(c.empty && c.omega.max_abs() == 0.0 && c.xi[0].max_abs() == 0.0);
        // Zero threshold: support projector.
        let c = build_omega_and_cutoff(&xi, &parts, 1, 0.0, 0.0, 0.0);
        assert!((&c.projector - &support_projector(&xi, 1e-10)).op_norm() < 1e-12);
        assert!((&c.omega - &xi).op_norm() < 1e-12);
        // ε·2^{-n(H+δ)} = 0.4·2^{-1} = 0.2 keeps only 0.6 and 0.3.
        let c = build_omega_and_cutoff(&xi, &parts, 1, 0.4, 1.0, 0.0);
        assert_eq!(c.rank, 2);
        assert!((&c.omega - &ComplexOperator::diag(&[0.6, 0.3, 0.0, 0.0])).op_norm() < 1e-12);
    }

    #[test]
    fn cutoff_matches_two_by_two_spectrum() {
        let sc = split();
        let p = params(&sc, 1, 5.0, false);
        let setup = ProtocolSetup::new(&sc, &p).unwrap();
        for cell in setup.bob.iter().filter_map(|b| b.ops.as_ref()) {
            // Closed-form eigenvalues of a 2×2 Hermitian matrix.
            let m = cell.xi_bar.matrix();
            let (a, d, b) = (m[(0, 0)].re, m[(1, 1)].re, m[(0, 1)].norm());
            let disc = ((a - d) * (a - d) / 4.0 + b * b).sqrt();
            let eig = [(a + d) / 2.0 + disc, (a + d) / 2.0 - disc];
            let floor = cell.cutoff.threshold.max(1e-10 * eig[0]);
            let expected = eig.iter().filter(|&&l| l > floor).count();
            assert_eq!(cell.cutoff.rank, expected);
        }
    }

    #[test]
    fn gamma_collapses_to_conditional_element() {
        // Trivial projectors, ε = 0, S = 1: Γ for x_B is (√ρ_a)⁺ ρ̂ (√ρ_a)⁺ = Λ_{x_B|x_A} / p(x_B|x_A)
        // restricted to the support of ρ_a.
        let sc = split();
        let mut p = params(&sc, 1, 50.0, true);
        p.eps = 0.0;
        let setup = ProtocolSetup::new(&sc, &p).unwrap();
        let sl = &setup.single;
        for cell in setup.bob.iter().filter_map(|b| b.ops.as_ref()) {
            let a = cell.conditioning[0];
            let branch = conditional_branch(&sc.povm, &sc.g_a, &sc.g_b, a).unwrap();
            let supp = support_projector(sl.post_states[a].op(), 1e-10);
            assert_relative_eq!(cell.normalizer(), 1.0, epsilon = 1e-12);
            for (k, member) in cell.pruned.members.iter().enumerate() {
                let b = member[0];
                let expected = branch.povm.element(b).conjugate_by(&supp).scale(1.0 / sl.p_cond[a][b]);
                assert!((&cell.unit_gamma[k] - &expected).op_norm() < 1e-8);
            }
        }
    }

    #[test]
    fn gamma_scaling() {
        let xi = vec![ComplexOperator::diag(&[0.5, 0.25])];
        let b = ComplexOperator::diag(&[2.0, 1.0]);
        assert!(build_gamma(&[ComplexOperator::zeros(2)], &b, 3.0)[0].max_abs() == 0.0);
        let g1 = build_gamma(&xi, &b, 1.0);
        let g2 = build_gamma(&xi, &b, 0.5);
        assert!((&g1[0].scale(0.5) - &g2[0]).op_norm() < 1e-15);
        assert_eq!(g1[0], ComplexOperator::diag(&[2.0, 0.25]));
    }

    #[test]
    fn setup_shapes() {
        let sc = bell();
        let setup = ProtocolSetup::new(&sc, &params(&sc, 2, 0.5, false)).unwrap();
        assert_eq!(setup.dim_n, 4);
        assert_eq!(setup.alice_set.len(), 4);
        assert_eq!(setup.reference_bob.len(), 4);
        assert_eq!(setup.bob.len(), 4);
        for b in &setup.bob {
            // Deterministic conditional: the only member is x_Aⁿ itself.
            let ops = b.ops.as_ref().unwrap();
            assert_eq!(ops.pruned.members, vec![b.x_a.clone()]);
        }
        let s = setup.summary();
        assert_eq!(s.bob_degenerate_cells, 0);
        assert!(s.beta > 0.0);
    }

    #[test]
    fn scenario_validation() {
        let bad = Scenario::new(
            DensityOperator::<f64>::maximally_mixed(2),
            Povm::computational(2),
            OutcomeFunction::identity(3),
            OutcomeFunction::identity(2),
        );
        assert!(matches!(bad, Err(Error::SizeMismatch { .. })));
        let bad = Scenario::new(
            DensityOperator::<f64>::maximally_mixed(3),
            Povm::computational(2),
            OutcomeFunction::identity(2),
            OutcomeFunction::identity(2),
        );
        assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dimension_cap() {
        let sc = bell();
        let mut p = params(&sc, 2, 0.5, false);
        p.n = 13;
        assert!(matches!(ProtocolSetup::new(&sc, &p), Err(Error::SizeLimitExceeded { .. })));
    }
}
