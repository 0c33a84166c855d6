//! Sub-POVM validation with fallback, assembly of the approximate measurements
//! and the exact faithfulness distance.

use rayon::prelude::*;
use serde::Serialize;

use crate::operator::{sqrt_psd, trace_norm, ComplexOperator};
use crate::scalar::Real;
use crate::typicality::sequence_index;

use super::codebook::Codebook;
use super::pipeline::ProtocolSetup;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubPovmCheck {
    pub valid: bool,
    pub max_eigenvalue: f64,
}

fn check_sum<T: Real>(sum: &ComplexOperator<T>) -> SubPovmCheck {
    let top = sum.max_eigenvalue().to_f64_lossy();
    SubPovmCheck {
        valid: top <= 1.0 + T::default_tolerances().psd,
        max_eigenvalue: top,
    }
}

/// The set executed for one value of the shared randomness is `{M·Γ_j}`; it is a
/// sub-POVM when `λ_max(M Σ_j Γ_j) ≤ 1 + τ_psd`.
pub fn validate_subpovm<T: Real>(gammas: &[ComplexOperator<T>], randomness: u64) -> SubPovmCheck {
    let Some(first) = gammas.first() else {
        return SubPovmCheck {
            valid: true,
            max_eigenvalue: 0.0,
        };
    };
    let sum = gammas.iter().fold(ComplexOperator::zeros(first.dim()), |acc, g| acc + g.clone());
    check_sum(&sum.scale(T::of(randomness as f64)))
}

/// Status of one `(conditioning, m)` operator set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyCell {
    pub valid: bool,
    /// The set was replaced by `{I}`, treated as the garbage outcome.
    pub fallback: bool,
    pub ec: bool,
    /// No conditional typical sequences exist for this conditioning.
    pub degenerate: bool,
    pub max_eigenvalue: f64,
}

fn counts(len: usize, members: impl Iterator<Item = usize>) -> Vec<u64> {
    let mut c = vec![0u64; len];
    for m in members {
        c[m] += 1;
    }
    c
}

fn weighted_sum<T: Real>(units: &[ComplexOperator<T>], counts: &[u64], scale: f64, dim: usize) -> ComplexOperator<T> {
    let mut sum = ComplexOperator::zeros(dim);
    for (u, &c) in units.iter().zip(counts) {
        if c > 0 {
            sum += &u.scale(T::of(scale * c as f64));
        }
    }
    sum
}

/// Alice's family `Υ^{(m_A)}` and the regrouped elements `Λ̃_{x_Aⁿ}`.
#[derive(Debug, Clone)]
pub struct AliceFamily<T: Real> {
    /// `S / ((1+ε) s_A M_A)`.
    pub prefactor: f64,
    pub cells: Vec<FamilyCell>,
    /// `Λ̃_{x_Aⁿ} = Σ_{valid m_A} Σ_{j_A: x_Aⁿ(j_A, m_A) = x_Aⁿ} Υ`, aligned with Alice's typical set.
    pub approx: Vec<ComplexOperator<T>>,
}

pub fn assemble_alice<T: Real>(setup: &ProtocolSetup<T>, codebook: &Codebook) -> AliceFamily<T> {
    let p = &setup.params;
    let ops = &setup.alice;
    let prefactor = p.prefactor(ops.normalizer(), p.s_a, p.m_a);
    let members = ops.pruned.len();
    let mut approx = vec![ComplexOperator::zeros(setup.dim_n); members];
    let cells = codebook
        .alice
        .iter()
        .map(|row| {
            let c = counts(members, row.iter().copied());
            let sum = weighted_sum(&ops.unit_gamma, &c, prefactor, setup.dim_n);
            let check = check_sum(&sum.scale(T::of(p.m_a as f64)));
            if check.valid {
                for (k, &ck) in c.iter().enumerate() {
                    if ck > 0 {
                        approx[k] += &ops.unit_gamma[k].scale(T::of(prefactor * ck as f64));
                    }
                }
            }
            FamilyCell {
                valid: check.valid,
                fallback: !check.valid,
                ec: false,
                degenerate: false,
                max_eigenvalue: check.max_eigenvalue,
            }
        })
        .collect();
    AliceFamily {
        prefactor,
        cells,
        approx: approx.into_iter().map(|a| a.hermitian_part()).collect(),
    }
}

/// Bob's validated families `Γ^{(m_B)}_{x_Aⁿ}`.
#[derive(Debug, Clone)]
pub struct BobFamily<T: Real> {
    /// `[x_Aⁿ][m_B]`.
    pub cells: Vec<Vec<FamilyCell>>,
    /// `S(x_Aⁿ) / ((1+ε) s_B M_B)` per conditioning.
    pub prefactors: Vec<f64>,
    /// `Σ_{valid m_B} Σ_{j_B: x_Bⁿ(j_B, m_B) = x_Bⁿ} Γ` per member of the conditional law.
    pub grouped: Vec<Option<Vec<ComplexOperator<T>>>>,
}

pub fn assemble_bob_family<T: Real>(setup: &ProtocolSetup<T>, codebook: &Codebook) -> BobFamily<T> {
    let p = &setup.params;
    let parts: Vec<(Vec<FamilyCell>, f64, Option<Vec<ComplexOperator<T>>>)> = setup
        .bob
        .par_iter()
        .zip(codebook.bob.par_iter())
        .map(|(cond, cells)| {
            let Some(ops) = cond.ops.as_ref() else {
                let cell = FamilyCell {
                    valid: false,
                    fallback: true,
                    ec: false,
                    degenerate: true,
                    max_eigenvalue: 0.0,
                };
                return (vec![cell; p.m_b as usize], 0.0, None);
            };
            let prefactor = p.prefactor(ops.normalizer(), p.s_b, p.m_b);
            let members = ops.pruned.len();
            let mut total = vec![0u64; members];
            let status = cells
                .iter()
                .map(|cell| {
                    let c = counts(members, cell.entries.iter().map(|e| e.member));
                    let sum = weighted_sum(&ops.unit_gamma, &c, prefactor, setup.dim_n);
                    let check = check_sum(&sum.scale(T::of(p.m_b as f64)));
                    let keep = check.valid && !cell.ec;
                    if keep {
                        for (t, ck) in total.iter_mut().zip(&c) {
                            *t += ck;
                        }
                    }
                    FamilyCell {
                        valid: check.valid,
                        fallback: !keep,
                        ec: cell.ec,
                        degenerate: false,
                        max_eigenvalue: check.max_eigenvalue,
                    }
                })
                .collect();
            let grouped = ops
                .unit_gamma
                .iter()
                .zip(&total)
                .map(|(u, &c)| u.scale(T::of(prefactor * c as f64)))
                .collect();
            (status, prefactor, Some(grouped))
        })
        .collect();
    let mut cells = Vec::with_capacity(parts.len());
    let mut prefactors = Vec::with_capacity(parts.len());
    let mut grouped = Vec::with_capacity(parts.len());
    for (c, f, g) in parts {
        cells.push(c);
        prefactors.push(f);
        grouped.push(g);
    }
    BobFamily {
        cells,
        prefactors,
        grouped,
    }
}

/// `Λ̃_{x_Bⁿ}` built with Alice's approximate elements and `Λ̃'_{x_Bⁿ}` built with the
/// exact `√Λ_{x_Aⁿ}`, both over all `|X_B|ⁿ` sequences.
#[derive(Debug, Clone)]
pub struct BobAssembly<T: Real> {
    pub approx: Vec<ComplexOperator<T>>,
    pub approx_prime: Vec<ComplexOperator<T>>,
    /// No conditioning contributed any operator.
    pub empty: bool,
}

/// `Λ̃_{x_Bⁿ} = Σ_{x_Aⁿ ∈ T} √Λ̃_{x_Aⁿ} [Σ_{m_B} Σ_{j_B} Γ] √Λ̃_{x_Aⁿ}`.
pub fn assemble_bob_povm<T: Real>(
    setup: &ProtocolSetup<T>,
    alice: &AliceFamily<T>,
    bob: &BobFamily<T>,
) -> crate::error::Result<BobAssembly<T>> {
    let nb = setup.single.b_size();
    let outcomes = setup.reference_bob.len();
    let mut approx = vec![ComplexOperator::zeros(setup.dim_n); outcomes];
    let mut approx_prime = vec![ComplexOperator::zeros(setup.dim_n); outcomes];
    let mut empty = true;
    let roots = alice.approx.par_iter().map(sqrt_psd).collect::<crate::error::Result<Vec<_>>>()?;
    for (i, grouped) in bob.grouped.iter().enumerate() {
        let (Some(grouped), Some(ops)) = (grouped, setup.bob[i].ops.as_ref()) else {
            continue;
        };
        for (k, g) in grouped.iter().enumerate() {
            if g.max_abs() == T::zero() {
                continue;
            }
            empty = false;
            let idx = sequence_index(&ops.pruned.members[k], nb);
            approx[idx] += &g.conjugate_by(&roots[i]);
            approx_prime[idx] += &g.conjugate_by(&setup.sqrt_lambda_a_n[i]);
        }
    }
    Ok(BobAssembly {
        approx: approx.into_iter().map(|a| a.hermitian_part()).collect(),
        approx_prime: approx_prime.into_iter().map(|a| a.hermitian_part()).collect(),
        empty,
    })
}

/// `‖√ρⁿ (Λ̃_x − Λ_x) √ρⁿ‖₁` for every outcome.
pub fn faithfulness_terms<T: Real>(
    reference: &[ComplexOperator<T>],
    approx: &[ComplexOperator<T>],
    sqrt_rho_n: &ComplexOperator<T>,
) -> Vec<f64> {
    reference
        .par_iter()
        .zip(approx.par_iter())
        .map(|(r, a)| trace_norm(&(a - r).conjugate_by(sqrt_rho_n)).to_f64_lossy())
        .collect()
}

/// `d = Σ_x ‖√ρⁿ (Λ̃_x − Λ_x) √ρⁿ‖₁`.
pub fn faithfulness_distance<T: Real>(
    reference: &[ComplexOperator<T>],
    approx: &[ComplexOperator<T>],
    sqrt_rho_n: &ComplexOperator<T>,
) -> f64 {
    faithfulness_terms(reference, approx, sqrt_rho_n).iter().sum()
}

/// `d` and its bound `d ≤ atypical + d₂ + d₃`, plus Alice's own distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistanceBreakdown {
    pub d: f64,
    /// Part of `d` from `x_Bⁿ` outside the marginal typical set.
    pub atypical: f64,
    /// `Σ_T ‖√ρⁿ (Λ − Λ̃') √ρⁿ‖₁`.
    pub d2: f64,
    /// `Σ_T ‖√ρⁿ (Λ̃' − Λ̃) √ρⁿ‖₁`.
    pub d3: f64,
    pub d_alice: f64,
    /// `1 − Σ_x Tr(Λ̃_x ρⁿ)`.
    pub garbage_mass: f64,
}

pub fn distance_breakdown<T: Real>(
    setup: &ProtocolSetup<T>,
    alice: &AliceFamily<T>,
    bob: &BobAssembly<T>,
) -> DistanceBreakdown {
    let s = &setup.sqrt_rho_n;
    let nb = setup.single.b_size();
    let typical: Vec<bool> = {
        let mut t = vec![false; bob.approx.len()];
        for m in &setup.bob_marginal_set.members {
            t[sequence_index(m, nb)] = true;
        }
        t
    };
    let terms = faithfulness_terms(&setup.reference_bob, &bob.approx, s);
    let prime_terms = faithfulness_terms(&setup.reference_bob, &bob.approx_prime, s);
    let mid_terms = faithfulness_terms(&bob.approx_prime, &bob.approx, s);
    let mut out = DistanceBreakdown {
        d: terms.iter().sum(),
        atypical: 0.0,
        d2: 0.0,
        d3: 0.0,
        d_alice: 0.0,
        garbage_mass: 0.0,
    };
    for (i, &t) in typical.iter().enumerate() {
        if t {
            out.d2 += prime_terms[i];
            out.d3 += mid_terms[i];
        } else {
            out.atypical += terms[i];
        }
    }
    let na = setup.single.a_size();
    let mut alice_full = vec![ComplexOperator::zeros(setup.dim_n); setup.reference_alice.len()];
    for (k, m) in setup.alice.pruned.members.iter().enumerate() {
        alice_full[sequence_index(m, na)] = alice.approx[k].clone();
    }
    out.d_alice = faithfulness_distance(&setup.reference_alice, &alice_full, s);
    let kept: f64 = bob
        .approx
        .iter()
        .map(|a| a.trace_product(&setup.rho_n).re.to_f64_lossy())
        .sum();
    out.garbage_mass = (1.0 - kept).max(0.0);
    out
}
