//! Weak typicality by explicit enumeration: classical (conditional) typical
//! sets, pruned distributions and n-fold (conditional) typical projectors.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{checked_pow, decompose_hermitian_part, ComplexOperator, DensityOperator, SpectralDecomposition};
use crate::rates::shannon_entropy;
use crate::scalar::{Complex, Real};

/// Slack on the typicality comparison so boundary cases survive round-off.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Symbol sequence; the first symbol is the most significant digit of its index.
pub type Sequence = Vec<usize>;

pub fn sequence_from_index(mut index: usize, alphabet: usize, n: usize) -> Sequence {
    let mut seq = vec![0; n];
    for slot in seq.iter_mut().rev() {
        *slot = index % alphabet;
        index /= alphabet;
    }
    seq
}

pub fn sequence_index(seq: &[usize], alphabet: usize) -> usize {
    seq.iter().fold(0, |acc, &s| acc * alphabet + s)
}

/// `Π_i p(s_i)`.
pub fn product_prob(p: &[f64], seq: &[usize]) -> f64 {
    seq.iter().map(|&s| p[s]).product()
}

/// `Π_i p(b_i | a_i)` with `p_cond[a][b]`.
pub fn conditional_product_prob(p_cond: &[Vec<f64>], cond: &[usize], seq: &[usize]) -> f64 {
    cond.iter().zip(seq).map(|(&a, &b)| p_cond[a][b]).product()
}

fn within(log_likelihood_rate: f64, entropy_rate: f64, delta: f64) -> bool {
    log_likelihood_rate.is_finite() && (log_likelihood_rate - entropy_rate).abs() <= delta + BOUNDARY_SLACK
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalSet {
    pub n: usize,
    pub delta: f64,
    pub alphabet_size: usize,
    /// Sorted by enumeration index.
    pub members: Vec<Sequence>,
    /// Probability of each member under the generating (conditional) product law.
    pub member_probs: Vec<f64>,
    /// `S`, the total probability of the set.
    pub total_prob: f64,
}

impl TypicalSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, seq: &[usize]) -> bool {
        self.members
            .binary_search_by_key(&sequence_index(seq, self.alphabet_size), |m| sequence_index(m, self.alphabet_size))
            .is_ok()
    }
}

fn check_distribution(p: &[f64]) -> Result<f64> {
    shannon_entropy(p)
}

fn enumerate(
    alphabet: usize,
    n: usize,
    delta: f64,
    cap: usize,
    entropy_rate: f64,
    prob: impl Fn(&[usize]) -> f64,
) -> Result<TypicalSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
    }
    if delta < 0.0 || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    let size = checked_pow(alphabet, n, cap)?;
    let mut members = Vec::new();
    let mut member_probs = Vec::new();
    for idx in 0..size {
        let seq = sequence_from_index(idx, alphabet, n);
        let p = prob(&seq);
        if p > 0.0 && within(-p.log2() / n as f64, entropy_rate, delta) {
            members.push(seq);
            member_probs.push(p);
        }
    }
    let total_prob = member_probs.iter().sum();
    Ok(TypicalSet {
        n,
        delta,
        alphabet_size: alphabet,
        members,
        member_probs,
        total_prob,
    })
}

/// Weakly typical sequences `|−(1/n) log₂ p(xⁿ) − H(p)| ≤ δ`.
pub fn build_typical_set(p: &[f64], n: usize, delta: f64, cap: usize) -> Result<TypicalSet> {
    let h = check_distribution(p)?;
    enumerate(p.len(), n, delta, cap, h, |s| product_prob(p, s))
}

/// Conditionally typical `x_Bⁿ` given `x_Aⁿ`: the conditional log-likelihood rate lies
/// within `δ` of `(1/n) Σ_i H(X_B | X_A = a_i)`.
pub fn conditional_typical_set(
    p_cond: &[Vec<f64>],
    cond: &[usize],
    delta: f64,
    cap: usize,
) -> Result<TypicalSet> {
    let n = cond.len();
    let alphabet = p_cond.first().map_or(0, |r| r.len());
    let mut rate = 0.0;
    for &a in cond {
        let row = p_cond.get(a).ok_or_else(|| {
            Error::InvalidParameter(format!("conditioning symbol {a} has no conditional row"))
        })?;
        if row.len() != alphabet {
            return Err(Error::SizeMismatch {
                what: "conditional row length",
                expected: alphabet,
                actual: row.len(),
            });
        }
        rate += check_distribution(row)?;
    }
    let rate = rate / n.max(1) as f64;
    let ts = enumerate(alphabet, n, delta, cap, rate, |s| conditional_product_prob(p_cond, cond, s))?;
    if ts.is_empty() {
        return Err(Error::EmptySupport);
    }
    Ok(ts)
}

/// Restriction of a sequence law to a typical set, renormalized by `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedDistribution {
    pub members: Vec<Sequence>,
    pub probs: Vec<f64>,
    /// `S`, the normalizer.
    pub normalizer: f64,
    pub alphabet_size: usize,
    pub n: usize,
}

impl PrunedDistribution {
    pub fn prob_of(&self, seq: &[usize]) -> f64 {
        self.members
            .iter()
            .position(|m| m == seq)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `p̃(xⁿ) = p(xⁿ)/S` on the set and 0 elsewhere.
pub fn prune(prob: impl Fn(&[usize]) -> f64, ts: &TypicalSet) -> Result<PrunedDistribution> {
    let raw: Vec<f64> = ts.members.iter().map(|m| prob(m)).collect();
    let s: f64 = raw.iter().sum();
    if ts.is_empty() || s <= 0.0 {
        return Err(Error::EmptySupport);
    }
    Ok(PrunedDistribution {
        members: ts.members.clone(),
        probs: raw.iter().map(|p| p / s).collect(),
        normalizer: s,
        alphabet_size: ts.alphabet_size,
        n: ts.n,
    })
}

/// Exact sampling by cumulative inversion; consumes one uniform draw.
pub fn sample_sequence<'a, R: Rng + ?Sized>(pd: &'a PrunedDistribution, rng: &mut R) -> &'a [usize] {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (m, &p) in pd.members.iter().zip(&pd.probs) {
        acc += p;
        if u < acc {
            return m;
        }
    }
    // Round-off can leave the last cumulative sum just below 1.
    let last = pd.probs.iter().rposition(|&p| p > 0.0).unwrap_or(pd.members.len() - 1);
    &pd.members[last]
}

/// Eigenstructure of `⊗_i ρ_{s_i}` assembled from per-symbol decompositions.
#[derive(Debug, Clone)]
pub struct ProductSpectrum<T: Real> {
    factors: Vec<SpectralDecomposition<T>>,
}

impl<T: Real> ProductSpectrum<T> {
    pub fn new(ops: &[&ComplexOperator<T>], cap: usize) -> Result<Self> {
        let dim = ops.iter().map(|o| o.dim()).try_fold(1usize, |acc, d| {
            let size = acc.saturating_mul(d);
            if size > cap {
                Err(Error::SizeLimitExceeded { size, cap })
            } else {
                Ok(size)
            }
        })?;
        debug_assert!(dim >= 1);
        Ok(ProductSpectrum {
            factors: ops.iter().map(|o| decompose_hermitian_part(o)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim()).product()
    }

    /// Eigenvalues of the product, indexed like the Kronecker basis of eigenvectors.
    pub fn eigenvalues(&self) -> Vec<T> {
        let mut vals = vec![T::one()];
        for f in &self.factors {
            let mut next = Vec::with_capacity(vals.len() * f.dim());
            for v in &vals {
                for e in &f.eigenvalues {
                    next.push(*v * e.max(T::zero()));
                }
            }
            vals = next;
        }
        vals
    }

    fn eigenvector_matrix(&self) -> DMatrix<Complex<T>> {
        let mut u = DMatrix::from_element(1, 1, Complex::new(T::one(), T::zero()));
        for f in &self.factors {
            u = u.kronecker(&f.eigenvectors);
        }
        u
    }

    /// `U diag(f(λ)) U†` over the product eigenbasis.
    pub fn apply(&self, f: impl Fn(T) -> T) -> ComplexOperator<T> {
        let u = self.eigenvector_matrix();
        let vals = self.eigenvalues();
        let weights: Vec<T> = vals.into_iter().map(f).collect();
        let cols: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] != T::zero()).collect();
        let d = u.nrows();
        if cols.is_empty() {
            return ComplexOperator::zeros(d);
        }
        let sel = DMatrix::from_fn(d, cols.len(), |r, c| u[(r, cols[c])]);
        let scaled = DMatrix::from_fn(d, cols.len(), |r, c| u[(r, cols[c])] * weights[cols[c]]);
        ComplexOperator::from_matrix_unchecked(&scaled * sel.adjoint()).hermitian_part()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectorKind {
    Marginal,
    Conditional,
}

#[derive(Debug, Clone)]
pub struct TypicalProjector<T: Real> {
    pub projector: ComplexOperator<T>,
    pub kind: ProjectorKind,
    pub conditioning: Option<Sequence>,
    pub rank: usize,
}

fn typical_window<T: Real>(spectrum: &ProductSpectrum<T>, n: usize, entropy_rate: f64, delta: f64) -> (ComplexOperator<T>, usize) {
    let keep = |lambda: T| {
        let l = lambda.to_f64_lossy();
        l > 0.0 && within(-l.log2() / n as f64, entropy_rate, delta)
    };
    let rank = spectrum.eigenvalues().into_iter().filter(|&l| keep(l)).count();
    let p = spectrum.apply(|l| if keep(l) { T::one() } else { T::zero() });
    (p, rank)
}

fn entropy_bits<T: Real>(rho: &DensityOperator<T>) -> f64 {
    crate::rates::von_neumann_entropy(rho).to_f64_lossy()
}

/// Projector onto eigenvectors of `ρ^{⊗n}` with `|−(1/n) log₂ λ − S(ρ)| ≤ δ`.
pub fn quantum_typical_projector<T: Real>(
    rho: &DensityOperator<T>,
    n: usize,
    delta: f64,
    cap: usize,
) -> Result<TypicalProjector<T>> {
    if n == 0 {
        return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
    }
    checked_pow(rho.dim(), n, cap)?;
    let ops: Vec<&ComplexOperator<T>> = vec![rho.op(); n];
    let spectrum = ProductSpectrum::new(&ops, cap)?;
    let (projector, rank) = typical_window(&spectrum, n, entropy_bits(rho), delta);
    Ok(TypicalProjector {
        projector,
        kind: ProjectorKind::Marginal,
        conditioning: None,
        rank,
    })
}

/// Symbol-wise conditional projector for `⊗_i ρ_{s_i}` around the average entropy
/// `(1/n) Σ_i S(ρ_{s_i})`.
pub fn conditional_quantum_typical_projector<T: Real>(
    states: &[DensityOperator<T>],
    cond: &[usize],
    delta: f64,
    cap: usize,
) -> Result<TypicalProjector<T>> {
    let n = cond.len();
    if n == 0 {
        return Err(Error::InvalidParameter("blocklength must be at least 1".into()));
    }
    let mut ops = Vec::with_capacity(n);
    let mut rate = 0.0;
    for &s in cond {
        let st = states
            .get(s)
            .ok_or_else(|| Error::InvalidParameter(format!("symbol {s} has no state")))?;
        ops.push(st.op());
        rate += entropy_bits(st);
    }
    let spectrum = ProductSpectrum::new(&ops, cap)?;
    let (projector, rank) = typical_window(&spectrum, n, rate / n as f64, delta);
    Ok(TypicalProjector {
        projector,
        kind: ProjectorKind::Conditional,
        conditioning: Some(cond.to_vec()),
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{kron_all, tensor_power, PureState};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CAP: usize = 4096;

    #[test]
    fn uniform_is_fully_typical() {
        for n in 1..5 {
            let ts = build_typical_set(&[0.5, 0.5], n, 0.0, CAP).unwrap();
            assert_eq!(ts.len(), 1 << n);
            assert_relative_eq!(ts.total_prob, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn deterministic_single_sequence() {
        let ts = build_typical_set(&[1.0, 0.0], 3, 0.1, CAP).unwrap();
        assert_eq!(ts.members, vec![vec![0, 0, 0]]);
        assert_eq!(ts.total_prob, 1.0);
    }

    #[test]
    fn biased_pair_by_enumeration() {
        let p = [0.75, 0.25];
        let h = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        let ts = build_typical_set(&p, 2, 0.2, CAP).unwrap();
        // Oracle: check each of the four sequences by hand.
        let mut expect = Vec::new();
        for (seq, pr) in [
            (vec![0, 0], 0.5625),
            (vec![0, 1], 0.1875),
            (vec![1, 0], 0.1875),
            (vec![1, 1], 0.0625),
        ] {
            let rate: f64 = -f64::log2(pr) / 2.0;
            if (rate - h).abs() <= 0.2 {
                expect.push(seq);
            }
        }
        assert_eq!(ts.members, expect);
        // Every rate deviates from H by at least 0.396, so nothing survives δ = 0.2.
        assert!(ts.is_empty());
        let wide = build_typical_set(&p, 2, 0.4, CAP).unwrap();
        assert_eq!(wide.members, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        assert_relative_eq!(wide.total_prob, 0.9375, epsilon = 1e-15);
    }

    #[test]
    fn pruning() {
        let p = [0.6, 0.3, 0.1];
        let full = build_typical_set(&p, 2, 10.0, CAP).unwrap();
        let pd = prune(|s| product_prob(&p, s), &full).unwrap();
        for (m, q) in pd.members.iter().zip(&pd.probs) {
            assert_relative_eq!(*q, product_prob(&p, m), epsilon = 1e-15);
        }
        let single = TypicalSet {
            members: vec![vec![2, 1]],
            member_probs: vec![0.03],
            total_prob: 0.03,
            ..full.clone()
        };
        let pt = prune(|s| product_prob(&p, s), &single).unwrap();
        assert_eq!(pt.probs, vec![1.0]);
        let generic = build_typical_set(&p, 3, 0.3, CAP).unwrap();
        let pg = prune(|s| product_prob(&p, s), &generic).unwrap();
        assert!((pg.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(pg.prob_of(&[2, 2, 2]), 0.0);
        let empty = TypicalSet {
            members: vec![],
            member_probs: vec![],
            total_prob: 0.0,
            ..full
        };
        assert!(matches!(prune(|s| product_prob(&p, s), &empty), Err(Error::EmptySupport)));
    }

    #[test]
    fn conditional_sets() {
        let pb = vec![0.7, 0.3];
        let indep = vec![pb.clone(), pb.clone()];
        let c = conditional_typical_set(&indep, &[0, 1, 1], 0.4, CAP).unwrap();
        let m = build_typical_set(&pb, 3, 0.4, CAP).unwrap();
        assert_eq!(c.members, m.members);

        let det = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let c = conditional_typical_set(&det, &[0, 1, 0], 0.1, CAP).unwrap();
        assert_eq!(c.members, vec![vec![1, 0, 1]]);

        // Binary joint at n = 2, enumeration oracle over 4 candidates.
        let pc = vec![vec![0.9, 0.1], vec![0.4, 0.6]];
        let cond = [0, 1];
        let h = |r: &[f64]| -r.iter().map(|p| p * p.log2()).sum::<f64>();
        let rate = (h(&pc[0]) + h(&pc[1])) / 2.0;
        let delta = 0.3;
        let mut expect = Vec::new();
        let mut s = 0.0;
        for b0 in 0..2 {
            for b1 in 0..2 {
                let pr: f64 = pc[0][b0] * pc[1][b1];
                if (-pr.log2() / 2.0 - rate).abs() <= delta {
                    expect.push(vec![b0, b1]);
                    s += pr;
                }
            }
        }
        let c = conditional_typical_set(&pc, &cond, delta, CAP).unwrap();
        assert_eq!(c.members, expect);
        assert_relative_eq!(c.total_prob, s, epsilon = 1e-15);
    }

    #[test]
    fn enumeration_cap() {
        assert!(matches!(
            build_typical_set(&[0.5, 0.5], 13, 0.1, CAP),
            Err(Error::SizeLimitExceeded { .. })
        ));
    }

    #[test]
    fn sampling() {
        let point = PrunedDistribution {
            members: vec![vec![1, 0]],
            probs: vec![1.0],
            normalizer: 0.2,
            alphabet_size: 2,
            n: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(sample_sequence(&point, &mut rng), &[1, 0]);
        }
        let two = PrunedDistribution {
            members: vec![vec![0], vec![1]],
            probs: vec![0.5, 0.5],
            normalizer: 1.0,
            alphabet_size: 2,
            n: 1,
        };
        let a: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(11);
            (0..20).map(|_| sample_sequence(&two, &mut r).to_vec()).collect()
        };
        let b: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(11);
            (0..20).map(|_| sample_sequence(&two, &mut r).to_vec()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_frequencies_within_three_sigma() {
        let p = [0.6, 0.3, 0.1];
        let ts = build_typical_set(&p, 2, 0.6, CAP).unwrap();
        let pd = prune(|s| product_prob(&p, s), &ts).unwrap();
        let draws = 100_000;
        let mut counts = vec![0usize; pd.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..draws {
            let s = sample_sequence(&pd, &mut rng);
            counts[pd.members.iter().position(|m| m == s).unwrap()] += 1;
        }
        for (c, q) in counts.iter().zip(&pd.probs) {
            let mean = q * draws as f64;
            let sd = (draws as f64 * q * (1.0 - q)).sqrt();
            assert!((*c as f64 - mean).abs() <= 3.0 * sd + 1.0, "count {c} vs mean {mean}");
        }
    }

    fn assert_projector(p: &ComplexOperator<f64>, state: &ComplexOperator<f64>) {
        assert!((&(p * p) - p).op_norm() < 1e-8);
        assert!(p.hermitian_deviation() < 1e-12);
        assert!((&(p * state) - &(state * p)).op_norm() < 1e-8);
    }

    #[test]
    fn quantum_projector_examples() {
        let pure = PureState::<f64>::basis(2, 1).density();
        let t = quantum_typical_projector(&pure, 3, 0.1, CAP).unwrap();
        assert_eq!(t.rank, 1);
        assert_relative_eq!(t.projector.tr(), 1.0, epsilon = 1e-12);

        let mixed = DensityOperator::<f64>::maximally_mixed(2);
        let t = quantum_typical_projector(&mixed, 3, 0.0, CAP).unwrap();
        assert!((&t.projector - &ComplexOperator::identity(8)).op_norm() < 1e-12);

        let r = DensityOperator::new(ComplexOperator::diag(&[0.75, 0.25])).unwrap();
        let t = quantum_typical_projector(&r, 2, 0.3, CAP).unwrap();
        let h = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        let eig = [9.0 / 16.0, 3.0 / 16.0, 3.0 / 16.0, 1.0 / 16.0];
        let expect_rank = eig.iter().filter(|l: &&f64| (-l.log2() / 2.0 - h).abs() <= 0.3).count();
        assert_eq!(t.rank, expect_rank);
        assert_eq!(t.rank, 0);
        let t = quantum_typical_projector(&r, 2, 0.4, CAP).unwrap();
        let expect = ComplexOperator::diag(&[1.0, 1.0, 1.0, 0.0]);
        assert!((&t.projector - &expect).op_norm() < 1e-12);
        assert_projector(&t.projector, &tensor_power(r.op(), 2, CAP).unwrap());
    }

    fn rotated(p: f64, theta: f64) -> DensityOperator<f64> {
        let (c, s) = (theta.cos(), theta.sin());
        let a = p * c * c + (1.0 - p) * s * s;
        let b = (p - (1.0 - p)) * c * s;
        let d = p * s * s + (1.0 - p) * c * c;
        DensityOperator::new(
            ComplexOperator::from_parts(&[vec![a, b], vec![b, d]], &[vec![0.0; 2], vec![0.0; 2]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn conditional_projector_examples() {
        let r = rotated(0.8, 0.3);
        let same = conditional_quantum_typical_projector(&[r.clone()], &[0, 0, 0], 0.25, CAP).unwrap();
        let marg = quantum_typical_projector(&r, 3, 0.25, CAP).unwrap();
        assert!((&same.projector - &marg.projector).op_norm() < 1e-10);

        let pures = [PureState::<f64>::basis(2, 0).density(), rotated(1.0, 0.7)];
        let t = conditional_quantum_typical_projector(&pures, &[0, 1, 1], 0.1, CAP).unwrap();
        assert_eq!(t.rank, 1);

        // Two distinct qubit states at n=2: eigenvalue products oracle.
        let states = [rotated(0.8, 0.0), rotated(0.6, 0.9)];
        let delta = 0.2;
        let t = conditional_quantum_typical_projector(&states, &[0, 1], delta, CAP).unwrap();
        let h = |p: f64| -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
        let rate = (h(0.8) + h(0.6)) / 2.0;
        let mut expect = 0;
        for a in [0.8, 0.2] {
            for b in [0.6, 0.4] {
                let l: f64 = a * b;
                if (-l.log2() / 2.0 - rate).abs() <= delta {
                    expect += 1;
                }
            }
        }
        assert_eq!(t.rank, expect);
        let prod = kron_all(&[states[0].op(), states[1].op()]);
        assert_projector(&t.projector, &prod);
    }

    #[test]
    fn product_spectrum_reconstructs() {
        let states = [rotated(0.8, 0.2), rotated(0.65, 1.1)];
        let ps = ProductSpectrum::new(&[states[0].op(), states[1].op()], CAP).unwrap();
        let prod = kron_all(&[states[0].op(), states[1].op()]);
        assert!((&ps.apply(|l| l) - &prod).op_norm() < 1e-12);
    }
}
