//! Entropies, Holevo quantities with a reference system and the achievable
//! rate regions for sequential measurement simulation. All logs are base 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{joint_outcome_model, CqState, JointOutcomeModel, OutcomeFunction, Povm};
use crate::operator::{checked_pow, ComplexOperator, DensityOperator};
use crate::scalar::Real;

fn eta<T: Real>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        -x * x.log2()
    }
}

/// `−Σ p log₂ p` with `0 log 0 = 0`.
pub fn shannon_entropy<T: Real>(p: &[T]) -> Result<T> {
    let tol = T::default_tolerances();
    if p.is_empty() {
        return Err(Error::NotADistribution {
            reason: "empty vector".into(),
        });
    }
    let mut total = T::zero();
    for (i, &v) in p.iter().enumerate() {
        if !v.is_finite() || v < -T::of(tol.psd) {
            return Err(Error::NotADistribution {
                reason: format!("entry {i} is {v}"),
            });
        }
        total += v;
    }
    if (total - T::one()).abs() > T::of(tol.trace) {
        return Err(Error::NotADistribution {
            reason: format!("sums to {total}"),
        });
    }
    Ok(p.iter().fold(T::zero(), |acc, &v| acc + eta(v)))
}

/// `−Σ λ log₂ λ` over the clipped spectrum of a PSD operator of any trace.
pub fn operator_entropy<T: Real>(a: &ComplexOperator<T>) -> T {
    a.eigenvalues().into_iter().fold(T::zero(), |acc, v| acc + eta(v))
}

pub fn von_neumann_entropy<T: Real>(rho: &DensityOperator<T>) -> T {
    operator_entropy(rho.op()).max(T::zero())
}

/// `S(Σ_x p(x)ρ_x) − Σ_x p(x) S(ρ_x)`.
pub fn holevo_mutual_information<T: Real>(cq: &CqState<T>) -> T {
    let tol = T::of(T::default_tolerances().prob);
    let avg = operator_entropy(&cq.average_state());
    let cond = cq
        .probs
        .iter()
        .zip(&cq.ref_states)
        .filter(|(p, _)| **p > tol)
        .fold(T::zero(), |acc, (&p, s)| acc + p * von_neumann_entropy(s));
    (avg - cond).max(T::zero())
}

/// Block-diagonal hybrid operator `Σ_k |k⟩⟨k| ⊗ W_k` over a classical register.
///
/// Blocks carry their weights (`Tr W_k = p(k)`). Entropy is additive over blocks.
#[derive(Debug, Clone)]
pub struct HybridState<T: Real> {
    pub blocks: Vec<ComplexOperator<T>>,
}

impl<T: Real> HybridState<T> {
    pub fn new(blocks: Vec<ComplexOperator<T>>) -> Self {
        HybridState { blocks }
    }

    pub fn entropy(&self) -> T {
        self.blocks.iter().fold(T::zero(), |acc, b| acc + operator_entropy(b))
    }

    pub fn block_dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.dim())
    }

    /// Dense block-diagonal matrix, guarded by `cap` on the total dimension.
    pub fn to_dense(&self, cap: usize) -> Result<ComplexOperator<T>> {
        let d = self.block_dim();
        let total = d * self.blocks.len();
        if total > cap {
            return Err(Error::SizeLimitExceeded { size: total, cap });
        }
        let mut m = ComplexOperator::zeros(total).into_matrix();
        for (k, b) in self.blocks.iter().enumerate() {
            m.view_mut((k * d, k * d), (d, d)).copy_from(b.matrix());
        }
        ComplexOperator::from_matrix(m)
    }
}

/// Every entropic quantity entering the two rate regions, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateQuantities {
    #[serde(rename = "iXAXB_R")]
    pub i_xaxb_r: f64,
    #[serde(rename = "iXB_R_given_XA")]
    pub i_xb_r_given_xa: f64,
    #[serde(rename = "iXB_RXA")]
    pub i_xb_rxa: f64,
    #[serde(rename = "hXB_given_XA")]
    pub h_xb_given_xa: f64,
    #[serde(rename = "hXB")]
    pub h_xb: f64,
    #[serde(rename = "hXA")]
    pub h_xa: f64,
    #[serde(rename = "iXA_R")]
    pub i_xa_r: f64,
    #[serde(rename = "iXB_R")]
    pub i_xb_r: f64,
    #[serde(rename = "iXAXB")]
    pub i_xa_xb: f64,
    #[serde(rename = "hR")]
    pub h_r: f64,
    #[serde(rename = "hR_given_XA")]
    pub h_r_given_xa: f64,
    /// `|I(X_AX_B;R) − I(X_A;R) − I(X_B;R|X_A)|` with the last term computed directly.
    pub chain_rule_gap: f64,
}

fn joint_probs<T: Real>(jm: &JointOutcomeModel<T>) -> Vec<T> {
    jm.cq.probs.clone()
}

/// Computes all rate quantities from a joint `(x_A, x_B)` model with reference.
pub fn conditional_rate_quantities<T: Real>(jm: &JointOutcomeModel<T>) -> Result<RateQuantities> {
    let tol = T::of(T::default_tolerances().prob);
    let pa = jm.probs_a();
    let pb = jm.probs_b();
    let h_xa = shannon_entropy(&pa)?;
    let h_xb = shannon_entropy(&pb)?;
    let h_ab = shannon_entropy(&joint_probs(jm))?;
    let ca = jm.marginal_a();
    let cb = jm.marginal_b();
    let i_xa_r = holevo_mutual_information(&ca);
    let i_xaxb_r = holevo_mutual_information(&jm.cq);
    let i_xb_r = holevo_mutual_information(&cb);

    // Direct conditional Holevo: Σ_a p(a) [S(ρ_a) − Σ_b p(b|a) S(ρ_ab)].
    let mut direct = T::zero();
    for a in 0..jm.a_size {
        if pa[a] <= tol {
            continue;
        }
        let mut inner = von_neumann_entropy(&ca.ref_states[a]);
        for b in 0..jm.b_size {
            let idx = jm.index(a, b);
            if jm.cq.probs[idx] > tol {
                inner -= jm.cq.probs[idx] / pa[a] * von_neumann_entropy(&jm.cq.ref_states[idx]);
            }
        }
        direct += pa[a] * inner;
    }
    let chain = i_xaxb_r - i_xa_r;

    // I(X_B; R X_A) = S(X_B) + S(R X_A) − S(X_B R X_A).
    let s_rxa = HybridState::new(ca.weighted.clone()).entropy();
    let s_xbrxa = HybridState::new(jm.cq.weighted.clone()).entropy();
    let i_xb_rxa = h_xb + s_rxa - s_xbrxa;

    let h_r = operator_entropy(&jm.cq.average_state());
    let h_r_given_xa = s_rxa - h_xa;

    let f = |x: T| x.to_f64_lossy().max(0.0);
    Ok(RateQuantities {
        i_xaxb_r: f(i_xaxb_r),
        i_xb_r_given_xa: f(chain),
        i_xb_rxa: f(i_xb_rxa),
        h_xb_given_xa: f(h_ab - h_xa),
        h_xb: f(h_xb),
        h_xa: f(h_xa),
        i_xa_r: f(i_xa_r),
        i_xb_r: f(i_xb_r),
        i_xa_xb: f(h_xa + h_xb - h_ab),
        h_r: f(h_r),
        h_r_given_xa: f(h_r_given_xa),
        chain_rule_gap: (chain - direct).abs().to_f64_lossy(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionWithRandomness {
    #[serde(rename = "iXAXB_R")]
    pub i_xaxb_r: f64,
    #[serde(rename = "hXB_given_XA")]
    pub h_xb_given_xa: f64,
    pub requires_alice_randomness: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionWithoutRandomness {
    #[serde(rename = "iXB_RXA")]
    pub i_xb_rxa: f64,
    #[serde(rename = "hXB")]
    pub h_xb: f64,
    pub requires_alice_randomness: bool,
}

/// Corner quantities of Alice's region and Bob's two regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRegionReport {
    #[serde(rename = "iXA_R")]
    pub i_xa_r: f64,
    #[serde(rename = "hXA")]
    pub h_xa: f64,
    pub option1: OptionWithRandomness,
    pub option2: OptionWithoutRandomness,
    pub quantities: RateQuantities,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    #[serde(rename = "rA")]
    pub r_a: f64,
    #[serde(rename = "sA")]
    pub s_a: f64,
    #[serde(rename = "rB")]
    pub r_b: f64,
    #[serde(rename = "sB")]
    pub s_b: f64,
}

/// Bob's choice between the two regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BobOption {
    /// Bob shares Alice's common randomness.
    WithAliceRandomness,
    /// Bob uses only his own common randomness.
    WithoutAliceRandomness,
}

impl RateRegionReport {
    pub fn from_quantities(q: RateQuantities) -> Self {
        RateRegionReport {
            i_xa_r: q.i_xa_r,
            h_xa: q.h_xa,
            option1: OptionWithRandomness {
                i_xaxb_r: q.i_xaxb_r,
                h_xb_given_xa: q.h_xb_given_xa,
                requires_alice_randomness: true,
            },
            option2: OptionWithoutRandomness {
                i_xb_rxa: q.i_xb_rxa,
                h_xb: q.h_xb,
                requires_alice_randomness: false,
            },
            quantities: q,
        }
    }

    /// Bob's `(R_B lower bound, R_B + S_B lower bound)` for an option.
    pub fn bob_bounds(&self, option: BobOption) -> (f64, f64) {
        match option {
            BobOption::WithAliceRandomness => (self.option1.i_xaxb_r, self.option1.h_xb_given_xa),
            BobOption::WithoutAliceRandomness => (self.option2.i_xb_rxa, self.option2.h_xb),
        }
    }

    /// Minimal communication corner; common randomness fills the remaining sum-rate.
    pub fn corner(&self, option: BobOption) -> RatePoint {
        let (rb, sum_b) = self.bob_bounds(option);
        RatePoint {
            r_a: self.i_xa_r,
            s_a: (self.h_xa - self.i_xa_r).max(0.0),
            r_b: rb,
            s_b: (sum_b - rb).max(0.0),
        }
    }

    pub const CSV_HEADER: &'static str =
        "iXA_R,hXA,iXAXB_R,hXB_given_XA,iXB_RXA,hXB,iXB_R_given_XA,iXB_R,iXAXB,hR,hR_given_XA";

    pub fn csv_row(&self) -> String {
        let q = &self.quantities;
        [
            q.i_xa_r,
            q.h_xa,
            q.i_xaxb_r,
            q.h_xb_given_xa,
            q.i_xb_rxa,
            q.h_xb,
            q.i_xb_r_given_xa,
            q.i_xb_r,
            q.i_xa_xb,
            q.h_r,
            q.h_r_given_xa,
        ]
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn evaluate_rate_region<T: Real>(
    rho: &DensityOperator<T>,
    povm: &Povm<T>,
    g_a: &OutcomeFunction,
    g_b: &OutcomeFunction,
) -> Result<RateRegionReport> {
    // The joint model lives on R ⊗ C with dim(R) = dim(C).
    checked_pow(rho.dim(), 2, crate::operator::DEFAULT_DIM_CAP)?;
    let jm = joint_outcome_model(rho, povm, g_a, g_b)?;
    Ok(RateRegionReport::from_quantities(conditional_rate_quantities(&jm)?))
}

/// Checks the four inequalities of the chosen region with tolerance `1e-9`.
pub fn rate_point_feasible(point: &RatePoint, report: &RateRegionReport, option: BobOption) -> bool {
    const TOL: f64 = 1e-9;
    let (rb, sum_b) = report.bob_bounds(option);
    let coords = [point.r_a, point.s_a, point.r_b, point.s_b];
    coords.iter().all(|v| *v >= -TOL)
        && point.r_a >= report.i_xa_r - TOL
        && point.r_a + point.s_a >= report.h_xa - TOL
        && point.r_b >= rb - TOL
        && point.r_b + point.s_b >= sum_b - TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::measurement_channel_with_reference;
    use crate::operator::PureState;
    use crate::scalar::cplx;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn op(re: &[&[f64]]) -> ComplexOperator<f64> {
        let d = re.len();
        ComplexOperator::from_parts(
            &re.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
            &vec![vec![0.0; d]; d],
        )
        .unwrap()
    }

    #[test]
    fn shannon_examples() {
        assert_relative_eq!(shannon_entropy(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(shannon_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert_relative_eq!(shannon_entropy(&[0.5, 0.25, 0.25]).unwrap(), 1.5, epsilon = 1e-15);
        assert!(shannon_entropy(&[0.5, 0.6]).is_err());
        assert!(shannon_entropy(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn von_neumann_examples() {
        let pure = PureState::<f64>::basis(2, 1).density();
        assert!(von_neumann_entropy(&pure).abs() < 1e-14);
        assert_relative_eq!(von_neumann_entropy(&DensityOperator::<f64>::maximally_mixed(2)), 1.0, epsilon = 1e-14);
        let r = DensityOperator::new(ComplexOperator::diag(&[0.75, 0.25])).unwrap();
        let expect = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert_relative_eq!(von_neumann_entropy(&r), expect, epsilon = 1e-14);
        assert!((expect - 0.8113).abs() < 1e-4);
    }

    fn dense_cq_oracle(cq: &CqState<f64>) -> f64 {
        // S(X) + S(R) − S(XR) on the explicit block-diagonal matrix.
        let dense = HybridState::new(cq.weighted.clone()).to_dense(4096).unwrap();
        let s_xr = operator_entropy(&dense);
        let s_x = shannon_entropy(&cq.probs).unwrap();
        let s_r = operator_entropy(&cq.average_state());
        s_x + s_r - s_xr
    }

    #[test]
    fn holevo_examples() {
        let same = CqState::from_weighted(vec![
            op(&[&[0.35, 0.05], &[0.05, 0.15]]),
            op(&[&[0.35, 0.05], &[0.05, 0.15]]),
        ]);
        assert!(holevo_mutual_information(&same).abs() < 1e-12);

        let s = 0.5_f64.sqrt();
        let bell = PureState::new(DVector::from_vec(vec![cplx(s), cplx(0.0), cplx(0.0), cplx(s)])).unwrap();
        let cq = measurement_channel_with_reference(&bell, &Povm::computational(2)).unwrap();
        assert_relative_eq!(holevo_mutual_information(&cq), 1.0, epsilon = 1e-12);
        assert_relative_eq!(dense_cq_oracle(&cq), 1.0, epsilon = 1e-12);

        let classical = CqState::from_weighted(vec![
            ComplexOperator::diag(&[0.5, 0.0, 0.0]),
            ComplexOperator::diag(&[0.0, 0.3, 0.0]),
            ComplexOperator::diag(&[0.0, 0.0, 0.2]),
        ]);
        let h = shannon_entropy(&[0.5, 0.3, 0.2]).unwrap();
        assert_relative_eq!(holevo_mutual_information(&classical), h, epsilon = 1e-12);
    }

    fn trine() -> Povm<f64> {
        let els = (0..3)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 3.0;
                let (c, s) = (t.cos(), t.sin());
                op(&[&[c * c, c * s], &[c * s, s * s]]).scale(2.0 / 3.0)
            })
            .collect();
        Povm::new(els).unwrap()
    }

    #[test]
    fn identical_functions() {
        let rho = DensityOperator::new(op(&[&[0.7, 0.1], &[0.1, 0.3]])).unwrap();
        let g = OutcomeFunction::new(vec![0, 1, 1]).unwrap();
        let r = evaluate_rate_region(&rho, &trine(), &g, &g).unwrap();
        assert_relative_eq!(r.option1.i_xaxb_r, r.i_xa_r, epsilon = 1e-12);
        assert!(r.option1.h_xb_given_xa.abs() < 1e-12);
        let c = r.corner(BobOption::WithAliceRandomness);
        assert_relative_eq!(c.r_b, c.r_a, epsilon = 1e-12);
        assert_eq!(c.s_b, 0.0);
        assert!(r.quantities.chain_rule_gap < 1e-8);
    }

    fn product_scenario() -> (DensityOperator<f64>, Povm<f64>, OutcomeFunction, OutcomeFunction) {
        let pa = [op(&[&[0.9, 0.0], &[0.0, 0.2]]), op(&[&[0.1, 0.0], &[0.0, 0.8]])];
        let qb = [op(&[&[0.5, 0.3], &[0.3, 0.5]]), op(&[&[0.5, -0.3], &[-0.3, 0.5]])];
        let mut els = Vec::new();
        for a in &pa {
            for b in &qb {
                els.push(a.kron(b));
            }
        }
        let r1 = op(&[&[0.6, 0.1], &[0.1, 0.4]]);
        let r2 = op(&[&[0.3, 0.05], &[0.05, 0.7]]);
        (
            DensityOperator::new(r1.kron(&r2)).unwrap(),
            Povm::new(els).unwrap(),
            OutcomeFunction::new(vec![0, 0, 1, 1]).unwrap(),
            OutcomeFunction::new(vec![0, 1, 0, 1]).unwrap(),
        )
    }

    #[test]
    fn independent_product_structure() {
        let (rho, p, ga, gb) = product_scenario();
        let r = evaluate_rate_region(&rho, &p, &ga, &gb).unwrap();
        let q = r.quantities;
        assert_relative_eq!(q.i_xb_rxa, q.i_xb_r, epsilon = 1e-10);
        let c = r.corner(BobOption::WithoutAliceRandomness);
        assert_relative_eq!(c.r_b, q.i_xb_r, epsilon = 1e-10);
        assert!(q.i_xa_xb < 1e-12);
        assert!(r.option2.i_xb_rxa <= r.option2.h_xb + 1e-12);
        assert!(q.chain_rule_gap < 1e-8);
    }

    #[test]
    fn hybrid_quantities_match_dense_oracle() {
        let rho = DensityOperator::new(op(&[&[0.7, 0.1], &[0.1, 0.3]])).unwrap();
        let ga = OutcomeFunction::new(vec![0, 1, 1]).unwrap();
        let gb = OutcomeFunction::new(vec![0, 0, 1]).unwrap();
        let jm = joint_outcome_model(&rho, &trine(), &ga, &gb).unwrap();
        let q = conditional_rate_quantities(&jm).unwrap();
        // Oracle for I(X_B; R X_A): dense σ^{X_B R X_A} with register order (b, a) and R inside.
        let mut blocks = Vec::new();
        for b in 0..jm.b_size {
            for a in 0..jm.a_size {
                blocks.push(jm.cq.weighted[jm.index(a, b)].clone());
            }
        }
        let s_all = operator_entropy(&HybridState::new(blocks).to_dense(64).unwrap());
        let s_rxa = operator_entropy(&HybridState::new(jm.marginal_a().weighted).to_dense(64).unwrap());
        let s_xb = shannon_entropy(&jm.probs_b()).unwrap();
        assert_relative_eq!(q.i_xb_rxa, s_xb + s_rxa - s_all, epsilon = 1e-10);
        assert_relative_eq!(q.i_xaxb_r, dense_cq_oracle(&jm.cq), epsilon = 1e-10);
        assert!(q.i_xb_rxa >= q.i_xb_r - 1e-10);
        assert!(q.i_xa_r <= q.h_xa + 1e-12);
    }

    #[test]
    fn feasibility_checks() {
        let rho = DensityOperator::new(op(&[&[0.7, 0.1], &[0.1, 0.3]])).unwrap();
        let ga = OutcomeFunction::new(vec![0, 1, 1]).unwrap();
        let gb = OutcomeFunction::new(vec![0, 0, 1]).unwrap();
        let r = evaluate_rate_region(&rho, &trine(), &ga, &gb).unwrap();
        for opt in [BobOption::WithAliceRandomness, BobOption::WithoutAliceRandomness] {
            let c = r.corner(opt);
            assert!(rate_point_feasible(&c, &r, opt));
            let mut low = c;
            low.r_a -= 0.1;
            assert!(!rate_point_feasible(&low, &r, opt));
            let up = RatePoint {
                r_a: c.r_a + 0.1,
                s_a: c.s_a + 0.1,
                r_b: c.r_b + 0.1,
                s_b: c.s_b + 0.1,
            };
            assert!(rate_point_feasible(&up, &r, opt));
        }
    }

    #[test]
    fn projective_measurement_of_pure_state() {
        let rho = PureState::<f64>::basis(2, 0).density();
        let g = OutcomeFunction::identity(2);
        let r = evaluate_rate_region(&rho, &Povm::computational(2), &g, &g).unwrap();
        assert!(r.i_xa_r.abs() < 1e-12);
        assert!(r.h_xa >= 0.0);
    }

    #[test]
    fn report_json_has_named_fields() {
        let rho = DensityOperator::<f64>::maximally_mixed(2);
        let g = OutcomeFunction::identity(2);
        let r = evaluate_rate_region(&rho, &Povm::computational(2), &g, &g).unwrap();
        let v = serde_json::to_value(r).unwrap();
        assert!(v["option1"]["requires_alice_randomness"].as_bool().unwrap());
        assert!(!v["option2"]["requires_alice_randomness"].as_bool().unwrap());
        assert!(v["iXA_R"].is_number());
        assert_eq!(r.csv_row().split(',').count(), RateRegionReport::CSV_HEADER.split(',').count());
    }
}
