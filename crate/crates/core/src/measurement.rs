//! POVMs, outcome functions and the sequential (conditional) measurement
//! construction, together with measurement channels that keep the reference
//! system and the equivalence test built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    canonical_purification, pinv_sqrt_on_support, relative_cutoff, sqrt_psd, support_projector,
    trace_distance, ComplexOperator, DensityOperator, PureState,
};
use crate::scalar::Real;

/// Finite POVM (or sub-POVM) with dense integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm<T: Real> {
    dim: usize,
    elements: Vec<ComplexOperator<T>>,
    labels: Vec<usize>,
    complete: bool,
    sink: Option<usize>,
}

impl<T: Real> Povm<T> {
    /// Validates a complete POVM: every element PSD and the sum equal to the identity.
    pub fn new(elements: Vec<ComplexOperator<T>>) -> Result<Self> {
        Self::validated(elements, true)
    }

    /// Validates a sub-POVM: every element PSD and the sum bounded by the identity.
    pub fn sub(elements: Vec<ComplexOperator<T>>) -> Result<Self> {
        Self::validated(elements, false)
    }

    fn validated(elements: Vec<ComplexOperator<T>>, complete: bool) -> Result<Self> {
        let tol = T::default_tolerances();
        let Some(first) = elements.first() else {
            return Err(Error::InvalidParameter("POVM needs at least one element".into()));
        };
        let dim = first.dim();
        let mut sum = ComplexOperator::zeros(dim);
        for (index, e) in elements.iter().enumerate() {
            if e.dim() != dim {
                return Err(Error::InvalidPovmElement {
                    index,
                    reason: format!("dimension {} differs from {}", e.dim(), dim),
                });
            }
            let scale = T::one().max(e.max_abs());
            let dev = e.hermitian_deviation();
            if dev > T::of(tol.herm) * scale {
                return Err(Error::InvalidPovmElement {
                    index,
                    reason: format!("not Hermitian (deviation {:e})", dev),
                });
            }
            let min = e.min_eigenvalue();
            if min < -T::of(tol.psd) * scale {
                return Err(Error::InvalidPovmElement {
                    index,
                    reason: format!("not positive semidefinite (min eigenvalue {:e})", min),
                });
            }
            sum += e;
        }
        if complete {
            let dev = (&sum - &ComplexOperator::identity(dim)).op_norm();
            if dev > T::of(tol.spec) {
                return Err(Error::Incomplete {
                    deviation: dev.to_f64_lossy(),
                });
            }
        } else {
            let top = sum.max_eigenvalue();
            if top > T::one() + T::of(tol.psd) {
                return Err(Error::ExceedsIdentity {
                    max_eigenvalue: top.to_f64_lossy(),
                });
            }
        }
        let labels = (0..elements.len()).collect();
        Ok(Povm {
            dim,
            elements: elements.into_iter().map(|e| e.hermitian_part()).collect(),
            labels,
            complete,
            sink: None,
        })
    }

    pub(crate) fn from_parts_unchecked(
        dim: usize,
        elements: Vec<ComplexOperator<T>>,
        complete: bool,
        sink: Option<usize>,
    ) -> Self {
        let labels = (0..elements.len()).collect();
        Povm {
            dim,
            elements,
            labels,
            complete,
            sink,
        }
    }

    /// Computational-basis measurement on `C^dim`.
    pub fn computational(dim: usize) -> Self {
        let elements = (0..dim)
            .map(|i| {
                let mut v = vec![T::zero(); dim];
                v[i] = T::one();
                ComplexOperator::diag(&v)
            })
            .collect();
        Self::from_parts_unchecked(dim, elements, true, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexOperator<T>] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &ComplexOperator<T> {
        &self.elements[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Index of the zero-probability sink outcome added by [`conditional_povm`].
    pub fn sink(&self) -> Option<usize> {
        self.sink
    }

    /// Elements excluding the sink outcome.
    pub fn proper_elements(&self) -> &[ComplexOperator<T>] {
        match self.sink {
            Some(s) => &self.elements[..s],
            None => &self.elements,
        }
    }

    pub fn sum(&self) -> ComplexOperator<T> {
        self.elements
            .iter()
            .fold(ComplexOperator::zeros(self.dim), |acc, e| acc + e.clone())
    }

    /// Outcome probabilities `Tr{Λ_x ρ}`.
    pub fn probabilities(&self, rho: &DensityOperator<T>) -> Vec<T> {
        self.elements
            .iter()
            .map(|e| e.trace_product(rho.op()).re)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct PovmJson<T: Real> {
    elements: Vec<ComplexOperator<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
}

impl<T: Real> Serialize for Povm<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PovmJson {
            elements: self.elements.clone(),
            labels: Some(self.labels.clone()),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Povm<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = PovmJson::<T>::deserialize(d)?;
        let povm = Povm::new(json.elements).map_err(D::Error::custom)?;
        if let Some(labels) = json.labels {
            if labels != povm.labels {
                return Err(D::Error::custom("POVM labels must be 0..k-1 in order"));
            }
        }
        Ok(povm)
    }
}

/// Total map from outcome indices `0..domain_size` onto `0..image_size`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct OutcomeFunction {
    map: Vec<usize>,
    #[serde(skip)]
    image_size: usize,
}

impl OutcomeFunction {
    /// Image size is inferred as `max + 1`; every image index must be hit.
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let image_size = map.iter().copied().max().map_or(0, |m| m + 1);
        Self::with_image_size(map, image_size)
    }

    pub fn with_image_size(map: Vec<usize>, image_size: usize) -> Result<Self> {
        let mut hit = vec![false; image_size];
        for (index, &image) in map.iter().enumerate() {
            if image >= image_size {
                return Err(Error::InvalidOutcomeMap {
                    index,
                    image,
                    image_size,
                });
            }
            hit[image] = true;
        }
        if let Some(missing) = hit.iter().position(|h| !h) {
            return Err(Error::NonContiguousImage { missing });
        }
        Ok(OutcomeFunction { map, image_size })
    }

    pub fn identity(n: usize) -> Self {
        OutcomeFunction {
            map: (0..n).collect(),
            image_size: n,
        }
    }

    pub fn constant(n: usize) -> Self {
        OutcomeFunction {
            map: vec![0; n],
            image_size: 1,
        }
    }

    pub fn domain_size(&self) -> usize {
        self.map.len()
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }
}

impl<'de> Deserialize<'de> for OutcomeFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let map = Vec::<usize>::deserialize(d)?;
        OutcomeFunction::new(map).map_err(D::Error::custom)
    }
}

/// Element `k` is the sum of `Λ_x` over `g(x) = k`.
pub fn coarse_grain<T: Real>(povm: &Povm<T>, g: &OutcomeFunction) -> Result<Povm<T>> {
    if g.domain_size() != povm.len() {
        return Err(Error::SizeMismatch {
            what: "outcome function domain vs POVM outcomes",
            expected: povm.len(),
            actual: g.domain_size(),
        });
    }
    let mut out = vec![ComplexOperator::zeros(povm.dim()); g.image_size()];
    for (x, e) in povm.elements().iter().enumerate() {
        out[g.apply(x)] += e;
    }
    Ok(Povm::from_parts_unchecked(povm.dim(), out, povm.is_complete(), None))
}

/// Sum of `Λ_x` over outcomes with `gA(x) = a` and `gB(x) = b`.
pub fn joint_element<T: Real>(
    povm: &Povm<T>,
    g_a: &OutcomeFunction,
    g_b: &OutcomeFunction,
    a: usize,
    b: usize,
) -> ComplexOperator<T> {
    povm.elements()
        .iter()
        .enumerate()
        .filter(|(x, _)| g_a.apply(*x) == a && g_b.apply(*x) == b)
        .fold(ComplexOperator::zeros(povm.dim()), |acc, (_, e)| acc + e.clone())
}

/// Outcome probability and Lüders-type post-measurement state `√Λ ρ √Λ / Tr{Λρ}`.
pub fn post_measurement_state<T: Real>(
    rho: &DensityOperator<T>,
    element: &ComplexOperator<T>,
) -> Result<(T, DensityOperator<T>)> {
    let prob = element.trace_product(rho.op()).re;
    if prob <= T::of(T::default_tolerances().prob) {
        return Err(Error::NegligibleProbability {
            prob: prob.to_f64_lossy(),
        });
    }
    let root = sqrt_psd(element)?;
    let state = rho.op().conjugate_by(&root).scale(T::one() / prob).hermitian_part();
    Ok((prob, DensityOperator::from_op_unchecked(state)))
}

/// Pieces of the conditional measurement attached to one first-stage outcome.
#[derive(Debug, Clone)]
pub struct ConditionalBranch<T: Real> {
    pub outcome: usize,
    /// `Λ_{x_A}`.
    pub coarse: ComplexOperator<T>,
    /// `√Λ_{x_A}`.
    pub sqrt_coarse: ComplexOperator<T>,
    /// `(√Λ_{x_A})⁺` on the support.
    pub pinv_sqrt: ComplexOperator<T>,
    /// `Π_{x_A}`, the support projector of `Λ_{x_A}`.
    pub support: ComplexOperator<T>,
    /// `{Λ_{x_B|x_A}}` plus a sink outcome when `Π_{x_A} ≠ I`.
    pub povm: Povm<T>,
}

/// Builds `Λ_{x_B|x_A} = (√Λ_{x_A})⁺ [Σ_{gA(x)=x_A, gB(x)=x_B} Λ_x] (√Λ_{x_A})⁺`.
pub fn conditional_branch<T: Real>(
    povm: &Povm<T>,
    g_a: &OutcomeFunction,
    g_b: &OutcomeFunction,
    x_a: usize,
) -> Result<ConditionalBranch<T>> {
    for g in [g_a, g_b] {
        if g.domain_size() != povm.len() {
            return Err(Error::SizeMismatch {
                what: "outcome function domain vs POVM outcomes",
                expected: povm.len(),
                actual: g.domain_size(),
            });
        }
    }
    if x_a >= g_a.image_size() {
        return Err(Error::InvalidParameter(format!(
            "outcome {x_a} outside 0..{}",
            g_a.image_size()
        )));
    }
    let dim = povm.dim();
    let coarse = povm
        .elements()
        .iter()
        .enumerate()
        .filter(|(x, _)| g_a.apply(*x) == x_a)
        .fold(ComplexOperator::zeros(dim), |acc, (_, e)| acc + e.clone());
    let top = coarse.max_eigenvalue();
    if top <= T::of(T::default_tolerances().prob) {
        return Err(Error::EmptyBranch { outcome: x_a });
    }
    let cutoff = relative_cutoff(&coarse);
    let pinv_sqrt = pinv_sqrt_on_support(&coarse, cutoff);
    let support = support_projector(&coarse, cutoff);
    let sqrt_coarse = sqrt_psd(&coarse)?;
    let mut elements: Vec<ComplexOperator<T>> = (0..g_b.image_size())
        .map(|x_b| joint_element(povm, g_a, g_b, x_a, x_b).conjugate_by(&pinv_sqrt).hermitian_part())
        .collect();
    let rank = support.tr();
    let sink = if rank < T::of(dim as f64 - 0.5) {
        elements.push(&ComplexOperator::identity(dim) - &support);
        Some(elements.len() - 1)
    } else {
        None
    };
    Ok(ConditionalBranch {
        outcome: x_a,
        coarse,
        sqrt_coarse,
        pinv_sqrt,
        support,
        povm: Povm::from_parts_unchecked(dim, elements, true, sink),
    })
}

/// Conditional POVM `{Λ_{x_B|x_A}}`, completed on the kernel of `Λ_{x_A}` by a sink outcome.
pub fn conditional_povm<T: Real>(
    povm: &Povm<T>,
    g_a: &OutcomeFunction,
    g_b: &OutcomeFunction,
    x_a: usize,
) -> Result<Povm<T>> {
    Ok(conditional_branch(povm, g_a, g_b, x_a)?.povm)
}

/// The Bob-side measurement realized sequentially:
/// `Σ_{x_A} √Λ_{x_A} Λ_{x_B|x_A} √Λ_{x_A}` for every `x_B`.
pub fn sequential_composition<T: Real>(
    povm: &Povm<T>,
    g_a: &OutcomeFunction,
    g_b: &OutcomeFunction,
) -> Result<Povm<T>> {
    let dim = povm.dim();
    let mut out = vec![ComplexOperator::zeros(dim); g_b.image_size()];
    for x_a in 0..g_a.image_size() {
        let branch = match conditional_branch(povm, g_a, g_b, x_a) {
            Ok(b) => b,
            Err(Error::EmptyBranch { .. }) => continue,
            Err(e) => return Err(e),
        };
        for (x_b, e) in branch.povm.proper_elements().iter().enumerate() {
            out[x_b] += &e.conjugate_by(&branch.sqrt_coarse);
        }
    }
    Ok(Povm::from_parts_unchecked(
        dim,
        out.into_iter().map(|e| e.hermitian_part()).collect(),
        povm.is_complete(),
        None,
    ))
}

/// Classical outcome distribution with the matching conditional reference states.
#[derive(Debug, Clone)]
pub struct CqState<T: Real> {
    pub labels: Vec<usize>,
    pub probs: Vec<T>,
    /// `p(x)·ρ^R_x`, kept exactly even for negligible outcomes.
    pub weighted: Vec<ComplexOperator<T>>,
    /// Normalized reference states; maximally mixed placeholders where `negligible`.
    pub ref_states: Vec<DensityOperator<T>>,
    pub negligible: Vec<bool>,
}

impl<T: Real> CqState<T> {
    /// Builds the record from unnormalized conditional reference operators.
    pub fn from_weighted(weighted: Vec<ComplexOperator<T>>) -> Self {
        let tol = T::of(T::default_tolerances().prob);
        let mut probs = Vec::with_capacity(weighted.len());
        let mut ref_states = Vec::with_capacity(weighted.len());
        let mut negligible = Vec::with_capacity(weighted.len());
        for w in &weighted {
            let p = w.tr().max(T::zero());
            probs.push(p);
            if p > tol {
                ref_states.push(DensityOperator::from_op_unchecked(w.scale(T::one() / p).hermitian_part()));
                negligible.push(false);
            } else {
                ref_states.push(DensityOperator::maximally_mixed(w.dim()));
                negligible.push(true);
            }
        }
        CqState {
            labels: (0..weighted.len()).collect(),
            probs,
            weighted,
            ref_states,
            negligible,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn ref_dim(&self) -> usize {
        self.weighted.first().map_or(0, |w| w.dim())
    }

    /// `Σ_x p(x) ρ^R_x`.
    pub fn average_state(&self) -> ComplexOperator<T> {
        self.weighted
            .iter()
            .fold(ComplexOperator::zeros(self.ref_dim()), |acc, w| acc + w.clone())
    }

    pub fn total_probability(&self) -> T {
        self.probs.iter().fold(T::zero(), |a, &p| a + p)
    }
}

/// Realizes `I^R ⊗ M_Λ(φ)` as a classical-quantum record.
///
/// With `Φ[r, c] = ⟨r,c|φ⟩`, the unnormalized reference state for outcome `x`
/// is `Φ Λ_xᵀ Φ†`.
pub fn measurement_channel_with_reference<T: Real>(phi: &PureState<T>, povm: &Povm<T>) -> Result<CqState<T>> {
    let dc = povm.dim();
    if !phi.dim().is_multiple_of(dc) {
        return Err(Error::DimensionMismatch {
            expected: dc,
            actual: phi.dim(),
        });
    }
    let dr = phi.dim() / dc;
    let amps = phi.amplitudes();
    let big_phi = nalgebra::DMatrix::from_fn(dr, dc, |r, c| amps[r * dc + c]);
    let big_phi_adj = big_phi.adjoint();
    let weighted = povm
        .elements()
        .iter()
        .map(|e| {
            let w = &big_phi * e.matrix().transpose() * &big_phi_adj;
            ComplexOperator::from_matrix_unchecked(w).hermitian_part()
        })
        .collect();
    Ok(CqState::from_weighted(weighted))
}

/// Outcome of [`measurements_equivalent`].
#[derive(Debug, Clone, Serialize)]
pub struct Equivalence {
    pub equivalent: bool,
    pub max_deviation: f64,
    pub per_outcome: Vec<f64>,
}

/// Compares `p_A(x)ρ^R_{A,x}` against `p_B(x)ρ^R_{B,x}` outcome by outcome.
pub fn measurements_equivalent<T: Real>(
    phi: &PureState<T>,
    povm_a: &Povm<T>,
    povm_b: &Povm<T>,
    tol: T,
) -> Result<Equivalence> {
    if povm_a.labels() != povm_b.labels() {
        return Err(Error::LabelMismatch);
    }
    let cq_a = measurement_channel_with_reference(phi, povm_a)?;
    let cq_b = measurement_channel_with_reference(phi, povm_b)?;
    let mut per_outcome = Vec::with_capacity(cq_a.len());
    for x in 0..cq_a.len() {
        let dev = if cq_a.negligible[x] && cq_b.negligible[x] {
            T::zero()
        } else {
            trace_distance(&cq_a.weighted[x], &cq_b.weighted[x])?
        };
        per_outcome.push(dev.to_f64_lossy());
    }
    let max_deviation = per_outcome.iter().copied().fold(0.0, f64::max);
    Ok(Equivalence {
        equivalent: max_deviation <= tol.to_f64_lossy(),
        max_deviation,
        per_outcome,
    })
}

/// Joint classical-quantum model over pairs `(x_A, x_B)` with the reference system.
#[derive(Debug, Clone)]
pub struct JointOutcomeModel<T: Real> {
    pub a_size: usize,
    pub b_size: usize,
    /// Pair `(a, b)` is stored at index `a·b_size + b`.
    pub cq: CqState<T>,
}

impl<T: Real> JointOutcomeModel<T> {
    #[inline]
    pub fn index(&self, a: usize, b: usize) -> usize {
        a * self.b_size + b
    }

    pub fn prob(&self, a: usize, b: usize) -> T {
        self.cq.probs[self.index(a, b)]
    }

    pub fn marginal_a(&self) -> CqState<T> {
        let dim = self.cq.ref_dim();
        let w = (0..self.a_size)
            .map(|a| {
                (0..self.b_size).fold(ComplexOperator::zeros(dim), |acc, b| {
                    acc + self.cq.weighted[self.index(a, b)].clone()
                })
            })
            .collect();
        CqState::from_weighted(w)
    }

    pub fn marginal_b(&self) -> CqState<T> {
        let dim = self.cq.ref_dim();
        let w = (0..self.b_size)
            .map(|b| {
                (0..self.a_size).fold(ComplexOperator::zeros(dim), |acc, a| {
                    acc + self.cq.weighted[self.index(a, b)].clone()
                })
            })
            .collect();
        CqState::from_weighted(w)
    }

    pub fn probs_a(&self) -> Vec<T> {
        (0..self.a_size)
            .map(|a| (0..self.b_size).fold(T::zero(), |s, b| s + self.prob(a, b)))
            .collect()
    }

    pub fn probs_b(&self) -> Vec<T> {
        (0..self.b_size)
            .map(|b| (0..self.a_size).fold(T::zero(), |s, a| s + self.prob(a, b)))
            .collect()
    }

    /// `p(x_B | x_A)` rows; `None` where `p(x_A)` is negligible.
    pub fn conditional_b_given_a(&self) -> Vec<Option<Vec<T>>> {
        let tol = T::of(T::default_tolerances().prob);
        self.probs_a()
            .into_iter()
            .enumerate()
            .map(|(a, pa)| {
                (pa > tol).then(|| (0..self.b_size).map(|b| self.prob(a, b) / pa).collect())
            })
            .collect()
    }
}

/// `p(x_A, x_B) = Tr{Λ_{x_A,x_B} ρ}` with reference states from the canonical purification.
pub fn joint_outcome_model<T: Real>(
    rho: &DensityOperator<T>,
    povm: &Povm<T>,
    g_a: &OutcomeFunction,
    g_b: &OutcomeFunction,
) -> Result<JointOutcomeModel<T>> {
    for g in [g_a, g_b] {
        if g.domain_size() != povm.len() {
            return Err(Error::SizeMismatch {
                what: "outcome function domain vs POVM outcomes",
                expected: povm.len(),
                actual: g.domain_size(),
            });
        }
    }
    if rho.dim() != povm.dim() {
        return Err(Error::DimensionMismatch {
            expected: povm.dim(),
            actual: rho.dim(),
        });
    }
    let (na, nb) = (g_a.image_size(), g_b.image_size());
    let mut elements = Vec::with_capacity(na * nb);
    for a in 0..na {
        for b in 0..nb {
            elements.push(joint_element(povm, g_a, g_b, a, b));
        }
    }
    let pair_povm = Povm::from_parts_unchecked(povm.dim(), elements, povm.is_complete(), None);
    let phi = canonical_purification(rho);
    let cq = measurement_channel_with_reference(&phi, &pair_povm)?;
    Ok(JointOutcomeModel {
        a_size: na,
        b_size: nb,
        cq,
    })
}

/// Elementwise maximum deviation between two operator lists, in operator norm.
pub fn max_element_deviation<T: Real>(a: &[ComplexOperator<T>], b: &[ComplexOperator<T>]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).op_norm())
        .fold(T::zero(), |m, v| m.max(v))
}

/// `I` expressed as a one-element POVM.
pub fn trivial_povm<T: Real>(dim: usize) -> Povm<T> {
    Povm::from_parts_unchecked(dim, vec![ComplexOperator::identity(dim)], true, None)
}
