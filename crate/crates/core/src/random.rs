//! Random test scenarios: Ginibre density operators, random POVMs and outcome functions.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::measurement::{OutcomeFunction, Povm};
use crate::operator::{pinv_sqrt_on_support, ComplexOperator, DensityOperator};
use crate::scalar::{Complex, Real};

fn ginibre<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Complex<T>> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex::new(T::of(re), T::of(im))
    })
}

/// `G G† / Tr(G G†)` with `G` a `dim × rank` complex Gaussian matrix.
pub fn random_density<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> DensityOperator<T> {
    let g = ginibre::<T, R>(rng, dim, rank.max(1));
    let w = ComplexOperator::from_matrix(&g * g.adjoint()).expect("finite");
    DensityOperator::normalized(&w.hermitian_part()).expect("nonzero Gram matrix")
}

/// Random PSD operator of the given rank.
pub fn random_psd<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> ComplexOperator<T> {
    let g = ginibre::<T, R>(rng, dim, rank.max(1));
    ComplexOperator::from_matrix(&g * g.adjoint()).expect("finite").hermitian_part()
}

/// Random complete POVM: `S^{-1/2} G_k S^{-1/2}` with `S = Σ G_k`.
pub fn random_povm<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize, outcomes: usize) -> Povm<T> {
    let outcomes = outcomes.max(1);
    loop {
        let raw: Vec<ComplexOperator<T>> = (0..outcomes)
            .map(|_| {
                let rank = rng.random_range(1..=dim);
                random_psd(rng, dim, rank)
            })
            .collect();
        let sum = raw.iter().fold(ComplexOperator::zeros(dim), |a, e| a + e.clone());
        if sum.min_eigenvalue() <= T::of(1e-6) * sum.max_eigenvalue() {
            continue;
        }
        let b = pinv_sqrt_on_support(&sum, T::zero());
        let els = raw.iter().map(|e| e.conjugate_by(&b).hermitian_part()).collect();
        if let Ok(p) = Povm::new(els) {
            return p;
        }
    }
}

/// Random surjection `0..domain → 0..image`.
pub fn random_outcome_function<R: Rng + ?Sized>(rng: &mut R, domain: usize, image: usize) -> OutcomeFunction {
    let image = image.clamp(1, domain.max(1));
    let mut map: Vec<usize> = (0..domain).map(|i| if i < image { i } else { rng.random_range(0..image) }).collect();
    map.shuffle(rng);
    OutcomeFunction::new(map).expect("surjective by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in 2..5 {
            let rho = random_density::<f64, _>(&mut rng, dim, dim);
            assert!((rho.op().tr() - 1.0).abs() < 1e-12);
            let p = random_povm::<f64, _>(&mut rng, dim, 4);
            assert_eq!(p.len(), 4);
            let g = random_outcome_function(&mut rng, 4, 3);
            assert_eq!(g.image_size(), 3);
        }
    }
}
