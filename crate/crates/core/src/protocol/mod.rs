//! Random-codebook simulation of the sequential measurement and exact evaluation
//! of its faithfulness.

pub mod assemble;
pub mod codebook;
pub mod params;
pub mod pipeline;
pub mod trial;

pub use assemble::{
    assemble_alice, assemble_bob_family, assemble_bob_povm, distance_breakdown, faithfulness_distance,
    faithfulness_terms, validate_subpovm, AliceFamily, BobAssembly, BobFamily, DistanceBreakdown, FamilyCell,
    SubPovmCheck,
};
pub use codebook::{empirical_e0_check, generate_codebook, BobCell, Codebook, CodebookEntry, E0Report};
pub use params::{CodebookCase, Mode, ProtocolParams, ProtocolSpec, SIZE_CAP};
pub use pipeline::{
    build_cell, build_gamma, build_omega_and_cutoff, build_xi_prime, BobConditioning, CellInput, CellOperators,
    Cutoff, ProtocolSetup, Scenario, SetupSummary, SingleLetter,
};
pub use trial::{run_protocol_trial, run_trials, FaithfulnessReport, SimulationTranscript, TermBreakdown, TrialOutcome};

#[cfg(test)]
pub(crate) mod fixtures {
    use super::Scenario;
    use crate::measurement::{OutcomeFunction, Povm};
    use crate::operator::{ComplexOperator, DensityOperator};

    pub fn bell() -> Scenario<f64> {
        Scenario::new(
            DensityOperator::maximally_mixed(2),
            Povm::computational(2),
            OutcomeFunction::identity(2),
            OutcomeFunction::identity(2),
        )
        .unwrap()
    }

    fn real(rows: &[Vec<f64>]) -> ComplexOperator<f64> {
        let im = vec![vec![0.0; rows.len()]; rows.len()];
        ComplexOperator::from_parts(rows, &im).unwrap()
    }

    pub fn split() -> Scenario<f64> {
        let trine: Vec<ComplexOperator<f64>> = (0..3)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 3.0;
                let (c, s) = (t.cos(), t.sin());
                real(&[vec![c * c, c * s], vec![c * s, s * s]]).scale(2.0 / 3.0)
            })
            .collect();
        let rho = DensityOperator::new(real(&[vec![0.7, 0.1], vec![0.1, 0.3]])).unwrap();
        Scenario::new(
            rho,
            Povm::new(trine).unwrap(),
            OutcomeFunction::new(vec![0, 1, 1]).unwrap(),
            OutcomeFunction::new(vec![0, 0, 1]).unwrap(),
        )
        .unwrap()
    }

    /// Two qubits measured in the computational basis; `X_A` is the first bit and
    /// `X_B` the second, independent with `p(x_B) = (0.7, 0.3)`.
    pub fn classical_pair() -> Scenario<f64> {
        Scenario::new(
            DensityOperator::new(ComplexOperator::diag(&[0.35, 0.15, 0.35, 0.15])).unwrap(),
            Povm::computational(4),
            OutcomeFunction::new(vec![0, 0, 1, 1]).unwrap(),
            OutcomeFunction::new(vec![0, 1, 0, 1]).unwrap(),
        )
        .unwrap()
    }

    pub fn pure() -> Scenario<f64> {
        Scenario::new(
            DensityOperator::new(ComplexOperator::diag(&[1.0, 0.0])).unwrap(),
            Povm::computational(2),
            OutcomeFunction::identity(2),
            OutcomeFunction::identity(2),
        )
        .unwrap()
    }
}
