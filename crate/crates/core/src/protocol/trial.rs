//! One seeded protocol run: codebooks, validation, assembly, distance and a sampled transcript.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::operator::{sqrt_psd, ComplexOperator};
use crate::rng::{stream, Purpose};
use crate::scalar::Real;
use crate::stats::median;
use crate::typicality::{PrunedDistribution, Sequence};

use super::assemble::{
    assemble_alice, assemble_bob_family, assemble_bob_povm, distance_breakdown, AliceFamily, BobFamily,
    DistanceBreakdown,
};
use super::codebook::{empirical_e0_check, generate_codebook, Codebook, E0Report};
use super::pipeline::ProtocolSetup;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTranscript {
    pub m_a: u64,
    pub m_b: Option<u64>,
    pub j_a: Option<usize>,
    /// `j_B` (case 2) or `j'_B` (case 1).
    pub j_b: Option<usize>,
    pub alice_output: Option<Sequence>,
    pub bob_output: Option<Sequence>,
    pub bits_to_alice: f64,
    pub bits_to_bob: f64,
    /// A fallback set or the garbage outcome was hit.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub distances: DistanceBreakdown,
    /// Some Alice or Bob cell fell back to `{I}`.
    pub fallback: bool,
    pub alice_fallback_cells: usize,
    pub bob_fallback_cells: usize,
    /// Cells whose sub-POVM check ran (non-degenerate, no `E_c`).
    pub validated_cells: usize,
    pub subpovm_failures: usize,
    pub bob_cells: usize,
    pub ec_cells: usize,
    pub e0: E0Report,
    pub transcript: SimulationTranscript,
}

impl TrialOutcome {
    pub fn ec(&self) -> bool {
        self.ec_cells > 0
    }
}

fn pick<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.enumerate() {
        acc += w.max(0.0);
        if u < acc {
            return Some(i);
        }
    }
    None
}

fn sample_transcript<T: Real>(
    setup: &ProtocolSetup<T>,
    codebook: &Codebook,
    alice: &AliceFamily<T>,
    bob: &BobFamily<T>,
    trial: u64,
) -> Result<SimulationTranscript> {
    let p = &setup.params;
    let mut rng = stream(p.seed, Purpose::Transcript, trial);
    let mut t = SimulationTranscript {
        m_a: rng.random_range(0..p.m_a),
        m_b: None,
        j_a: None,
        j_b: None,
        alice_output: None,
        bob_output: None,
        bits_to_alice: p.bits_to_alice(),
        bits_to_bob: p.bits_to_bob(),
        degenerate: true,
    };
    if alice.cells[t.m_a as usize].fallback {
        return Ok(t);
    }
    let ops = &setup.alice;
    let scale = T::of(alice.prefactor * p.m_a as f64);
    let row = &codebook.alice[t.m_a as usize];
    let weights: Vec<f64> = ops
        .unit_gamma
        .iter()
        .map(|u| u.trace_product(&setup.rho_n).re.to_f64_lossy() * alice.prefactor * p.m_a as f64)
        .collect();
    let Some(j_a) = pick(row.iter().map(|&k| weights[k]), &mut rng) else {
        return Ok(t);
    };
    let x_a = row[j_a];
    t.j_a = Some(j_a);
    t.alice_output = Some(ops.pruned.members[x_a].clone());
    let root = sqrt_psd(&ops.unit_gamma[x_a].scale(scale))?;
    let post = setup.rho_n.conjugate_by(&root);
    let q = post.tr();
    let sigma: ComplexOperator<T> = post.scale(T::one() / q);

    let m_b = rng.random_range(0..p.m_b);
    t.m_b = Some(m_b);
    let cell = &bob.cells[x_a][m_b as usize];
    let Some(bops) = setup.bob[x_a].ops.as_ref() else {
        return Ok(t);
    };
    if cell.fallback {
        return Ok(t);
    }
    let entries = &codebook.bob[x_a][m_b as usize].entries;
    let bscale = bob.prefactors[x_a] * p.m_b as f64;
    let w = entries
        .iter()
        .map(|e| bops.unit_gamma[e.member].trace_product(&sigma).re.to_f64_lossy() * bscale);
    let Some(k) = pick(w, &mut rng) else {
        return Ok(t);
    };
    t.j_b = Some(entries[k].index);
    t.bob_output = Some(bops.pruned.members[entries[k].member].clone());
    t.degenerate = false;
    Ok(t)
}

/// Runs trial `trial` with streams derived from `(seed, trial)`.
pub fn run_protocol_trial<T: Real>(setup: &ProtocolSetup<T>, trial: u64) -> Result<TrialOutcome> {
    let conds: Vec<Option<&PrunedDistribution>> =
        setup.bob.iter().map(|b| b.ops.as_ref().map(|o| &o.pruned)).collect();
    let codebook = generate_codebook(
        &setup.params,
        &setup.alice.pruned,
        setup.bob_marginal.as_ref(),
        &conds,
        trial,
    )?;
    let alice = assemble_alice(setup, &codebook);
    let bob = assemble_bob_family(setup, &codebook);
    let assembly = assemble_bob_povm(setup, &alice, &bob)?;
    let distances = distance_breakdown(setup, &alice, &assembly);
    let e0 = empirical_e0_check(&codebook, &conds, &setup.params);
    let transcript = sample_transcript(setup, &codebook, &alice, &bob, trial)?;

    let alice_fallback_cells = alice.cells.iter().filter(|c| c.fallback).count();
    let bob_all = bob.cells.iter().flatten();
    let bob_fallback_cells = bob_all.clone().filter(|c| c.fallback).count();
    let checked = alice
        .cells
        .iter()
        .chain(bob_all.clone())
        .filter(|c| !c.degenerate && !c.ec);
    Ok(TrialOutcome {
        trial,
        distances,
        fallback: alice_fallback_cells + bob_fallback_cells > 0,
        alice_fallback_cells,
        bob_fallback_cells,
        validated_cells: checked.clone().count(),
        subpovm_failures: checked.filter(|c| !c.valid).count(),
        bob_cells: bob_all.clone().count(),
        ec_cells: bob_all.filter(|c| c.ec).count(),
        e0,
        transcript,
    })
}

/// Medians of the bound components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TermBreakdown {
    pub atypical: f64,
    pub d2: f64,
    pub d3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaithfulnessReport {
    pub trials: usize,
    /// Median of `d` over trials.
    pub d_bob: f64,
    pub d_bob_mean: f64,
    /// Median over trials without any fallback; `None` when every trial fell back.
    pub d_bob_without_fallback: Option<f64>,
    pub d_alice: f64,
    pub term_breakdown: TermBreakdown,
    pub garbage_mass: f64,
    pub subpovm_failure_rate: f64,
    pub ec_rate: f64,
    pub e0_violation: f64,
    pub fallback_rate: f64,
    pub degenerate_transcripts: f64,
}

impl FaithfulnessReport {
    pub fn from_trials(outcomes: &[TrialOutcome]) -> Self {
        let col = |f: &dyn Fn(&TrialOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<f64>>();
        let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let n = outcomes.len();
        let d = col(&|o| o.distances.d);
        let clean: Vec<f64> = outcomes.iter().filter(|o| !o.fallback).map(|o| o.distances.d).collect();
        FaithfulnessReport {
            trials: n,
            d_bob: median(&d),
            d_bob_mean: if n == 0 { f64::NAN } else { d.iter().sum::<f64>() / n as f64 },
            d_bob_without_fallback: (!clean.is_empty()).then(|| median(&clean)),
            d_alice: median(&col(&|o| o.distances.d_alice)),
            term_breakdown: TermBreakdown {
                atypical: median(&col(&|o| o.distances.atypical)),
                d2: median(&col(&|o| o.distances.d2)),
                d3: median(&col(&|o| o.distances.d3)),
            },
            garbage_mass: median(&col(&|o| o.distances.garbage_mass)),
            subpovm_failure_rate: frac(
                outcomes.iter().map(|o| o.subpovm_failures).sum(),
                outcomes.iter().map(|o| o.validated_cells).sum(),
            ),
            ec_rate: frac(
                outcomes.iter().map(|o| o.ec_cells).sum(),
                outcomes.iter().map(|o| o.bob_cells).sum(),
            ),
            e0_violation: frac(outcomes.iter().filter(|o| !o.e0.holds).count(), n),
            fallback_rate: frac(outcomes.iter().filter(|o| o.fallback).count(), n),
            degenerate_transcripts: frac(outcomes.iter().filter(|o| o.transcript.degenerate).count(), n),
        }
    }
}

/// Trials `0..trials` in parallel, returned in trial order.
pub fn run_trials<T: Real>(setup: &ProtocolSetup<T>, trials: usize) -> Result<(Vec<TrialOutcome>, FaithfulnessReport)> {
    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_protocol_trial(setup, t))
        .collect::<Result<Vec<_>>>()?;
    let report = FaithfulnessReport::from_trials(&outcomes);
    Ok((outcomes, report))
}
