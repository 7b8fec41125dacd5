//! Seeded experiment execution and statistics aggregation.
//!
//! An experiment runs `trials` independent trials. Trial `i` owns an
//! [`RngStream`] seeded by [`derive_trial_seed`], so trials can execute in
//! any order or in parallel without changing a single output byte: the
//! records are aggregated by trial index in a plain ordered fold.

mod config;
mod output;

pub use config::{ConfigError, ExperimentConfig, OutputFormat, ProtocolChoice, StrategyChoice};
pub use output::emit;

use thiserror::Error;

use crate::adversary::{attack_experiment, AttackError, EveStrategy, Relay};
use crate::keyschedule::{stream_run, Frame, KeyScheduleError};
use crate::protocol::{
    ChannelTap, PassiveTap, ProtocolConfig, ProtocolConfigError, SingleStageConfig,
    ThreeStageConfig,
};
use crate::rng::{splitmix64_mix, RngStream, GOLDEN_GAMMA};
use crate::state::{BasisPair, Bit};
use crate::unitary::{Angle, NonFiniteAngle, TransformSpec};

#[derive(Debug, Error)]
pub enum TrialError {
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    KeySchedule(#[from] KeyScheduleError),
    #[error(transparent)]
    Protocol(#[from] ProtocolConfigError),
    #[error(transparent)]
    Angle(#[from] NonFiniteAngle),
}

#[derive(Debug, Error)]
#[error("trial {trial} failed: {source}")]
pub struct ExperimentError {
    pub trial: u64,
    #[source]
    pub source: TrialError,
}

/// Per-trial metrics, one row per trial in every output format.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub eve_success_rate: f64,
    pub bob_error_rate: f64,
    pub ambiguity_rate: f64,
    /// Error rate over key-update qubits; 0 outside framed mode.
    pub key_bit_error_rate: f64,
    pub desync: bool,
    /// Channel transits simulated by this trial.
    pub qubits: u64,
}

/// Mean, minimum and maximum of one metric across trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Aggregate {
    fn over<I: Iterator<Item = f64>>(values: I) -> Self {
        let mut count = 0u64;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            count += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if count == 0 {
            return Aggregate {
                mean: 0.0,
                min: 0.0,
                max: 0.0,
            };
        }
        Aggregate {
            mean: sum / count as f64,
            min,
            max,
        }
    }
}

/// Aggregated experiment result plus the per-trial records it was built
/// from, with the config and master seed echoed for provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub config: ExperimentConfig,
    pub per_trial: Vec<TrialRecord>,
    pub eve_success: Aggregate,
    pub bob_error: Aggregate,
    pub ambiguity: Aggregate,
    pub key_bit_error_mean: f64,
    pub desync_count: u64,
    pub total_qubits: u64,
    pub eve_guessed: bool,
}

impl SummaryStats {
    /// Deterministic ordered fold over the records.
    pub fn from_records(config: ExperimentConfig, per_trial: Vec<TrialRecord>) -> Self {
        let eve_success = Aggregate::over(per_trial.iter().map(|r| r.eve_success_rate));
        let bob_error = Aggregate::over(per_trial.iter().map(|r| r.bob_error_rate));
        let ambiguity = Aggregate::over(per_trial.iter().map(|r| r.ambiguity_rate));
        let key_bit_error_mean =
            Aggregate::over(per_trial.iter().map(|r| r.key_bit_error_rate)).mean;
        let desync_count = per_trial.iter().filter(|r| r.desync).count() as u64;
        let total_qubits = per_trial.iter().map(|r| r.qubits).sum();
        let eve_guessed = config.strategy.guesses();
        Self {
            config,
            per_trial,
            eve_success,
            bob_error,
            ambiguity,
            key_bit_error_mean,
            desync_count,
            total_qubits,
            eve_guessed,
        }
    }
}

/// Pure mixing of the master seed and a trial index into that trial's
/// stream seed. For a fixed master seed the map is injective over the whole
/// index space: multiplication by an odd constant, xor, and the SplitMix64
/// finalizer are each bijections on 64-bit words.
pub fn derive_trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64_mix(master_seed ^ trial_index.wrapping_mul(GOLDEN_GAMMA))
}

fn three_stage_spec(
    form: crate::unitary::TransformForm,
    radians: f64,
) -> Result<TransformSpec, TrialError> {
    let angle = Angle::new(radians)?;
    Ok(match form {
        crate::unitary::TransformForm::Rotation => TransformSpec::Rotation(angle),
        crate::unitary::TransformForm::Reflection => TransformSpec::Reflection(angle),
        crate::unitary::TransformForm::PhasePair => TransformSpec::PhasePair(angle),
    })
}

fn build_protocol(choice: &ProtocolChoice) -> Result<ProtocolConfig, TrialError> {
    let basis = BasisPair::computational();
    Ok(match choice {
        ProtocolChoice::ThreeStage { form, theta, phi } => {
            ProtocolConfig::ThreeStage(ThreeStageConfig::new(
                three_stage_spec(*form, *theta)?,
                three_stage_spec(*form, *phi)?,
                basis,
            )?)
        }
        ProtocolChoice::SingleStage { theta } => {
            ProtocolConfig::SingleStage(SingleStageConfig::new(Angle::new(*theta)?, basis)?)
        }
    })
}

fn run_flat_trial(
    cfg: &ExperimentConfig,
    trial: u64,
    rng: &mut RngStream,
) -> Result<TrialRecord, TrialError> {
    let protocol = build_protocol(&cfg.protocol)?;
    let n = cfg.bits_per_trial as usize;
    let alice_bits: Vec<Bit> = (0..n).map(|_| Bit::random(rng)).collect();

    let strategy = match cfg.strategy {
        StrategyChoice::Passive => EveStrategy::Passive,
        StrategyChoice::CloneDuplicate { psi } => EveStrategy::CommuteClone {
            psi: Angle::new(psi)?,
            relay: Relay::Duplicate,
        },
        // The forged stream is the bitwise inverse of what Alice sends.
        StrategyChoice::CloneForge { psi } => EveStrategy::CommuteClone {
            psi: Angle::new(psi)?,
            relay: Relay::Forge(alice_bits.iter().map(|b| b.flip()).collect()),
        },
        // Eve's own stream is drawn from the trial rng, after Alice's bits.
        StrategyChoice::CloneBlock { psi } => EveStrategy::CommuteClone {
            psi: Angle::new(psi)?,
            relay: Relay::Block((0..n).map(|_| Bit::random(rng)).collect()),
        },
        StrategyChoice::AngleGuess { psi } => EveStrategy::AngleGuess {
            psi: Angle::new(psi)?,
        },
        StrategyChoice::MeasureResend => EveStrategy::MeasureResend {
            basis: BasisPair::computational(),
        },
    };

    let report = attack_experiment(&protocol, &strategy, &alice_bits, rng)?;
    let transits = match protocol {
        ProtocolConfig::ThreeStage(_) => 3,
        ProtocolConfig::SingleStage(_) => 1,
    };
    Ok(TrialRecord {
        trial,
        eve_success_rate: report.eve_success_rate,
        bob_error_rate: report.bob_error_rate,
        ambiguity_rate: report.ambiguity_rate,
        key_bit_error_rate: 0.0,
        desync: false,
        qubits: cfg.bits_per_trial * transits,
    })
}

fn run_framed_trial(
    cfg: &ExperimentConfig,
    trial: u64,
    rng: &mut RngStream,
) -> Result<TrialRecord, TrialError> {
    let frame_cfg = cfg.frame.expect("framed trial requires a frame config");
    let ProtocolChoice::SingleStage { theta } = cfg.protocol else {
        unreachable!("framing is validated single-stage at parse time");
    };
    // bits_per_trial counts data bits; key-update qubits ride on top.
    let frame_count = (cfg.bits_per_trial / frame_cfg.l() as u64).max(1);
    let frames: Vec<Frame> = (0..frame_count)
        .map(|_| Frame::random(&frame_cfg, rng))
        .collect();

    let mut tap: Box<dyn ChannelTap> = match cfg.strategy {
        StrategyChoice::Passive => Box::new(PassiveTap),
        StrategyChoice::AngleGuess { psi } => Box::new(crate::adversary::eve_angle_guess(
            Angle::new(psi)?,
            BasisPair::computational(),
        )),
        StrategyChoice::MeasureResend => Box::new(crate::adversary::eve_measure_resend(
            BasisPair::computational(),
        )),
        _ => unreachable!("clone strategies are rejected for single-stage at parse time"),
    };

    let out = stream_run(&frame_cfg, Angle::new(theta)?, &frames, tap.as_mut(), rng)?;

    let data = out.data_bits_sent.max(1) as f64;
    let key = out.key_bits_sent.max(1) as f64;
    let total = (out.data_bits_sent + out.key_bits_sent) as f64;
    Ok(TrialRecord {
        trial,
        eve_success_rate: if out.eve_guesses > 0 {
            out.eve_correct as f64 / out.eve_guesses as f64
        } else {
            0.0
        },
        bob_error_rate: out.data_bit_errors() as f64 / data,
        ambiguity_rate: out.ambiguities() as f64 / total,
        key_bit_error_rate: out.key_bit_errors() as f64 / key,
        desync: out.desync,
        qubits: out.data_bits_sent + out.key_bits_sent,
    })
}

fn run_trial(cfg: &ExperimentConfig, trial: u64) -> Result<TrialRecord, TrialError> {
    let mut rng = RngStream::new(derive_trial_seed(cfg.master_seed, trial));
    if cfg.frame.is_some() {
        run_framed_trial(cfg, trial, &mut rng)
    } else {
        run_flat_trial(cfg, trial, &mut rng)
    }
}

/// Runs every trial sequentially. Always available; the parallel runner
/// produces byte-identical statistics.
pub fn run_experiment_sequential(cfg: &ExperimentConfig) -> Result<SummaryStats, ExperimentError> {
    let records = (0..cfg.trials)
        .map(|trial| run_trial(cfg, trial).map_err(|source| ExperimentError { trial, source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SummaryStats::from_records(cfg.clone(), records))
}

/// Runs trials across the rayon thread pool. Records come back in trial
/// order and are folded exactly like the sequential runner, so thread count
/// never changes the output.
#[cfg(feature = "parallel")]
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SummaryStats, ExperimentError> {
    use rayon::prelude::*;
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, trial).map_err(|source| ExperimentError { trial, source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SummaryStats::from_records(cfg.clone(), records))
}

/// Sequential fallback used when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SummaryStats, ExperimentError> {
    run_experiment_sequential(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::TransformForm;
    use std::collections::HashSet;
    use std::f64::consts::FRAC_PI_4;

    fn rotation_mitm_config(trials: u64, bits: u64) -> ExperimentConfig {
        ExperimentConfig {
            protocol: ProtocolChoice::ThreeStage {
                form: TransformForm::Rotation,
                theta: 0.31,
                phi: 1.7,
            },
            strategy: StrategyChoice::CloneDuplicate { psi: 2.4 },
            trials,
            bits_per_trial: bits,
            frame: None,
            master_seed: 0xfeed,
            output_format: OutputFormat::Json,
        }
    }

    #[test]
    fn trial_seed_derivation_is_deterministic_and_injective() {
        assert_eq!(derive_trial_seed(42, 7), derive_trial_seed(42, 7));
        let mut seen = HashSet::with_capacity(1_000_000);
        for i in 0..1_000_000u64 {
            assert!(seen.insert(derive_trial_seed(42, i)), "collision at {i}");
        }
    }

    #[test]
    fn trial_streams_pass_a_pooled_chi_square() {
        // Pool Born-rule coin flips from many derived streams and check the
        // counts against a fair coin. 6.634896601021213 is the upper 1%
        // quantile of chi-square with one degree of freedom.
        let basis = BasisPair::computational();
        let plus = {
            let x0 = basis.encode(Bit::Zero);
            let x1 = basis.encode(Bit::One);
            crate::state::StateVector::new(
                (x0.amp0() + x1.amp0()) * std::f64::consts::FRAC_1_SQRT_2,
                (x0.amp1() + x1.amp1()) * std::f64::consts::FRAC_1_SQRT_2,
            )
            .unwrap()
        };
        let mut ones = 0u64;
        let total = 200u64 * 100;
        for trial in 0..200u64 {
            let mut rng = RngStream::new(derive_trial_seed(0xd00d, trial));
            for _ in 0..100 {
                if plus.measure_in(&basis, &mut rng) == Bit::One {
                    ones += 1;
                }
            }
        }
        let expected = total as f64 / 2.0;
        let zeros = (total - ones) as f64;
        let chi2 =
            (ones as f64 - expected).powi(2) / expected + (zeros - expected).powi(2) / expected;
        assert!(chi2 < 6.634896601021213, "chi-square {chi2}");
    }

    #[test]
    fn duplicate_mitm_experiment_is_perfect_on_rotations() {
        let cfg = rotation_mitm_config(100, 16);
        let stats = run_experiment_sequential(&cfg).unwrap();
        assert_eq!(stats.eve_success.mean, 1.0);
        assert_eq!(stats.bob_error.mean, 0.0);
        assert_eq!(stats.per_trial.len(), 100);
        assert!(stats.eve_guessed);
        assert_eq!(stats.total_qubits, 100 * 16 * 3);
    }

    #[test]
    fn passive_single_stage_has_zero_rates() {
        let cfg = ExperimentConfig {
            protocol: ProtocolChoice::SingleStage { theta: 1.234 },
            strategy: StrategyChoice::Passive,
            trials: 100,
            bits_per_trial: 32,
            frame: None,
            master_seed: 7,
            output_format: OutputFormat::Json,
        };
        let stats = run_experiment_sequential(&cfg).unwrap();
        assert_eq!(stats.eve_success.mean, 0.0);
        assert_eq!(stats.bob_error.mean, 0.0);
        assert_eq!(stats.ambiguity.mean, 0.0);
        assert_eq!(stats.desync_count, 0);
        assert!(!stats.eve_guessed);
    }

    #[test]
    fn measure_resend_mean_error_matches_the_born_oracle() {
        let cfg = ExperimentConfig {
            protocol: ProtocolChoice::SingleStage { theta: FRAC_PI_4 },
            strategy: StrategyChoice::MeasureResend,
            trials: 100,
            bits_per_trial: 1_000,
            frame: None,
            master_seed: 99,
            output_format: OutputFormat::Json,
        };
        let stats = run_experiment_sequential(&cfg).unwrap();
        assert!(
            (stats.bob_error.mean - 0.5).abs() < 0.01,
            "mean error {}",
            stats.bob_error.mean
        );
    }

    #[test]
    fn framed_trials_report_key_metrics() {
        let cfg = ExperimentConfig {
            protocol: ProtocolChoice::SingleStage { theta: 0.4 },
            strategy: StrategyChoice::Passive,
            trials: 10,
            bits_per_trial: 256,
            frame: Some(crate::keyschedule::FrameConfig::new(64, 4).unwrap()),
            master_seed: 3,
            output_format: OutputFormat::Json,
        };
        let stats = run_experiment_sequential(&cfg).unwrap();
        assert_eq!(stats.desync_count, 0);
        assert_eq!(stats.key_bit_error_mean, 0.0);
        // 4 frames of 64+4 qubits per trial.
        assert_eq!(stats.total_qubits, 10 * 4 * 68);
    }

    #[test]
    fn aggregates_recompute_from_per_trial_records() {
        let cfg = ExperimentConfig {
            protocol: ProtocolChoice::SingleStage { theta: FRAC_PI_4 },
            strategy: StrategyChoice::MeasureResend,
            trials: 50,
            bits_per_trial: 64,
            frame: None,
            master_seed: 11,
            output_format: OutputFormat::Json,
        };
        let stats = run_experiment_sequential(&cfg).unwrap();
        let mean: f64 = stats
            .per_trial
            .iter()
            .map(|r| r.bob_error_rate)
            .sum::<f64>()
            / stats.per_trial.len() as f64;
        assert!((mean - stats.bob_error.mean).abs() < 1e-12);
        let min = stats
            .per_trial
            .iter()
            .map(|r| r.bob_error_rate)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, stats.bob_error.min);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_runs_agree_exactly() {
        let cfg = rotation_mitm_config(64, 32);
        let seq = run_experiment_sequential(&cfg).unwrap();
        let par = run_experiment(&cfg).unwrap();
        assert_eq!(seq, par);
        assert_eq!(
            emit(&seq, OutputFormat::Json),
            emit(&par, OutputFormat::Json)
        );
    }

    #[test]
    fn sequential_runs_are_reproducible() {
        let cfg = rotation_mitm_config(8, 8);
        let a = run_experiment_sequential(&cfg).unwrap();
        let b = run_experiment_sequential(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
