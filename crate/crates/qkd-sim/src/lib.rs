//! Simulation toolkit for quantum key distribution over secret commuting
//! transforms.
//!
//! The library models two protocols. In the three-stage protocol Alice and
//! Bob each hold a secret 2x2 unitary drawn from a public form; the qubit
//! stays quantum across all three transits and the exchange works exactly
//! when the two transforms commute. In the single-stage variant the rotation
//! angle is pre-shared, Bob inverts it directly, and a rotating key schedule
//! replaces the angle after every frame of traffic.
//!
//! On top of the protocol machinery sits a pluggable eavesdropper layer
//! (passive, commuting-clone man-in-the-middle, angle guessing and
//! intercept-resend) and a seeded Monte Carlo harness that turns all of it
//! into reproducible, machine-readable experiments. With the default
//! `parallel` feature trials fan out across a rayon pool; disabling it
//! falls back to the sequential runner with bit-identical output.
//!
//! Module map:
//!
//! * [`unitary`]: the three transform families, products, adjoints and
//!   commutation queries (numerical and closed form).
//! * [`state`]: state vectors, the orthogonal message pair, fidelity and
//!   Born-rule measurement.
//! * [`protocol`]: the two protocols as message-passing state machines over
//!   a tap-able channel with single-use custody of in-flight qubits.
//! * [`adversary`]: eavesdropper taps and attack scoring.
//! * [`keyschedule`]: frame layout, integer decode and synchronized angle
//!   updates for the single-stage protocol.
//! * [`harness`]: experiment configuration, trial seeding, parallel
//!   execution and byte-exact JSON/CSV emission.

pub mod adversary;
pub mod harness;
pub mod keyschedule;
pub mod protocol;
pub mod rng;
pub mod state;
pub mod unitary;

pub use adversary::{attack_experiment, AttackReport, EveStrategy, Relay};
pub use harness::{
    derive_trial_seed, emit, run_experiment, run_experiment_sequential, ExperimentConfig,
    OutputFormat, SummaryStats,
};
pub use keyschedule::{decode_index, stream_run, theta_from_index, Frame, FrameConfig};
pub use protocol::{
    run_sequence, single_stage_run, three_stage_run, ChannelTap, FlightQubit, ProtocolConfig,
    RunOutcome, SingleStageConfig, StageTag, TapAction, ThreeStageConfig,
};
pub use rng::RngStream;
pub use state::{BasisPair, Bit, StateVector};
pub use unitary::{commutes_analytic, Angle, Tolerance, TransformForm, TransformSpec, Unitary2};
