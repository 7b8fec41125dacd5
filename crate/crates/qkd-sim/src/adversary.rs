//! Eavesdropper strategies and attack experiments.
//!
//! Each strategy is a [`ChannelTap`]. The commuting-transform clone plays a
//! complete man-in-the-middle: it runs the full three-stage dance with Alice
//! while impersonating Bob, decodes her bit, and then runs a second full
//! session toward Bob while impersonating Alice. On the wire that takes the
//! same number of honest sends as a clean run, so the holders of the secret
//! angles never see anything unusual. Whether the attack works is decided
//! entirely by commutation: with the rotation form any angle Eve picks
//! commutes with Alice's, with the conjugate-phase form it almost never does.

use thiserror::Error;

use crate::protocol::{
    run_sequence, ChannelTap, DecodeOutcome, FlightQubit, ProtocolConfig, ProtocolError,
    SequenceError, StageTag, TapAction,
};
use crate::rng::RngStream;
use crate::state::{BasisPair, Bit, StateVector};
use crate::unitary::{Angle, TransformForm, Unitary2};

/// How the clone attack treats Bob after decoding Alice's bit.
#[derive(Debug, Clone, PartialEq)]
pub enum Relay {
    /// Relay the decoded bit; both Eve and Bob obtain the message.
    Duplicate,
    /// Relay a chosen bit stream instead; only Eve obtains the message.
    Forge(Vec<Bit>),
    /// Skip the dance with Alice entirely and feed Bob a chosen bit stream;
    /// communication is blocked and nothing is compromised.
    Block(Vec<Bit>),
}

/// An eavesdropper configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum EveStrategy {
    Passive,
    /// Three-stage man-in-the-middle using a transform of the public form
    /// with Eve's own angle `psi`.
    CommuteClone {
        psi: Angle,
        relay: Relay,
    },
    /// Single-stage intercept that inverts with a guessed angle `psi`.
    AngleGuess {
        psi: Angle,
    },
    /// Single-stage intercept-resend: measure in `basis`, re-encode, forward.
    MeasureResend {
        basis: BasisPair,
    },
}

impl EveStrategy {
    fn name(&self) -> &'static str {
        match self {
            EveStrategy::Passive => "passive",
            EveStrategy::CommuteClone { .. } => "commute-clone",
            EveStrategy::AngleGuess { .. } => "angle-guess",
            EveStrategy::MeasureResend { .. } => "measure-resend",
        }
    }
}

/// Aggregated result of running a strategy over a bit sequence.
#[derive(Debug, Clone)]
pub struct AttackReport {
    /// Eve's per-run decoded bits; empty when the strategy never guesses.
    pub eve_bits: Vec<Bit>,
    /// Bob's effective bits: the exact decode where it succeeded, otherwise
    /// a Born-rule measurement of his recovered state.
    pub bob_bits: Vec<Bit>,
    /// Fraction of Eve's guesses that equal Alice's bits; 0 when she never
    /// guesses (see `eve_guessed`).
    pub eve_success_rate: f64,
    /// Fraction of Bob's bits that differ from what the strategy intended
    /// him to receive: Alice's bits for passive/wire taps and Duplicate,
    /// the forged stream for Forge, Eve's own stream for Block.
    pub bob_error_rate: f64,
    /// Fraction of runs where Bob's exact decode was ambiguous.
    pub ambiguity_rate: f64,
    /// Distinguishes a true 0% success rate from "never guessed".
    pub eve_guessed: bool,
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("strategy {strategy} does not apply to the {protocol} protocol")]
    StrategyMismatch {
        strategy: &'static str,
        protocol: &'static str,
    },
    #[error("relay bit stream has {got} bits but the experiment sends {expected}")]
    RelayLength { expected: usize, got: usize },
    #[error(transparent)]
    Run(#[from] SequenceError),
}

enum ClonePhase {
    Idle,
    AwaitAliceFinal,
    AwaitBobReply,
}

/// Man-in-the-middle tap for the three-stage protocol.
///
/// Per run, for `Duplicate` and `Forge`:
/// 1. intercept Alice's stage-1 send, apply `U_E`, bounce it back to her;
/// 2. intercept her stage-3 reply, strip `U_E`, measure in the public basis
///    to obtain the bit, then open the session toward Bob by delivering a
///    freshly encoded relay bit under `U_E`;
/// 3. intercept Bob's reply, strip `U_E`, return it to him to finish.
///
/// `Block` skips step 1's bounce: Alice's qubit is discarded and Bob is fed
/// Eve's own bit immediately.
pub struct CommuteCloneTap {
    eve_transform: Unitary2,
    eve_inverse: Unitary2,
    basis: BasisPair,
    relay: Relay,
    phase: ClonePhase,
    run_index: usize,
    last_eve_bit: Option<Bit>,
    last_recovered: Option<StateVector>,
}

impl CommuteCloneTap {
    pub fn new(psi: Angle, alice_form: TransformForm, relay: Relay, basis: BasisPair) -> Self {
        let eve_transform = alice_form.realize(psi);
        let eve_inverse = eve_transform.dagger();
        Self {
            eve_transform,
            eve_inverse,
            basis,
            relay,
            phase: ClonePhase::Idle,
            run_index: 0,
            last_eve_bit: None,
            last_recovered: None,
        }
    }

    /// The state Eve recovered from her last completed dance with Alice,
    /// before measurement. Omniscient metric for experiments; a real
    /// eavesdropper has no such readout.
    pub fn recovered_state(&self) -> Option<&StateVector> {
        self.last_recovered.as_ref()
    }

    fn relay_bit(&self, run: usize, decoded: Bit) -> Result<Bit, ProtocolError> {
        match &self.relay {
            Relay::Duplicate => Ok(decoded),
            Relay::Forge(bits) | Relay::Block(bits) => bits
                .get(run)
                .copied()
                .ok_or(ProtocolError::RelayExhausted { run }),
        }
    }
}

impl ChannelTap for CommuteCloneTap {
    fn on_send(
        &mut self,
        stage: StageTag,
        mut qubit: FlightQubit,
        rng: &mut RngStream,
    ) -> Result<TapAction, ProtocolError> {
        let custody = |_| ProtocolError::CustodyViolation { stage };
        match (&self.phase, stage) {
            (ClonePhase::Idle, StageTag::Stage1AliceToBob) => {
                let run = self.run_index;
                self.run_index += 1;
                self.last_recovered = None;
                let intercepted = qubit.extract().map_err(custody)?;
                if let Relay::Block(_) = self.relay {
                    // Discard Alice's qubit and talk to Bob directly.
                    let bit = self.relay_bit(run, Bit::Zero)?;
                    let opening = self.eve_transform.apply(&self.basis.encode(bit));
                    self.phase = ClonePhase::AwaitBobReply;
                    Ok(TapAction::Deliver(FlightQubit::new(opening)))
                } else {
                    // Play Bob in the session with Alice.
                    let echoed = self.eve_transform.apply(&intercepted);
                    self.phase = ClonePhase::AwaitAliceFinal;
                    Ok(TapAction::ReplyToSender(FlightQubit::new(echoed)))
                }
            }
            (ClonePhase::AwaitAliceFinal, StageTag::Stage3AliceToBob) => {
                let run = self.run_index - 1;
                let payload = qubit.extract().map_err(custody)?;
                let recovered = self.eve_inverse.apply(&payload);
                let decoded = recovered.measure_in(&self.basis, rng);
                self.last_recovered = Some(recovered);
                self.last_eve_bit = Some(decoded);
                // Now play Alice in a fresh session with Bob.
                let bit = self.relay_bit(run, decoded)?;
                let opening = self.eve_transform.apply(&self.basis.encode(bit));
                self.phase = ClonePhase::AwaitBobReply;
                Ok(TapAction::Deliver(FlightQubit::new(opening)))
            }
            (ClonePhase::AwaitBobReply, StageTag::Stage2BobToAlice) => {
                let payload = qubit.extract().map_err(custody)?;
                let stripped = self.eve_inverse.apply(&payload);
                self.phase = ClonePhase::Idle;
                Ok(TapAction::ReplyToSender(FlightQubit::new(stripped)))
            }
            _ => Err(ProtocolError::UnexpectedStage { stage }),
        }
    }

    fn take_eve_bit(&mut self) -> Option<Bit> {
        self.last_eve_bit.take()
    }
}

/// Builds the three-stage man-in-the-middle tap. `alice_form` is the public
/// form tag; `psi` is Eve's own secret angle.
pub fn eve_commute_clone(
    psi: Angle,
    alice_form: TransformForm,
    relay: Relay,
    basis: BasisPair,
) -> CommuteCloneTap {
    CommuteCloneTap::new(psi, alice_form, relay, basis)
}

/// Single-stage intercept that guesses the shared angle.
pub struct AngleGuessTap {
    guess: Unitary2,
    guess_inverse: Unitary2,
    basis: BasisPair,
    last_eve_bit: Option<Bit>,
}

impl AngleGuessTap {
    pub fn new(psi: Angle, basis: BasisPair) -> Self {
        let guess = Unitary2::rotation(psi);
        Self {
            guess_inverse: guess.dagger(),
            guess,
            basis,
            last_eve_bit: None,
        }
    }
}

impl ChannelTap for AngleGuessTap {
    fn on_send(
        &mut self,
        stage: StageTag,
        mut qubit: FlightQubit,
        rng: &mut RngStream,
    ) -> Result<TapAction, ProtocolError> {
        if stage != StageTag::SingleStage {
            return Err(ProtocolError::UnexpectedStage { stage });
        }
        let payload = qubit
            .extract()
            .map_err(|_| ProtocolError::CustodyViolation { stage })?;
        let unwound = self.guess_inverse.apply(&payload);
        let bit = unwound.measure_in(&self.basis, rng);
        self.last_eve_bit = Some(bit);
        let forwarded = self.guess.apply(&self.basis.encode(bit));
        Ok(TapAction::Deliver(FlightQubit::new(forwarded)))
    }

    fn take_eve_bit(&mut self) -> Option<Bit> {
        self.last_eve_bit.take()
    }
}

/// Builds the angle-guessing single-stage tap.
pub fn eve_angle_guess(psi: Angle, basis: BasisPair) -> AngleGuessTap {
    AngleGuessTap::new(psi, basis)
}

/// Single-stage intercept-resend: measure in a fixed basis and forward the
/// observed bit re-encoded in that basis. Disturbance shows up as Bob-side
/// errors whenever the shared rotation does not map basis states to basis
/// states.
pub struct MeasureResendTap {
    basis: BasisPair,
    last_eve_bit: Option<Bit>,
}

impl MeasureResendTap {
    pub fn new(basis: BasisPair) -> Self {
        Self {
            basis,
            last_eve_bit: None,
        }
    }
}

impl ChannelTap for MeasureResendTap {
    fn on_send(
        &mut self,
        stage: StageTag,
        mut qubit: FlightQubit,
        rng: &mut RngStream,
    ) -> Result<TapAction, ProtocolError> {
        if stage != StageTag::SingleStage {
            return Err(ProtocolError::UnexpectedStage { stage });
        }
        let payload = qubit
            .extract()
            .map_err(|_| ProtocolError::CustodyViolation { stage })?;
        let bit = payload.measure_in(&self.basis, rng);
        self.last_eve_bit = Some(bit);
        Ok(TapAction::Deliver(FlightQubit::new(self.basis.encode(bit))))
    }

    fn take_eve_bit(&mut self) -> Option<Bit> {
        self.last_eve_bit.take()
    }
}

/// Builds the intercept-resend tap.
pub fn eve_measure_resend(basis: BasisPair) -> MeasureResendTap {
    MeasureResendTap::new(basis)
}

fn protocol_name(config: &ProtocolConfig) -> &'static str {
    match config {
        ProtocolConfig::ThreeStage(_) => "three-stage",
        ProtocolConfig::SingleStage(_) => "single-stage",
    }
}

fn build_tap(
    config: &ProtocolConfig,
    strategy: &EveStrategy,
    bit_count: usize,
) -> Result<Box<dyn ChannelTap>, AttackError> {
    let mismatch = || AttackError::StrategyMismatch {
        strategy: strategy.name(),
        protocol: protocol_name(config),
    };
    match (strategy, config) {
        (EveStrategy::Passive, _) => Ok(Box::new(crate::protocol::PassiveTap)),
        (EveStrategy::CommuteClone { psi, relay }, ProtocolConfig::ThreeStage(c)) => {
            if let Relay::Forge(bits) | Relay::Block(bits) = relay {
                if bits.len() != bit_count {
                    return Err(AttackError::RelayLength {
                        expected: bit_count,
                        got: bits.len(),
                    });
                }
            }
            Ok(Box::new(CommuteCloneTap::new(
                *psi,
                c.alice().form(),
                relay.clone(),
                *c.basis(),
            )))
        }
        (EveStrategy::AngleGuess { psi }, ProtocolConfig::SingleStage(c)) => {
            Ok(Box::new(AngleGuessTap::new(*psi, *c.basis())))
        }
        (EveStrategy::MeasureResend { basis }, ProtocolConfig::SingleStage(_)) => {
            Ok(Box::new(MeasureResendTap::new(*basis)))
        }
        _ => Err(mismatch()),
    }
}

/// Runs the configured protocol over `bits` with the strategy's tap on the
/// channel and scores the outcome.
///
/// Bob's effective bit is his exact decode when it succeeds; an ambiguous
/// decode falls back to a Born-rule measurement of his recovered state
/// (counted in `ambiguity_rate` either way).
pub fn attack_experiment(
    config: &ProtocolConfig,
    strategy: &EveStrategy,
    bits: &[Bit],
    rng: &mut RngStream,
) -> Result<AttackReport, AttackError> {
    let mut tap = build_tap(config, strategy, bits.len())?;
    let outcomes = run_sequence(config, bits, tap.as_mut(), rng)?;

    let basis = config.basis();
    let mut bob_bits = Vec::with_capacity(outcomes.len());
    let mut eve_bits = Vec::new();
    let mut ambiguous = 0usize;
    for outcome in &outcomes {
        let bob_bit = match outcome.bob_bit {
            DecodeOutcome::Decoded(b) => b,
            DecodeOutcome::Ambiguous => {
                ambiguous += 1;
                outcome.bob_final_state.measure_in(basis, rng)
            }
        };
        bob_bits.push(bob_bit);
        if let Some(b) = outcome.eve_bit {
            eve_bits.push(b);
        }
    }

    let intended: Vec<Bit> = match strategy {
        EveStrategy::CommuteClone {
            relay: Relay::Forge(forged),
            ..
        } => forged.clone(),
        EveStrategy::CommuteClone {
            relay: Relay::Block(own),
            ..
        } => own.clone(),
        _ => bits.to_vec(),
    };

    let n = bits.len();
    let eve_guessed = !eve_bits.is_empty();
    let eve_success_rate = if eve_guessed {
        let hits = eve_bits.iter().zip(bits).filter(|(e, a)| e == a).count();
        hits as f64 / n as f64
    } else {
        0.0
    };
    let bob_error_rate = if n == 0 {
        0.0
    } else {
        let errs = bob_bits
            .iter()
            .zip(&intended)
            .filter(|(b, i)| b != i)
            .count();
        errs as f64 / n as f64
    };
    let ambiguity_rate = if n == 0 {
        0.0
    } else {
        ambiguous as f64 / n as f64
    };

    Ok(AttackReport {
        eve_bits,
        bob_bits,
        eve_success_rate,
        bob_error_rate,
        ambiguity_rate,
        eve_guessed,
    })
}
