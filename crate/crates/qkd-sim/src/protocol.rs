//! The three-stage and single-stage protocols as explicit message-passing
//! state machines over a tap-able channel.
//!
//! A run owns all of its state: the two honest parties, the rng and the
//! transcript. Every qubit on the wire travels inside a [`FlightQubit`]
//! custody token whose payload can be extracted exactly once; forwarding a
//! token that has already been emptied aborts the run. That is how the
//! no-cloning rule becomes an API-level contract instead of a comment.
//!
//! The channel consults a [`ChannelTap`] on every honest send. A tap may
//! pass the qubit through, substitute a replacement, or bounce a message
//! back to the sender, which is exactly the freedom a man-in-the-middle
//! needs to hold one session with Alice and a second one with Bob.

use thiserror::Error;

use crate::rng::RngStream;
use crate::state::{decode_tolerance, BasisPair, Bit, StateError, StateVector};
use crate::unitary::{Angle, TransformForm, TransformSpec, Unitary2};

/// Which leg of a protocol a message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageTag {
    Stage1AliceToBob,
    Stage2BobToAlice,
    Stage3AliceToBob,
    SingleStage,
}

impl std::fmt::Display for StageTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StageTag::Stage1AliceToBob => "stage-1",
            StageTag::Stage2BobToAlice => "stage-2",
            StageTag::Stage3AliceToBob => "stage-3",
            StageTag::SingleStage => "single-stage",
        };
        f.write_str(s)
    }
}

/// Honest protocol roles, used in transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartyId {
    Alice,
    Bob,
}

impl PartyId {
    fn peer(self) -> PartyId {
        match self {
            PartyId::Alice => PartyId::Bob,
            PartyId::Bob => PartyId::Alice,
        }
    }
}

/// One logical stage delivery of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub stage: StageTag,
    pub sender: PartyId,
    pub receiver: PartyId,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("no-cloning violation: flight qubit payload extracted twice during {stage}")]
    CustodyViolation { stage: StageTag },
    #[error("message delivered to a party that was not expecting one")]
    UnexpectedDelivery,
    #[error("tap saw {stage} while in a state that cannot handle it")]
    UnexpectedStage { stage: StageTag },
    #[error("channel hop limit exceeded before the receiver finished")]
    HopLimitExceeded,
    #[error("eavesdropper relay bit stream exhausted at run {run}")]
    RelayExhausted { run: usize },
}

/// Error from [`run_sequence`], annotated with the failing bit index.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("run {index} failed: {source}")]
pub struct SequenceError {
    pub index: usize,
    #[source]
    pub source: ProtocolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ProtocolConfigError {
    #[error("three-stage parties must share one public form, got {alice} and {bob}")]
    MixedForms {
        alice: TransformForm,
        bob: TransformForm,
    },
    #[error("single-stage theta must lie in [0, pi), got {theta}")]
    ThetaOutOfRange { theta: f64 },
    #[error(transparent)]
    State(#[from] StateError),
}

/// Marker raised by [`FlightQubit::extract`] on a second extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("flight qubit payload was already extracted")]
pub struct CustodyViolation;

/// Single-use custody token for a qubit in flight.
///
/// The payload can be taken out exactly once. The token deliberately
/// implements neither `Clone` nor `Copy`.
#[derive(Debug)]
pub struct FlightQubit {
    payload: Option<StateVector>,
}

impl FlightQubit {
    pub fn new(state: StateVector) -> Self {
        Self {
            payload: Some(state),
        }
    }

    /// Takes the payload out. Fails on every call after the first.
    pub fn extract(&mut self) -> Result<StateVector, CustodyViolation> {
        self.payload.take().ok_or(CustodyViolation)
    }

    pub fn is_consumed(&self) -> bool {
        self.payload.is_none()
    }
}

/// What a tap wants the channel to do with a send.
#[derive(Debug)]
pub enum TapAction {
    /// Forward to the party the protocol schedule addresses.
    Deliver(FlightQubit),
    /// Bounce a message back to the sender, impersonating the receiver.
    ReplyToSender(FlightQubit),
}

/// Interposition point invoked on every honest send.
///
/// The tap receives custody of the qubit. Whatever it returns is checked for
/// custody before delivery, so a tap that extracts a payload must hand back
/// a freshly built replacement.
pub trait ChannelTap {
    fn on_send(
        &mut self,
        stage: StageTag,
        qubit: FlightQubit,
        rng: &mut RngStream,
    ) -> Result<TapAction, ProtocolError>;

    /// The bit the tap decoded during the last run, if it produced one.
    /// Implementations reset the slot so each run reports its own guess.
    fn take_eve_bit(&mut self) -> Option<Bit> {
        None
    }
}

/// A tap that forwards every qubit untouched.
#[derive(Debug, Default)]
pub struct PassiveTap;

impl ChannelTap for PassiveTap {
    fn on_send(
        &mut self,
        _stage: StageTag,
        qubit: FlightQubit,
        _rng: &mut RngStream,
    ) -> Result<TapAction, ProtocolError> {
        Ok(TapAction::Deliver(qubit))
    }
}

/// Bob's verdict for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeOutcome {
    Decoded(Bit),
    /// The received state matched neither basis member.
    Ambiguous,
}

impl DecodeOutcome {
    pub fn bit(self) -> Option<Bit> {
        match self {
            DecodeOutcome::Decoded(b) => Some(b),
            DecodeOutcome::Ambiguous => None,
        }
    }

    pub fn is_ambiguous(self) -> bool {
        matches!(self, DecodeOutcome::Ambiguous)
    }
}

/// Everything observable about one protocol run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub bob_bit: DecodeOutcome,
    /// Fidelity between Bob's recovered state and the state Alice encoded.
    pub fidelity_at_bob: f64,
    /// Bob's recovered state before decoding; lets experiments fall back to
    /// a Born-rule measurement when the exact decode is ambiguous.
    pub bob_final_state: StateVector,
    pub transcript: Vec<TranscriptEntry>,
    pub eve_bit: Option<Bit>,
}

/// Parameters of a three-stage session. Both parties must use the same
/// public form; only the angles are secret.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeStageConfig {
    alice: TransformSpec,
    bob: TransformSpec,
    basis: BasisPair,
}

impl ThreeStageConfig {
    pub fn new(
        alice: TransformSpec,
        bob: TransformSpec,
        basis: BasisPair,
    ) -> Result<Self, ProtocolConfigError> {
        if alice.form() != bob.form() {
            return Err(ProtocolConfigError::MixedForms {
                alice: alice.form(),
                bob: bob.form(),
            });
        }
        Ok(Self { alice, bob, basis })
    }

    pub fn alice(&self) -> TransformSpec {
        self.alice
    }

    pub fn bob(&self) -> TransformSpec {
        self.bob
    }

    pub fn basis(&self) -> &BasisPair {
        &self.basis
    }
}

/// Parameters of a single-stage session with a pre-shared rotation angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleStageConfig {
    theta: Angle,
    basis: BasisPair,
}

impl SingleStageConfig {
    /// The shared angle is restricted to the upper half plane `[0, pi)` so
    /// that the rotating key schedule can address every usable value.
    pub fn new(theta: Angle, basis: BasisPair) -> Result<Self, ProtocolConfigError> {
        if theta.radians() >= std::f64::consts::PI {
            return Err(ProtocolConfigError::ThetaOutOfRange {
                theta: theta.radians(),
            });
        }
        Ok(Self { theta, basis })
    }

    pub fn theta(&self) -> Angle {
        self.theta
    }

    pub fn basis(&self) -> &BasisPair {
        &self.basis
    }
}

/// A runnable protocol selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolConfig {
    ThreeStage(ThreeStageConfig),
    SingleStage(SingleStageConfig),
}

impl ProtocolConfig {
    pub fn basis(&self) -> &BasisPair {
        match self {
            ProtocolConfig::ThreeStage(c) => c.basis(),
            ProtocolConfig::SingleStage(c) => c.basis(),
        }
    }
}

/// Ceiling on channel deliveries per run. An honest run needs three; the
/// man-in-the-middle needs four. Anything past this is a misbehaving tap.
const MAX_HOPS: usize = 8;

struct AliceMachine {
    transform: Unitary2,
    inverse: Unitary2,
    replied: bool,
}

impl AliceMachine {
    fn new(transform: Unitary2) -> Self {
        let inverse = transform.dagger();
        Self {
            transform,
            inverse,
            replied: false,
        }
    }

    fn initial_send(&self, message: &StateVector) -> StateVector {
        self.transform.apply(message)
    }

    fn receive(&mut self, state: StateVector) -> Result<StateVector, ProtocolError> {
        if self.replied {
            return Err(ProtocolError::UnexpectedDelivery);
        }
        self.replied = true;
        Ok(self.inverse.apply(&state))
    }
}

enum BobStep {
    Reply(StateVector),
    Finished(StateVector),
}

struct BobMachine {
    transform: Unitary2,
    inverse: Unitary2,
    receipts: u8,
}

impl BobMachine {
    fn new(transform: Unitary2) -> Self {
        let inverse = transform.dagger();
        Self {
            transform,
            inverse,
            receipts: 0,
        }
    }

    fn receive(&mut self, state: StateVector) -> Result<BobStep, ProtocolError> {
        self.receipts += 1;
        match self.receipts {
            1 => Ok(BobStep::Reply(self.transform.apply(&state))),
            2 => Ok(BobStep::Finished(self.inverse.apply(&state))),
            _ => Err(ProtocolError::UnexpectedDelivery),
        }
    }
}

struct WireMessage {
    sender: PartyId,
    stage: StageTag,
    qubit: FlightQubit,
}

/// Runs the tap's action through the custody check and hands back the
/// destination and the raw payload.
fn route(
    action: TapAction,
    sender: PartyId,
    stage: StageTag,
) -> Result<(PartyId, StateVector), ProtocolError> {
    let (dest, mut qubit) = match action {
        TapAction::Deliver(q) => (sender.peer(), q),
        TapAction::ReplyToSender(q) => (sender, q),
    };
    if qubit.is_consumed() {
        return Err(ProtocolError::CustodyViolation { stage });
    }
    let payload = qubit
        .extract()
        .map_err(|_| ProtocolError::CustodyViolation { stage })?;
    Ok((dest, payload))
}

/// Executes one three-stage transmission of `bit`.
///
/// Honest flow: Alice sends `U_A X`, Bob returns `U_B U_A X`, Alice strips
/// her transform with `U_A^dagger`, and Bob finishes with `U_B^dagger`.
/// When the two transforms commute the recovered state is `X` itself, so the
/// decode is exact. Non-commuting pairs are allowed to run; they surface as
/// degraded fidelity and an ambiguous or wrong decode.
pub fn three_stage_run(
    config: &ThreeStageConfig,
    bit: Bit,
    tap: &mut dyn ChannelTap,
    rng: &mut RngStream,
) -> Result<RunOutcome, ProtocolError> {
    let message = config.basis.encode(bit);
    let mut alice = AliceMachine::new(config.alice.realize());
    let mut bob = BobMachine::new(config.bob.realize());

    let mut wire = WireMessage {
        sender: PartyId::Alice,
        stage: StageTag::Stage1AliceToBob,
        qubit: FlightQubit::new(alice.initial_send(&message)),
    };

    let mut final_state = None;
    for _ in 0..MAX_HOPS {
        let WireMessage {
            sender,
            stage,
            qubit,
        } = wire;
        let action = tap.on_send(stage, qubit, rng)?;
        let (dest, payload) = route(action, sender, stage)?;
        match dest {
            PartyId::Alice => {
                let reply = alice.receive(payload)?;
                wire = WireMessage {
                    sender: PartyId::Alice,
                    stage: StageTag::Stage3AliceToBob,
                    qubit: FlightQubit::new(reply),
                };
            }
            PartyId::Bob => match bob.receive(payload)? {
                BobStep::Reply(state) => {
                    wire = WireMessage {
                        sender: PartyId::Bob,
                        stage: StageTag::Stage2BobToAlice,
                        qubit: FlightQubit::new(state),
                    };
                }
                BobStep::Finished(state) => {
                    final_state = Some(state);
                    break;
                }
            },
        }
    }

    let bob_final_state = final_state.ok_or(ProtocolError::HopLimitExceeded)?;
    Ok(RunOutcome {
        bob_bit: decode_outcome(&bob_final_state, &config.basis),
        fidelity_at_bob: bob_final_state.fidelity(&message),
        bob_final_state,
        transcript: three_stage_transcript(),
        eve_bit: tap.take_eve_bit(),
    })
}

fn three_stage_transcript() -> Vec<TranscriptEntry> {
    vec![
        TranscriptEntry {
            stage: StageTag::Stage1AliceToBob,
            sender: PartyId::Alice,
            receiver: PartyId::Bob,
        },
        TranscriptEntry {
            stage: StageTag::Stage2BobToAlice,
            sender: PartyId::Bob,
            receiver: PartyId::Alice,
        },
        TranscriptEntry {
            stage: StageTag::Stage3AliceToBob,
            sender: PartyId::Alice,
            receiver: PartyId::Bob,
        },
    ]
}

fn decode_outcome(state: &StateVector, basis: &BasisPair) -> DecodeOutcome {
    match state.decode_exact(basis, decode_tolerance()) {
        Ok(bit) => DecodeOutcome::Decoded(bit),
        Err(_) => DecodeOutcome::Ambiguous,
    }
}

/// Result of one single-stage wire transit, shared with the key schedule
/// which runs the two endpoints on intentionally divergent angles.
pub(crate) struct TransitOutcome {
    pub final_state: StateVector,
    pub decode: DecodeOutcome,
    pub fidelity: f64,
}

pub(crate) fn single_stage_transit(
    theta_alice: Angle,
    theta_bob: Angle,
    bit: Bit,
    basis: &BasisPair,
    tap: &mut dyn ChannelTap,
    rng: &mut RngStream,
) -> Result<TransitOutcome, ProtocolError> {
    let message = basis.encode(bit);
    let sent = Unitary2::rotation(theta_alice).apply(&message);
    let action = tap.on_send(StageTag::SingleStage, FlightQubit::new(sent), rng)?;
    let (dest, payload) = route(action, PartyId::Alice, StageTag::SingleStage)?;
    if dest != PartyId::Bob {
        // Single-stage has no return leg for anyone to bounce into.
        return Err(ProtocolError::UnexpectedDelivery);
    }
    let final_state = Unitary2::rotation(theta_bob).dagger().apply(&payload);
    Ok(TransitOutcome {
        decode: decode_outcome(&final_state, basis),
        fidelity: final_state.fidelity(&message),
        final_state,
    })
}

/// Executes one single-stage transmission of `bit` under the shared angle.
///
/// Alice sends `U1(theta) X`; Bob, who knows `theta`, applies the inverse
/// rotation directly. With a passive tap the decode is exact.
pub fn single_stage_run(
    config: &SingleStageConfig,
    bit: Bit,
    tap: &mut dyn ChannelTap,
    rng: &mut RngStream,
) -> Result<RunOutcome, ProtocolError> {
    let transit = single_stage_transit(config.theta, config.theta, bit, &config.basis, tap, rng)?;
    Ok(RunOutcome {
        bob_bit: transit.decode,
        fidelity_at_bob: transit.fidelity,
        bob_final_state: transit.final_state,
        transcript: vec![TranscriptEntry {
            stage: StageTag::SingleStage,
            sender: PartyId::Alice,
            receiver: PartyId::Bob,
        }],
        eve_bit: tap.take_eve_bit(),
    })
}

/// Runs the configured protocol once per bit, threading the rng through the
/// runs. Outcomes come back in input order; a failing run reports its index.
pub fn run_sequence(
    config: &ProtocolConfig,
    bits: &[Bit],
    tap: &mut dyn ChannelTap,
    rng: &mut RngStream,
) -> Result<Vec<RunOutcome>, SequenceError> {
    bits.iter()
        .enumerate()
        .map(|(index, &bit)| {
            let run = match config {
                ProtocolConfig::ThreeStage(c) => three_stage_run(c, bit, tap, rng),
                ProtocolConfig::SingleStage(c) => single_stage_run(c, bit, tap, rng),
            };
            run.map_err(|source| SequenceError { index, source })
        })
        .collect()
}
