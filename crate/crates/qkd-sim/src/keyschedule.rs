//! Rotating-key framing for the single-stage protocol.
//!
//! A frame carries `l` data qubits followed by `k` key-update qubits, all
//! transmitted under the current shared angle. The key-update bits decode to
//! an integer `N` and both sides move to `theta = N * pi / 2^k` for the next
//! frame. Alice updates from the bits she sent, Bob from the bits he decoded,
//! so a corrupted key-update leg desynchronizes the two and every later data
//! bit pays for it.
//!
//! Bit weights are `2^0 .. 2^(k-1)` with the first transmitted bit least
//! significant. That keeps `N < 2^k` and therefore `theta` strictly inside
//! the upper half plane `[0, pi)` for every possible key block.

use std::f64::consts::PI;

use thiserror::Error;

use crate::protocol::{single_stage_transit, ChannelTap, DecodeOutcome, ProtocolError};
use crate::rng::RngStream;
use crate::state::{BasisPair, Bit};
use crate::unitary::Angle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KeyScheduleError {
    #[error("frame config requires l >= 1 and 1 <= k <= 32, got l={l}, k={k}")]
    InvalidFrameConfig { l: usize, k: usize },
    #[error("key block must hold between 1 and 32 bits, got {len}")]
    InvalidKeyLength { len: usize },
    #[error("index {n} is out of range for k={k} (need 0 <= N < 2^k)")]
    IndexOutOfRange { n: u32, k: u32 },
    #[error("initial theta must lie in [0, pi), got {theta}")]
    ThetaOutOfRange { theta: f64 },
    #[error("frame {frame} has {data} data bits and {key} key bits, expected {l} and {k}")]
    FrameShape {
        frame: usize,
        data: usize,
        key: usize,
        l: usize,
        k: usize,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Frame layout: `l` data qubits then `k` key-update qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    l: usize,
    k: usize,
}

impl FrameConfig {
    pub fn new(l: usize, k: usize) -> Result<Self, KeyScheduleError> {
        if l < 1 || !(1..=32).contains(&k) {
            return Err(KeyScheduleError::InvalidFrameConfig { l, k });
        }
        Ok(Self { l, k })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// The synchronized key-schedule state of one party.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyState {
    theta: Angle,
    frame_index: u64,
}

impl KeyState {
    pub fn new(theta: Angle) -> Result<Self, KeyScheduleError> {
        if theta.radians() >= PI {
            return Err(KeyScheduleError::ThetaOutOfRange {
                theta: theta.radians(),
            });
        }
        Ok(Self {
            theta,
            frame_index: 0,
        })
    }

    pub fn theta(&self) -> Angle {
        self.theta
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    fn advance(&mut self, theta: Angle) {
        self.theta = theta;
        self.frame_index += 1;
    }
}

/// One frame's worth of payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub data_bits: Vec<Bit>,
    pub key_bits: Vec<Bit>,
}

impl Frame {
    pub fn new(data_bits: Vec<Bit>, key_bits: Vec<Bit>) -> Self {
        Self {
            data_bits,
            key_bits,
        }
    }

    /// A frame filled from the rng, shaped by `config`.
    pub fn random(config: &FrameConfig, rng: &mut RngStream) -> Self {
        Self {
            data_bits: (0..config.l).map(|_| Bit::random(rng)).collect(),
            key_bits: (0..config.k).map(|_| Bit::random(rng)).collect(),
        }
    }
}

/// Decodes a key block into its integer, least-significant bit first:
/// `N = sum_j 2^(j-1) * b_j` for `j = 1..k`.
pub fn decode_index(key_bits: &[Bit]) -> Result<u32, KeyScheduleError> {
    if key_bits.is_empty() || key_bits.len() > 32 {
        return Err(KeyScheduleError::InvalidKeyLength {
            len: key_bits.len(),
        });
    }
    let mut n: u32 = 0;
    for (j, bit) in key_bits.iter().enumerate() {
        if *bit == Bit::One {
            n |= 1 << j;
        }
    }
    Ok(n)
}

/// Maps a decoded index to its angle `N * pi / 2^k`, always inside `[0, pi)`.
pub fn theta_from_index(n: u32, k: u32) -> Result<Angle, KeyScheduleError> {
    if k == 0 || k > 32 || (n as u64) >= (1u64 << k) {
        return Err(KeyScheduleError::IndexOutOfRange { n, k });
    }
    let radians = n as f64 * PI / (1u64 << k) as f64;
    Ok(Angle::new(radians).expect("index angle is finite"))
}

/// Per-frame channel report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameReport {
    pub data_bit_errors: usize,
    pub key_bit_errors: usize,
    /// Exact decodes that came back ambiguous (before the measurement
    /// fallback produced a bit).
    pub data_ambiguities: usize,
    pub key_ambiguities: usize,
    pub alice_theta_after: Angle,
    pub bob_theta_after: Angle,
    pub desynced_after: bool,
}

/// The omniscient view of a framed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutcome {
    pub frames: Vec<FrameReport>,
    /// True when the two theta trajectories diverged at any frame boundary.
    pub desync: bool,
    pub data_bits_sent: u64,
    pub key_bits_sent: u64,
    /// Eve guesses recorded by the tap, and how many matched the sent bit.
    pub eve_guesses: u64,
    pub eve_correct: u64,
}

impl StreamOutcome {
    pub fn data_bit_errors(&self) -> u64 {
        self.frames.iter().map(|f| f.data_bit_errors as u64).sum()
    }

    pub fn key_bit_errors(&self) -> u64 {
        self.frames.iter().map(|f| f.key_bit_errors as u64).sum()
    }

    pub fn ambiguities(&self) -> u64 {
        self.frames
            .iter()
            .map(|f| (f.data_ambiguities + f.key_ambiguities) as u64)
            .sum()
    }
}

/// Sends one bit under the current (possibly divergent) angles and returns
/// Bob's effective bit. Ambiguous exact decodes fall back to a Born-rule
/// measurement so the stream always yields a bit, the way a receiver that
/// must commit to something would behave.
fn transit_bit(
    alice_theta: Angle,
    bob_theta: Angle,
    bit: Bit,
    basis: &BasisPair,
    tap: &mut dyn ChannelTap,
    rng: &mut RngStream,
) -> Result<(Bit, bool, Option<Bit>), ProtocolError> {
    let transit = single_stage_transit(alice_theta, bob_theta, bit, basis, tap, rng)?;
    let (bob_bit, ambiguous) = match transit.decode {
        DecodeOutcome::Decoded(b) => (b, false),
        DecodeOutcome::Ambiguous => (transit.final_state.measure_in(basis, rng), true),
    };
    Ok((bob_bit, ambiguous, tap.take_eve_bit()))
}

/// Runs a framed single-stage stream.
///
/// Every qubit of a frame travels under that frame's angles; after the key
/// block, Alice re-keys from the bits she sent and Bob from the bits he
/// decoded. Divergent trajectories raise the desync flag. The parties get no
/// in-band desync detection; only this omniscient report sees it.
pub fn stream_run(
    config: &FrameConfig,
    initial_theta: Angle,
    frames: &[Frame],
    tap: &mut dyn ChannelTap,
    rng: &mut RngStream,
) -> Result<StreamOutcome, KeyScheduleError> {
    let mut alice = KeyState::new(initial_theta)?;
    let mut bob = KeyState::new(initial_theta)?;
    for (i, frame) in frames.iter().enumerate() {
        if frame.data_bits.len() != config.l || frame.key_bits.len() != config.k {
            return Err(KeyScheduleError::FrameShape {
                frame: i,
                data: frame.data_bits.len(),
                key: frame.key_bits.len(),
                l: config.l,
                k: config.k,
            });
        }
    }

    let basis = BasisPair::computational();
    let mut reports = Vec::with_capacity(frames.len());
    let mut desync = false;
    let mut eve_guesses = 0u64;
    let mut eve_correct = 0u64;

    for frame in frames {
        let mut report_errors = (0usize, 0usize);
        let mut report_ambig = (0usize, 0usize);

        for &bit in &frame.data_bits {
            let (bob_bit, ambiguous, eve) =
                transit_bit(alice.theta(), bob.theta(), bit, &basis, tap, rng)?;
            report_errors.0 += usize::from(bob_bit != bit);
            report_ambig.0 += usize::from(ambiguous);
            if let Some(guess) = eve {
                eve_guesses += 1;
                eve_correct += u64::from(guess == bit);
            }
        }

        let mut bob_key_bits = Vec::with_capacity(config.k);
        for &bit in &frame.key_bits {
            let (bob_bit, ambiguous, eve) =
                transit_bit(alice.theta(), bob.theta(), bit, &basis, tap, rng)?;
            report_errors.1 += usize::from(bob_bit != bit);
            report_ambig.1 += usize::from(ambiguous);
            bob_key_bits.push(bob_bit);
            if let Some(guess) = eve {
                eve_guesses += 1;
                eve_correct += u64::from(guess == bit);
            }
        }

        let k = config.k as u32;
        alice.advance(theta_from_index(decode_index(&frame.key_bits)?, k)?);
        bob.advance(theta_from_index(decode_index(&bob_key_bits)?, k)?);
        let desynced_after = alice.theta() != bob.theta();
        desync |= desynced_after;

        reports.push(FrameReport {
            data_bit_errors: report_errors.0,
            key_bit_errors: report_errors.1,
            data_ambiguities: report_ambig.0,
            key_ambiguities: report_ambig.1,
            alice_theta_after: alice.theta(),
            bob_theta_after: bob.theta(),
            desynced_after,
        });
    }

    Ok(StreamOutcome {
        frames: reports,
        desync,
        data_bits_sent: (frames.len() * config.l) as u64,
        key_bits_sent: (frames.len() * config.k) as u64,
        eve_guesses,
        eve_correct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{FlightQubit, PassiveTap, StageTag, TapAction};
    use crate::state::StateVector;
    use proptest::prelude::*;

    fn bits(pattern: &[u8]) -> Vec<Bit> {
        pattern.iter().map(|&b| Bit::from_bool(b != 0)).collect()
    }

    #[test]
    fn decode_index_examples() {
        assert_eq!(decode_index(&bits(&[0, 0, 0, 0])).unwrap(), 0);
        // 1*1 + 0*2 + 1*4 + 0*8, least-significant bit first.
        assert_eq!(decode_index(&bits(&[1, 0, 1, 0])).unwrap(), 5);
        assert_eq!(decode_index(&bits(&[1, 1, 1, 1])).unwrap(), 15);
        assert!(theta_from_index(15, 4).unwrap().radians() < PI);
    }

    #[test]
    fn decode_index_rejects_bad_lengths() {
        assert!(matches!(
            decode_index(&[]),
            Err(KeyScheduleError::InvalidKeyLength { len: 0 })
        ));
        assert!(matches!(
            decode_index(&[Bit::Zero; 33]),
            Err(KeyScheduleError::InvalidKeyLength { len: 33 })
        ));
    }

    #[test]
    fn theta_from_index_examples() {
        assert_eq!(theta_from_index(0, 4).unwrap().radians(), 0.0);
        let t = theta_from_index(5, 4).unwrap().radians();
        assert!((t - 5.0 * PI / 16.0).abs() < 1e-15);
        assert!((t - 0.9817477042468103).abs() < 1e-12);
        assert!(theta_from_index(16, 4).is_err());
        assert!(theta_from_index(0, 0).is_err());
        assert!(theta_from_index(u32::MAX, 32).is_ok());
    }

    #[test]
    fn decode_index_is_a_bijection_for_small_k() {
        for k in 1..=12usize {
            let mut seen = vec![false; 1 << k];
            for code in 0u32..(1 << k) {
                let block: Vec<Bit> = (0..k).map(|j| Bit::from_bool(code >> j & 1 == 1)).collect();
                let n = decode_index(&block).unwrap() as usize;
                assert!(!seen[n], "collision at k={k}, code={code}");
                seen[n] = true;
                // The induced angle always lands in the upper half plane.
                let theta = theta_from_index(n as u32, k as u32).unwrap();
                assert!(theta.radians() < PI);
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn single_zero_frame_keeps_theta_at_zero() {
        let config = FrameConfig::new(4, 4).unwrap();
        let frame = Frame::new(bits(&[1, 0, 1, 1]), bits(&[0, 0, 0, 0]));
        let mut rng = RngStream::new(1);
        let out = stream_run(&config, Angle::ZERO, &[frame], &mut PassiveTap, &mut rng).unwrap();
        assert!(!out.desync);
        assert_eq!(out.data_bit_errors(), 0);
        assert_eq!(out.key_bit_errors(), 0);
        assert_eq!(out.frames[0].alice_theta_after.radians(), 0.0);
        assert_eq!(out.frames[0].bob_theta_after.radians(), 0.0);
    }

    #[test]
    fn ten_random_frames_stay_synchronized_and_error_free() {
        let config = FrameConfig::new(64, 4).unwrap();
        let mut rng = RngStream::new(2);
        let frames: Vec<Frame> = (0..10).map(|_| Frame::random(&config, &mut rng)).collect();
        let out = stream_run(
            &config,
            Angle::new(0.5).unwrap(),
            &frames,
            &mut PassiveTap,
            &mut rng,
        )
        .unwrap();
        assert!(!out.desync);
        assert_eq!(out.data_bit_errors(), 0);
        assert_eq!(out.key_bit_errors(), 0);
        for (frame, report) in frames.iter().zip(&out.frames) {
            let n = decode_index(&frame.key_bits).unwrap();
            let expected = n as f64 * PI / 16.0;
            assert_eq!(report.alice_theta_after.radians(), expected);
            assert_eq!(report.bob_theta_after.radians(), expected);
        }
    }

    /// Substitutes raw encoded bits for the key block of frame 1, leaving
    /// everything else untouched. Send positions are counted internally.
    struct KeyBlockForger {
        position: usize,
        l: usize,
        k: usize,
        bits: Vec<Bit>,
    }

    impl ChannelTap for KeyBlockForger {
        fn on_send(
            &mut self,
            _stage: StageTag,
            qubit: FlightQubit,
            _rng: &mut RngStream,
        ) -> Result<TapAction, ProtocolError> {
            let pos = self.position;
            self.position += 1;
            if pos >= self.l && pos < self.l + self.k {
                let mut doomed = qubit;
                let _ = doomed.extract();
                let forged = BasisPair::computational().encode(self.bits[pos - self.l]);
                Ok(TapAction::Deliver(FlightQubit::new(forged)))
            } else {
                Ok(TapAction::Deliver(qubit))
            }
        }
    }

    #[test]
    fn forged_key_block_desynchronizes_and_corrupts_the_next_frame() {
        let config = FrameConfig::new(64, 4).unwrap();
        let mut rng = RngStream::new(3);
        // Alice's key block decodes to N=0 (theta stays 0); the forged block
        // decodes to N=8 (theta pi/2), so frame 2 flips every data bit.
        let frame1 = Frame::new(
            (0..64).map(|_| Bit::random(&mut rng)).collect(),
            bits(&[0, 0, 0, 0]),
        );
        let frame2 = Frame::new(
            (0..64).map(|_| Bit::random(&mut rng)).collect(),
            bits(&[0, 0, 0, 0]),
        );
        let mut tap = KeyBlockForger {
            position: 0,
            l: 64,
            k: 4,
            bits: bits(&[0, 0, 0, 1]),
        };
        let out = stream_run(&config, Angle::ZERO, &[frame1, frame2], &mut tap, &mut rng).unwrap();
        assert!(out.desync);
        assert!(out.frames[0].desynced_after);
        assert_eq!(out.frames[0].data_bit_errors, 0);
        assert_eq!(out.frames[1].data_bit_errors, 64);
    }

    #[test]
    fn trajectories_match_on_a_lossless_channel() {
        let mut rng = RngStream::new(4);
        for _ in 0..1_000 {
            let config = FrameConfig::new(1 + (rng.next_u64() % 6) as usize, 4).unwrap();
            let frames: Vec<Frame> = (0..3).map(|_| Frame::random(&config, &mut rng)).collect();
            let theta = Angle::new(rng.next_range(0.0, PI)).unwrap();
            let out = stream_run(&config, theta, &frames, &mut PassiveTap, &mut rng).unwrap();
            assert!(!out.desync);
            assert_eq!(out.data_bit_errors() + out.key_bit_errors(), 0);
            for r in &out.frames {
                assert_eq!(r.alice_theta_after, r.bob_theta_after);
            }
        }
    }

    #[test]
    fn initial_theta_outside_the_half_plane_is_rejected() {
        let config = FrameConfig::new(2, 2).unwrap();
        let err = stream_run(
            &config,
            Angle::new(PI).unwrap(),
            &[],
            &mut PassiveTap,
            &mut RngStream::new(5),
        )
        .unwrap_err();
        assert!(matches!(err, KeyScheduleError::ThetaOutOfRange { .. }));
    }

    #[test]
    fn misshapen_frames_are_rejected() {
        let config = FrameConfig::new(4, 4).unwrap();
        let frame = Frame::new(bits(&[0, 1]), bits(&[0, 0, 0, 0]));
        let err = stream_run(
            &config,
            Angle::ZERO,
            &[frame],
            &mut PassiveTap,
            &mut RngStream::new(6),
        )
        .unwrap_err();
        assert!(matches!(err, KeyScheduleError::FrameShape { frame: 0, .. }));
    }

    #[test]
    fn frame_config_bounds() {
        assert!(FrameConfig::new(0, 4).is_err());
        assert!(FrameConfig::new(4, 0).is_err());
        assert!(FrameConfig::new(4, 33).is_err());
        assert!(FrameConfig::new(1, 32).is_ok());
    }

    #[test]
    fn key_state_enforces_the_half_plane() {
        assert!(KeyState::new(Angle::new(PI).unwrap()).is_err());
        let state = KeyState::new(Angle::new(0.9).unwrap()).unwrap();
        assert_eq!(state.frame_index(), 0);
        assert_eq!(state.theta().radians(), 0.9);
    }

    #[test]
    fn stream_propagates_custody_aborts() {
        struct Thief;
        impl ChannelTap for Thief {
            fn on_send(
                &mut self,
                _stage: StageTag,
                mut qubit: FlightQubit,
                _rng: &mut RngStream,
            ) -> Result<TapAction, ProtocolError> {
                let _: Result<StateVector, _> = qubit.extract();
                Ok(TapAction::Deliver(qubit))
            }
        }
        let config = FrameConfig::new(2, 2).unwrap();
        let frame = Frame::new(bits(&[0, 1]), bits(&[1, 0]));
        let err = stream_run(
            &config,
            Angle::ZERO,
            &[frame],
            &mut Thief,
            &mut RngStream::new(7),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            KeyScheduleError::Protocol(ProtocolError::CustodyViolation { .. })
        ));
    }

    proptest! {
        #[test]
        fn theta_round_trip(k in 1u32..=12, raw in 0u32..4096) {
            let n = raw & ((1u32 << k) - 1);
            let theta = theta_from_index(n, k).unwrap();
            prop_assert!((0.0..PI).contains(&theta.radians()));
            // Recover N from theta exactly.
            let back = (theta.radians() * (1u64 << k) as f64 / PI).round() as u32;
            prop_assert_eq!(back, n);
        }
    }
}
