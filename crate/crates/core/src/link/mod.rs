//! Deterministic GSM air-interface simulator.
//!
//! The link is a timed bit pipe: channel arithmetic, coverage, TDMA
//! throughput and a seeded loss/disconnect model. Modulation is not modelled.

mod config;
mod time;

pub use config::{Band, CellClass, CellKind, DisconnectWindow, LinkConfig, RateMode};
pub use time::SimTime;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// TDMA timing constants of the air interface.
#[derive(Debug, Clone, Copy)]
pub struct TdmaClock;

impl TdmaClock {
    pub const FRAME_DURATION_S: f64 = 0.004615;
    pub const FRAME_DURATION: SimTime = SimTime::from_nanos(4_615_000);
    /// Gross rate of one carrier, shared by its eight timeslots.
    pub const GROSS_RATE_BPS: u32 = 270_833;
    pub const TIMESLOTS_PER_FRAME: u8 = 8;
}

/// Stop-and-wait attempts per frame before a transfer is abandoned.
pub const MAX_ATTEMPTS_PER_FRAME: u32 = 10;

/// Longest range the standard supports for a non-extended cell.
pub const MAX_BASE_RANGE_KM: f64 = 35.0;

pub const UPLINK_BAND_KHZ: (u32, u32) = (890_000, 915_000);
pub const DOWNLINK_BAND_KHZ: (u32, u32) = (935_000, 960_000);
pub const CHANNEL_SPACING_KHZ: u32 = 200;
pub const DUPLEX_SPACING_KHZ: u32 = 45_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("channel {0} outside 1..=124")]
    InvalidChannel(i64),
    #[error("invalid link configuration: {0}")]
    InvalidConfig(String),
    #[error("receiver at {distance_km} km is outside the {range_km} km cell")]
    OutOfCoverage { distance_km: f64, range_km: f64 },
    #[error("frame {frame} lost {attempts} times; transfer abandoned at {at}")]
    TransferFailed { frame: u64, attempts: u32, at: SimTime },
}

/// Absolute radio-frequency channel number of a GSM-900 carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "i64", into = "u16")]
pub struct Arfcn(u16);

impl Arfcn {
    pub const MIN: u16 = 1;
    pub const MAX: u16 = 124;

    pub fn new(n: i64) -> Result<Self, LinkError> {
        if (i64::from(Self::MIN)..=i64::from(Self::MAX)).contains(&n) {
            Ok(Self(n as u16))
        } else {
            Err(LinkError::InvalidChannel(n))
        }
    }

    pub fn number(self) -> u16 {
        self.0
    }

    pub fn uplink_khz(self) -> u32 {
        UPLINK_BAND_KHZ.0 + CHANNEL_SPACING_KHZ * u32::from(self.0)
    }

    pub fn downlink_khz(self) -> u32 {
        self.uplink_khz() + DUPLEX_SPACING_KHZ
    }

    pub fn all() -> impl Iterator<Item = Arfcn> {
        (Self::MIN..=Self::MAX).map(Arfcn)
    }
}

impl TryFrom<i64> for Arfcn {
    type Error = LinkError;
    fn try_from(n: i64) -> Result<Self, Self::Error> {
        Arfcn::new(n)
    }
}

impl From<Arfcn> for u16 {
    fn from(a: Arfcn) -> u16 {
        a.0
    }
}

/// `(uplink_mhz, downlink_mhz)` for a channel number.
pub fn arfcn_to_frequencies(n: i64) -> Result<(f64, f64), LinkError> {
    let a = Arfcn::new(n)?;
    Ok((f64::from(a.uplink_khz()) / 1000.0, f64::from(a.downlink_khz()) / 1000.0))
}

pub fn tx_power_limit(band: Band) -> f64 {
    match band {
        Band::Gsm850_900 => 2.0,
        Band::Gsm1800_1900 => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    /// Carrier share of the allocated timeslots.
    pub aggregate_bps: f64,
    pub per_channel_bps: f64,
    pub channels: u32,
}

impl Throughput {
    pub fn aggregate_floor(&self) -> u64 {
        self.aggregate_bps.floor() as u64
    }

    pub fn per_channel_floor(&self) -> u64 {
        self.per_channel_bps.floor() as u64
    }
}

/// Rates are kept exact (multiples of 1/16 bit/s, representable in f64) so
/// the per-channel rates always sum to the aggregate. Use the `_floor`
/// accessors for whole bits per second.
pub fn slot_throughput(cfg: &LinkConfig) -> Throughput {
    let slots = u32::from(cfg.timeslots);
    let aggregate_bps = f64::from(TdmaClock::GROSS_RATE_BPS) * f64::from(slots) / f64::from(TdmaClock::TIMESLOTS_PER_FRAME);
    let channels = match cfg.rate {
        RateMode::Full => slots,
        RateMode::Half => 2 * slots,
    };
    Throughput {
        aggregate_bps,
        per_channel_bps: aggregate_bps / f64::from(channels),
        channels,
    }
}

pub fn in_coverage(cfg: &LinkConfig) -> bool {
    cfg.distance_km <= cfg.cell.effective_range_km()
}

/// Outcome of a successful transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub started_at: SimTime,
    pub delivered_at: SimTime,
    pub frames: u64,
    /// Frame transmissions including retransmissions.
    pub attempts: u64,
}

impl Delivery {
    pub fn duration(&self) -> SimTime {
        self.delivered_at - self.started_at
    }
}

/// Seconds needed to serialize `payload_bytes` at the per-channel rate.
pub fn ideal_serialization_s(payload_bytes: usize, cfg: &LinkConfig) -> f64 {
    (payload_bytes as f64 * 8.0) / slot_throughput(cfg).per_channel_bps
}

/// TDMA frames needed to carry `payload_bytes` on one logical channel.
pub fn frames_for(payload_bytes: usize, cfg: &LinkConfig) -> u64 {
    let bits_per_frame = slot_throughput(cfg).per_channel_bps * TdmaClock::FRAME_DURATION_S;
    ((payload_bytes as f64 * 8.0) / bits_per_frame).ceil() as u64
}

/// One connection over the configured link. Owns its loss RNG, so two
/// connections opened on the same stream behave identically.
#[derive(Debug, Clone)]
pub struct GsmLink {
    cfg: LinkConfig,
    rng: ChaCha8Rng,
}

impl GsmLink {
    pub fn open(cfg: &LinkConfig, stream: u64) -> Result<Self, LinkError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(stream);
        Ok(Self { cfg: cfg.clone(), rng })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    /// Pushes `payload_bytes` through the link starting at `start`.
    ///
    /// Frames go out back to back, one per TDMA frame. A lost frame is resent
    /// in the next frame; a frame that would overlap a disconnect window waits
    /// for the window to close.
    pub fn transfer(&mut self, payload_bytes: usize, start: SimTime) -> Result<Delivery, LinkError> {
        if !in_coverage(&self.cfg) {
            return Err(LinkError::OutOfCoverage {
                distance_km: self.cfg.distance_km,
                range_km: self.cfg.cell.effective_range_km(),
            });
        }
        let frames = frames_for(payload_bytes, &self.cfg);
        let mut t = start;
        let mut attempts = 0u64;
        for frame in 0..frames {
            let mut tries = 0;
            loop {
                t = self.after_disconnects(t);
                let lost = self.rng.random::<f64>() < self.cfg.loss_prob;
                t = t + TdmaClock::FRAME_DURATION;
                tries += 1;
                attempts += 1;
                if !lost {
                    break;
                }
                if tries >= MAX_ATTEMPTS_PER_FRAME {
                    return Err(LinkError::TransferFailed { frame, attempts: tries, at: t });
                }
            }
        }
        Ok(Delivery {
            started_at: start,
            delivered_at: t,
            frames,
            attempts,
        })
    }

    fn after_disconnects(&self, mut t: SimTime) -> SimTime {
        // windows may be unsorted or chained; iterate to a fixed point
        loop {
            let end = t + TdmaClock::FRAME_DURATION;
            match self
                .cfg
                .disconnect_windows
                .iter()
                .find(|w| w.start_time() < end && w.end_time() > t)
            {
                Some(w) => t = w.end_time(),
                None => return t,
            }
        }
    }
}

/// One-shot transfer on stream 0 of `cfg`.
pub fn simulate_transfer(payload_bytes: usize, cfg: &LinkConfig, start: SimTime) -> Result<Delivery, LinkError> {
    GsmLink::open(cfg, 0)?.transfer(payload_bytes, start)
}
