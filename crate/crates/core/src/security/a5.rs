//! A5-family keystream generators.

use super::{Keystream, SecurityError, SessionKey, StreamCipher};

/// Bits of keystream produced per frame (two 114-bit bursts).
pub const BITS_PER_FRAME: usize = 228;
/// Frame numbers are 22 bits wide.
pub const MAX_FRAME_NUMBER: u32 = (1 << 22) - 1;

const R1_MASK: u32 = 0x07_FFFF;
const R2_MASK: u32 = 0x3F_FFFF;
const R3_MASK: u32 = 0x7F_FFFF;

const R1_MID: u32 = 1 << 8;
const R2_MID: u32 = 1 << 10;
const R3_MID: u32 = 1 << 10;

// feedback taps: R1 bits 13,16,17,18; R2 bits 20,21; R3 bits 7,20,21,22
const R1_TAPS: u32 = 0x07_2000;
const R2_TAPS: u32 = 0x30_0000;
const R3_TAPS: u32 = 0x70_0080;

const R1_OUT: u32 = 1 << 18;
const R2_OUT: u32 = 1 << 21;
const R3_OUT: u32 = 1 << 22;

pub fn majority(a: bool, b: bool, c: bool) -> bool {
    (a & b) | (a & c) | (b & c)
}

#[inline]
fn parity(x: u32) -> u32 {
    x.count_ones() & 1
}

#[inline]
fn clock_register(reg: u32, mask: u32, taps: u32) -> u32 {
    ((reg << 1) & mask) | parity(reg & taps)
}

/// A5/1: three LFSRs of 19, 22 and 23 bits with majority-rule clocking.
#[derive(Debug, Clone)]
struct A51State {
    r1: u32,
    r2: u32,
    r3: u32,
}

impl A51State {
    fn clock_all(&mut self) {
        self.r1 = clock_register(self.r1, R1_MASK, R1_TAPS);
        self.r2 = clock_register(self.r2, R2_MASK, R2_TAPS);
        self.r3 = clock_register(self.r3, R3_MASK, R3_TAPS);
    }

    fn clock_majority(&mut self) {
        let (c1, c2, c3) = (self.r1 & R1_MID != 0, self.r2 & R2_MID != 0, self.r3 & R3_MID != 0);
        let maj = majority(c1, c2, c3);
        if c1 == maj {
            self.r1 = clock_register(self.r1, R1_MASK, R1_TAPS);
        }
        if c2 == maj {
            self.r2 = clock_register(self.r2, R2_MASK, R2_TAPS);
        }
        if c3 == maj {
            self.r3 = clock_register(self.r3, R3_MASK, R3_TAPS);
        }
    }

    fn output(&self) -> bool {
        (parity(self.r1 & R1_OUT) ^ parity(self.r2 & R2_OUT) ^ parity(self.r3 & R3_OUT)) == 1
    }

    fn setup(key: SessionKey, frame: u32) -> Self {
        let mut s = Self { r1: 0, r2: 0, r3: 0 };
        let key = key.to_bytes();
        for i in 0..64 {
            s.clock_all();
            let bit = u32::from((key[i / 8] >> (i % 8)) & 1);
            s.r1 ^= bit;
            s.r2 ^= bit;
            s.r3 ^= bit;
        }
        for i in 0..22 {
            s.clock_all();
            let bit = (frame >> i) & 1;
            s.r1 ^= bit;
            s.r2 ^= bit;
            s.r3 ^= bit;
        }
        for _ in 0..100 {
            s.clock_majority();
        }
        s
    }
}

fn check_request(frame: u32, n_bits: usize) -> Result<(), SecurityError> {
    if frame > MAX_FRAME_NUMBER {
        return Err(SecurityError::FrameNumberOverflow(frame));
    }
    if n_bits > BITS_PER_FRAME {
        return Err(SecurityError::KeystreamRequestTooLong(n_bits));
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct A51;

impl StreamCipher for A51 {
    fn name(&self) -> &str {
        "A5/1"
    }

    fn keystream(&self, key: SessionKey, frame: u32, n_bits: usize) -> Result<Keystream, SecurityError> {
        check_request(frame, n_bits)?;
        let mut state = A51State::setup(key, frame);
        let bits = (0..n_bits).map(|_| {
            state.clock_majority();
            state.output()
        });
        Ok(Keystream::from_bits(bits))
    }
}

/// Stand-in registered as "A5/2". It is a single regularly clocked 19-bit
/// LFSR and does NOT implement the real A5/2; it exists so the suite list
/// has a weaker alternative to negotiate against.
#[derive(Debug, Default, Clone, Copy)]
pub struct WeakToyCipher;

impl StreamCipher for WeakToyCipher {
    fn name(&self) -> &str {
        "A5/2"
    }

    fn keystream(&self, key: SessionKey, frame: u32, n_bits: usize) -> Result<Keystream, SecurityError> {
        check_request(frame, n_bits)?;
        let folded = (key.0 ^ (key.0 >> 19) ^ (key.0 >> 38) ^ u64::from(frame)) as u32;
        let mut reg = (folded & R1_MASK) | 1;
        let bits = (0..n_bits).map(|_| {
            reg = clock_register(reg, R1_MASK, R1_TAPS);
            reg & R1_OUT != 0
        });
        Ok(Keystream::from_bits(bits))
    }
}

/// Identity cipher: an all-zero keystream.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullCipher;

impl StreamCipher for NullCipher {
    fn name(&self) -> &str {
        "NULL"
    }

    fn keystream(&self, _key: SessionKey, frame: u32, n_bits: usize) -> Result<Keystream, SecurityError> {
        check_request(frame, n_bits)?;
        Ok(Keystream::from_bits(std::iter::repeat_n(false, n_bits)))
    }
}
