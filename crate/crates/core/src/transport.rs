//! Enciphered envelope carried over the air link.
//!
//! A short text header followed by a blank line and the raw ciphertext:
//!
//! ```text
//! CARELINK-LINK/1
//! cipher: A5/1
//! subscriber: clinic-handset
//! challenge: 00112233445566778899aabbccddeeff
//! frame: 0
//! time-ns: 00000000000240000000
//! digest: 0123456789abcdef
//!
//! <ciphertext>
//! ```
//!
//! The header travels in clear, as the channel assignment does on a real
//! air interface. `digest` is a truncated SHA-256 of the plaintext and
//! catches a wrong key or a corrupted body.

use crate::domain::PrincipalId;
use crate::link::SimTime;
use crate::security::{crypt_at, Challenge, SessionKey, StreamCipher};
use sha2::{Digest, Sha256};

const MAGIC: &str = "CARELINK-LINK/1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("{0}")]
    Malformed(String),
    #[error("{0}")]
    DecryptFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub cipher: String,
    pub subscriber: PrincipalId,
    pub challenge: Challenge,
    /// First TDMA frame number whose keystream enciphers the body.
    pub frame: u32,
    /// Request: arrival at the receiver. Reply: departure from the sender.
    pub time: SimTime,
    digest: [u8; 8],
    body: Vec<u8>,
}

fn digest(plaintext: &[u8]) -> [u8; 8] {
    Sha256::digest(plaintext)[..8].try_into().unwrap()
}

impl Envelope {
    /// Enciphers `plaintext`. Also returns the frames of keystream consumed.
    pub fn seal(
        suite: &dyn StreamCipher,
        key: SessionKey,
        subscriber: PrincipalId,
        challenge: Challenge,
        frame: u32,
        time: SimTime,
        plaintext: &[u8],
    ) -> Result<(Self, u32), EnvelopeError> {
        let (body, used) = crypt_at(suite, key, frame, plaintext).map_err(|e| EnvelopeError::DecryptFailed(e.to_string()))?;
        Ok((
            Self {
                cipher: suite.name().to_owned(),
                subscriber,
                challenge,
                frame,
                time,
                digest: digest(plaintext),
                body,
            },
            used,
        ))
    }

    pub fn open(&self, suite: &dyn StreamCipher, key: SessionKey) -> Result<Vec<u8>, EnvelopeError> {
        let (plain, _) = crypt_at(suite, key, self.frame, &self.body).map_err(|e| EnvelopeError::DecryptFailed(e.to_string()))?;
        if digest(&plain) != self.digest {
            return Err(EnvelopeError::DecryptFailed("digest mismatch".into()));
        }
        Ok(plain)
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// Frames of keystream the body occupies.
    pub fn frames_used(&self) -> u32 {
        (self.body.len() * 8).div_ceil(crate::security::BITS_PER_FRAME) as u32
    }

    /// Test hook: flips one ciphertext bit.
    pub fn corrupt_body(&mut self, bit: usize) {
        if !self.body.is_empty() {
            let i = (bit / 8) % self.body.len();
            self.body[i] ^= 1 << (bit % 8);
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!(
            "{MAGIC}\ncipher: {}\nsubscriber: {}\nchallenge: {}\nframe: {}\ntime-ns: {:020}\ndigest: {}\n\n",
            self.cipher,
            self.subscriber,
            self.challenge.to_hex(),
            self.frame,
            self.time.as_nanos(),
            hex::encode(self.digest),
        )
        .into_bytes();
        out.extend_from_slice(&self.body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        let bad = |m: &str| EnvelopeError::Malformed(m.to_owned());
        let split = bytes.windows(2).position(|w| w == b"\n\n").ok_or_else(|| bad("no header terminator"))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8"))?;
        let body = bytes[split + 2..].to_vec();
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("not a link envelope"));
        }
        let mut fields = std::collections::HashMap::new();
        for line in lines {
            let (k, v) = line.split_once(": ").ok_or_else(|| bad("header line without ': '"))?;
            if fields.insert(k, v).is_some() {
                return Err(EnvelopeError::Malformed(format!("header {k} repeated")));
            }
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| EnvelopeError::Malformed(format!("missing header {k}")));
        let digest: [u8; 8] = hex::decode(get("digest")?)
            .ok()
            .and_then(|d| d.try_into().ok())
            .ok_or_else(|| bad("bad digest"))?;
        Ok(Self {
            cipher: get("cipher")?.to_owned(),
            subscriber: PrincipalId::new(get("subscriber")?),
            challenge: Challenge::from_hex(get("challenge")?).ok_or_else(|| bad("bad challenge"))?,
            frame: get("frame")?.parse().map_err(|_| bad("bad frame"))?,
            time: SimTime::from_nanos(get("time-ns")?.parse().map_err(|_| bad("bad time"))?),
            digest,
            body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::security::{A51, BITS_PER_FRAME};
    use proptest::prelude::*;

    fn sample(plain: &[u8]) -> Envelope {
        Envelope::seal(&A51, SessionKey(7), "h".into(), Challenge([3; 16]), 5, SimTime::from_nanos(42), plain).unwrap().0
    }

    #[test]
    fn header_layout() {
        let env = sample(b"{}");
        let text = env.encode();
        let head = std::str::from_utf8(&text[..text.len() - 2]).unwrap();
        assert!(head.starts_with("CARELINK-LINK/1\ncipher: A5/1\nsubscriber: h\nchallenge: 0303"));
        assert!(head.contains("frame: 5\ntime-ns: 00000000000000000042\ndigest: "));
    }

    #[test]
    fn wrong_key_or_bit_flip_detected() {
        let env = sample(b"{\"rx\":1}");
        assert_eq!(env.open(&A51, SessionKey(7)).unwrap(), b"{\"rx\":1}");
        assert!(matches!(env.open(&A51, SessionKey(8)), Err(EnvelopeError::DecryptFailed(_))));
        let mut bad = env.clone();
        bad.corrupt_body(3);
        assert!(bad.open(&A51, SessionKey(7)).is_err());
    }

    #[test]
    fn garbage_is_malformed() {
        for g in [&b""[..], b"hello\n\nworld", b"CARELINK-LINK/1\ncipher A5/1\n\n", b"CARELINK-LINK/1\ncipher: A5/1\n\n"] {
            assert!(matches!(Envelope::decode(g), Err(EnvelopeError::Malformed(_))));
        }
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(body in prop::collection::vec(any::<u8>(), 0..600), frame in 0u32..1000, t in any::<u64>()) {
            let (env, used) = Envelope::seal(&A51, SessionKey(t), "clinic".into(), Challenge([9; 16]), frame, SimTime::from_nanos(t), &body).unwrap();
            prop_assert_eq!(used as usize, (body.len() * 8).div_ceil(BITS_PER_FRAME));
            prop_assert_eq!(used, env.frames_used());
            let back = Envelope::decode(&env.encode()).unwrap();
            prop_assert_eq!(&back, &env);
            prop_assert_eq!(back.open(&A51, SessionKey(t)).unwrap(), body);
        }
    }
}
