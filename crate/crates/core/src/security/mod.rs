//! Subscriber authentication and over-the-air stream ciphers.
//!
//! Authentication is GSM-style challenge-response over a pre-shared 128-bit
//! key. The response and the 64-bit session key are derived with
//! HMAC-SHA256 under distinct labels, since the operator algorithms are not
//! standardized. Only the subscriber is authenticated unless mutual
//! authentication is switched on.

pub mod a5;
mod suite;

pub use a5::{A51, NullCipher, WeakToyCipher, BITS_PER_FRAME, MAX_FRAME_NUMBER};
pub use suite::{crypt_at, negotiate_cipher, CipherPolicy, CipherRegistry, CipherSession, StreamCipher};

use crate::domain::PrincipalId;
use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum SecurityError {
    #[error("frame number {0} does not fit in 22 bits")]
    FrameNumberOverflow(u32),
    #[error("{0} keystream bits requested; a frame yields at most 228")]
    KeystreamRequestTooLong(usize),
    #[error("keystream has {have} bits, payload needs {need}")]
    KeystreamTooShort { have: usize, need: usize },
    #[error("no common cipher")]
    NoCommonCipher,
    #[error("cipher {0:?} already registered")]
    DuplicateCipher(String),
    #[error("unknown subscriber {0}")]
    UnknownSubscriber(String),
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("network failed to prove knowledge of the subscriber key")]
    NetworkNotAuthenticated,
    #[error("bad key file line {line}: {reason}")]
    KeyFile { line: usize, reason: String },
}

/// Pre-shared 128-bit subscriber secret. Not serializable, never printed.
#[derive(Clone, PartialEq, Eq)]
pub struct SubscriberKey([u8; 16]);

impl SubscriberKey {
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn generate() -> Self {
        let mut raw = [0u8; 16];
        rand::rng().fill_bytes(&mut raw);
        Self(raw)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    fn mac(&self, label: &[u8], challenge: &Challenge) -> [u8; 32] {
        let mut mac = Hmac::<Sha256>::new_from_slice(&self.0).expect("hmac accepts any key length");
        mac.update(label);
        mac.update(&challenge.0);
        mac.finalize().into_bytes().into()
    }
}

impl fmt::Debug for SubscriberKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SubscriberKey(<redacted>)")
    }
}

impl FromStr for SubscriberKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s.trim()).map_err(|e| e.to_string())?;
        let bytes: [u8; 16] = bytes.try_into().map_err(|b: Vec<u8>| format!("expected 16 bytes, got {}", b.len()))?;
        Ok(Self(bytes))
    }
}

/// 128-bit random challenge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Challenge(pub [u8; 16]);

impl Challenge {
    pub fn random() -> Self {
        let mut raw = [0u8; 16];
        rand::rng().fill_bytes(&mut raw);
        Self(raw)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        hex::decode(s).ok()?.try_into().ok().map(Self)
    }
}

/// 64-bit cipher key, sized for A5/1.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SessionKey(pub u64);

impl SessionKey {
    pub fn to_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(<redacted>)")
    }
}

pub fn derive_sres(ki: &SubscriberKey, challenge: &Challenge) -> u32 {
    let mac = ki.mac(b"sres", challenge);
    u32::from_be_bytes(mac[..4].try_into().unwrap())
}

pub fn verify_sres(ki: &SubscriberKey, challenge: &Challenge, sres: u32) -> bool {
    derive_sres(ki, challenge) == sres
}

pub fn derive_session_key(ki: &SubscriberKey, challenge: &Challenge) -> SessionKey {
    let mac = ki.mac(b"kc", challenge);
    SessionKey(u64::from_be_bytes(mac[..8].try_into().unwrap()))
}

fn network_proof(ki: &SubscriberKey, challenge: &Challenge) -> u32 {
    let mac = ki.mac(b"network", challenge);
    u32::from_be_bytes(mac[..4].try_into().unwrap())
}

/// Handset side of the exchange.
#[derive(Debug, Clone)]
pub struct Subscriber {
    pub id: PrincipalId,
    ki: SubscriberKey,
}

impl Subscriber {
    pub fn new(id: PrincipalId, ki: SubscriberKey) -> Self {
        Self { id, ki }
    }

    pub fn respond(&self, challenge: &Challenge) -> u32 {
        derive_sres(&self.ki, challenge)
    }

    pub fn session_key(&self, challenge: &Challenge) -> SessionKey {
        derive_session_key(&self.ki, challenge)
    }

    pub fn check_network(&self, challenge: &Challenge, proof: u32) -> Result<(), SecurityError> {
        if network_proof(&self.ki, challenge) == proof {
            Ok(())
        } else {
            Err(SecurityError::NetworkNotAuthenticated)
        }
    }
}

/// Network side: holds every subscriber key.
#[derive(Debug, Default)]
pub struct AuthCenter {
    keys: HashMap<PrincipalId, SubscriberKey>,
    mutual: bool,
}

/// Result of a successful authentication run.
#[derive(Debug, Clone, Copy)]
pub struct Authenticated {
    pub challenge: Challenge,
    pub session_key: SessionKey,
}

impl AuthCenter {
    pub fn new(keys: HashMap<PrincipalId, SubscriberKey>) -> Self {
        Self { keys, mutual: false }
    }

    /// Also require the network to prove it holds the subscriber key.
    pub fn with_mutual_auth(mut self, on: bool) -> Self {
        self.mutual = on;
        self
    }

    pub fn insert(&mut self, id: PrincipalId, ki: SubscriberKey) {
        self.keys.insert(id, ki);
    }

    fn key(&self, id: &PrincipalId) -> Result<&SubscriberKey, SecurityError> {
        self.keys.get(id).ok_or_else(|| SecurityError::UnknownSubscriber(id.to_string()))
    }

    pub fn verify(&self, id: &PrincipalId, challenge: &Challenge, sres: u32) -> Result<SessionKey, SecurityError> {
        let ki = self.key(id)?;
        if !verify_sres(ki, challenge, sres) {
            return Err(SecurityError::AuthenticationFailed);
        }
        Ok(derive_session_key(ki, challenge))
    }

    /// Re-derives the session key for a challenge already answered.
    pub fn session_key(&self, id: &PrincipalId, challenge: &Challenge) -> Result<SessionKey, SecurityError> {
        Ok(derive_session_key(self.key(id)?, challenge))
    }

    pub fn network_proof(&self, id: &PrincipalId, challenge: &Challenge) -> Result<u32, SecurityError> {
        Ok(network_proof(self.key(id)?, challenge))
    }

    /// Full challenge-response run between a handset and this network.
    pub fn authenticate(&self, handset: &Subscriber) -> Result<Authenticated, SecurityError> {
        let challenge = Challenge::random();
        let session_key = self.verify(&handset.id, &challenge, handset.respond(&challenge))?;
        if self.mutual {
            handset.check_network(&challenge, self.network_proof(&handset.id, &challenge)?)?;
        }
        Ok(Authenticated { challenge, session_key })
    }
}

/// Packed keystream bits, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Keystream {
    bytes: Vec<u8>,
    len: usize,
}

impl Keystream {
    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let mut ks = Keystream::default();
        for b in bits {
            ks.push(b);
        }
        ks
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    pub fn extend(&mut self, other: &Keystream) {
        for i in 0..other.len {
            self.push(other.bit(i));
        }
    }

    pub fn len_bits(&self) -> usize {
        self.len
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range");
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// XORs the keystream over the payload. Applying it twice restores the input.
pub fn apply_keystream(payload: &[u8], ks: &Keystream) -> Result<Vec<u8>, SecurityError> {
    let need = payload.len() * 8;
    if ks.len_bits() < need {
        return Err(SecurityError::KeystreamTooShort { have: ks.len_bits(), need });
    }
    Ok(payload.iter().zip(ks.as_bytes()).map(|(p, k)| p ^ k).collect())
}

/// Parses `<principal id> <32 hex digits>` lines; `#` starts a comment.
pub fn parse_key_file(text: &str) -> Result<HashMap<PrincipalId, SubscriberKey>, SecurityError> {
    let mut keys = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| SecurityError::KeyFile { line: idx + 1, reason };
        let mut parts = line.split_whitespace();
        let (Some(id), Some(hex), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err("expected `<principal id> <hex key>`".into()));
        };
        let key = hex.parse::<SubscriberKey>().map_err(err)?;
        if keys.insert(PrincipalId::new(id), key).is_some() {
            return Err(err(format!("duplicate principal {id}")));
        }
    }
    Ok(keys)
}

pub fn format_key_file(keys: &HashMap<PrincipalId, SubscriberKey>) -> String {
    let sorted: BTreeMap<_, _> = keys.iter().collect();
    sorted.into_iter().map(|(id, k)| format!("{id} {}\n", k.to_hex())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sres_is_deterministic_and_verifies() {
        let ki = SubscriberKey::from_bytes([7; 16]);
        let rand = Challenge([3; 16]);
        assert_eq!(derive_sres(&ki, &rand), derive_sres(&ki, &rand));
        assert!(verify_sres(&ki, &rand, derive_sres(&ki, &rand)));
    }

    #[test]
    fn wrong_key_never_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut false_accepts = 0;
        for _ in 0..1000 {
            let ki = SubscriberKey::from_bytes(rng.random());
            let mut wrong = ki.0;
            wrong[rng.random_range(0..16)] ^= 1 << rng.random_range(0..8);
            let wrong = SubscriberKey::from_bytes(wrong);
            let challenge = Challenge(rng.random());
            if verify_sres(&wrong, &challenge, derive_sres(&ki, &challenge)) {
                false_accepts += 1;
            }
        }
        assert_eq!(false_accepts, 0);
    }

    #[test]
    fn auth_center_round_trip() {
        let ki = SubscriberKey::generate();
        let handset = Subscriber::new("doc".into(), ki.clone());
        let center = AuthCenter::new(HashMap::from([("doc".into(), ki)])).with_mutual_auth(true);
        let auth = center.authenticate(&handset).unwrap();
        assert_eq!(auth.session_key, handset.session_key(&auth.challenge));
        assert_eq!(center.session_key(&"doc".into(), &auth.challenge).unwrap(), auth.session_key);

        let impostor = Subscriber::new("doc".into(), SubscriberKey::generate());
        assert_eq!(center.authenticate(&impostor).unwrap_err(), SecurityError::AuthenticationFailed);
        let stranger = Subscriber::new("nobody".into(), SubscriberKey::generate());
        assert!(matches!(center.authenticate(&stranger), Err(SecurityError::UnknownSubscriber(_))));
    }

    #[test]
    fn mutual_auth_rejects_fake_network() {
        let handset = Subscriber::new("doc".into(), SubscriberKey::generate());
        let fake = AuthCenter::new(HashMap::from([("doc".into(), SubscriberKey::generate())]));
        let c = Challenge::random();
        let proof = fake.network_proof(&"doc".into(), &c).unwrap();
        assert_eq!(handset.check_network(&c, proof), Err(SecurityError::NetworkNotAuthenticated));
    }

    #[test]
    fn keys_never_printed() {
        let ki = SubscriberKey::from_bytes([0xAB; 16]);
        let s = Subscriber::new("doc".into(), ki.clone());
        assert!(!format!("{s:?} {ki:?}").contains(&ki.to_hex()));
        assert!(!format!("{:?}", SessionKey(0xABAB_ABAB)).contains("abab"));
    }

    #[test]
    fn key_file_parse_and_format() {
        let text = "# subscribers\ndoc-1 000102030405060708090a0b0c0d0e0f\n\nnurse-2 ffffffffffffffffffffffffffffffff # ward 3\n";
        let keys = parse_key_file(text).unwrap();
        assert_eq!(keys.len(), 2);
        assert_eq!(keys[&"doc-1".into()].to_hex(), "000102030405060708090a0b0c0d0e0f");
        assert_eq!(parse_key_file(&format_key_file(&keys)).unwrap(), keys);
        assert!(matches!(parse_key_file("doc-1 0011"), Err(SecurityError::KeyFile { line: 1, .. })));
        assert!(parse_key_file("a 000102030405060708090a0b0c0d0e0f\na 000102030405060708090a0b0c0d0e0f").is_err());
    }

    #[test]
    fn zero_keystream_is_identity() {
        let payload = b"metformin 500mg".to_vec();
        let ks = Keystream::from_bits(std::iter::repeat_n(false, payload.len() * 8));
        assert_eq!(apply_keystream(&payload, &ks).unwrap(), payload);
    }

    #[test]
    fn short_keystream_rejected() {
        let ks = Keystream::from_bits([true; 15]);
        assert_eq!(
            apply_keystream(&[1, 2], &ks),
            Err(SecurityError::KeystreamTooShort { have: 15, need: 16 })
        );
    }

    #[test]
    fn any_set_bit_changes_one_byte_payloads() {
        // brute force: every 1-byte payload against every non-zero 8-bit keystream
        for p in 0..=255u8 {
            for k in 1..=255u8 {
                let ks = Keystream::from_bits((0..8).map(|i| k & (0x80 >> i) != 0));
                assert_ne!(apply_keystream(&[p], &ks).unwrap(), vec![p]);
            }
        }
    }
}
