use super::{apply_keystream, Keystream, SecurityError, SessionKey, A51, BITS_PER_FRAME, MAX_FRAME_NUMBER, NullCipher, WeakToyCipher};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A per-frame keystream generator.
pub trait StreamCipher: Send + Sync {
    fn name(&self) -> &str;
    fn keystream(&self, key: SessionKey, frame: u32, n_bits: usize) -> Result<Keystream, SecurityError>;
}

impl fmt::Debug for dyn StreamCipher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StreamCipher({})", self.name())
    }
}

/// Name → implementation. Built once at startup, read-only afterwards.
#[derive(Clone, Default)]
pub struct CipherRegistry {
    suites: BTreeMap<String, Arc<dyn StreamCipher>>,
}

impl CipherRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// A5/1, the "A5/2" stand-in and NULL.
    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(A51)).unwrap();
        r.register(Arc::new(WeakToyCipher)).unwrap();
        r.register(Arc::new(NullCipher)).unwrap();
        r
    }

    pub fn register(&mut self, suite: Arc<dyn StreamCipher>) -> Result<(), SecurityError> {
        let name = suite.name().to_owned();
        if self.suites.contains_key(&name) {
            return Err(SecurityError::DuplicateCipher(name));
        }
        self.suites.insert(name, suite);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn StreamCipher>> {
        self.suites.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.suites.keys().map(String::as_str)
    }
}

/// Ordered preference; anything not listed is never chosen.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CipherPolicy {
    pub preference: Vec<String>,
    #[serde(default)]
    pub allow_null: bool,
}

impl CipherPolicy {
    pub fn strict(preference: &[&str]) -> Self {
        Self {
            preference: preference.iter().map(|s| s.to_string()).collect(),
            allow_null: false,
        }
    }
}

impl Default for CipherPolicy {
    fn default() -> Self {
        Self::strict(&["A5/1", "A5/2"])
    }
}

/// Highest-preference suite that the peer offered and the registry knows.
pub fn negotiate_cipher(
    registry: &CipherRegistry,
    offered: &[impl AsRef<str>],
    policy: &CipherPolicy,
) -> Result<Arc<dyn StreamCipher>, SecurityError> {
    policy
        .preference
        .iter()
        .filter(|name| policy.allow_null || name.as_str() != "NULL")
        .filter(|name| offered.iter().any(|o| o.as_ref() == name.as_str()))
        .find_map(|name| registry.get(name))
        .ok_or(SecurityError::NoCommonCipher)
}

/// Encrypts or decrypts `payload` with the keystream of consecutive frames
/// starting at `start_frame`. Returns the output and the frames consumed.
pub fn crypt_at(
    suite: &dyn StreamCipher,
    key: SessionKey,
    start_frame: u32,
    payload: &[u8],
) -> Result<(Vec<u8>, u32), SecurityError> {
    let frames = frames_needed(payload.len());
    let mut ks = Keystream::default();
    for i in 0..frames {
        let frame = start_frame.checked_add(i).ok_or(SecurityError::FrameNumberOverflow(u32::MAX))?;
        let remaining = payload.len() * 8 - ks.len_bits();
        ks.extend(&suite.keystream(key, frame, remaining.min(BITS_PER_FRAME))?);
    }
    Ok((apply_keystream(payload, &ks)?, frames))
}

fn frames_needed(bytes: usize) -> u32 {
    (bytes * 8).div_ceil(BITS_PER_FRAME) as u32
}

/// Cipher state of one connection. Frame numbers only move forward, so no
/// `(key, frame)` pair is ever used twice on the connection.
pub struct CipherSession {
    suite: Arc<dyn StreamCipher>,
    key: SessionKey,
    next_frame: u32,
}

impl CipherSession {
    pub fn new(suite: Arc<dyn StreamCipher>, key: SessionKey) -> Self {
        Self::starting_at(suite, key, 0)
    }

    pub fn starting_at(suite: Arc<dyn StreamCipher>, key: SessionKey, next_frame: u32) -> Self {
        Self { suite, key, next_frame }
    }

    pub fn suite_name(&self) -> &str {
        self.suite.name()
    }

    pub fn next_frame(&self) -> u32 {
        self.next_frame
    }

    /// Applies fresh keystream to `payload`; returns the first frame used.
    pub fn seal(&mut self, payload: &[u8]) -> Result<(u32, Vec<u8>), SecurityError> {
        let start = self.next_frame;
        let last = u64::from(start) + u64::from(frames_needed(payload.len()));
        if last > u64::from(MAX_FRAME_NUMBER) + 1 {
            return Err(SecurityError::FrameNumberOverflow(last.min(u64::from(u32::MAX)) as u32));
        }
        let (out, used) = crypt_at(self.suite.as_ref(), self.key, start, payload)?;
        self.next_frame = start + used;
        Ok((start, out))
    }
}

impl fmt::Debug for CipherSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CipherSession")
            .field("suite", &self.suite.name())
            .field("next_frame", &self.next_frame)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prefers_policy_order() {
        let reg = CipherRegistry::standard();
        let chosen = negotiate_cipher(&reg, &["A5/2", "A5/1"], &CipherPolicy::strict(&["A5/1", "A5/2"])).unwrap();
        assert_eq!(chosen.name(), "A5/1");
    }

    #[test]
    fn strict_policy_without_overlap_fails() {
        let reg = CipherRegistry::standard();
        let err = negotiate_cipher(&reg, &["A5/2"], &CipherPolicy::strict(&["A5/1"])).unwrap_err();
        assert_eq!(err, SecurityError::NoCommonCipher);
        let err = negotiate_cipher(&reg, &["X9"], &CipherPolicy::strict(&["A5/1", "X9"])).unwrap_err();
        assert_eq!(err, SecurityError::NoCommonCipher);
    }

    #[test]
    fn null_needs_explicit_permission() {
        let reg = CipherRegistry::standard();
        let mut policy = CipherPolicy::strict(&["NULL"]);
        assert!(negotiate_cipher(&reg, &["NULL"], &policy).is_err());
        policy.allow_null = true;
        assert_eq!(negotiate_cipher(&reg, &["NULL"], &policy).unwrap().name(), "NULL");
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut reg = CipherRegistry::standard();
        assert_eq!(reg.register(Arc::new(A51)).unwrap_err(), SecurityError::DuplicateCipher("A5/1".into()));
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["A5/1", "A5/2", "NULL"]);
    }

    #[test]
    fn session_frames_never_repeat() {
        let mut s = CipherSession::new(Arc::new(A51), SessionKey(42));
        let mut seen = std::collections::HashSet::new();
        for len in [0usize, 1, 28, 29, 100, 500] {
            let start = s.next_frame();
            s.seal(&vec![0u8; len]).unwrap();
            for f in start..s.next_frame() {
                assert!(seen.insert(f), "frame {f} reused");
            }
        }
    }

    #[test]
    fn session_refuses_to_wrap_frame_counter() {
        let mut s = CipherSession::starting_at(Arc::new(A51), SessionKey(1), MAX_FRAME_NUMBER);
        assert!(s.seal(&[0u8; 28]).is_ok());
        assert!(matches!(s.seal(&[0u8; 1]), Err(SecurityError::FrameNumberOverflow(_))));
    }

    fn suite_name() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["A5/1", "A5/2", "NULL", "X9", "A5/3"]).prop_map(String::from)
    }

    proptest! {
        #[test]
        fn negotiation_never_leaves_policy(
            offered in prop::collection::vec(suite_name(), 0..5),
            pref in prop::collection::vec(suite_name(), 0..5),
            allow_null in any::<bool>(),
        ) {
            let reg = CipherRegistry::standard();
            let policy = CipherPolicy { preference: pref.clone(), allow_null };
            if let Ok(chosen) = negotiate_cipher(&reg, &offered, &policy) {
                let name = chosen.name().to_owned();
                prop_assert!(pref.contains(&name) && offered.contains(&name));
                prop_assert!(allow_null || name != "NULL");
                // nothing ranked higher was mutually available
                let rank = pref.iter().position(|p| *p == name).unwrap();
                for better in &pref[..rank] {
                    let usable = offered.contains(better) && reg.get(better).is_some() && (allow_null || better != "NULL");
                    prop_assert!(!usable);
                }
            }
        }

        #[test]
        fn crypt_round_trips(payload in prop::collection::vec(any::<u8>(), 0..400), key in any::<u64>(), start in 0u32..1000) {
            for suite in ["A5/1", "A5/2", "NULL"] {
                let s = CipherRegistry::standard().get(suite).unwrap();
                let (ct, frames) = crypt_at(s.as_ref(), SessionKey(key), start, &payload).unwrap();
                let (pt, _) = crypt_at(s.as_ref(), SessionKey(key), start, &ct).unwrap();
                prop_assert_eq!(&pt, &payload);
                prop_assert_eq!(frames as usize, (payload.len() * 8).div_ceil(228));
            }
        }
    }
}
