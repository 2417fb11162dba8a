//! Authenticated payload encryption keyed by a target-group element.
//!
//! The scheme encrypts a group element M; real files are protected by using
//! a fresh uniform M as an encapsulated key for a symmetric AEAD. Opening
//! fails loudly on tamper or on a wrong M, which is also what catches
//! decryption attempts with a stale epoch key.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::algebra::TargetElem;
use crate::error::{Error, Result};

const KEY_DERIVATION_TAG: &[u8] = b"habe/payload-key/v1";
const FORMAT_VERSION: u8 = 1;
const NONCE_LEN: usize = 12;

fn derive_key(m: &TargetElem) -> Key {
    let mut hasher = Sha256::new();
    hasher.update(KEY_DERIVATION_TAG);
    hasher.update(m.to_bytes());
    Key::from(<[u8; 32]>::from(hasher.finalize()))
}

/// Seal `plaintext` under the session element `m`.
///
/// Layout: version byte, 12-byte nonce, AEAD ciphertext (tag included).
pub fn seal_payload<R: RngCore>(m: &TargetElem, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(&derive_key(m));
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad: &[FORMAT_VERSION] })
        .expect("AEAD encryption cannot fail");
    let mut out = Vec::with_capacity(1 + NONCE_LEN + ct.len());
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

/// Open a sealed payload. Fails on truncation, version mismatch, tampering,
/// or a wrong session element.
pub fn open_payload(m: &TargetElem, sealed: &[u8]) -> Result<Vec<u8>> {
    if sealed.len() < 1 + NONCE_LEN + 16 {
        return Err(Error::Decode("sealed payload truncated".into()));
    }
    if sealed[0] != FORMAT_VERSION {
        return Err(Error::Decode(format!("unsupported payload version {}", sealed[0])));
    }
    let nonce = Nonce::from_slice(&sealed[1..1 + NONCE_LEN]);
    let cipher = ChaCha20Poly1305::new(&derive_key(m));
    cipher
        .decrypt(nonce, Payload { msg: &sealed[1 + NONCE_LEN..], aad: &[FORMAT_VERSION] })
        .map_err(|_| Error::PayloadAuth)
}
