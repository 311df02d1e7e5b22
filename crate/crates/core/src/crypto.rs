//! Cryptographic building blocks shared by every party.
//!
//! Public-key encryption is an X25519 + HKDF-SHA256 + ChaCha20-Poly1305
//! envelope; signatures are Ed25519. A symmetric AES-192-CTR mode with an
//! HMAC-SHA256 tag is available for fixed-buffer payloads. Every ciphertext
//! carries an integrity tag, so a tampered ciphertext is rejected at
//! decryption instead of decrypting to attacker-chosen plaintext.

use std::collections::HashSet;
use std::fmt;

use aes::Aes192;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce as AeadNonce};
use ctr::cipher::{KeyIvInit, StreamCipher};
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use sha2::Sha256;
use thiserror::Error;
use x25519_dalek::StaticSecret;

use crate::rng::{seeded, SimRng};

/// The 36 keyboard symbols, in canonical (identity permutation) order.
pub const ALPHABET: &[u8; 36] = b"abcdefghijklmnopqrstuvwxyz0123456789";
pub const ALPHABET_SIZE: usize = 36;

pub const NONCE_LEN: usize = 16;
pub const DEFAULT_OTP_LEN: usize = 8;

/// Largest plaintext accepted by the symmetric fixed-buffer mode.
pub const SYMMETRIC_BUFFER_LIMIT: usize = 4096;

const KEY_FILE_MAGIC: &[u8; 4] = b"VAK1";
const HYBRID_INFO: &[u8] = b"visauth hybrid envelope v1";
const EPHEMERAL_LEN: usize = 32;
const AEAD_TAG_LEN: usize = 16;
const CTR_IV_LEN: usize = 16;
const HMAC_LEN: usize = 32;

type Aes192Ctr = ctr::Ctr128BE<Aes192>;
type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("ciphertext failed its integrity check")]
    Integrity,
    #[error("malformed ciphertext: {0}")]
    Malformed(&'static str),
    #[error("ciphertext scheme {found:?} cannot be opened with this key (expected {expected:?})")]
    SchemeMismatch { expected: Scheme, found: Scheme },
    #[error("message of {len} bytes exceeds the {limit}-byte fixed buffer")]
    Oversize { len: usize, limit: usize },
    #[error("OTP length must be at least 1")]
    EmptyOtp,
    #[error("invalid keyboard permutation: {0}")]
    InvalidPermutation(String),
    #[error("symbol {0:?} is not in the keyboard alphabet")]
    UnknownSymbol(char),
    #[error("key position {0} is outside the 36-key grid")]
    BadPosition(u8),
    #[error("key file: {0}")]
    KeyFile(&'static str),
}

/// Lowercases and validates a symbol against [`ALPHABET`].
pub fn normalize_symbol(symbol: u8) -> Result<u8, CryptoError> {
    let lower = symbol.to_ascii_lowercase();
    if ALPHABET.contains(&lower) {
        Ok(lower)
    } else {
        Err(CryptoError::UnknownSymbol(symbol as char))
    }
}

// ---------------------------------------------------------------------------
// Keys
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    User,
    Server,
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PublicKey {
    encryption: [u8; 32],
    verifying: [u8; 32],
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.encryption);
        out[32..].copy_from_slice(&self.verifying);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != 64 {
            return Err(CryptoError::KeyFile("public key must be 64 bytes"));
        }
        let mut encryption = [0u8; 32];
        let mut verifying = [0u8; 32];
        encryption.copy_from_slice(&bytes[..32]);
        verifying.copy_from_slice(&bytes[32..]);
        VerifyingKey::from_bytes(&verifying).map_err(|_| CryptoError::KeyFile("verifying key is not a curve point"))?;
        Ok(Self { encryption, verifying })
    }

    /// Short hex fingerprint for logs and transcripts.
    pub fn fingerprint(&self) -> String {
        hex::encode(&self.to_bytes()[..8])
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.fingerprint())
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    decryption: [u8; 32],
    signing: [u8; 32],
}

impl PrivateKey {
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.decryption);
        out[32..].copy_from_slice(&self.signing);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != 64 {
            return Err(CryptoError::KeyFile("private key must be 64 bytes"));
        }
        let mut decryption = [0u8; 32];
        let mut signing = [0u8; 32];
        decryption.copy_from_slice(&bytes[..32]);
        signing.copy_from_slice(&bytes[32..]);
        Ok(Self { decryption, signing })
    }

    pub fn public_key(&self) -> PublicKey {
        let secret = StaticSecret::from(self.decryption);
        let encryption = x25519_dalek::PublicKey::from(&secret).to_bytes();
        let verifying = SigningKey::from_bytes(&self.signing).verifying_key().to_bytes();
        PublicKey { encryption, verifying }
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
    pub role: Role,
}

impl KeyPair {
    pub fn generate(role: Role, rng: &mut SimRng) -> Self {
        let mut decryption = [0u8; 32];
        let mut signing = [0u8; 32];
        rng.fill_bytes(&mut decryption);
        rng.fill_bytes(&mut signing);
        let private = PrivateKey { decryption, signing };
        Self {
            public: private.public_key(),
            private,
            role,
        }
    }

    /// Serializes to a `VAK1` key file. Public-only files omit the private half.
    pub fn export(&self, include_private: bool) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 2 + 128);
        out.extend_from_slice(KEY_FILE_MAGIC);
        out.push(match self.role {
            Role::User => 0,
            Role::Server => 1,
        });
        out.push(u8::from(include_private));
        out.extend_from_slice(&self.public.to_bytes());
        if include_private {
            out.extend_from_slice(&self.private.to_bytes());
        }
        out
    }
}

/// Contents of an imported key file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyMaterial {
    Public { role: Role, key: PublicKey },
    Pair(KeyPair),
}

pub fn import_key_file(bytes: &[u8]) -> Result<KeyMaterial, CryptoError> {
    if bytes.len() < 6 || &bytes[..4] != KEY_FILE_MAGIC {
        return Err(CryptoError::KeyFile("missing VAK1 header"));
    }
    let role = match bytes[4] {
        0 => Role::User,
        1 => Role::Server,
        _ => return Err(CryptoError::KeyFile("unknown role byte")),
    };
    let body = &bytes[6..];
    match bytes[5] {
        0 => {
            if body.len() != 64 {
                return Err(CryptoError::KeyFile("public key file must carry 64 key bytes"));
            }
            Ok(KeyMaterial::Public {
                role,
                key: PublicKey::from_bytes(body)?,
            })
        }
        1 => {
            if body.len() != 128 {
                return Err(CryptoError::KeyFile("key pair file must carry 128 key bytes"));
            }
            let public = PublicKey::from_bytes(&body[..64])?;
            let private = PrivateKey::from_bytes(&body[64..])?;
            if private.public_key() != public {
                return Err(CryptoError::KeyFile("private half does not match public half"));
            }
            Ok(KeyMaterial::Pair(KeyPair { public, private, role }))
        }
        _ => Err(CryptoError::KeyFile("unknown key kind byte")),
    }
}

/// Deterministic key generation from a bare seed.
pub fn generate_keypair(role: Role, seed: u64) -> KeyPair {
    KeyPair::generate(role, &mut seeded(seed))
}

// ---------------------------------------------------------------------------
// Encryption
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    PublicKeyHybrid,
    SymmetricCtr,
}

impl Scheme {
    fn id(self) -> u8 {
        match self {
            Scheme::PublicKeyHybrid => 1,
            Scheme::SymmetricCtr => 2,
        }
    }

    fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Scheme::PublicKeyHybrid),
            2 => Some(Scheme::SymmetricCtr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub scheme: Scheme,
    pub bytes: Vec<u8>,
}

impl Ciphertext {
    /// Wire form: one scheme byte followed by the scheme body.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.bytes.len());
        out.push(self.scheme.id());
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let (&id, body) = bytes.split_first().ok_or(CryptoError::Malformed("empty ciphertext"))?;
        let scheme = Scheme::from_id(id).ok_or(CryptoError::Malformed("unknown scheme id"))?;
        Ok(Self {
            scheme,
            bytes: body.to_vec(),
        })
    }
}

fn hybrid_content_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 32];
    hk.expand(HYBRID_INFO, &mut okm)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    okm
}

fn aead_seal(key: &[u8; 32], plaintext: &[u8]) -> Vec<u8> {
    // Each content key encrypts exactly one message, so a fixed nonce is safe.
    ChaCha20Poly1305::new(Key::from_slice(key))
        .encrypt(AeadNonce::from_slice(&[0u8; 12]), plaintext)
        .expect("in-memory AEAD encryption does not fail")
}

fn aead_open(key: &[u8; 32], sealed: &[u8]) -> Option<Vec<u8>> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(AeadNonce::from_slice(&[0u8; 12]), sealed)
        .ok()
}

/// Encrypts `message` to the holder of `recipient`'s private key.
pub fn encrypt(recipient: &PublicKey, message: &[u8], rng: &mut SimRng) -> Ciphertext {
    let mut eph_bytes = [0u8; 32];
    rng.fill_bytes(&mut eph_bytes);
    let ephemeral = StaticSecret::from(eph_bytes);
    let ephemeral_public = x25519_dalek::PublicKey::from(&ephemeral).to_bytes();
    let shared = ephemeral.diffie_hellman(&x25519_dalek::PublicKey::from(recipient.encryption));
    let key = hybrid_content_key(shared.as_bytes(), &ephemeral_public, &recipient.encryption);

    let mut bytes = Vec::with_capacity(EPHEMERAL_LEN + message.len() + AEAD_TAG_LEN);
    bytes.extend_from_slice(&ephemeral_public);
    bytes.extend_from_slice(&aead_seal(&key, message));
    Ciphertext {
        scheme: Scheme::PublicKeyHybrid,
        bytes,
    }
}

pub fn decrypt(key: &PrivateKey, ciphertext: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.scheme != Scheme::PublicKeyHybrid {
        return Err(CryptoError::SchemeMismatch {
            expected: Scheme::PublicKeyHybrid,
            found: ciphertext.scheme,
        });
    }
    if ciphertext.bytes.len() < EPHEMERAL_LEN + AEAD_TAG_LEN {
        return Err(CryptoError::Malformed("hybrid ciphertext shorter than header"));
    }
    let mut ephemeral_public = [0u8; 32];
    ephemeral_public.copy_from_slice(&ciphertext.bytes[..EPHEMERAL_LEN]);
    let secret = StaticSecret::from(key.decryption);
    let own_public = x25519_dalek::PublicKey::from(&secret).to_bytes();
    let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(ephemeral_public));
    if !shared.was_contributory() {
        return Err(CryptoError::Integrity);
    }
    let content_key = hybrid_content_key(shared.as_bytes(), &ephemeral_public, &own_public);
    aead_open(&content_key, &ciphertext.bytes[EPHEMERAL_LEN..]).ok_or(CryptoError::Integrity)
}

/// Opens a hybrid ciphertext with a directly supplied content key.
///
/// This is the oracle a key-search adversary queries: one call per guess.
pub fn open_with_content_key(ciphertext: &Ciphertext, content_key: &[u8; 32]) -> Option<Vec<u8>> {
    if ciphertext.scheme != Scheme::PublicKeyHybrid || ciphertext.bytes.len() < EPHEMERAL_LEN + AEAD_TAG_LEN {
        return None;
    }
    aead_open(content_key, &ciphertext.bytes[EPHEMERAL_LEN..])
}

/// AES-192-CTR with an encrypt-then-MAC HMAC-SHA256 tag over a fixed buffer.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey {
    cipher: [u8; 24],
    mac: [u8; 32],
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(<redacted>)")
    }
}

impl SymmetricKey {
    pub fn generate(rng: &mut SimRng) -> Self {
        let mut cipher = [0u8; 24];
        let mut mac = [0u8; 32];
        rng.fill_bytes(&mut cipher);
        rng.fill_bytes(&mut mac);
        Self { cipher, mac }
    }

    fn tag(&self, iv: &[u8], body: &[u8]) -> HmacSha256 {
        let mut mac = <HmacSha256 as Mac>::new_from_slice(&self.mac).expect("HMAC accepts any key length");
        mac.update(iv);
        mac.update(body);
        mac
    }

    pub fn seal(&self, message: &[u8], rng: &mut SimRng) -> Result<Ciphertext, CryptoError> {
        if message.len() > SYMMETRIC_BUFFER_LIMIT {
            return Err(CryptoError::Oversize {
                len: message.len(),
                limit: SYMMETRIC_BUFFER_LIMIT,
            });
        }
        let mut iv = [0u8; CTR_IV_LEN];
        rng.fill_bytes(&mut iv);
        let mut body = message.to_vec();
        Aes192Ctr::new(&self.cipher.into(), &iv.into()).apply_keystream(&mut body);
        let tag = self.tag(&iv, &body).finalize().into_bytes();

        let mut bytes = Vec::with_capacity(CTR_IV_LEN + body.len() + HMAC_LEN);
        bytes.extend_from_slice(&iv);
        bytes.extend_from_slice(&body);
        bytes.extend_from_slice(&tag);
        Ok(Ciphertext {
            scheme: Scheme::SymmetricCtr,
            bytes,
        })
    }

    pub fn open(&self, ciphertext: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
        if ciphertext.scheme != Scheme::SymmetricCtr {
            return Err(CryptoError::SchemeMismatch {
                expected: Scheme::SymmetricCtr,
                found: ciphertext.scheme,
            });
        }
        let bytes = &ciphertext.bytes;
        if bytes.len() < CTR_IV_LEN + HMAC_LEN {
            return Err(CryptoError::Malformed("symmetric ciphertext shorter than header"));
        }
        let (iv, rest) = bytes.split_at(CTR_IV_LEN);
        let (body, tag) = rest.split_at(rest.len() - HMAC_LEN);
        self.tag(iv, body)
            .verify_slice(tag)
            .map_err(|_| CryptoError::Integrity)?;
        let mut iv_arr = [0u8; CTR_IV_LEN];
        iv_arr.copy_from_slice(iv);
        let mut plain = body.to_vec();
        Aes192Ctr::new(&self.cipher.into(), &iv_arr.into()).apply_keystream(&mut plain);
        Ok(plain)
    }
}

// ---------------------------------------------------------------------------
// Signatures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid,
}

impl Verdict {
    pub fn is_valid(self) -> bool {
        self == Verdict::Valid
    }
}

pub fn sign(key: &PrivateKey, message: &[u8]) -> Signature {
    let sig = SigningKey::from_bytes(&key.signing).sign(message);
    Signature {
        bytes: sig.to_bytes().to_vec(),
    }
}

pub fn verify(key: &PublicKey, message: &[u8], signature: &Signature) -> Verdict {
    let Ok(verifying) = VerifyingKey::from_bytes(&key.verifying) else {
        return Verdict::Invalid;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(&signature.bytes) else {
        return Verdict::Invalid;
    };
    match verifying.verify_strict(message, &sig) {
        Ok(()) => Verdict::Valid,
        Err(_) => Verdict::Invalid,
    }
}

// ---------------------------------------------------------------------------
// Keyboard permutation
// ---------------------------------------------------------------------------

/// Assignment of the 36 alphabet symbols to the 36 key positions of the
/// on-screen grid. `mapping[position]` is the symbol drawn on that key.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct KeyboardPermutation {
    mapping: [u8; ALPHABET_SIZE],
}

impl fmt::Debug for KeyboardPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyboardPermutation({})", self.as_str())
    }
}

impl KeyboardPermutation {
    pub fn identity() -> Self {
        Self { mapping: *ALPHABET }
    }

    /// Uniform shuffle of the alphabet (Fisher–Yates).
    pub fn random(rng: &mut SimRng) -> Self {
        let mut mapping = *ALPHABET;
        mapping.shuffle(rng);
        Self { mapping }
    }

    /// Parses 36 symbols in position order. Case-insensitive.
    pub fn from_symbols(symbols: &[u8]) -> Result<Self, CryptoError> {
        if symbols.len() != ALPHABET_SIZE {
            return Err(CryptoError::InvalidPermutation(format!(
                "expected {ALPHABET_SIZE} symbols, got {}",
                symbols.len()
            )));
        }
        let mut mapping = [0u8; ALPHABET_SIZE];
        let mut seen = [false; 128];
        for (slot, &raw) in mapping.iter_mut().zip(symbols) {
            let symbol = normalize_symbol(raw)?;
            if std::mem::replace(&mut seen[symbol as usize], true) {
                return Err(CryptoError::InvalidPermutation(format!(
                    "symbol {:?} appears twice",
                    symbol as char
                )));
            }
            *slot = symbol;
        }
        Ok(Self { mapping })
    }

    pub fn symbol_at(&self, position: u8) -> Result<u8, CryptoError> {
        self.mapping
            .get(position as usize)
            .copied()
            .ok_or(CryptoError::BadPosition(position))
    }

    pub fn position_of(&self, symbol: u8) -> Result<u8, CryptoError> {
        let symbol = normalize_symbol(symbol)?;
        let idx = self
            .mapping
            .iter()
            .position(|&s| s == symbol)
            .expect("a bijection contains every alphabet symbol");
        Ok(idx as u8)
    }

    /// Grid positions a user clicks to enter `password` under this layout.
    pub fn positions_for(&self, password: &str) -> Result<Vec<u8>, CryptoError> {
        password.bytes().map(|b| self.position_of(b)).collect()
    }

    /// Symbols under the clicked positions.
    pub fn resolve(&self, positions: &[u8]) -> Result<String, CryptoError> {
        positions.iter().map(|&p| self.symbol_at(p).map(char::from)).collect()
    }

    /// The 36 symbols in position order.
    pub fn symbols(&self) -> &[u8; ALPHABET_SIZE] {
        &self.mapping
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.mapping).expect("alphabet is ASCII")
    }

    /// Form for text contexts.
    pub fn to_base64(&self) -> String {
        BASE64.encode(self.mapping)
    }

    pub fn from_base64(text: &str) -> Result<Self, CryptoError> {
        let raw = BASE64
            .decode(text)
            .map_err(|_| CryptoError::InvalidPermutation("not valid base64".into()))?;
        Self::from_symbols(&raw)
    }

    /// Upper-case form accepted by the QR alphanumeric mode.
    pub fn to_alphanumeric(&self) -> String {
        self.as_str().to_ascii_uppercase()
    }
}

pub fn generate_permutation(seed: u64) -> KeyboardPermutation {
    KeyboardPermutation::random(&mut seeded(seed))
}

// ---------------------------------------------------------------------------
// One-time passwords and nonces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtpToken {
    pub value: String,
    pub issued_at: u64,
    consumed: bool,
}

impl OtpToken {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Marks the token used. Returns `false` if it was already consumed.
    pub fn consume(&mut self) -> bool {
        !std::mem::replace(&mut self.consumed, true)
    }

    /// Accepts `candidate` only if the token is still live and matches.
    /// A successful redemption consumes the token.
    pub fn redeem(&mut self, candidate: &str) -> bool {
        if self.consumed || !self.value.eq_ignore_ascii_case(candidate) {
            return false;
        }
        self.consume()
    }
}

pub fn random_alphabet_string(rng: &mut SimRng, length: usize) -> String {
    (0..length)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET_SIZE)] as char)
        .collect()
}

pub fn generate_otp(rng: &mut SimRng, length: usize, issued_at: u64) -> Result<OtpToken, CryptoError> {
    if length == 0 {
        return Err(CryptoError::EmptyOtp);
    }
    Ok(OtpToken {
        value: random_alphabet_string(rng, length),
        issued_at,
        consumed: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Nonce {
    pub bytes: [u8; NONCE_LEN],
    pub issued_to_session: u64,
}

/// Hands out nonces and refuses to ever repeat one.
#[derive(Debug, Default, Clone)]
pub struct NonceRegistry {
    issued: HashSet<[u8; NONCE_LEN]>,
}

impl NonceRegistry {
    pub fn issue(&mut self, rng: &mut SimRng, session: u64) -> Nonce {
        loop {
            let mut bytes = [0u8; NONCE_LEN];
            rng.fill_bytes(&mut bytes);
            if self.issued.insert(bytes) {
                return Nonce {
                    bytes,
                    issued_to_session: session,
                };
            }
        }
    }

    pub fn was_issued(&self, bytes: &[u8; NONCE_LEN]) -> bool {
        self.issued.contains(bytes)
    }

    pub fn len(&self) -> usize {
        self.issued.len()
    }

    pub fn is_empty(&self) -> bool {
        self.issued.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> SimRng {
        seeded(seed)
    }

    #[test]
    fn keypair_round_trips_hello() {
        let pair = generate_keypair(Role::User, 1);
        let c = encrypt(&pair.public, b"hello", &mut rng(5));
        assert_eq!(decrypt(&pair.private, &c).unwrap(), b"hello");
    }

    #[test]
    fn keypair_generation_is_deterministic() {
        assert_eq!(generate_keypair(Role::User, 1), generate_keypair(Role::User, 1));
    }

    #[test]
    fn different_seeds_give_different_public_keys() {
        let a = generate_keypair(Role::User, 1);
        let b = generate_keypair(Role::User, 2);
        assert_ne!(a.public.to_bytes(), b.public.to_bytes());
    }

    #[test]
    fn empty_message_round_trip() {
        let pair = generate_keypair(Role::Server, 3);
        let c = encrypt(&pair.public, b"", &mut rng(1));
        assert_eq!(decrypt(&pair.private, &c).unwrap(), b"");
    }

    #[test]
    fn every_single_bit_flip_is_rejected() {
        let pair = generate_keypair(Role::User, 11);
        let c = encrypt(&pair.public, b"pi", &mut rng(2));
        let wire = c.to_bytes();
        for byte in 0..wire.len() {
            for bit in 0..8 {
                let mut tampered = wire.clone();
                tampered[byte] ^= 1 << bit;
                let outcome = Ciphertext::from_bytes(&tampered).and_then(|t| decrypt(&pair.private, &t));
                assert!(outcome.is_err(), "flip at byte {byte} bit {bit} decrypted");
            }
        }
    }

    #[test]
    fn wrong_private_key_fails() {
        let mut r = rng(40);
        let owner = KeyPair::generate(Role::User, &mut r);
        let c = encrypt(&owner.public, b"abc", &mut r);
        for _ in 0..100 {
            let other = KeyPair::generate(Role::User, &mut r);
            assert_eq!(decrypt(&other.private, &c), Err(CryptoError::Integrity));
        }
    }

    #[test]
    fn truncated_ciphertext_is_malformed() {
        let pair = generate_keypair(Role::User, 4);
        let mut c = encrypt(&pair.public, b"abc", &mut rng(3));
        c.bytes.truncate(20);
        assert!(matches!(decrypt(&pair.private, &c), Err(CryptoError::Malformed(_))));
        assert!(Ciphertext::from_bytes(&[]).is_err());
    }

    #[test]
    fn permutation_round_trips_through_encryption() {
        let pair = generate_keypair(Role::User, 8);
        let mut r = rng(9);
        for _ in 0..1000 {
            let pi = KeyboardPermutation::random(&mut r);
            let c = encrypt(&pair.public, pi.symbols(), &mut r);
            let back = decrypt(&pair.private, &c).unwrap();
            assert_eq!(back.as_slice(), pi.symbols().as_slice());
        }
    }

    #[test]
    fn symmetric_mode_round_trip_and_limits() {
        let mut r = rng(12);
        let key = SymmetricKey::generate(&mut r);
        let c = key.seal(b"transfer 100", &mut r).unwrap();
        assert_eq!(key.open(&c).unwrap(), b"transfer 100");

        let big = vec![7u8; SYMMETRIC_BUFFER_LIMIT + 1];
        assert_eq!(
            key.seal(&big, &mut r),
            Err(CryptoError::Oversize {
                len: SYMMETRIC_BUFFER_LIMIT + 1,
                limit: SYMMETRIC_BUFFER_LIMIT
            })
        );

        let mut tampered = c.clone();
        tampered.bytes[CTR_IV_LEN] ^= 0x01;
        assert_eq!(key.open(&tampered), Err(CryptoError::Integrity));

        let other = SymmetricKey::generate(&mut r);
        assert_eq!(other.open(&c), Err(CryptoError::Integrity));

        let pair = generate_keypair(Role::User, 1);
        assert!(matches!(
            decrypt(&pair.private, &c),
            Err(CryptoError::SchemeMismatch { .. })
        ));
    }

    #[test]
    fn sign_verify_basics() {
        let pair = generate_keypair(Role::Server, 21);
        let sig = sign(&pair.private, b"message");
        assert_eq!(verify(&pair.public, b"message", &sig), Verdict::Valid);
        assert_eq!(verify(&pair.public, b"messagex", &sig), Verdict::Invalid);
        let zero = Signature { bytes: vec![0u8; 64] };
        assert_eq!(verify(&pair.public, b"message", &zero), Verdict::Invalid);
        let short = Signature { bytes: vec![1u8; 10] };
        assert_eq!(verify(&pair.public, b"message", &short), Verdict::Invalid);
    }

    #[test]
    fn cross_key_verification_fails() {
        let server = generate_keypair(Role::Server, 1);
        let user = generate_keypair(Role::User, 2);
        let sig = sign(&server.private, b"m");
        assert_eq!(verify(&user.public, b"m", &sig), Verdict::Invalid);
    }

    #[test]
    fn identity_permutation_positions() {
        let pi = KeyboardPermutation::identity();
        assert_eq!(pi.positions_for("aaaa").unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(pi.positions_for("b9").unwrap(), vec![1, 35]);
        assert_eq!(pi.resolve(&[1, 35]).unwrap(), "b9");
        assert_eq!(pi.positions_for("A").unwrap(), vec![0]);
        assert_eq!(pi.positions_for("!"), Err(CryptoError::UnknownSymbol('!')));
        assert_eq!(pi.resolve(&[36]), Err(CryptoError::BadPosition(36)));
    }

    #[test]
    fn generated_permutation_sorts_to_alphabet() {
        for seed in 0..50 {
            let pi = generate_permutation(seed);
            let mut sorted = pi.symbols().to_vec();
            sorted.sort_unstable();
            let mut expected = ALPHABET.to_vec();
            expected.sort_unstable();
            assert_eq!(sorted, expected);
        }
    }

    #[test]
    fn permutation_serialization_forms() {
        let pi = generate_permutation(3);
        assert_eq!(KeyboardPermutation::from_base64(&pi.to_base64()).unwrap(), pi);
        assert_eq!(
            KeyboardPermutation::from_symbols(pi.to_alphanumeric().as_bytes()).unwrap(),
            pi
        );
        assert!(KeyboardPermutation::from_symbols(b"abc").is_err());
        let mut dup = *ALPHABET;
        dup[1] = b'a';
        assert!(KeyboardPermutation::from_symbols(&dup).is_err());
    }

    #[test]
    fn otp_shape_and_errors() {
        let mut r = rng(1);
        let t = generate_otp(&mut r, 8, 0).unwrap();
        assert_eq!(t.value.len(), 8);
        assert!(t.value.bytes().all(|b| ALPHABET.contains(&b)));
        assert_eq!(generate_otp(&mut r, 0, 0), Err(CryptoError::EmptyOtp));
    }

    #[test]
    fn otp_draws_do_not_collide() {
        let mut r = rng(77);
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let t = generate_otp(&mut r, 8, 0).unwrap();
            assert!(seen.insert(t.value), "duplicate OTP");
        }
    }

    #[test]
    fn otp_consumed_at_most_once() {
        let mut t = generate_otp(&mut rng(2), 8, 0).unwrap();
        let value = t.value.clone();
        assert!(!t.redeem("wrongval"));
        assert!(!t.is_consumed());
        assert!(t.redeem(&value));
        assert!(t.is_consumed());
        assert!(!t.redeem(&value));
        assert!(!t.consume());
    }

    #[test]
    fn nonce_registry_never_repeats() {
        let mut reg = NonceRegistry::default();
        let mut r = rng(5);
        let mut seen = HashSet::new();
        for s in 0..5000 {
            let n = reg.issue(&mut r, s);
            assert!(seen.insert(n.bytes));
            assert!(reg.was_issued(&n.bytes));
        }
        assert_eq!(reg.len(), 5000);
    }

    #[test]
    fn key_file_round_trip_and_rejections() {
        let pair = generate_keypair(Role::Server, 10);
        let full = pair.export(true);
        assert_eq!(&full[..4], b"VAK1");
        assert_eq!(import_key_file(&full).unwrap(), KeyMaterial::Pair(pair.clone()));

        let public = pair.export(false);
        assert_eq!(
            import_key_file(&public).unwrap(),
            KeyMaterial::Public {
                role: Role::Server,
                key: pair.public.clone()
            }
        );

        let mut bad_magic = full.clone();
        bad_magic[0] = b'X';
        assert!(import_key_file(&bad_magic).is_err());

        let mut mismatched = full.clone();
        let last = mismatched.len() - 1;
        mismatched[last] ^= 1;
        assert!(import_key_file(&mismatched).is_err());
        assert!(import_key_file(&full[..full.len() - 1]).is_err());
    }

    #[test]
    fn content_key_oracle_rejects_random_keys() {
        let pair = generate_keypair(Role::User, 2);
        let mut r = rng(6);
        let c = encrypt(&pair.public, b"secret", &mut r);
        let mut guess = [0u8; 32];
        for _ in 0..1000 {
            r.fill_bytes(&mut guess);
            assert!(open_with_content_key(&c, &guess).is_none());
        }
    }
}
