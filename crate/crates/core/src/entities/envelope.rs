//! QR payload formats for the login flows.

use crate::crypto::{sign, verify, PrivateKey, PublicKey, Signature, NONCE_LEN};

use super::wire::{Reader, WireError, Writer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvelopeKind {
    Keyboard = 1,
    Otp = 2,
    Nonce = 3,
}

impl EnvelopeKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(EnvelopeKind::Keyboard),
            2 => Some(EnvelopeKind::Otp),
            3 => Some(EnvelopeKind::Nonce),
            _ => None,
        }
    }
}

/// What the server puts into a login QR code: the session nonce, its name,
/// a body (ciphertext of π or the OTP; empty for a bare nonce) and
/// optionally a signature over all of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub session_nonce: [u8; NONCE_LEN],
    pub server_name: String,
    pub body: Vec<u8>,
    pub signature: Option<Signature>,
}

impl Envelope {
    pub fn new(kind: EnvelopeKind, session_nonce: [u8; NONCE_LEN], server_name: &str, body: Vec<u8>) -> Self {
        Self {
            kind,
            session_nonce,
            server_name: server_name.to_string(),
            body,
            signature: None,
        }
    }

    fn write_unsigned(&self, w: &mut Writer) {
        w.u8(self.kind as u8)
            .fixed(&self.session_nonce)
            .str(&self.server_name)
            .bytes(&self.body);
    }

    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(b"login-envelope");
        self.write_unsigned(&mut w);
        w.finish()
    }

    pub fn signed(mut self, key: &PrivateKey) -> Self {
        self.signature = Some(sign(key, &self.signed_bytes()));
        self
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        self.signature
            .as_ref()
            .is_some_and(|s| verify(key, &self.signed_bytes(), s).is_valid())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_unsigned(&mut w);
        match &self.signature {
            Some(s) => w.bool(true).bytes(&s.bytes),
            None => w.bool(false),
        };
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes, "login envelope");
        let kind = EnvelopeKind::from_u8(r.u8()?).ok_or(WireError("login envelope kind"))?;
        let session_nonce = r.fixed::<NONCE_LEN>()?;
        let server_name = r.str()?;
        let body = r.bytes()?;
        let signature = if r.bool()? {
            Some(Signature { bytes: r.bytes()? })
        } else {
            None
        };
        r.end()?;
        Ok(Self {
            kind,
            session_nonce,
            server_name,
            body,
            signature,
        })
    }
}

/// Plaintext the smartphone encrypts to the server in the camera-upload flow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credentials {
    pub nonce: [u8; NONCE_LEN],
    pub id: String,
    pub password: String,
    pub server_name: String,
}

impl Credentials {
    pub fn to_bytes(&self) -> Vec<u8> {
        Writer::new()
            .fixed(&self.nonce)
            .str(&self.id)
            .str(&self.password)
            .str(&self.server_name)
            .finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes, "credentials");
        let out = Self {
            nonce: r.fixed()?,
            id: r.str()?,
            password: r.str()?,
            server_name: r.str()?,
        };
        r.end()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, Role};

    #[test]
    fn envelope_round_trip_and_signature() {
        let srv = generate_keypair(Role::Server, 3);
        let env = Envelope::new(EnvelopeKind::Otp, [7; NONCE_LEN], "bank.example", vec![1, 2, 3]);
        assert!(!env.verify(&srv.public));
        let env = env.signed(&srv.private);
        assert!(env.verify(&srv.public));
        let parsed = Envelope::from_bytes(&env.to_bytes()).unwrap();
        assert_eq!(parsed, env);

        let mut renamed = parsed.clone();
        renamed.server_name = "bank.evil".into();
        assert!(!renamed.verify(&srv.public));
        let mut rebodied = parsed;
        rebodied.body[0] ^= 1;
        assert!(!rebodied.verify(&srv.public));
    }

    #[test]
    fn credentials_round_trip() {
        let c = Credentials {
            nonce: [1; NONCE_LEN],
            id: "alice".into(),
            password: "data".into(),
            server_name: "bank.example".into(),
        };
        assert_eq!(Credentials::from_bytes(&c.to_bytes()).unwrap(), c);
        assert!(Credentials::from_bytes(&c.to_bytes()[..20]).is_err());
    }
}
