//! The user's smartphone: holds SK_ID, pins the server's key and name,
//! reads QR codes off the terminal screen and shows results to the user.

use crate::crypto::{
    decrypt, encrypt, sign, Ciphertext, KeyPair, KeyboardPermutation, PrivateKey, PublicKey, NONCE_LEN,
};
use crate::protocols::SignedConfirmation;

use super::envelope::{Credentials, Envelope, EnvelopeKind};
use super::session::{Abort, AbortReason, Ctx};
use super::{Delivery, EntityKind, Mark, Message, ProtocolKind};

const ME: EntityKind = EntityKind::Smartphone;

#[derive(Debug, Clone)]
pub struct Smartphone {
    user_keys: KeyPair,
    pub pinned_server: String,
    pinned_key: PublicKey,
    session_nonce: Option<[u8; NONCE_LEN]>,
    pub layout: Option<KeyboardPermutation>,
    pub otp: Option<String>,
    pub typed_id: Option<String>,
    typed_password: Option<String>,
    pub confirmations: Vec<SignedConfirmation>,
    pub viewed: Vec<(String, Vec<u8>)>,
    pub displayed: Vec<Vec<u8>>,
}

impl Smartphone {
    pub fn new(user_keys: KeyPair, pinned_server: &str, pinned_key: PublicKey) -> Self {
        Self {
            user_keys,
            pinned_server: pinned_server.to_string(),
            pinned_key,
            session_nonce: None,
            layout: None,
            otp: None,
            typed_id: None,
            typed_password: None,
            confirmations: Vec::new(),
            viewed: Vec::new(),
            displayed: Vec::new(),
        }
    }

    pub fn set_session_nonce(&mut self, nonce: [u8; NONCE_LEN]) {
        self.session_nonce = Some(nonce);
    }

    pub fn session_nonce(&self) -> Option<[u8; NONCE_LEN]> {
        self.session_nonce
    }

    /// Readable by anything with full control of the phone.
    pub fn user_private_key(&self) -> &PrivateKey {
        &self.user_keys.private
    }

    pub fn typed_password(&self) -> Option<&str> {
        self.typed_password.as_deref()
    }

    fn open_envelope(&mut self, payload: &[u8], ctx: &Ctx<'_>) -> Result<Envelope, Abort> {
        let env = Envelope::from_bytes(payload).map_err(|e| Abort::fatal(ME, AbortReason::Malformed(e.to_string())))?;
        if env.server_name != self.pinned_server {
            return Err(Abort::fatal(ME, AbortReason::ServerMismatch));
        }
        let signed_kind = matches!(env.kind, EnvelopeKind::Keyboard | EnvelopeKind::Otp);
        if signed_kind && ctx.config.flags.sign_server_payloads && !env.verify(&self.pinned_key) {
            return Err(Abort::fatal(ME, AbortReason::InvalidServerSignature));
        }
        self.session_nonce = Some(env.session_nonce);
        Ok(env)
    }

    fn open_body(&self, body: &[u8]) -> Result<Vec<u8>, Abort> {
        Ciphertext::from_bytes(body)
            .and_then(|c| decrypt(&self.user_keys.private, &c))
            .map_err(|_| Abort::fatal(ME, AbortReason::Decrypt))
    }

    fn scan_confirmation(&mut self, payload: &[u8], ctx: &Ctx<'_>) -> Message {
        let Ok(conf) = SignedConfirmation::from_bytes(payload) else {
            return Message::ShowTransaction {
                tx: None,
                mark: Mark::InvalidSignature,
            };
        };
        let mark = if !conf.verify(&self.pinned_key) {
            Mark::InvalidSignature
        } else if ctx.config.flags.tx_nonce_freshness && conf.nonce != self.session_nonce {
            Mark::Stale
        } else {
            Mark::Verified
        };
        let tx = conf.transaction.clone();
        self.confirmations.push(conf);
        Message::ShowTransaction { tx: Some(tx), mark }
    }

    pub fn handle(&mut self, from: EntityKind, msg: &Message, ctx: &mut Ctx<'_>) -> Result<Vec<Delivery>, Abort> {
        use EntityKind::{Server, Terminal, User};
        let out = |to, m| Delivery::new(ME, to, m);
        Ok(match (from, msg) {
            (Terminal, Message::ShowQr { frame }) => {
                let payload = ctx.capture(ME, frame)?;
                match ctx.config.protocol {
                    ProtocolKind::P1 | ProtocolKind::P2 => {
                        let env = self.open_envelope(&payload, ctx)?;
                        let plain = self.open_body(&env.body)?;
                        match env.kind {
                            EnvelopeKind::Keyboard => {
                                let layout = KeyboardPermutation::from_symbols(&plain)
                                    .map_err(|e| Abort::fatal(ME, AbortReason::Malformed(e.to_string())))?;
                                self.layout = Some(layout.clone());
                                vec![out(User, Message::ShowLayout { layout })]
                            }
                            EnvelopeKind::Otp => {
                                let otp = String::from_utf8(plain)
                                    .map_err(|_| Abort::fatal(ME, AbortReason::Malformed("otp".into())))?;
                                self.otp = Some(otp.clone());
                                vec![out(User, Message::ShowOtp { otp })]
                            }
                            EnvelopeKind::Nonce => return Err(Abort::violation(ME, msg)),
                        }
                    }
                    ProtocolKind::P3 => {
                        let env = self.open_envelope(&payload, ctx)?;
                        if env.kind != EnvelopeKind::Nonce {
                            return Err(Abort::violation(ME, msg));
                        }
                        vec![out(
                            User,
                            Message::ShowLoginBox {
                                server: self.pinned_server.clone(),
                            },
                        )]
                    }
                    ProtocolKind::TxVerify => vec![out(User, self.scan_confirmation(&payload, ctx))],
                    ProtocolKind::SecureView => return Err(Abort::violation(ME, msg)),
                }
            }
            (User, Message::PhoneLogin { id, password }) => {
                let nonce = self.session_nonce.ok_or_else(|| Abort::violation(ME, msg))?;
                self.typed_id = Some(id.clone());
                self.typed_password = Some(password.clone());
                let creds = Credentials {
                    nonce,
                    id: id.clone(),
                    password: password.clone(),
                    server_name: self.pinned_server.clone(),
                };
                let ct = encrypt(&self.pinned_key, &creds.to_bytes(), ctx.rng).to_bytes();
                let frame = ctx.make_frame(ME, "encrypted_credentials", &ct)?;
                self.displayed.push(ct);
                vec![out(Terminal, Message::ShowQr { frame })]
            }
            (User, Message::ConfirmOnPhone { tx }) => {
                let nonce = self.session_nonce.ok_or_else(|| Abort::violation(ME, msg))?;
                let signature = sign(&self.user_keys.private, &tx.canonical_bytes(Some(&nonce)));
                vec![out(
                    Server,
                    Message::SideChannelTx {
                        tx: tx.clone(),
                        signature,
                    },
                )]
            }
            (Terminal, Message::ShowQrSet { frames }) => {
                let mut viewed = Vec::new();
                let mut failed = Vec::new();
                for (label, frame) in frames {
                    let opened = ctx
                        .capture_raw(frame)
                        .map_err(|e| e.to_string())
                        .and_then(|p| Ciphertext::from_bytes(&p).map_err(|e| e.to_string()))
                        .and_then(|c| decrypt(&self.user_keys.private, &c).map_err(|e| e.to_string()));
                    match opened {
                        Ok(plain) => viewed.push((label.clone(), plain)),
                        Err(reason) => failed.push((label.clone(), reason)),
                    }
                }
                self.viewed.extend(viewed.iter().cloned());
                vec![out(User, Message::ShowDocument { viewed, failed })]
            }
            _ => return Err(Abort::violation(ME, msg)),
        })
    }

    pub fn dump(&self) -> Vec<Vec<u8>> {
        let mut f = vec![self.user_keys.private.to_bytes().to_vec()];
        if let Some(n) = self.session_nonce {
            f.push(n.to_vec());
        }
        if let Some(l) = &self.layout {
            f.push(l.as_str().as_bytes().to_vec());
        }
        f.extend(self.otp.iter().map(|o| o.clone().into_bytes()));
        f.extend(self.typed_id.iter().map(|o| o.clone().into_bytes()));
        f.extend(self.typed_password.iter().map(|o| o.clone().into_bytes()));
        f.extend(self.confirmations.iter().map(|c| c.to_bytes()));
        f.extend(self.viewed.iter().map(|(_, v)| v.clone()));
        f.extend(self.displayed.iter().cloned());
        f
    }
}
