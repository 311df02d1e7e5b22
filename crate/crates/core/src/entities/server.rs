//! Bank server: issues challenges, checks responses, executes transfers.

use std::collections::BTreeMap;

use crate::crypto::{
    decrypt, encrypt, generate_otp, verify, Ciphertext, KeyPair, KeyboardPermutation, NonceRegistry, OtpToken,
    PublicKey, NONCE_LEN,
};
use crate::protocols::{CredentialStore, SecureDocument, SignedConfirmation, Transaction};
use crate::rng::SimRng;

use super::envelope::{Credentials, Envelope, EnvelopeKind};
use super::session::{Abort, Ctx, SessionSecrets, TransferRecord};
use super::{Delivery, EntityKind, Message, ProtocolKind};

const ME: EntityKind = EntityKind::Server;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    AwaitPositions,
    AwaitOtp,
    AwaitCredentials,
    Authenticated,
    Denied,
}

#[derive(Debug, Clone)]
pub struct ServerSession {
    pub protocol: ProtocolKind,
    pub phase: Phase,
    pub nonce: [u8; NONCE_LEN],
    pub user: Option<String>,
    pi: Option<KeyboardPermutation>,
    otp: Option<OtpToken>,
    attempts: u32,
    pending: Vec<Transaction>,
    side_copies: Vec<Transaction>,
    awaiting_decision: Option<Transaction>,
    transfers: Vec<TransferRecord>,
    /// Last password or OTP candidate the server resolved, kept so a
    /// phishing server's haul can be inspected.
    pub last_candidate: Option<String>,
    pub decrypt_failures: u32,
}

/// What a closed session leaves behind.
#[derive(Debug, Clone, Default)]
pub struct SessionRecord {
    pub transfers: Vec<TransferRecord>,
    pub secrets: SessionSecrets,
}

#[derive(Debug, Clone)]
pub struct Server {
    pub name: String,
    keys: KeyPair,
    store: CredentialStore,
    nonces: NonceRegistry,
    clock: u64,
    sessions: BTreeMap<u64, ServerSession>,
    accepted_nonces: Vec<(u64, [u8; NONCE_LEN])>,
    documents: BTreeMap<String, Vec<(String, Vec<u8>)>>,
}

impl Server {
    pub fn new(name: &str, keys: KeyPair, store: CredentialStore) -> Self {
        Self {
            name: name.to_string(),
            keys,
            store,
            nonces: NonceRegistry::default(),
            clock: 0,
            sessions: BTreeMap::new(),
            accepted_nonces: Vec::new(),
            documents: BTreeMap::new(),
        }
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.keys.public
    }

    pub(crate) fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn store(&self) -> &CredentialStore {
        &self.store
    }

    pub fn nonces_issued(&self) -> usize {
        self.nonces.len()
    }

    /// (session, nonce) pairs for every successful camera-upload login.
    pub fn accepted_nonces(&self) -> &[(u64, [u8; NONCE_LEN])] {
        &self.accepted_nonces
    }

    /// Plaintext fields served to `id` in secure-view sessions.
    pub fn set_document(&mut self, id: &str, fields: Vec<(String, Vec<u8>)>) {
        self.documents.insert(id.to_string(), fields);
    }

    pub fn session(&self, sid: u64) -> Option<&ServerSession> {
        self.sessions.get(&sid)
    }

    pub fn is_authenticated(&self, sid: u64) -> bool {
        self.sessions.get(&sid).is_some_and(|s| s.phase == Phase::Authenticated)
    }

    /// Opens a session and issues its nonce. With `preauth` the session
    /// starts authenticated for that user.
    pub fn begin_session(
        &mut self,
        sid: u64,
        protocol: ProtocolKind,
        preauth: Option<&str>,
        rng: &mut SimRng,
    ) -> [u8; NONCE_LEN] {
        self.clock += 1;
        let nonce = self.nonces.issue(rng, sid).bytes;
        self.sessions.insert(
            sid,
            ServerSession {
                protocol,
                phase: if preauth.is_some() {
                    Phase::Authenticated
                } else {
                    Phase::Idle
                },
                nonce,
                user: preauth.map(str::to_string),
                pi: None,
                otp: None,
                attempts: 0,
                pending: Vec::new(),
                side_copies: Vec::new(),
                awaiting_decision: None,
                transfers: Vec::new(),
                last_candidate: None,
                decrypt_failures: 0,
            },
        );
        nonce
    }

    /// Closes a session. Outstanding OTPs and keyboards expire with it.
    pub fn end_session(&mut self, sid: u64) -> SessionRecord {
        match self.sessions.remove(&sid) {
            Some(s) => SessionRecord {
                transfers: s.transfers,
                secrets: SessionSecrets {
                    permutation: s.pi,
                    otp: s.otp.map(|t| t.value),
                    nonce: Some(s.nonce),
                },
            },
            None => SessionRecord::default(),
        }
    }

    /// Fail-closed guard: transfers still lacking a matching side-channel
    /// copy when the session goes quiet are rejected.
    pub fn quiesce(&mut self, sid: u64, _ctx: &mut Ctx<'_>) -> Vec<Delivery> {
        let Some(s) = self.sessions.get_mut(&sid) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for tx in std::mem::take(&mut s.pending) {
            s.transfers.push(TransferRecord {
                tx: tx.clone(),
                accepted: false,
            });
            out.push(to_terminal(Message::TransferResult { tx, accepted: false }));
        }
        if let Some(tx) = s.awaiting_decision.take() {
            s.transfers.push(TransferRecord { tx, accepted: false });
        }
        out
    }

    pub fn handle(
        &mut self,
        sid: u64,
        from: EntityKind,
        msg: &Message,
        ctx: &mut Ctx<'_>,
    ) -> Result<Vec<Delivery>, Abort> {
        let keys = &self.keys;
        let store = &self.store;
        let name = self.name.as_str();
        let clock = self.clock;
        let documents = &self.documents;
        let Some(s) = self.sessions.get_mut(&sid) else {
            return Err(Abort::violation(ME, msg));
        };
        let guard = ctx.config.flags.hijack_guard;
        match (from, msg, s.phase) {
            (EntityKind::Terminal, Message::IdRequest { id, protocol }, Phase::Idle)
                if matches!(protocol, ProtocolKind::P1 | ProtocolKind::P2) =>
            {
                let Some(record) = store.find(id) else {
                    s.phase = Phase::Denied;
                    return Ok(vec![to_terminal(Message::LoginResult { authenticated: false })]);
                };
                s.user = Some(id.clone());
                let (kind, plaintext) = if *protocol == ProtocolKind::P1 {
                    let pi = KeyboardPermutation::random(ctx.rng);
                    let bytes = pi.symbols().to_vec();
                    s.pi = Some(pi);
                    s.phase = Phase::AwaitPositions;
                    (EnvelopeKind::Keyboard, bytes)
                } else {
                    let token = generate_otp(ctx.rng, ctx.config.otp_len, clock)
                        .map_err(|e| Abort::fatal(ME, super::AbortReason::Malformed(e.to_string())))?;
                    let bytes = token.value.clone().into_bytes();
                    s.otp = Some(token);
                    s.phase = Phase::AwaitOtp;
                    (EnvelopeKind::Otp, bytes)
                };
                let ct = encrypt(&record.user_key, &plaintext, ctx.rng).to_bytes();
                let mut env = Envelope::new(kind, s.nonce, name, ct);
                if ctx.config.flags.sign_server_payloads {
                    env = env.signed(&keys.private);
                }
                let frame = ctx.make_frame(ME, "login_challenge", &env.to_bytes())?;
                Ok(vec![to_terminal(Message::LoginChallenge { frame })])
            }
            (EntityKind::Terminal, Message::PositionsSubmit { positions }, Phase::AwaitPositions) => {
                let pi = s.pi.as_ref().expect("keyboard issued before positions are awaited");
                let candidate = pi.resolve(positions).ok();
                s.last_candidate = candidate.clone();
                let ok = candidate.is_some_and(|pw| store.check(s.user.as_deref().unwrap_or(""), &pw));
                Ok(settle(s, ok, ctx.config.retry_limit))
            }
            (EntityKind::Terminal, Message::OtpSubmit { otp }, Phase::AwaitOtp) => {
                s.last_candidate = Some(otp.clone());
                let ok = s.otp.as_mut().is_some_and(|t| t.redeem(otp));
                Ok(settle(s, ok, ctx.config.retry_limit))
            }
            (EntityKind::Terminal, Message::ConnectRequest, Phase::Idle) => {
                s.phase = Phase::AwaitCredentials;
                let env = Envelope::new(EnvelopeKind::Nonce, s.nonce, name, Vec::new());
                let frame = ctx.make_frame(ME, "nonce_challenge", &env.to_bytes())?;
                Ok(vec![to_terminal(Message::NonceChallenge { frame })])
            }
            (EntityKind::Terminal, Message::CredentialsSubmit { ciphertext }, Phase::AwaitCredentials) => {
                let opened = Ciphertext::from_bytes(ciphertext)
                    .and_then(|c| decrypt(&keys.private, &c))
                    .ok()
                    .and_then(|p| Credentials::from_bytes(&p).ok());
                let ok = match opened {
                    None => {
                        s.decrypt_failures += 1;
                        false
                    }
                    Some(c) => {
                        s.last_candidate = Some(c.password.clone());
                        let fresh = c.nonce == s.nonce && c.server_name == name;
                        let valid = fresh && store.check(&c.id, &c.password);
                        if valid {
                            s.user = Some(c.id);
                            self.accepted_nonces.push((sid, c.nonce));
                        }
                        valid
                    }
                };
                Ok(settle(s, ok, ctx.config.retry_limit))
            }
            (EntityKind::Terminal, Message::TransferRequest { tx }, Phase::Authenticated) => {
                if s.protocol == ProtocolKind::TxVerify {
                    let nonce = ctx.config.flags.tx_nonce_freshness.then_some(s.nonce);
                    let conf = SignedConfirmation::create(&keys.private, tx.clone(), nonce);
                    let frame = ctx.make_frame(ME, "signed_confirmation", &conf.to_bytes())?;
                    s.awaiting_decision = Some(tx.clone());
                    return Ok(vec![to_terminal(Message::ConfirmationPage {
                        shown: tx.clone(),
                        frame,
                    })]);
                }
                if !guard {
                    s.transfers.push(TransferRecord {
                        tx: tx.clone(),
                        accepted: true,
                    });
                    return Ok(vec![to_terminal(Message::TransferResult {
                        tx: tx.clone(),
                        accepted: true,
                    })]);
                }
                s.pending.push(tx.clone());
                Ok(match_side_copies(s))
            }
            (EntityKind::Smartphone, Message::SideChannelTx { tx, signature }, Phase::Authenticated) => {
                let user_key = s.user.as_deref().and_then(|id| store.find(id)).map(|r| &r.user_key);
                let signed = tx.canonical_bytes(Some(&s.nonce));
                if user_key.is_some_and(|k| verify(k, &signed, signature).is_valid()) {
                    s.side_copies.push(tx.clone());
                }
                Ok(match_side_copies(s))
            }
            // A side-channel copy for a session that never authenticated is
            // ignored rather than treated as a violation.
            (EntityKind::Smartphone, Message::SideChannelTx { .. }, _) => Ok(Vec::new()),
            (EntityKind::Terminal, Message::TxDecision { approve }, Phase::Authenticated) => {
                let Some(tx) = s.awaiting_decision.take() else {
                    return Err(Abort::violation(ME, msg));
                };
                s.transfers.push(TransferRecord {
                    tx: tx.clone(),
                    accepted: *approve,
                });
                Ok(vec![to_terminal(Message::TransferResult { tx, accepted: *approve })])
            }
            (EntityKind::Terminal, Message::DocumentRequest, Phase::Authenticated) => {
                let id = s.user.clone().unwrap_or_default();
                let record = store.find(&id).ok_or_else(|| Abort::violation(ME, msg))?;
                let plain = documents.get(&id).cloned().unwrap_or_default();
                let doc = SecureDocument::seal(&plain, &record.user_key, ctx)?;
                Ok(vec![to_terminal(Message::DocumentPage { fields: doc.fields })])
            }
            _ => Err(Abort::violation(ME, msg)),
        }
    }
}

fn to_terminal(message: Message) -> Delivery {
    Delivery::new(ME, EntityKind::Terminal, message)
}

fn settle(s: &mut ServerSession, ok: bool, retry_limit: u32) -> Vec<Delivery> {
    s.attempts += 1;
    if ok {
        s.phase = Phase::Authenticated;
    } else if s.attempts >= retry_limit {
        s.phase = Phase::Denied;
    }
    vec![to_terminal(Message::LoginResult { authenticated: ok })]
}

fn match_side_copies(s: &mut ServerSession) -> Vec<Delivery> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.pending.len() {
        if let Some(j) = s.side_copies.iter().position(|c| c == &s.pending[i]) {
            s.side_copies.remove(j);
            let tx = s.pending.remove(i);
            s.transfers.push(TransferRecord {
                tx: tx.clone(),
                accepted: true,
            });
            out.push(to_terminal(Message::TransferResult { tx, accepted: true }));
        } else {
            i += 1;
        }
    }
    out
}
