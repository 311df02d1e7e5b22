//! Event loop that moves messages between the four entities.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::crypto::{KeyboardPermutation, NONCE_LEN};
use crate::protocols::Transaction;
use crate::rng::{derive_seed, seeded, SimRng};
use crate::visual::{
    corrupt, qr_decode, qr_encode, qr_encode_auto, EcLevel, FrameSpec, Mode, VisualError, VisualFrame,
};

use super::user::{DocumentView, TxDecision};
use super::{ChannelKind, Delivery, EntityKind, Message, ProtocolKind, Server, Smartphone, Terminal, UserModel};

pub const DEFAULT_MAX_STEPS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flags {
    pub sign_server_payloads: bool,
    pub hijack_guard: bool,
    pub tx_nonce_freshness: bool,
    pub terminal_camera: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            sign_server_payloads: true,
            hijack_guard: true,
            tx_nonce_freshness: true,
            terminal_camera: true,
        }
    }
}

/// QR parameters for every frame a session produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOptions {
    pub ec_level: EcLevel,
    /// Fixed version; `None` picks the smallest version that fits.
    pub version: Option<u8>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            ec_level: EcLevel::M,
            version: None,
        }
    }
}

/// How many codewords a camera capture garbles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorruptionLevel {
    #[default]
    None,
    Codewords(usize),
    /// Exactly the frame's correction budget.
    Budget,
    /// One more than the correction budget.
    AboveBudget,
}

impl CorruptionLevel {
    fn count_for(self, spec: &FrameSpec) -> usize {
        let n = match self {
            CorruptionLevel::None => 0,
            CorruptionLevel::Codewords(n) => n,
            CorruptionLevel::Budget => spec.correction_budget(),
            CorruptionLevel::AboveBudget => spec.correction_budget() + 1,
        };
        n.min(spec.total_codewords())
    }
}

/// Corruption applied to each camera capture, optionally per capture index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorruptionPlan {
    pub default: CorruptionLevel,
    pub per_capture: BTreeMap<usize, CorruptionLevel>,
}

impl CorruptionPlan {
    pub fn uniform(level: CorruptionLevel) -> Self {
        Self {
            default: level,
            per_capture: BTreeMap::new(),
        }
    }

    fn level(&self, capture: usize) -> CorruptionLevel {
        self.per_capture.get(&capture).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionConfig {
    pub protocol: ProtocolKind,
    pub flags: Flags,
    pub frames: FrameOptions,
    pub corruption: CorruptionPlan,
    pub max_steps: usize,
    pub retry_limit: u32,
    pub otp_len: usize,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(protocol: ProtocolKind, seed: u64) -> Self {
        Self {
            protocol,
            flags: Flags::default(),
            frames: FrameOptions::default(),
            corruption: CorruptionPlan::default(),
            max_steps: DEFAULT_MAX_STEPS,
            retry_limit: 1,
            otp_len: crate::crypto::DEFAULT_OTP_LEN,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbortReason {
    Decode(VisualError),
    FrameCapacity(VisualError),
    InvalidServerSignature,
    ServerMismatch,
    Decrypt,
    Malformed(String),
    NoCamera,
    Violation(String),
    StepLimit,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::Decode(e) => write!(f, "visual decode failed: {e}"),
            AbortReason::FrameCapacity(e) => write!(f, "payload does not fit a frame: {e}"),
            AbortReason::InvalidServerSignature => f.write_str("server payload signature invalid"),
            AbortReason::ServerMismatch => f.write_str("payload names a different server"),
            AbortReason::Decrypt => f.write_str("decryption failed"),
            AbortReason::Malformed(what) => write!(f, "malformed {what}"),
            AbortReason::NoCamera => f.write_str("terminal has no camera"),
            AbortReason::Violation(what) => write!(f, "protocol violation: {what}"),
            AbortReason::StepLimit => f.write_str("step limit reached"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abort {
    pub at: EntityKind,
    pub reason: AbortReason,
    pub retryable: bool,
}

impl Abort {
    pub fn fatal(at: EntityKind, reason: AbortReason) -> Self {
        Self {
            at,
            reason,
            retryable: false,
        }
    }

    pub fn violation(at: EntityKind, msg: &Message) -> Self {
        Self::fatal(
            at,
            AbortReason::Violation(format!("{at} has no handler for {}", msg.tag().1)),
        )
    }
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.reason, self.at)?;
        if self.retryable {
            f.write_str(" (retryable)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("session is closed")]
    Closed,
    #[error("session aborted: {0}")]
    Aborted(Abort),
}

/// Version chosen for one frame, kept for the report's frame-usage log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameUse {
    pub purpose: &'static str,
    pub spec: FrameSpec,
    pub payload_len: usize,
}

/// Per-handler context: randomness, configuration and the camera model.
pub struct Ctx<'a> {
    pub rng: &'a mut SimRng,
    pub config: &'a SessionConfig,
    pub session_id: u64,
    pub frames: &'a mut Vec<FrameUse>,
    pub captures: &'a mut usize,
}

impl Ctx<'_> {
    pub fn make_frame(&mut self, at: EntityKind, purpose: &'static str, payload: &[u8]) -> Result<VisualFrame, Abort> {
        let opts = self.config.frames;
        let frame = match opts.version {
            Some(v) => FrameSpec::new(v, opts.ec_level, Mode::Byte).and_then(|spec| qr_encode(payload, spec)),
            None => qr_encode_auto(payload, opts.ec_level, Mode::Byte, 1),
        }
        .map_err(|e| Abort::fatal(at, AbortReason::FrameCapacity(e)))?;
        self.frames.push(FrameUse {
            purpose,
            spec: frame.spec,
            payload_len: payload.len(),
        });
        Ok(frame)
    }

    /// Camera capture: applies the configured corruption, then decodes.
    pub fn capture_raw(&mut self, frame: &VisualFrame) -> Result<Vec<u8>, VisualError> {
        let index = *self.captures;
        *self.captures += 1;
        let count = self.config.corruption.level(index).count_for(&frame.spec);
        let seen = corrupt(frame, count, derive_seed(self.config.seed, "capture", index as u64))?;
        qr_decode(&seen)
    }

    pub fn capture(&mut self, at: EntityKind, frame: &VisualFrame) -> Result<Vec<u8>, Abort> {
        self.capture_raw(frame).map_err(|e| Abort {
            at,
            reason: AbortReason::Decode(e),
            retryable: true,
        })
    }
}

/// Read-only view of an entity's state, handed to taps after each step.
pub enum StateView<'a> {
    User(&'a UserModel),
    Terminal(&'a Terminal),
    Smartphone(&'a Smartphone),
    Server(&'a Server),
}

/// Observer and (for malware) rewriter installed on a session.
pub trait Tap {
    fn observe(&mut self, step: usize, delivery: &Delivery);

    /// Returns what is actually delivered in place of `delivery`.
    fn intercept(&mut self, delivery: Delivery) -> Vec<Delivery> {
        vec![delivery]
    }

    fn inspect(&mut self, _view: StateView<'_>) {}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEvent {
    pub step: usize,
    pub channel: ChannelKind,
    pub from: EntityKind,
    pub to: EntityKind,
    pub tag: &'static str,
    pub digest: String,
}

impl fmt::Display for TranscriptEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}|{}|{}|{}",
            self.step, self.channel, self.from, self.to, self.tag, self.digest
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub step: usize,
    pub entity: EntityKind,
    pub fields: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutcome {
    Authenticated,
    Denied,
    /// Non-login flows that ran to quiescence.
    Completed,
    Aborted(Abort),
}

impl SessionOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            SessionOutcome::Authenticated => "authenticated",
            SessionOutcome::Denied => "denied",
            SessionOutcome::Completed => "completed",
            SessionOutcome::Aborted(a) if a.retryable => "aborted_retryable",
            SessionOutcome::Aborted(_) => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRecord {
    pub tx: Transaction,
    pub accepted: bool,
}

/// Secrets the server generated during the session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionSecrets {
    pub permutation: Option<KeyboardPermutation>,
    pub otp: Option<String>,
    pub nonce: Option<[u8; NONCE_LEN]>,
}

#[derive(Debug, Clone)]
pub struct SessionReport {
    pub session_id: u64,
    pub protocol: ProtocolKind,
    pub outcome: SessionOutcome,
    pub transcript: Vec<TranscriptEvent>,
    pub snapshots: Vec<Snapshot>,
    pub frames: Vec<FrameUse>,
    pub transfers: Vec<TransferRecord>,
    pub tx_decision: Option<TxDecision>,
    pub document: Option<DocumentView>,
    pub secrets: SessionSecrets,
}

impl SessionReport {
    pub fn authenticated(&self) -> bool {
        self.outcome == SessionOutcome::Authenticated
    }

    /// Transcript as `step|channel|from|to|tag|digest` lines.
    pub fn transcript_text(&self) -> String {
        self.transcript.iter().map(|e| format!("{e}\n")).collect()
    }

    pub fn executed(&self) -> impl Iterator<Item = &Transaction> {
        self.transfers.iter().filter(|t| t.accepted).map(|t| &t.tx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum RunState {
    Fresh,
    Running,
    Closed,
    Aborted(Abort),
}

pub struct ProtocolSession<'w> {
    pub session_id: u64,
    pub config: SessionConfig,
    server: &'w mut Server,
    pub terminal: Terminal,
    pub smartphone: Smartphone,
    pub user: UserModel,
    tap: Option<&'w mut dyn Tap>,
    queue: VecDeque<Delivery>,
    transcript: Vec<TranscriptEvent>,
    snapshots: Vec<Snapshot>,
    frames: Vec<FrameUse>,
    rng: SimRng,
    captures: usize,
    step: usize,
    quiesced: bool,
    state: RunState,
}

impl<'w> ProtocolSession<'w> {
    pub fn new(
        session_id: u64,
        config: SessionConfig,
        server: &'w mut Server,
        terminal: Terminal,
        smartphone: Smartphone,
        user: UserModel,
    ) -> Self {
        let rng = seeded(derive_seed(config.seed, "session", session_id));
        Self {
            session_id,
            config,
            server,
            terminal,
            smartphone,
            user,
            tap: None,
            queue: VecDeque::new(),
            transcript: Vec::new(),
            snapshots: Vec::new(),
            frames: Vec::new(),
            rng,
            captures: 0,
            step: 0,
            quiesced: false,
            state: RunState::Fresh,
        }
    }

    pub fn with_tap(mut self, tap: &'w mut dyn Tap) -> Self {
        self.tap = Some(tap);
        self
    }

    pub fn server(&self) -> &Server {
        self.server
    }

    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.transcript
    }

    /// Opens the server-side session and queues the user's first action.
    pub fn start(&mut self) {
        if self.state != RunState::Fresh {
            return;
        }
        let preauth = matches!(self.config.protocol, ProtocolKind::TxVerify | ProtocolKind::SecureView)
            .then(|| self.user.id.clone());
        let nonce = self
            .server
            .begin_session(self.session_id, self.config.protocol, preauth.as_deref(), &mut self.rng);
        if preauth.is_some() {
            // Non-login flows run inside an already authenticated session
            // whose nonce the smartphone learned at login.
            self.smartphone.set_session_nonce(nonce);
        }
        self.queue.extend(self.user.start(self.config.protocol));
        self.state = RunState::Running;
    }

    /// Delivers one message to its addressee and queues what it emits.
    pub fn deliver(&mut self, delivery: Delivery) -> Result<Vec<Delivery>, SessionError> {
        match &self.state {
            RunState::Running => {}
            RunState::Fresh => self.start(),
            RunState::Closed => return Err(SessionError::Closed),
            RunState::Aborted(a) => return Err(SessionError::Aborted(a.clone())),
        }
        match self.dispatch(delivery) {
            Ok(out) => {
                self.queue.extend(out.iter().cloned());
                Ok(out)
            }
            Err(abort) => {
                self.state = RunState::Aborted(abort.clone());
                Err(SessionError::Aborted(abort))
            }
        }
    }

    fn dispatch(&mut self, delivery: Delivery) -> Result<Vec<Delivery>, Abort> {
        if self.step >= self.config.max_steps {
            return Err(Abort::fatal(delivery.to, AbortReason::StepLimit));
        }
        let channel = delivery.channel();
        if !channel.permits(delivery.from, delivery.to) {
            return Err(Abort::fatal(
                delivery.to,
                AbortReason::Violation(format!(
                    "{} cannot travel {} -> {} on the {channel} channel",
                    delivery.message.tag().1,
                    delivery.from,
                    delivery.to
                )),
            ));
        }
        self.step += 1;
        let step = self.step;
        self.transcript.push(TranscriptEvent {
            step,
            channel,
            from: delivery.from,
            to: delivery.to,
            tag: delivery.message.tag().1,
            digest: delivery.message.digest(),
        });
        let mut ctx = Ctx {
            rng: &mut self.rng,
            config: &self.config,
            session_id: self.session_id,
            frames: &mut self.frames,
            captures: &mut self.captures,
        };
        let msg = &delivery.message;
        let out = match delivery.to {
            EntityKind::Server => self.server.handle(self.session_id, delivery.from, msg, &mut ctx)?,
            EntityKind::Terminal => self.terminal.handle(delivery.from, msg, &mut ctx)?,
            EntityKind::Smartphone => self.smartphone.handle(delivery.from, msg, &mut ctx)?,
            EntityKind::User => self.user.handle(delivery.from, msg)?,
        };
        let fields = match delivery.to {
            EntityKind::Server => None,
            EntityKind::Terminal => Some(self.terminal.dump()),
            EntityKind::Smartphone => Some(self.smartphone.dump()),
            EntityKind::User => Some(self.user.dump()),
        };
        if let Some(fields) = fields {
            self.snapshots.push(Snapshot {
                step,
                entity: delivery.to,
                fields,
            });
        }
        if let Some(tap) = self.tap.as_deref_mut() {
            tap.inspect(match delivery.to {
                EntityKind::Server => StateView::Server(self.server),
                EntityKind::Terminal => StateView::Terminal(&self.terminal),
                EntityKind::Smartphone => StateView::Smartphone(&self.smartphone),
                EntityKind::User => StateView::User(&self.user),
            });
        }
        Ok(out)
    }

    /// Processes the next queued message. Returns `false` once the session
    /// has closed or aborted.
    pub fn step(&mut self) -> bool {
        match self.state {
            RunState::Fresh => self.start(),
            RunState::Running => {}
            _ => return false,
        }
        let Some(next) = self.queue.pop_front() else {
            if self.quiesced {
                self.state = RunState::Closed;
                return false;
            }
            // Quiescence: pending transfers without a side-channel copy are
            // rejected, which may wake the terminal once more.
            self.quiesced = true;
            let mut ctx = Ctx {
                rng: &mut self.rng,
                config: &self.config,
                session_id: self.session_id,
                frames: &mut self.frames,
                captures: &mut self.captures,
            };
            let out = self.server.quiesce(self.session_id, &mut ctx);
            self.queue.extend(out);
            return true;
        };
        let step = self.step + 1;
        let actual = match self.tap.as_deref_mut() {
            Some(tap) => {
                tap.observe(step, &next);
                tap.intercept(next)
            }
            None => vec![next],
        };
        for delivery in actual {
            match self.dispatch(delivery) {
                Ok(out) => self.queue.extend(out),
                Err(abort) => {
                    self.state = RunState::Aborted(abort);
                    return false;
                }
            }
        }
        true
    }

    pub fn run(&mut self) {
        while self.step() {}
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.state, RunState::Closed | RunState::Aborted(_))
    }

    /// Runs to completion, closes the server-side session and reports.
    pub fn finish(mut self) -> SessionReport {
        self.run();
        let sid = self.session_id;
        let outcome = match &self.state {
            RunState::Aborted(a) => SessionOutcome::Aborted(a.clone()),
            _ => match self.config.protocol {
                ProtocolKind::P1 | ProtocolKind::P2 | ProtocolKind::P3 => {
                    if self.server.is_authenticated(sid) {
                        SessionOutcome::Authenticated
                    } else {
                        SessionOutcome::Denied
                    }
                }
                _ => SessionOutcome::Completed,
            },
        };
        let record = self.server.end_session(sid);
        SessionReport {
            session_id: sid,
            protocol: self.config.protocol,
            outcome,
            transcript: self.transcript,
            snapshots: self.snapshots,
            frames: self.frames,
            transfers: record.transfers,
            tx_decision: self.user.decision,
            document: self.user.document.clone(),
            secrets: record.secrets,
        }
    }
}

// ---------------------------------------------------------------------------
// Secret placement scanning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SecretKind {
    Password,
    Permutation,
    Otp,
    UserPrivateKey,
    ServerPrivateKey,
    DocumentField(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Finding {
    pub entity: EntityKind,
    pub secret: SecretKind,
    pub first_step: usize,
}

/// Secrets to look for, each with the entities that legitimately own it.
#[derive(Debug, Clone, Default)]
pub struct SecretRegistry {
    entries: Vec<(SecretKind, Vec<u8>, Vec<EntityKind>)>,
}

impl SecretRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, kind: SecretKind, needle: impl Into<Vec<u8>>, owners: &[EntityKind]) {
        let needle = needle.into();
        if !needle.is_empty() {
            self.entries.push((kind, needle, owners.to_vec()));
        }
    }
}

// Short secrets (passwords, OTPs) are matched against whole fields so that
// random ciphertext bytes cannot produce false hits; long ones are also
// searched for inside larger buffers.
const SUBSTRING_MIN: usize = 16;

fn field_holds(field: &[u8], needle: &[u8]) -> bool {
    field.eq_ignore_ascii_case(needle)
        || (needle.len() >= SUBSTRING_MIN && field.windows(needle.len()).any(|w| w == needle))
}

/// Reports every non-owner entity whose state history held a registered secret.
pub fn scan_states_for_secrets(report: &SessionReport, registry: &SecretRegistry) -> Vec<Finding> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for snap in &report.snapshots {
        for (kind, needle, owners) in &registry.entries {
            if owners.contains(&snap.entity) || seen.contains(&(snap.entity, kind.clone())) {
                continue;
            }
            if snap.fields.iter().any(|f| field_holds(f, needle)) {
                seen.insert((snap.entity, kind.clone()));
                out.push(Finding {
                    entity: snap.entity,
                    secret: kind.clone(),
                    first_step: snap.step,
                });
            }
        }
    }
    out.sort();
    out
}
