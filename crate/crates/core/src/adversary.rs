//! Attackers as session taps: what each one sees, what it can change, and
//! whether what it learned lets it log in later or move money.

use std::collections::BTreeSet;
use std::fmt;

use itertools::Itertools;
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::crypto::{
    decrypt, encrypt, open_with_content_key, random_alphabet_string, Ciphertext, KeyPair, KeyboardPermutation,
    PrivateKey, Role, ALPHABET_SIZE,
};
use crate::entities::envelope::{Credentials, Envelope};
use crate::entities::session::{AbortReason, Ctx, SessionOutcome};
use crate::entities::{
    ChannelKind, Delivery, EntityKind, Message, ProtocolKind, ProtocolSession, Server, SessionConfig, SessionReport,
    StateView, Tap, Terminal, UserModel, UserPlan,
};
use crate::protocols::{run_session, CredentialStore, SignedConfirmation, Transaction, Variant, World};
use crate::rng::{derive_seed, seeded, SimRng};
use crate::visual::{qr_encode, VisualFrame};

pub const ATTACKER_ACCOUNT: &str = "6666-000013";
pub const DEFAULT_FOLLOWUP_BUDGET: u32 = 1;
/// Content keys tried per captured ciphertext in matrix runs.
pub const DEFAULT_BRUTE_FORCE_BUDGET: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdversaryKind {
    BruteForce,
    Keylogger,
    Malware,
    ShoulderSurfer,
    FakeServer,
}

impl AdversaryKind {
    /// The four columns of the resistance matrix.
    pub const MATRIX: [AdversaryKind; 4] = [
        AdversaryKind::BruteForce,
        AdversaryKind::Keylogger,
        AdversaryKind::Malware,
        AdversaryKind::ShoulderSurfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::BruteForce => "brute_force",
            AdversaryKind::Keylogger => "keylogger",
            AdversaryKind::Malware => "malware",
            AdversaryKind::ShoulderSurfer => "shoulder_surfer",
            AdversaryKind::FakeServer => "fake_server",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            AdversaryKind::BruteForce,
            AdversaryKind::Keylogger,
            AdversaryKind::Malware,
            AdversaryKind::ShoulderSurfer,
            AdversaryKind::FakeServer,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Locus {
    Smartphone,
    Terminal,
    /// Only meaningful for the shoulder surfer watching both screens.
    Both,
}

impl Locus {
    pub const MATRIX: [Locus; 2] = [Locus::Smartphone, Locus::Terminal];

    pub fn name(self) -> &'static str {
        match self {
            Locus::Smartphone => "smartphone",
            Locus::Terminal => "terminal",
            Locus::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Locus::Smartphone, Locus::Terminal, Locus::Both]
            .into_iter()
            .find(|l| l.name() == s)
    }

    pub fn covers(self, entity: EntityKind) -> bool {
        match self {
            Locus::Smartphone => entity == EntityKind::Smartphone,
            Locus::Terminal => entity == EntityKind::Terminal,
            Locus::Both => matches!(entity, EntityKind::Smartphone | EntityKind::Terminal),
        }
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Active manipulations on the transaction-verification page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxAttack {
    /// Change the receiver on the displayed page only.
    AlterDisplay,
    /// Send the attacker's transfer and show the user's on the page.
    SubstituteRequest,
    /// Send the user's transfer but rewrite the receiver inside the QR code.
    TamperQr,
    /// Send the attacker's transfer and show a previously captured signed
    /// confirmation (and its transaction) instead of the fresh one.
    ReplayConfirmation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tactics {
    /// Rewrite or inject transfer requests after login.
    pub hijack: bool,
    /// Drop the phone's side-channel transaction copies.
    pub drop_side_channel: bool,
    pub tx_attack: Option<TxAttack>,
}

impl Default for Tactics {
    fn default() -> Self {
        Self {
            hijack: true,
            drop_side_channel: false,
            tx_attack: None,
        }
    }
}

/// What an adversary can touch, derived from its kind and locus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub input_events: bool,
    pub screens: bool,
    pub endpoint_traffic: bool,
    pub state: bool,
    pub alter: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    pub locus: Locus,
    pub tactics: Tactics,
    pub brute_force_budget: u64,
}

impl AdversaryConfig {
    pub fn new(kind: AdversaryKind, locus: Locus) -> Self {
        Self {
            kind,
            locus,
            tactics: Tactics::default(),
            brute_force_budget: DEFAULT_BRUTE_FORCE_BUDGET,
        }
    }

    pub fn capabilities(&self) -> Capabilities {
        let none = Capabilities {
            input_events: false,
            screens: false,
            endpoint_traffic: false,
            state: false,
            alter: false,
        };
        match self.kind {
            AdversaryKind::Keylogger => Capabilities {
                input_events: true,
                ..none
            },
            AdversaryKind::ShoulderSurfer => Capabilities {
                input_events: true,
                screens: true,
                ..none
            },
            AdversaryKind::BruteForce => Capabilities { screens: true, ..none },
            AdversaryKind::Malware => Capabilities {
                input_events: true,
                screens: true,
                endpoint_traffic: true,
                state: true,
                alter: true,
            },
            AdversaryKind::FakeServer => none,
        }
    }

    /// The adversary's view of `d`, or `None` if it cannot see it. Shoulder
    /// surfers see input only as echoed on screen, so password fields are
    /// masked; a brute-force attacker only photographs QR codes.
    pub fn view_of(&self, d: &Delivery) -> Option<Message> {
        let at_from = self.locus.covers(d.from);
        let at_to = self.locus.covers(d.to);
        let channel = d.channel();
        match self.kind {
            AdversaryKind::Keylogger => (channel == ChannelKind::Click && at_to).then(|| d.message.clone()),
            AdversaryKind::Malware => (at_from || at_to).then(|| d.message.clone()),
            AdversaryKind::ShoulderSurfer => {
                if channel == ChannelKind::Visual && at_from {
                    Some(d.message.clone())
                } else if channel == ChannelKind::Click && at_to {
                    Some(match &d.message {
                        Message::PhoneLogin { id, password } => Message::PhoneLogin {
                            id: id.clone(),
                            password: "*".repeat(password.len()),
                        },
                        other => other.clone(),
                    })
                } else {
                    None
                }
            }
            AdversaryKind::BruteForce => match &d.message {
                m @ (Message::ShowQr { .. } | Message::ShowQrSet { .. }) if at_from => Some(m.clone()),
                _ => None,
            },
            AdversaryKind::FakeServer => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub step: usize,
    pub channel: ChannelKind,
    pub tag: &'static str,
    pub bytes: Vec<u8>,
}

/// Everything an adversary has collected so far.
#[derive(Debug, Clone, Default)]
pub struct Knowledge {
    pub id: Option<String>,
    pub password: Option<String>,
    pub user_key: Option<PrivateKey>,
    pub positions: Vec<u8>,
    pub layouts: Vec<KeyboardPermutation>,
    pub otps: Vec<String>,
    pub credential_ciphertexts: Vec<Vec<u8>>,
    pub qr_payloads: Vec<Vec<u8>>,
    pub confirmations: Vec<(Transaction, VisualFrame)>,
}

impl Knowledge {
    fn learn(&mut self, from: EntityKind, m: &Message) {
        match m {
            Message::EnterId { id } => self.id = Some(id.clone()),
            Message::PhoneLogin { id, password } => {
                self.id = Some(id.clone());
                if !password.chars().all(|c| c == '*') {
                    self.password = Some(password.clone());
                }
            }
            Message::KeyClick { position } => self.positions.push(*position),
            Message::KeyboardDone => self.infer_password(),
            Message::PositionsSubmit { positions } => {
                if self.positions.is_empty() {
                    self.positions = positions.clone();
                }
                self.infer_password();
            }
            Message::TypeText { text } | Message::OtpSubmit { otp: text } | Message::ShowOtp { otp: text } => {
                if !self.otps.contains(text) {
                    self.otps.push(text.clone());
                }
            }
            Message::ShowLayout { layout } => self.layouts.push(layout.clone()),
            Message::ShowQr { frame } => {
                self.qr_payloads.push(frame.payload.clone());
                if from == EntityKind::Smartphone {
                    self.credential_ciphertexts.push(frame.payload.clone());
                }
            }
            Message::ShowQrSet { frames } => {
                self.qr_payloads.extend(frames.iter().map(|(_, f)| f.payload.clone()));
            }
            Message::CredentialsSubmit { ciphertext } => {
                if !self.credential_ciphertexts.contains(ciphertext) {
                    self.credential_ciphertexts.push(ciphertext.clone());
                }
            }
            Message::ConfirmationPage { shown, frame } => self.confirmations.push((shown.clone(), frame.clone())),
            _ => {}
        }
    }

    /// Clicks seen on the blank keyboard plus the layout seen on the phone
    /// give the password away.
    fn infer_password(&mut self) {
        if self.password.is_some() || self.positions.is_empty() {
            return;
        }
        if let Some(layout) = self.layouts.last() {
            self.password = layout.resolve(&self.positions).ok();
        }
    }
}

/// A configured adversary attached to a session as its tap.
#[derive(Debug, Clone)]
pub struct Adversary {
    pub config: AdversaryConfig,
    pub observations: Vec<Observation>,
    pub knowledge: Knowledge,
    intended: Option<Transaction>,
}

pub fn attacker_transaction(like: Option<&Transaction>) -> Transaction {
    let (amount, name) = like.map_or((99_999, "Carol Receiver"), |t| (t.amount, t.receiver_name.as_str()));
    Transaction::new(ATTACKER_ACCOUNT, amount, name).expect("attacker transaction is valid")
}

impl Adversary {
    pub fn new(config: AdversaryConfig) -> Self {
        Self {
            config,
            observations: Vec::new(),
            knowledge: Knowledge::default(),
            intended: None,
        }
    }

    fn alters_at(&self, entity: EntityKind) -> bool {
        self.config.capabilities().alter && self.config.locus.covers(entity)
    }

    fn rewrite_confirmation(&self, shown: &Transaction, frame: &VisualFrame) -> Option<Message> {
        let intended = self.intended.clone().unwrap_or_else(|| shown.clone());
        match self.config.tactics.tx_attack.as_ref()? {
            TxAttack::AlterDisplay => {
                let mut fake = shown.clone();
                fake.receiver_account.push('7');
                Some(Message::ConfirmationPage {
                    shown: fake,
                    frame: frame.clone(),
                })
            }
            TxAttack::SubstituteRequest => Some(Message::ConfirmationPage {
                shown: intended,
                frame: frame.clone(),
            }),
            TxAttack::TamperQr => {
                let mut conf = SignedConfirmation::from_bytes(&frame.payload).ok()?;
                conf.transaction.receiver_account = ATTACKER_ACCOUNT.to_string();
                let forged = qr_encode(&conf.to_bytes(), frame.spec)
                    .or_else(|_| {
                        crate::visual::qr_encode_auto(&conf.to_bytes(), frame.spec.ec_level, frame.spec.mode, 1)
                    })
                    .ok()?;
                Some(Message::ConfirmationPage {
                    shown: shown.clone(),
                    frame: forged,
                })
            }
            TxAttack::ReplayConfirmation => {
                let (old_tx, old_frame) = self.knowledge.confirmations.first()?.clone();
                Some(Message::ConfirmationPage {
                    shown: old_tx,
                    frame: old_frame,
                })
            }
        }
    }
}

impl Tap for Adversary {
    fn observe(&mut self, step: usize, d: &Delivery) {
        let Some(view) = self.config.view_of(d) else {
            return;
        };
        self.observations.push(Observation {
            step,
            channel: d.channel(),
            tag: view.tag().1,
            bytes: view.to_wire(),
        });
        self.knowledge.learn(d.from, &view);
    }

    fn intercept(&mut self, d: Delivery) -> Vec<Delivery> {
        if self.alters_at(EntityKind::Terminal) {
            match (&d.message, d.from, d.to) {
                (Message::TransferRequest { tx }, EntityKind::Terminal, _) => {
                    self.intended.get_or_insert_with(|| tx.clone());
                    let substitute = match &self.config.tactics.tx_attack {
                        Some(TxAttack::SubstituteRequest | TxAttack::ReplayConfirmation) => true,
                        Some(_) => false,
                        None => self.config.tactics.hijack,
                    };
                    if substitute {
                        let m = Message::TransferRequest {
                            tx: attacker_transaction(Some(tx)),
                        };
                        return vec![Delivery::new(d.from, d.to, m)];
                    }
                }
                (Message::LoginResult { authenticated: true }, _, EntityKind::Terminal)
                    if self.config.tactics.hijack && self.config.tactics.tx_attack.is_none() =>
                {
                    // Session hijack: the moment the login succeeds, act as the user.
                    let inject = Message::TransferRequest {
                        tx: attacker_transaction(self.intended.as_ref()),
                    };
                    return vec![d, Delivery::new(EntityKind::Terminal, EntityKind::Server, inject)];
                }
                (Message::ConfirmationPage { shown, frame }, _, EntityKind::Terminal) => {
                    if let Some(m) = self.rewrite_confirmation(shown, frame) {
                        return vec![Delivery::new(d.from, d.to, m)];
                    }
                }
                _ => {}
            }
        }
        if self.alters_at(EntityKind::Smartphone)
            && self.config.tactics.drop_side_channel
            && d.channel() == ChannelKind::CellularSide
        {
            return Vec::new();
        }
        vec![d]
    }

    fn inspect(&mut self, view: StateView<'_>) {
        if !self.config.capabilities().state {
            return;
        }
        if let StateView::Smartphone(phone) = view {
            if self.config.locus.covers(EntityKind::Smartphone) {
                self.knowledge.user_key = Some(phone.user_private_key().clone());
                if let Some(pw) = phone.typed_password() {
                    self.knowledge.password = Some(pw.to_string());
                }
            }
        }
    }
}

/// Installs `config` on a session.
pub fn attach<'w>(adversary: &'w mut Adversary, session: ProtocolSession<'w>) -> ProtocolSession<'w> {
    session.with_tap(adversary)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttackOutcome {
    pub learned_password: bool,
    pub learned_reusable_secret: bool,
    pub can_authenticate_later: bool,
    pub can_alter_transaction: bool,
    pub posterior_candidate_count: Option<u128>,
}

impl AttackOutcome {
    /// The attack is resisted iff it yields neither a later login nor a
    /// completed altered transaction.
    pub fn resisted(&self) -> bool {
        !self.can_authenticate_later && !self.can_alter_transaction
    }
}

pub fn falling_factorial(k: u128, n: u128) -> u128 {
    (0..n).map(|i| k - i).product()
}

/// Tries content keys at random against one ciphertext.
#[derive(Debug, Clone, Copy)]
pub struct BruteForcer {
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForceResult {
    pub attempts: u64,
    pub recovered: Option<Vec<u8>>,
}

impl BruteForcer {
    pub fn search(&self, ciphertext: &Ciphertext, rng: &mut SimRng) -> BruteForceResult {
        let mut key = [0u8; 32];
        for attempt in 1..=self.budget {
            rng.fill_bytes(&mut key);
            if let Some(plain) = open_with_content_key(ciphertext, &key) {
                return BruteForceResult {
                    attempts: attempt,
                    recovered: Some(plain),
                };
            }
        }
        BruteForceResult {
            attempts: self.budget,
            recovered: None,
        }
    }
}

fn ciphertexts_in(payload: &[u8]) -> Option<Ciphertext> {
    if let Ok(env) = Envelope::from_bytes(payload) {
        return Ciphertext::from_bytes(&env.body).ok();
    }
    Ciphertext::from_bytes(payload).ok()
}

/// Fresh login attempts against the world's server using only `knowledge`.
/// The target identity is assumed known; user names are not secrets.
pub fn attempt_login(world: &mut World, protocol: ProtocolKind, knowledge: &Knowledge, attempts: u32) -> bool {
    let id = knowledge.id.clone().unwrap_or_else(|| world.user_id.clone());
    let server_key = world.server.public_key().clone();
    let server_name = world.server.name.clone();
    for attempt in 0..attempts {
        let sid = world.next_session_id();
        let mut rng = seeded(derive_seed(world.seed, "followup", sid));
        let config = SessionConfig::new(protocol, derive_seed(world.seed, "followup-config", u64::from(attempt)));
        let mut frames = Vec::new();
        let mut captures = 0;
        world.server.begin_session(sid, protocol, None, &mut rng);
        let mut send = |server: &mut Server, rng: &mut SimRng, msg: Message| -> Option<Message> {
            let mut ctx = Ctx {
                rng,
                config: &config,
                session_id: sid,
                frames: &mut frames,
                captures: &mut captures,
            };
            server
                .handle(sid, EntityKind::Terminal, &msg, &mut ctx)
                .ok()?
                .into_iter()
                .next()
                .map(|d| d.message)
        };
        let open = |frame: &VisualFrame| Envelope::from_bytes(&frame.payload).ok();
        let response = match protocol {
            ProtocolKind::P1 => {
                let Some(Message::LoginChallenge { frame }) = send(
                    &mut world.server,
                    &mut rng,
                    Message::IdRequest {
                        id: id.clone(),
                        protocol,
                    },
                ) else {
                    world.server.end_session(sid);
                    continue;
                };
                let layout = knowledge.user_key.as_ref().and_then(|sk| {
                    let env = open(&frame)?;
                    let plain = decrypt(sk, &Ciphertext::from_bytes(&env.body).ok()?).ok()?;
                    KeyboardPermutation::from_symbols(&plain).ok()
                });
                let positions = match (layout, &knowledge.password) {
                    (Some(l), Some(pw)) => l.positions_for(pw).unwrap_or_default(),
                    _ if !knowledge.positions.is_empty() => knowledge.positions.clone(),
                    _ => (0..8).map(|_| rng.gen_range(0..ALPHABET_SIZE as u8)).collect(),
                };
                Message::PositionsSubmit { positions }
            }
            ProtocolKind::P2 => {
                let Some(Message::LoginChallenge { frame }) = send(
                    &mut world.server,
                    &mut rng,
                    Message::IdRequest {
                        id: id.clone(),
                        protocol,
                    },
                ) else {
                    world.server.end_session(sid);
                    continue;
                };
                let fresh = knowledge.user_key.as_ref().and_then(|sk| {
                    let env = open(&frame)?;
                    String::from_utf8(decrypt(sk, &Ciphertext::from_bytes(&env.body).ok()?).ok()?).ok()
                });
                let otp = fresh
                    .or_else(|| knowledge.otps.last().cloned())
                    .unwrap_or_else(|| random_alphabet_string(&mut rng, config.otp_len));
                Message::OtpSubmit { otp }
            }
            ProtocolKind::P3 => {
                let Some(Message::NonceChallenge { frame }) =
                    send(&mut world.server, &mut rng, Message::ConnectRequest)
                else {
                    world.server.end_session(sid);
                    continue;
                };
                let ciphertext = match (open(&frame), &knowledge.password) {
                    (Some(env), Some(pw)) => {
                        let creds = Credentials {
                            nonce: env.session_nonce,
                            id: id.clone(),
                            password: pw.clone(),
                            server_name: server_name.clone(),
                        };
                        encrypt(&server_key, &creds.to_bytes(), &mut rng).to_bytes()
                    }
                    _ => match knowledge.credential_ciphertexts.last() {
                        Some(old) => old.clone(),
                        None => {
                            let mut junk = vec![0u8; 120];
                            rng.fill_bytes(&mut junk);
                            junk
                        }
                    },
                };
                Message::CredentialsSubmit { ciphertext }
            }
            _ => return false,
        };
        let _ = send(&mut world.server, &mut rng, response);
        let ok = world.server.is_authenticated(sid);
        world.server.end_session(sid);
        if ok {
            return true;
        }
    }
    false
}

/// Scores an attack on a finished session.
pub fn evaluate(adv: &Adversary, report: &SessionReport, world: &mut World, followup_budget: u32) -> AttackOutcome {
    let mut knowledge = adv.knowledge.clone();
    if adv.config.kind == AdversaryKind::BruteForce {
        let forcer = BruteForcer {
            budget: adv.config.brute_force_budget,
        };
        let mut rng = seeded(derive_seed(world.seed, "brute-force", report.session_id));
        for payload in &adv.knowledge.qr_payloads {
            if let Some(ct) = ciphertexts_in(payload) {
                if let Some(plain) = forcer.search(&ct, &mut rng).recovered {
                    knowledge.qr_payloads.push(plain);
                }
            }
        }
    }
    let learned_password = knowledge
        .password
        .as_deref()
        .is_some_and(|p| p.eq_ignore_ascii_case(world.password()));
    let learned_reusable_secret = learned_password || knowledge.user_key.is_some();
    let can_authenticate_later = ProtocolKind::LOGIN.contains(&report.protocol)
        && attempt_login(world, report.protocol, &knowledge, followup_budget);
    let can_alter_transaction = report.executed().any(|tx| tx.receiver_account == ATTACKER_ACCOUNT);
    let posterior_candidate_count = if report.protocol != ProtocolKind::P1 {
        None
    } else if learned_password {
        Some(1)
    } else if knowledge.positions.is_empty() {
        None
    } else {
        let distinct = knowledge.positions.iter().collect::<BTreeSet<_>>().len() as u128;
        Some(falling_factorial(ALPHABET_SIZE as u128, distinct))
    };
    AttackOutcome {
        learned_password,
        learned_reusable_secret,
        can_authenticate_later,
        can_alter_transaction,
        posterior_candidate_count,
    }
}

/// One seeded trial of a matrix cell: a fresh world, a login with a planned
/// transfer (confirmed on the phone when the guard is on) and the verdict.
pub fn run_attack_trial(
    protocol: ProtocolKind,
    config: &AdversaryConfig,
    base: &SessionConfig,
    seed: u64,
) -> (AttackOutcome, SessionReport) {
    let mut world = World::new(seed);
    let tx = world.sample_transaction();
    let mut session_config = base.clone();
    session_config.protocol = protocol;
    session_config.seed = seed;
    let plan = UserPlan {
        transfer: Some(tx),
        confirm_on_phone: session_config.flags.hijack_guard,
    };
    let mut adv = Adversary::new(config.clone());
    let report = run_session(&mut world, session_config, Variant::Honest, plan, Some(&mut adv));
    let outcome = evaluate(&adv, &report, &mut world, DEFAULT_FOLLOWUP_BUDGET);
    (outcome, report)
}

// ---------------------------------------------------------------------------
// Phishing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FakeServerOutcome {
    /// The phone refused the fake server's payload.
    pub phone_rejected: bool,
    pub learned_password: bool,
    /// The fake server could open the uploaded credentials.
    pub decrypted_credentials: bool,
    pub report: SessionReport,
}

/// Runs one login against a phishing server that claims the genuine
/// server's name but holds its own keys. It knows the user's id and public
/// key, which are not secret.
pub fn run_fake_server(world: &mut World, config: SessionConfig) -> FakeServerOutcome {
    let mut rng = seeded(derive_seed(world.seed, "fake-server", 0));
    let keys = KeyPair::generate(Role::Server, &mut rng);
    let mut store = CredentialStore::new();
    let decoy = random_alphabet_string(&mut rng, 12);
    store
        .insert(&world.user_id, &decoy, world.user_keys().public.clone())
        .expect("decoy credentials are valid");
    let mut fake = Server::new(&world.server.name, keys, store);
    let sid = world.next_session_id();
    let user = UserModel::new(&world.user_id, world.password(), UserPlan::default());
    let mut session = ProtocolSession::new(
        sid,
        config.clone(),
        &mut fake,
        Terminal::new(config.flags.terminal_camera),
        world.smartphone(),
        user,
    );
    session.run();
    let (candidate, failures) = session
        .server()
        .session(sid)
        .map_or((None, 0), |s| (s.last_candidate.clone(), s.decrypt_failures));
    let report = session.finish();
    let phone_rejected = matches!(
        &report.outcome,
        SessionOutcome::Aborted(a) if a.at == EntityKind::Smartphone
            && matches!(a.reason, AbortReason::InvalidServerSignature | AbortReason::ServerMismatch)
    );
    let learned_password = candidate
        .as_deref()
        .is_some_and(|c| c.eq_ignore_ascii_case(world.password()));
    FakeServerOutcome {
        phone_rejected,
        learned_password,
        decrypted_credentials: config.protocol == ProtocolKind::P3 && failures == 0 && candidate.is_some(),
        report,
    }
}

// ---------------------------------------------------------------------------
// Keylogger posterior on reduced instances
// ---------------------------------------------------------------------------

pub const POSTERIOR_MAX_ALPHABET: usize = 10;
pub const POSTERIOR_MAX_LENGTH: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PosteriorError {
    #[error("instance k={k}, n={n} exceeds the enumerable bound (k <= 10, n <= 4)")]
    TooLarge { k: usize, n: usize },
    #[error("observed {observed} clicks for a password of length {n}")]
    LengthMismatch { observed: usize, n: usize },
    #[error("click position {0} is outside the {1}-key keyboard")]
    BadPosition(u8, usize),
}

/// Number of length-`n` passwords over a `k`-symbol alphabet that some
/// keyboard permutation maps to the observed click positions, counted by
/// enumerating all k! permutations.
pub fn posterior_count(positions: &[u8], k: usize, n: usize) -> Result<u64, PosteriorError> {
    if positions.len() != n {
        return Err(PosteriorError::LengthMismatch {
            observed: positions.len(),
            n,
        });
    }
    if n == 0 {
        return Ok(1);
    }
    if k > POSTERIOR_MAX_ALPHABET || n > POSTERIOR_MAX_LENGTH {
        return Err(PosteriorError::TooLarge { k, n });
    }
    if let Some(&p) = positions.iter().find(|&&p| usize::from(p) >= k) {
        return Err(PosteriorError::BadPosition(p, k));
    }
    let candidates: BTreeSet<Vec<usize>> = (0..k)
        .permutations(k)
        .map(|pi| positions.iter().map(|&p| pi[usize::from(p)]).collect())
        .collect();
    Ok(candidates.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_small_cases() {
        assert_eq!(posterior_count(&[0, 3], 5, 2), Ok(20));
        assert_eq!(posterior_count(&[2, 2], 5, 2), Ok(5));
        assert_eq!(posterior_count(&[], 36, 0), Ok(1));
        assert_eq!(
            posterior_count(&[0; 5], 5, 5),
            Err(PosteriorError::TooLarge { k: 5, n: 5 })
        );
        assert!(posterior_count(&[0, 1, 2], 11, 3).is_err());
        assert!(posterior_count(&[7], 5, 1).is_err());
        assert!(posterior_count(&[1], 5, 2).is_err());
    }

    #[test]
    fn falling_factorial_values() {
        assert_eq!(falling_factorial(36, 0), 1);
        assert_eq!(falling_factorial(5, 2), 20);
        assert_eq!(falling_factorial(36, 4), 36 * 35 * 34 * 33);
    }

    #[test]
    fn names_round_trip() {
        for k in AdversaryKind::MATRIX {
            assert_eq!(AdversaryKind::parse(k.name()), Some(k));
        }
        assert_eq!(AdversaryKind::parse("fake_server"), Some(AdversaryKind::FakeServer));
        for l in [Locus::Smartphone, Locus::Terminal, Locus::Both] {
            assert_eq!(Locus::parse(l.name()), Some(l));
        }
    }

    #[test]
    fn keylogger_view_is_input_only() {
        let cfg = AdversaryConfig::new(AdversaryKind::Keylogger, Locus::Terminal);
        let click = Delivery::new(
            EntityKind::User,
            EntityKind::Terminal,
            Message::KeyClick { position: 3 },
        );
        let screen = Delivery::new(
            EntityKind::Terminal,
            EntityKind::User,
            Message::ShowBlankKeyboard { keys: 36 },
        );
        let phone = Delivery::new(
            EntityKind::User,
            EntityKind::Smartphone,
            Message::PhoneLogin {
                id: "a".into(),
                password: "pw".into(),
            },
        );
        assert!(cfg.view_of(&click).is_some());
        assert!(cfg.view_of(&screen).is_none());
        assert!(cfg.view_of(&phone).is_none());
    }

    #[test]
    fn surfer_sees_masked_password() {
        let cfg = AdversaryConfig::new(AdversaryKind::ShoulderSurfer, Locus::Smartphone);
        let phone = Delivery::new(
            EntityKind::User,
            EntityKind::Smartphone,
            Message::PhoneLogin {
                id: "alice".into(),
                password: "secret".into(),
            },
        );
        assert_eq!(
            cfg.view_of(&phone),
            Some(Message::PhoneLogin {
                id: "alice".into(),
                password: "******".into()
            })
        );
    }
}
