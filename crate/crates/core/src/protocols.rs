//! The three login flows, transaction verification, secure viewing and the
//! side-channel hijack guard, run over the four entity state machines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::crypto::{
    encrypt, normalize_symbol, random_alphabet_string, sign, verify, KeyPair, PrivateKey, PublicKey, Role, Signature,
    ALPHABET, NONCE_LEN,
};
use crate::entities::session::{Abort, Ctx};
use crate::entities::wire::{Reader, WireError, Writer};
use crate::entities::{
    EntityKind, ProtocolKind, ProtocolSession, SecretKind, SecretRegistry, Server, SessionConfig, SessionReport,
    Smartphone, Tap, Terminal, UserModel, UserPlan,
};
use crate::rng::{derive_seed, seeded, SimRng};
use crate::visual::VisualFrame;

// ---------------------------------------------------------------------------
// Credentials
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CredentialError {
    #[error("identity {0:?} is already registered")]
    DuplicateId(String),
    #[error("password must be non-empty and drawn from a-z0-9")]
    BadPassword,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredentialRecord {
    pub id: String,
    password: String,
    pub user_key: PublicKey,
}

/// Server-side user database: identity → password and PK_ID.
#[derive(Debug, Clone, Default)]
pub struct CredentialStore {
    records: BTreeMap<String, CredentialRecord>,
}

impl CredentialStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: &str, password: &str, user_key: PublicKey) -> Result<(), CredentialError> {
        if password.is_empty() || password.bytes().any(|b| normalize_symbol(b).is_err()) {
            return Err(CredentialError::BadPassword);
        }
        if self.records.contains_key(id) {
            return Err(CredentialError::DuplicateId(id.to_string()));
        }
        self.records.insert(
            id.to_string(),
            CredentialRecord {
                id: id.to_string(),
                password: password.to_ascii_lowercase(),
                user_key,
            },
        );
        Ok(())
    }

    pub fn find(&self, id: &str) -> Option<&CredentialRecord> {
        self.records.get(id)
    }

    /// Case-insensitive password check.
    pub fn check(&self, id: &str, password: &str) -> bool {
        self.find(id).is_some_and(|r| r.password.eq_ignore_ascii_case(password))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Transactions
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransactionError {
    #[error("transaction amount must be positive")]
    ZeroAmount,
    #[error("field {0} may not contain a newline")]
    Newline(&'static str),
    #[error(transparent)]
    Wire(#[from] WireError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transaction {
    pub receiver_account: String,
    /// Minor currency units.
    pub amount: u64,
    pub receiver_name: String,
}

impl Transaction {
    pub fn new(receiver_account: &str, amount: u64, receiver_name: &str) -> Result<Self, TransactionError> {
        if amount == 0 {
            return Err(TransactionError::ZeroAmount);
        }
        if receiver_account.contains('\n') {
            return Err(TransactionError::Newline("receiver_account"));
        }
        if receiver_name.contains('\n') {
            return Err(TransactionError::Newline("receiver_name"));
        }
        Ok(Self {
            receiver_account: receiver_account.to_string(),
            amount,
            receiver_name: receiver_name.to_string(),
        })
    }

    /// `label=value` lines in fixed field order, with an optional trailing
    /// session nonce line.
    pub fn canonical_bytes(&self, nonce: Option<&[u8; NONCE_LEN]>) -> Vec<u8> {
        let mut s = format!(
            "receiver_account={}\namount={}\nreceiver_name={}\n",
            self.receiver_account, self.amount, self.receiver_name
        );
        if let Some(n) = nonce {
            s.push_str("nonce=");
            s.push_str(&hex::encode(n));
            s.push('\n');
        }
        s.into_bytes()
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.str(&self.receiver_account).u64(self.amount).str(&self.receiver_name);
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, TransactionError> {
        let receiver_account = r.str()?;
        let amount = r.u64()?;
        let receiver_name = r.str()?;
        Transaction::new(&receiver_account, amount, &receiver_name)
    }
}

impl fmt::Display for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} to {} ({})",
            self.amount, self.receiver_account, self.receiver_name
        )
    }
}

/// Server-signed copy of a transaction shown as a QR code on the
/// confirmation page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedConfirmation {
    pub transaction: Transaction,
    pub nonce: Option<[u8; NONCE_LEN]>,
    pub signature: Signature,
}

impl SignedConfirmation {
    pub fn create(server: &PrivateKey, transaction: Transaction, nonce: Option<[u8; NONCE_LEN]>) -> Self {
        let signature = sign(server, &transaction.canonical_bytes(nonce.as_ref()));
        Self {
            transaction,
            nonce,
            signature,
        }
    }

    pub fn verify(&self, server: &PublicKey) -> bool {
        verify(
            server,
            &self.transaction.canonical_bytes(self.nonce.as_ref()),
            &self.signature,
        )
        .is_valid()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(b'C');
        self.transaction.write(&mut w);
        match &self.nonce {
            Some(n) => w.bool(true).fixed(n),
            None => w.bool(false),
        };
        w.bytes(&self.signature.bytes);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TransactionError> {
        let mut r = Reader::new(bytes, "signed confirmation");
        if r.u8()? != b'C' {
            return Err(WireError("signed confirmation").into());
        }
        let transaction = Transaction::read(&mut r)?;
        let nonce = if r.bool()? { Some(r.fixed::<NONCE_LEN>()?) } else { None };
        let signature = Signature { bytes: r.bytes()? };
        r.end()?;
        Ok(Self {
            transaction,
            nonce,
            signature,
        })
    }
}

// ---------------------------------------------------------------------------
// Secure documents
// ---------------------------------------------------------------------------

/// A page whose sensitive fields are shown only as QR codes of ciphertexts
/// under PK_ID.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SecureDocument {
    pub fields: Vec<(String, VisualFrame)>,
}

impl SecureDocument {
    pub fn seal(plain: &[(String, Vec<u8>)], user_key: &PublicKey, ctx: &mut Ctx<'_>) -> Result<Self, Abort> {
        let mut fields = Vec::with_capacity(plain.len());
        for (label, value) in plain {
            let ct = encrypt(user_key, value, ctx.rng).to_bytes();
            fields.push((
                label.clone(),
                ctx.make_frame(EntityKind::Server, "document_field", &ct)?,
            ));
        }
        Ok(Self { fields })
    }
}

// ---------------------------------------------------------------------------
// World: long-lived state shared by consecutive sessions
// ---------------------------------------------------------------------------

pub const DEFAULT_SERVER_NAME: &str = "bank.example";
pub const DEFAULT_USER_ID: &str = "alice";
pub const DEFAULT_PASSWORD_LEN: usize = 8;

/// One provisioned user, one server and the RNG that created them.
#[derive(Debug, Clone)]
pub struct World {
    pub seed: u64,
    rng: SimRng,
    pub server: Server,
    pub user_id: String,
    password: String,
    user_keys: KeyPair,
    next_session: u64,
}

impl World {
    /// Provisions a user with a random password.
    pub fn new(seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, "world", 0));
        let password = random_alphabet_string(&mut rng, DEFAULT_PASSWORD_LEN);
        Self::build(seed, rng, &password).expect("generated password is valid")
    }

    pub fn with_password(seed: u64, password: &str) -> Result<Self, CredentialError> {
        let rng = seeded(derive_seed(seed, "world", 0));
        Self::build(seed, rng, password)
    }

    fn build(seed: u64, mut rng: SimRng, password: &str) -> Result<Self, CredentialError> {
        let user_keys = KeyPair::generate(Role::User, &mut rng);
        let server_keys = KeyPair::generate(Role::Server, &mut rng);
        let mut store = CredentialStore::new();
        store.insert(DEFAULT_USER_ID, password, user_keys.public.clone())?;
        Ok(Self {
            seed,
            rng,
            server: Server::new(DEFAULT_SERVER_NAME, server_keys, store),
            user_id: DEFAULT_USER_ID.to_string(),
            password: password.to_ascii_lowercase(),
            user_keys,
            next_session: 1,
        })
    }

    pub fn password(&self) -> &str {
        &self.password
    }

    pub fn user_keys(&self) -> &KeyPair {
        &self.user_keys
    }

    pub fn rng(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    pub fn next_session_id(&mut self) -> u64 {
        let id = self.next_session;
        self.next_session += 1;
        id
    }

    /// The user's phone, pinned to the genuine server.
    pub fn smartphone(&self) -> Smartphone {
        Smartphone::new(
            self.user_keys.clone(),
            &self.server.name,
            self.server.public_key().clone(),
        )
    }

    /// A password guaranteed to differ from the real one.
    pub fn wrong_password(&self) -> String {
        let mut bytes = self.password.clone().into_bytes();
        let i = ALPHABET.iter().position(|&c| c == bytes[0]).unwrap_or(0);
        bytes[0] = ALPHABET[(i + 1) % ALPHABET.len()];
        String::from_utf8(bytes).expect("alphabet is ascii")
    }

    /// A transfer the user might plausibly make.
    pub fn sample_transaction(&mut self) -> Transaction {
        let account = format!(
            "{:04}-{:06}",
            self.rng.gen_range(0..10_000),
            self.rng.gen_range(0..1_000_000)
        );
        let amount = self.rng.gen_range(1..1_000_000);
        Transaction::new(&account, amount, "Carol Receiver").expect("generated transaction is valid")
    }
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Honest,
    /// Wrong password, or a mistyped OTP.
    WrongSecret,
}

/// Runs one session of `config.protocol` against the world's server.
pub fn run_session(
    world: &mut World,
    config: SessionConfig,
    variant: Variant,
    plan: UserPlan,
    tap: Option<&mut dyn Tap>,
) -> SessionReport {
    let password = match variant {
        Variant::Honest => world.password.clone(),
        Variant::WrongSecret => world.wrong_password(),
    };
    let mut user = UserModel::new(&world.user_id, &password, plan);
    user.mistype_otp = variant == Variant::WrongSecret;
    let sid = world.next_session_id();
    let terminal = Terminal::new(config.flags.terminal_camera);
    let smartphone = world.smartphone();
    let mut session = ProtocolSession::new(sid, config, &mut world.server, terminal, smartphone, user);
    if let Some(tap) = tap {
        session = session.with_tap(tap);
    }
    session.finish()
}

fn login(world: &mut World, protocol: ProtocolKind, mut config: SessionConfig, variant: Variant) -> SessionReport {
    config.protocol = protocol;
    run_session(world, config, variant, UserPlan::default(), None)
}

/// Randomized blank keyboard login.
pub fn run_protocol1(world: &mut World, config: SessionConfig, variant: Variant) -> SessionReport {
    login(world, ProtocolKind::P1, config, variant)
}

/// Encrypted OTP login.
pub fn run_protocol2(world: &mut World, config: SessionConfig, variant: Variant) -> SessionReport {
    login(world, ProtocolKind::P2, config, variant)
}

/// Camera-upload login with encrypted credentials.
pub fn run_protocol3(world: &mut World, config: SessionConfig, variant: Variant) -> SessionReport {
    login(world, ProtocolKind::P3, config, variant)
}

/// Transfer confirmation through a signed QR code checked on the phone.
/// The decision lands in `report.tx_decision`.
pub fn run_tx_verification(
    world: &mut World,
    tx: Transaction,
    mut config: SessionConfig,
    tap: Option<&mut dyn Tap>,
) -> SessionReport {
    config.protocol = ProtocolKind::TxVerify;
    let plan = UserPlan {
        transfer: Some(tx),
        confirm_on_phone: false,
    };
    run_session(world, config, Variant::Honest, plan, tap)
}

/// Shows `fields` as encrypted QR codes that only the phone opens.
/// The phone's view lands in `report.document`.
pub fn run_secure_view(
    world: &mut World,
    fields: Vec<(String, Vec<u8>)>,
    mut config: SessionConfig,
    tap: Option<&mut dyn Tap>,
) -> SessionReport {
    config.protocol = ProtocolKind::SecureView;
    let id = world.user_id.clone();
    world.server.set_document(&id, fields);
    run_session(world, config, Variant::Honest, UserPlan::default(), tap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardVerdict {
    ServerAccepts,
    ServerRejects,
}

/// Logs in with `config.protocol`, then requests `tx` at the terminal and,
/// when the guard is on, confirms it on the phone over the side channel.
/// The verdict is the server's decision on the first transfer request it
/// received.
pub fn run_hijack_guard(
    world: &mut World,
    tx: Transaction,
    config: SessionConfig,
    tap: Option<&mut dyn Tap>,
) -> (GuardVerdict, SessionReport) {
    let plan = UserPlan {
        transfer: Some(tx),
        confirm_on_phone: config.flags.hijack_guard,
    };
    let report = run_session(world, config, Variant::Honest, plan, tap);
    let verdict = match report.transfers.first() {
        Some(t) if t.accepted => GuardVerdict::ServerAccepts,
        _ => GuardVerdict::ServerRejects,
    };
    (verdict, report)
}

// ---------------------------------------------------------------------------
// Secret placement
// ---------------------------------------------------------------------------

/// Everything secret in a finished session, with natural owners: the user
/// owns the password and the phone owns SK_ID.
pub fn secret_registry(world: &World, report: &SessionReport, documents: &[(String, Vec<u8>)]) -> SecretRegistry {
    let mut reg = SecretRegistry::new();
    reg.add(SecretKind::Password, world.password.as_bytes(), &[EntityKind::User]);
    if let Some(pi) = &report.secrets.permutation {
        reg.add(SecretKind::Permutation, pi.as_str().as_bytes(), &[]);
        reg.add(SecretKind::Permutation, pi.to_alphanumeric().into_bytes(), &[]);
        reg.add(SecretKind::Permutation, pi.to_base64().into_bytes(), &[]);
    }
    if let Some(otp) = &report.secrets.otp {
        reg.add(SecretKind::Otp, otp.as_bytes(), &[]);
    }
    let user_sk = world.user_keys.private.to_bytes();
    reg.add(SecretKind::UserPrivateKey, user_sk.to_vec(), &[EntityKind::Smartphone]);
    reg.add(
        SecretKind::UserPrivateKey,
        user_sk[..32].to_vec(),
        &[EntityKind::Smartphone],
    );
    reg.add(
        SecretKind::UserPrivateKey,
        user_sk[32..].to_vec(),
        &[EntityKind::Smartphone],
    );
    let server_sk = world.server.keys().private.to_bytes();
    reg.add(SecretKind::ServerPrivateKey, server_sk[..32].to_vec(), &[]);
    reg.add(SecretKind::ServerPrivateKey, server_sk[32..].to_vec(), &[]);
    for (label, value) in documents {
        reg.add(SecretKind::DocumentField(label.clone()), value.clone(), &[]);
    }
    reg
}

/// Expected (entity, secret) findings for an honest run of each flow.
pub fn expected_secret_placement(
    protocol: ProtocolKind,
    document_labels: &[String],
) -> BTreeSet<(EntityKind, SecretKind)> {
    use EntityKind::{Smartphone, Terminal, User};
    match protocol {
        ProtocolKind::P1 => [(Smartphone, SecretKind::Permutation), (User, SecretKind::Permutation)].into(),
        ProtocolKind::P2 => [(Terminal, SecretKind::Otp), (Smartphone, SecretKind::Otp)].into(),
        ProtocolKind::P3 => [(Smartphone, SecretKind::Password)].into(),
        ProtocolKind::TxVerify => BTreeSet::new(),
        ProtocolKind::SecureView => document_labels
            .iter()
            .map(|l| (Smartphone, SecretKind::DocumentField(l.clone())))
            .collect(),
    }
}
