//! The four participants and the messages they exchange.
//!
//! Every message has a fixed channel kind. Click events come from the user
//! automaton, visual messages are screen contents (read by the user's eyes or
//! a camera), network messages travel the authenticated server–terminal link
//! and the cellular side channel carries the smartphone's signed transaction
//! copies to the server.

pub mod envelope;
pub mod server;
pub mod session;
pub mod smartphone;
pub mod terminal;
pub mod user;
pub mod wire;

use std::fmt;

use sha2::{Digest, Sha256};

use crate::crypto::{KeyboardPermutation, Signature};
use crate::protocols::Transaction;
use crate::visual::VisualFrame;
use wire::Writer;

pub use server::Server;
pub use session::{
    scan_states_for_secrets, Abort, AbortReason, CorruptionLevel, CorruptionPlan, Finding, Flags, FrameOptions,
    ProtocolSession, SecretKind, SecretRegistry, SessionConfig, SessionError, SessionReport, StateView, Tap,
    TranscriptEvent,
};
pub use smartphone::Smartphone;
pub use terminal::Terminal;
pub use user::{TxDecision, UserModel, UserPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    User,
    Terminal,
    Smartphone,
    Server,
}

impl EntityKind {
    pub fn name(self) -> &'static str {
        match self {
            EntityKind::User => "user",
            EntityKind::Terminal => "terminal",
            EntityKind::Smartphone => "smartphone",
            EntityKind::Server => "server",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId {
    pub kind: EntityKind,
    pub instance: u32,
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.kind, self.instance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelKind {
    Network,
    Visual,
    Click,
    CellularSide,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Network => "network",
            ChannelKind::Visual => "visual",
            ChannelKind::Click => "click",
            ChannelKind::CellularSide => "cellular_side",
        }
    }

    /// Whether a message of this kind may travel `from` → `to`.
    pub fn permits(self, from: EntityKind, to: EntityKind) -> bool {
        use EntityKind::*;
        match self {
            ChannelKind::Network => matches!((from, to), (Terminal, Server) | (Server, Terminal)),
            ChannelKind::Visual => matches!(
                (from, to),
                (Terminal, User) | (Terminal, Smartphone) | (Smartphone, User) | (Smartphone, Terminal)
            ),
            ChannelKind::Click => matches!((from, to), (User, Terminal) | (User, Smartphone)),
            ChannelKind::CellularSide => matches!((from, to), (Smartphone, Server)),
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolKind {
    P1,
    P2,
    P3,
    TxVerify,
    SecureView,
}

impl ProtocolKind {
    pub const LOGIN: [ProtocolKind; 3] = [ProtocolKind::P1, ProtocolKind::P2, ProtocolKind::P3];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::P1 => "p1",
            ProtocolKind::P2 => "p2",
            ProtocolKind::P3 => "p3",
            ProtocolKind::TxVerify => "tx_verify",
            ProtocolKind::SecureView => "secure_view",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ProtocolKind::P1,
            ProtocolKind::P2,
            ProtocolKind::P3,
            ProtocolKind::TxVerify,
            ProtocolKind::SecureView,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }

    fn code(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Smartphone's verdict on a scanned confirmation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mark {
    Verified,
    InvalidSignature,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    // click
    EnterId {
        id: String,
    },
    KeyClick {
        position: u8,
    },
    KeyboardDone,
    TypeText {
        text: String,
    },
    Connect,
    PhoneLogin {
        id: String,
        password: String,
    },
    RequestTransfer {
        tx: Transaction,
    },
    ConfirmOnPhone {
        tx: Transaction,
    },
    Decide {
        approve: bool,
    },
    OpenDocument,
    // visual
    ShowQr {
        frame: VisualFrame,
    },
    ShowQrSet {
        frames: Vec<(String, VisualFrame)>,
    },
    ShowBlankKeyboard {
        keys: u8,
    },
    ShowLayout {
        layout: KeyboardPermutation,
    },
    ShowOtp {
        otp: String,
    },
    ShowLoginBox {
        server: String,
    },
    ShowPrompt {
        text: String,
    },
    ShowResult {
        authenticated: bool,
    },
    ShowPage {
        tx: Transaction,
    },
    ShowTransaction {
        tx: Option<Transaction>,
        mark: Mark,
    },
    ShowDocument {
        viewed: Vec<(String, Vec<u8>)>,
        failed: Vec<(String, String)>,
    },
    // network
    IdRequest {
        id: String,
        protocol: ProtocolKind,
    },
    LoginChallenge {
        frame: VisualFrame,
    },
    PositionsSubmit {
        positions: Vec<u8>,
    },
    OtpSubmit {
        otp: String,
    },
    ConnectRequest,
    NonceChallenge {
        frame: VisualFrame,
    },
    CredentialsSubmit {
        ciphertext: Vec<u8>,
    },
    LoginResult {
        authenticated: bool,
    },
    TransferRequest {
        tx: Transaction,
    },
    ConfirmationPage {
        shown: Transaction,
        frame: VisualFrame,
    },
    TxDecision {
        approve: bool,
    },
    TransferResult {
        tx: Transaction,
        accepted: bool,
    },
    DocumentRequest,
    DocumentPage {
        fields: Vec<(String, VisualFrame)>,
    },
    // cellular side channel
    SideChannelTx {
        tx: Transaction,
        signature: Signature,
    },
}

impl Message {
    pub fn channel(&self) -> ChannelKind {
        use Message::*;
        match self {
            EnterId { .. }
            | KeyClick { .. }
            | KeyboardDone
            | TypeText { .. }
            | Connect
            | PhoneLogin { .. }
            | RequestTransfer { .. }
            | ConfirmOnPhone { .. }
            | Decide { .. }
            | OpenDocument => ChannelKind::Click,
            ShowQr { .. }
            | ShowQrSet { .. }
            | ShowBlankKeyboard { .. }
            | ShowLayout { .. }
            | ShowOtp { .. }
            | ShowLoginBox { .. }
            | ShowPrompt { .. }
            | ShowResult { .. }
            | ShowPage { .. }
            | ShowTransaction { .. }
            | ShowDocument { .. } => ChannelKind::Visual,
            IdRequest { .. }
            | LoginChallenge { .. }
            | PositionsSubmit { .. }
            | OtpSubmit { .. }
            | ConnectRequest
            | NonceChallenge { .. }
            | CredentialsSubmit { .. }
            | LoginResult { .. }
            | TransferRequest { .. }
            | ConfirmationPage { .. }
            | TxDecision { .. }
            | TransferResult { .. }
            | DocumentRequest
            | DocumentPage { .. } => ChannelKind::Network,
            SideChannelTx { .. } => ChannelKind::CellularSide,
        }
    }

    pub fn tag(&self) -> (u8, &'static str) {
        use Message::*;
        match self {
            EnterId { .. } => (0x01, "enter_id"),
            KeyClick { .. } => (0x02, "key_click"),
            KeyboardDone => (0x03, "keyboard_done"),
            TypeText { .. } => (0x04, "type_text"),
            Connect => (0x05, "connect"),
            PhoneLogin { .. } => (0x06, "phone_login"),
            RequestTransfer { .. } => (0x07, "request_transfer"),
            ConfirmOnPhone { .. } => (0x08, "confirm_on_phone"),
            Decide { .. } => (0x09, "decide"),
            OpenDocument => (0x0A, "open_document"),
            ShowQr { .. } => (0x20, "show_qr"),
            ShowQrSet { .. } => (0x21, "show_qr_set"),
            ShowBlankKeyboard { .. } => (0x22, "show_blank_keyboard"),
            ShowLayout { .. } => (0x23, "show_layout"),
            ShowOtp { .. } => (0x24, "show_otp"),
            ShowLoginBox { .. } => (0x25, "show_login_box"),
            ShowPrompt { .. } => (0x26, "show_prompt"),
            ShowResult { .. } => (0x27, "show_result"),
            ShowPage { .. } => (0x28, "show_page"),
            ShowTransaction { .. } => (0x29, "show_transaction"),
            ShowDocument { .. } => (0x2A, "show_document"),
            IdRequest { .. } => (0x40, "id_request"),
            LoginChallenge { .. } => (0x41, "login_challenge"),
            PositionsSubmit { .. } => (0x42, "positions_submit"),
            OtpSubmit { .. } => (0x43, "otp_submit"),
            ConnectRequest => (0x44, "connect_request"),
            NonceChallenge { .. } => (0x45, "nonce_challenge"),
            CredentialsSubmit { .. } => (0x46, "credentials_submit"),
            LoginResult { .. } => (0x47, "login_result"),
            TransferRequest { .. } => (0x48, "transfer_request"),
            ConfirmationPage { .. } => (0x49, "confirmation_page"),
            TxDecision { .. } => (0x4A, "tx_decision"),
            TransferResult { .. } => (0x4B, "transfer_result"),
            DocumentRequest => (0x4C, "document_request"),
            DocumentPage { .. } => (0x4D, "document_page"),
            SideChannelTx { .. } => (0x60, "side_channel_tx"),
        }
    }

    fn body(&self) -> Vec<u8> {
        use Message::*;
        fn frame(w: &mut Writer, f: &VisualFrame) {
            w.u8(f.spec.version())
                .str(&f.spec.ec_level.to_string())
                .str(&f.spec.mode.to_string())
                .bytes(&f.codewords);
        }
        let mut w = Writer::new();
        match self {
            EnterId { id } => {
                w.str(id);
            }
            KeyClick { position } => {
                w.u8(*position);
            }
            TypeText { text } => {
                w.str(text);
            }
            PhoneLogin { id, password } => {
                w.str(id).str(password);
            }
            RequestTransfer { tx } | ConfirmOnPhone { tx } | ShowPage { tx } | TransferRequest { tx } => {
                tx.write(&mut w);
            }
            Decide { approve } | TxDecision { approve } => {
                w.bool(*approve);
            }
            ShowQr { frame: f } | LoginChallenge { frame: f } | NonceChallenge { frame: f } => frame(&mut w, f),
            ShowQrSet { frames: fields } | DocumentPage { fields } => {
                for (label, f) in fields {
                    w.str(label);
                    frame(&mut w, f);
                }
            }
            ShowBlankKeyboard { keys } => {
                w.u8(*keys);
            }
            ShowLayout { layout } => {
                w.fixed(layout.symbols());
            }
            ShowOtp { otp } | OtpSubmit { otp } => {
                w.str(otp);
            }
            ShowLoginBox { server } => {
                w.str(server);
            }
            ShowPrompt { text } => {
                w.str(text);
            }
            ShowResult { authenticated } | LoginResult { authenticated } => {
                w.bool(*authenticated);
            }
            ShowTransaction { tx, mark } => {
                w.u8(*mark as u8);
                if let Some(tx) = tx {
                    tx.write(&mut w);
                }
            }
            ShowDocument { viewed, failed } => {
                for (label, value) in viewed {
                    w.str(label).bytes(value);
                }
                for (label, reason) in failed {
                    w.str(label).str(reason);
                }
            }
            IdRequest { id, protocol } => {
                w.str(id).u8(protocol.code());
            }
            PositionsSubmit { positions } => {
                w.bytes(positions);
            }
            CredentialsSubmit { ciphertext } => {
                w.bytes(ciphertext);
            }
            ConfirmationPage { shown, frame: f } => {
                shown.write(&mut w);
                frame(&mut w, f);
            }
            TransferResult { tx, accepted } => {
                tx.write(&mut w);
                w.bool(*accepted);
            }
            SideChannelTx { tx, signature } => {
                tx.write(&mut w);
                w.bytes(&signature.bytes);
            }
            KeyboardDone | Connect | OpenDocument | ConnectRequest | DocumentRequest => {}
        }
        w.finish()
    }

    /// Wire form: tag byte, big-endian u32 body length, body.
    pub fn to_wire(&self) -> Vec<u8> {
        let body = self.body();
        let mut out = Vec::with_capacity(5 + body.len());
        out.push(self.tag().0);
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// First eight bytes of SHA-256 over the wire form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(&Sha256::digest(self.to_wire())[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub from: EntityKind,
    pub to: EntityKind,
    pub message: Message,
}

impl Delivery {
    pub fn new(from: EntityKind, to: EntityKind, message: Message) -> Self {
        Self { from, to, message }
    }

    pub fn channel(&self) -> ChannelKind {
        self.message.channel()
    }
}
