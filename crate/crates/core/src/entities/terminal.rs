//! The (possibly untrusted) terminal: a browser relaying between server,
//! screen, keyboard/mouse and, optionally, a camera.

use crate::crypto::ALPHABET_SIZE;
use crate::protocols::Transaction;
use crate::visual::VisualFrame;

use super::session::{Abort, AbortReason, Ctx};
use super::{Delivery, EntityKind, Message};

const ME: EntityKind = EntityKind::Terminal;

#[derive(Debug, Clone, Default)]
pub struct Terminal {
    pub has_camera: bool,
    pub id: Option<String>,
    pub positions: Vec<u8>,
    pub typed: Vec<String>,
    pub frames: Vec<VisualFrame>,
    pub uploaded: Vec<Vec<u8>>,
    pub pages: Vec<Transaction>,
    pub results: Vec<(Transaction, bool)>,
    pub authenticated: Option<bool>,
}

impl Terminal {
    pub fn new(has_camera: bool) -> Self {
        Self {
            has_camera,
            ..Self::default()
        }
    }

    pub fn handle(&mut self, from: EntityKind, msg: &Message, ctx: &mut Ctx<'_>) -> Result<Vec<Delivery>, Abort> {
        use EntityKind::{Server, Smartphone, User};
        let out = |to, m| Delivery::new(ME, to, m);
        Ok(match (from, msg) {
            (User, Message::EnterId { id }) => {
                self.id = Some(id.clone());
                vec![out(
                    Server,
                    Message::IdRequest {
                        id: id.clone(),
                        protocol: ctx.config.protocol,
                    },
                )]
            }
            (Server, Message::LoginChallenge { frame }) => {
                self.frames.push(frame.clone());
                let page = match ctx.config.protocol {
                    super::ProtocolKind::P1 => Message::ShowBlankKeyboard {
                        keys: ALPHABET_SIZE as u8,
                    },
                    _ => Message::ShowPrompt {
                        text: "type the one-time password".into(),
                    },
                };
                vec![
                    out(Smartphone, Message::ShowQr { frame: frame.clone() }),
                    out(User, page),
                ]
            }
            (User, Message::KeyClick { position }) => {
                if usize::from(*position) >= ALPHABET_SIZE {
                    return Err(Abort::fatal(
                        ME,
                        AbortReason::Violation(format!("click outside grid: {position}")),
                    ));
                }
                self.positions.push(*position);
                Vec::new()
            }
            (User, Message::KeyboardDone) => {
                vec![out(
                    Server,
                    Message::PositionsSubmit {
                        positions: self.positions.clone(),
                    },
                )]
            }
            (User, Message::TypeText { text }) => {
                self.typed.push(text.clone());
                vec![out(Server, Message::OtpSubmit { otp: text.clone() })]
            }
            (User, Message::Connect) => vec![out(Server, Message::ConnectRequest)],
            (Server, Message::NonceChallenge { frame }) => {
                self.frames.push(frame.clone());
                vec![
                    out(Smartphone, Message::ShowQr { frame: frame.clone() }),
                    out(
                        User,
                        Message::ShowPrompt {
                            text: "scan the code with your phone".into(),
                        },
                    ),
                ]
            }
            (Smartphone, Message::ShowQr { frame }) => {
                if !(self.has_camera && ctx.config.flags.terminal_camera) {
                    return Err(Abort::fatal(ME, AbortReason::NoCamera));
                }
                let ciphertext = ctx.capture(ME, frame)?;
                self.uploaded.push(ciphertext.clone());
                vec![out(Server, Message::CredentialsSubmit { ciphertext })]
            }
            (Server, Message::LoginResult { authenticated }) => {
                self.authenticated = Some(*authenticated);
                vec![out(
                    User,
                    Message::ShowResult {
                        authenticated: *authenticated,
                    },
                )]
            }
            (User, Message::RequestTransfer { tx }) => vec![out(Server, Message::TransferRequest { tx: tx.clone() })],
            (Server, Message::ConfirmationPage { shown, frame }) => {
                self.pages.push(shown.clone());
                self.frames.push(frame.clone());
                vec![
                    out(User, Message::ShowPage { tx: shown.clone() }),
                    out(Smartphone, Message::ShowQr { frame: frame.clone() }),
                ]
            }
            (User, Message::Decide { approve }) => vec![out(Server, Message::TxDecision { approve: *approve })],
            (Server, Message::TransferResult { tx, accepted }) => {
                self.results.push((tx.clone(), *accepted));
                Vec::new()
            }
            (User, Message::OpenDocument) => vec![out(Server, Message::DocumentRequest)],
            (Server, Message::DocumentPage { fields }) => {
                self.frames.extend(fields.iter().map(|(_, f)| f.clone()));
                vec![out(Smartphone, Message::ShowQrSet { frames: fields.clone() })]
            }
            _ => return Err(Abort::violation(ME, msg)),
        })
    }

    /// Every value the terminal holds, one field per entry.
    pub fn dump(&self) -> Vec<Vec<u8>> {
        let mut f = Vec::new();
        if let Some(id) = &self.id {
            f.push(id.clone().into_bytes());
        }
        f.push(self.positions.clone());
        f.extend(self.typed.iter().map(|t| t.clone().into_bytes()));
        for frame in &self.frames {
            f.push(frame.payload.clone());
            f.push(frame.codewords.clone());
        }
        f.extend(self.uploaded.iter().cloned());
        for tx in self.pages.iter().chain(self.results.iter().map(|(t, _)| t)) {
            f.push(tx.canonical_bytes(None));
        }
        f
    }
}
