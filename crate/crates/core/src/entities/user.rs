//! The user as an automaton: reads screens and produces clicks.

use crate::crypto::{KeyboardPermutation, ALPHABET};
use crate::protocols::Transaction;

use super::session::{Abort, AbortReason};
use super::{Delivery, EntityKind, Mark, Message, ProtocolKind};

const ME: EntityKind = EntityKind::User;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlagReason {
    InvalidSignature,
    Stale,
    Mismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxDecision {
    Confirmed,
    Flagged(FlagReason),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocumentView {
    pub viewed: Vec<(String, Vec<u8>)>,
    pub failed: Vec<(String, String)>,
}

/// What the user sets out to do once logged in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserPlan {
    pub transfer: Option<Transaction>,
    /// Also enter the transfer on the phone so it reaches the server over
    /// the side channel.
    pub confirm_on_phone: bool,
}

#[derive(Debug, Clone)]
pub struct UserModel {
    pub id: String,
    password: String,
    /// Alter one symbol of any OTP before typing it.
    pub mistype_otp: bool,
    pub plan: UserPlan,
    seen_blank_keyboard: bool,
    layout: Option<KeyboardPermutation>,
    clicked: bool,
    page: Option<Transaction>,
    phone_view: Option<(Option<Transaction>, Mark)>,
    pub login_result: Option<bool>,
    pub decision: Option<TxDecision>,
    pub document: Option<DocumentView>,
}

impl UserModel {
    pub fn new(id: &str, password: &str, plan: UserPlan) -> Self {
        Self {
            id: id.to_string(),
            password: password.to_ascii_lowercase(),
            mistype_otp: false,
            plan,
            seen_blank_keyboard: false,
            layout: None,
            clicked: false,
            page: None,
            phone_view: None,
            login_result: None,
            decision: None,
            document: None,
        }
    }

    pub fn start(&self, protocol: ProtocolKind) -> Vec<Delivery> {
        let to_terminal = |m| Delivery::new(ME, EntityKind::Terminal, m);
        match protocol {
            ProtocolKind::P1 | ProtocolKind::P2 => vec![to_terminal(Message::EnterId { id: self.id.clone() })],
            ProtocolKind::P3 => vec![to_terminal(Message::Connect)],
            ProtocolKind::TxVerify => self
                .plan
                .transfer
                .iter()
                .map(|tx| to_terminal(Message::RequestTransfer { tx: tx.clone() }))
                .collect(),
            ProtocolKind::SecureView => vec![to_terminal(Message::OpenDocument)],
        }
    }

    fn try_click(&mut self) -> Result<Vec<Delivery>, Abort> {
        let (true, Some(layout), false) = (self.seen_blank_keyboard, &self.layout, self.clicked) else {
            return Ok(Vec::new());
        };
        self.clicked = true;
        let positions = layout
            .positions_for(&self.password)
            .map_err(|e| Abort::fatal(ME, AbortReason::Malformed(e.to_string())))?;
        let mut out: Vec<Delivery> = positions
            .into_iter()
            .map(|position| Delivery::new(ME, EntityKind::Terminal, Message::KeyClick { position }))
            .collect();
        out.push(Delivery::new(ME, EntityKind::Terminal, Message::KeyboardDone));
        Ok(out)
    }

    fn try_decide(&mut self) -> Vec<Delivery> {
        let (Some(page), Some((phone_tx, mark)), None) = (&self.page, &self.phone_view, self.decision) else {
            return Vec::new();
        };
        let decision = match mark {
            Mark::InvalidSignature => TxDecision::Flagged(FlagReason::InvalidSignature),
            Mark::Stale => TxDecision::Flagged(FlagReason::Stale),
            Mark::Verified if phone_tx.as_ref() != Some(page) => TxDecision::Flagged(FlagReason::Mismatch),
            Mark::Verified if self.plan.transfer.as_ref() != Some(page) => TxDecision::Flagged(FlagReason::Mismatch),
            Mark::Verified => TxDecision::Confirmed,
        };
        self.decision = Some(decision);
        vec![Delivery::new(
            ME,
            EntityKind::Terminal,
            Message::Decide {
                approve: decision == TxDecision::Confirmed,
            },
        )]
    }

    pub fn handle(&mut self, from: EntityKind, msg: &Message) -> Result<Vec<Delivery>, Abort> {
        use EntityKind::{Smartphone, Terminal};
        Ok(match (from, msg) {
            (Terminal, Message::ShowBlankKeyboard { .. }) => {
                self.seen_blank_keyboard = true;
                self.try_click()?
            }
            (Smartphone, Message::ShowLayout { layout }) => {
                self.layout = Some(layout.clone());
                self.try_click()?
            }
            (Smartphone, Message::ShowOtp { otp }) => {
                let mut text = otp.clone();
                if self.mistype_otp {
                    let mut bytes = text.into_bytes();
                    if let Some(first) = bytes.first_mut() {
                        let i = ALPHABET.iter().position(|&c| c == *first).unwrap_or(0);
                        *first = ALPHABET[(i + 1) % ALPHABET.len()];
                    }
                    text = String::from_utf8(bytes).expect("alphabet is ascii");
                }
                vec![Delivery::new(ME, Terminal, Message::TypeText { text })]
            }
            (Smartphone, Message::ShowLoginBox { .. }) => vec![Delivery::new(
                ME,
                Smartphone,
                Message::PhoneLogin {
                    id: self.id.clone(),
                    password: self.password.clone(),
                },
            )],
            (Terminal, Message::ShowResult { authenticated }) => {
                self.login_result = Some(*authenticated);
                let mut out = Vec::new();
                if let (true, Some(tx)) = (*authenticated, &self.plan.transfer) {
                    out.push(Delivery::new(ME, Terminal, Message::RequestTransfer { tx: tx.clone() }));
                    if self.plan.confirm_on_phone {
                        out.push(Delivery::new(
                            ME,
                            Smartphone,
                            Message::ConfirmOnPhone { tx: tx.clone() },
                        ));
                    }
                }
                out
            }
            (Terminal, Message::ShowPage { tx }) => {
                self.page = Some(tx.clone());
                self.try_decide()
            }
            (Smartphone, Message::ShowTransaction { tx, mark }) => {
                self.phone_view = Some((tx.clone(), *mark));
                self.try_decide()
            }
            (Smartphone, Message::ShowDocument { viewed, failed }) => {
                self.document = Some(DocumentView {
                    viewed: viewed.clone(),
                    failed: failed.clone(),
                });
                Vec::new()
            }
            (Terminal, Message::ShowPrompt { .. }) => Vec::new(),
            _ => return Err(Abort::violation(ME, msg)),
        })
    }

    pub fn dump(&self) -> Vec<Vec<u8>> {
        let mut f = vec![self.id.clone().into_bytes(), self.password.clone().into_bytes()];
        if let Some(l) = &self.layout {
            f.push(l.as_str().as_bytes().to_vec());
        }
        f
    }
}
