//! Scenario files: flat `key = value` lines under `[scenario]`, `[matrix]`
//! and `[checks]` headers. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::adversary::{AdversaryKind, Locus, TxAttack};
use crate::entities::session::{CorruptionLevel, Flags};
use crate::entities::ProtocolKind;
use crate::visual::{EcLevel, MAX_VERSION, MIN_VERSION};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioVariant {
    Honest,
    WrongSecret,
    /// Replay what a passive observer captured in an honest session.
    Replay,
}

impl ScenarioVariant {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioVariant::Honest => "honest",
            ScenarioVariant::WrongSecret => "wrong_secret",
            ScenarioVariant::Replay => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioAdversary {
    pub kind: AdversaryKind,
    pub locus: Locus,
    pub tx_attack: Option<TxAttack>,
    pub drop_side_channel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub protocol: ProtocolKind,
    pub variant: ScenarioVariant,
    pub adversary: Option<ScenarioAdversary>,
    pub trials: u64,
    pub seed: u64,
    pub flags: Flags,
    pub version: Option<u8>,
    pub ec_level: EcLevel,
    pub corruption: CorruptionLevel,
    /// Outcome or counter name to exact expected count.
    pub expect: BTreeMap<String, u64>,
    /// Line of the section header, for error messages.
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardSetting {
    On,
    Off,
    Both,
}

impl GuardSetting {
    pub fn values(self) -> &'static [bool] {
        match self {
            GuardSetting::On => &[true],
            GuardSetting::Off => &[false],
            GuardSetting::Both => &[true, false],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixSpec {
    pub trials: u64,
    pub seed: u64,
    pub guard: GuardSetting,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 1,
            guard: GuardSetting::Both,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    pub scenarios: Vec<Scenario>,
    pub matrix: Option<MatrixSpec>,
    pub checks: bool,
}

enum Section {
    None,
    Scenario(PartialScenario),
    Matrix(MatrixSpec),
    Checks,
}

struct PartialScenario {
    line: usize,
    name: Option<String>,
    protocol: Option<ProtocolKind>,
    variant: ScenarioVariant,
    kind: Option<AdversaryKind>,
    locus: Option<Locus>,
    tx_attack: Option<TxAttack>,
    drop_side_channel: bool,
    trials: u64,
    seed: u64,
    flags: Flags,
    version: Option<u8>,
    ec_level: EcLevel,
    corruption: CorruptionLevel,
    expect: BTreeMap<String, u64>,
}

impl PartialScenario {
    fn new(line: usize) -> Self {
        Self {
            line,
            name: None,
            protocol: None,
            variant: ScenarioVariant::Honest,
            kind: None,
            locus: None,
            tx_attack: None,
            drop_side_channel: false,
            trials: 1,
            seed: 0,
            flags: Flags::default(),
            version: None,
            ec_level: EcLevel::M,
            corruption: CorruptionLevel::None,
            expect: BTreeMap::new(),
        }
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "name" => self.name = Some(value.to_string()),
            "protocol" => {
                self.protocol =
                    Some(ProtocolKind::parse(value).ok_or_else(|| err(line, format!("unknown protocol '{value}'")))?)
            }
            "variant" => {
                self.variant = match value {
                    "honest" => ScenarioVariant::Honest,
                    "wrong_secret" => ScenarioVariant::WrongSecret,
                    "replay" => ScenarioVariant::Replay,
                    _ => return Err(err(line, format!("unknown variant '{value}'"))),
                }
            }
            "adversary" => {
                self.kind =
                    Some(AdversaryKind::parse(value).ok_or_else(|| err(line, format!("unknown adversary '{value}'")))?)
            }
            "locus" => {
                self.locus = Some(Locus::parse(value).ok_or_else(|| err(line, format!("unknown locus '{value}'")))?)
            }
            "tx_attack" => {
                self.tx_attack = Some(match value {
                    "alter_display" => TxAttack::AlterDisplay,
                    "substitute_request" => TxAttack::SubstituteRequest,
                    "tamper_qr" => TxAttack::TamperQr,
                    _ => return Err(err(line, format!("unknown tx_attack '{value}'"))),
                })
            }
            "drop_side_channel" => self.drop_side_channel = parse_bool(line, value)?,
            "trials" => {
                self.trials = parse_u64(line, value)?;
                if self.trials == 0 {
                    return Err(err(line, "trials must be at least 1"));
                }
            }
            "seed" => self.seed = parse_u64(line, value)?,
            "sign_server_payloads" => self.flags.sign_server_payloads = parse_bool(line, value)?,
            "hijack_guard" => self.flags.hijack_guard = parse_bool(line, value)?,
            "tx_nonce_freshness" => self.flags.tx_nonce_freshness = parse_bool(line, value)?,
            "terminal_camera" => self.flags.terminal_camera = parse_bool(line, value)?,
            "version" => {
                let v = parse_u64(line, value)?;
                if !(u64::from(MIN_VERSION)..=u64::from(MAX_VERSION)).contains(&v) {
                    return Err(err(line, format!("version must be in {MIN_VERSION}..={MAX_VERSION}")));
                }
                self.version = Some(v as u8);
            }
            "ec_level" => {
                self.ec_level = value
                    .parse()
                    .map_err(|_| err(line, format!("unknown ec_level '{value}'")))?
            }
            "corrupt_codewords" => {
                self.corruption = match value {
                    "budget" => CorruptionLevel::Budget,
                    "budget+1" => CorruptionLevel::AboveBudget,
                    "0" => CorruptionLevel::None,
                    n => CorruptionLevel::Codewords(n.parse().map_err(|_| {
                        err(
                            line,
                            format!("corrupt_codewords must be N, budget or budget+1, got '{n}'"),
                        )
                    })?),
                }
            }
            _ => match key.strip_prefix("expect.") {
                Some(outcome) if !outcome.is_empty() => {
                    self.expect.insert(outcome.to_string(), parse_u64(line, value)?);
                }
                _ => return Err(err(line, format!("unknown scenario key '{key}'"))),
            },
        }
        Ok(())
    }

    fn finish(self, index: usize) -> Result<Scenario, ConfigError> {
        let line = self.line;
        let protocol = self.protocol.ok_or_else(|| err(line, "scenario has no protocol"))?;
        let is_login = ProtocolKind::LOGIN.contains(&protocol);
        if self.variant == ScenarioVariant::WrongSecret && !is_login {
            return Err(err(
                line,
                format!("variant wrong_secret needs a login protocol, not {protocol}"),
            ));
        }
        if self.variant == ScenarioVariant::Replay && protocol == ProtocolKind::SecureView {
            return Err(err(line, "variant replay is not defined for secure_view"));
        }
        let adversary = match self.kind {
            None => {
                if self.locus.is_some() || self.tx_attack.is_some() || self.drop_side_channel {
                    return Err(err(line, "adversary settings without an adversary"));
                }
                None
            }
            Some(kind) => {
                if self.variant != ScenarioVariant::Honest {
                    return Err(err(line, "adversary scenarios use the honest variant"));
                }
                if kind == AdversaryKind::FakeServer && !is_login {
                    return Err(err(line, "fake_server needs a login protocol"));
                }
                let locus = self.locus.unwrap_or(Locus::Terminal);
                if locus == Locus::Both && kind != AdversaryKind::ShoulderSurfer {
                    return Err(err(line, "locus 'both' is only defined for shoulder_surfer"));
                }
                if self.tx_attack.is_some()
                    && (kind != AdversaryKind::Malware
                        || locus != Locus::Terminal
                        || protocol != ProtocolKind::TxVerify)
                {
                    return Err(err(line, "tx_attack needs malware at the terminal on tx_verify"));
                }
                Some(ScenarioAdversary {
                    kind,
                    locus,
                    tx_attack: self.tx_attack,
                    drop_side_channel: self.drop_side_channel,
                })
            }
        };
        Ok(Scenario {
            name: self.name.unwrap_or_else(|| format!("scenario-{}", index + 1)),
            protocol,
            variant: self.variant,
            adversary,
            trials: self.trials,
            seed: self.seed,
            flags: self.flags,
            version: self.version,
            ec_level: self.ec_level,
            corruption: self.corruption,
            expect: self.expect,
            line,
        })
    }
}

fn parse_u64(line: usize, value: &str) -> Result<u64, ConfigError> {
    let v = value.replace('_', "");
    let parsed = match v.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => v.parse(),
    };
    parsed.map_err(|_| err(line, format!("expected an unsigned integer, got '{value}'")))
}

fn parse_bool(line: usize, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(err(line, format!("expected true or false, got '{value}'"))),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Config::default();
        let mut section = Section::None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(header) = content.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, "unterminated section header"))?
                    .trim();
                config.close(std::mem::replace(&mut section, Section::None), line)?;
                section = match header {
                    "scenario" => Section::Scenario(PartialScenario::new(line)),
                    "matrix" if config.matrix.is_some() => return Err(err(line, "duplicate [matrix] section")),
                    "matrix" => Section::Matrix(MatrixSpec::default()),
                    "checks" => Section::Checks,
                    other => return Err(err(line, format!("unknown section [{other}]"))),
                };
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
            if key.is_empty() || value.is_empty() {
                return Err(err(line, "empty key or value"));
            }
            match &mut section {
                Section::None => return Err(err(line, "key outside of a section")),
                Section::Scenario(s) => s.set(line, key, value)?,
                Section::Matrix(m) => match key {
                    "trials" => {
                        m.trials = parse_u64(line, value)?;
                        if m.trials == 0 {
                            return Err(err(line, "trials must be at least 1"));
                        }
                    }
                    "seed" => m.seed = parse_u64(line, value)?,
                    "guard" => {
                        m.guard = match value {
                            "on" => GuardSetting::On,
                            "off" => GuardSetting::Off,
                            "both" => GuardSetting::Both,
                            _ => return Err(err(line, format!("guard must be on, off or both, got '{value}'"))),
                        }
                    }
                    _ => return Err(err(line, format!("unknown matrix key '{key}'"))),
                },
                Section::Checks => return Err(err(line, "[checks] takes no keys")),
            }
        }
        config.close(section, text.lines().count() + 1)?;
        let mut names = std::collections::BTreeSet::new();
        for s in &config.scenarios {
            if !names.insert(s.name.as_str()) {
                return Err(err(s.line, format!("duplicate scenario name '{}'", s.name)));
            }
        }
        Ok(config)
    }

    fn close(&mut self, section: Section, _line: usize) -> Result<(), ConfigError> {
        match section {
            Section::None => {}
            Section::Scenario(s) => {
                let index = self.scenarios.len();
                self.scenarios.push(s.finish(index)?);
            }
            Section::Matrix(m) => self.matrix = Some(m),
            Section::Checks => self.checks = true,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_scenario() {
        let c = Config::parse(
            "# smoke\n[scenario]\nname = p1\nprotocol = p1\ntrials = 3\nseed = 0x10\ncorrupt_codewords = budget+1\nexpect.aborted_retryable = 3\n\n[checks]\n",
        )
        .unwrap();
        assert!(c.checks);
        let s = &c.scenarios[0];
        assert_eq!(s.protocol, ProtocolKind::P1);
        assert_eq!(s.seed, 16);
        assert_eq!(s.corruption, CorruptionLevel::AboveBudget);
        assert_eq!(s.expect["aborted_retryable"], 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = Config::parse("[scenario]\nprotocol = p1\nprotocl = p2\n").unwrap_err();
        assert_eq!(e, err(3, "unknown scenario key 'protocl'"));
        let e = Config::parse("[scenario]\nprotocol = p9\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
        let e = Config::parse("[scenario]\ntrials = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 1, .. }));
        let e = Config::parse("[scenario]\nprotocol = p1\nadversary = wizard\n").unwrap_err();
        assert!(e.to_string().starts_with("line 3:"));
        assert!(Config::parse("trials = 1\n").is_err());
        assert!(Config::parse("[matrix]\ntrials = 0\n").is_err());
    }

    #[test]
    fn rejects_inconsistent_scenarios() {
        assert!(Config::parse("[scenario]\nprotocol = tx_verify\nvariant = wrong_secret\n").is_err());
        assert!(Config::parse("[scenario]\nprotocol = p1\nadversary = keylogger\nlocus = both\n").is_err());
        assert!(Config::parse("[scenario]\nprotocol = p1\nadversary = malware\ntx_attack = tamper_qr\n").is_err());
        assert!(Config::parse("[scenario]\nname = a\nprotocol = p1\n[scenario]\nname = a\nprotocol = p2\n").is_err());
    }
}
