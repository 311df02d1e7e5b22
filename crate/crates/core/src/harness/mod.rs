//! Scenario runner: seeded batches of sessions with or without an
//! adversary, the resistance matrix, numeric checks and the report.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use config::{Config, ConfigError, GuardSetting, MatrixSpec, Scenario, ScenarioAdversary, ScenarioVariant};

use crate::adversary::{
    attempt_login, evaluate, run_attack_trial, run_fake_server, Adversary, AdversaryConfig, AdversaryKind, Locus,
    TxAttack, ATTACKER_ACCOUNT, DEFAULT_FOLLOWUP_BUDGET,
};
use crate::crypto::ALPHABET_SIZE;
use crate::entities::session::{CorruptionPlan, FrameOptions, SessionOutcome};
use crate::entities::{
    Delivery, Message, ProtocolKind, SessionConfig, SessionReport, StateView, Tap, TxDecision, UserPlan,
};
use crate::protocols::{run_secure_view, run_session, run_tx_verification, Variant, World};
use crate::rng::derive_seed;
use crate::visual::{global_capacity, EcLevel, FrameSpec, Mode, ScanTimeModel, VisualFrame};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dump_frames: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub scan_times: bool,
}

// ---------------------------------------------------------------------------
// Numeric checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Within(f64),
    Exact,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericCheck {
    pub name: &'static str,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl NumericCheck {
    fn new(name: &'static str, computed: f64, expected: f64, tolerance: Tolerance) -> Self {
        let pass = match tolerance {
            Tolerance::Within(t) => (computed - expected).abs() <= t,
            Tolerance::Exact => computed == expected,
            Tolerance::AtLeast => computed >= expected,
        };
        Self {
            name,
            computed,
            expected,
            tolerance,
            pass,
        }
    }

    fn tolerance_label(&self) -> String {
        match self.tolerance {
            Tolerance::Within(t) => format!("+-{t}"),
            Tolerance::Exact => "exact".into(),
            Tolerance::AtLeast => ">=".into(),
        }
    }
}

pub fn log2_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).log2()).sum()
}

/// Keyboard entropy and QR capacity figures.
pub fn numeric_checks() -> Vec<NumericCheck> {
    let k = ALPHABET_SIZE as u32;
    let layout_spec = FrameSpec::smallest_fitting(ALPHABET_SIZE, EcLevel::M, Mode::Alphanumeric, 1);
    let v2m = FrameSpec::new(2, EcLevel::M, Mode::Alphanumeric).expect("version 2 exists");
    vec![
        NumericCheck::new("log2(36!)", log2_factorial(k), 138.0, Tolerance::Within(0.5)),
        NumericCheck::new(
            "36*log2(36)",
            f64::from(k) * f64::from(k).log2(),
            187.0,
            Tolerance::Within(1.0),
        ),
        NumericCheck::new(
            "capacity.numeric",
            global_capacity(Mode::Numeric) as f64,
            7089.0,
            Tolerance::Exact,
        ),
        NumericCheck::new(
            "capacity.alphanumeric",
            global_capacity(Mode::Alphanumeric) as f64,
            4296.0,
            Tolerance::Exact,
        ),
        NumericCheck::new(
            "capacity.byte",
            global_capacity(Mode::Byte) as f64,
            2953.0,
            Tolerance::Exact,
        ),
        NumericCheck::new(
            "capacity(2-M alphanumeric)",
            v2m.capacity() as f64,
            36.0,
            Tolerance::AtLeast,
        ),
        NumericCheck::new(
            "layout version (M alphanumeric)",
            layout_spec.map_or(0.0, |s| f64::from(s.version())),
            2.0,
            Tolerance::Exact,
        ),
    ]
}

// ---------------------------------------------------------------------------
// Resistance matrix
// ---------------------------------------------------------------------------

/// Whether `kind` at `locus` is expected to be resisted. Terminal malware
/// takes over the logged-in session unless the hijack guard is on.
pub fn expected_resistance(protocol: ProtocolKind, kind: AdversaryKind, locus: Locus, guard: bool) -> bool {
    use AdversaryKind::{Keylogger, Malware};
    use ProtocolKind::{P2, P3};
    if !guard && kind == Malware && locus == Locus::Terminal {
        return false;
    }
    !matches!(
        (protocol, kind, locus),
        (P2, Malware, Locus::Smartphone) | (P3, Keylogger, Locus::Smartphone) | (P3, Malware, Locus::Smartphone)
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixCell {
    pub guard: bool,
    pub protocol: ProtocolKind,
    pub kind: AdversaryKind,
    pub locus: Locus,
    pub expected_ok: bool,
    pub trials: u64,
    /// Trials in which the adversary could log in later or moved money.
    pub broken: u64,
}

impl MatrixCell {
    pub fn observed_ok(&self) -> bool {
        self.broken == 0
    }

    pub fn matches(&self) -> bool {
        self.observed_ok() == self.expected_ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixReport {
    pub trials: u64,
    pub seed: u64,
    pub cells: Vec<MatrixCell>,
}

impl MatrixReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(MatrixCell::matches)
    }

    pub fn cell(&self, guard: bool, p: ProtocolKind, kind: AdversaryKind, locus: Locus) -> Option<&MatrixCell> {
        self.cells
            .iter()
            .find(|c| c.guard == guard && c.protocol == p && c.kind == kind && c.locus == locus)
    }
}

fn bool_label(guard: bool) -> &'static str {
    if guard {
        "on"
    } else {
        "off"
    }
}

pub fn run_matrix(spec: &MatrixSpec) -> MatrixReport {
    let mut cells = Vec::new();
    for &guard in spec.guard.values() {
        for p in ProtocolKind::LOGIN {
            for kind in AdversaryKind::MATRIX {
                for locus in Locus::MATRIX {
                    cells.push(MatrixCell {
                        guard,
                        protocol: p,
                        kind,
                        locus,
                        expected_ok: expected_resistance(p, kind, locus, guard),
                        trials: spec.trials,
                        broken: 0,
                    });
                }
            }
        }
    }
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |t| (c, t)))
        .collect();
    let broken: Vec<(usize, bool)> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let cell = &cells[c];
            let label = format!(
                "matrix/{}/{}/{}/{}",
                bool_label(cell.guard),
                cell.protocol,
                cell.kind,
                cell.locus
            );
            let seed = derive_seed(spec.seed, &label, t);
            let mut base = SessionConfig::new(cell.protocol, seed);
            base.flags.hijack_guard = cell.guard;
            let adv = AdversaryConfig::new(cell.kind, cell.locus);
            (c, !run_attack_trial(cell.protocol, &adv, &base, seed).0.resisted())
        })
        .collect();
    for (c, b) in broken {
        cells[c].broken += u64::from(b);
    }
    MatrixReport {
        trials: spec.trials,
        seed: spec.seed,
        cells,
    }
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLogEntry {
    pub purpose: &'static str,
    pub spec: FrameSpec,
    pub count: u64,
    pub max_payload: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub key: String,
    pub expected: u64,
    pub actual: u64,
}

impl Expectation {
    pub fn pass(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioResult {
    pub name: String,
    pub protocol: ProtocolKind,
    pub variant: ScenarioVariant,
    pub adversary: String,
    pub trials: u64,
    /// One outcome per trial.
    pub outcomes: BTreeMap<String, u64>,
    /// Event counts; a trial may add to several.
    pub counters: BTreeMap<String, u64>,
    pub expectations: Vec<Expectation>,
    pub frames: Vec<FrameLogEntry>,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        self.expectations.iter().all(Expectation::pass)
    }

    pub fn count(&self, key: &str) -> u64 {
        self.outcomes
            .get(key)
            .or_else(|| self.counters.get(key))
            .copied()
            .unwrap_or(0)
    }
}

/// Wraps an optional adversary and keeps every frame that goes by.
struct Recorder<'a> {
    inner: Option<&'a mut dyn Tap>,
    enabled: bool,
    frames: Vec<(usize, &'static str, VisualFrame)>,
}

impl<'a> Recorder<'a> {
    fn new(inner: Option<&'a mut dyn Tap>, enabled: bool) -> Self {
        Self {
            inner,
            enabled,
            frames: Vec::new(),
        }
    }
}

impl Tap for Recorder<'_> {
    fn observe(&mut self, step: usize, d: &Delivery) {
        if self.enabled {
            let tag = d.message.tag().1;
            match &d.message {
                Message::ShowQr { frame }
                | Message::LoginChallenge { frame }
                | Message::NonceChallenge { frame }
                | Message::ConfirmationPage { frame, .. } => self.frames.push((step, tag, frame.clone())),
                Message::ShowQrSet { frames } | Message::DocumentPage { fields: frames } => {
                    self.frames.extend(frames.iter().map(|(_, f)| (step, tag, f.clone())))
                }
                _ => {}
            }
        }
        if let Some(inner) = self.inner.as_deref_mut() {
            inner.observe(step, d);
        }
    }

    fn intercept(&mut self, d: Delivery) -> Vec<Delivery> {
        match self.inner.as_deref_mut() {
            Some(inner) => inner.intercept(d),
            None => vec![d],
        }
    }

    fn inspect(&mut self, view: StateView<'_>) {
        if let Some(inner) = self.inner.as_deref_mut() {
            inner.inspect(view);
        }
    }
}

struct TrialResult {
    outcome: String,
    counters: Vec<(&'static str, u64)>,
    reports: Vec<SessionReport>,
    frames: Vec<(usize, &'static str, VisualFrame)>,
}

fn session_config(s: &Scenario, seed: u64) -> SessionConfig {
    let mut c = SessionConfig::new(s.protocol, seed);
    c.flags = s.flags;
    c.frames = FrameOptions {
        ec_level: s.ec_level,
        version: s.version,
    };
    c.corruption = CorruptionPlan::uniform(s.corruption);
    c
}

pub fn sample_document() -> Vec<(String, Vec<u8>)> {
    vec![
        ("balance".to_string(), b"EUR 12,480.17".to_vec()),
        ("iban".to_string(), b"DE89 3704 0044 0532 0130 00".to_vec()),
        ("last_transfer".to_string(), b"2024-03-02 -250.00 rent".to_vec()),
    ]
}

fn tx_counters(report: &SessionReport, counters: &mut Vec<(&'static str, u64)>) {
    match report.tx_decision {
        Some(TxDecision::Confirmed) => counters.push(("tx_confirmed", 1)),
        Some(TxDecision::Flagged(_)) => counters.push(("tx_flagged", 1)),
        None => {}
    }
    if let Some(doc) = &report.document {
        counters.push(("fields_viewed", doc.viewed.len() as u64));
        counters.push(("fields_failed", doc.failed.len() as u64));
    }
}

fn run_trial(s: &Scenario, t: u64, record: bool) -> TrialResult {
    let seed = derive_seed(s.seed, &format!("scenario/{}", s.name), t);
    let mut world = World::new(seed);
    let config = session_config(s, seed);
    let mut counters = Vec::new();

    if let Some(a) = &s.adversary {
        if a.kind == AdversaryKind::FakeServer {
            let out = run_fake_server(&mut world, config);
            counters.extend([
                ("phone_rejected", u64::from(out.phone_rejected)),
                ("fake_learned_password", u64::from(out.learned_password)),
                ("fake_decrypted", u64::from(out.decrypted_credentials)),
            ]);
            return TrialResult {
                outcome: out.report.outcome.label().to_string(),
                counters,
                reports: vec![out.report],
                frames: Vec::new(),
            };
        }
        let mut adv_config = AdversaryConfig::new(a.kind, a.locus);
        adv_config.tactics.tx_attack = a.tx_attack.clone();
        adv_config.tactics.drop_side_channel = a.drop_side_channel;
        let mut adv = Adversary::new(adv_config);
        let mut rec = Recorder::new(Some(&mut adv), record);
        let report = match s.protocol {
            ProtocolKind::TxVerify => {
                let tx = world.sample_transaction();
                run_tx_verification(&mut world, tx, config, Some(&mut rec))
            }
            ProtocolKind::SecureView => run_secure_view(&mut world, sample_document(), config, Some(&mut rec)),
            _ => {
                let plan = UserPlan {
                    transfer: Some(world.sample_transaction()),
                    confirm_on_phone: config.flags.hijack_guard,
                };
                run_session(&mut world, config, Variant::Honest, plan, Some(&mut rec))
            }
        };
        let frames = std::mem::take(&mut rec.frames);
        drop(rec);
        let out = evaluate(&adv, &report, &mut world, DEFAULT_FOLLOWUP_BUDGET);
        counters.extend([
            (if out.resisted() { "resisted" } else { "compromised" }, 1),
            ("learned_password", u64::from(out.learned_password)),
            ("learned_reusable_secret", u64::from(out.learned_reusable_secret)),
            ("can_authenticate_later", u64::from(out.can_authenticate_later)),
            ("can_alter_transaction", u64::from(out.can_alter_transaction)),
        ]);
        tx_counters(&report, &mut counters);
        return TrialResult {
            outcome: report.outcome.label().to_string(),
            counters,
            reports: vec![report],
            frames,
        };
    }

    match s.variant {
        ScenarioVariant::Replay => run_replay_trial(s, world, config, record),
        variant => {
            let mut rec = Recorder::new(None, record);
            let report = match s.protocol {
                ProtocolKind::TxVerify => {
                    let tx = world.sample_transaction();
                    run_tx_verification(&mut world, tx, config, Some(&mut rec))
                }
                ProtocolKind::SecureView => run_secure_view(&mut world, sample_document(), config, Some(&mut rec)),
                _ => {
                    let v = if variant == ScenarioVariant::Honest {
                        Variant::Honest
                    } else {
                        Variant::WrongSecret
                    };
                    run_session(&mut world, config, v, UserPlan::default(), Some(&mut rec))
                }
            };
            tx_counters(&report, &mut counters);
            TrialResult {
                outcome: report.outcome.label().to_string(),
                counters,
                reports: vec![report],
                frames: rec.frames,
            }
        }
    }
}

/// An honest session watched by passive terminal malware, then a replay of
/// whatever it captured: positions, OTPs, credential ciphertexts, or a
/// signed confirmation shown for a substituted transfer.
fn run_replay_trial(s: &Scenario, mut world: World, config: SessionConfig, record: bool) -> TrialResult {
    let mut observer = AdversaryConfig::new(AdversaryKind::Malware, Locus::Terminal);
    observer.tactics.hijack = false;
    let mut adv = Adversary::new(observer);
    let mut rec = Recorder::new(Some(&mut adv), record);
    if s.protocol == ProtocolKind::TxVerify {
        let tx = world.sample_transaction();
        let first = run_tx_verification(&mut world, tx.clone(), config.clone(), Some(&mut rec));
        let mut frames = std::mem::take(&mut rec.frames);
        drop(rec);
        adv.config.tactics.tx_attack = Some(TxAttack::ReplayConfirmation);
        let mut rec2 = Recorder::new(Some(&mut adv), record);
        let second = run_tx_verification(&mut world, tx, config, Some(&mut rec2));
        frames.append(&mut rec2.frames);
        let hit = second.executed().any(|t| t.receiver_account == ATTACKER_ACCOUNT);
        let mut counters = Vec::new();
        tx_counters(&second, &mut counters);
        return TrialResult {
            outcome: if hit { "replay_confirmed" } else { "replay_rejected" }.to_string(),
            counters,
            reports: vec![first, second],
            frames,
        };
    }
    let report = run_session(&mut world, config, Variant::Honest, UserPlan::default(), Some(&mut rec));
    let frames = std::mem::take(&mut rec.frames);
    drop(rec);
    let mut knowledge = adv.knowledge.clone();
    knowledge.password = None;
    knowledge.user_key = None;
    let ok = attempt_login(&mut world, s.protocol, &knowledge, 1);
    let captured = u64::from(
        !(knowledge.positions.is_empty() && knowledge.otps.is_empty() && knowledge.credential_ciphertexts.is_empty()),
    );
    TrialResult {
        outcome: if ok { "authenticated" } else { "denied" }.to_string(),
        counters: vec![
            (
                "original_authenticated",
                u64::from(report.outcome == SessionOutcome::Authenticated),
            ),
            ("replayed", captured),
        ],
        reports: vec![report],
        frames,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

pub fn run_scenario(s: &Scenario, options: &RunOptions) -> Result<ScenarioResult, HarnessError> {
    let record = options.dump_frames.is_some();
    let trials: Vec<TrialResult> = (0..s.trials)
        .into_par_iter()
        .map(|t| run_trial(s, t, record && t == 0))
        .collect();
    let mut outcomes = BTreeMap::new();
    let mut counters = BTreeMap::new();
    let mut frames: BTreeMap<(&'static str, FrameSpec), (u64, usize)> = BTreeMap::new();
    for trial in &trials {
        *outcomes.entry(trial.outcome.clone()).or_insert(0) += 1;
        for &(k, v) in &trial.counters {
            *counters.entry(k.to_string()).or_insert(0) += v;
        }
        for f in trial.reports.iter().flat_map(|r| &r.frames) {
            let e = frames.entry((f.purpose, f.spec)).or_insert((0, 0));
            e.0 += 1;
            e.1 = e.1.max(f.payload_len);
        }
    }
    if let (Some(dir), Some(first)) = (&options.transcripts, trials.first()) {
        let text: String = first
            .reports
            .iter()
            .map(|r| r.transcript_text())
            .collect::<Vec<_>>()
            .join("--\n");
        write_file(&dir.join(format!("{}.txt", s.name)), &text)?;
    }
    if let (Some(dir), Some(first)) = (&options.dump_frames, trials.first()) {
        for (i, (step, tag, frame)) in first.frames.iter().enumerate() {
            write_file(
                &dir.join(&s.name).join(format!("{i:03}-{step:03}-{tag}.qrv")),
                &frame.dump(),
            )?;
        }
    }
    let mut result = ScenarioResult {
        name: s.name.clone(),
        protocol: s.protocol,
        variant: s.variant,
        adversary: s
            .adversary
            .as_ref()
            .map_or_else(|| "-".to_string(), |a| format!("{}@{}", a.kind, a.locus)),
        trials: s.trials,
        outcomes,
        counters,
        expectations: Vec::new(),
        frames: frames
            .into_iter()
            .map(|((purpose, spec), (count, max_payload))| FrameLogEntry {
                purpose,
                spec,
                count,
                max_payload,
            })
            .collect(),
    };
    result.expectations = s
        .expect
        .iter()
        .map(|(key, &expected)| Expectation {
            key: key.clone(),
            expected,
            actual: result.count(key),
        })
        .collect();
    Ok(result)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub scenarios: Vec<ScenarioResult>,
    pub matrix: Option<MatrixReport>,
    pub checks: Vec<NumericCheck>,
    pub scan_times: bool,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.scenarios.iter().all(ScenarioResult::passed)
            && self.matrix.as_ref().is_none_or(MatrixReport::passed)
            && self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut records = String::new();
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };

        if !self.scenarios.is_empty() {
            let _ = writeln!(out, "== scenarios ==");
            let _ = writeln!(
                out,
                "{:<24} {:<12} {:<13} {:<28} {:>6}  outcomes",
                "name", "protocol", "variant", "adversary", "trials"
            );
            for s in &self.scenarios {
                let outcomes = join_counts(&s.outcomes);
                let _ = writeln!(
                    out,
                    "{:<24} {:<12} {:<13} {:<28} {:>6}  {}",
                    s.name,
                    s.protocol.name(),
                    s.variant.name(),
                    s.adversary,
                    s.trials,
                    outcomes
                );
                if !s.counters.is_empty() {
                    let _ = writeln!(out, "{:<24} counters: {}", "", join_counts(&s.counters));
                }
                for e in &s.expectations {
                    let _ = writeln!(
                        out,
                        "{:<24} expect {} = {} (got {}) {}",
                        "",
                        e.key,
                        e.expected,
                        e.actual,
                        verdict(e.pass())
                    );
                }
                let _ = writeln!(
                    records,
                    "scenario|{}|{}|{}|{}|{}|{}|{}",
                    s.name,
                    s.protocol.name(),
                    s.variant.name(),
                    s.adversary,
                    s.trials,
                    join_counts(&s.outcomes),
                    join_counts(&s.counters)
                );
                for e in &s.expectations {
                    let _ = writeln!(
                        records,
                        "expect|{}|{}|{}|{}|{}",
                        s.name,
                        e.key,
                        e.expected,
                        e.actual,
                        verdict(e.pass())
                    );
                }
            }
            let _ = writeln!(out);
        }

        if let Some(m) = &self.matrix {
            let _ = writeln!(
                out,
                "== attack matrix ({} trials per cell, seed {}) ==",
                m.trials, m.seed
            );
            let _ = writeln!(
                out,
                "OK = resisted in every trial, FAIL = broken in at least one; expected in brackets"
            );
            let mut guards: Vec<bool> = m.cells.iter().map(|c| c.guard).collect();
            guards.dedup();
            for guard in guards {
                let _ = writeln!(out, "hijack guard {}", bool_label(guard));
                let _ = write!(out, "{:<10}", "");
                for kind in AdversaryKind::MATRIX {
                    for locus in Locus::MATRIX {
                        let _ = write!(out, " {:<22}", format!("{kind}@{locus}"));
                    }
                }
                let _ = writeln!(out);
                for p in ProtocolKind::LOGIN {
                    let _ = write!(out, "{:<10}", p.name());
                    for kind in AdversaryKind::MATRIX {
                        for locus in Locus::MATRIX {
                            let cell = m.cell(guard, p, kind, locus).expect("every cell is run");
                            let mark = format!(
                                "{} [{}]{}",
                                ok_label(cell.observed_ok()),
                                ok_label(cell.expected_ok),
                                if cell.matches() { "" } else { " !" }
                            );
                            let _ = write!(out, " {mark:<22}");
                        }
                    }
                    let _ = writeln!(out);
                }
            }
            for c in &m.cells {
                let _ = writeln!(
                    records,
                    "cell|{}|{}|{}|{}|expect={}|got={}|broken={}/{}|{}",
                    bool_label(c.guard),
                    c.protocol.name(),
                    c.kind,
                    c.locus,
                    ok_label(c.expected_ok),
                    ok_label(c.observed_ok()),
                    c.broken,
                    c.trials,
                    verdict(c.matches())
                );
            }
            let _ = writeln!(out, "matrix: {}", verdict(m.passed()));
            let _ = writeln!(out);
        }

        if !self.checks.is_empty() {
            let _ = writeln!(out, "== numeric checks ==");
            for c in &self.checks {
                let _ = writeln!(
                    out,
                    "{:<34} computed {:>10.3}  expected {:>8} ({:>6})  {}",
                    c.name,
                    c.computed,
                    c.expected,
                    c.tolerance_label(),
                    verdict(c.pass)
                );
                let _ = writeln!(
                    records,
                    "check|{}|{:.6}|{}|{}|{}",
                    c.name,
                    c.computed,
                    c.expected,
                    c.tolerance_label(),
                    verdict(c.pass)
                );
            }
            let _ = writeln!(out);
        }

        let frame_rows: Vec<(&str, &FrameLogEntry)> = self
            .scenarios
            .iter()
            .flat_map(|s| s.frames.iter().map(move |f| (s.name.as_str(), f)))
            .collect();
        if !frame_rows.is_empty() {
            let _ = writeln!(out, "== frames (chosen QR versions) ==");
            for (name, f) in &frame_rows {
                let _ = writeln!(
                    out,
                    "{:<24} {:<24} {:<16} x{:<6} max payload {} bytes",
                    name,
                    f.purpose,
                    f.spec.to_string(),
                    f.count,
                    f.max_payload
                );
                let _ = writeln!(
                    records,
                    "frame|{}|{}|{}|{}|{}|{}|{}",
                    name,
                    f.purpose,
                    f.spec.version(),
                    f.spec.ec_level,
                    f.spec.mode,
                    f.count,
                    f.max_payload
                );
            }
            let _ = writeln!(out);
        }

        if self.scan_times && !frame_rows.is_empty() {
            let model = ScanTimeModel::default();
            let _ = writeln!(
                out,
                "== scan-time estimates (model: {} s + {} s/module; estimates, not measurements) ==",
                model.intercept_s, model.per_module_s
            );
            for (name, f) in &frame_rows {
                let secs = model.estimate(&f.spec);
                let _ = writeln!(
                    out,
                    "{:<24} {:<24} {:<16} {:>5} modules  ~{:.2} s",
                    name,
                    f.purpose,
                    f.spec.to_string(),
                    f.spec.module_count(),
                    secs
                );
                let _ = writeln!(
                    records,
                    "scan|{}|{}|{}|{}|{:.3}|estimate",
                    name,
                    f.purpose,
                    f.spec.version(),
                    f.spec.module_count(),
                    secs
                );
            }
            let _ = writeln!(out);
        }

        let _ = writeln!(records, "result|{}", verdict(self.passed()));
        out.push_str("-- records --\n");
        out.push_str(&records);
        out
    }
}

fn ok_label(ok: bool) -> &'static str {
    if ok {
        "OK"
    } else {
        "FAIL"
    }
}

fn join_counts(m: &BTreeMap<String, u64>) -> String {
    m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

pub fn run_config(config: &Config, options: &RunOptions) -> Result<Report, HarnessError> {
    let scenarios = config
        .scenarios
        .iter()
        .map(|s| run_scenario(s, options))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Report {
        scenarios,
        matrix: config.matrix.as_ref().map(run_matrix),
        checks: if config.checks { numeric_checks() } else { Vec::new() },
        scan_times: options.scan_times,
    })
}

pub fn run_scenarios(path: &Path, options: &RunOptions) -> Result<Report, HarnessError> {
    run_config(&Config::load(path)?, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_checks_pass() {
        for c in numeric_checks() {
            assert!(c.pass, "{c:?}");
        }
        // exact value from big-integer arithmetic: log2(36!) = 138.094328...
        assert!((log2_factorial(36) - 138.094_328_6).abs() < 1e-6);
    }

    #[test]
    fn expected_pattern_has_three_broken_cells_with_the_guard() {
        let broken = |guard| {
            ProtocolKind::LOGIN
                .iter()
                .flat_map(|&p| AdversaryKind::MATRIX.iter().map(move |&k| (p, k)))
                .flat_map(|(p, k)| Locus::MATRIX.iter().map(move |&l| (p, k, l)))
                .filter(|&(p, k, l)| !expected_resistance(p, k, l, guard))
                .count()
        };
        assert_eq!(broken(true), 3);
        assert_eq!(broken(false), 6);
    }

    #[test]
    fn single_honest_trial() {
        let c = Config::parse(
            "[scenario]\nname = one\nprotocol = p1\ntrials = 1\nexpect.authenticated = 1\nexpect.denied = 0\n",
        )
        .unwrap();
        let r = run_config(&c, &RunOptions::default()).unwrap();
        assert!(r.passed());
        assert_eq!(r.scenarios[0].count("authenticated"), 1);
        assert!(r.render().contains("expect|one|authenticated|1|1|PASS"));
    }
}
