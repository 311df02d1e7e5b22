use std::collections::BTreeSet;

use visauth::crypto::{generate_permutation, KeyboardPermutation};
use visauth::entities::session::{CorruptionLevel, CorruptionPlan, SessionOutcome};
use visauth::entities::{
    scan_states_for_secrets, Delivery, EntityKind, Message, ProtocolKind, ProtocolSession, SessionConfig, SessionError,
    Terminal, TxDecision, UserModel, UserPlan,
};
use visauth::protocols::{
    expected_secret_placement, run_hijack_guard, run_protocol1, run_protocol2, run_protocol3, run_secure_view,
    run_session, run_tx_verification, secret_registry, GuardVerdict, Transaction, Variant, World,
};

fn cfg(p: ProtocolKind, seed: u64) -> SessionConfig {
    SessionConfig::new(p, seed)
}

#[test]
fn honest_logins_authenticate_and_wrong_secrets_are_denied() {
    for seed in 0..20 {
        let mut w = World::new(seed);
        assert!(run_protocol1(&mut w, cfg(ProtocolKind::P1, seed), Variant::Honest).authenticated());
        assert!(run_protocol2(&mut w, cfg(ProtocolKind::P2, seed), Variant::Honest).authenticated());
        assert!(run_protocol3(&mut w, cfg(ProtocolKind::P3, seed), Variant::Honest).authenticated());
        for p in ProtocolKind::LOGIN {
            let mut c = cfg(p, seed);
            c.protocol = p;
            let r = run_session(&mut w, c, Variant::WrongSecret, UserPlan::default(), None);
            assert_eq!(r.outcome, SessionOutcome::Denied, "{p}");
        }
    }
}

#[test]
fn password_data_authenticates_under_random_keyboard() {
    let mut w = World::with_password(11, "data").unwrap();
    let r = run_protocol1(&mut w, cfg(ProtocolKind::P1, 11), Variant::Honest);
    assert!(r.authenticated());
    let pi = r.secrets.permutation.unwrap();
    assert_ne!(pi, KeyboardPermutation::identity());
}

#[test]
fn id_arrival_emits_keyboard_challenge_toward_terminal() {
    let mut w = World::new(3);
    let phone = w.smartphone();
    let user = UserModel::new("alice", w.password(), UserPlan::default());
    let sid = w.next_session_id();
    let mut s = ProtocolSession::new(
        sid,
        cfg(ProtocolKind::P1, 3),
        &mut w.server,
        Terminal::new(true),
        phone,
        user,
    );
    s.start();
    let out = s
        .deliver(Delivery::new(
            EntityKind::Terminal,
            EntityKind::Server,
            Message::IdRequest {
                id: "alice".into(),
                protocol: ProtocolKind::P1,
            },
        ))
        .unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].to, EntityKind::Terminal);
    assert!(matches!(out[0].message, Message::LoginChallenge { .. }));
}

#[test]
fn delivery_after_close_is_an_error() {
    let mut w = World::new(4);
    let phone = w.smartphone();
    let user = UserModel::new("alice", w.password(), UserPlan::default());
    let sid = w.next_session_id();
    let mut s = ProtocolSession::new(
        sid,
        cfg(ProtocolKind::P2, 4),
        &mut w.server,
        Terminal::new(true),
        phone,
        user,
    );
    s.run();
    assert!(s.is_closed());
    let err = s
        .deliver(Delivery::new(
            EntityKind::Terminal,
            EntityKind::Server,
            Message::OtpSubmit { otp: "x".into() },
        ))
        .unwrap_err();
    assert_eq!(err, SessionError::Closed);
}

#[test]
fn out_of_state_message_aborts_with_violation() {
    let mut w = World::new(5);
    let phone = w.smartphone();
    let user = UserModel::new("alice", w.password(), UserPlan::default());
    let sid = w.next_session_id();
    let mut s = ProtocolSession::new(
        sid,
        cfg(ProtocolKind::P1, 5),
        &mut w.server,
        Terminal::new(true),
        phone,
        user,
    );
    s.start();
    let err = s
        .deliver(Delivery::new(
            EntityKind::Terminal,
            EntityKind::Server,
            Message::PositionsSubmit { positions: vec![1] },
        ))
        .unwrap_err();
    assert!(matches!(err, SessionError::Aborted(_)));
}

#[test]
fn channel_discipline_rejects_undeclared_routes() {
    let mut w = World::new(6);
    let phone = w.smartphone();
    let user = UserModel::new("alice", w.password(), UserPlan::default());
    let sid = w.next_session_id();
    let mut s = ProtocolSession::new(
        sid,
        cfg(ProtocolKind::P1, 6),
        &mut w.server,
        Terminal::new(true),
        phone,
        user,
    );
    let pi = generate_permutation(1);
    let err = s
        .deliver(Delivery::new(
            EntityKind::Terminal,
            EntityKind::Server,
            Message::ShowLayout { layout: pi },
        ))
        .unwrap_err();
    assert!(matches!(err, SessionError::Aborted(_)));
}

#[test]
fn identity_keyboard_clicks_repeat_the_position_of_a() {
    let pi = KeyboardPermutation::identity();
    let pos = pi.positions_for("aaaa").unwrap();
    assert_eq!(pos, vec![pi.position_of(b'a').unwrap(); 4]);
}

#[test]
fn transcripts_are_deterministic_and_bounded() {
    for p in ProtocolKind::LOGIN {
        let run = || {
            let mut w = World::new(42);
            let mut c = cfg(p, 42);
            c.protocol = p;
            run_session(&mut w, c, Variant::Honest, UserPlan::default(), None)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.transcript_text(), b.transcript_text());
        assert!(a.transcript.len() <= 64, "{p}: {} deliveries", a.transcript.len());
        let steps: Vec<usize> = a.transcript.iter().map(|e| e.step).collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn secret_placement_matches_expectations() {
    for seed in 0..10 {
        for p in ProtocolKind::LOGIN {
            let mut w = World::new(seed);
            let mut c = cfg(p, seed);
            c.protocol = p;
            let r = run_session(&mut w, c, Variant::Honest, UserPlan::default(), None);
            let reg = secret_registry(&w, &r, &[]);
            let found: BTreeSet<_> = scan_states_for_secrets(&r, &reg)
                .into_iter()
                .map(|f| (f.entity, f.secret))
                .collect();
            assert_eq!(found, expected_secret_placement(p, &[]), "{p} seed {seed}");
        }
    }
}

#[test]
fn p2_otp_is_consumed_and_expires_with_session() {
    let mut w = World::new(8);
    let r = run_protocol2(&mut w, cfg(ProtocolKind::P2, 8), Variant::Honest);
    assert!(r.authenticated());
    assert!(r.secrets.otp.is_some());
    // a new session issues a new OTP
    let r2 = run_protocol2(&mut w, cfg(ProtocolKind::P2, 8), Variant::Honest);
    assert_ne!(r.secrets.otp, r2.secrets.otp);
}

#[test]
fn p3_needs_a_camera() {
    let mut w = World::new(9);
    let mut c = cfg(ProtocolKind::P3, 9);
    c.flags.terminal_camera = false;
    let r = run_protocol3(&mut w, c, Variant::Honest);
    assert!(matches!(r.outcome, SessionOutcome::Aborted(ref a) if !a.retryable));
}

#[test]
fn corruption_over_budget_is_a_retryable_abort() {
    for p in ProtocolKind::LOGIN {
        let mut w = World::new(10);
        let mut c = cfg(p, 10);
        c.protocol = p;
        c.corruption = CorruptionPlan::uniform(CorruptionLevel::AboveBudget);
        let r = run_session(&mut w, c.clone(), Variant::Honest, UserPlan::default(), None);
        assert!(
            matches!(r.outcome, SessionOutcome::Aborted(ref a) if a.retryable),
            "{p}"
        );
        c.corruption = CorruptionPlan::uniform(CorruptionLevel::Budget);
        assert!(
            run_session(&mut w, c, Variant::Honest, UserPlan::default(), None).authenticated(),
            "{p}"
        );
    }
}

#[test]
fn p3_nonces_accepted_once_each() {
    let mut w = World::new(12);
    for _ in 0..50 {
        assert!(run_protocol3(&mut w, cfg(ProtocolKind::P3, 12), Variant::Honest).authenticated());
    }
    let pairs = w.server.accepted_nonces();
    let nonces: BTreeSet<_> = pairs.iter().map(|p| p.1).collect();
    assert_eq!(pairs.len(), 50);
    assert_eq!(nonces.len(), 50);
}

#[test]
fn tx_verification_honest_confirms_and_executes() {
    let mut w = World::new(13);
    let tx = w.sample_transaction();
    let r = run_tx_verification(&mut w, tx.clone(), cfg(ProtocolKind::TxVerify, 13), None);
    assert_eq!(r.tx_decision, Some(TxDecision::Confirmed));
    assert_eq!(r.executed().collect::<Vec<_>>(), vec![&tx]);
}

#[test]
fn secure_view_decrypts_only_on_the_phone() {
    let mut w = World::new(14);
    let fields = vec![
        ("balance".to_string(), b"EUR 1,234.56".to_vec()),
        ("account".to_string(), b"DE44 5001 0517 5407 3249 31".to_vec()),
    ];
    let r = run_secure_view(&mut w, fields.clone(), cfg(ProtocolKind::SecureView, 14), None);
    let doc = r.document.clone().unwrap();
    assert_eq!(doc.viewed, fields);
    assert!(doc.failed.is_empty());
    let labels: Vec<String> = fields.iter().map(|f| f.0.clone()).collect();
    let reg = secret_registry(&w, &r, &fields);
    let found: BTreeSet<_> = scan_states_for_secrets(&r, &reg)
        .into_iter()
        .map(|f| (f.entity, f.secret))
        .collect();
    assert_eq!(found, expected_secret_placement(ProtocolKind::SecureView, &labels));

    let empty = run_secure_view(&mut w, Vec::new(), cfg(ProtocolKind::SecureView, 14), None);
    assert_eq!(empty.document.unwrap().viewed, Vec::new());
}

#[test]
fn secure_view_reports_the_one_unreadable_field() {
    for bad in 0..3 {
        let mut w = World::new(15);
        let fields: Vec<(String, Vec<u8>)> = (0..3)
            .map(|i| (format!("f{i}"), format!("value {i}").into_bytes()))
            .collect();
        let mut c = cfg(ProtocolKind::SecureView, 15);
        c.corruption.per_capture.insert(bad, CorruptionLevel::AboveBudget);
        let r = run_secure_view(&mut w, fields.clone(), c, None);
        let doc = r.document.unwrap();
        assert_eq!(doc.failed.len(), 1);
        assert_eq!(doc.failed[0].0, format!("f{bad}"));
        assert_eq!(doc.viewed.len(), 2);
    }
}

#[test]
fn hijack_guard_accepts_matching_transfers() {
    let mut w = World::new(16);
    let tx = w.sample_transaction();
    let (verdict, r) = run_hijack_guard(&mut w, tx.clone(), cfg(ProtocolKind::P1, 16), None);
    assert_eq!(verdict, GuardVerdict::ServerAccepts);
    assert_eq!(r.executed().collect::<Vec<_>>(), vec![&tx]);
}

#[test]
fn transactions_require_positive_amounts() {
    assert!(Transaction::new("1", 0, "x").is_err());
    assert!(Transaction::new("1\n2", 5, "x").is_err());
}
