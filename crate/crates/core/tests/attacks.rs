use visauth::adversary::{
    evaluate, run_attack_trial, run_fake_server, Adversary, AdversaryConfig, AdversaryKind, BruteForcer, Locus,
    TxAttack, ATTACKER_ACCOUNT,
};
use visauth::crypto::encrypt;
use visauth::entities::{ChannelKind, ProtocolKind, SessionConfig, TxDecision, UserPlan};
use visauth::protocols::{run_session, run_tx_verification, Variant, World};
use visauth::rng::seeded;

fn cell(p: ProtocolKind, kind: AdversaryKind, locus: Locus, guard: bool, trials: u64) -> bool {
    let adv = AdversaryConfig::new(kind, locus);
    let mut base = SessionConfig::new(p, 0);
    base.flags.hijack_guard = guard;
    (0..trials).all(|t| run_attack_trial(p, &adv, &base, 1000 + t).0.resisted())
}

#[test]
fn matrix_sample_matches_expected_pattern() {
    let broken = [
        (ProtocolKind::P2, AdversaryKind::Malware, Locus::Smartphone),
        (ProtocolKind::P3, AdversaryKind::Keylogger, Locus::Smartphone),
        (ProtocolKind::P3, AdversaryKind::Malware, Locus::Smartphone),
    ];
    for p in ProtocolKind::LOGIN {
        for kind in AdversaryKind::MATRIX {
            for locus in Locus::MATRIX {
                let expected = !broken.contains(&(p, kind, locus));
                assert_eq!(cell(p, kind, locus, true, 5), expected, "{p} {kind} {locus}");
            }
        }
    }
}

#[test]
fn without_the_guard_terminal_malware_hijacks_every_protocol() {
    for p in ProtocolKind::LOGIN {
        assert!(!cell(p, AdversaryKind::Malware, Locus::Terminal, false, 3), "{p}");
        assert!(cell(p, AdversaryKind::Keylogger, Locus::Terminal, false, 3), "{p}");
    }
}

#[test]
fn keylogger_on_terminal_sees_only_positions() {
    let adv_cfg = AdversaryConfig::new(AdversaryKind::Keylogger, Locus::Terminal);
    let mut w = World::new(21);
    let mut adv = Adversary::new(adv_cfg);
    let r = run_session(
        &mut w,
        SessionConfig::new(ProtocolKind::P1, 21),
        Variant::Honest,
        UserPlan::default(),
        Some(&mut adv),
    );
    assert!(r.authenticated());
    assert!(!adv.observations.is_empty());
    assert!(adv.observations.iter().all(|o| o.channel == ChannelKind::Click));
    assert!(adv
        .observations
        .iter()
        .all(|o| o.tag == "key_click" || o.tag == "keyboard_done" || o.tag == "enter_id"));
    let out = evaluate(&adv, &r, &mut w, 1);
    assert!(!out.learned_password);
    assert!(!out.can_authenticate_later);
    assert!(out.posterior_candidate_count.unwrap() > 1);
}

#[test]
fn surfer_at_terminal_learns_an_otp_it_cannot_reuse() {
    let mut w = World::new(22);
    let mut adv = Adversary::new(AdversaryConfig::new(AdversaryKind::ShoulderSurfer, Locus::Terminal));
    let r = run_session(
        &mut w,
        SessionConfig::new(ProtocolKind::P2, 22),
        Variant::Honest,
        UserPlan::default(),
        Some(&mut adv),
    );
    assert_eq!(adv.knowledge.otps, vec![r.secrets.otp.clone().unwrap()]);
    let out = evaluate(&adv, &r, &mut w, 3);
    assert!(!out.learned_reusable_secret);
    assert!(!out.can_authenticate_later);
}

#[test]
fn smartphone_malware_on_p2_exfiltrates_the_key() {
    let mut w = World::new(23);
    let mut adv = Adversary::new(AdversaryConfig::new(AdversaryKind::Malware, Locus::Smartphone));
    let r = run_session(
        &mut w,
        SessionConfig::new(ProtocolKind::P2, 23),
        Variant::Honest,
        UserPlan::default(),
        Some(&mut adv),
    );
    let out = evaluate(&adv, &r, &mut w, 1);
    assert!(out.learned_reusable_secret);
    assert!(out.can_authenticate_later);
}

#[test]
fn phone_keylogger_on_p3_learns_a_usable_password() {
    let mut w = World::new(24);
    let mut adv = Adversary::new(AdversaryConfig::new(AdversaryKind::Keylogger, Locus::Smartphone));
    let r = run_session(
        &mut w,
        SessionConfig::new(ProtocolKind::P3, 24),
        Variant::Honest,
        UserPlan::default(),
        Some(&mut adv),
    );
    let out = evaluate(&adv, &r, &mut w, 1);
    assert!(out.learned_password);
    assert!(out.can_authenticate_later);
}

#[test]
fn surfer_watching_both_screens_recovers_the_p1_password() {
    for seed in 0..20 {
        let mut w = World::new(seed);
        let mut adv = Adversary::new(AdversaryConfig::new(AdversaryKind::ShoulderSurfer, Locus::Both));
        let r = run_session(
            &mut w,
            SessionConfig::new(ProtocolKind::P1, seed),
            Variant::Honest,
            UserPlan::default(),
            Some(&mut adv),
        );
        assert_eq!(adv.knowledge.password.as_deref(), Some(w.password()));
        let out = evaluate(&adv, &r, &mut w, 1);
        assert_eq!(out.posterior_candidate_count, Some(1));
        assert!(out.learned_password);
        // a later P1 login still needs the phone to read the fresh layout
        assert!(!out.can_authenticate_later);
    }
}

#[test]
fn fake_server_cannot_open_p3_credentials() {
    for seed in 0..10 {
        let mut w = World::new(seed);
        let mut c = SessionConfig::new(ProtocolKind::P3, seed);
        c.flags.sign_server_payloads = true;
        let out = run_fake_server(&mut w, c);
        assert!(!out.decrypted_credentials);
        assert!(!out.learned_password);
    }
}

#[test]
fn phone_rejects_a_fake_server_on_signed_logins() {
    for p in [ProtocolKind::P1, ProtocolKind::P2] {
        let mut w = World::new(25);
        let out = run_fake_server(&mut w, SessionConfig::new(p, 25));
        assert!(out.phone_rejected, "{p}: {:?}", out.report.outcome);
        let mut c = SessionConfig::new(p, 25);
        c.flags.sign_server_payloads = false;
        let out = run_fake_server(&mut w, c);
        assert!(!out.phone_rejected, "{p}");
    }
}

#[test]
fn brute_force_finds_nothing_in_a_million_guesses() {
    let w = World::new(26);
    let ct = encrypt(&w.user_keys().public, b"k3y8o4rd", &mut seeded(1));
    let res = BruteForcer { budget: 1_000_000 }.search(&ct, &mut seeded(2));
    assert_eq!(res.attempts, 1_000_000);
    assert!(res.recovered.is_none());
}

#[test]
fn man_in_the_browser_is_caught_on_the_phone() {
    for attack in [TxAttack::AlterDisplay, TxAttack::SubstituteRequest, TxAttack::TamperQr] {
        let mut w = World::new(27);
        let tx = w.sample_transaction();
        let mut cfg = AdversaryConfig::new(AdversaryKind::Malware, Locus::Terminal);
        cfg.tactics.tx_attack = Some(attack.clone());
        let mut adv = Adversary::new(cfg);
        let r = run_tx_verification(
            &mut w,
            tx,
            SessionConfig::new(ProtocolKind::TxVerify, 27),
            Some(&mut adv),
        );
        assert!(matches!(r.tx_decision, Some(TxDecision::Flagged(_))), "{attack:?}");
        assert!(
            r.executed().all(|t| t.receiver_account != ATTACKER_ACCOUNT),
            "{attack:?}"
        );
    }
}

fn replay_confirmation(freshness: bool, seed: u64) -> bool {
    let mut w = World::new(seed);
    let tx = w.sample_transaction();
    let mut cfg = AdversaryConfig::new(AdversaryKind::Malware, Locus::Terminal);
    cfg.tactics.hijack = false;
    let mut adv = Adversary::new(cfg);
    let mut c = SessionConfig::new(ProtocolKind::TxVerify, seed);
    c.flags.tx_nonce_freshness = freshness;
    // the first payment goes through untouched while its confirmation is recorded
    let first = run_tx_verification(&mut w, tx.clone(), c.clone(), Some(&mut adv));
    assert_eq!(first.tx_decision, Some(TxDecision::Confirmed));
    adv.config.tactics.tx_attack = Some(TxAttack::ReplayConfirmation);
    let r = run_tx_verification(&mut w, tx, c, Some(&mut adv));
    let hit = r.executed().any(|t| t.receiver_account == ATTACKER_ACCOUNT);
    hit
}

#[test]
fn confirmation_replay_needs_freshness() {
    assert!(replay_confirmation(false, 28));
    assert!(!replay_confirmation(true, 28));
}

#[test]
fn hijack_guard_rejects_altered_or_unconfirmed_transfers() {
    use visauth::protocols::{run_hijack_guard, GuardVerdict};
    for p in ProtocolKind::LOGIN {
        let mut w = World::new(29);
        let tx = w.sample_transaction();
        let mut adv = Adversary::new(AdversaryConfig::new(AdversaryKind::Malware, Locus::Terminal));
        let (verdict, r) = run_hijack_guard(&mut w, tx.clone(), SessionConfig::new(p, 29), Some(&mut adv));
        assert_eq!(verdict, GuardVerdict::ServerRejects, "{p}");
        assert_eq!(r.executed().count(), 0, "{p}");

        let mut cfg = AdversaryConfig::new(AdversaryKind::Malware, Locus::Smartphone);
        cfg.tactics.drop_side_channel = true;
        let mut adv = Adversary::new(cfg);
        let (verdict, r) = run_hijack_guard(&mut w, tx, SessionConfig::new(p, 30), Some(&mut adv));
        assert_eq!(verdict, GuardVerdict::ServerRejects, "{p}");
        assert_eq!(r.executed().count(), 0, "{p}");
    }
}
