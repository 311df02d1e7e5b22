use std::collections::BTreeSet;

use proptest::prelude::*;

use visauth::adversary::{evaluate, posterior_count, Adversary, AdversaryConfig, AdversaryKind, Locus};
use visauth::crypto::{
    decrypt, encrypt, generate_keypair, generate_permutation, sign, verify, KeyboardPermutation, Role, ALPHABET,
    ALPHABET_SIZE,
};
use visauth::entities::{ProtocolKind, SessionConfig, UserPlan};
use visauth::protocols::{run_session, Variant, World};
use visauth::rng::seeded;
use visauth::visual::{corrupt, qr_decode, qr_encode, EcLevel, FrameSpec, Mode};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn encryption_round_trips(msg in proptest::collection::vec(any::<u8>(), 0..=4096), seed in any::<u64>()) {
        let keys = generate_keypair(Role::User, seed);
        let ct = encrypt(&keys.public, &msg, &mut seeded(seed ^ 1));
        prop_assert_eq!(decrypt(&keys.private, &ct).unwrap(), msg);
    }

    #[test]
    fn any_single_mutation_breaks_a_signature(
        msg in proptest::collection::vec(any::<u8>(), 1..256),
        seed in any::<u64>(),
        which in 0u8..3,
        index in any::<prop::sample::Index>(),
        flip in 1u8..=255,
    ) {
        let keys = generate_keypair(Role::Server, seed);
        let sig = sign(&keys.private, &msg);
        prop_assert!(verify(&keys.public, &msg, &sig).is_valid());
        match which {
            0 => {
                let mut m = msg.clone();
                let i = index.index(m.len());
                m[i] ^= flip;
                prop_assert!(!verify(&keys.public, &m, &sig).is_valid());
            }
            1 => {
                let mut forged = sig.clone();
                let i = index.index(forged.bytes.len());
                forged.bytes[i] ^= flip;
                prop_assert!(!verify(&keys.public, &msg, &forged).is_valid());
            }
            _ => {
                let other = generate_keypair(Role::Server, seed.wrapping_add(1));
                prop_assert!(!verify(&other.public, &msg, &sig).is_valid());
            }
        }
    }

    #[test]
    fn decode_never_returns_wrong_bytes(
        payload in proptest::collection::vec(any::<u8>(), 1..120),
        version in 5u8..=10,
        ec in prop::sample::select(vec![EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H]),
        extra in 0usize..40,
        seed in any::<u64>(),
    ) {
        let spec = FrameSpec::new(version, ec, Mode::Byte).unwrap();
        prop_assume!(payload.len() <= spec.capacity());
        let frame = qr_encode(&payload, spec).unwrap();
        let count = (spec.correction_budget() + extra).min(spec.total_codewords());
        let damaged = corrupt(&frame, count, seed).unwrap();
        match qr_decode(&damaged) {
            Ok(bytes) => prop_assert_eq!(bytes, payload),
            Err(_) => prop_assert!(count > spec.correction_budget()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Positions alone say nothing about symbols: a terminal keylogger's
    /// candidate count equals the count for distinct positions with no
    /// observation of the layout at all.
    #[test]
    fn terminal_keylogger_never_narrows_distinct_passwords(seed in any::<u64>()) {
        let world = World::new(seed);
        let pw = world.password().to_string();
        let distinct = pw.bytes().collect::<BTreeSet<_>>().len() as u32;
        prop_assume!(distinct as usize == pw.len());
        let mut w = world;
        let mut adv = Adversary::new(AdversaryConfig::new(AdversaryKind::Keylogger, Locus::Terminal));
        let r = run_session(&mut w, SessionConfig::new(ProtocolKind::P1, seed), Variant::Honest, UserPlan::default(), Some(&mut adv));
        let out = evaluate(&adv, &r, &mut w, 1);
        let no_observation: u128 = (0..distinct).map(|i| (ALPHABET_SIZE as u128) - u128::from(i)).product();
        prop_assert_eq!(out.posterior_candidate_count, Some(no_observation));
        prop_assert!(!out.learned_password);
    }

    #[test]
    fn reduced_posterior_depends_only_on_the_repeat_pattern(a in 0u8..5, b in 0u8..5) {
        let expected = if a == b { 5 } else { 20 };
        prop_assert_eq!(posterior_count(&[a, b], 5, 2).unwrap(), expected);
    }
}

#[test]
fn permutation_positions_are_uniform() {
    const DRAWS: u64 = 10_000;
    let mut counts = vec![[0u32; ALPHABET_SIZE]; ALPHABET_SIZE];
    for seed in 0..DRAWS {
        let pi: KeyboardPermutation = generate_permutation(seed);
        for (pos, sym) in pi.symbols().iter().enumerate() {
            let s = ALPHABET.iter().position(|c| c == sym).unwrap();
            counts[pos][s] += 1;
        }
    }
    let p = 1.0 / ALPHABET_SIZE as f64;
    let expected = DRAWS as f64 * p;
    for (pos, row) in counts.iter().enumerate() {
        let mut chi2 = 0.0;
        for &c in row {
            let freq = f64::from(c) / DRAWS as f64;
            assert!((freq - p).abs() <= 5.0 * p, "position {pos}: frequency {freq}");
            chi2 += (f64::from(c) - expected).powi(2) / expected;
        }
        // 35 degrees of freedom; 100 is far in the tail
        assert!(chi2 < 100.0, "position {pos}: chi-square {chi2}");
    }
}
