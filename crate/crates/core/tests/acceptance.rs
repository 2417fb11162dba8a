//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]`/`[FAIL]` line. Run with
//!
//! ```text
//! cargo test --test acceptance -- --test-threads=1 --nocapture
//! ```
//!
//! Counter criteria are asserted exactly (zero tolerance); wall-clock
//! behaviour is reported as a soft check only.

use std::sync::OnceLock;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use habe_core::algebra::{PairingContext, TargetElem};
use habe_core::bench::{bench_run, BenchConfig, BenchReport};
use habe_core::error::Error;
use habe_core::harness::Harness;
use habe_core::lifecycle::{ReencryptionContext, StoredObject};
use habe_core::metrics::OpCounts;
use habe_core::payload::{open_payload, seal_payload};
use habe_core::policy::{
    satisfies_policy, AndGate, AttributeDef, AttributeList, GateClause, Policy, Universe,
};
use habe_core::scheme::{
    anon_decrypt, anon_encrypt, attr_keygen, decrypt_gate, derive_dk, epoch_secret, match_gate,
    offline_encrypt, online_encrypt, owner_param_setup, reenc_keygen, reencrypt, system_setup,
    AttrSecretKey, CloudCiphertext, DataPublicParams, DataSecretParams, ReencKey, SystemMasterKey,
    SystemPublicKey,
};
use habe_core::wire;

struct World {
    ctx: PairingContext,
    pk: SystemPublicKey,
    mk: SystemMasterKey,
    pp: DataPublicParams,
    sp: DataSecretParams,
    rk: ReencKey,
}

fn world(rng: &mut ChaCha20Rng) -> World {
    let ctx = PairingContext::new();
    let (pk, mk) = system_setup(&ctx, rng);
    let (pp, sp) = owner_param_setup(&pk, &ctx, rng);
    let rk = reenc_keygen(rng);
    World { ctx, pk, mk, pp, sp, rk }
}

fn random_universe(rng: &mut ChaCha20Rng, max_n: usize, max_ni: usize) -> Universe {
    let n = 1 + rng.next_u32() as usize % max_n;
    Universe {
        attributes: (1..=n)
            .map(|i| AttributeDef {
                name: format!("a{i}"),
                values: (1..=(1 + rng.next_u32() as usize % max_ni))
                    .map(|t| format!("v{i}_{t}"))
                    .collect(),
            })
            .collect(),
    }
}

fn random_gate(rng: &mut ChaCha20Rng, u: &Universe) -> AndGate {
    AndGate {
        clauses: (0..u.attr_count())
            .map(|i| {
                let n_i = u.value_count(i);
                if rng.next_u32() % 3 == 0 {
                    GateClause::Wildcard
                } else {
                    let size = 1 + rng.next_u32() as usize % n_i;
                    let mut set = std::collections::BTreeSet::new();
                    while set.len() < size {
                        set.insert(rng.next_u32() as usize % n_i);
                    }
                    GateClause::Values(set)
                }
            })
            .collect(),
    }
}

fn random_list(rng: &mut ChaCha20Rng, u: &Universe) -> AttributeList {
    AttributeList {
        selections: (0..u.attr_count()).map(|i| rng.next_u32() as usize % u.value_count(i)).collect(),
    }
}

/// Mutate a list until it satisfies the given gate.
fn force_satisfy(list: &AttributeList, gate: &AndGate) -> AttributeList {
    let selections = list
        .selections
        .iter()
        .zip(&gate.clauses)
        .map(|(&k, clause)| match clause {
            GateClause::Wildcard => k,
            GateClause::Values(set) => {
                if set.contains(&k) {
                    k
                } else {
                    *set.iter().next().unwrap()
                }
            }
        })
        .collect();
    AttributeList { selections }
}

/// Criterion 1: randomized end-to-end correctness. 200 instances over
/// universes up to (n=8, n_i=5, m=3); every satisfying list recovers the
/// exact message at epochs 1..3, every non-satisfying list is rejected.
/// Zero failures tolerated.
#[test]
fn criterion_1_end_to_end_correctness() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xACCE_0001);
    let w = world(&mut rng);
    let mut satisfied_checks = 0u32;
    let mut rejected_checks = 0u32;

    for instance in 0..200 {
        let universe = random_universe(&mut rng, 8, 5);
        let m = 1 + rng.next_u32() as usize % 3;
        let policy = Policy { gates: (0..m).map(|_| random_gate(&mut rng, &universe)).collect() };

        let gates =
            anon_encrypt(&w.ctx, &w.pk, &w.pp, &w.sp, &w.rk, &universe, &policy, &mut rng).unwrap();
        let message = TargetElem::random(&w.ctx, &mut rng);
        let mut offline = offline_encrypt(&w.pk, &w.pp, &mut rng);
        let msg_ct = online_encrypt(&message, &mut offline).unwrap();
        let cloud =
            CloudCiphertext { object_id: format!("obj{instance}"), messages: vec![msg_ct], gates };

        // One random list, one forced onto a random gate.
        let pick = rng.next_u32() as usize % policy.gates.len();
        let lists = [
            random_list(&mut rng, &universe),
            force_satisfy(&random_list(&mut rng, &universe), &policy.gates[pick]),
        ];
        let users: Vec<(Option<usize>, AttrSecretKey)> = lists
            .iter()
            .map(|list| {
                let expected = satisfies_policy(list, &policy).unwrap();
                let sk = attr_keygen(&w.ctx, &w.pk, &w.mk, &universe, list, &mut rng).unwrap();
                (expected, sk)
            })
            .collect();

        // Epoch-0 gate form: a satisfying key recovers the owner's epoch-0
        // decryption key through match + gate decryption.
        for (expected, sk) in &users {
            if let Some(j) = expected {
                assert!(match_gate(&w.ctx, sk, &cloud.gates[*j].gate).unwrap());
                let dk = decrypt_gate(&w.ctx, sk, &cloud.gates[*j], 0).unwrap();
                let oracle = derive_dk(&w.pp, &w.sp, &epoch_secret(&w.ctx, &w.rk, 0));
                assert_eq!(dk.elem, oracle.elem, "instance {instance}: epoch-0 dk mismatch");
            }
        }

        for epoch in 1..=3u64 {
            let uct = reencrypt(&w.ctx, &w.pk, &w.pp, &w.rk, epoch, &cloud, &mut rng).unwrap();
            for (expected, sk) in &users {
                match (expected, anon_decrypt(&w.ctx, &w.pp, &uct, sk)) {
                    (Some(j), Ok(out)) => {
                        assert_eq!(out.gate_index, *j, "instance {instance}: wrong gate matched");
                        assert_eq!(
                            out.messages[0], message,
                            "instance {instance} epoch {epoch}: message corrupted"
                        );
                        satisfied_checks += 1;
                    }
                    (None, Err(Error::AccessDenied)) => rejected_checks += 1,
                    (want, got) => panic!(
                        "instance {instance} epoch {epoch}: oracle {want:?} vs outcome {got:?}"
                    ),
                }
            }
        }
    }
    assert!(satisfied_checks >= 200, "too few satisfying checks: {satisfied_checks}");
    assert!(rejected_checks >= 100, "too few rejecting checks: {rejected_checks}");
    println!(
        "[PASS] criterion-1 end-to-end correctness: 200 instances, {satisfied_checks} \
         authorized decryptions exact, {rejected_checks} rejections, 0 failures"
    );
}

fn shared_grid_report() -> &'static BenchReport {
    static REPORT: OnceLock<BenchReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        bench_run(&BenchConfig {
            attr_counts: vec![10, 20, 30, 40, 50],
            values_per_attr: 10,
            gate_count: 1,
            trials: 2,
            seed: 0xACCE_0002,
        })
        .expect("benchmark grid must satisfy every counter assertion")
    })
}

/// Criterion 2: constant-pairing decryption. Exactly 10 pairings in the
/// decryption phase and 2 per matching check at every n in {10..50},
/// n_i = 10. Wall-time ratio across the range is reported as a soft check.
#[test]
fn criterion_2_constant_pairing_decryption() {
    let report = shared_grid_report();
    let decrypt_rows = report.rows_for("decrypt");
    let match_rows = report.rows_for("match");
    assert_eq!(decrypt_rows.len(), 5);
    for row in &decrypt_rows {
        assert_eq!(
            row.counts.pairings, 10,
            "decryption phase at n={} used {} pairings",
            row.n, row.counts.pairings
        );
    }
    for row in &match_rows {
        assert_eq!(
            row.counts.pairings, 2,
            "matching at n={} used {} pairings",
            row.n, row.counts.pairings
        );
    }
    let times: Vec<f64> = decrypt_rows.iter().map(|r| r.mean_us).collect();
    let ratio = times.iter().cloned().fold(f64::MIN, f64::max)
        / times.iter().cloned().fold(f64::MAX, f64::min);
    println!(
        "[PASS] criterion-2 constant-pairing decryption: P=10 (phase) and P=2 (match) at every \
         n in {{10,20,30,40,50}}"
    );
    println!(
        "[SOFT] criterion-2 decryption wall-time ratio max/min = {ratio:.2} across the n-range \
         (an O(n)-pairing baseline would scale ~5x){}",
        if ratio < 3.0 { "" } else { " -- above the 3x guideline on this host" }
    );
}

/// Criterion 3: constant online encryption. Exactly one target-group
/// multiplication and nothing else, at every n.
#[test]
fn criterion_3_constant_online_encryption() {
    let report = shared_grid_report();
    let rows = report.rows_for("online_encrypt");
    assert_eq!(rows.len(), 5);
    for row in &rows {
        assert_eq!(
            row.counts,
            OpCounts { mul_gt: 1, ..OpCounts::default() },
            "online encryption at n={} deviates from 1 M_GT",
            row.n
        );
    }
    println!(
        "[PASS] criterion-3 constant online encryption: counters (EG,EGT,MG,MGT,P,RG) = \
         (0,0,0,1,0,0) at every n"
    );
}

/// Criterion 4: offline encryption budget. Exactly 2 source-group plus 1
/// target-group exponentiation.
#[test]
fn criterion_4_offline_encryption_budget() {
    let report = shared_grid_report();
    let rows = report.rows_for("offline_encrypt");
    assert_eq!(rows.len(), 5);
    for row in &rows {
        assert_eq!(
            row.counts,
            OpCounts { exp_g: 2, exp_gt: 1, ..OpCounts::default() },
            "offline encryption at n={} deviates from 2 E_G + 1 E_GT",
            row.n
        );
    }
    println!("[PASS] criterion-4 offline encryption budget: exactly 2 E_G + 1 E_GT at every n");
}

/// Criterion 5: serialized logical element counts match the size formulas
/// exactly on a 12-point (n, n_i, m) grid. Zero tolerance.
#[test]
fn criterion_5_size_formulas() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xACCE_0005);
    let w = world(&mut rng);

    let pk_report = wire::measure(&w.pk).unwrap();
    assert_eq!((pk_report.group_elems, pk_report.target_elems), (5, 1), "PK size formula");

    let grid = [
        (1, 1, 1),
        (1, 5, 2),
        (2, 2, 1),
        (2, 4, 3),
        (3, 3, 2),
        (3, 5, 1),
        (4, 2, 2),
        (4, 4, 1),
        (5, 3, 3),
        (6, 2, 1),
        (7, 3, 2),
        (8, 5, 3),
    ];
    for (n, n_i, m) in grid {
        let universe = Universe {
            attributes: (1..=n)
                .map(|i| AttributeDef {
                    name: format!("a{i}"),
                    values: (1..=n_i).map(|t| format!("v{i}_{t}")).collect(),
                })
                .collect(),
        };
        let big_n = n * n_i;
        let list = AttributeList { selections: vec![0; n] };
        let sk = attr_keygen(&w.ctx, &w.pk, &w.mk, &universe, &list, &mut rng).unwrap();
        let sk_report = wire::measure(&sk).unwrap();
        assert_eq!(sk_report.group_elems, 3 * n + 4, "ASK formula at n={n}");
        assert_eq!(sk_report.target_elems, 0);

        let message = TargetElem::random(&w.ctx, &mut rng);
        let mut offline = offline_encrypt(&w.pk, &w.pp, &mut rng);
        let msg_ct = online_encrypt(&message, &mut offline).unwrap();
        let msg_report = wire::measure(&msg_ct).unwrap();
        assert_eq!(
            (msg_report.group_elems, msg_report.target_elems),
            (2, 1),
            "message ciphertext formula"
        );

        let policy = Policy {
            gates: (0..m)
                .map(|j| AndGate {
                    clauses: (0..n)
                        .map(|i| GateClause::Values([(i + j) % n_i].into_iter().collect()))
                        .collect(),
                })
                .collect(),
        };
        let gates =
            anon_encrypt(&w.ctx, &w.pk, &w.pp, &w.sp, &w.rk, &universe, &policy, &mut rng).unwrap();
        let mut policy_g = 0usize;
        let mut policy_gt = 0usize;
        for pair in &gates {
            let g_report = wire::measure(&pair.gate).unwrap();
            let b_report = wire::measure(&pair.blind).unwrap();
            policy_g += g_report.group_elems + b_report.group_elems;
            policy_gt += g_report.target_elems + b_report.target_elems;
        }
        assert_eq!(
            policy_g,
            5 * m * big_n + 6 * m,
            "policy ciphertext G formula at (n={n}, n_i={n_i}, m={m})"
        );
        assert_eq!(policy_gt, 2 * m, "policy ciphertext G_T formula at (n={n}, n_i={n_i}, m={m})");
    }
    println!(
        "[PASS] criterion-5 size formulas: PK=5G+1GT, ASK=(3n+4)G, message=2G+1GT, \
         policy=(5mN+6m)G+2mGT on all 12 grid points"
    );
}

/// Criterion 6: revocation. 50 randomized update sequences; after every
/// deletion, users whose satisfying gates are all gone are rejected, the
/// rest still decrypt, and a cached epoch key never opens the next epoch's
/// payload. Zero failures.
#[test]
fn criterion_6_revocation_sequences() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xACCE_0006);
    let w = world(&mut rng);

    for sequence in 0..50 {
        let universe = random_universe(&mut rng, 4, 3);
        let m = 2 + rng.next_u32() as usize % 2;
        let mut policy = Policy { gates: (0..m).map(|_| random_gate(&mut rng, &universe)).collect() };
        let gates =
            anon_encrypt(&w.ctx, &w.pk, &w.pp, &w.sp, &w.rk, &universe, &policy, &mut rng).unwrap();

        let message = TargetElem::random(&w.ctx, &mut rng);
        let payload = {
            let mut buf = vec![0u8; 64];
            rng.fill_bytes(&mut buf);
            buf
        };
        let sealed = seal_payload(&message, &payload, &mut rng);
        let mut offline = offline_encrypt(&w.pk, &w.pp, &mut rng);
        let msg_ct = online_encrypt(&message, &mut offline).unwrap();

        let mut obj = StoredObject::new(format!("seq{sequence}"));
        obj.add_message(0, msg_ct);
        let ids = obj.set_policy(0, gates, vec![None; m]).unwrap();
        let cx = ReencryptionContext { ctx: &w.ctx, pk: &w.pk, pp: &w.pp, rk: &w.rk };
        obj.publish(&cx, 0, &mut rng).unwrap();

        // Users: one forced onto each gate plus one fully random.
        let mut users: Vec<(AttributeList, AttrSecretKey)> = Vec::new();
        for gate in &policy.gates {
            let list = force_satisfy(&random_list(&mut rng, &universe), gate);
            let sk = attr_keygen(&w.ctx, &w.pk, &w.mk, &universe, &list, &mut rng).unwrap();
            users.push((list, sk));
        }
        let list = random_list(&mut rng, &universe);
        let sk = attr_keygen(&w.ctx, &w.pk, &w.mk, &universe, &list, &mut rng).unwrap();
        users.push((list, sk));

        let mut live_ids = ids.clone();
        // Delete gates one at a time until one remains; verify the access
        // matrix after every step.
        while live_ids.len() > 1 {
            // A still-authorized user caches the current epoch's key.
            let cached = users.iter().find_map(|(list, sk)| {
                satisfies_policy(list, &policy).unwrap()?;
                let uct = obj.published.as_ref().unwrap();
                anon_decrypt(&w.ctx, &w.pp, uct, sk).ok().map(|d| d.dk)
            });

            let victim = rng.next_u32() as usize % live_ids.len();
            let gate_id = live_ids.remove(victim);
            let position = obj.gate_ids().iter().position(|&g| g == gate_id).unwrap();
            policy.gates.remove(position);
            obj.delete_gate(&cx, 1, gate_id, &mut rng).unwrap();

            let uct = obj.published.as_ref().expect("gates remain");
            for (list, sk) in &users {
                let authorized = satisfies_policy(list, &policy).unwrap().is_some();
                match anon_decrypt(&w.ctx, &w.pp, uct, sk) {
                    Ok(out) => {
                        assert!(authorized, "seq {sequence}: revoked user still decrypts");
                        assert_eq!(out.messages[0], message);
                        assert_eq!(open_payload(&out.messages[0], &sealed).unwrap(), payload);
                    }
                    Err(Error::AccessDenied) => {
                        assert!(!authorized, "seq {sequence}: authorized user rejected");
                    }
                    Err(e) => panic!("seq {sequence}: unexpected error {e}"),
                }
            }

            // The cached pre-deletion key must not open the new epoch.
            if let Some(stale_dk) = cached {
                assert!(stale_dk.epoch < obj.current_epoch);
                for part in &uct.messages {
                    let wrong =
                        habe_core::scheme::recover_message(&w.ctx, &w.pp, part, &stale_dk);
                    assert!(
                        matches!(open_payload(&wrong, &sealed), Err(Error::PayloadAuth)),
                        "seq {sequence}: stale epoch key opened a newer ciphertext"
                    );
                }
            }
        }
    }
    println!(
        "[PASS] criterion-6 revocation: 50 randomized update sequences, revoked users rejected, \
         surviving users exact, stale epoch keys always fail payload authentication"
    );
}

/// Criterion 7: offline policy deletion. A full delete + re-encrypt cycle
/// driven purely by an expiration date: the owner sends nothing after the
/// initial policy upload (transcript-verified).
#[test]
fn criterion_7_offline_policy_deletion() {
    let dir = tempfile::tempdir().unwrap();
    let mut harness = Harness::new(dir.path(), 0xACCE).unwrap();
    harness
        .run_script(
            r#"
universe attrs="dept:cardio,onco,lab;role:doctor,nurse,admin"
aa setup
aa keygen du=grace attrs="dept=cardio,role=doctor"
aa keygen du=mallory attrs="dept=lab,role=admin"
do owner1 setup
dev sensor1 init owner=owner1 pool=1
dev sensor1 send object=vitals payload=text:reading
do owner1 policy object=vitals gates="dept=lab & role=admin | dept=cardio" expire="1:+3600"
csp publish object=vitals
du mallory access object=vitals expect=ok
du grace access object=vitals expect=ok
clock advance=3600
csp sweep
du mallory access object=vitals expect=denied
du grace access object=vitals expect=ok
"#,
        )
        .unwrap();

    let entries = harness.transcript().entries();
    let policy_upload = entries
        .iter()
        .position(|e| e.actor == "do:owner1" && e.action == "policy")
        .expect("policy upload recorded");
    let owner_after: Vec<_> = entries[policy_upload + 1..]
        .iter()
        .filter(|e| e.actor.starts_with("do:"))
        .collect();
    assert!(
        owner_after.is_empty(),
        "owner sent messages after the policy upload: {owner_after:?}"
    );
    let sweep = entries.iter().position(|e| e.action == "sweep").unwrap();
    assert!(sweep > policy_upload);
    let epoch_after = harness.store().load("vitals").unwrap().current_epoch;
    assert_eq!(epoch_after, 2, "sweep must republish at the next epoch");
    println!(
        "[PASS] criterion-7 offline policy deletion: expiration-driven revocation completed with \
         zero owner messages after the policy upload (transcript-verified)"
    );
}

/// Criterion 8: policy-hiding shape check. 20 random policy pairs with
/// equal (n, n_i, m) produce byte-length-identical published policy parts
/// with positionally identical component layouts.
#[test]
fn criterion_8_policy_hiding_shape() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xACCE_0008);
    let w = world(&mut rng);
    let universe = Universe {
        attributes: (1..=3)
            .map(|i| AttributeDef {
                name: format!("a{i}"),
                values: (1..=3).map(|t| format!("v{i}_{t}")).collect(),
            })
            .collect(),
    };

    for pair_index in 0..20 {
        let m = 1 + (pair_index % 3);
        let policy_a =
            Policy { gates: (0..m).map(|_| random_gate(&mut rng, &universe)).collect() };
        let policy_b =
            Policy { gates: (0..m).map(|_| random_gate(&mut rng, &universe)).collect() };

        let encode_published = |policy: &Policy, rng: &mut ChaCha20Rng| {
            let gates =
                anon_encrypt(&w.ctx, &w.pk, &w.pp, &w.sp, &w.rk, &universe, policy, rng).unwrap();
            let message = TargetElem::random(&w.ctx, rng);
            let mut offline = offline_encrypt(&w.pk, &w.pp, rng);
            let msg_ct = online_encrypt(&message, &mut offline).unwrap();
            let cloud =
                CloudCiphertext { object_id: "shape".into(), messages: vec![msg_ct], gates };
            let uct = reencrypt(&w.ctx, &w.pk, &w.pp, &w.rk, 1, &cloud, rng).unwrap();
            let total = wire::encode(&uct).unwrap().len();
            let sections = wire::gate_section_lengths(&uct).unwrap();
            (total, sections)
        };

        let (total_a, sections_a) = encode_published(&policy_a, &mut rng);
        let (total_b, sections_b) = encode_published(&policy_b, &mut rng);
        assert_eq!(
            total_a, total_b,
            "pair {pair_index}: published ciphertext byte lengths differ"
        );
        assert_eq!(
            sections_a, sections_b,
            "pair {pair_index}: per-gate section layouts differ"
        );
        // Within one ciphertext every gate also looks alike.
        assert!(sections_a.windows(2).all(|w| w[0] == w[1]));
    }
    println!(
        "[PASS] criterion-8 policy-hiding shape: 20 equal-shape policy pairs encode to identical \
         byte lengths with positionally indistinguishable layouts"
    );
}
