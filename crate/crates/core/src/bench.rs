//! Operation benchmark: wall-clock measurements plus instrumented
//! group-operation counters over a grid of universe sizes.
//!
//! Counters are the authoritative output: for each measured operation the
//! run asserts the expected counts (constant online encryption, constant
//! offline budget, two pairings per matching check, ten pairings in the
//! decryption phase, and the per-component encryption formulas for
//! single-value gates). Wall-clock numbers are informative only; hardware
//! changes them, the counters never move.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::algebra::{PairingContext, TargetElem};
use crate::error::{Error, Result};
use crate::metrics::{self, OpCounts, OpLabel};
use crate::policy::{AndGate, AttributeDef, AttributeList, GateClause, Policy, Universe};
use crate::scheme::{
    anon_decrypt, anon_encrypt, attr_keygen, match_gate, offline_encrypt, online_encrypt,
    owner_param_setup, reenc_keygen, reencrypt, system_setup, CloudCiphertext,
};

/// Benchmark parameter grid.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    /// Universe sizes (attribute counts) to sweep.
    pub attr_counts: Vec<usize>,
    /// Values per attribute (fixed across the sweep).
    pub values_per_attr: usize,
    /// Gates per policy.
    pub gate_count: usize,
    pub trials: u32,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            attr_counts: vec![10, 20, 30, 40, 50],
            values_per_attr: 10,
            gate_count: 1,
            trials: 3,
            seed: 7,
        }
    }
}

/// One measured operation at one grid point.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub op: String,
    pub n: usize,
    pub n_i: usize,
    pub m: usize,
    pub trials: u32,
    pub mean_us: f64,
    pub stddev_us: f64,
    /// Per-call counts (identical across trials, asserted).
    pub counts: OpCounts,
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

pub const CSV_HEADER: &str = "op,n,ni,m,trials,mean_us,stddev_us,EG,EGT,MG,MGT,P,RG";

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.2},{:.2},{},{},{},{},{},{}\n",
                row.op,
                row.n,
                row.n_i,
                row.m,
                row.trials,
                row.mean_us,
                row.stddev_us,
                row.counts.exp_g,
                row.counts.exp_gt,
                row.counts.mul_g,
                row.counts.mul_gt,
                row.counts.pairings,
                row.counts.rand_g,
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                serde_json::json!({
                    "op": row.op,
                    "n": row.n,
                    "ni": row.n_i,
                    "m": row.m,
                    "trials": row.trials,
                    "mean_us": row.mean_us,
                    "stddev_us": row.stddev_us,
                    "EG": row.counts.exp_g,
                    "EGT": row.counts.exp_gt,
                    "MG": row.counts.mul_g,
                    "MGT": row.counts.mul_gt,
                    "P": row.counts.pairings,
                    "RG": row.counts.rand_g,
                })
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("report serializes")
    }

    /// Rows for one operation, in grid order.
    pub fn rows_for(&self, op: &str) -> Vec<&BenchRow> {
        self.rows.iter().filter(|r| r.op == op).collect()
    }
}

fn grid_universe(n: usize, n_i: usize) -> Universe {
    Universe {
        attributes: (1..=n)
            .map(|i| AttributeDef {
                name: format!("a{i}"),
                values: (1..=n_i).map(|t| format!("v{i}_{t}")).collect(),
            })
            .collect(),
    }
}

/// Single-value gates (the shape the per-component cost formulas model):
/// gate j admits exactly one value per attribute, shifted so gates are
/// pairwise distinct; gate 1 admits the benchmark user's list.
fn grid_policy(n: usize, n_i: usize, m: usize) -> (Policy, AttributeList) {
    let list = AttributeList { selections: (0..n).map(|i| i % n_i).collect() };
    let gates = (0..m)
        .map(|j| AndGate {
            clauses: (0..n)
                .map(|i| GateClause::Values([(i + j) % n_i].into_iter().collect()))
                .collect(),
        })
        .collect();
    (Policy { gates }, list)
}

struct Samples {
    wall_us: Vec<f64>,
    counts: Option<OpCounts>,
}

impl Samples {
    fn new() -> Self {
        Samples { wall_us: Vec::new(), counts: None }
    }

    fn push(&mut self, op: &str, wall_us: f64, counts: OpCounts) -> Result<()> {
        match self.counts {
            None => self.counts = Some(counts),
            Some(existing) if existing == counts => {}
            Some(existing) => {
                return Err(Error::CounterMismatch {
                    op: format!("{op} (trial-to-trial drift)"),
                    expected: existing.to_string(),
                    actual: counts.to_string(),
                });
            }
        }
        self.wall_us.push(wall_us);
        Ok(())
    }

    fn into_row(self, op: &str, n: usize, n_i: usize, m: usize, trials: u32) -> BenchRow {
        let mean = self.wall_us.iter().sum::<f64>() / self.wall_us.len() as f64;
        let stddev = if self.wall_us.len() > 1 {
            let var = self
                .wall_us
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .sum::<f64>()
                / (self.wall_us.len() - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        BenchRow {
            op: op.to_string(),
            n,
            n_i,
            m,
            trials,
            mean_us: mean,
            stddev_us: stddev,
            counts: self.counts.unwrap_or_default(),
        }
    }
}

fn assert_counts(op: &str, expected: OpCounts, actual: OpCounts) -> Result<()> {
    if expected != actual {
        return Err(Error::CounterMismatch {
            op: op.to_string(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

/// Run the benchmark grid; asserts every counter row and returns the
/// timing/counter table.
pub fn bench_run(cfg: &BenchConfig) -> Result<BenchReport> {
    let ctx = PairingContext::new();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut report = BenchReport::default();
    let (n_i, m) = (cfg.values_per_attr, cfg.gate_count);
    if cfg.trials == 0 {
        return Err(Error::invalid("bench config", vec!["trials must be at least 1".into()]));
    }

    for &n in &cfg.attr_counts {
        let universe = grid_universe(n, n_i);
        let (policy, list) = grid_policy(n, n_i, m);
        let (pk, mk) = system_setup(&ctx, &mut rng);
        let (pp, sp) = owner_param_setup(&pk, &ctx, &mut rng);
        let rk = reenc_keygen(&mut rng);
        let sk = attr_keygen(&ctx, &pk, &mk, &universe, &list, &mut rng)?;

        let mut offline_s = Samples::new();
        let mut online_s = Samples::new();
        let mut anon_s = Samples::new();
        let mut reenc_s = Samples::new();
        let mut match_s = Samples::new();
        let mut decrypt_s = Samples::new();

        for _ in 0..cfg.trials {
            // Offline encryption.
            metrics::reset();
            let started = Instant::now();
            let mut offline = offline_encrypt(&pk, &pp, &mut rng);
            let wall = started.elapsed().as_secs_f64() * 1e6;
            let counts = metrics::snapshot().get(OpLabel::OfflineEncrypt).counts;
            assert_counts(
                "offline_encrypt",
                OpCounts { exp_g: 2, exp_gt: 1, ..OpCounts::default() },
                counts,
            )?;
            offline_s.push("offline_encrypt", wall, counts)?;

            // Online encryption (consumes the offline ciphertext).
            let message = TargetElem::random(&ctx, &mut rng);
            metrics::reset();
            let started = Instant::now();
            let msg_ct = online_encrypt(&message, &mut offline)?;
            let wall = started.elapsed().as_secs_f64() * 1e6;
            let counts = metrics::snapshot().get(OpLabel::OnlineEncrypt).counts;
            assert_counts(
                "online_encrypt",
                OpCounts { mul_gt: 1, ..OpCounts::default() },
                counts,
            )?;
            online_s.push("online_encrypt", wall, counts)?;

            // Policy encryption.
            metrics::reset();
            let started = Instant::now();
            let gates = anon_encrypt(&ctx, &pk, &pp, &sp, &rk, &universe, &policy, &mut rng)?;
            let wall = started.elapsed().as_secs_f64() * 1e6;
            let counts = metrics::snapshot().get(OpLabel::AnonEncrypt).counts;
            let expected = OpCounts {
                exp_g: (5 * m * n + 5 * m) as u64,
                exp_gt: (3 * m) as u64,
                mul_g: (5 * m * n + m) as u64,
                mul_gt: 0,
                pairings: 0,
                rand_g: (5 * m * (n * n_i - n)) as u64,
            };
            assert_counts("anon_encrypt", expected, counts)?;
            anon_s.push("anon_encrypt", wall, counts)?;

            // Re-encryption of the full stored object.
            let cloud = CloudCiphertext {
                object_id: "bench".into(),
                messages: vec![msg_ct],
                gates,
            };
            metrics::reset();
            let started = Instant::now();
            let uct = reencrypt(&ctx, &pk, &pp, &rk, 1, &cloud, &mut rng)?;
            let wall = started.elapsed().as_secs_f64() * 1e6;
            let counts = metrics::snapshot().get(OpLabel::Reencrypt).counts;
            reenc_s.push("reencrypt", wall, counts)?;

            // Matching check on the user's gate.
            metrics::reset();
            let started = Instant::now();
            let matched = match_gate(&ctx, &sk, &uct.gates[0].gate)?;
            let wall = started.elapsed().as_secs_f64() * 1e6;
            if !matched {
                return Err(Error::CounterMismatch {
                    op: "match_gate".into(),
                    expected: "authorized list must match gate 1".into(),
                    actual: "no match".into(),
                });
            }
            let counts = metrics::snapshot().get(OpLabel::MatchGate).counts;
            assert_counts(
                "match_gate",
                OpCounts { pairings: 2, mul_g: (2 * n - 1) as u64, mul_gt: 1, ..OpCounts::default() },
                counts,
            )?;
            match_s.push("match", wall, counts)?;

            // Full decryption; counters cover the decryption phase.
            metrics::reset();
            let started = Instant::now();
            let decryption = anon_decrypt(&ctx, &pp, &uct, &sk)?;
            let wall = started.elapsed().as_secs_f64() * 1e6;
            if decryption.messages[0] != message {
                return Err(Error::CounterMismatch {
                    op: "decrypt".into(),
                    expected: "recovered message equals encrypted message".into(),
                    actual: "mismatch".into(),
                });
            }
            let phase = metrics::snapshot().get(OpLabel::DecryptPhase).counts;
            if phase.pairings != 10 {
                return Err(Error::CounterMismatch {
                    op: "decrypt_phase".into(),
                    expected: "P=10".into(),
                    actual: format!("P={}", phase.pairings),
                });
            }
            decrypt_s.push("decrypt", wall, phase)?;
        }

        report.rows.push(offline_s.into_row("offline_encrypt", n, n_i, m, cfg.trials));
        report.rows.push(online_s.into_row("online_encrypt", n, n_i, m, cfg.trials));
        report.rows.push(anon_s.into_row("anon_encrypt", n, n_i, m, cfg.trials));
        report.rows.push(reenc_s.into_row("reencrypt", n, n_i, m, cfg.trials));
        report.rows.push(match_s.into_row("match", n, n_i, m, cfg.trials));
        report.rows.push(decrypt_s.into_row("decrypt", n, n_i, m, cfg.trials));
    }
    Ok(report)
}
