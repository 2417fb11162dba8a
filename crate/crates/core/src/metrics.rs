//! Group-operation counters.
//!
//! Every logical group operation (one multiplication or exponentiation of a
//! dual-represented source element counts once, regardless of how many
//! curve operations implement it) is recorded against the innermost active
//! scope. Scopes nest but do not inherit: an operation performed inside
//! `epoch key derivation` while a policy is being encrypted is booked under
//! the derivation, not under the encryption. This mirrors how the cost
//! tables in the literature attribute work to algorithms.
//!
//! Counters are thread-local. Measurement pattern:
//!
//! ```
//! use habe_core::metrics::{self, OpLabel};
//! metrics::reset();
//! // ... run one operation ...
//! let report = metrics::snapshot();
//! let row = report.get(OpLabel::OfflineEncrypt);
//! # let _ = row;
//! ```

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

/// Which algorithm (or internal phase) an operation is attributed to.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum OpLabel {
    SystemSetup,
    OwnerParamSetup,
    AttrKeyGen,
    ReencKeyGen,
    EpochSecret,
    DeriveDk,
    OfflineEncrypt,
    OnlineEncrypt,
    AnonEncrypt,
    /// Construction of the product-one blinder families used by
    /// `AnonEncrypt`. Booked separately so the encryption counters stay
    /// comparable with per-component cost formulas.
    BlinderSetup,
    Reencrypt,
    MatchGate,
    /// Share recovery + key unblinding + message recovery (everything a
    /// user does after a gate has matched).
    DecryptPhase,
    DecryptGate,
    AnonDecrypt,
    /// Operations performed outside any scope.
    Unlabeled,
}

impl OpLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpLabel::SystemSetup => "system_setup",
            OpLabel::OwnerParamSetup => "owner_param_setup",
            OpLabel::AttrKeyGen => "attr_keygen",
            OpLabel::ReencKeyGen => "reenc_keygen",
            OpLabel::EpochSecret => "epoch_secret",
            OpLabel::DeriveDk => "derive_dk",
            OpLabel::OfflineEncrypt => "offline_encrypt",
            OpLabel::OnlineEncrypt => "online_encrypt",
            OpLabel::AnonEncrypt => "anon_encrypt",
            OpLabel::BlinderSetup => "blinder_setup",
            OpLabel::Reencrypt => "reencrypt",
            OpLabel::MatchGate => "match_gate",
            OpLabel::DecryptPhase => "decrypt_phase",
            OpLabel::DecryptGate => "decrypt_gate",
            OpLabel::AnonDecrypt => "anon_decrypt",
            OpLabel::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One kind of countable group operation.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GroupOp {
    /// Source-group multiplication (M_G).
    MulG,
    /// Source-group exponentiation (E_G).
    ExpG,
    /// Target-group multiplication (M_GT).
    MulGt,
    /// Target-group exponentiation (E_GT).
    ExpGt,
    /// Bilinear pairing evaluation (P).
    Pairing,
    /// Uniform random source-group element selection (R_G).
    RandG,
}

/// Operation totals for one label.
#[derive(Clone, Copy, Default, PartialEq, Eq, Debug)]
pub struct OpCounts {
    pub mul_g: u64,
    pub exp_g: u64,
    pub mul_gt: u64,
    pub exp_gt: u64,
    pub pairings: u64,
    pub rand_g: u64,
}

impl OpCounts {
    pub fn is_zero(&self) -> bool {
        *self == OpCounts::default()
    }

    pub fn add(&mut self, other: &OpCounts) {
        self.mul_g += other.mul_g;
        self.exp_g += other.exp_g;
        self.mul_gt += other.mul_gt;
        self.exp_gt += other.exp_gt;
        self.pairings += other.pairings;
        self.rand_g += other.rand_g;
    }

    fn bump(&mut self, op: GroupOp) {
        match op {
            GroupOp::MulG => self.mul_g += 1,
            GroupOp::ExpG => self.exp_g += 1,
            GroupOp::MulGt => self.mul_gt += 1,
            GroupOp::ExpGt => self.exp_gt += 1,
            GroupOp::Pairing => self.pairings += 1,
            GroupOp::RandG => self.rand_g += 1,
        }
    }
}

impl fmt::Display for OpCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "E_G={} E_GT={} M_G={} M_GT={} P={} R_G={}",
            self.exp_g, self.exp_gt, self.mul_g, self.mul_gt, self.pairings, self.rand_g
        )
    }
}

/// Per-label totals accumulated since the last [`reset`].
#[derive(Clone, Default, Debug)]
pub struct MetricsReport {
    rows: BTreeMap<OpLabel, LabelRow>,
}

#[derive(Clone, Copy, Default, Debug)]
pub struct LabelRow {
    pub calls: u64,
    pub counts: OpCounts,
}

impl MetricsReport {
    /// Totals for one label; zero row if the label never ran.
    pub fn get(&self, label: OpLabel) -> LabelRow {
        self.rows.get(&label).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OpLabel, &LabelRow)> {
        self.rows.iter()
    }

    /// Sum over all labels.
    pub fn total(&self) -> OpCounts {
        let mut total = OpCounts::default();
        for row in self.rows.values() {
            total.add(&row.counts);
        }
        total
    }
}

struct MeterState {
    stack: Vec<(OpLabel, OpCounts)>,
    totals: BTreeMap<OpLabel, LabelRow>,
}

thread_local! {
    static METER: RefCell<MeterState> = RefCell::new(MeterState {
        stack: Vec::new(),
        totals: BTreeMap::new(),
    });
}

/// Record one operation against the innermost open scope.
pub(crate) fn record(op: GroupOp) {
    METER.with(|m| {
        let mut m = m.borrow_mut();
        match m.stack.last_mut() {
            Some((_, counts)) => counts.bump(op),
            None => {
                m.totals.entry(OpLabel::Unlabeled).or_default().counts.bump(op);
            }
        }
    });
}

/// Run `f` inside a counting scope for `label`.
pub fn scoped<T>(label: OpLabel, f: impl FnOnce() -> T) -> T {
    METER.with(|m| m.borrow_mut().stack.push((label, OpCounts::default())));
    let guard = ScopeGuard { label };
    let out = f();
    drop(guard);
    out
}

struct ScopeGuard {
    label: OpLabel,
}

impl Drop for ScopeGuard {
    fn drop(&mut self) {
        METER.with(|m| {
            let mut m = m.borrow_mut();
            if let Some((label, counts)) = m.stack.pop() {
                debug_assert_eq!(label, self.label);
                let row = m.totals.entry(label).or_default();
                row.calls += 1;
                row.counts.add(&counts);
            }
        });
    }
}

/// Clear all thread-local totals (open scopes keep counting from zero).
pub fn reset() {
    METER.with(|m| {
        let mut m = m.borrow_mut();
        m.totals.clear();
        for frame in m.stack.iter_mut() {
            frame.1 = OpCounts::default();
        }
    });
}

/// Copy of the per-label totals accumulated since the last [`reset`].
pub fn snapshot() -> MetricsReport {
    METER.with(|m| MetricsReport { rows: m.borrow().totals.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_scope_does_not_leak_into_outer() {
        reset();
        scoped(OpLabel::AnonEncrypt, || {
            record(GroupOp::ExpG);
            scoped(OpLabel::DeriveDk, || {
                record(GroupOp::ExpG);
                record(GroupOp::MulG);
            });
            record(GroupOp::ExpG);
        });
        let report = snapshot();
        let enc = report.get(OpLabel::AnonEncrypt);
        assert_eq!(enc.calls, 1);
        assert_eq!(enc.counts.exp_g, 2);
        assert_eq!(enc.counts.mul_g, 0);
        let dk = report.get(OpLabel::DeriveDk);
        assert_eq!(dk.calls, 1);
        assert_eq!(dk.counts.exp_g, 1);
        assert_eq!(dk.counts.mul_g, 1);
    }

    #[test]
    fn unscoped_ops_land_in_unlabeled() {
        reset();
        record(GroupOp::Pairing);
        let report = snapshot();
        assert_eq!(report.get(OpLabel::Unlabeled).counts.pairings, 1);
        assert_eq!(report.total().pairings, 1);
    }

    #[test]
    fn reset_clears_totals() {
        reset();
        scoped(OpLabel::MatchGate, || record(GroupOp::Pairing));
        reset();
        assert!(snapshot().get(OpLabel::MatchGate).counts.is_zero());
    }
}
