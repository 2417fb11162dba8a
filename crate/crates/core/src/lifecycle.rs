//! Access-policy update orchestration over stored cloud ciphertexts:
//! policy deletion (revocation, epoch bump), policy addition (grant, no
//! epoch bump), expiration sweeps, and epoch management.
//!
//! The cloud stores every object in its epoch-0 form and publishes only
//! re-encrypted forms with epoch >= 1. Deletions re-encrypt the whole
//! object at the next epoch so that revoked users' cached keys go stale;
//! additions re-encrypt just the new gate pair at the current epoch and
//! append it, leaving previously published bytes untouched.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algebra::PairingContext;
use crate::error::{Error, Result};
use crate::scheme::{
    reencrypt, reencrypt_gate, CloudCiphertext, DataPublicParams, GatePair, MessageCiphertext,
    ReencKey, SystemPublicKey, UserCiphertext,
};

/// Everything the cloud needs to re-encrypt: public material plus the
/// owner's re-encryption key.
pub struct ReencryptionContext<'a> {
    pub ctx: &'a PairingContext,
    pub pk: &'a SystemPublicKey,
    pub pp: &'a DataPublicParams,
    pub rk: &'a ReencKey,
}

/// Per-gate bookkeeping: a stable id and an optional expiration instant
/// (virtual seconds).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct GateMeta {
    pub gate_id: u64,
    pub expires_at: Option<u64>,
}

/// An owner-issued update request.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum UpdateKind {
    Delete { gate_id: u64 },
    Add,
    ExpireSweep { now: u64 },
}

/// Append-only audit record of one applied update.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub seq: u64,
    pub at: u64,
    pub action: String,
    pub epoch_after: u64,
}

/// One object as stored by the cloud: epoch-0 message and policy parts,
/// gate metadata, the current epoch, and the currently published form.
#[derive(Debug)]
pub struct StoredObject {
    pub object_id: String,
    pub messages: Vec<MessageCiphertext>,
    pub gates: Vec<(GateMeta, GatePair)>,
    pub current_epoch: u64,
    pub published: Option<UserCiphertext>,
    pub log: Vec<UpdateRecord>,
    next_gate_id: u64,
}

impl StoredObject {
    pub fn new(object_id: impl Into<String>) -> Self {
        StoredObject {
            object_id: object_id.into(),
            messages: Vec::new(),
            gates: Vec::new(),
            current_epoch: 0,
            published: None,
            log: Vec::new(),
            next_gate_id: 1,
        }
    }

    pub fn next_gate_id(&self) -> u64 {
        self.next_gate_id
    }

    /// Rebuild an object from persisted state.
    #[allow(clippy::too_many_arguments)]
    pub fn restore(
        object_id: String,
        messages: Vec<MessageCiphertext>,
        gates: Vec<(GateMeta, GatePair)>,
        current_epoch: u64,
        published: Option<UserCiphertext>,
        log: Vec<UpdateRecord>,
        next_gate_id: u64,
    ) -> Self {
        StoredObject { object_id, messages, gates, current_epoch, published, log, next_gate_id }
    }

    pub fn gate_ids(&self) -> Vec<u64> {
        self.gates.iter().map(|(meta, _)| meta.gate_id).collect()
    }

    fn record(&mut self, at: u64, action: String) {
        let seq = self.log.len() as u64;
        self.log.push(UpdateRecord { seq, at, action, epoch_after: self.current_epoch });
    }

    /// Epoch-0 view handed to the re-encryption algorithm.
    fn cloud_view(&self) -> CloudCiphertext {
        CloudCiphertext {
            object_id: self.object_id.clone(),
            messages: self.messages.clone(),
            gates: self.gates.iter().map(|(_, pair)| pair.clone()).collect(),
        }
    }

    /// Store one device message part.
    pub fn add_message(&mut self, at: u64, ct: MessageCiphertext) {
        self.messages.push(ct);
        self.record(at, "add_message".into());
    }

    /// Install the owner's policy part. Only valid once; updates afterwards
    /// go through delete/add.
    pub fn set_policy(
        &mut self,
        at: u64,
        gates: Vec<GatePair>,
        expirations: Vec<Option<u64>>,
    ) -> Result<Vec<u64>> {
        if !self.gates.is_empty() {
            return Err(Error::ProtocolOrder(format!(
                "object `{}` already has a policy; update it instead",
                self.object_id
            )));
        }
        if gates.is_empty() {
            return Err(Error::invalid("policy", vec!["no gates".into()]));
        }
        if expirations.len() != gates.len() {
            return Err(Error::invalid(
                "policy",
                vec![format!("{} gates but {} expirations", gates.len(), expirations.len())],
            ));
        }
        let mut ids = Vec::with_capacity(gates.len());
        for (pair, expires_at) in gates.into_iter().zip(expirations) {
            let gate_id = self.next_gate_id;
            self.next_gate_id += 1;
            ids.push(gate_id);
            self.gates.push((GateMeta { gate_id, expires_at }, pair));
        }
        self.record(at, format!("set_policy gates={ids:?}"));
        Ok(ids)
    }

    /// Re-encrypt the stored epoch-0 form at the next epoch and publish it,
    /// atomically replacing the previous publication.
    pub fn publish<R: RngCore>(
        &mut self,
        cx: &ReencryptionContext,
        at: u64,
        rng: &mut R,
    ) -> Result<&UserCiphertext> {
        if self.gates.is_empty() {
            return Err(Error::ProtocolOrder(format!(
                "object `{}` has no policy to publish under",
                self.object_id
            )));
        }
        let epoch = self.current_epoch + 1;
        let uct = reencrypt(cx.ctx, cx.pk, cx.pp, cx.rk, epoch, &self.cloud_view(), rng)?;
        self.current_epoch = epoch;
        self.published = Some(uct);
        self.record(at, format!("publish epoch={epoch}"));
        Ok(self.published.as_ref().unwrap())
    }

    /// Delete one gate and republish at the next epoch. Deleting the last
    /// gate takes the object dark: nothing stays published.
    pub fn delete_gate<R: RngCore>(
        &mut self,
        cx: &ReencryptionContext,
        at: u64,
        gate_id: u64,
        rng: &mut R,
    ) -> Result<Option<&UserCiphertext>> {
        let index = self
            .gates
            .iter()
            .position(|(meta, _)| meta.gate_id == gate_id)
            .ok_or(Error::UnknownGate { object: self.object_id.clone(), gate: gate_id })?;
        self.gates.remove(index);
        self.bump_after_removal(cx, at, format!("delete gate={gate_id}"), rng)?;
        Ok(self.published.as_ref())
    }

    fn bump_after_removal<R: RngCore>(
        &mut self,
        cx: &ReencryptionContext,
        at: u64,
        action: String,
        rng: &mut R,
    ) -> Result<()> {
        let epoch = self.current_epoch + 1;
        if self.gates.is_empty() {
            self.current_epoch = epoch;
            self.published = None;
            self.record(at, format!("{action} -> unpublished epoch={epoch}"));
            return Ok(());
        }
        let uct = reencrypt(cx.ctx, cx.pk, cx.pp, cx.rk, epoch, &self.cloud_view(), rng)?;
        self.current_epoch = epoch;
        self.published = Some(uct);
        self.record(at, format!("{action} -> republished epoch={epoch}"));
        Ok(())
    }

    /// Append a freshly encrypted gate pair. The new pair is re-encrypted
    /// to the current epoch and appended to the published ciphertext;
    /// previously published components stay byte-identical and the epoch
    /// does not change.
    pub fn add_gate<R: RngCore>(
        &mut self,
        cx: &ReencryptionContext,
        at: u64,
        pair: GatePair,
        expires_at: Option<u64>,
        rng: &mut R,
    ) -> Result<Option<&UserCiphertext>> {
        if let Some((_, existing)) = self.gates.first() {
            if existing.dims() != pair.dims() {
                return Err(Error::UniverseMismatch(format!(
                    "new gate dims {:?} do not match object dims {:?}",
                    pair.dims(),
                    existing.dims()
                )));
            }
        }
        let gate_id = self.next_gate_id;
        self.next_gate_id += 1;

        if self.published.is_some() {
            let reenc = reencrypt_gate(cx.ctx, cx.pk, cx.pp, cx.rk, self.current_epoch, &pair, rng)?;
            let published = self.published.as_mut().unwrap();
            published.gates.push(reenc);
        }
        self.gates.push((GateMeta { gate_id, expires_at }, pair));
        self.record(at, format!("add gate={gate_id}"));
        Ok(self.published.as_ref())
    }

    /// Delete every gate whose expiration has been reached. Batched: one
    /// epoch bump covers all deletions of the sweep. Idempotent for a fixed
    /// instant.
    pub fn sweep_expirations<R: RngCore>(
        &mut self,
        cx: &ReencryptionContext,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<u64>> {
        let expired: Vec<u64> = self
            .gates
            .iter()
            .filter(|(meta, _)| meta.expires_at.is_some_and(|t| t <= now))
            .map(|(meta, _)| meta.gate_id)
            .collect();
        if expired.is_empty() {
            return Ok(expired);
        }
        self.gates.retain(|(meta, _)| !meta.expires_at.is_some_and(|t| t <= now));
        self.bump_after_removal(cx, now, format!("sweep now={now} deleted={expired:?}"), rng)?;
        Ok(expired)
    }
}
