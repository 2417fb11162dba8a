//! The anonymous CP-ABE construction: authority setup, per-owner parameters,
//! attribute keys, online/offline message encryption, hidden-policy
//! encryption of the data decryption key, cloud-side re-encryption, and the
//! match-then-decrypt access procedure.
//!
//! Ciphertexts split in two: message parts produced by devices (which know
//! nothing about policies) and a policy part produced by the data owner,
//! which encrypts an epoch-stamped data decryption key under every AND-gate
//! of the hidden policy. The cloud re-encrypts both parts to the current
//! epoch before publication; epoch secrets are derived from a re-encryption
//! key shared between owner and cloud.

use rand::RngCore;

use crate::algebra::{AttrTag, GroupElem, PairingContext, Scalar, TargetElem};
use crate::error::{Error, Result};
use crate::metrics::{scoped, OpLabel};
use crate::policy::{AttributeList, Policy, Universe};

/// Published system key: five group elements and the pairing-derived value
/// the policy ciphertext exponentiates.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SystemPublicKey {
    pub g: GroupElem,
    pub g1: GroupElem,
    pub g2: GroupElem,
    pub g3: GroupElem,
    pub g4: GroupElem,
    pub y: TargetElem,
}

/// The authority's master scalar.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SystemMasterKey {
    pub y: Scalar,
}

/// Per-owner public parameters.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DataPublicParams {
    pub q0: GroupElem,
    pub pp0: TargetElem,
    pub pp1: GroupElem,
}

/// Per-owner secret parameters.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DataSecretParams {
    pub mk0: Scalar,
    pub mk1: Scalar,
    pub sk: Scalar,
    pub sk1: GroupElem,
}

/// Re-encryption key shared owner -> cloud over a secure channel.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ReencKey {
    pub s_cloud: Scalar,
}

/// Epoch secret S_l, derivable by owner and cloud from the re-encryption
/// key alone.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EpochSecret {
    pub epoch: u64,
    pub s: Scalar,
}

/// Per-attribute components of an attribute secret key.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AttrKeyPart {
    pub d_delta: GroupElem,
    pub d1: GroupElem,
    pub d1_hat: GroupElem,
}

/// Attribute secret key over a list L: 3n+4 group elements, plus the
/// holder's own value selections (needed to pick ciphertext slots during
/// matching and decryption).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AttrSecretKey {
    pub d0: GroupElem,
    pub d0_hat: GroupElem,
    pub d_delta0: GroupElem,
    pub d_delta0_hat: GroupElem,
    pub parts: Vec<AttrKeyPart>,
    pub selections: Vec<usize>,
}

impl AttrSecretKey {
    pub fn attr_count(&self) -> usize {
        self.parts.len()
    }

    /// Key self-test: the matching identity evaluated on the key's own
    /// list must hold for a random probe exponent. Catches any violation of
    /// the share-sum constraint baked in at generation.
    pub fn self_check<R: RngCore>(
        &self,
        ctx: &PairingContext,
        pk: &SystemPublicKey,
        universe: &Universe,
        rng: &mut R,
    ) -> bool {
        let probe = Scalar::random_nonzero(rng);
        let mut key_side = self.d_delta0_hat;
        for part in &self.parts {
            key_side = key_side.mul(&part.d_delta);
        }
        let mut hash_side = GroupElem::identity();
        for (i, &k) in self.selections.iter().enumerate() {
            let h = ctx.hash_attr(AttrTag::Match, (i + 1) as u32, universe.value(i, k));
            hash_side = hash_side.mul(&h);
        }
        let lhs = ctx.pair(&pk.g1.pow(&probe), &key_side);
        let rhs = ctx.pair(&hash_side.pow(&probe), &self.d_delta0);
        lhs.div(&rhs) == pk.y.pow(&probe)
    }
}

/// Offline ciphertext: everything a device can precompute before the
/// message exists. Single use.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OfflineCiphertext {
    pub u0: GroupElem,
    pub u1: GroupElem,
    pub v0: TargetElem,
    consumed: bool,
}

impl OfflineCiphertext {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub(crate) fn from_parts(
        u0: GroupElem,
        u1: GroupElem,
        v0: TargetElem,
        consumed: bool,
    ) -> Self {
        OfflineCiphertext { u0, u1, v0, consumed }
    }

    /// Well-formedness: both message components carry the same randomness.
    pub fn consistency_check(
        &self,
        ctx: &PairingContext,
        pk: &SystemPublicKey,
        pp: &DataPublicParams,
    ) -> bool {
        ctx.pair(&self.u1, &pk.g3) == ctx.pair(&self.u0, &pp.q0)
    }
}

/// Message ciphertext as stored by the cloud (and, after re-encryption,
/// published to users). The signature slot is opaque and optional; this
/// module neither generates nor verifies it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MessageCiphertext {
    pub u0: GroupElem,
    pub u1: GroupElem,
    pub v: TargetElem,
    pub signature: Option<Vec<u8>>,
}

/// One (attribute, value) slot of a gate ciphertext.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GateSlot {
    pub c_delta: GroupElem,
    pub c0: GroupElem,
    pub c0_hat: GroupElem,
}

/// Encryption of the data decryption key under one AND-gate. Slot layout is
/// identical for admitted and non-admitted values, so the gate reveals only
/// the universe shape.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GateCiphertext {
    pub c_tilde: GroupElem,
    pub c_delta: TargetElem,
    pub c0_hat: GroupElem,
    pub c1: GroupElem,
    pub c1_hat: GroupElem,
    /// `slots[i][t]` for attribute i, value t.
    pub slots: Vec<Vec<GateSlot>>,
}

/// One (attribute, value) slot of a blind access policy.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlindSlot {
    pub c0: GroupElem,
    pub c0_hat: GroupElem,
}

/// Blind access policy for one gate: lets the cloud share a fresh random
/// target-group value with exactly the users satisfying the gate, without
/// learning the gate itself.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlindGatePolicy {
    pub c_tilde: TargetElem,
    pub c1: GroupElem,
    pub c1_hat: GroupElem,
    pub slots: Vec<Vec<BlindSlot>>,
}

/// A gate ciphertext together with its blind policy.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GatePair {
    pub gate: GateCiphertext,
    pub blind: BlindGatePolicy,
}

impl GatePair {
    pub fn dims(&self) -> Vec<usize> {
        self.gate.slots.iter().map(|row| row.len()).collect()
    }
}

/// Cloud-resident ciphertext for one object: device message parts plus the
/// owner's policy part, both in their original (epoch-0) form. Never
/// published; the cloud publishes re-encrypted forms only.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CloudCiphertext {
    pub object_id: String,
    pub messages: Vec<MessageCiphertext>,
    pub gates: Vec<GatePair>,
}

/// Re-encrypted, epoch-stamped ciphertext published for data users.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct UserCiphertext {
    pub epoch: u64,
    pub messages: Vec<MessageCiphertext>,
    pub gates: Vec<GatePair>,
}

/// Epoch-stamped data decryption key.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DataDecryptionKey {
    pub elem: GroupElem,
    pub epoch: u64,
}

/// Result of a successful decryption.
#[derive(Clone, Debug)]
pub struct Decryption {
    /// Index of the first gate that matched.
    pub gate_index: usize,
    pub dk: DataDecryptionKey,
    /// One recovered session element per message part.
    pub messages: Vec<TargetElem>,
}

/// Generate the system key pair.
pub fn system_setup<R: RngCore>(
    ctx: &PairingContext,
    rng: &mut R,
) -> (SystemPublicKey, SystemMasterKey) {
    scoped(OpLabel::SystemSetup, || {
        let y = Scalar::random_nonzero(rng);
        let g1 = GroupElem::random(ctx, rng);
        let g2 = GroupElem::random(ctx, rng);
        let g3 = GroupElem::random(ctx, rng);
        let g4 = GroupElem::random(ctx, rng);
        let big_y = ctx.pair(&g1, &g2).pow(&y);
        (
            SystemPublicKey { g: ctx.generator(), g1, g2, g3, g4, y: big_y },
            SystemMasterKey { y },
        )
    })
}

/// Generate one data owner's parameter pair.
pub fn owner_param_setup<R: RngCore>(
    pk: &SystemPublicKey,
    ctx: &PairingContext,
    rng: &mut R,
) -> (DataPublicParams, DataSecretParams) {
    scoped(OpLabel::OwnerParamSetup, || {
        let mk0 = Scalar::random_nonzero(rng);
        let mk1 = Scalar::random_nonzero(rng);
        let sk = Scalar::random_nonzero(rng);
        let pp = DataPublicParams {
            q0: pk.g3.pow(&sk),
            pp0: ctx.pair(&pk.g3, &pk.g4).pow(&mk0),
            pp1: pk.g3.pow(&mk1),
        };
        let sp = DataSecretParams { mk0, mk1, sk, sk1: pk.g4.pow(&mk0) };
        (pp, sp)
    })
}

impl DataSecretParams {
    /// Cross-check against the published parameters.
    pub fn matches(&self, ctx: &PairingContext, pk: &SystemPublicKey, pp: &DataPublicParams) -> bool {
        pp.q0 == pk.g3.pow(&self.sk)
            && pp.pp1 == pk.g3.pow(&self.mk1)
            && self.sk1 == pk.g4.pow(&self.mk0)
            && ctx.pair(&pk.g3, &self.sk1) == pp.pp0
    }
}

/// Generate an attribute secret key for the list `L`.
pub fn attr_keygen<R: RngCore>(
    ctx: &PairingContext,
    pk: &SystemPublicKey,
    mk: &SystemMasterKey,
    universe: &Universe,
    list: &AttributeList,
    rng: &mut R,
) -> Result<AttrSecretKey> {
    let violations = list.validate(universe);
    if !violations.is_empty() {
        return Err(Error::invalid(
            "attribute list",
            violations.iter().map(|v| v.to_string()).collect(),
        ));
    }
    let n = universe.attr_count();
    Ok(scoped(OpLabel::AttrKeyGen, || {
        // Shares r_i with sum y: sample n-1 freely, fix the last.
        let mut shares: Vec<Scalar> = (0..n - 1).map(|_| Scalar::random(rng)).collect();
        let mut sum = Scalar::zero();
        for s in &shares {
            sum = sum.add(s);
        }
        shares.push(mk.y.sub(&sum));

        let hat_shares: Vec<Scalar> = (0..n).map(|_| Scalar::random(rng)).collect();
        let mut hat_sum = Scalar::zero();
        for s in &hat_shares {
            hat_sum = hat_sum.add(s);
        }

        let r = Scalar::random(rng);
        let lambda = Scalar::random(rng);
        let lambda_hat = Scalar::random(rng);

        let parts = (0..n)
            .map(|i| {
                let value = universe.value(i, list.selections[i]);
                let idx = (i + 1) as u32;
                AttrKeyPart {
                    d_delta: pk
                        .g2
                        .pow(&hat_shares[i])
                        .mul(&ctx.hash_attr(AttrTag::Match, idx, value).pow(&r)),
                    d1: pk
                        .g1
                        .pow(&shares[i])
                        .mul(&ctx.hash_attr(AttrTag::Plain, idx, value).pow(&lambda)),
                    d1_hat: pk
                        .g2
                        .pow(&shares[i])
                        .mul(&ctx.hash_attr(AttrTag::Hat, idx, value).pow(&lambda_hat)),
                }
            })
            .collect();

        AttrSecretKey {
            d0: pk.g2.pow(&lambda),
            d0_hat: pk.g1.pow(&lambda_hat),
            d_delta0: pk.g1.pow(&r),
            d_delta0_hat: pk.g2.pow(&mk.y.sub(&hat_sum)),
            parts,
            selections: list.selections.clone(),
        }
    }))
}

/// Draw a fresh re-encryption key.
pub fn reenc_keygen<R: RngCore>(rng: &mut R) -> ReencKey {
    scoped(OpLabel::ReencKeyGen, || ReencKey { s_cloud: Scalar::random_nonzero(rng) })
}

/// Epoch secret S_l, identical on the owner and cloud sides.
pub fn epoch_secret(ctx: &PairingContext, rk: &ReencKey, epoch: u64) -> EpochSecret {
    scoped(OpLabel::EpochSecret, || EpochSecret {
        epoch,
        s: ctx.hash_to_scalar(&crate::algebra::encode_epoch_input(&rk.s_cloud, epoch)),
    })
}

/// Owner-side derivation of the epoch-stamped data decryption key.
pub fn derive_dk(
    pp: &DataPublicParams,
    sp: &DataSecretParams,
    secret: &EpochSecret,
) -> DataDecryptionKey {
    scoped(OpLabel::DeriveDk, || DataDecryptionKey {
        elem: sp.sk1.mul(&pp.pp1.pow(&sp.sk.add(&secret.s))),
        epoch: secret.epoch,
    })
}

/// Device-side precomputation, runnable before any message exists.
pub fn offline_encrypt<R: RngCore>(
    pk: &SystemPublicKey,
    pp: &DataPublicParams,
    rng: &mut R,
) -> OfflineCiphertext {
    scoped(OpLabel::OfflineEncrypt, || {
        let r_d = Scalar::random_nonzero(rng);
        OfflineCiphertext {
            u0: pk.g3.pow(&r_d),
            u1: pp.q0.pow(&r_d),
            v0: pp.pp0.pow(&r_d),
            consumed: false,
        }
    })
}

/// Device-side completion once the message is known: one target-group
/// multiplication. Consumes the offline ciphertext.
pub fn online_encrypt(
    message: &TargetElem,
    offline: &mut OfflineCiphertext,
) -> Result<MessageCiphertext> {
    if offline.consumed {
        return Err(Error::OfflineConsumed);
    }
    offline.consumed = true;
    Ok(scoped(OpLabel::OnlineEncrypt, || MessageCiphertext {
        u0: offline.u0,
        u1: offline.u1,
        v: message.mul(&offline.v0),
        signature: None,
    }))
}

/// A family of uniform group elements whose product is the identity:
/// sample all but the last freely, set the last to the inverse of their
/// product.
pub(crate) fn blinder_family<R: RngCore>(
    ctx: &PairingContext,
    n: usize,
    rng: &mut R,
) -> Vec<GroupElem> {
    scoped(OpLabel::BlinderSetup, || {
        let mut family: Vec<GroupElem> = (0..n - 1).map(|_| GroupElem::random(ctx, rng)).collect();
        let mut product = GroupElem::identity();
        for elem in &family {
            product = product.mul(elem);
        }
        family.push(product.inverse());
        family
    })
}

/// Owner-side hidden-policy encryption: produces, per gate, the gate
/// ciphertext (the epoch-0 decryption key blinded under the gate) and the
/// blind access policy the cloud later uses for re-encryption.
pub fn anon_encrypt<R: RngCore>(
    ctx: &PairingContext,
    pk: &SystemPublicKey,
    pp: &DataPublicParams,
    sp: &DataSecretParams,
    rk: &ReencKey,
    universe: &Universe,
    policy: &Policy,
    rng: &mut R,
) -> Result<Vec<GatePair>> {
    let violations = policy.validate(universe);
    if !violations.is_empty() {
        return Err(Error::invalid("policy", violations.iter().map(|v| v.to_string()).collect()));
    }
    let dk0 = derive_dk(pp, sp, &epoch_secret(ctx, rk, 0));
    let n = universe.attr_count();

    Ok(scoped(OpLabel::AnonEncrypt, || {
        let mut out = Vec::with_capacity(policy.gates.len());
        for gate in &policy.gates {
            let s1 = Scalar::random_nonzero(rng);
            let s1_prime = Scalar::random_nonzero(rng);
            let s1_dprime = Scalar::random_nonzero(rng);
            let s2 = Scalar::random_nonzero(rng);
            let s2_dprime = Scalar::random_nonzero(rng);

            let sigma_match = blinder_family(ctx, n, rng);
            let sigma_plain = blinder_family(ctx, n, rng);
            let sigma_hat = blinder_family(ctx, n, rng);
            let sigma_blind_plain = blinder_family(ctx, n, rng);
            let sigma_blind_hat = blinder_family(ctx, n, rng);

            let mut slots = Vec::with_capacity(n);
            let mut blind_slots = Vec::with_capacity(n);
            for i in 0..n {
                let n_i = universe.value_count(i);
                let mut row = Vec::with_capacity(n_i);
                let mut blind_row = Vec::with_capacity(n_i);
                for t in 0..n_i {
                    if gate.clauses[i].admits(t) {
                        let idx = (i + 1) as u32;
                        let value = universe.value(i, t);
                        let h_match = ctx.hash_attr(AttrTag::Match, idx, value);
                        let h_plain = ctx.hash_attr(AttrTag::Plain, idx, value);
                        let h_hat = ctx.hash_attr(AttrTag::Hat, idx, value);
                        row.push(GateSlot {
                            c_delta: sigma_match[i].mul(&h_match.pow(&s1_prime)),
                            c0: sigma_plain[i].mul(&h_plain.pow(&s1_dprime)),
                            c0_hat: sigma_hat[i].mul(&h_hat.pow(&s1.sub(&s1_dprime))),
                        });
                        blind_row.push(BlindSlot {
                            c0: sigma_blind_plain[i].mul(&h_plain.pow(&s2_dprime)),
                            c0_hat: sigma_blind_hat[i].mul(&h_hat.pow(&s2.sub(&s2_dprime))),
                        });
                    } else {
                        row.push(GateSlot {
                            c_delta: GroupElem::random(ctx, rng),
                            c0: GroupElem::random(ctx, rng),
                            c0_hat: GroupElem::random(ctx, rng),
                        });
                        blind_row.push(BlindSlot {
                            c0: GroupElem::random(ctx, rng),
                            c0_hat: GroupElem::random(ctx, rng),
                        });
                    }
                }
                slots.push(row);
                blind_slots.push(blind_row);
            }

            let y_s1 = pk.y.pow(&s1);
            out.push(GatePair {
                gate: GateCiphertext {
                    c_tilde: dk0.elem.mul(&ctx.map_target_to_group(&y_s1)),
                    c_delta: pk.y.pow(&s1_prime),
                    c0_hat: pk.g1.pow(&s1_prime),
                    c1: pk.g2.pow(&s1_dprime),
                    c1_hat: pk.g1.pow(&s1.sub(&s1_dprime)),
                    slots,
                },
                blind: BlindGatePolicy {
                    c_tilde: pk.y.pow(&s2),
                    c1: pk.g2.pow(&s2_dprime),
                    c1_hat: pk.g1.pow(&s2.sub(&s2_dprime)),
                    slots: blind_slots,
                },
            });
        }
        out
    }))
}

/// Cloud-side re-encryption of one gate pair to epoch `epoch`. The gate's
/// matching components are copied unchanged; the blinded key picks up a
/// fresh mask derived from a random target value shared via the blind
/// policy, plus the epoch-rotation factor.
pub fn reencrypt_gate<R: RngCore>(
    ctx: &PairingContext,
    pk: &SystemPublicKey,
    pp: &DataPublicParams,
    rk: &ReencKey,
    epoch: u64,
    pair: &GatePair,
    rng: &mut R,
) -> Result<GatePair> {
    if epoch == 0 {
        return Err(Error::InvalidEpoch { requested: 0, reason: "published epochs start at 1".into() });
    }
    let s_l = epoch_secret(ctx, rk, epoch);
    let s_0 = epoch_secret(ctx, rk, 0);
    Ok(scoped(OpLabel::Reencrypt, || reencrypt_gate_inner(ctx, pk, pp, &s_l, &s_0, pair, rng)))
}

fn reencrypt_gate_inner<R: RngCore>(
    ctx: &PairingContext,
    pk: &SystemPublicKey,
    pp: &DataPublicParams,
    s_l: &EpochSecret,
    s_0: &EpochSecret,
    pair: &GatePair,
    rng: &mut R,
) -> GatePair {
    let r_w = Scalar::random_nonzero(rng);
    let r_w_dprime = Scalar::random_nonzero(rng);
    let y_rw = pk.y.pow(&r_w);

    let blind = BlindGatePolicy {
        c_tilde: y_rw.mul(&pair.blind.c_tilde.pow(&r_w_dprime)),
        c1: pair.blind.c1.pow(&r_w_dprime),
        c1_hat: pair.blind.c1_hat.pow(&r_w_dprime),
        slots: pair
            .blind
            .slots
            .iter()
            .map(|row| {
                row.iter()
                    .map(|slot| BlindSlot {
                        c0: slot.c0.pow(&r_w_dprime),
                        c0_hat: slot.c0_hat.pow(&r_w_dprime),
                    })
                    .collect()
            })
            .collect(),
    };

    let rotation = pp.pp1.pow(&s_l.s.sub(&s_0.s));
    let gate = GateCiphertext {
        c_tilde: ctx
            .map_target_to_group(&y_rw)
            .mul(&rotation)
            .mul(&pair.gate.c_tilde),
        c_delta: pair.gate.c_delta,
        c0_hat: pair.gate.c0_hat,
        c1: pair.gate.c1,
        c1_hat: pair.gate.c1_hat,
        slots: pair.gate.slots.clone(),
    };

    GatePair { gate, blind }
}

/// Cloud-side re-encryption of a stored ciphertext to epoch `epoch`
/// (always from the stored epoch-0 form, never chained).
pub fn reencrypt<R: RngCore>(
    ctx: &PairingContext,
    pk: &SystemPublicKey,
    pp: &DataPublicParams,
    rk: &ReencKey,
    epoch: u64,
    cloud: &CloudCiphertext,
    rng: &mut R,
) -> Result<UserCiphertext> {
    if epoch == 0 {
        return Err(Error::InvalidEpoch { requested: 0, reason: "published epochs start at 1".into() });
    }
    let s_l = epoch_secret(ctx, rk, epoch);
    let s_0 = epoch_secret(ctx, rk, 0);
    Ok(scoped(OpLabel::Reencrypt, || {
        let messages = cloud
            .messages
            .iter()
            .map(|m| {
                let r_prime = Scalar::random_nonzero(rng);
                let u0 = m.u0.mul(&pk.g3.pow(&r_prime));
                let u1 = m.u1.mul(&pp.q0.pow(&r_prime)).mul(&u0.pow(&s_l.s));
                MessageCiphertext {
                    u0,
                    u1,
                    v: m.v.mul(&pp.pp0.pow(&r_prime)),
                    signature: m.signature.clone(),
                }
            })
            .collect();
        let gates = cloud
            .gates
            .iter()
            .map(|pair| reencrypt_gate_inner(ctx, pk, pp, &s_l, &s_0, pair, rng))
            .collect();
        UserCiphertext { epoch, messages, gates }
    }))
}

fn check_key_gate_dims(sk: &AttrSecretKey, dims: &[usize]) -> Result<()> {
    if sk.parts.len() != dims.len() {
        return Err(Error::UniverseMismatch(format!(
            "key covers {} attributes, gate covers {}",
            sk.parts.len(),
            dims.len()
        )));
    }
    for (i, (&k, &n_i)) in sk.selections.iter().zip(dims).enumerate() {
        if k >= n_i {
            return Err(Error::UniverseMismatch(format!(
                "key selects value {} of attribute {}, gate has only {} values",
                k + 1,
                i + 1,
                n_i
            )));
        }
    }
    Ok(())
}

/// Matching phase for one gate: two pairings decide whether the key's list
/// satisfies the (hidden) gate.
pub fn match_gate(ctx: &PairingContext, sk: &AttrSecretKey, gate: &GateCiphertext) -> Result<bool> {
    let dims: Vec<usize> = gate.slots.iter().map(|row| row.len()).collect();
    check_key_gate_dims(sk, &dims)?;
    Ok(scoped(OpLabel::MatchGate, || match_gate_inner(ctx, sk, gate)))
}

fn match_gate_inner(ctx: &PairingContext, sk: &AttrSecretKey, gate: &GateCiphertext) -> bool {
    let mut key_side = sk.d_delta0_hat;
    for part in &sk.parts {
        key_side = key_side.mul(&part.d_delta);
    }
    let mut ct_side = gate.slots[0][sk.selections[0]].c_delta;
    for (i, &k) in sk.selections.iter().enumerate().skip(1) {
        ct_side = ct_side.mul(&gate.slots[i][k].c_delta);
    }
    let lhs = ctx.pair(&gate.c0_hat, &key_side);
    let rhs = ctx.pair(&ct_side, &sk.d_delta0);
    lhs == gate.c_delta.mul(&rhs)
}

/// Decryption phase, key-recovery half: recovers the cloud's shared value
/// through the blind policy (four pairings), the owner's gate mask (four
/// pairings), and unblinds the data decryption key.
///
/// Precondition: [`match_gate`] returned true for this gate. A non-matching
/// key yields a uniformly wrong key, not an error.
pub fn decrypt_gate(
    ctx: &PairingContext,
    sk: &AttrSecretKey,
    pair: &GatePair,
    epoch: u64,
) -> Result<DataDecryptionKey> {
    check_key_gate_dims(sk, &pair.dims())?;
    Ok(scoped(OpLabel::DecryptGate, || DataDecryptionKey {
        elem: decrypt_gate_inner(ctx, sk, pair),
        epoch,
    }))
}

fn decrypt_gate_inner(ctx: &PairingContext, sk: &AttrSecretKey, pair: &GatePair) -> GroupElem {
    let mut key_d1 = sk.parts[0].d1;
    let mut key_d1_hat = sk.parts[0].d1_hat;
    for part in &sk.parts[1..] {
        key_d1 = key_d1.mul(&part.d1);
        key_d1_hat = key_d1_hat.mul(&part.d1_hat);
    }

    let product = |select: &dyn Fn(usize, usize) -> GroupElem| {
        let mut acc = select(0, sk.selections[0]);
        for (i, &k) in sk.selections.iter().enumerate().skip(1) {
            acc = acc.mul(&select(i, k));
        }
        acc
    };

    // Shared-value recovery via the blind policy.
    let blind = &pair.blind;
    let blind_c0 = product(&|i, k| blind.slots[i][k].c0);
    let blind_c0_hat = product(&|i, k| blind.slots[i][k].c0_hat);
    let share = blind
        .c_tilde
        .mul(&ctx.pair(&blind_c0, &sk.d0).div(&ctx.pair(&blind.c1, &key_d1)))
        .mul(&ctx.pair(&blind_c0_hat, &sk.d0_hat).div(&ctx.pair(&blind.c1_hat, &key_d1_hat)));

    // Gate-mask recovery.
    let gate = &pair.gate;
    let gate_c0 = product(&|i, k| gate.slots[i][k].c0);
    let gate_c0_hat = product(&|i, k| gate.slots[i][k].c0_hat);
    let y_s1 = ctx
        .pair(&gate.c1, &key_d1)
        .div(&ctx.pair(&gate_c0, &sk.d0))
        .mul(&ctx.pair(&gate.c1_hat, &key_d1_hat).div(&ctx.pair(&gate_c0_hat, &sk.d0_hat)));

    // Unblinding. An identity share means the gate has not been
    // re-encrypted (epoch-0 form): no cloud mask to strip.
    let cloud_mask = if share.is_identity() {
        GroupElem::identity()
    } else {
        ctx.map_target_to_group(&share)
    };
    gate.c_tilde.div(&cloud_mask.mul(&ctx.map_target_to_group(&y_s1)))
}

/// Message recovery from one message part under an epoch-matched key
/// (two pairings).
pub fn recover_message(
    ctx: &PairingContext,
    pp: &DataPublicParams,
    msg: &MessageCiphertext,
    dk: &DataDecryptionKey,
) -> TargetElem {
    msg.v
        .mul(&ctx.pair(&pp.pp1, &msg.u1))
        .div(&ctx.pair(&msg.u0, &dk.elem))
}

/// Full user-side decryption: match gates in order, decrypt through the
/// first match, recover every message part. Returns the access-denied
/// rejection if no gate matches.
pub fn anon_decrypt(
    ctx: &PairingContext,
    pp: &DataPublicParams,
    uct: &UserCiphertext,
    sk: &AttrSecretKey,
) -> Result<Decryption> {
    scoped(OpLabel::AnonDecrypt, || {
        for (j, pair) in uct.gates.iter().enumerate() {
            check_key_gate_dims(sk, &pair.dims())?;
            if scoped(OpLabel::MatchGate, || match_gate_inner(ctx, sk, &pair.gate)) {
                return Ok(scoped(OpLabel::DecryptPhase, || {
                    let dk = DataDecryptionKey {
                        elem: decrypt_gate_inner(ctx, sk, pair),
                        epoch: uct.epoch,
                    };
                    let messages = uct
                        .messages
                        .iter()
                        .map(|m| recover_message(ctx, pp, m, &dk))
                        .collect();
                    Decryption { gate_index: j, dk, messages }
                }));
            }
        }
        Err(Error::AccessDenied)
    })
}
