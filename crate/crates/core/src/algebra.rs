//! Symmetric-pairing group abstraction.
//!
//! The construction is written for a symmetric pairing e: G x G -> G_T in
//! which the same element may appear on either side of a pairing. Production
//! curves are asymmetric, so a [`GroupElem`] carries the same discrete
//! logarithm in both source groups of BLS12-381: every element is
//! `(g1^a, g2^a)` for the fixed standard generators, all group operations
//! keep the halves in sync, and `pair(x, y)` evaluates the asymmetric
//! pairing on `(x.left, y.right)`. This makes `pair` symmetric and bilinear
//! exactly as the construction requires, at the cost of doubled element
//! size.
//!
//! Hash outputs (`H`, `F`) are generator powers derived from a
//! hash-to-scalar, which keeps the two halves consistent. That trades the
//! random-oracle structure of a real hash-to-curve for correctness of the
//! symmetric interface; acceptable here, where the artifact targets
//! functional behaviour rather than production hardness.

use ark_bls12_381::{Bls12_381, Fr, G1Projective, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{CurveGroup, PrimeGroup};
use ark_ff::field_hashers::{DefaultFieldHasher, HashToField};
use ark_ff::{BigInteger, Field, PrimeField, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::RngCore;
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::metrics::{record, GroupOp};

/// Compressed byte length of the G1 half of a [`GroupElem`].
pub const G1_BYTES: usize = 48;
/// Compressed byte length of the G2 half of a [`GroupElem`].
pub const G2_BYTES: usize = 96;
/// Serialized byte length of one logical source-group element (both halves).
pub const GROUP_ELEM_BYTES: usize = G1_BYTES + G2_BYTES;
/// Serialized byte length of a target-group element.
pub const TARGET_ELEM_BYTES: usize = 576;
/// Serialized byte length of a scalar (big-endian, fixed width).
pub const SCALAR_BYTES: usize = 32;

const DST_HASH_TO_GROUP: &[u8] = b"habe/hash-to-group/v1";
const DST_HASH_TO_SCALAR: &[u8] = b"habe/hash-to-scalar/v1";
const DST_GT_TO_GROUP: &[u8] = b"habe/gt-to-group/v1";

/// An element of Z_p, p the prime order of the pairing groups.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Scalar(pub(crate) Fr);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(Fr::zero())
    }

    pub fn one() -> Self {
        Scalar(Fr::ONE)
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(Fr::from(v))
    }

    /// Uniform draw from Z_p.
    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        Scalar(random_fr(rng))
    }

    /// Uniform draw from Z_p^* (rejection sampling).
    pub fn random_nonzero<R: RngCore>(rng: &mut R) -> Self {
        loop {
            let s = random_fr(rng);
            if !s.is_zero() {
                return Scalar(s);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 + other.0)
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 - other.0)
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 * other.0)
    }

    pub fn neg(&self) -> Scalar {
        Scalar(-self.0)
    }

    pub fn inverse(&self) -> Option<Scalar> {
        self.0.inverse().map(Scalar)
    }

    /// Canonical fixed-width big-endian encoding.
    pub fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        let mut out = [0u8; SCALAR_BYTES];
        let bytes = self.0.into_bigint().to_bytes_be();
        out[SCALAR_BYTES - bytes.len()..].copy_from_slice(&bytes);
        out
    }

    /// Rejects encodings that are not reduced mod p.
    pub fn from_bytes(bytes: &[u8]) -> Result<Scalar> {
        if bytes.len() != SCALAR_BYTES {
            return Err(Error::Decode(format!(
                "scalar must be {SCALAR_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let mut limbs = [0u64; 4];
        for (i, chunk) in bytes.rchunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[8 - chunk.len()..].copy_from_slice(chunk);
            limbs[i] = u64::from_be_bytes(buf);
        }
        Fr::from_bigint(ark_ff::BigInt(limbs))
            .map(Scalar)
            .ok_or_else(|| Error::Decode("scalar not reduced mod group order".into()))
    }

    /// Value mapped to [0, 1) as an f64; used by uniformity smoke checks.
    pub fn as_unit_f64(&self) -> f64 {
        let limbs = self.0.into_bigint().0;
        let mut value = 0.0f64;
        for limb in limbs.iter().rev() {
            value = value * 2.0f64.powi(64) + *limb as f64;
        }
        let modulus = Fr::MODULUS.0;
        let mut p = 0.0f64;
        for limb in modulus.iter().rev() {
            p = p * 2.0f64.powi(64) + *limb as f64;
        }
        value / p
    }
}

fn random_fr<R: RngCore>(rng: &mut R) -> Fr {
    // Uniform via 64 bytes reduced mod p; bias is ~2^-256.
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    Fr::from_be_bytes_mod_order(&wide)
}

/// An element of the (emulated) symmetric source group G.
///
/// Both halves always carry the same discrete logarithm with respect to the
/// standard generators.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct GroupElem {
    pub(crate) left: G1Projective,
    pub(crate) right: G2Projective,
}

impl GroupElem {
    pub fn identity() -> Self {
        GroupElem { left: G1Projective::zero(), right: G2Projective::zero() }
    }

    pub fn is_identity(&self) -> bool {
        self.left.is_zero()
    }

    /// Group operation (written multiplicatively). Counts one M_G.
    pub fn mul(&self, other: &GroupElem) -> GroupElem {
        record(GroupOp::MulG);
        GroupElem { left: self.left + other.left, right: self.right + other.right }
    }

    /// Exponentiation. Counts one E_G.
    pub fn pow(&self, exp: &Scalar) -> GroupElem {
        record(GroupOp::ExpG);
        self.pow_uncounted(exp)
    }

    pub(crate) fn pow_uncounted(&self, exp: &Scalar) -> GroupElem {
        GroupElem { left: self.left * exp.0, right: self.right * exp.0 }
    }

    pub fn inverse(&self) -> GroupElem {
        GroupElem { left: -self.left, right: -self.right }
    }

    /// `self * other^{-1}`. Counts one M_G.
    pub fn div(&self, other: &GroupElem) -> GroupElem {
        record(GroupOp::MulG);
        GroupElem { left: self.left - other.left, right: self.right - other.right }
    }

    /// Uniform element of G. Counts one R_G.
    pub fn random<R: RngCore>(ctx: &PairingContext, rng: &mut R) -> GroupElem {
        record(GroupOp::RandG);
        ctx.generator().pow_uncounted(&Scalar::random(rng))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(GROUP_ELEM_BYTES);
        self.left
            .into_affine()
            .serialize_compressed(&mut out)
            .expect("serializing G1 cannot fail");
        self.right
            .into_affine()
            .serialize_compressed(&mut out)
            .expect("serializing G2 cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<GroupElem> {
        if bytes.len() != GROUP_ELEM_BYTES {
            return Err(Error::Decode(format!(
                "group element must be {GROUP_ELEM_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let left = ark_bls12_381::G1Affine::deserialize_compressed(&bytes[..G1_BYTES])
            .map_err(|e| Error::Decode(format!("bad G1 half: {e}")))?;
        let right = ark_bls12_381::G2Affine::deserialize_compressed(&bytes[G1_BYTES..])
            .map_err(|e| Error::Decode(format!("bad G2 half: {e}")))?;
        Ok(GroupElem { left: left.into(), right: right.into() })
    }
}

/// An element of the pairing target group G_T.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TargetElem(pub(crate) PairingOutput<Bls12_381>);

impl TargetElem {
    pub fn identity() -> Self {
        TargetElem(PairingOutput::zero())
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_zero()
    }

    /// Group operation. Counts one M_GT.
    pub fn mul(&self, other: &TargetElem) -> TargetElem {
        record(GroupOp::MulGt);
        TargetElem(self.0 + other.0)
    }

    /// Exponentiation. Counts one E_GT.
    pub fn pow(&self, exp: &Scalar) -> TargetElem {
        record(GroupOp::ExpGt);
        TargetElem(self.0 * exp.0)
    }

    pub fn inverse(&self) -> TargetElem {
        TargetElem(-self.0)
    }

    /// `self * other^{-1}`. Counts one M_GT.
    pub fn div(&self, other: &TargetElem) -> TargetElem {
        record(GroupOp::MulGt);
        TargetElem(self.0 - other.0)
    }

    /// Uniform element of G_T (fresh exponent on the canonical pairing
    /// value). Used as the KEM session key.
    pub fn random<R: RngCore>(ctx: &PairingContext, rng: &mut R) -> TargetElem {
        TargetElem(ctx.gt_base * Scalar::random(rng).0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TARGET_ELEM_BYTES);
        self.0
            .serialize_compressed(&mut out)
            .expect("serializing G_T cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TargetElem> {
        if bytes.len() != TARGET_ELEM_BYTES {
            return Err(Error::Decode(format!(
                "target element must be {TARGET_ELEM_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        PairingOutput::deserialize_compressed(bytes)
            .map(TargetElem)
            .map_err(|e| Error::Decode(format!("bad G_T element: {e}")))
    }
}

/// Tag for the three hash families applied to attribute positions.
///
/// `Match` feeds the gate-matching components, `Plain` the first key/cipher
/// component family, `Hat` the second. The byte values fix the
/// domain-separated wire encoding of hash inputs.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AttrTag {
    Plain = 0x00,
    Hat = 0x01,
    Match = 0x02,
}

/// Injectively framed hash input for an attribute position: tag byte,
/// 4-byte big-endian 1-based attribute index, 4-byte big-endian value
/// length, UTF-8 value bytes.
pub fn encode_attr_input(tag: AttrTag, index_1based: u32, value: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + value.len());
    out.push(tag as u8);
    out.extend_from_slice(&index_1based.to_be_bytes());
    out.extend_from_slice(&(value.len() as u32).to_be_bytes());
    out.extend_from_slice(value.as_bytes());
    out
}

/// Fixed-width hash input for epoch secrets: canonical scalar encoding of
/// the re-encryption key followed by the 8-byte big-endian epoch number.
pub fn encode_epoch_input(s_cloud: &Scalar, epoch: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(SCALAR_BYTES + 8);
    out.extend_from_slice(&s_cloud.to_bytes());
    out.extend_from_slice(&epoch.to_be_bytes());
    out
}

/// Pairing evaluator plus the domain-separated hash maps H, H-hat and F.
pub struct PairingContext {
    generator: GroupElem,
    gt_base: PairingOutput<Bls12_381>,
}

impl Default for PairingContext {
    fn default() -> Self {
        Self::new()
    }
}

impl PairingContext {
    pub fn new() -> Self {
        let generator = GroupElem {
            left: G1Projective::generator(),
            right: G2Projective::generator(),
        };
        let gt_base = Bls12_381::pairing(generator.left, generator.right);
        PairingContext { generator, gt_base }
    }

    /// The fixed generator g of the emulated symmetric group.
    pub fn generator(&self) -> GroupElem {
        self.generator
    }

    /// Bilinear pairing e(a, b). Symmetric in its arguments. Counts one P.
    pub fn pair(&self, a: &GroupElem, b: &GroupElem) -> TargetElem {
        record(GroupOp::Pairing);
        TargetElem(Bls12_381::pairing(a.left, b.right))
    }

    /// H: {0,1}* -> G. Deterministic, never the identity.
    pub fn hash_to_group(&self, message: &[u8]) -> GroupElem {
        let exp = hash_to_nonzero_fr(DST_HASH_TO_GROUP, message);
        self.generator.pow_uncounted(&Scalar(exp))
    }

    /// H-hat: {0,1}* -> Z_p^*. Deterministic, never zero.
    pub fn hash_to_scalar(&self, message: &[u8]) -> Scalar {
        Scalar(hash_to_nonzero_fr(DST_HASH_TO_SCALAR, message))
    }

    /// F: G_T -> G, realized as a hash of the canonical target encoding.
    pub fn map_target_to_group(&self, z: &TargetElem) -> GroupElem {
        let exp = hash_to_nonzero_fr(DST_GT_TO_GROUP, &z.to_bytes());
        self.generator.pow_uncounted(&Scalar(exp))
    }

    /// Convenience for H over an attribute position.
    pub fn hash_attr(&self, tag: AttrTag, index_1based: u32, value: &str) -> GroupElem {
        self.hash_to_group(&encode_attr_input(tag, index_1based, value))
    }
}

fn hash_to_nonzero_fr(dst: &[u8], message: &[u8]) -> Fr {
    let hasher = <DefaultFieldHasher<Sha256> as HashToField<Fr>>::new(dst);
    let mut input = message.to_vec();
    loop {
        let [candidate]: [Fr; 1] = hasher.hash_to_field(&input);
        if !candidate.is_zero() {
            return candidate;
        }
        // Astronomically unlikely; retry with a counter byte appended so the
        // map stays total and deterministic.
        input.push(0x5a);
    }
}
