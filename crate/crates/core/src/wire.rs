//! Canonical, versioned serialization for every key and ciphertext type.
//!
//! Every file starts with the envelope: magic `HABE`, a format version
//! byte, and a type tag, followed by a type-specific header (universe
//! dimensions where applicable -- dimensions are always carried, never
//! inferred from content) and the element body. Encodings are
//! deterministic; `decode(encode(x))` re-encodes byte-for-byte.
//!
//! A dual-represented source element serializes both halves (144 bytes) but
//! counts as one logical G element in [`measure`] reports, so element-count
//! comparisons against cost tables stay meaningful while byte totals stay
//! honest.

use crate::algebra::{GroupElem, Scalar, TargetElem, GROUP_ELEM_BYTES, SCALAR_BYTES, TARGET_ELEM_BYTES};
use crate::error::{Error, Result};
use crate::scheme::{
    AttrKeyPart, AttrSecretKey, BlindGatePolicy, BlindSlot, CloudCiphertext, DataDecryptionKey,
    DataPublicParams, DataSecretParams, EpochSecret, GateCiphertext, GatePair, GateSlot,
    MessageCiphertext, OfflineCiphertext, ReencKey, SystemMasterKey, SystemPublicKey,
    UserCiphertext,
};

pub const MAGIC: [u8; 4] = *b"HABE";
pub const FORMAT_VERSION: u8 = 1;

/// Logical element counts plus physical size of one encoded object.
#[derive(Clone, Copy, Default, PartialEq, Eq, Debug)]
pub struct MeasureReport {
    pub group_elems: usize,
    pub target_elems: usize,
    pub scalars: usize,
    pub total_bytes: usize,
}

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(tag: u8) -> Self {
        let mut buf = Vec::with_capacity(256);
        buf.extend_from_slice(&MAGIC);
        buf.push(FORMAT_VERSION);
        buf.push(tag);
        Writer { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }

    fn elem(&mut self, e: &GroupElem) {
        self.buf.extend_from_slice(&e.to_bytes());
    }

    fn target(&mut self, e: &TargetElem) {
        self.buf.extend_from_slice(&e.to_bytes());
    }

    fn scalar(&mut self, s: &Scalar) {
        self.buf.extend_from_slice(&s.to_bytes());
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], expected_tag: u8, type_name: &str) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Decode("bad magic bytes".into()));
        }
        let version = r.take(1)?[0];
        if version != FORMAT_VERSION {
            return Err(Error::Decode(format!(
                "unknown format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let tag = r.take(1)?[0];
        if tag != expected_tag {
            return Err(Error::Decode(format!(
                "type tag {tag:#04x} is not a {type_name} (expected {expected_tag:#04x})"
            )));
        }
        Ok(r)
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::Decode(format!(
                "truncated input: need {len} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn elem(&mut self) -> Result<GroupElem> {
        GroupElem::from_bytes(self.take(GROUP_ELEM_BYTES)?)
    }

    fn target(&mut self) -> Result<TargetElem> {
        TargetElem::from_bytes(self.take(TARGET_ELEM_BYTES)?)
    }

    fn scalar(&mut self) -> Result<Scalar> {
        Scalar::from_bytes(self.take(SCALAR_BYTES)?)
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes after object",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Implemented by every type with a canonical file encoding.
pub trait WireFormat: Sized {
    const TYPE_TAG: u8;
    const TYPE_NAME: &'static str;

    fn write_into(&self, w: &mut Writer) -> Result<()>;
    fn read_from(r: &mut Reader) -> Result<Self>;

    /// Logical element counts (computed from structure, not byte length).
    fn element_counts(&self) -> (usize, usize, usize);
}

pub fn encode<T: WireFormat>(value: &T) -> Result<Vec<u8>> {
    let mut w = Writer::new(T::TYPE_TAG);
    value.write_into(&mut w)?;
    Ok(w.buf)
}

pub fn decode<T: WireFormat>(bytes: &[u8]) -> Result<T> {
    let mut r = Reader::open(bytes, T::TYPE_TAG, T::TYPE_NAME)?;
    let value = T::read_from(&mut r)?;
    r.finish()?;
    Ok(value)
}

pub fn measure<T: WireFormat>(value: &T) -> Result<MeasureReport> {
    let (group_elems, target_elems, scalars) = value.element_counts();
    Ok(MeasureReport { group_elems, target_elems, scalars, total_bytes: encode(value)?.len() })
}

impl WireFormat for SystemPublicKey {
    const TYPE_TAG: u8 = 0x01;
    const TYPE_NAME: &'static str = "system public key";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        for e in [&self.g, &self.g1, &self.g2, &self.g3, &self.g4] {
            w.elem(e);
        }
        w.target(&self.y);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        Ok(SystemPublicKey {
            g: r.elem()?,
            g1: r.elem()?,
            g2: r.elem()?,
            g3: r.elem()?,
            g4: r.elem()?,
            y: r.target()?,
        })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (5, 1, 0)
    }
}

impl WireFormat for SystemMasterKey {
    const TYPE_TAG: u8 = 0x02;
    const TYPE_NAME: &'static str = "system master key";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        w.scalar(&self.y);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        Ok(SystemMasterKey { y: r.scalar()? })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (0, 0, 1)
    }
}

impl WireFormat for DataPublicParams {
    const TYPE_TAG: u8 = 0x03;
    const TYPE_NAME: &'static str = "data public params";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        w.elem(&self.q0);
        w.target(&self.pp0);
        w.elem(&self.pp1);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        Ok(DataPublicParams { q0: r.elem()?, pp0: r.target()?, pp1: r.elem()? })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (2, 1, 0)
    }
}

impl WireFormat for DataSecretParams {
    const TYPE_TAG: u8 = 0x04;
    const TYPE_NAME: &'static str = "data secret params";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        w.scalar(&self.mk0);
        w.scalar(&self.mk1);
        w.scalar(&self.sk);
        w.elem(&self.sk1);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        Ok(DataSecretParams {
            mk0: r.scalar()?,
            mk1: r.scalar()?,
            sk: r.scalar()?,
            sk1: r.elem()?,
        })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (1, 0, 3)
    }
}

impl WireFormat for ReencKey {
    const TYPE_TAG: u8 = 0x05;
    const TYPE_NAME: &'static str = "re-encryption key";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        w.scalar(&self.s_cloud);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        Ok(ReencKey { s_cloud: r.scalar()? })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (0, 0, 1)
    }
}

impl WireFormat for EpochSecret {
    const TYPE_TAG: u8 = 0x06;
    const TYPE_NAME: &'static str = "epoch secret";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        w.u64(self.epoch);
        w.scalar(&self.s);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        Ok(EpochSecret { epoch: r.u64()?, s: r.scalar()? })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (0, 0, 1)
    }
}

impl WireFormat for AttrSecretKey {
    const TYPE_TAG: u8 = 0x07;
    const TYPE_NAME: &'static str = "attribute secret key";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        if self.parts.len() != self.selections.len() {
            return Err(Error::UniverseMismatch(format!(
                "key has {} parts but {} selections",
                self.parts.len(),
                self.selections.len()
            )));
        }
        w.u32(self.parts.len() as u32);
        for &k in &self.selections {
            w.u32(k as u32);
        }
        for e in [&self.d0, &self.d0_hat, &self.d_delta0, &self.d_delta0_hat] {
            w.elem(e);
        }
        for part in &self.parts {
            w.elem(&part.d_delta);
            w.elem(&part.d1);
            w.elem(&part.d1_hat);
        }
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        let n = r.u32()? as usize;
        let selections = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<_>>()?;
        let d0 = r.elem()?;
        let d0_hat = r.elem()?;
        let d_delta0 = r.elem()?;
        let d_delta0_hat = r.elem()?;
        let parts = (0..n)
            .map(|_| {
                Ok(AttrKeyPart { d_delta: r.elem()?, d1: r.elem()?, d1_hat: r.elem()? })
            })
            .collect::<Result<_>>()?;
        Ok(AttrSecretKey { d0, d0_hat, d_delta0, d_delta0_hat, parts, selections })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (4 + 3 * self.parts.len(), 0, 0)
    }
}

impl WireFormat for OfflineCiphertext {
    const TYPE_TAG: u8 = 0x08;
    const TYPE_NAME: &'static str = "offline ciphertext";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        w.u8(self.is_consumed() as u8);
        w.elem(&self.u0);
        w.elem(&self.u1);
        w.target(&self.v0);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        let consumed = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Decode(format!("bad consumed flag {other}"))),
        };
        let u0 = r.elem()?;
        let u1 = r.elem()?;
        let v0 = r.target()?;
        Ok(OfflineCiphertext::from_parts(u0, u1, v0, consumed))
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (2, 1, 0)
    }
}

impl WireFormat for MessageCiphertext {
    const TYPE_TAG: u8 = 0x09;
    const TYPE_NAME: &'static str = "message ciphertext";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        write_message_body(self, w);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        read_message_body(r)
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (2, 1, 0)
    }
}

fn write_message_body(m: &MessageCiphertext, w: &mut Writer) {
    w.elem(&m.u0);
    w.elem(&m.u1);
    w.target(&m.v);
    match &m.signature {
        Some(sig) => {
            w.u8(1);
            w.bytes(sig);
        }
        None => w.u8(0),
    }
}

fn read_message_body(r: &mut Reader) -> Result<MessageCiphertext> {
    let u0 = r.elem()?;
    let u1 = r.elem()?;
    let v = r.target()?;
    let signature = match r.u8()? {
        0 => None,
        1 => Some(r.bytes()?),
        other => return Err(Error::Decode(format!("bad signature flag {other}"))),
    };
    Ok(MessageCiphertext { u0, u1, v, signature })
}

fn write_dims(dims: &[usize], w: &mut Writer) {
    w.u32(dims.len() as u32);
    for &n_i in dims {
        w.u32(n_i as u32);
    }
}

fn read_dims(r: &mut Reader) -> Result<Vec<usize>> {
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(Error::Decode("universe has zero attributes".into()));
    }
    let mut dims = Vec::with_capacity(n);
    for _ in 0..n {
        let n_i = r.u32()? as usize;
        if n_i == 0 {
            return Err(Error::Decode("attribute with zero values".into()));
        }
        dims.push(n_i);
    }
    Ok(dims)
}

fn check_gate_dims(dims: &[usize], rows: usize, name: &str) -> Result<()> {
    if rows != dims.len() {
        return Err(Error::UniverseMismatch(format!(
            "{name} has {rows} slot rows but header declares {} attributes",
            dims.len()
        )));
    }
    Ok(())
}

fn write_gate_body(gate: &GateCiphertext, dims: &[usize], w: &mut Writer) -> Result<()> {
    check_gate_dims(dims, gate.slots.len(), "gate ciphertext")?;
    w.elem(&gate.c_tilde);
    w.target(&gate.c_delta);
    w.elem(&gate.c0_hat);
    w.elem(&gate.c1);
    w.elem(&gate.c1_hat);
    for (i, row) in gate.slots.iter().enumerate() {
        if row.len() != dims[i] {
            return Err(Error::UniverseMismatch(format!(
                "gate slot row {} has {} entries, header declares {}",
                i + 1,
                row.len(),
                dims[i]
            )));
        }
        for slot in row {
            w.elem(&slot.c_delta);
            w.elem(&slot.c0);
            w.elem(&slot.c0_hat);
        }
    }
    Ok(())
}

fn read_gate_body(dims: &[usize], r: &mut Reader) -> Result<GateCiphertext> {
    let c_tilde = r.elem()?;
    let c_delta = r.target()?;
    let c0_hat = r.elem()?;
    let c1 = r.elem()?;
    let c1_hat = r.elem()?;
    let mut slots = Vec::with_capacity(dims.len());
    for &n_i in dims {
        let mut row = Vec::with_capacity(n_i);
        for _ in 0..n_i {
            row.push(GateSlot { c_delta: r.elem()?, c0: r.elem()?, c0_hat: r.elem()? });
        }
        slots.push(row);
    }
    Ok(GateCiphertext { c_tilde, c_delta, c0_hat, c1, c1_hat, slots })
}

fn write_blind_body(blind: &BlindGatePolicy, dims: &[usize], w: &mut Writer) -> Result<()> {
    check_gate_dims(dims, blind.slots.len(), "blind policy")?;
    w.target(&blind.c_tilde);
    w.elem(&blind.c1);
    w.elem(&blind.c1_hat);
    for (i, row) in blind.slots.iter().enumerate() {
        if row.len() != dims[i] {
            return Err(Error::UniverseMismatch(format!(
                "blind slot row {} has {} entries, header declares {}",
                i + 1,
                row.len(),
                dims[i]
            )));
        }
        for slot in row {
            w.elem(&slot.c0);
            w.elem(&slot.c0_hat);
        }
    }
    Ok(())
}

fn read_blind_body(dims: &[usize], r: &mut Reader) -> Result<BlindGatePolicy> {
    let c_tilde = r.target()?;
    let c1 = r.elem()?;
    let c1_hat = r.elem()?;
    let mut slots = Vec::with_capacity(dims.len());
    for &n_i in dims {
        let mut row = Vec::with_capacity(n_i);
        for _ in 0..n_i {
            row.push(BlindSlot { c0: r.elem()?, c0_hat: r.elem()? });
        }
        slots.push(row);
    }
    Ok(BlindGatePolicy { c_tilde, c1, c1_hat, slots })
}

fn gate_counts(dims: &[usize]) -> (usize, usize) {
    let total: usize = dims.iter().sum();
    (3 * total + 4, 1)
}

fn blind_counts(dims: &[usize]) -> (usize, usize) {
    let total: usize = dims.iter().sum();
    (2 * total + 2, 1)
}

impl WireFormat for GateCiphertext {
    const TYPE_TAG: u8 = 0x0a;
    const TYPE_NAME: &'static str = "gate ciphertext";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        let dims: Vec<usize> = self.slots.iter().map(|row| row.len()).collect();
        write_dims(&dims, w);
        write_gate_body(self, &dims, w)
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        let dims = read_dims(r)?;
        read_gate_body(&dims, r)
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        let dims: Vec<usize> = self.slots.iter().map(|row| row.len()).collect();
        let (g, gt) = gate_counts(&dims);
        (g, gt, 0)
    }
}

impl WireFormat for BlindGatePolicy {
    const TYPE_TAG: u8 = 0x0b;
    const TYPE_NAME: &'static str = "blind gate policy";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        let dims: Vec<usize> = self.slots.iter().map(|row| row.len()).collect();
        write_dims(&dims, w);
        write_blind_body(self, &dims, w)
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        let dims = read_dims(r)?;
        read_blind_body(&dims, r)
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        let dims: Vec<usize> = self.slots.iter().map(|row| row.len()).collect();
        let (g, gt) = blind_counts(&dims);
        (g, gt, 0)
    }
}

fn shared_dims(gates: &[GatePair]) -> Result<Vec<usize>> {
    let first = gates
        .first()
        .ok_or_else(|| Error::UniverseMismatch("ciphertext has no gates".into()))?
        .dims();
    for (j, pair) in gates.iter().enumerate() {
        if pair.dims() != first || pair.blind.slots.iter().map(|r| r.len()).collect::<Vec<_>>() != first
        {
            return Err(Error::UniverseMismatch(format!(
                "gate {} disagrees with shared universe dimensions",
                j + 1
            )));
        }
    }
    Ok(first)
}

fn write_gate_pairs(gates: &[GatePair], dims: &[usize], w: &mut Writer) -> Result<()> {
    for pair in gates {
        write_gate_body(&pair.gate, dims, w)?;
        write_blind_body(&pair.blind, dims, w)?;
    }
    Ok(())
}

fn read_gate_pairs(m: usize, dims: &[usize], r: &mut Reader) -> Result<Vec<GatePair>> {
    (0..m)
        .map(|_| {
            let gate = read_gate_body(dims, r)?;
            let blind = read_blind_body(dims, r)?;
            Ok(GatePair { gate, blind })
        })
        .collect()
}

fn policy_part_counts(dims: &[usize], m: usize) -> (usize, usize) {
    let (gate_g, gate_gt) = gate_counts(dims);
    let (blind_g, blind_gt) = blind_counts(dims);
    (m * (gate_g + blind_g), m * (gate_gt + blind_gt))
}

impl WireFormat for CloudCiphertext {
    const TYPE_TAG: u8 = 0x0c;
    const TYPE_NAME: &'static str = "cloud ciphertext";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        let dims = shared_dims(&self.gates)?;
        w.bytes(self.object_id.as_bytes());
        w.u32(self.messages.len() as u32);
        w.u32(self.gates.len() as u32);
        write_dims(&dims, w);
        for m in &self.messages {
            write_message_body(m, w);
        }
        write_gate_pairs(&self.gates, &dims, w)
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        let object_id = String::from_utf8(r.bytes()?)
            .map_err(|_| Error::Decode("object id is not UTF-8".into()))?;
        let message_count = r.u32()? as usize;
        let gate_count = r.u32()? as usize;
        let dims = read_dims(r)?;
        let messages = (0..message_count).map(|_| read_message_body(r)).collect::<Result<_>>()?;
        let gates = read_gate_pairs(gate_count, &dims, r)?;
        Ok(CloudCiphertext { object_id, messages, gates })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        let dims: Vec<usize> =
            self.gates.first().map(|p| p.dims()).unwrap_or_default();
        let (pg, pgt) = policy_part_counts(&dims, self.gates.len());
        (pg + 2 * self.messages.len(), pgt + self.messages.len(), 0)
    }
}

impl WireFormat for UserCiphertext {
    const TYPE_TAG: u8 = 0x0d;
    const TYPE_NAME: &'static str = "user ciphertext";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        let dims = shared_dims(&self.gates)?;
        w.u64(self.epoch);
        w.u32(self.messages.len() as u32);
        w.u32(self.gates.len() as u32);
        write_dims(&dims, w);
        for m in &self.messages {
            write_message_body(m, w);
        }
        write_gate_pairs(&self.gates, &dims, w)
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        let epoch = r.u64()?;
        let message_count = r.u32()? as usize;
        let gate_count = r.u32()? as usize;
        let dims = read_dims(r)?;
        let messages = (0..message_count).map(|_| read_message_body(r)).collect::<Result<_>>()?;
        let gates = read_gate_pairs(gate_count, &dims, r)?;
        Ok(UserCiphertext { epoch, messages, gates })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        let dims: Vec<usize> =
            self.gates.first().map(|p| p.dims()).unwrap_or_default();
        let (pg, pgt) = policy_part_counts(&dims, self.gates.len());
        (pg + 2 * self.messages.len(), pgt + self.messages.len(), 0)
    }
}

impl WireFormat for DataDecryptionKey {
    const TYPE_TAG: u8 = 0x0e;
    const TYPE_NAME: &'static str = "data decryption key";

    fn write_into(&self, w: &mut Writer) -> Result<()> {
        w.u64(self.epoch);
        w.elem(&self.elem);
        Ok(())
    }

    fn read_from(r: &mut Reader) -> Result<Self> {
        Ok(DataDecryptionKey { epoch: r.u64()?, elem: r.elem()? })
    }

    fn element_counts(&self) -> (usize, usize, usize) {
        (1, 0, 0)
    }
}

/// Encoded byte length of the policy part of a published ciphertext,
/// gate by gate. Used by the shape checks: equal-dimension policies must
/// produce identical layouts.
pub fn gate_section_lengths(uct: &UserCiphertext) -> Result<Vec<(usize, usize)>> {
    uct.gates
        .iter()
        .map(|pair| {
            Ok((encode(&pair.gate)?.len(), encode(&pair.blind)?.len()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::PairingContext;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    struct Pool {
        ctx: PairingContext,
        elems: Vec<GroupElem>,
        targets: Vec<TargetElem>,
        rng: ChaCha20Rng,
    }

    impl Pool {
        fn new(seed: u64) -> Self {
            let ctx = PairingContext::new();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let elems = (0..48).map(|_| GroupElem::random(&ctx, &mut rng)).collect();
            let targets = (0..16).map(|_| TargetElem::random(&ctx, &mut rng)).collect();
            Pool { ctx, elems, targets, rng }
        }

        fn elem(&mut self) -> GroupElem {
            self.elems[self.rng.next_u32() as usize % self.elems.len()]
        }

        fn target(&mut self) -> TargetElem {
            self.targets[self.rng.next_u32() as usize % self.targets.len()]
        }

        fn scalar(&mut self) -> Scalar {
            Scalar::random(&mut self.rng)
        }

        fn dims(&mut self) -> Vec<usize> {
            let n = 1 + self.rng.next_u32() as usize % 4;
            (0..n).map(|_| 1 + self.rng.next_u32() as usize % 4).collect()
        }

        fn gate(&mut self, dims: &[usize]) -> GateCiphertext {
            GateCiphertext {
                c_tilde: self.elem(),
                c_delta: self.target(),
                c0_hat: self.elem(),
                c1: self.elem(),
                c1_hat: self.elem(),
                slots: dims
                    .iter()
                    .map(|&n_i| {
                        (0..n_i)
                            .map(|_| GateSlot {
                                c_delta: self.elem(),
                                c0: self.elem(),
                                c0_hat: self.elem(),
                            })
                            .collect()
                    })
                    .collect(),
            }
        }

        fn blind(&mut self, dims: &[usize]) -> BlindGatePolicy {
            BlindGatePolicy {
                c_tilde: self.target(),
                c1: self.elem(),
                c1_hat: self.elem(),
                slots: dims
                    .iter()
                    .map(|&n_i| {
                        (0..n_i)
                            .map(|_| BlindSlot { c0: self.elem(), c0_hat: self.elem() })
                            .collect()
                    })
                    .collect(),
            }
        }

        fn message(&mut self) -> MessageCiphertext {
            let signature = if self.rng.next_u32() % 2 == 0 {
                None
            } else {
                let mut sig = vec![0u8; 16 + (self.rng.next_u32() as usize % 32)];
                self.rng.fill_bytes(&mut sig);
                Some(sig)
            };
            MessageCiphertext { u0: self.elem(), u1: self.elem(), v: self.target(), signature }
        }
    }

    fn round_trip<T: WireFormat + PartialEq + std::fmt::Debug>(value: &T) {
        let bytes = encode(value).unwrap();
        let back: T = decode(&bytes).unwrap();
        assert_eq!(&back, value);
        assert_eq!(encode(&back).unwrap(), bytes, "re-encode must be byte-identical");
    }

    #[test]
    fn round_trip_flat_types_randomized() {
        let mut pool = Pool::new(1);
        for _ in 0..1000 {
            round_trip(&SystemPublicKey {
                g: pool.elem(),
                g1: pool.elem(),
                g2: pool.elem(),
                g3: pool.elem(),
                g4: pool.elem(),
                y: pool.target(),
            });
            round_trip(&SystemMasterKey { y: pool.scalar() });
            round_trip(&DataPublicParams { q0: pool.elem(), pp0: pool.target(), pp1: pool.elem() });
            round_trip(&DataSecretParams {
                mk0: pool.scalar(),
                mk1: pool.scalar(),
                sk: pool.scalar(),
                sk1: pool.elem(),
            });
            round_trip(&ReencKey { s_cloud: pool.scalar() });
            round_trip(&EpochSecret { epoch: pool.rng.next_u32() as u64, s: pool.scalar() });
            round_trip(&DataDecryptionKey { elem: pool.elem(), epoch: 3 });
            round_trip(&OfflineCiphertext::from_parts(
                pool.elem(),
                pool.elem(),
                pool.target(),
                pool.rng.next_u32() % 2 == 0,
            ));
            round_trip(&pool.message());
        }
    }

    #[test]
    fn round_trip_structured_types_randomized() {
        let mut pool = Pool::new(2);
        for _ in 0..120 {
            let dims = pool.dims();
            let n = 1 + pool.rng.next_u32() as usize % dims.len();
            let selections: Vec<usize> =
                dims.iter().map(|&n_i| pool.rng.next_u32() as usize % n_i).collect();
            round_trip(&AttrSecretKey {
                d0: pool.elem(),
                d0_hat: pool.elem(),
                d_delta0: pool.elem(),
                d_delta0_hat: pool.elem(),
                parts: (0..dims.len())
                    .map(|_| AttrKeyPart { d_delta: pool.elem(), d1: pool.elem(), d1_hat: pool.elem() })
                    .collect(),
                selections,
            });
            let gate = pool.gate(&dims);
            let blind = pool.blind(&dims);
            round_trip(&gate);
            round_trip(&blind);
            let m = 1 + pool.rng.next_u32() as usize % 3;
            let gates: Vec<GatePair> = (0..m)
                .map(|_| GatePair { gate: pool.gate(&dims), blind: pool.blind(&dims) })
                .collect();
            let messages: Vec<MessageCiphertext> = (0..n).map(|_| pool.message()).collect();
            round_trip(&CloudCiphertext {
                object_id: format!("object-{}", pool.rng.next_u32()),
                messages: messages.clone(),
                gates: gates.clone(),
            });
            round_trip(&UserCiphertext { epoch: pool.rng.next_u32() as u64, messages, gates });
        }
    }

    #[test]
    fn measure_reports_match_closed_forms() {
        let mut pool = Pool::new(3);
        // Grid over (n, n_i, m).
        for (n, n_i, m) in [(1, 1, 1), (2, 3, 1), (3, 2, 2), (4, 5, 3), (8, 5, 3), (5, 10, 2)] {
            let dims = vec![n_i; n];
            let big_n = n * n_i;
            let gates: Vec<GatePair> = (0..m)
                .map(|_| GatePair { gate: pool.gate(&dims), blind: pool.blind(&dims) })
                .collect();
            let uct = UserCiphertext { epoch: 1, messages: vec![pool.message()], gates };
            let report = measure(&uct).unwrap();
            assert_eq!(report.group_elems, (5 * m * big_n + 6 * m) + 2);
            assert_eq!(report.target_elems, 2 * m + 1);

            let key = AttrSecretKey {
                d0: pool.elem(),
                d0_hat: pool.elem(),
                d_delta0: pool.elem(),
                d_delta0_hat: pool.elem(),
                parts: (0..n)
                    .map(|_| AttrKeyPart { d_delta: pool.elem(), d1: pool.elem(), d1_hat: pool.elem() })
                    .collect(),
                selections: vec![0; n],
            };
            assert_eq!(measure(&key).unwrap().group_elems, 3 * n + 4);
        }

        let pk = SystemPublicKey {
            g: pool.elem(),
            g1: pool.elem(),
            g2: pool.elem(),
            g3: pool.elem(),
            g4: pool.elem(),
            y: pool.target(),
        };
        let report = measure(&pk).unwrap();
        assert_eq!((report.group_elems, report.target_elems), (5, 1));

        let msg = MessageCiphertext { u0: pool.elem(), u1: pool.elem(), v: pool.target(), signature: None };
        let report = measure(&msg).unwrap();
        assert_eq!((report.group_elems, report.target_elems), (2, 1));
    }

    #[test]
    fn decode_rejects_malformed_envelopes() {
        let mut pool = Pool::new(4);
        let rk = ReencKey { s_cloud: pool.scalar() };
        let good = encode(&rk).unwrap();

        // Truncation.
        assert!(matches!(decode::<ReencKey>(&good[..good.len() - 1]), Err(Error::Decode(_))));
        // Bad magic.
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode::<ReencKey>(&bad).is_err());
        // Unknown version.
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(decode::<ReencKey>(&bad).is_err());
        // Wrong type tag.
        assert!(decode::<SystemMasterKey>(&good).is_err());
        // Trailing bytes.
        let mut bad = good.clone();
        bad.push(0);
        assert!(decode::<ReencKey>(&bad).is_err());
        // Corrupt element encoding.
        let pk = SystemPublicKey {
            g: pool.elem(),
            g1: pool.elem(),
            g2: pool.elem(),
            g3: pool.elem(),
            g4: pool.elem(),
            y: pool.target(),
        };
        let mut bytes = encode(&pk).unwrap();
        for b in bytes.iter_mut().skip(6).take(48) {
            *b = 0xff;
        }
        assert!(decode::<SystemPublicKey>(&bytes).is_err());
    }

    #[test]
    fn encode_rejects_dimension_disagreement() {
        let mut pool = Pool::new(5);
        let dims_a = vec![2, 2];
        let dims_b = vec![2, 3];
        let cloud = CloudCiphertext {
            object_id: "o".into(),
            messages: vec![pool.message()],
            gates: vec![
                GatePair { gate: pool.gate(&dims_a), blind: pool.blind(&dims_a) },
                GatePair { gate: pool.gate(&dims_b), blind: pool.blind(&dims_b) },
            ],
        };
        assert!(encode(&cloud).is_err());
    }

    #[test]
    fn equal_dimension_gates_have_equal_layout() {
        let mut pool = Pool::new(6);
        let dims = vec![3, 2, 4];
        let uct = UserCiphertext {
            epoch: 2,
            messages: vec![],
            gates: (0..3)
                .map(|_| GatePair { gate: pool.gate(&dims), blind: pool.blind(&dims) })
                .collect(),
        };
        let sections = gate_section_lengths(&uct).unwrap();
        assert!(sections.windows(2).all(|w| w[0] == w[1]));
    }
}
