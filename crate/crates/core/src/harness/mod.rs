//! Multi-actor protocol harness: attribute authority, cloud provider,
//! devices, data owners and data users exchanging typed messages over an
//! in-process bus, with a directory-backed cloud store.
//!
//! Role records hold exactly the material the role is entitled to: devices
//! carry only public material and their offline pool, the cloud never sees
//! owner secrets or attribute keys, users hold their key and nothing else.
//! Every cross-role message lands in a totally ordered transcript, which
//! scenario tests check against expectations (for example, that a policy
//! deletion completes without any owner message after the initial upload).

mod script;
mod store;

pub use script::parse_script;
pub use store::ObjectStore;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::algebra::{PairingContext, TargetElem};
use crate::error::{Error, Result};
use crate::lifecycle::{ReencryptionContext, StoredObject};
use crate::payload::{open_payload, seal_payload};
use crate::policy::{AttributeList, Policy, Universe};
use crate::scheme::{
    anon_decrypt, anon_encrypt, attr_keygen, offline_encrypt, online_encrypt, owner_param_setup,
    reenc_keygen, system_setup, AttrSecretKey, DataPublicParams, DataSecretParams,
    OfflineCiphertext, ReencKey, SystemMasterKey, SystemPublicKey,
};

/// One totally ordered transcript entry.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct TranscriptEntry {
    pub seq: usize,
    /// `role` or `role:name`.
    pub actor: String,
    pub action: String,
    pub detail: String,
}

impl TranscriptEntry {
    pub fn render(&self) -> String {
        format!("#{:04} {:<12} {:<16} {}", self.seq, self.actor, self.action, self.detail)
    }
}

/// Ordered record of everything that happened in a scenario.
#[derive(Clone, Default, Debug)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&entry.render());
            out.push('\n');
        }
        out
    }

    /// The last `n` rendered lines.
    pub fn tail(&self, n: usize) -> String {
        let start = self.entries.len().saturating_sub(n);
        self.entries[start..].iter().map(|e| e.render() + "\n").collect()
    }

    fn push(&mut self, actor: String, action: &str, detail: String) {
        let seq = self.entries.len();
        self.entries.push(TranscriptEntry { seq, actor, action: action.to_string(), detail });
    }
}

struct Authority {
    pk: SystemPublicKey,
    mk: SystemMasterKey,
    rng: ChaCha20Rng,
}

struct Owner {
    pp: DataPublicParams,
    sp: DataSecretParams,
    rk: ReencKey,
    rng: ChaCha20Rng,
}

/// A data-collecting device: public material and an offline pool only.
struct Device {
    owner: String,
    pool: Vec<OfflineCiphertext>,
    rng: ChaCha20Rng,
}

struct User {
    key: AttrSecretKey,
}

/// Cloud role: store, received re-encryption keys and published owner
/// parameters. No owner secrets, no attribute keys.
struct Cloud {
    store: ObjectStore,
    owner_materials: BTreeMap<String, (DataPublicParams, ReencKey)>,
    object_owner: BTreeMap<String, String>,
    rng: ChaCha20Rng,
}

impl Cloud {
    fn routing_path(&self) -> PathBuf {
        self.store.root().join("routing.json")
    }

    fn persist_routing(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.object_owner)
            .map_err(|e| Error::Decode(e.to_string()))?;
        fs::write(self.routing_path(), text)?;
        Ok(())
    }

    fn reload_routing(&mut self) -> Result<()> {
        let path = self.routing_path();
        if path.exists() {
            self.object_owner = serde_json::from_str(&fs::read_to_string(path)?)
                .map_err(|e| Error::Decode(e.to_string()))?;
        }
        Ok(())
    }
}

fn derive_seed(master: u64, role: &str, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_be_bytes());
    hasher.update(role.as_bytes());
    hasher.update([0x1f]);
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

/// The scenario engine.
pub struct Harness {
    ctx: PairingContext,
    master_seed: u64,
    clock: u64,
    universe: Option<Universe>,
    authority: Option<Authority>,
    owners: BTreeMap<String, Owner>,
    devices: BTreeMap<String, Device>,
    users: BTreeMap<String, User>,
    cloud: Cloud,
    transcript: Transcript,
    base_dir: PathBuf,
}

impl Harness {
    /// `state_dir` hosts the cloud store; `master_seed` derives every
    /// actor's independent randomness stream.
    pub fn new(state_dir: impl Into<PathBuf>, master_seed: u64) -> Result<Self> {
        let base_dir: PathBuf = state_dir.into();
        let store = ObjectStore::open(base_dir.join("csp-store"))?;
        let mut cloud = Cloud {
            store,
            owner_materials: BTreeMap::new(),
            object_owner: BTreeMap::new(),
            rng: ChaCha20Rng::seed_from_u64(derive_seed(master_seed, "csp", "")),
        };
        cloud.reload_routing()?;
        Ok(Harness {
            ctx: PairingContext::new(),
            master_seed,
            clock: 0,
            universe: None,
            authority: None,
            owners: BTreeMap::new(),
            devices: BTreeMap::new(),
            users: BTreeMap::new(),
            cloud,
            transcript: Transcript::default(),
            base_dir,
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn universe(&self) -> Option<&Universe> {
        self.universe.as_ref()
    }

    pub fn set_universe(&mut self, universe: Universe) -> Result<()> {
        let violations = universe.validate();
        if !violations.is_empty() {
            return Err(Error::invalid(
                "universe",
                violations.iter().map(|v| v.to_string()).collect(),
            ));
        }
        self.transcript.push(
            "harness".into(),
            "universe",
            format!("n={} dims={:?}", universe.attr_count(), universe.dims()),
        );
        self.universe = Some(universe);
        Ok(())
    }

    fn universe_ref(&self) -> Result<&Universe> {
        self.universe.as_ref().ok_or_else(|| Error::ProtocolOrder("no universe defined".into()))
    }

    fn authority_ref(&self) -> Result<&Authority> {
        self.authority
            .as_ref()
            .ok_or_else(|| Error::ProtocolOrder("system setup has not run".into()))
    }

    pub fn advance_clock(&mut self, seconds: u64) {
        self.clock += seconds;
        self.transcript.push("harness".into(), "clock", format!("now={}", self.clock));
    }

    /// System initialization by the attribute authority.
    pub fn aa_setup(&mut self) -> Result<()> {
        if self.authority.is_some() {
            return Err(Error::ProtocolOrder("system setup already ran".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(self.master_seed, "aa", ""));
        let (pk, mk) = system_setup(&self.ctx, &mut rng);
        self.authority = Some(Authority { pk, mk, rng });
        self.transcript.push("aa".into(), "setup", "pk published".into());
        Ok(())
    }

    /// Attribute key issuance to a (new) data user.
    pub fn aa_keygen(&mut self, user: &str, list: &AttributeList) -> Result<()> {
        let universe = self.universe_ref()?.clone();
        let authority =
            self.authority.as_mut().ok_or_else(|| Error::ProtocolOrder("system setup has not run".into()))?;
        let key =
            attr_keygen(&self.ctx, &authority.pk, &authority.mk, &universe, list, &mut authority.rng)?;
        self.users.insert(user.to_string(), User { key });
        self.transcript.push("aa".into(), "keygen", format!("attr key -> du:{user}"));
        Ok(())
    }

    /// Data initialization by one owner: parameter setup plus re-encryption
    /// key delivery to the cloud over the secure channel.
    pub fn do_setup(&mut self, owner: &str) -> Result<()> {
        let pk = self.authority_ref()?.pk.clone();
        let mut rng =
            ChaCha20Rng::seed_from_u64(derive_seed(self.master_seed, "do", owner));
        let (pp, sp) = owner_param_setup(&pk, &self.ctx, &mut rng);
        let rk = reenc_keygen(&mut rng);
        self.cloud.owner_materials.insert(owner.to_string(), (pp.clone(), rk.clone()));
        self.owners.insert(owner.to_string(), Owner { pp, sp, rk, rng });
        self.transcript.push(format!("do:{owner}"), "owner-setup", "pp published; rk -> csp".into());
        Ok(())
    }

    /// Register a device under an owner and pre-generate its offline pool.
    pub fn dev_init(&mut self, name: &str, owner: &str, pool: usize) -> Result<()> {
        let pk = self.authority_ref()?.pk.clone();
        let pp = self
            .owners
            .get(owner)
            .map(|o| o.pp.clone())
            .ok_or_else(|| Error::ProtocolOrder(format!("owner `{owner}` has not run setup")))?;
        let mut rng =
            ChaCha20Rng::seed_from_u64(derive_seed(self.master_seed, "dev", name));
        let pool_cts = (0..pool).map(|_| offline_encrypt(&pk, &pp, &mut rng)).collect();
        self.devices.insert(name.to_string(), Device { owner: owner.to_string(), pool: pool_cts, rng });
        self.transcript.push(format!("dev:{name}"), "init", format!("owner={owner} pool={pool}"));
        Ok(())
    }

    /// Offline phase: top the device's pool up.
    pub fn dev_refill(&mut self, name: &str, count: usize) -> Result<()> {
        let pk = self.authority_ref()?.pk.clone();
        let device = self
            .devices
            .get_mut(name)
            .ok_or_else(|| Error::ProtocolOrder(format!("unknown device `{name}`")))?;
        let pp = self
            .owners
            .get(&device.owner)
            .map(|o| o.pp.clone())
            .expect("device owner vanished");
        for _ in 0..count {
            let ct = offline_encrypt(&pk, &pp, &mut device.rng);
            device.pool.push(ct);
        }
        let len = device.pool.len();
        self.transcript.push(format!("dev:{name}"), "refill", format!("pool={len}"));
        Ok(())
    }

    /// Online phase: encrypt one payload and upload it to the cloud.
    pub fn dev_send(&mut self, name: &str, object_id: &str, payload: &[u8]) -> Result<()> {
        let device = self
            .devices
            .get_mut(name)
            .ok_or_else(|| Error::ProtocolOrder(format!("unknown device `{name}`")))?;
        let mut offline = device
            .pool
            .pop()
            .ok_or(Error::EmptyPool)?;
        let session = TargetElem::random(&self.ctx, &mut device.rng);
        let message = online_encrypt(&session, &mut offline)?;
        let sealed = seal_payload(&session, payload, &mut device.rng);
        let owner = device.owner.clone();

        let mut obj = if self.cloud.store.exists(object_id) {
            self.cloud.store.load(object_id)?
        } else {
            StoredObject::new(object_id)
        };
        match self.cloud.object_owner.get(object_id) {
            Some(existing) if existing != &owner => {
                return Err(Error::Capability(format!(
                    "object `{object_id}` belongs to owner `{existing}`"
                )));
            }
            None => {
                self.cloud.object_owner.insert(object_id.to_string(), owner.clone());
                self.cloud.persist_routing()?;
            }
            _ => {}
        }
        let index = obj.messages.len();
        obj.add_message(self.clock, message);
        self.cloud.store.save(&obj)?;
        self.cloud.store.save_payload(object_id, index, &sealed)?;
        self.transcript.push(
            format!("dev:{name}"),
            "send",
            format!("object={object_id} part={index} bytes={}", payload.len()),
        );
        Ok(())
    }

    fn owner_of_object(&self, object_id: &str) -> Result<String> {
        self.cloud
            .object_owner
            .get(object_id)
            .cloned()
            .ok_or_else(|| Error::UnknownObject(object_id.to_string()))
    }

    /// Owner-side policy definition and upload; expirations are per-gate
    /// absolute instants.
    pub fn do_policy(
        &mut self,
        owner: &str,
        object_id: &str,
        policy: &Policy,
        expirations: Vec<Option<u64>>,
    ) -> Result<Vec<u64>> {
        let universe = self.universe_ref()?.clone();
        let pk = self.authority_ref()?.pk.clone();
        let owner_state = self
            .owners
            .get_mut(owner)
            .ok_or_else(|| Error::ProtocolOrder(format!("owner `{owner}` has not run setup")))?;
        let gates = anon_encrypt(
            &self.ctx,
            &pk,
            &owner_state.pp,
            &owner_state.sp,
            &owner_state.rk,
            &universe,
            policy,
            &mut owner_state.rng,
        )?;
        let m = gates.len();

        let mut obj = if self.cloud.store.exists(object_id) {
            self.cloud.store.load(object_id)?
        } else {
            StoredObject::new(object_id)
        };
        match self.cloud.object_owner.get(object_id) {
            Some(existing) if existing != owner => {
                return Err(Error::Capability(format!(
                    "object `{object_id}` belongs to owner `{existing}`"
                )));
            }
            None => {
                self.cloud.object_owner.insert(object_id.to_string(), owner.to_string());
                self.cloud.persist_routing()?;
            }
            _ => {}
        }
        let ids = obj.set_policy(self.clock, gates, expirations)?;
        self.cloud.store.save(&obj)?;
        self.transcript.push(
            format!("do:{owner}"),
            "policy",
            format!("object={object_id} gates={m} ids={ids:?}"),
        );
        Ok(ids)
    }

    fn reencryption_materials(&self, object_id: &str) -> Result<(String, SystemPublicKey, DataPublicParams, ReencKey)> {
        let owner = self.owner_of_object(object_id)?;
        let pk = self.authority_ref()?.pk.clone();
        let (pp, rk) = self
            .cloud
            .owner_materials
            .get(&owner)
            .cloned()
            .ok_or_else(|| Error::ProtocolOrder(format!("cloud has no materials for owner `{owner}`")))?;
        Ok((owner, pk, pp, rk))
    }

    /// Cloud-side (re-)publication at the next epoch.
    pub fn csp_publish(&mut self, object_id: &str) -> Result<u64> {
        let (_, pk, pp, rk) = self.reencryption_materials(object_id)?;
        let mut obj = self.cloud.store.load(object_id)?;
        let cx = ReencryptionContext { ctx: &self.ctx, pk: &pk, pp: &pp, rk: &rk };
        obj.publish(&cx, self.clock, &mut self.cloud.rng)?;
        let epoch = obj.current_epoch;
        self.cloud.store.save(&obj)?;
        self.transcript.push("csp".into(), "publish", format!("object={object_id} epoch={epoch}"));
        Ok(epoch)
    }

    /// Owner-requested gate deletion; the cloud deletes and republishes.
    pub fn do_delete(&mut self, owner: &str, object_id: &str, gate_id: u64) -> Result<u64> {
        let object_owner = self.owner_of_object(object_id)?;
        if object_owner != owner {
            return Err(Error::Capability(format!(
                "owner `{owner}` cannot update object `{object_id}` of `{object_owner}`"
            )));
        }
        self.transcript.push(
            format!("do:{owner}"),
            "delete-request",
            format!("object={object_id} gate={gate_id}"),
        );
        let (_, pk, pp, rk) = self.reencryption_materials(object_id)?;
        let mut obj = self.cloud.store.load(object_id)?;
        let cx = ReencryptionContext { ctx: &self.ctx, pk: &pk, pp: &pp, rk: &rk };
        obj.delete_gate(&cx, self.clock, gate_id, &mut self.cloud.rng)?;
        let epoch = obj.current_epoch;
        let published = obj.published.is_some();
        self.cloud.store.save(&obj)?;
        self.transcript.push(
            "csp".into(),
            "delete",
            format!("object={object_id} gate={gate_id} epoch={epoch} published={published}"),
        );
        Ok(epoch)
    }

    /// Owner-side policy addition: encrypt one new gate, cloud re-encrypts
    /// and appends it at the current epoch.
    pub fn do_add(
        &mut self,
        owner: &str,
        object_id: &str,
        policy: &Policy,
        expires_at: Option<u64>,
    ) -> Result<u64> {
        if policy.gates.len() != 1 {
            return Err(Error::invalid(
                "policy",
                vec![format!("addition takes exactly one gate, got {}", policy.gates.len())],
            ));
        }
        let object_owner = self.owner_of_object(object_id)?;
        if object_owner != owner {
            return Err(Error::Capability(format!(
                "owner `{owner}` cannot update object `{object_id}` of `{object_owner}`"
            )));
        }
        let universe = self.universe_ref()?.clone();
        let pk = self.authority_ref()?.pk.clone();
        let owner_state = self.owners.get_mut(owner).expect("owner routing checked");
        let pair = anon_encrypt(
            &self.ctx,
            &pk,
            &owner_state.pp,
            &owner_state.sp,
            &owner_state.rk,
            &universe,
            policy,
            &mut owner_state.rng,
        )?
        .remove(0);
        self.transcript.push(
            format!("do:{owner}"),
            "add-request",
            format!("object={object_id}"),
        );

        let (_, pk, pp, rk) = self.reencryption_materials(object_id)?;
        let mut obj = self.cloud.store.load(object_id)?;
        let cx = ReencryptionContext { ctx: &self.ctx, pk: &pk, pp: &pp, rk: &rk };
        obj.add_gate(&cx, self.clock, pair, expires_at, &mut self.cloud.rng)?;
        let gate_id = obj.next_gate_id() - 1;
        let epoch = obj.current_epoch;
        self.cloud.store.save(&obj)?;
        self.transcript.push(
            "csp".into(),
            "add",
            format!("object={object_id} gate={gate_id} epoch={epoch}"),
        );
        Ok(gate_id)
    }

    /// Cloud-side expiration sweep over every stored object at the current
    /// clock.
    pub fn csp_sweep(&mut self) -> Result<Vec<(String, Vec<u64>)>> {
        let mut performed = Vec::new();
        for object_id in self.cloud.store.list()? {
            let Ok((_, pk, pp, rk)) = self.reencryption_materials(&object_id) else {
                continue;
            };
            let mut obj = self.cloud.store.load(&object_id)?;
            let cx = ReencryptionContext { ctx: &self.ctx, pk: &pk, pp: &pp, rk: &rk };
            let deleted = obj.sweep_expirations(&cx, self.clock, &mut self.cloud.rng)?;
            if !deleted.is_empty() {
                self.cloud.store.save(&obj)?;
                self.transcript.push(
                    "csp".into(),
                    "sweep",
                    format!("object={object_id} deleted={deleted:?} epoch={}", obj.current_epoch),
                );
                performed.push((object_id, deleted));
            }
        }
        if performed.is_empty() {
            self.transcript.push("csp".into(), "sweep", "nothing expired".into());
        }
        Ok(performed)
    }

    /// Close and reopen the cloud store from disk.
    pub fn csp_restart(&mut self) -> Result<()> {
        let root = self.cloud.store.root().to_path_buf();
        self.cloud.store = ObjectStore::open(root)?;
        self.cloud.reload_routing()?;
        self.transcript.push("csp".into(), "restart", "store reopened".into());
        Ok(())
    }

    /// User access: fetch the published ciphertext, match-then-decrypt,
    /// open every sealed payload. Returns the payloads on success.
    pub fn du_access(&mut self, user: &str, object_id: &str) -> Result<Vec<Vec<u8>>> {
        let user_state = self
            .users
            .get(user)
            .ok_or_else(|| Error::ProtocolOrder(format!("unknown user `{user}`")))?;
        self.transcript.push(format!("du:{user}"), "access-request", format!("object={object_id}"));
        let owner = self.owner_of_object(object_id)?;
        let (pp, _) = self
            .cloud
            .owner_materials
            .get(&owner)
            .cloned()
            .ok_or_else(|| Error::ProtocolOrder(format!("cloud has no materials for `{owner}`")))?;
        let obj = self.cloud.store.load(object_id)?;
        let outcome = self.try_decrypt(&obj, &pp, &user_state.key, object_id);
        match &outcome {
            Ok(_) => {
                self.transcript.push(format!("du:{user}"), "access", format!("object={object_id} ok"));
            }
            Err(e) => {
                self.transcript.push(
                    format!("du:{user}"),
                    "access",
                    format!("object={object_id} denied ({e})"),
                );
            }
        }
        outcome
    }

    fn try_decrypt(
        &self,
        obj: &StoredObject,
        pp: &DataPublicParams,
        key: &AttrSecretKey,
        object_id: &str,
    ) -> Result<Vec<Vec<u8>>> {
        let published = obj
            .published
            .as_ref()
            .ok_or_else(|| Error::NotPublished(object_id.to_string()))?;
        let decryption = anon_decrypt(&self.ctx, pp, published, key)?;
        let mut payloads = Vec::with_capacity(decryption.messages.len());
        for (index, session) in decryption.messages.iter().enumerate() {
            let sealed = self.cloud.store.load_payload(object_id, index)?;
            payloads.push(open_payload(session, &sealed)?);
        }
        Ok(payloads)
    }

    /// Run a parsed scenario script.
    pub fn run_script(&mut self, text: &str) -> Result<()> {
        let actions = parse_script(text)?;
        for action in actions {
            script::execute(self, action)?;
        }
        Ok(())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Direct key accessor for tests that compare against owner-side state.
    pub fn user_key(&self, user: &str) -> Option<&AttrSecretKey> {
        self.users.get(user).map(|u| &u.key)
    }

    /// Device pool length (tests: pool discipline).
    pub fn dev_pool_len(&self, name: &str) -> Option<usize> {
        self.devices.get(name).map(|d| d.pool.len())
    }

    /// Owner-side public params, for test oracles.
    pub fn owner_pp(&self, owner: &str) -> Option<&DataPublicParams> {
        self.owners.get(owner).map(|o| &o.pp)
    }

    pub fn store(&self) -> &ObjectStore {
        &self.cloud.store
    }
}

/// Convenience: build a harness in `state_dir`, run the script, return the
/// transcript.
pub fn run_scenario(state_dir: impl Into<PathBuf>, seed: u64, script_text: &str) -> Result<Transcript> {
    let mut harness = Harness::new(state_dir, seed)?;
    harness.run_script(script_text)?;
    Ok(harness.transcript.clone())
}
