//! Operator CLI. Every role's actions run against a state directory:
//! authority keys under `aa/`, owner parameters under `owner/`, the device
//! pool under `dev/pool/`, and the cloud store under `csp-store/`.
//!
//! Exit codes: 0 on success, 1 on protocol rejection (no matching gate,
//! payload authentication failure, unpublished object), 2 on malformed
//! input or state.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use habe_core::algebra::{PairingContext, TargetElem};
use habe_core::bench::{bench_run, BenchConfig};
use habe_core::error::Error;
use habe_core::harness::{Harness, ObjectStore};
use habe_core::lifecycle::{ReencryptionContext, StoredObject};
use habe_core::payload::{open_payload, seal_payload};
use habe_core::policy::{AttributeList, Policy, Universe};
use habe_core::scheme::{
    anon_decrypt, anon_encrypt, attr_keygen, offline_encrypt, online_encrypt, owner_param_setup,
    reenc_keygen, system_setup, AttrSecretKey, DataPublicParams, DataSecretParams, OfflineCiphertext,
    ReencKey, SystemMasterKey, SystemPublicKey,
};
use habe_core::wire::{decode, encode, measure, WireFormat};

#[derive(Parser)]
#[command(name = "habe", about = "Hidden-policy attribute-based access control", version)]
struct Cli {
    /// State directory holding keys, the device pool and the cloud store.
    #[arg(long, default_value = "habe-state", global = true)]
    state: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Authority: generate the system key pair.
    Setup,
    /// Authority: issue an attribute secret key.
    Keygen {
        /// Comma-separated selections, e.g. "dept=cardio,role=doctor".
        #[arg(long)]
        attrs: String,
        /// Output key file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Data owner: generate public/secret parameters.
    OwnerSetup,
    /// Data owner: generate the re-encryption key (shared with the cloud).
    Rkey,
    /// Device: pre-generate offline ciphertexts into the pool.
    EncOffline {
        #[arg(long, default_value_t = 16)]
        pool: usize,
    },
    /// Device: encrypt a file with one pooled offline ciphertext and
    /// upload it.
    EncOnline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        object: String,
    },
    /// Data owner: define and upload the hidden policy for an object.
    Policy {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        object: String,
        /// Per-gate expirations, e.g. "1:+3600,2:+7200" (gate ordinal,
        /// seconds from the current virtual clock).
        #[arg(long)]
        expire: Option<String>,
    },
    /// Cloud: re-encrypt and publish an object.
    Reencrypt {
        #[arg(long)]
        object: String,
        /// Target epoch; defaults to current + 1 and must exceed the
        /// current epoch.
        #[arg(long)]
        epoch: Option<u64>,
    },
    /// Data user: match, decrypt and open an object's payloads.
    Decrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        object: String,
        /// Output file (first payload); parts beyond the first go to
        /// OUT.partN.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Policy updates executed by the cloud.
    Update {
        #[command(subcommand)]
        action: UpdateAction,
    },
    /// Counter-asserting benchmark grid (CSV by default).
    Bench {
        /// Attribute counts to sweep, comma separated.
        #[arg(long, default_value = "10,20,30,40,50")]
        ns: String,
        #[arg(long, default_value_t = 10)]
        ni: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 3)]
        trials: u32,
        /// Seed; the HABE_SEED environment variable overrides the default.
        #[arg(long)]
        seed: Option<u64>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Emit JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Run a multi-actor scenario script.
    Scenario {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the transcript here in addition to stdout.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Show element counts and byte size of an encoded object file.
    Measure {
        file: PathBuf,
    },
}

#[derive(Subcommand)]
enum UpdateAction {
    /// Delete one gate (revocation); republishes at the next epoch.
    Delete {
        #[arg(long)]
        object: String,
        #[arg(long)]
        gate: u64,
    },
    /// Add one gate (grant); appends at the current epoch.
    Add {
        #[arg(long)]
        object: String,
        /// Policy file containing exactly one gate.
        #[arg(long)]
        file: PathBuf,
        /// Expiration, seconds from the current virtual clock ("+3600").
        #[arg(long)]
        expire: Option<String>,
    },
    /// Delete every expired gate; advances the virtual clock first if
    /// requested.
    Sweep {
        /// Advance the virtual clock by this many seconds before sweeping.
        #[arg(long)]
        advance: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::AccessDenied | Error::PayloadAuth | Error::NotPublished(_) => {
                    ExitCode::from(1)
                }
                _ => ExitCode::from(2),
            }
        }
    }
}

struct Paths {
    state: PathBuf,
}

impl Paths {
    fn universe(&self) -> PathBuf {
        self.state.join("universe.toml")
    }
    fn pk(&self) -> PathBuf {
        self.state.join("aa").join("pk.bin")
    }
    fn mk(&self) -> PathBuf {
        self.state.join("aa").join("mk.bin")
    }
    fn pp(&self) -> PathBuf {
        self.state.join("owner").join("pp.bin")
    }
    fn sp(&self) -> PathBuf {
        self.state.join("owner").join("sp.bin")
    }
    fn rk(&self) -> PathBuf {
        self.state.join("owner").join("rk.bin")
    }
    fn pool(&self) -> PathBuf {
        self.state.join("dev").join("pool")
    }
    fn store(&self) -> PathBuf {
        self.state.join("csp-store")
    }
    fn clock(&self) -> PathBuf {
        self.state.join("clock.json")
    }
}

fn read_object<T: WireFormat>(path: &Path) -> Result<T, Error> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Decode(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes)
}

fn write_object<T: WireFormat>(path: &Path, value: &T) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, encode(value)?)?;
    Ok(())
}

fn load_universe(paths: &Paths) -> Result<Universe, Error> {
    let path = paths.universe();
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Decode(format!(
            "cannot read {} (copy a universe file into the state directory): {e}",
            path.display()
        ))
    })?;
    Universe::from_toml(&text)
}

fn load_clock(paths: &Paths) -> u64 {
    fs::read_to_string(paths.clock())
        .ok()
        .and_then(|s| serde_json::from_str::<u64>(&s).ok())
        .unwrap_or(0)
}

fn save_clock(paths: &Paths, now: u64) -> Result<(), Error> {
    fs::create_dir_all(&paths.state)?;
    fs::write(paths.clock(), serde_json::to_string(&now).unwrap())?;
    Ok(())
}

fn parse_attr_pairs(spec: &str) -> Result<Vec<(&str, &str)>, Error> {
    spec.split(',')
        .map(|part| {
            part.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::invalid("attrs", vec![format!("bad selection `{part}`")]))
        })
        .collect()
}

/// "1:+3600,2:+7200" against the current clock.
fn parse_expirations(
    spec: Option<&str>,
    gate_count: usize,
    now: u64,
) -> Result<Vec<Option<u64>>, Error> {
    let mut out = vec![None; gate_count];
    let Some(spec) = spec else { return Ok(out) };
    for part in spec.split(',') {
        let (ordinal, offset) = part
            .split_once(':')
            .ok_or_else(|| Error::invalid("expire", vec![format!("bad entry `{part}`")]))?;
        let ordinal: usize = ordinal
            .trim()
            .parse()
            .map_err(|_| Error::invalid("expire", vec![format!("bad ordinal `{ordinal}`")]))?;
        if ordinal == 0 || ordinal > gate_count {
            return Err(Error::invalid(
                "expire",
                vec![format!("ordinal {ordinal} out of range 1..={gate_count}")],
            ));
        }
        let secs: u64 = offset
            .trim()
            .strip_prefix('+')
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid("expire", vec![format!("bad offset `{offset}`")]))?;
        out[ordinal - 1] = Some(now + secs);
    }
    Ok(out)
}

fn rng_from_entropy() -> ChaCha20Rng {
    let mut seed = [0u8; 32];
    OsRng.fill_bytes(&mut seed);
    ChaCha20Rng::from_seed(seed)
}

fn run(cli: Cli) -> Result<(), Error> {
    let paths = Paths { state: cli.state.clone() };
    let ctx = PairingContext::new();
    match cli.command {
        Command::Setup => {
            let mut rng = rng_from_entropy();
            let (pk, mk) = system_setup(&ctx, &mut rng);
            write_object(&paths.pk(), &pk)?;
            write_object(&paths.mk(), &mk)?;
            println!("system keys written to {}", paths.state.join("aa").display());
            Ok(())
        }
        Command::Keygen { attrs, out } => {
            let universe = load_universe(&paths)?;
            let pk: SystemPublicKey = read_object(&paths.pk())?;
            let mk: SystemMasterKey = read_object(&paths.mk())?;
            let list = AttributeList::from_pairs(&universe, parse_attr_pairs(&attrs)?)?;
            let mut rng = rng_from_entropy();
            let key = attr_keygen(&ctx, &pk, &mk, &universe, &list, &mut rng)?;
            write_object(&out, &key)?;
            let report = measure(&key)?;
            println!(
                "attribute key written to {} ({} group elements, {} bytes)",
                out.display(),
                report.group_elems,
                report.total_bytes
            );
            Ok(())
        }
        Command::OwnerSetup => {
            let pk: SystemPublicKey = read_object(&paths.pk())?;
            let mut rng = rng_from_entropy();
            let (pp, sp) = owner_param_setup(&pk, &ctx, &mut rng);
            write_object(&paths.pp(), &pp)?;
            write_object(&paths.sp(), &sp)?;
            println!("owner parameters written to {}", paths.state.join("owner").display());
            Ok(())
        }
        Command::Rkey => {
            let mut rng = rng_from_entropy();
            let rk = reenc_keygen(&mut rng);
            write_object(&paths.rk(), &rk)?;
            println!("re-encryption key written to {} (owner <-> cloud)", paths.rk().display());
            Ok(())
        }
        Command::EncOffline { pool } => {
            let pk: SystemPublicKey = read_object(&paths.pk())?;
            let pp: DataPublicParams = read_object(&paths.pp())?;
            fs::create_dir_all(paths.pool())?;
            let mut rng = rng_from_entropy();
            let existing = pool_entries(&paths)?.len();
            for i in 0..pool {
                let ct = offline_encrypt(&pk, &pp, &mut rng);
                write_object(&paths.pool().join(format!("off_{:06}.bin", existing + i)), &ct)?;
            }
            println!("pool now holds {} offline ciphertexts", existing + pool);
            Ok(())
        }
        Command::EncOnline { input, object } => {
            let entries = pool_entries(&paths)?;
            let Some(entry) = entries.last() else {
                return Err(Error::EmptyPool);
            };
            let mut offline: OfflineCiphertext = read_object(entry)?;
            let plaintext = fs::read(&input)?;
            let mut rng = rng_from_entropy();
            let session = TargetElem::random(&ctx, &mut rng);
            let message = online_encrypt(&session, &mut offline)?;
            let sealed = seal_payload(&session, &plaintext, &mut rng);
            fs::remove_file(entry)?;

            let store = ObjectStore::open(paths.store())?;
            let mut obj = if store.exists(&object) {
                store.load(&object)?
            } else {
                StoredObject::new(object.clone())
            };
            let index = obj.messages.len();
            obj.add_message(load_clock(&paths), message);
            store.save(&obj)?;
            store.save_payload(&object, index, &sealed)?;
            println!(
                "uploaded part {index} of object `{object}` ({} payload bytes, pool {} left)",
                plaintext.len(),
                entries.len() - 1
            );
            Ok(())
        }
        Command::Policy { file, object, expire } => {
            let universe = load_universe(&paths)?;
            let pk: SystemPublicKey = read_object(&paths.pk())?;
            let pp: DataPublicParams = read_object(&paths.pp())?;
            let sp: DataSecretParams = read_object(&paths.sp())?;
            let rk: ReencKey = read_object(&paths.rk())?;
            let policy = Policy::from_toml(&universe, &fs::read_to_string(&file)?)?;
            let now = load_clock(&paths);
            let expirations = parse_expirations(expire.as_deref(), policy.gates.len(), now)?;
            let mut rng = rng_from_entropy();
            let gates = anon_encrypt(&ctx, &pk, &pp, &sp, &rk, &universe, &policy, &mut rng)?;

            let store = ObjectStore::open(paths.store())?;
            let mut obj = if store.exists(&object) {
                store.load(&object)?
            } else {
                StoredObject::new(object.clone())
            };
            let ids = obj.set_policy(now, gates, expirations)?;
            store.save(&obj)?;
            println!("policy with gates {ids:?} uploaded for object `{object}`");
            Ok(())
        }
        Command::Reencrypt { object, epoch } => {
            let (store, pk, pp, rk) = cloud_materials(&paths)?;
            let mut obj = store.load(&object)?;
            if let Some(target) = epoch {
                if target != obj.current_epoch + 1 {
                    return Err(Error::InvalidEpoch {
                        requested: target,
                        reason: format!("next epoch for `{object}` is {}", obj.current_epoch + 1),
                    });
                }
            }
            let cx = ReencryptionContext { ctx: &ctx, pk: &pk, pp: &pp, rk: &rk };
            let mut rng = rng_from_entropy();
            let uct = obj.publish(&cx, load_clock(&paths), &mut rng)?;
            println!("object `{object}` published at epoch {}", uct.epoch);
            store.save(&obj)?;
            Ok(())
        }
        Command::Decrypt { key, object, out } => {
            let pp: DataPublicParams = read_object(&paths.pp())?;
            let sk: AttrSecretKey = read_object(&key)?;
            let store = ObjectStore::open(paths.store())?;
            let obj = store.load(&object)?;
            let published =
                obj.published.as_ref().ok_or_else(|| Error::NotPublished(object.clone()))?;
            let decryption = anon_decrypt(&ctx, &pp, published, &sk)?;
            let mut payloads = Vec::new();
            for (index, session) in decryption.messages.iter().enumerate() {
                let sealed = store.load_payload(&object, index)?;
                payloads.push(open_payload(session, &sealed)?);
            }
            match out {
                Some(base) => {
                    for (index, payload) in payloads.iter().enumerate() {
                        let path = if index == 0 {
                            base.clone()
                        } else {
                            base.with_extension(format!("part{index}"))
                        };
                        fs::write(&path, payload)?;
                        println!("part {index}: {} bytes -> {}", payload.len(), path.display());
                    }
                }
                None => {
                    for (index, payload) in payloads.iter().enumerate() {
                        println!(
                            "part {index}: {} bytes (matched gate {})",
                            payload.len(),
                            decryption.gate_index + 1
                        );
                    }
                }
            }
            Ok(())
        }
        Command::Update { action } => run_update(&paths, &ctx, action),
        Command::Bench { ns, ni, m, trials, seed, csv, json } => {
            let attr_counts = ns
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::invalid("ns", vec![format!("bad count `{v}`")]))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let seed = seed
                .or_else(|| std::env::var("HABE_SEED").ok().and_then(|v| v.parse().ok()))
                .unwrap_or(7);
            let cfg = BenchConfig { attr_counts, values_per_attr: ni, gate_count: m, trials, seed };
            let report = bench_run(&cfg)?;
            let rendered = if json { report.to_json() } else { report.to_csv() };
            match csv {
                Some(path) => {
                    fs::write(&path, rendered)?;
                    println!("benchmark report written to {}", path.display());
                }
                None => print!("{rendered}"),
            }
            Ok(())
        }
        Command::Scenario { script, seed, transcript } => {
            let text = fs::read_to_string(&script)?;
            let mut harness = Harness::new(&cli.state, seed.unwrap_or(0))?;
            let outcome = harness.run_script(&text);
            print!("{}", harness.transcript().render());
            if let Some(path) = transcript {
                fs::write(&path, harness.transcript().render())?;
            }
            outcome
        }
        Command::Measure { file } => {
            let bytes = fs::read(&file)?;
            let report = measure_any(&bytes)?;
            println!(
                "{}: {} G + {} G_T + {} scalars, {} bytes",
                file.display(),
                report.group_elems,
                report.target_elems,
                report.scalars,
                report.total_bytes
            );
            Ok(())
        }
    }
}

fn run_update(paths: &Paths, ctx: &PairingContext, action: UpdateAction) -> Result<(), Error> {
    match action {
        UpdateAction::Delete { object, gate } => {
            let (store, pk, pp, rk) = cloud_materials(paths)?;
            let mut obj = store.load(&object)?;
            let cx = ReencryptionContext { ctx, pk: &pk, pp: &pp, rk: &rk };
            let mut rng = rng_from_entropy();
            let published = obj.delete_gate(&cx, load_clock(paths), gate, &mut rng)?.is_some();
            println!(
                "gate {gate} deleted from `{object}`; epoch {} ({})",
                obj.current_epoch,
                if published { "republished" } else { "object now unpublished" }
            );
            store.save(&obj)?;
            Ok(())
        }
        UpdateAction::Add { object, file, expire } => {
            let universe = load_universe(paths)?;
            let pk: SystemPublicKey = read_object(&paths.pk())?;
            let pp: DataPublicParams = read_object(&paths.pp())?;
            let sp: DataSecretParams = read_object(&paths.sp())?;
            let rk: ReencKey = read_object(&paths.rk())?;
            let policy = Policy::from_toml(&universe, &fs::read_to_string(&file)?)?;
            if policy.gates.len() != 1 {
                return Err(Error::invalid(
                    "policy",
                    vec![format!("addition takes exactly one gate, got {}", policy.gates.len())],
                ));
            }
            let now = load_clock(paths);
            let expires_at = match expire.as_deref() {
                None => None,
                Some(offset) => Some(
                    now + offset
                        .strip_prefix('+')
                        .and_then(|v| v.parse::<u64>().ok())
                        .ok_or_else(|| {
                            Error::invalid("expire", vec![format!("bad offset `{offset}`")])
                        })?,
                ),
            };
            let mut rng = rng_from_entropy();
            let pair =
                anon_encrypt(ctx, &pk, &pp, &sp, &rk, &universe, &policy, &mut rng)?.remove(0);

            let store = ObjectStore::open(paths.store())?;
            let mut obj = store.load(&object)?;
            let cx = ReencryptionContext { ctx, pk: &pk, pp: &pp, rk: &rk };
            obj.add_gate(&cx, now, pair, expires_at, &mut rng)?;
            println!(
                "gate {} added to `{object}` at epoch {}",
                obj.next_gate_id() - 1,
                obj.current_epoch
            );
            store.save(&obj)?;
            Ok(())
        }
        UpdateAction::Sweep { advance } => {
            let mut now = load_clock(paths);
            if let Some(secs) = advance {
                now += secs;
                save_clock(paths, now)?;
            }
            let (store, pk, pp, rk) = cloud_materials(paths)?;
            let cx = ReencryptionContext { ctx, pk: &pk, pp: &pp, rk: &rk };
            let mut rng = rng_from_entropy();
            let mut total = 0usize;
            for object in store.list()? {
                let mut obj = store.load(&object)?;
                let deleted = obj.sweep_expirations(&cx, now, &mut rng)?;
                if !deleted.is_empty() {
                    println!(
                        "object `{object}`: deleted gates {deleted:?}, epoch {}",
                        obj.current_epoch
                    );
                    total += deleted.len();
                    store.save(&obj)?;
                }
            }
            println!("sweep at t={now}: {total} gates deleted");
            Ok(())
        }
    }
}

fn cloud_materials(
    paths: &Paths,
) -> Result<(ObjectStore, SystemPublicKey, DataPublicParams, ReencKey), Error> {
    let store = ObjectStore::open(paths.store())?;
    let pk: SystemPublicKey = read_object(&paths.pk())?;
    let pp: DataPublicParams = read_object(&paths.pp())?;
    let rk: ReencKey = read_object(&paths.rk())?;
    Ok((store, pk, pp, rk))
}

fn pool_entries(paths: &Paths) -> Result<Vec<PathBuf>, Error> {
    let dir = paths.pool();
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "bin"))
        .collect();
    entries.sort();
    Ok(entries)
}

/// Measure a file of unknown type by probing the envelope's type tag.
fn measure_any(bytes: &[u8]) -> Result<habe_core::wire::MeasureReport, Error> {
    use habe_core::scheme::*;
    if bytes.len() < 6 {
        return Err(Error::Decode("file too short for an envelope".into()));
    }
    let tag = bytes[5];
    macro_rules! try_measure {
        ($($ty:ty),+) => {
            $(if tag == <$ty as WireFormat>::TYPE_TAG {
                return measure(&decode::<$ty>(bytes)?);
            })+
        };
    }
    try_measure!(
        SystemPublicKey,
        SystemMasterKey,
        DataPublicParams,
        DataSecretParams,
        ReencKey,
        EpochSecret,
        AttrSecretKey,
        OfflineCiphertext,
        MessageCiphertext,
        GateCiphertext,
        BlindGatePolicy,
        CloudCiphertext,
        UserCiphertext,
        DataDecryptionKey
    );
    Err(Error::Decode(format!("unknown type tag {tag:#04x}")))
}
