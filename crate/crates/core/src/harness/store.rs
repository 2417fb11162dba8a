//! Directory-backed object store for the cloud role.
//!
//! Layout per object (under `<root>/<object_id>/`):
//!
//! * `cloud.bin`      -- epoch-0 message and policy parts (wire format)
//! * `meta.json`      -- epoch counter, gate ids, expirations
//! * `published.bin`  -- currently published user ciphertext, if any
//! * `log.jsonl`      -- append-only update log
//! * `payload_N.bin`  -- sealed payload for message part N
//!
//! Publishes are crash-consistent: files are written to a temp name and
//! atomically renamed, so a restart sees either the old or the new
//! publication, never a torn one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifecycle::{GateMeta, StoredObject, UpdateRecord};
use crate::scheme::{CloudCiphertext, UserCiphertext};
use crate::wire;

#[derive(Serialize, Deserialize)]
struct ObjectMeta {
    object_id: String,
    current_epoch: u64,
    next_gate_id: u64,
    gates: Vec<GateMeta>,
}

pub struct ObjectStore {
    root: PathBuf,
}

impl ObjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(ObjectStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_dir(&self, object_id: &str) -> Result<PathBuf> {
        if object_id.is_empty()
            || !object_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::invalid(
                "object id",
                vec![format!("`{object_id}` (use ASCII letters, digits, `-`, `_`)")],
            ));
        }
        Ok(self.root.join(object_id))
    }

    pub fn exists(&self, object_id: &str) -> bool {
        self.object_dir(object_id).map(|d| d.join("meta.json").exists()).unwrap_or(false)
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if entry.path().join("meta.json").exists() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    /// Persist the full object state. Meta and published form are replaced
    /// atomically; the log is rewritten from the object's record.
    pub fn save(&self, obj: &StoredObject) -> Result<()> {
        let dir = self.object_dir(&obj.object_id)?;
        fs::create_dir_all(&dir)?;

        let cloud = CloudCiphertext {
            object_id: obj.object_id.clone(),
            messages: obj.messages.clone(),
            gates: obj.gates.iter().map(|(_, pair)| pair.clone()).collect(),
        };
        // An object may exist before its policy arrives; store the message
        // parts bare in that case.
        if cloud.gates.is_empty() {
            let bare: Vec<Vec<u8>> =
                cloud.messages.iter().map(wire::encode).collect::<Result<_>>()?;
            atomic_write(&dir.join("cloud.bin"), &join_chunks(&bare))?;
        } else {
            atomic_write(&dir.join("cloud.bin"), &wire::encode(&cloud)?)?;
        }

        let meta = ObjectMeta {
            object_id: obj.object_id.clone(),
            current_epoch: obj.current_epoch,
            next_gate_id: obj.next_gate_id(),
            gates: obj.gates.iter().map(|(meta, _)| *meta).collect(),
        };
        atomic_write(
            &dir.join("meta.json"),
            serde_json::to_string_pretty(&meta)
                .map_err(|e| Error::Decode(e.to_string()))?
                .as_bytes(),
        )?;

        let published_path = dir.join("published.bin");
        match &obj.published {
            Some(uct) => atomic_write(&published_path, &wire::encode(uct)?)?,
            None => {
                if published_path.exists() {
                    fs::remove_file(&published_path)?;
                }
            }
        }

        let mut log_lines = String::new();
        for record in &obj.log {
            log_lines.push_str(
                &serde_json::to_string(record).map_err(|e| Error::Decode(e.to_string()))?,
            );
            log_lines.push('\n');
        }
        atomic_write(&dir.join("log.jsonl"), log_lines.as_bytes())?;
        Ok(())
    }

    pub fn load(&self, object_id: &str) -> Result<StoredObject> {
        let dir = self.object_dir(object_id)?;
        let meta_bytes = fs::read(dir.join("meta.json"))
            .map_err(|_| Error::UnknownObject(object_id.to_string()))?;
        let meta: ObjectMeta =
            serde_json::from_slice(&meta_bytes).map_err(|e| Error::Decode(e.to_string()))?;

        let cloud_bytes = fs::read(dir.join("cloud.bin"))?;
        let (messages, gate_pairs) = if meta.gates.is_empty() {
            let messages = split_chunks(&cloud_bytes)?
                .iter()
                .map(|chunk| wire::decode(chunk))
                .collect::<Result<_>>()?;
            (messages, Vec::new())
        } else {
            let cloud: CloudCiphertext = wire::decode(&cloud_bytes)?;
            if cloud.object_id != object_id {
                return Err(Error::Decode(format!(
                    "object id mismatch: dir says `{object_id}`, file says `{}`",
                    cloud.object_id
                )));
            }
            (cloud.messages, cloud.gates)
        };
        if gate_pairs.len() != meta.gates.len() {
            return Err(Error::Decode(format!(
                "meta lists {} gates, ciphertext has {}",
                meta.gates.len(),
                gate_pairs.len()
            )));
        }

        let published_path = dir.join("published.bin");
        let published: Option<UserCiphertext> = if published_path.exists() {
            Some(wire::decode(&fs::read(published_path)?)?)
        } else {
            None
        };

        let mut log = Vec::new();
        let log_path = dir.join("log.jsonl");
        if log_path.exists() {
            for line in fs::read_to_string(log_path)?.lines() {
                if !line.trim().is_empty() {
                    log.push(
                        serde_json::from_str::<UpdateRecord>(line)
                            .map_err(|e| Error::Decode(e.to_string()))?,
                    );
                }
            }
        }

        Ok(StoredObject::restore(
            meta.object_id,
            messages,
            meta.gates.into_iter().zip(gate_pairs).collect(),
            meta.current_epoch,
            published,
            log,
            meta.next_gate_id,
        ))
    }

    pub fn save_payload(&self, object_id: &str, index: usize, sealed: &[u8]) -> Result<()> {
        let dir = self.object_dir(object_id)?;
        fs::create_dir_all(&dir)?;
        atomic_write(&dir.join(format!("payload_{index}.bin")), sealed)
    }

    pub fn load_payload(&self, object_id: &str, index: usize) -> Result<Vec<u8>> {
        let dir = self.object_dir(object_id)?;
        fs::read(dir.join(format!("payload_{index}.bin"))).map_err(Error::Io)
    }

    pub fn payload_count(&self, object_id: &str) -> Result<usize> {
        let dir = self.object_dir(object_id)?;
        let mut count = 0;
        while dir.join(format!("payload_{count}.bin")).exists() {
            count += 1;
        }
        Ok(count)
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn join_chunks(chunks: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(chunks.len() as u32).to_be_bytes());
    for chunk in chunks {
        out.extend_from_slice(&(chunk.len() as u32).to_be_bytes());
        out.extend_from_slice(chunk);
    }
    out
}

fn split_chunks(bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    let take_u32 = |buf: &[u8], pos: usize| -> Result<u32> {
        buf.get(pos..pos + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::Decode("truncated chunk list".into()))
    };
    let count = take_u32(bytes, 0)? as usize;
    let mut pos = 4;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = take_u32(bytes, pos)? as usize;
        pos += 4;
        let chunk = bytes
            .get(pos..pos + len)
            .ok_or_else(|| Error::Decode("truncated chunk".into()))?;
        out.push(chunk.to_vec());
        pos += len;
    }
    Ok(out)
}
