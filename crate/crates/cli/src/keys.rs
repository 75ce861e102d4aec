//! Named key files: `<name>.secret.json` (owner-only) and
//! `<name>.identity.json`.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use props_core::crypto::SecretKeyFile;
use props_core::{keygen, Canonical, KeyIdentity, KeyRole, SecretKey};

pub fn secret_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.secret.json"))
}

pub fn identity_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.identity.json"))
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.' | b'@'))
        && !name.starts_with('.');
    if !ok {
        bail!("invalid key name {name:?}");
    }
    Ok(())
}

fn write_new(path: &Path, bytes: &[u8], mode: u32) -> Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(mode);
    }
    #[cfg(not(unix))]
    let _ = mode;
    let mut f = opts
        .open(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    f.write_all(bytes)?;
    Ok(())
}

/// Writes a fresh key pair under `name`. Refuses to overwrite.
pub fn write_key(dir: &Path, name: &str, key: &SecretKey) -> Result<KeyIdentity> {
    check_name(name)?;
    fs::create_dir_all(dir)?;
    let secret = secret_path(dir, name);
    let identity = identity_path(dir, name);
    if secret.exists() || identity.exists() {
        bail!("Exists: key {name:?} already present in {}", dir.display());
    }
    let file = SecretKeyFile::from(key);
    write_new(&secret, &serde_json::to_vec_pretty(&file)?, 0o600)?;
    let id = key.identity();
    write_new(&identity, id.to_json_pretty().as_bytes(), 0o644)?;
    Ok(id)
}

pub fn cmd_keygen(dir: &Path, role: KeyRole, name: &str) -> Result<KeyIdentity> {
    let (key, _) = keygen(role);
    write_key(dir, name, &key)
}

pub fn read_secret(path: &Path) -> Result<SecretKey> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let file: SecretKeyFile = serde_json::from_str(&text).with_context(|| format!("bad key file {}", path.display()))?;
    SecretKey::try_from(file).map_err(|e| anyhow!("bad key file {}: {e}", path.display()))
}

/// Re-validates an identity file: strict parse plus fingerprint recomputation.
pub fn read_identity(path: &Path) -> Result<KeyIdentity> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let id = KeyIdentity::from_json(&text).map_err(|e| anyhow!("bad identity {}: {e}", path.display()))?;
    if !id.is_well_formed() {
        bail!("identity {} does not match its public key", path.display());
    }
    Ok(id)
}

/// Keys used by one run, persisted under `dir` as they are created. Existing
/// files are reused so a provisioned directory pins identities across runs.
pub struct KeyRing {
    dir: PathBuf,
    keys: BTreeMap<String, SecretKey>,
}

impl KeyRing {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(KeyRing {
            dir: dir.to_path_buf(),
            keys: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&mut self, name: &str, role: KeyRole) -> Result<SecretKey> {
        if let Some(k) = self.keys.get(name) {
            if k.role() != role {
                bail!("key {name:?} has role {}, wanted {role}", k.role());
            }
            return Ok(k.clone());
        }
        let path = secret_path(&self.dir, name);
        let key = if path.exists() {
            let k = read_secret(&path)?;
            if k.role() != role {
                bail!("key file {} has role {}, wanted {role}", path.display(), k.role());
            }
            k
        } else {
            let (k, _) = keygen(role);
            write_key(&self.dir, name, &k)?;
            k
        };
        self.keys.insert(name.to_string(), key.clone());
        Ok(key)
    }

    pub fn identity(&mut self, name: &str, role: KeyRole) -> Result<KeyIdentity> {
        Ok(self.get(name, role)?.identity())
    }
}
