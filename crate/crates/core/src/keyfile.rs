//! Plain-text key files.
//!
//! A private key file holds `n`, `lambda`, `mu`, `p`, `q` as lowercase hex,
//! one `key = value` pair per line; the companion public file (same path
//! with a `.pub` suffix) holds `n` alone. Derived parameters (key length,
//! word count) are recomputed on load, never stored. Private key files are
//! written with owner-only permissions.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bignum::BigUint;
use crate::paillier::{KeyPair, PaillierError, PublicKey};

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed key file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error(transparent)]
    Key(#[from] PaillierError),
}

/// Path of the public companion of a private key file.
pub fn public_path(private: &Path) -> PathBuf {
    let mut os = private.as_os_str().to_os_string();
    os.push(".pub");
    PathBuf::from(os)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KeyFileError + '_ {
    move |source| KeyFileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write the private key file at `path` and the public file at `path.pub`.
pub fn save_keypair(kp: &KeyPair, path: &Path) -> Result<(), KeyFileError> {
    let body = format!(
        "# paillier private key\nn = {}\nlambda = {}\nmu = {}\np = {}\nq = {}\n",
        kp.public.n().to_hex(),
        kp.private.lambda().to_hex(),
        kp.private.mu().to_hex(),
        kp.private.p().to_hex(),
        kp.private.q().to_hex(),
    );
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        f.set_permissions(fs::Permissions::from_mode(0o600))
            .map_err(io_err(path))?;
    }
    f.write_all(body.as_bytes()).map_err(io_err(path))?;

    let pub_path = public_path(path);
    let pub_body = format!("# paillier public key\nn = {}\n", kp.public.n().to_hex());
    fs::write(&pub_path, pub_body).map_err(io_err(&pub_path))?;
    Ok(())
}

fn parse_fields(path: &Path, text: &str) -> Result<Vec<(String, String)>, KeyFileError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| KeyFileError::Malformed {
            path: path.to_path_buf(),
            reason: format!("expected `key = value`, got {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn field(path: &Path, fields: &[(String, String)], name: &str) -> Result<BigUint, KeyFileError> {
    let raw = fields
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v)
        .ok_or_else(|| KeyFileError::Malformed {
            path: path.to_path_buf(),
            reason: format!("missing field {name}"),
        })?;
    BigUint::from_hex(raw).map_err(|_| KeyFileError::Malformed {
        path: path.to_path_buf(),
        reason: format!("field {name} is not valid hex"),
    })
}

/// Load and revalidate a private key file.
pub fn load_keypair(path: &Path) -> Result<KeyPair, KeyFileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let fields = parse_fields(path, &text)?;
    let n = field(path, &fields, "n")?;
    let lambda = field(path, &fields, "lambda")?;
    let mu = field(path, &fields, "mu")?;
    let p = field(path, &fields, "p")?;
    let q = field(path, &fields, "q")?;
    Ok(KeyPair::from_components(&n, &lambda, &mu, &p, &q)?)
}

/// Load a public key file (just `n`).
pub fn load_public(path: &Path) -> Result<PublicKey, KeyFileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let fields = parse_fields(path, &text)?;
    let n = field(path, &fields, "n")?;
    Ok(PublicKey::from_n(n)?)
}
