//! Policy persistence: a short text header followed by the raw parameters
//! as little-endian `f64`.
//!
//! ```text
//! SWEEPRL1
//! arch input=19 hidden=64,64 heads=8,1 kind=actor-critic
//! obs mode=local dnut=1 dnut_distance=1 heading=1
//! meta algo=ppo episodes=10000 seed=0 config=<sha256 hex>
//! params 5513
//! <5513 × 8 bytes>
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::neural::{Architecture, NeuralError, Network};
use crate::percept::{ObservationConfig, ObservationMode};

pub const MAGIC: &str = "SWEEPRL1";

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("not a policy file (bad magic)")]
    BadMagic,
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("policy file is truncated: {0}")]
    TruncatedFile(String),
    #[error("malformed policy header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicyMeta {
    pub algo: String,
    pub episodes: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub arch: Architecture,
    pub obs: ObservationConfig,
    pub meta: PolicyMeta,
    pub params: Vec<f64>,
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn flag(b: bool) -> u8 {
    b as u8
}

impl PolicyFile {
    pub fn new(net: &Network, obs: ObservationConfig, meta: PolicyMeta) -> Self {
        Self {
            arch: net.architecture().clone(),
            obs,
            meta,
            params: net.params().to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = format!(
            "{MAGIC}\narch input={} hidden={} heads={} kind={}\nobs mode={} dnut={} dnut_distance={} heading={}\nmeta algo={} episodes={} seed={} config={}\nparams {}\n",
            self.arch.input,
            join(&self.arch.hidden),
            join(&self.arch.heads),
            self.arch.kind.as_str(),
            self.obs.mode,
            flag(self.obs.dnut),
            flag(self.obs.dnut_distance),
            flag(self.obs.heading),
            self.meta.algo,
            self.meta.episodes,
            self.meta.seed,
            self.meta.config_hash,
            self.params.len(),
        );
        let mut out = header.into_bytes();
        out.reserve(self.params.len() * 8);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyFileError> {
        if !bytes.starts_with(MAGIC.as_bytes()) || bytes.get(MAGIC.len()) != Some(&b'\n') {
            return Err(PolicyFileError::BadMagic);
        }
        let mut rest = &bytes[MAGIC.len() + 1..];
        let mut next_line = |what: &str| -> Result<String, PolicyFileError> {
            let end = rest
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| PolicyFileError::TruncatedFile(format!("missing {what} line")))?;
            let line = std::str::from_utf8(&rest[..end])
                .map_err(|_| PolicyFileError::Header(format!("{what} line is not UTF-8")))?
                .to_string();
            rest = &rest[end + 1..];
            Ok(line)
        };
        let arch_line = next_line("arch")?;
        let obs_line = next_line("obs")?;
        let meta_line = next_line("meta")?;
        let params_line = next_line("params")?;

        let arch_kv = fields(&arch_line, "arch")?;
        let arch = Architecture {
            input: parse_num(get(&arch_kv, "input")?)?,
            hidden: parse_list(get(&arch_kv, "hidden")?)?,
            heads: parse_list(get(&arch_kv, "heads")?)?,
            kind: get(&arch_kv, "kind")?
                .parse()
                .map_err(PolicyFileError::Header)?,
        };
        let obs_kv = fields(&obs_line, "obs")?;
        let obs = ObservationConfig {
            mode: get(&obs_kv, "mode")?
                .parse::<ObservationMode>()
                .map_err(PolicyFileError::Header)?,
            dnut: get(&obs_kv, "dnut")? == "1",
            dnut_distance: get(&obs_kv, "dnut_distance")? == "1",
            heading: get(&obs_kv, "heading")? == "1",
        };
        let meta_kv = fields(&meta_line, "meta")?;
        let meta = PolicyMeta {
            algo: get(&meta_kv, "algo")?.to_string(),
            episodes: parse_num(get(&meta_kv, "episodes")?)?,
            seed: parse_num(get(&meta_kv, "seed")?)?,
            config_hash: get(&meta_kv, "config")?.to_string(),
        };
        let count: usize = params_line
            .strip_prefix("params ")
            .ok_or_else(|| PolicyFileError::Header("expected `params N`".into()))
            .and_then(parse_num)?;
        if count != arch.param_count() {
            return Err(PolicyFileError::ArchMismatch(format!(
                "header declares {count} parameters, architecture needs {}",
                arch.param_count()
            )));
        }
        if rest.len() != count * 8 {
            return Err(PolicyFileError::TruncatedFile(format!(
                "payload has {} bytes, expected {}",
                rest.len(),
                count * 8
            )));
        }
        let params = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self {
            arch,
            obs,
            meta,
            params,
        })
    }

    pub fn network(&self) -> Result<Network, NeuralError> {
        Network::from_params(self.arch.clone(), self.params.clone())
    }

    /// Fails unless the stored architecture equals `expected`.
    pub fn check_architecture(&self, expected: &Architecture) -> Result<(), PolicyFileError> {
        if &self.arch != expected {
            return Err(PolicyFileError::ArchMismatch(format!(
                "file has {:?}, caller needs {:?}",
                self.arch, expected
            )));
        }
        Ok(())
    }

    /// Fails unless the policy can read observations of a `width × height` map.
    pub fn check_map(&self, width: usize, height: usize) -> Result<(), PolicyFileError> {
        let got = self.obs.len(width, height);
        if got != self.arch.input {
            return Err(PolicyFileError::ArchMismatch(format!(
                "policy takes {} inputs, a {width}x{height} map with {} observations gives {got}",
                self.arch.input, self.obs.mode
            )));
        }
        Ok(())
    }
}

fn fields<'a>(line: &'a str, tag: &str) -> Result<Vec<(&'a str, &'a str)>, PolicyFileError> {
    let mut parts = line.split(' ');
    if parts.next() != Some(tag) {
        return Err(PolicyFileError::Header(format!("expected `{tag}` line")));
    }
    parts
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| PolicyFileError::Header(format!("bad field `{p}`")))
        })
        .collect()
}

fn get<'a>(kv: &[(&'a str, &'a str)], key: &str) -> Result<&'a str, PolicyFileError> {
    kv.iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| PolicyFileError::Header(format!("missing `{key}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, PolicyFileError> {
    s.parse()
        .map_err(|_| PolicyFileError::Header(format!("bad number `{s}`")))
}

fn parse_list(s: &str) -> Result<Vec<usize>, PolicyFileError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_num).collect()
}

pub fn save_policy(file: &PolicyFile, path: &Path) -> Result<(), PolicyFileError> {
    fs::write(path, file.to_bytes())?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyFile, PolicyFileError> {
    PolicyFile::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PolicyFile {
        let net = Network::new(Architecture::actor_critic(19, &[8, 8], 8), 5);
        PolicyFile::new(
            &net,
            ObservationConfig::default(),
            PolicyMeta {
                algo: "ppo".into(),
                episodes: 10,
                seed: 5,
                config_hash: "abc".into(),
            },
        )
    }

    #[test]
    fn bytes_roundtrip_bit_exact() {
        let f = sample();
        let back = PolicyFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.arch, f.arch);
        assert_eq!(back.meta, f.meta);
        assert_eq!(back.obs, f.obs);
        let a: Vec<u64> = f.params.iter().map(|p| p.to_bits()).collect();
        let b: Vec<u64> = back.params.iter().map(|p| p.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(PolicyFile::from_bytes(&bytes), Err(PolicyFileError::BadMagic)));
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            PolicyFile::from_bytes(&bytes),
            Err(PolicyFileError::TruncatedFile(_))
        ));
        assert!(matches!(
            PolicyFile::from_bytes(b"SWEEPRL1\narch input=1"),
            Err(PolicyFileError::TruncatedFile(_))
        ));
    }

    #[test]
    fn global_policy_rejected_on_other_map() {
        let net = Network::new(Architecture::actor_critic(75, &[8], 8), 0);
        let f = PolicyFile::new(&net, ObservationConfig::global(), PolicyMeta::default());
        assert!(f.check_map(5, 5).is_ok());
        assert!(matches!(f.check_map(20, 20), Err(PolicyFileError::ArchMismatch(_))));
        assert!(matches!(
            f.check_architecture(&Architecture::actor_critic(19, &[8], 8)),
            Err(PolicyFileError::ArchMismatch(_))
        ));
    }
}
