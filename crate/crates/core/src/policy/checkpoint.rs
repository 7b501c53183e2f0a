//! Binary policy checkpoints.
//!
//! Layout (little endian): 8-byte magic `CPOPOLCY`, `u32` version, `u32`
//! observation size, `u32` hidden-layer count followed by each width,
//! `u8` head kind (0 categorical, 1 Gaussian), `u32` head size, `u64`
//! parameter count, then the parameters as `f64`.

use super::{Architecture, Head, ParamPolicy};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"CPOPOLCY";
const VERSION: u32 = 1;

pub fn write_policy<W: Write>(policy: &ParamPolicy, mut out: W) -> Result<()> {
    let arch = policy.arch();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(arch.obs_dim as u32).to_le_bytes())?;
    out.write_all(&(arch.hidden.len() as u32).to_le_bytes())?;
    for h in &arch.hidden {
        out.write_all(&(*h as u32).to_le_bytes())?;
    }
    let (kind, size) = match arch.head {
        Head::Categorical { n_actions } => (0u8, n_actions),
        Head::Gaussian { act_dim } => (1u8, act_dim),
    };
    out.write_all(&[kind])?;
    out.write_all(&(size as u32).to_le_bytes())?;
    out.write_all(&(policy.n_params() as u64).to_le_bytes())?;
    for v in policy.theta() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn read_policy<R: Read>(mut input: R) -> Result<ParamPolicy> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a policy checkpoint".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let obs_dim = read_u32(&mut input)? as usize;
    let n_hidden = read_u32(&mut input)? as usize;
    if n_hidden > 64 {
        return Err(Error::Parse(format!("implausible hidden layer count {n_hidden}")));
    }
    let hidden = (0..n_hidden).map(|_| read_u32(&mut input).map(|h| h as usize)).collect::<Result<Vec<_>>>()?;
    let mut kind = [0u8; 1];
    input.read_exact(&mut kind)?;
    let size = read_u32(&mut input)? as usize;
    let head = match kind[0] {
        0 => Head::Categorical { n_actions: size },
        1 => Head::Gaussian { act_dim: size },
        k => return Err(Error::Parse(format!("unknown head kind {k}"))),
    };
    let arch = Architecture::new(obs_dim, hidden, head);
    let mut count = [0u8; 8];
    input.read_exact(&mut count)?;
    let n = u64::from_le_bytes(count) as usize;
    if n != arch.n_params() {
        return Err(Error::Parse(format!("checkpoint holds {n} parameters, architecture needs {}", arch.n_params())));
    }
    let mut theta = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        input.read_exact(&mut buf)?;
        theta.push(f64::from_le_bytes(buf));
    }
    ParamPolicy::new(arch, theta)
}

pub fn save(policy: &ParamPolicy, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_policy(policy, std::io::BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<ParamPolicy> {
    let file = std::fs::File::open(path)?;
    read_policy(std::io::BufReader::new(file))
}
