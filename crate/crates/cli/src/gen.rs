//! `gen-data`: writes synthetic instances in the same text formats `data =`
//! reads. The data seed is derived exactly as for a synthetic run, so a file
//! generated with `--seed k` matches the instance a config with `seed = k`
//! builds in memory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use stalesync_core::seeds::{derive_seed, DATA};
use stalesync_core::workloads::{planted_mf, LsqConfig};

use crate::config::{RawConfig, Reader};
use crate::error::CliError;

pub fn gen_data(kind: &str, overrides: &[(String, String)]) -> Result<String, CliError> {
    let mut raw = RawConfig::default();
    raw.apply_overrides(overrides);
    let mut r = Reader::new(raw);
    let out: PathBuf = r.required::<String>("out")?.into();
    let seed = derive_seed(r.get("seed", 0u64)?, DATA);
    let file = File::create(&out).map_err(|e| CliError::io(&out, e))?;
    let mut w = BufWriter::new(file);
    let note = match kind {
        "lsq" => {
            let (n, d) = (r.get("lsq_n", 1000usize)?, r.get("lsq_d", 10usize)?);
            let (lc, _) =
                LsqConfig::synthetic(n, d, r.get("lsq_a_scale", 1.0)?, r.get("lsq_noise_std", 1.0)?, 1.0, seed)?;
            lc.write_components(&mut w)?;
            format!("{n} components of dimension {d}")
        }
        "mf" => {
            let p = planted_mf(
                r.get("mf_rows", 300usize)?,
                r.get("mf_cols", 200usize)?,
                r.get("mf_rank", 5usize)?,
                r.get("mf_density", 0.3)?,
                r.get("mf_noise_var", 0.1)?,
                seed,
            )?;
            p.matrix.write_to(&mut w)?;
            format!("{} observed entries, noise floor {}", p.matrix.nnz(), p.noise_floor)
        }
        other => return Err(CliError::Usage(format!("unknown data kind `{other}` (expected lsq or mf)"))),
    };
    r.finish()?;
    w.flush().map_err(|e| CliError::io(&out, e))?;
    Ok(format!("wrote {}: {note}", out.display()))
}
