//! Config-file loading and flag/file/default resolution.
//!
//! Every command accepts `--config <path>` pointing at a flat JSON object
//! whose keys mirror that command's flags. Precedence: command-line flags
//! override file values, which override built-in defaults. Unknown keys and
//! type mismatches are errors naming the offending key. The fully resolved
//! config is echoed into the manifest, and that echo is itself a valid
//! config file: re-running with it reproduces the outputs byte for byte.

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;
use wsnm_core::bench::Method;

/// Reads and parses one command's JSON config file.
pub fn load_file<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("invalid config file {}", path.display()))
}

/// Flag-beats-file-beats-default resolution for one field.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] but the field has no default and must come from a flag or
/// the config file.
pub fn pick_required<T>(flag: Option<T>, file: Option<T>, key: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| anyhow!("missing required parameter `{key}` (flag or config file)"))
}

// ---------------------------------------------------------------------------
// denoise
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseFile {
    pub input: Option<String>,
    pub clean: Option<String>,
    pub add_noise: Option<f64>,
    pub sigma: Option<f64>,
    pub p: Option<f64>,
    pub iterations: Option<usize>,
    pub alpha: Option<f64>,
    pub patch_size: Option<usize>,
    pub group_size: Option<usize>,
    pub search_window: Option<usize>,
    pub key_patch_step: Option<usize>,
    pub c: Option<f64>,
    pub reestimate_noise: Option<bool>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

/// Resolved denoise run; serializes to the same flat keys as [`DenoiseFile`].
#[derive(Debug, Serialize)]
pub struct DenoiseRun {
    pub input: String,
    pub clean: Option<String>,
    pub add_noise: Option<f64>,
    pub sigma: f64,
    pub p: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub patch_size: usize,
    pub group_size: usize,
    pub search_window: usize,
    pub key_patch_step: usize,
    pub c: f64,
    pub reestimate_noise: bool,
    pub gamma: f64,
    pub seed: u64,
    pub threads: usize,
    pub out: String,
}

// ---------------------------------------------------------------------------
// rpca
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpcaFile {
    pub input: Option<String>,
    pub frames: Option<String>,
    pub synthetic: Option<String>,
    pub method: Option<String>,
    pub p: Option<f64>,
    pub weight_c: Option<f64>,
    pub weight_mode: Option<String>,
    pub lambda: Option<f64>,
    pub mu0: Option<f64>,
    pub rho: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub theta: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RpcaRun {
    pub input: Option<String>,
    pub frames: Option<String>,
    pub synthetic: Option<String>,
    pub method: String,
    pub p: f64,
    pub weight_c: f64,
    pub weight_mode: String,
    pub lambda: Option<f64>,
    pub mu0: Option<f64>,
    pub rho: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub theta: f64,
    pub seed: u64,
    pub threads: usize,
    pub out: String,
}

/// Inline synthetic-instance spec: `m=150,pr=0.1,pe=0.05` (or `rank=15` in
/// place of `pr`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticArg {
    pub size: usize,
    pub p_r: f64,
    pub p_e: f64,
}

pub fn parse_synthetic(text: &str) -> Result<SyntheticArg> {
    let mut m: Option<usize> = None;
    let mut pr: Option<f64> = None;
    let mut pe: Option<f64> = None;
    let mut rank: Option<usize> = None;
    for part in text.split(',') {
        let part = part.trim();
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("synthetic spec `{part}` is not key=value"))?;
        match key.trim() {
            "m" => m = Some(value.trim().parse().context("synthetic key `m`")?),
            "pr" => pr = Some(value.trim().parse().context("synthetic key `pr`")?),
            "pe" => pe = Some(value.trim().parse().context("synthetic key `pe`")?),
            "rank" => rank = Some(value.trim().parse().context("synthetic key `rank`")?),
            other => bail!("unknown synthetic key `{other}` (expected m, pr, pe, rank)"),
        }
    }
    let size = m.ok_or_else(|| anyhow!("synthetic spec is missing `m`"))?;
    let p_r = match (pr, rank) {
        (Some(_), Some(_)) => bail!("synthetic spec has both `pr` and `rank`; give one"),
        (Some(v), None) => v,
        (None, Some(r)) => r as f64 / size as f64,
        (None, None) => bail!("synthetic spec needs `pr` or `rank`"),
    };
    let p_e = pe.ok_or_else(|| anyhow!("synthetic spec is missing `pe`"))?;
    Ok(SyntheticArg { size, p_r, p_e })
}

// ---------------------------------------------------------------------------
// sweep / table
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub size: Option<usize>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub step: Option<f64>,
    pub repeats: Option<usize>,
    pub p: Option<f64>,
    pub methods: Option<String>,
    pub record_timing: Option<bool>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepRun {
    pub size: usize,
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub repeats: usize,
    pub p: f64,
    pub methods: String,
    pub record_timing: bool,
    pub seed: u64,
    pub threads: usize,
    pub out: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableFile {
    pub size: Option<usize>,
    pub ranks: Option<String>,
    pub pe: Option<f64>,
    pub repeats: Option<usize>,
    pub p: Option<f64>,
    pub methods: Option<String>,
    pub paper_scale: Option<bool>,
    pub record_timing: Option<bool>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct TableRun {
    pub size: usize,
    pub ranks: String,
    pub pe: f64,
    pub repeats: usize,
    pub p: f64,
    pub methods: String,
    pub paper_scale: bool,
    pub record_timing: bool,
    pub seed: u64,
    pub threads: usize,
    pub out: String,
}

/// Parses a comma-separated method list. Accepted entries: `nnm`, `wsnm`
/// (which uses the run's `--p`), and `wsnm_p<value>` with an explicit power.
pub fn parse_methods(text: &str, p: f64) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if part == "nnm" {
            out.push(Method::Nnm);
        } else if part == "wsnm" {
            out.push(Method::Wsnm { p });
        } else if let Some(power) = part.strip_prefix("wsnm_p") {
            let power: f64 = power
                .parse()
                .map_err(|_| anyhow!("bad method `{part}`: `{power}` is not a number"))?;
            out.push(Method::Wsnm { p: power });
        } else {
            bail!("unknown method `{part}` (expected nnm, wsnm, or wsnm_p<value>)");
        }
    }
    if out.is_empty() {
        bail!("method list `{text}` is empty");
    }
    Ok(out)
}

/// Parses a comma-separated list of positive integer ranks.
pub fn parse_ranks(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let r: usize = part
            .parse()
            .map_err(|_| anyhow!("bad rank `{part}`: not a positive integer"))?;
        if r == 0 {
            bail!("rank 0 is not a valid table row");
        }
        out.push(r);
    }
    if out.is_empty() {
        bail!("rank list `{text}` is empty");
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// prox
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxFile {
    pub input: Option<String>,
    pub p: Option<f64>,
    pub weight: Option<f64>,
    pub weights: Option<String>,
    pub weight_c: Option<f64>,
    pub fidelity: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ProxRun {
    pub input: String,
    pub p: f64,
    pub weight: Option<f64>,
    pub weights: Option<String>,
    pub weight_c: Option<f64>,
    pub fidelity: f64,
    pub seed: u64,
    pub threads: usize,
    pub out: String,
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub kind: Option<String>,
    pub a: Option<String>,
    pub b: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct MetricsRun {
    pub kind: String,
    pub a: String,
    pub b: String,
    pub seed: u64,
    pub threads: usize,
    pub out: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_spec_parses() {
        let s = parse_synthetic("m=150,pr=0.1,pe=0.05").unwrap();
        assert_eq!(
            s,
            SyntheticArg {
                size: 150,
                p_r: 0.1,
                p_e: 0.05
            }
        );
        let s = parse_synthetic("m=300, rank=15, pe=0.05").unwrap();
        assert!((s.p_r - 0.05).abs() < 1e-15);
    }

    #[test]
    fn synthetic_spec_rejects_unknown_and_missing() {
        let err = parse_synthetic("m=10,pr=0.1,pe=0.05,zeta=1").unwrap_err();
        assert!(err.to_string().contains("zeta"), "{err}");
        let err = parse_synthetic("pr=0.1,pe=0.05").unwrap_err();
        assert!(err.to_string().contains("`m`"), "{err}");
        let err = parse_synthetic("m=10,pr=0.1,rank=3,pe=0.05").unwrap_err();
        assert!(err.to_string().contains("one"), "{err}");
    }

    #[test]
    fn methods_parse() {
        let ms = parse_methods("wsnm, nnm", 0.7).unwrap();
        assert_eq!(ms, vec![Method::Wsnm { p: 0.7 }, Method::Nnm]);
        let ms = parse_methods("wsnm_p0.3", 0.7).unwrap();
        assert_eq!(ms, vec![Method::Wsnm { p: 0.3 }]);
        assert!(parse_methods("svt", 0.7).is_err());
    }

    #[test]
    fn unknown_config_key_is_named() {
        let err = serde_json::from_str::<DenoiseFile>(r#"{"sigmaa": 50}"#).unwrap_err();
        assert!(err.to_string().contains("sigmaa"), "{err}");
    }

    #[test]
    fn precedence_flag_file_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick::<i32>(None, None, 3), 3);
        assert!(pick_required::<i32>(None, None, "p").is_err());
    }
}
