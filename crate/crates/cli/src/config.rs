//! Run configuration: strict TOML schema, dotted-key overrides, output paths.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dsacd_core::envs::{make_env, EnvParams, Environment, ToyEnv, ENV_NAMES};
use dsacd_core::trainer::TrainerConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

/// Environment variable that replaces the output root (default `.`).
pub const OUT_ENV: &str = "DSACD_OUT";

/// Everything a training run reads.
///
/// ```toml
/// env = "bimodal_bandit"          # required
/// iterations = 700
/// checkpoint_every = 100
/// out_dir = "runs/bandit"
///
/// [env_params.bimodal_bandit]
/// noise_std = 0.1
///
/// [trainer]
/// batch_size = 64
///
/// [trainer.alpha]
/// initial = 0.15
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    /// Checkpoint period in iterations; 0 keeps only the final one.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    /// Store the replay buffer in checkpoints too.
    #[serde(default)]
    pub checkpoint_buffer: bool,
    /// Relative paths are resolved against the output root.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub env_params: EnvParams,
    #[serde(default)]
    pub trainer: TrainerConfig,
}

fn default_iterations() -> u64 {
    1000
}

fn default_checkpoint_every() -> u64 {
    100
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides, then validates.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        if !table.contains_key("env") {
            bail!("missing required key `env` (one of {ENV_NAMES:?})");
        }
        let unknown = unknown_keys(&table)?;
        if !unknown.is_empty() {
            bail!("unknown configuration keys: {}", unknown.join(", "));
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("configuration does not match the schema")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.make_env()?;
        self.trainer.validate()?;
        Ok(())
    }

    pub fn make_env(&self) -> Result<ToyEnv> {
        Ok(make_env(&self.env, &self.env_params)?)
    }

    /// Copy with every implicit default written out.
    pub fn resolved(&self, out: &Path) -> Result<Self> {
        let mut c = self.clone();
        let action_dim = c.make_env()?.spec().action_dim;
        c.trainer.warmup = Some(c.trainer.warmup_size());
        c.trainer
            .alpha
            .target_entropy
            .get_or_insert(-(action_dim as f64));
        c.out_dir = Some(out.to_path_buf());
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// `--out` wins; otherwise `out_dir` (default `runs/<env>`) under the
    /// output root, which `DSACD_OUT` replaces.
    pub fn output_dir(&self, cli_out: Option<&Path>, root: Option<&Path>) -> PathBuf {
        if let Some(p) = cli_out {
            return p.to_path_buf();
        }
        let dir = self
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.env));
        match root {
            Some(r) if dir.is_relative() => r.join(dir),
            _ => dir,
        }
    }
}

/// Dotted paths present in `table` but absent from the schema.
fn unknown_keys(table: &toml::Table) -> Result<Vec<String>> {
    let mut schema = RunConfig {
        env: ENV_NAMES[0].into(),
        iterations: 0,
        checkpoint_every: 0,
        checkpoint_buffer: false,
        out_dir: Some(PathBuf::new()),
        env_params: EnvParams::default(),
        trainer: TrainerConfig::default(),
    };
    schema.trainer.warmup = Some(0);
    let schema = serde_json::to_value(&schema)?;
    let given = serde_json::to_value(table)?;
    let mut out = Vec::new();
    walk(&given, &schema, "", &mut out);
    Ok(out)
}

fn walk(given: &Json, schema: &Json, prefix: &str, out: &mut Vec<String>) {
    let (Json::Object(g), Json::Object(s)) = (given, schema) else {
        return;
    };
    for (k, v) in g {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match s.get(k) {
            Some(sv) => walk(v, sv, &path, out),
            None => out.push(path),
        }
    }
}

/// Sets `a.b.c=value`; the value is read as a TOML literal, falling back to
/// a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override `{spec}` is not of the form key=value");
    };
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        bail!("override `{spec}` has an empty key segment");
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut node = table;
    for p in parts {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override `{spec}`: `{p}` is not a table"),
        };
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::parse("env = \"bimodal_bandit\"", &[]).unwrap();
        assert_eq!(c.iterations, 1000);
        assert_eq!(c.trainer, TrainerConfig::default());
    }

    #[test]
    fn missing_env_is_named() {
        let err = RunConfig::parse("iterations = 3", &[]).unwrap_err();
        assert!(format!("{err:#}").contains("`env`"));
    }

    #[test]
    fn every_unknown_key_is_listed() {
        let text = "env = \"bimodal_bandit\"\nbogus = 1\n[trainer]\nbatchsize = 3\n[trainer.alpha]\nlr = 1";
        let err = format!("{:#}", RunConfig::parse(text, &[]).unwrap_err());
        for k in ["bogus", "trainer.batchsize", "trainer.alpha.lr"] {
            assert!(err.contains(k), "{err}");
        }
    }

    #[test]
    fn overrides_nest_and_type() {
        let c = RunConfig::parse(
            "env = \"bimodal_bandit\"",
            &[
                "trainer.alpha.initial=0.25".into(),
                "trainer.value.net.hidden=[8, 8]".into(),
                "env=two_goal_pointmass".into(),
                "trainer.entropy.mode=batch_entropy".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.trainer.alpha.initial, 0.25);
        assert_eq!(c.trainer.value.net.hidden, [8, 8]);
        assert_eq!(c.env, "two_goal_pointmass");
        assert!(RunConfig::parse("env = \"bimodal_bandit\"", &["nokey".into()]).is_err());
        assert!(RunConfig::parse("env = \"bimodal_bandit\"", &["env.x=1".into()]).is_err());
    }

    #[test]
    fn resolved_snapshot_round_trips() {
        let c = RunConfig::parse("env = \"two_goal_pointmass\"", &[]).unwrap();
        let r = c.resolved(Path::new("out")).unwrap();
        let back = RunConfig::parse(&r.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(back, r);
        assert!(back.trainer.warmup.is_some());
        assert_eq!(back.trainer.alpha.target_entropy, Some(-2.0));
    }

    #[test]
    fn output_dir_precedence() {
        let c = RunConfig::parse("env = \"bimodal_bandit\"", &[]).unwrap();
        let root = Path::new("/tmp/root");
        assert_eq!(
            c.output_dir(Some(Path::new("x")), Some(root)),
            PathBuf::from("x")
        );
        assert_eq!(
            c.output_dir(None, Some(root)),
            PathBuf::from("/tmp/root/runs/bimodal_bandit")
        );
        assert_eq!(
            c.output_dir(None, None),
            PathBuf::from("runs/bimodal_bandit")
        );
    }
}
