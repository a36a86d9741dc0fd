use std::collections::BTreeSet;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use routescope::icmp::Family;
use routescope::probe::{ProbeSchedule, RelationKey};
use serde::Deserialize;

/// A measurement endpoint. `family`, when given, must match the address.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub label: String,
    pub address: IpAddr,
    #[serde(default)]
    pub family: Option<Family>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichmentPaths {
    pub prefixes: PathBuf,
    pub names: PathBuf,
    pub geo: PathBuf,
}

/// Online geolocation used when the offline table has no accurate answer.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoFallback {
    pub base_url: String,
    /// Name of the environment variable holding the API token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default)]
    pub assumed_error_km: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub store_path: PathBuf,
    #[serde(default)]
    pub schedule: ProbeSchedule,
    #[serde(rename = "source")]
    pub sources: Vec<Endpoint>,
    #[serde(rename = "destination")]
    pub destinations: Vec<Endpoint>,
    #[serde(default)]
    pub enrichment: Option<EnrichmentPaths>,
    #[serde(default)]
    pub geo_fallback: Option<GeoFallback>,
}

/// Replace every `${NAME}` with the value of environment variable NAME.
pub fn expand_env(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find("${") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        let Some(j) = after.find('}') else {
            bail!("unterminated ${{...}} in configuration");
        };
        let name = &after[..j];
        let valid = name
            .chars()
            .next()
            .is_some_and(|c| c == '_' || c.is_ascii_alphabetic())
            && name.chars().all(|c| c == '_' || c.is_ascii_alphanumeric());
        if !valid {
            bail!("invalid variable name {name:?} in configuration");
        }
        let value =
            lookup(name).with_context(|| format!("environment variable {name} is not set"))?;
        out.push_str(&value);
        rest = &after[j + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    /// Parse configuration text; relative paths are taken from `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let expanded = expand_env(text, |n| std::env::var(n).ok())?;
        let mut c: Config = toml::from_str(&expanded)?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut c.store_path);
        if let Some(e) = &mut c.enrichment {
            rebase(&mut e.prefixes);
            rebase(&mut e.names);
            rebase(&mut e.geo);
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.sources.is_empty() || self.destinations.is_empty() {
            bail!("at least one [[source]] and one [[destination]] are required");
        }
        for (kind, list) in [
            ("source", &self.sources),
            ("destination", &self.destinations),
        ] {
            let mut labels = BTreeSet::new();
            for e in list {
                if let Some(f) = e.family {
                    if f != Family::of(e.address) {
                        bail!("{kind} {}: family does not match {}", e.label, e.address);
                    }
                }
                if !labels.insert((&e.label, Family::of(e.address))) {
                    bail!(
                        "duplicate {kind} label {} for {}",
                        e.label,
                        Family::of(e.address).label()
                    );
                }
            }
        }
        let families = |l: &[Endpoint]| {
            l.iter()
                .map(|e| Family::of(e.address))
                .collect::<BTreeSet<_>>()
        };
        let (src, dst) = (families(&self.sources), families(&self.destinations));
        if src != dst {
            bail!("every address family used by a source needs a destination and vice versa");
        }
        Ok(())
    }

    /// Source x destination pairs of the same family.
    pub fn relations(&self) -> Vec<RelationKey> {
        let mut out = Vec::new();
        for s in &self.sources {
            for d in &self.destinations {
                if let Ok(r) = RelationKey::new(&s.label, s.address, &d.label, d.address) {
                    if s.address != d.address {
                        out.push(r);
                    }
                }
            }
        }
        out
    }
}
