//! The panorama ("learning") file: named trained charts plus the defaults a
//! query tool needs, serialized as one versioned JSON document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chart::{chart_data, ChartModel, ChartSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::logit::FitConfig;

pub const FORMAT: &str = "ucreg-panorama";
pub const FORMAT_VERSION: u64 = 1;
pub const FILE_EXTENSION: &str = ".ucreg.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub rows: usize,
    pub attrs: usize,
    /// SHA-256 of the dataset's canonical comma-delimited text.
    pub sha256: String,
}

impl DatasetFingerprint {
    pub fn of(ds: &Dataset) -> Self {
        Self {
            rows: ds.n_rows(),
            attrs: ds.n_attrs(),
            sha256: hex::encode(Sha256::digest(ds.to_delimited(b',').as_bytes())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub spec: ChartSpec,
    pub model: ChartModel,
    /// Attribute means over the chart's training rows.
    pub defaults: BTreeMap<String, f64>,
    pub training_rows: usize,
}

impl Chart {
    pub fn labels(&self) -> Vec<String> {
        self.model.labels()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaFile {
    pub format: String,
    pub format_version: u64,
    /// RFC 3339 creation time.
    pub created: String,
    #[serde(default)]
    pub fingerprint: Option<DatasetFingerprint>,
    pub fit_config: FitConfig,
    pub charts: Vec<Chart>,
    /// `sha256:<hex>` over the compact JSON of `charts`; verified on load when present.
    #[serde(default)]
    pub checksum: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Overrides the creation time, for reproducible files.
    pub created: Option<String>,
}

/// Creation time from `SOURCE_DATE_EPOCH` when set, otherwise now.
pub fn default_timestamp() -> String {
    let epoch = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0));
    epoch
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Trains every chart on all of its eligible rows. The first failing chart
/// aborts the build and is named in the error.
pub fn build_panorama(ds: &Dataset, specs: &[ChartSpec], cfg: &FitConfig, opts: &BuildOptions) -> Result<PanoramaFile> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(Error::Spec("a panorama needs at least one chart".into()));
    }
    if let Some(t) = duplicate_title(specs.iter().map(|s| s.title.as_str())) {
        return Err(Error::Spec(format!("duplicate chart title `{t}`")));
    }
    let charts = specs
        .iter()
        .map(|spec| {
            let trained = chart_data(ds, spec).and_then(|data| {
                let model = data.fit(cfg)?;
                Ok(Chart {
                    spec: spec.clone(),
                    model,
                    defaults: data.means(),
                    training_rows: data.rows.len(),
                })
            });
            trained.map_err(|e| Error::Chart {
                title: spec.title.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PanoramaFile {
        format: FORMAT.into(),
        format_version: FORMAT_VERSION,
        created: opts.created.clone().unwrap_or_else(default_timestamp),
        fingerprint: Some(DatasetFingerprint::of(ds)),
        fit_config: *cfg,
        charts,
        checksum: None,
    })
}

fn duplicate_title<'a>(titles: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    let mut seen = std::collections::HashSet::new();
    titles.into_iter().find(|t| !seen.insert(*t))
}

fn checksum(charts: &[Chart]) -> String {
    let bytes = serde_json::to_vec(charts).expect("charts serialize");
    format!("sha256:{}", hex::encode(Sha256::digest(&bytes)))
}

impl PanoramaFile {
    pub fn chart(&self, key: &str) -> Result<&Chart> {
        self.charts
            .iter()
            .find(|c| c.spec.title == key)
            .or_else(|| key.parse::<usize>().ok().and_then(|i| self.charts.get(i)))
            .ok_or_else(|| Error::UnknownChart(key.to_owned()))
    }

    /// Union of chart attributes, first-use order.
    pub fn attributes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.charts {
            for a in c.model.attributes() {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
        }
        out
    }

    /// Profile prefilled with stored means; the first chart using an
    /// attribute supplies its default.
    pub fn default_profile(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for c in &self.charts {
            for (k, v) in &c.defaults {
                out.entry(k.clone()).or_insert(*v);
            }
        }
        out
    }

    pub fn save(&self) -> Vec<u8> {
        let mut out = self.clone();
        out.checksum = Some(checksum(&self.charts));
        let mut bytes = serde_json::to_vec_pretty(&out).expect("panorama serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(Error::Schema(format!("`format` must be \"{FORMAT}\"")));
        }
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Schema("missing `format_version`".into()))?;
        if version == 0 || version > FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let file: Self = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        if let Some(sum) = &file.checksum {
            if *sum != checksum(&file.charts) {
                return Err(Error::Checksum);
            }
        }
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.charts.is_empty() {
            return Err(Error::Schema("no charts".into()));
        }
        if let Some(t) = duplicate_title(self.charts.iter().map(|c| c.spec.title.as_str())) {
            return Err(Error::Schema(format!("duplicate chart title `{t}`")));
        }
        for c in &self.charts {
            let bad = |m: &str| Error::Schema(format!("chart `{}`: {m}", c.spec.title));
            if c.model.attributes() != c.spec.attributes.as_slice() {
                return Err(bad("model attributes differ from the chart spec"));
            }
            let labels = c.model.labels();
            match &c.model {
                ChartModel::Binary { positive, .. } => {
                    if c.spec.labels.len() != 1 || *positive != c.spec.labels[0] {
                        return Err(bad("binary model label differs from the chart spec"));
                    }
                }
                ChartModel::Multinomial { model } => {
                    if labels != c.spec.labels {
                        return Err(bad("model labels differ from the chart spec"));
                    }
                    if model.submodels.len() + 1 != labels.len() {
                        return Err(bad("expected one submodel per non-reference label"));
                    }
                }
            }
            for m in c.model.submodels() {
                let d = c.spec.attributes.len();
                if m.attributes != c.spec.attributes
                    || m.standardization.len() != d
                    || m.standardized.weights.len() != d
                    || m.original.weights.len() != d
                {
                    return Err(bad("coefficient vector shape mismatch"));
                }
                if m.standardization.iter().any(|s| !(s.std > 0.0 && s.std.is_finite() && s.mean.is_finite())) {
                    return Err(bad("standardization must have finite mean and positive std"));
                }
                let finite = m.standardized.intercept.is_finite() && m.standardized.weights.iter().all(|w| w.is_finite());
                if !finite {
                    return Err(bad("non-finite coefficient"));
                }
            }
            for a in &c.spec.attributes {
                if !c.defaults.contains_key(a) {
                    return Err(bad(&format!("no default value for `{a}`")));
                }
            }
        }
        Ok(())
    }
}
