//! Router annotation: origin AS by longest-prefix match, location from an
//! ordered list of providers, and a speed-of-light check for links.

mod asn;
mod distance;
mod geo;

use std::collections::HashMap;
use std::fs::File;
use std::net::IpAddr;
use std::path::Path;
use std::sync::RwLock;

use serde::Serialize;
use thiserror::Error;

pub use asn::{AsEntry, AsInfo, AsTable};
pub use distance::{
    haversine_km, light_time_us, min_rtt_us, plausibility_filter, plausibility_for_distance,
    Plausibility, C0_KM_PER_S, EARTH_RADIUS_KM,
};
pub use geo::{
    CsvGeoProvider, GeoLocation, GeoProvider, GeoResolver, GeoSource, HttpFetch, HttpGeoProvider,
    UreqFetch, DEFAULT_MAX_ERROR_KM,
};

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("table row {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error("endpoint has no location")]
    Unlocatable,
    #[error("geo provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("{path}: {source}")]
    Open {
        path: String,
        source: std::io::Error,
    },
}

pub(crate) fn open(path: &Path) -> Result<File, EnrichError> {
    File::open(path).map_err(|source| EnrichError::Open {
        path: path.display().to_string(),
        source,
    })
}

/// A router address with whatever could be learned about it.
/// `as_name` is present exactly when `asn` is.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnrichedHop {
    pub address: IpAddr,
    pub asn: Option<u32>,
    pub as_name: Option<String>,
    pub geo: Option<GeoLocation>,
}

impl EnrichedHop {
    pub fn unknown(address: IpAddr) -> Self {
        Self {
            address,
            asn: None,
            as_name: None,
            geo: None,
        }
    }

    /// `asn: NAME`, as used in crossing tables.
    pub fn as_label(&self) -> Option<String> {
        Some(format!("{}: {}", self.asn?, self.as_name.as_ref()?))
    }

    pub fn country(&self) -> Option<&str> {
        self.geo.as_ref().map(|g| g.country.as_str())
    }
}

/// Combined AS and geo lookup with a per-address memo.
pub struct Enricher {
    table: AsTable,
    geo: GeoResolver,
    memo: RwLock<HashMap<IpAddr, EnrichedHop>>,
}

impl Enricher {
    pub fn new(table: AsTable, geo: GeoResolver) -> Self {
        Self {
            table,
            geo,
            memo: RwLock::new(HashMap::new()),
        }
    }

    /// Offline enrichment from the three CSV snapshots.
    pub fn from_files(prefixes: &Path, names: &Path, geo: &Path) -> Result<Self, EnrichError> {
        let mut table = AsTable::new();
        table.load_prefixes(open(prefixes)?)?;
        table.load_names(open(names)?)?;
        let provider = CsvGeoProvider::load("geo", open(geo)?)?;
        Ok(Self::new(table, GeoResolver::new(vec![Box::new(provider)])))
    }

    pub fn table(&self) -> &AsTable {
        &self.table
    }

    pub fn resolver(&self) -> &GeoResolver {
        &self.geo
    }

    pub fn enrich(&self, address: IpAddr) -> EnrichedHop {
        if let Some(hit) = self
            .memo
            .read()
            .expect("enrich memo poisoned")
            .get(&address)
        {
            return hit.clone();
        }
        let info = self.table.lookup(address);
        let hop = EnrichedHop {
            address,
            asn: info.as_ref().map(|i| i.asn),
            as_name: info.map(|i| i.name),
            geo: self.geo.resolve(address),
        };
        // A missing location may be a provider outage; only memoise
        // complete answers so later calls can retry.
        if hop.geo.is_some() {
            self.memo
                .write()
                .expect("enrich memo poisoned")
                .insert(address, hop.clone());
        }
        hop
    }
}
