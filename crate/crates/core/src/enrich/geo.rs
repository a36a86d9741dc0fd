use std::collections::HashMap;
use std::io::Read;
use std::net::IpAddr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::EnrichError;

/// Acceptance bound on a provider's estimated error.
pub const DEFAULT_MAX_ERROR_KM: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoSource {
    RttMultilateration,
    FallbackDb,
}

/// Invariants: |latitude| <= 90, |longitude| <= 180, estimated_error_km >= 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoLocation {
    pub latitude: f64,
    pub longitude: f64,
    /// ISO 3166-1 alpha-2.
    pub country: String,
    pub estimated_error_km: f64,
    pub provider: GeoSource,
}

impl GeoLocation {
    // Written as negations so that NaN fails every check.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), String> {
        if !(self.latitude.abs() <= 90.0) {
            return Err(format!("latitude {} out of range", self.latitude));
        }
        if !(self.longitude.abs() <= 180.0) {
            return Err(format!("longitude {} out of range", self.longitude));
        }
        if !(self.estimated_error_km >= 0.0) {
            return Err(format!(
                "estimated error {} is negative",
                self.estimated_error_km
            ));
        }
        if self.country.len() != 2 || !self.country.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(format!("country {:?} is not an alpha-2 code", self.country));
        }
        Ok(())
    }

    pub fn coordinates(&self) -> (f64, f64) {
        (self.latitude, self.longitude)
    }
}

/// A source of address locations. `Ok(None)` means the provider has no
/// answer; `Err` means it could not be asked.
pub trait GeoProvider: Send + Sync {
    fn name(&self) -> &str;

    fn locate(&self, address: IpAddr) -> Result<Option<GeoLocation>, EnrichError>;
}

/// Offline locations keyed by exact address.
#[derive(Debug, Clone, Default)]
pub struct CsvGeoProvider {
    name: String,
    entries: HashMap<IpAddr, GeoLocation>,
}

#[derive(Deserialize)]
struct GeoRow {
    address: IpAddr,
    latitude: f64,
    longitude: f64,
    country: String,
    estimated_error_km: f64,
    provider: GeoSource,
}

impl CsvGeoProvider {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, address: IpAddr, location: GeoLocation) {
        self.entries.insert(address, location);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load `address,latitude,longitude,country,estimated_error_km,provider`
    /// rows.
    pub fn load<R: Read>(name: impl Into<String>, reader: R) -> Result<Self, EnrichError> {
        let mut p = Self::new(name);
        for (i, row) in csv::Reader::from_reader(reader)
            .deserialize::<GeoRow>()
            .enumerate()
        {
            let line = i + 2;
            let row = row.map_err(|e| EnrichError::Table {
                line,
                reason: e.to_string(),
            })?;
            let loc = GeoLocation {
                latitude: row.latitude,
                longitude: row.longitude,
                country: row.country.trim().to_string(),
                estimated_error_km: row.estimated_error_km,
                provider: row.provider,
            };
            loc.validate()
                .map_err(|reason| EnrichError::Table { line, reason })?;
            p.insert(row.address, loc);
        }
        Ok(p)
    }
}

impl GeoProvider for CsvGeoProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn locate(&self, address: IpAddr) -> Result<Option<GeoLocation>, EnrichError> {
        Ok(self.entries.get(&address).cloned())
    }
}

/// Minimal HTTP GET used by [`HttpGeoProvider`].
pub trait HttpFetch: Send + Sync {
    fn get(&self, url: &str) -> Result<String, String>;
}

/// Blocking HTTP client.
#[derive(Debug, Clone, Copy, Default)]
pub struct UreqFetch;

impl HttpFetch for UreqFetch {
    fn get(&self, url: &str) -> Result<String, String> {
        let mut response = ureq::get(url).call().map_err(|e| e.to_string())?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())
    }
}

#[derive(Deserialize)]
struct IpInfoBody {
    loc: Option<String>,
    country: Option<String>,
}

/// Online lookup against an ipinfo-style JSON endpoint:
/// `GET {base_url}/{address}/json[?token=...]` answering
/// `{"loc": "lat,lon", "country": "NO", ...}`.
///
/// The service does not report an error radius, so results carry
/// `assumed_error_km`.
pub struct HttpGeoProvider<F = UreqFetch> {
    base_url: String,
    token: Option<String>,
    assumed_error_km: f64,
    fetch: F,
}

impl<F: HttpFetch> HttpGeoProvider<F> {
    pub fn new(
        base_url: impl Into<String>,
        token: Option<String>,
        assumed_error_km: f64,
        fetch: F,
    ) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            assumed_error_km,
            fetch,
        }
    }

    fn url(&self, address: IpAddr) -> String {
        match &self.token {
            Some(t) => format!("{}/{address}/json?token={t}", self.base_url),
            None => format!("{}/{address}/json", self.base_url),
        }
    }
}

impl<F: HttpFetch> GeoProvider for HttpGeoProvider<F> {
    fn name(&self) -> &str {
        "http"
    }

    fn locate(&self, address: IpAddr) -> Result<Option<GeoLocation>, EnrichError> {
        let body = self
            .fetch
            .get(&self.url(address))
            .map_err(EnrichError::ProviderUnavailable)?;
        let parsed: IpInfoBody = serde_json::from_str(&body)
            .map_err(|e| EnrichError::ProviderUnavailable(format!("bad response: {e}")))?;
        let (Some(loc), Some(country)) = (parsed.loc, parsed.country) else {
            return Ok(None);
        };
        let Some((lat, lon)) = loc.split_once(',') else {
            return Ok(None);
        };
        let (Ok(latitude), Ok(longitude)) = (lat.trim().parse(), lon.trim().parse()) else {
            return Ok(None);
        };
        let location = GeoLocation {
            latitude,
            longitude,
            country,
            estimated_error_km: self.assumed_error_km,
            provider: GeoSource::FallbackDb,
        };
        Ok(location.validate().is_ok().then_some(location))
    }
}

/// Tries providers in order and keeps the first location whose estimated
/// error is within the acceptance bound. Answers are cached per address;
/// a miss is cached only if every provider could be asked.
pub struct GeoResolver {
    providers: Vec<Box<dyn GeoProvider>>,
    max_error_km: f64,
    cache: RwLock<HashMap<IpAddr, Option<GeoLocation>>>,
}

impl GeoResolver {
    pub fn new(providers: Vec<Box<dyn GeoProvider>>) -> Self {
        Self::with_threshold(providers, DEFAULT_MAX_ERROR_KM)
    }

    pub fn with_threshold(providers: Vec<Box<dyn GeoProvider>>, max_error_km: f64) -> Self {
        Self {
            providers,
            max_error_km,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn max_error_km(&self) -> f64 {
        self.max_error_km
    }

    pub fn resolve(&self, address: IpAddr) -> Option<GeoLocation> {
        if let Some(hit) = self.cache.read().expect("geo cache poisoned").get(&address) {
            return hit.clone();
        }
        let mut complete = true;
        let mut found = None;
        for p in &self.providers {
            match p.locate(address) {
                Ok(Some(loc)) if loc.estimated_error_km <= self.max_error_km => {
                    found = Some(loc);
                    break;
                }
                Ok(_) => {}
                Err(e) => {
                    log::warn!("geo provider {} failed for {address}: {e}", p.name());
                    complete = false;
                }
            }
        }
        if found.is_some() || complete {
            self.cache
                .write()
                .expect("geo cache poisoned")
                .insert(address, found.clone());
        }
        found
    }
}
