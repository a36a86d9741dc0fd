//! Seeded random record sets over a synthetic address plan with known
//! ground truth for AS membership and country.

use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use routescope::enrich::{
    AsEntry, AsTable, CsvGeoProvider, Enricher, GeoLocation, GeoResolver, GeoSource,
};
use routescope::probe::RelationKey;
use routescope::store::{Hop, HopStatus, PingRecord, Record, TracerouteRun};

const COUNTRIES: [&str; 5] = ["SE", "NO", "DK", "DE", "GB"];

/// What the generator knows about a router.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub asn: Option<(u32, String)>,
    pub country: Option<String>,
}

pub struct Corpus {
    pub truth: HashMap<IpAddr, Truth>,
    pub relations: Vec<RelationKey>,
    pub pings: Vec<PingRecord>,
    pub runs: Vec<TracerouteRun>,
    table: AsTable,
    geo: Vec<(IpAddr, GeoLocation)>,
}

impl Corpus {
    /// Enrichment built from the same ground truth the oracle reads.
    pub fn enricher(&self) -> Enricher {
        let mut p = CsvGeoProvider::new("truth");
        for (a, g) in &self.geo {
            p.insert(*a, g.clone());
        }
        Enricher::new(self.table.clone(), GeoResolver::new(vec![Box::new(p)]))
    }

    pub fn as_label(&self, a: IpAddr) -> Option<String> {
        let (asn, name) = self.truth.get(&a)?.asn.clone()?;
        Some(format!("{asn}: {name}"))
    }

    pub fn country(&self, a: IpAddr) -> Option<String> {
        self.truth.get(&a)?.country.clone()
    }

    pub fn records(&self) -> Vec<Record> {
        self.pings
            .iter()
            .cloned()
            .map(Record::Ping)
            .chain(self.runs.iter().cloned().map(Record::Traceroute))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.pings.len() + self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn v4(a: u8, b: u8, c: u8) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(10, a, b, c))
}

fn v6(a: u16, c: u16) -> IpAddr {
    IpAddr::V6(Ipv6Addr::new(0x2001, 0xdb8, a, 0, 0, 0, 0, c))
}

/// A corpus of at most `max_records` records from `seed`.
///
/// Routers belong to 3-7 ASes; about one in ten has no AS entry and one in
/// eight no location. Pings span two calendar years.
pub fn random_corpus(seed: u64, max_records: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_as = rng.random_range(3..=7u8);
    let mut table = AsTable::new();
    let mut truth = HashMap::new();
    let mut geo = Vec::new();
    let mut routers: [Vec<IpAddr>; 2] = [Vec::new(), Vec::new()];
    for i in 0..n_as {
        let asn = 100 + u32::from(i) * 7;
        let name = format!("NET{i}");
        let country = COUNTRIES[rng.random_range(0..COUNTRIES.len())];
        table.insert(AsEntry {
            prefix: format!("10.{i}.0.0/16").parse().unwrap(),
            asn,
        });
        table.insert(AsEntry {
            prefix: format!("2001:db8:{i}::/48").parse().unwrap(),
            asn,
        });
        table.set_name(asn, name.clone());
        for r in 0..rng.random_range(2..6u8) {
            for (fam, addr) in [v4(i, 1, r + 1), v6(u16::from(i), u16::from(r) + 1)]
                .into_iter()
                .enumerate()
            {
                let located = rng.random_range(0..8) != 0;
                if located {
                    geo.push((
                        addr,
                        GeoLocation {
                            latitude: rng.random_range(-60.0..70.0),
                            longitude: rng.random_range(-120.0..150.0),
                            country: country.to_string(),
                            estimated_error_km: rng.random_range(0.0..20.0),
                            provider: GeoSource::RttMultilateration,
                        },
                    ));
                }
                truth.insert(
                    addr,
                    Truth {
                        asn: Some((asn, name.clone())),
                        country: located.then(|| country.to_string()),
                    },
                );
                routers[fam].push(addr);
            }
        }
    }
    // Unannounced routers.
    for r in 0..rng.random_range(1..4u8) {
        for (fam, addr) in [
            IpAddr::V4(Ipv4Addr::new(192, 0, 2, r + 1)),
            IpAddr::V6(Ipv6Addr::new(0x3fff, 0, 0, 0, 0, 0, 0, u16::from(r) + 1)),
        ]
        .into_iter()
        .enumerate()
        {
            truth.insert(
                addr,
                Truth {
                    asn: None,
                    country: None,
                },
            );
            routers[fam].push(addr);
        }
    }

    let mut relations = Vec::new();
    for s in 0..2u8 {
        for d in 0..2u8 {
            relations.push(
                RelationKey::new(
                    format!("src{s}"),
                    v4(200, 0, s + 1),
                    format!("dst{d}"),
                    v4(201, 0, d + 1),
                )
                .unwrap(),
            );
        }
    }
    relations.push(RelationKey::new("src0", v6(200, 1), "dst0", v6(201, 1)).unwrap());

    let base: u64 = 1_672_531_200_000_000 - 30 * 86_400_000_000; // early December 2022
    let span: u64 = 60 * 86_400_000_000;
    let total = rng.random_range(1..=max_records);
    let mut pings = Vec::new();
    let mut runs = Vec::new();
    for _ in 0..total {
        let rel = &relations[rng.random_range(0..relations.len())];
        let ts = base + rng.random_range(0..span);
        if rng.random_range(0..3) != 0 {
            let ok = rng.random_range(0..10) != 0;
            pings.push(PingRecord {
                timestamp: ts,
                source: rel.source_address,
                destination: rel.destination_address,
                status: if ok {
                    HopStatus::ECHO_REPLY
                } else {
                    HopStatus::TIMEOUT
                },
                rtt: ok.then(|| rng.random_range(1_000..60_000u64)),
            });
            continue;
        }
        let fam = usize::from(rel.ip_version != routescope::icmp::Family::V4);
        let pool = &routers[fam];
        let len = rng.random_range(1..=20u16);
        let reaches = rng.random_range(0..5) != 0;
        let mut hops = Vec::new();
        let mut rtt = 0u64;
        for h in 1..=len {
            rtt += rng.random_range(0..3_000u64);
            if h == len && reaches {
                hops.push(Hop::responded(
                    h,
                    rel.destination_address,
                    HopStatus::ECHO_REPLY,
                    rtt,
                ));
            } else if rng.random_range(0..7) == 0 {
                hops.push(Hop::timeout(h));
            } else {
                let a = pool[rng.random_range(0..pool.len())];
                hops.push(Hop::responded(h, a, HopStatus::TIME_EXCEEDED, rtt));
            }
        }
        // Runs that end without a reply carry no trailing timeouts.
        while hops.last().is_some_and(|h| h.status == HopStatus::TIMEOUT) {
            hops.pop();
        }
        runs.push(TracerouteRun {
            timestamp: ts,
            source: rel.source_address,
            destination: rel.destination_address,
            round: rng.random_range(0..3),
            hops,
        });
    }
    Corpus {
        truth,
        relations,
        pings,
        runs,
        table,
        geo,
    }
}
