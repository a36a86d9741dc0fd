use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::net::IpAddr;

use ipnet::IpNet;
use serde::Deserialize;

use super::EnrichError;

/// A prefix-to-origin-AS assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsEntry {
    pub prefix: IpNet,
    pub asn: u32,
}

/// Origin AS of an address with its registered name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsInfo {
    pub asn: u32,
    pub name: String,
}

impl AsInfo {
    /// Table rendering, e.g. `1653: SUNET`.
    pub fn label(&self) -> String {
        format!("{}: {}", self.asn, self.name)
    }
}

fn key(addr: IpAddr) -> (bool, u128) {
    match addr {
        IpAddr::V4(a) => (false, u128::from(u32::from(a))),
        IpAddr::V6(a) => (true, u128::from(a)),
    }
}

fn mask(bits: u128, len: u8, v6: bool) -> u128 {
    let width = if v6 { 128 } else { 32 };
    if len == 0 {
        0
    } else {
        bits & (u128::MAX << (width - u32::from(len)))
    }
}

/// Longest-prefix-match table from prefixes to AS numbers.
///
/// When the same prefix is listed with different ASNs the lowest ASN is
/// kept, so the result never depends on insertion order.
#[derive(Debug, Clone, Default)]
pub struct AsTable {
    /// (is_v6, prefix length) -> masked network bits -> ASN. Iterated from
    /// the longest length down.
    by_len: BTreeMap<(bool, u8), HashMap<u128, u32>>,
    names: HashMap<u32, String>,
}

#[derive(Deserialize)]
struct PrefixRow {
    prefix: String,
    asn: u32,
}

#[derive(Deserialize)]
struct NameRow {
    asn: u32,
    name: String,
}

impl AsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: AsEntry) {
        let net = entry.prefix.trunc();
        let (v6, bits) = key(net.network());
        let slot = self
            .by_len
            .entry((v6, net.prefix_len()))
            .or_default()
            .entry(bits)
            .or_insert(entry.asn);
        *slot = (*slot).min(entry.asn);
    }

    pub fn set_name(&mut self, asn: u32, name: impl Into<String>) {
        self.names.insert(asn, name.into());
    }

    pub fn len(&self) -> usize {
        self.by_len.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Origin AS of the most specific prefix covering `address`.
    pub fn lookup_asn(&self, address: IpAddr) -> Option<u32> {
        let (v6, bits) = key(address);
        self.by_len
            .range((v6, 0)..=(v6, u8::MAX))
            .rev()
            .find_map(|(&(_, len), nets)| nets.get(&mask(bits, len, v6)).copied())
    }

    /// Name for `asn`; unnamed ASes render as `AS<number>`.
    pub fn name_of(&self, asn: u32) -> String {
        self.names
            .get(&asn)
            .cloned()
            .unwrap_or_else(|| format!("AS{asn}"))
    }

    pub fn lookup(&self, address: IpAddr) -> Option<AsInfo> {
        self.lookup_asn(address).map(|asn| AsInfo {
            asn,
            name: self.name_of(asn),
        })
    }

    /// Load `prefix,asn` rows.
    pub fn load_prefixes<R: Read>(&mut self, reader: R) -> Result<usize, EnrichError> {
        let mut n = 0;
        for (i, row) in csv::Reader::from_reader(reader)
            .deserialize::<PrefixRow>()
            .enumerate()
        {
            let row = row.map_err(|e| EnrichError::Table {
                line: i + 2,
                reason: e.to_string(),
            })?;
            let prefix: IpNet = row.prefix.trim().parse().map_err(|e| EnrichError::Table {
                line: i + 2,
                reason: format!("{:?}: {e}", row.prefix),
            })?;
            self.insert(AsEntry {
                prefix,
                asn: row.asn,
            });
            n += 1;
        }
        Ok(n)
    }

    /// Load `asn,name` rows.
    pub fn load_names<R: Read>(&mut self, reader: R) -> Result<usize, EnrichError> {
        let mut n = 0;
        for (i, row) in csv::Reader::from_reader(reader)
            .deserialize::<NameRow>()
            .enumerate()
        {
            let row = row.map_err(|e| EnrichError::Table {
                line: i + 2,
                reason: e.to_string(),
            })?;
            self.set_name(row.asn, row.name.trim());
            n += 1;
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(p: &str, asn: u32) -> AsEntry {
        AsEntry {
            prefix: p.parse().unwrap(),
            asn,
        }
    }

    #[test]
    fn longest_prefix_wins() {
        let mut t = AsTable::new();
        t.insert(entry("10.0.0.0/8", 100));
        t.insert(entry("10.1.0.0/16", 200));
        assert_eq!(t.lookup_asn("10.1.2.3".parse().unwrap()), Some(200));
        assert_eq!(t.lookup_asn("10.2.2.3".parse().unwrap()), Some(100));
        assert_eq!(t.lookup_asn("11.0.0.1".parse().unwrap()), None);
        assert_eq!(t.lookup_asn("::a01:203".parse().unwrap()), None);
    }

    #[test]
    fn host_bits_in_prefix_are_ignored() {
        let mut t = AsTable::new();
        t.insert(entry("2001:db8:224::1/48", 224));
        t.insert(entry("0.0.0.0/0", 1));
        assert_eq!(
            t.lookup_asn("2001:db8:224:ffff::9".parse().unwrap()),
            Some(224)
        );
        assert_eq!(t.lookup_asn("203.0.113.5".parse().unwrap()), Some(1));
    }

    #[test]
    fn csv_tables_render_labels() {
        let mut t = AsTable::new();
        t.load_prefixes(
            "prefix,asn\n10.16.0.0/16,1653\n10.26.0.0/16,2603\n10.99.0.0/16,64512\n".as_bytes(),
        )
        .unwrap();
        t.load_names("asn,name\n1653,SUNET\n2603,NORDUNET\n".as_bytes())
            .unwrap();
        assert_eq!(
            t.lookup("10.16.1.1".parse().unwrap()).unwrap().label(),
            "1653: SUNET"
        );
        assert_eq!(
            t.lookup("10.26.1.1".parse().unwrap()).unwrap().label(),
            "2603: NORDUNET"
        );
        assert_eq!(
            t.lookup("10.99.0.1".parse().unwrap()).unwrap().label(),
            "64512: AS64512"
        );
        let err = t
            .load_prefixes("prefix,asn\n10.0.0.0/33,1\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, EnrichError::Table { line: 2, .. }));
    }

    proptest! {
        #[test]
        fn insertion_order_is_irrelevant(
            entries in prop::collection::vec((any::<u32>(), 0u8..=32, 1u32..5), 1..40),
            probes in prop::collection::vec(any::<u32>(), 50),
            rotate in 0usize..40,
        ) {
            let entries: Vec<AsEntry> = entries
                .into_iter()
                .map(|(bits, len, asn)| AsEntry {
                    prefix: IpNet::new(IpAddr::V4(bits.into()), len).unwrap(),
                    asn,
                })
                .collect();
            let mut forward = AsTable::new();
            entries.iter().cloned().for_each(|e| forward.insert(e));
            let mut shuffled = entries.clone();
            shuffled.reverse();
            let k = rotate % shuffled.len();
            shuffled.rotate_left(k);
            let mut other = AsTable::new();
            shuffled.into_iter().for_each(|e| other.insert(e));
            for p in probes {
                let a = IpAddr::V4(p.into());
                // Oracle: scan every entry for the longest covering prefix.
                let best = entries
                    .iter()
                    .filter(|e| e.prefix.contains(&a))
                    .map(|e| (e.prefix.prefix_len(), std::cmp::Reverse(e.asn)))
                    .max()
                    .map(|(_, std::cmp::Reverse(asn))| asn);
                prop_assert_eq!(forward.lookup_asn(a), best);
                prop_assert_eq!(other.lookup_asn(a), best);
            }
        }
    }
}
