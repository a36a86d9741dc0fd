//! Run sets built so that their statistics land on published table rows.
//! Addresses follow `fixtures/nordic.toml`, so the fixture CSVs enrich them.

use std::net::IpAddr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use routescope::probe::RelationKey;
use routescope::store::{Hop, HopStatus, TracerouteRun};

use crate::oracle;

pub const KAU: &str = "10.16.0.10";
pub const NTNU_UNINETT: &str = "10.224.0.10";
pub const T0: u64 = 1_640_995_200_000_000;
const CYCLE_US: u64 = 300_000_000;

fn ip(s: &str) -> IpAddr {
    s.parse().unwrap()
}

pub fn kau_uninett() -> RelationKey {
    RelationKey::new("SUNET", ip(KAU), "Uninett", ip(NTNU_UNINETT)).unwrap()
}

/// `k` RTTs in µs whose nearest-rank q10 and q90 are `q10`/`q90` and whose
/// mean is exactly `mean`. Panics when no such sample exists.
pub fn sample_with(k: usize, mean: u64, q10: u64, q90: u64) -> Vec<u64> {
    let r10 = (10 * k).div_ceil(100);
    let r90 = (90 * k).div_ceil(100);
    let mut v = vec![q10; r10];
    let middle = r90 - r10 - 1;
    let top = k - r90 + 1;
    let rest = mean as i128 * k as i128 - (r10 as i128 * q10 as i128) - (top as i128 * q90 as i128);
    let (base, extra) = (rest / middle as i128, rest % middle as i128);
    assert!(
        base as u64 >= q10 && base as u64 + u64::from(extra > 0) <= q90,
        "infeasible sample"
    );
    for i in 0..middle {
        v.push(base as u64 + u64::from((i as i128) < extra));
    }
    v.extend(std::iter::repeat_n(q90, top));
    v.sort();
    let s = oracle::stats(&v);
    assert_eq!(
        (s.q10, s.q90, s.sum, s.count),
        (q10, q90, mean as u128 * k as u128, k as u64)
    );
    v
}

/// Number of Karlstad to Trondheim runs in the inter-AS fixture.
pub const INTER_AS_RUNS: usize = 1022;

/// 1022 runs along kau-gw, sunet-kst, sunet-sto, nordunet-sto,
/// nordunet-osl, uninett-osl, uninett-trd, destination. nordunet-sto
/// answers in 1016 runs (99.41 %) with RTT mean 13.80 ms, q10 11.76 ms,
/// q90 14.32 ms; uninett-osl answers in 1015 runs (99.32 %) with mean
/// 26.90 ms, q10 24.50 ms, q90 27.62 ms.
pub fn inter_as_runs() -> Vec<TracerouteRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut first = sample_with(1016, 13_800, 11_760, 14_320);
    let mut second = sample_with(1015, 26_900, 24_500, 27_620);
    first.shuffle(&mut rng);
    second.shuffle(&mut rng);
    let mut first = first.into_iter();
    let mut second = second.into_iter();
    let rel = kau_uninett();
    (0..INTER_AS_RUNS)
        .map(|i| {
            let sto = (i % 170 != 5).then(|| first.next().unwrap());
            let osl = (i % 146 != 9).then(|| second.next().unwrap());
            let mut hops = vec![
                Hop::responded(1, ip("10.16.1.1"), HopStatus::TIME_EXCEEDED, 300),
                Hop::responded(2, ip("10.16.1.2"), HopStatus::TIME_EXCEEDED, 1_100),
                Hop::responded(3, ip("10.16.1.3"), HopStatus::TIME_EXCEEDED, 5_200),
            ];
            hops.push(match sto {
                Some(rtt) => Hop::responded(4, ip("10.26.1.1"), HopStatus::TIME_EXCEEDED, rtt),
                None => Hop::timeout(4),
            });
            hops.push(Hop::responded(
                5,
                ip("10.26.1.3"),
                HopStatus::TIME_EXCEEDED,
                20_000,
            ));
            hops.push(match osl {
                Some(rtt) => Hop::responded(6, ip("10.224.1.1"), HopStatus::TIME_EXCEEDED, rtt),
                None => Hop::timeout(6),
            });
            hops.push(Hop::responded(
                7,
                ip("10.224.1.2"),
                HopStatus::TIME_EXCEEDED,
                28_100,
            ));
            hops.push(Hop::responded(
                8,
                rel.destination_address,
                HopStatus::ECHO_REPLY,
                28_400,
            ));
            TracerouteRun {
                timestamp: T0 + (i / 3) as u64 * CYCLE_US + (i % 3) as u64 * 40_000,
                source: rel.source_address,
                destination: rel.destination_address,
                round: (i % 3) as u32,
                hops,
            }
        })
        .collect()
}

/// 50 runs: 17 reach the destination at hop 14 and 33 at hop 15, giving
/// min 14, q10 14, mean 14.66, median 15, q90 15. Two further runs never
/// reach it and must not count.
pub fn hop_count_runs() -> Vec<TracerouteRun> {
    let mut counts: Vec<u16> = [vec![14; 17], vec![15; 33]].concat();
    counts.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let rel = kau_uninett();
    let path = |n: u16, reach: bool| -> Vec<Hop> {
        (1..=n)
            .map(|h| {
                if h == n && reach {
                    Hop::responded(h, rel.destination_address, HopStatus::ECHO_REPLY, 28_000)
                } else {
                    let a = IpAddr::from([10, 16, 2, h as u8]);
                    Hop::responded(h, a, HopStatus::TIME_EXCEEDED, u64::from(h) * 1_500)
                }
            })
            .collect()
    };
    let mut runs: Vec<TracerouteRun> = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| TracerouteRun {
            timestamp: T0 + (i / 3) as u64 * CYCLE_US + (i % 3) as u64 * 40_000,
            source: rel.source_address,
            destination: rel.destination_address,
            round: (i % 3) as u32,
            hops: path(n, true),
        })
        .collect();
    for (j, n) in [(0u64, 9u16), (1, 12)] {
        runs.push(TracerouteRun {
            timestamp: T0 + 100 * CYCLE_US + j * 40_000,
            source: rel.source_address,
            destination: rel.destination_address,
            round: j as u32,
            hops: path(n, false),
        });
    }
    runs
}
