use std::cmp::Ordering;
use std::fmt;

use serde::{Serialize, Serializer};

/// Nearest-rank percentile of an ascending sample: the element at 1-based
/// rank ceil(pct·n/100). `None` for an empty sample.
pub fn nearest_rank<T: Copy>(sorted: &[T], pct: u32) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as u64;
    let rank = (u64::from(pct) * n).div_ceil(100).max(1);
    Some(sorted[(rank.min(n) - 1) as usize])
}

/// Exact arithmetic mean kept as a fraction `sum / count`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mean {
    pub sum: u128,
    pub count: u64,
}

impl Mean {
    pub fn of<I: IntoIterator<Item = u64>>(values: I) -> Self {
        values.into_iter().fold(Self::default(), |mut m, v| {
            m.sum += u128::from(v);
            m.count += 1;
            m
        })
    }

    pub fn value(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }

    /// Decimal rendering of `value / scale` with `decimals` places,
    /// rounded half to even on the exact fraction.
    pub fn format(&self, scale: u64, decimals: u32) -> String {
        format_ratio(
            self.sum,
            u128::from(self.count) * u128::from(scale),
            decimals,
        )
    }
}

impl PartialEq for Mean {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Mean {}

impl PartialOrd for Mean {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Mean {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.sum * u128::from(other.count)).cmp(&(other.sum * u128::from(self.count)))
    }
}

impl Serialize for Mean {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

/// `num / den` with `decimals` fractional digits, half to even.
/// `den` must be nonzero.
pub fn format_ratio(num: u128, den: u128, decimals: u32) -> String {
    assert!(den > 0, "zero denominator");
    let scale = 10u128.pow(decimals);
    let scaled = num * scale;
    let (mut q, r) = (scaled / den, scaled % den);
    match (2 * r).cmp(&den) {
        Ordering::Greater => q += 1,
        Ordering::Equal if q % 2 == 1 => q += 1,
        _ => {}
    }
    if decimals == 0 {
        return q.to_string();
    }
    format!(
        "{}.{:0width$}",
        q / scale,
        q % scale,
        width = decimals as usize
    )
}

/// Microseconds rendered as milliseconds with two decimals.
pub fn ms2(us: u64) -> String {
    format_ratio(u128::from(us), 1000, 2)
}

/// A percentage `100·part/whole` kept exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub part: u64,
    pub whole: u64,
}

impl Share {
    /// Correctly rounded, so comparisons against a decimal threshold
    /// literal agree with the exact value whenever they are equal.
    pub fn percent(&self) -> f64 {
        (100 * self.part) as f64 / self.whole as f64
    }

    pub fn at_least(&self, threshold_percent: f64) -> bool {
        self.percent() >= threshold_percent
    }
}

impl fmt::Display for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_ratio(
            u128::from(self.part) * 100,
            u128::from(self.whole),
            2,
        ))
    }
}

impl Serialize for Share {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.percent())
    }
}

/// Nearest-rank summary of a sample of integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub min: u64,
    pub q10: u64,
    pub median: u64,
    pub q90: u64,
    pub max: u64,
    pub mean: Mean,
}

impl Summary {
    pub fn of(mut sample: Vec<u64>) -> Option<Self> {
        sample.sort_unstable();
        Some(Self {
            count: sample.len(),
            min: *sample.first()?,
            q10: nearest_rank(&sample, 10)?,
            median: nearest_rank(&sample, 50)?,
            q90: nearest_rank(&sample, 90)?,
            max: *sample.last()?,
            mean: Mean::of(sample.iter().copied()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank_on_one_to_hundred() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(nearest_rank(&v, 10), Some(10));
        assert_eq!(nearest_rank(&v, 90), Some(90));
        assert_eq!(nearest_rank(&v, 0), Some(1));
        assert_eq!(nearest_rank(&v, 100), Some(100));
        assert_eq!(nearest_rank::<u64>(&[], 50), None);
        assert_eq!(nearest_rank(&[14, 14, 15, 15, 15], 50), Some(15));
    }

    #[test]
    fn half_even() {
        assert_eq!(format_ratio(1380, 100, 2), "13.80");
        assert_eq!(format_ratio(1, 8, 2), "0.12");
        assert_eq!(format_ratio(3, 8, 2), "0.38");
        assert_eq!(format_ratio(5, 2, 0), "2");
        assert_eq!(format_ratio(7, 2, 0), "4");
        assert_eq!(format_ratio(169, 170, 2), "0.99");
        assert_eq!(
            Share {
                part: 169,
                whole: 170
            }
            .to_string(),
            "99.41"
        );
        assert_eq!(Mean::of([14, 14, 15, 15, 15]).format(1, 2), "14.60");
        assert_eq!(ms2(11_755), "11.76");
        assert_eq!(ms2(11_765), "11.76");
    }

    #[test]
    fn threshold_literals_are_exact() {
        assert!(Share {
            part: 1,
            whole: 1000
        }
        .at_least(0.1));
        assert!(!Share {
            part: 1,
            whole: 1001
        }
        .at_least(0.1));
        assert!(Share { part: 1, whole: 40 }.at_least(2.5));
    }

    proptest! {
        #[test]
        fn formatting_matches_exact_decimal(num in 0u64..10_000_000, den in 1u64..100_000) {
            // Oracle: h/100 is the nearest hundredth, with ties going to even h.
            let s = format_ratio(u128::from(num), u128::from(den), 2);
            let (int, frac) = s.split_once('.').unwrap();
            let h = int.parse::<i128>().unwrap() * 100 + frac.parse::<i128>().unwrap();
            let d = (100 * i128::from(num) - h * i128::from(den)).abs();
            prop_assert!(2 * d <= i128::from(den));
            if 2 * d == i128::from(den) {
                prop_assert_eq!(h % 2, 0);
            }
        }

        #[test]
        fn mean_order_is_exact(a in prop::collection::vec(0u64..1000, 1..20), b in prop::collection::vec(0u64..1000, 1..20)) {
            let (ma, mb) = (Mean::of(a.clone()), Mean::of(b.clone()));
            let lhs = a.iter().sum::<u64>() as u128 * b.len() as u128;
            let rhs = b.iter().sum::<u64>() as u128 * a.len() as u128;
            prop_assert_eq!(ma.cmp(&mb), lhs.cmp(&rhs));
        }

        #[test]
        fn summary_is_sandwiched(v in prop::collection::vec(any::<u32>(), 1..200)) {
            let s = Summary::of(v.iter().map(|&x| u64::from(x)).collect()).unwrap();
            prop_assert!(s.min <= s.q10 && s.q10 <= s.median && s.median <= s.q90 && s.q90 <= s.max);
            let m = s.mean.value();
            prop_assert!(s.min as f64 <= m && m <= s.max as f64);
        }
    }
}
