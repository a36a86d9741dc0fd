//! Statistics over stored records: hourly RTT quantiles, per-year CDFs of
//! bucket means, link and crossing shares, hop counts, and route graphs.
//!
//! Quantiles are nearest-rank; means are kept as exact fractions and only
//! rounded (half to even) when rendered.

mod graph;
mod links;
mod render;
mod series;
mod stats;

pub use graph::{color_key, export_route_graph, thickness, GraphExport, GraphFormat, GraphOptions};
pub use links::{
    crossing_table, hop_count_stats, link_shares, CrossingOptions, CrossingRow, Grouping,
    HopCountStats, LinkObservation, LinkSample,
};
pub use render::{
    cdf_rows, crossing_table_rows, hop_count_rows, rtt_series_rows, Table, TableFormat,
};
pub use series::{bucket_rtt_series, mean_rtt_cdf, utc_year, CdfPoint, RttBucketStats, HOUR_US};
pub use stats::{format_ratio, ms2, nearest_rank, Mean, Share, Summary};
