//! Load-balancing-aware ICMP Ping/Traceroute measurement, a deterministic
//! network simulator to test it against, a JSON record store, AS/geo
//! enrichment, and the statistics computed over the collected routes.

pub mod analytics;
pub mod enrich;
pub mod icmp;
pub mod probe;
pub mod sim;
pub mod store;
