//! JSON channel records.
//!
//! A record is either a time-domain channel or an OFDM matrix, tagged by
//! `kind`:
//!
//! ```json
//! { "kind": "time_domain", "format_version": 1,
//!   "carrier": { "carrier_hz": 2.6e9, "bandwidth_hz": 1e8, "subcarriers": 32, "antennas": 8 },
//!   "clusters": [ { "delay": 1.2e-7, "subpaths": [ { "re": 0.1, "im": -0.2, "aod": 0.3 } ] } ] }
//!
//! { "kind": "ofdm", "format_version": 1, "carrier": { ... },
//!   "matrix": [ [ [re, im], ... K entries ], ... N_BS rows ] }
//! ```
//!
//! Complex numbers are always stored as `(re, im)` pairs of 64-bit floats.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channel::{CarrierConfig, Cluster, OfdmChannel, Subpath, TimeDomainChannel};
use crate::scenario::Snapshot;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Serde adapter storing `Vec<Complex64>` as a list of `[re, im]` pairs.
pub mod complex_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpathRecord {
    pub re: f64,
    pub im: f64,
    pub aod: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub delay: f64,
    pub subpaths: Vec<SubpathRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelRecord {
    TimeDomain {
        format_version: u32,
        carrier: CarrierConfig,
        clusters: Vec<ClusterRecord>,
    },
    Ofdm {
        format_version: u32,
        carrier: CarrierConfig,
        matrix: Vec<Vec<[f64; 2]>>,
    },
}

impl From<&TimeDomainChannel> for ChannelRecord {
    fn from(ch: &TimeDomainChannel) -> Self {
        ChannelRecord::TimeDomain {
            format_version: FORMAT_VERSION,
            carrier: *ch.carrier(),
            clusters: ch
                .clusters()
                .iter()
                .map(|c| ClusterRecord {
                    delay: c.delay,
                    subpaths: c
                        .subpaths
                        .iter()
                        .map(|s| SubpathRecord { re: s.gain.re, im: s.gain.im, aod: s.aod })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl From<&OfdmChannel> for ChannelRecord {
    fn from(ch: &OfdmChannel) -> Self {
        ChannelRecord::Ofdm {
            format_version: FORMAT_VERSION,
            carrier: *ch.carrier(),
            matrix: ch
                .matrix()
                .rows()
                .into_iter()
                .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported record version {v}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

impl ChannelRecord {
    pub fn to_time_domain(&self) -> Result<TimeDomainChannel> {
        match self {
            ChannelRecord::TimeDomain { format_version, carrier, clusters } => {
                check_version(*format_version)?;
                let clusters = clusters
                    .iter()
                    .map(|c| Cluster {
                        delay: c.delay,
                        subpaths: c
                            .subpaths
                            .iter()
                            .map(|s| Subpath { gain: Complex64::new(s.re, s.im), aod: s.aod })
                            .collect(),
                    })
                    .collect();
                TimeDomainChannel::new(clusters, *carrier)
            }
            ChannelRecord::Ofdm { .. } => Err(Error::Format("record holds an OFDM matrix, not a time-domain channel".into())),
        }
    }

    /// OFDM matrix of the record, transforming time-domain records.
    pub fn to_ofdm(&self) -> Result<OfdmChannel> {
        match self {
            ChannelRecord::TimeDomain { .. } => Ok(crate::channel::ofdm_from_time(&self.to_time_domain()?)),
            ChannelRecord::Ofdm { format_version, carrier, matrix } => {
                check_version(*format_version)?;
                let rows = matrix.len();
                let cols = matrix.first().map_or(0, |r| r.len());
                if matrix.iter().any(|r| r.len() != cols) {
                    return Err(Error::Format("ragged OFDM matrix".into()));
                }
                let m = Array2::from_shape_fn((rows, cols), |(n, k)| Complex64::new(matrix[n][k][0], matrix[n][k][1]));
                OfdmChannel::new(m, *carrier)
            }
        }
    }
}

/// One UL/DL snapshot pair of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub format_version: u32,
    pub set_index: usize,
    pub snapshot_index: usize,
    /// UL time; the DL channel is taken `processing_delay` later.
    pub t: f64,
    pub processing_delay: f64,
    pub ul: ChannelRecord,
    pub dl: ChannelRecord,
}

impl SnapshotRecord {
    pub fn new(set_index: usize, snapshot_index: usize, processing_delay: f64, snap: &Snapshot) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            set_index,
            snapshot_index,
            t: snap.t,
            processing_delay,
            ul: (&snap.ul).into(),
            dl: (&snap.dl).into(),
        }
    }

    pub fn to_snapshot(&self) -> Result<Snapshot> {
        check_version(self.format_version)?;
        Ok(Snapshot { t: self.t, ul: self.ul.to_time_domain()?, dl: self.dl.to_time_domain()? })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer(BufWriter::new(file), value).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = fs::File::open(path)?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
