//! Versioned JSON container for liquids and their weights.
//!
//! ```text
//! {
//!   "format": "liquid-graph",
//!   "version": 1,
//!   "graph": {
//!     "neurons": [{"index": 0, "coord": [0, 0, 0], "is_excitatory": true}, ...],
//!     "dims": [5, 10, 10],
//!     "n_input": 784,
//!     "il_edges": [[pre, post, sign], ...],
//!     "ll_edges": [[pre, post, sign], ...],
//!     "clamp": {"input": [-3, 3], "excitatory": [0, 3], "inhibitory": [-3, 0]}
//!   },
//!   "weights": [w_0, w_1, ...] | null
//! }
//! ```
//!
//! Weights follow edge ids: IL edges first, then LL edges.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{LiquidGraph, Weights};

pub const FORMAT: &str = "liquid-graph";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    graph: LiquidGraph,
    weights: Option<Vec<f64>>,
}

pub fn write_liquid<W: Write>(graph: &LiquidGraph, weights: Option<&Weights>, out: W) -> Result<()> {
    let c = Container {
        format: FORMAT.into(),
        version: VERSION,
        graph: graph.clone(),
        weights: weights.map(|w| w.as_slice().to_vec()),
    };
    serde_json::to_writer(out, &c)?;
    Ok(())
}

/// Reads and validates a container; weights are checked against the clamps.
pub fn read_liquid<R: Read>(input: R) -> Result<(LiquidGraph, Option<Weights>)> {
    let c: Container = serde_json::from_reader(input)?;
    if c.format != FORMAT {
        return Err(Error::format(0, format!("unexpected container format {:?}", c.format)));
    }
    if c.version != VERSION {
        return Err(Error::format(0, format!("unsupported container version {}", c.version)));
    }
    c.graph.validate()?;
    let weights = c.weights.map(|w| Weights::from_values(&c.graph, w)).transpose()?;
    Ok((c.graph, weights))
}

pub fn save_liquid(path: &Path, graph: &LiquidGraph, weights: Option<&Weights>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_liquid(graph, weights, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_liquid(path: &Path) -> Result<(LiquidGraph, Option<Weights>)> {
    read_liquid(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_liquid, TopologyConfig};

    #[test]
    fn round_trip_preserves_graph_and_weights() {
        let g = build_liquid(&TopologyConfig::with_size(27, 10), 3).unwrap();
        let w = Weights::uniform(&g, 0.7).unwrap();
        let mut buf = Vec::new();
        write_liquid(&g, Some(&w), &mut buf).unwrap();
        let (g2, w2) = read_liquid(buf.as_slice()).unwrap();
        assert_eq!(g, g2);
        assert_eq!(w2.unwrap().checksum(), w.checksum());
    }

    #[test]
    fn rejects_bad_version_and_weights() {
        let g = build_liquid(&TopologyConfig::with_size(8, 4), 1).unwrap();
        let mut buf = Vec::new();
        write_liquid(&g, None, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let bumped = text.replace("\"version\":1", "\"version\":9");
        assert!(matches!(read_liquid(bumped.as_bytes()), Err(Error::Format { .. })));

        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["weights"] = serde_json::json!(vec![5.0; g.n_edges()]);
        assert!(read_liquid(v.to_string().as_bytes()).is_err());
    }
}
