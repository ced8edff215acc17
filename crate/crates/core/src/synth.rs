//! Seeded synthetic embedding tables for tests, benchmarks and demos.

use rand::distributions::Distribution;
use rand_distr::StandardNormal;

use crate::embed::EmbeddingTable;
use crate::rng::{Domain, RandomStream};

/// `n` tokens named `tok00000`, `tok00001`, ... with i.i.d. standard normal
/// components.
pub fn gaussian_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = RandomStream::new(seed).substream(Domain::Synthetic, n as u64, dim as u64);
    let rows = (0..n).map(|i| {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        (format!("tok{i:05}"), v)
    });
    EmbeddingTable::from_rows(rows).expect("synthetic rows are well formed")
}

/// Tokens scattered around `clusters` random centres with relative noise
/// `spread`, so that nearest neighbours are semantically meaningful.
pub fn clustered_table(n: usize, dim: usize, clusters: usize, spread: f64, seed: u64) -> EmbeddingTable {
    let clusters = clusters.max(1);
    let mut rng = RandomStream::new(seed).substream(Domain::Synthetic, n as u64, (dim as u64) << 32 | clusters as u64);
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let rows = (0..n).map(|i| {
        let centre = &centres[i % clusters];
        let v: Vec<f64> = centre
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c + spread * z
            })
            .collect();
        (format!("tok{i:05}"), v)
    });
    EmbeddingTable::from_rows(rows).expect("synthetic rows are well formed")
}

/// Writes a table in the embedding text format. Values use Rust's
/// shortest round-trip float formatting, so reloading is exact.
pub fn write_embeddings<W: std::io::Write>(table: &EmbeddingTable, mut out: W) -> std::io::Result<()> {
    for id in table.vocab().ids() {
        out.write_all(table.surface(id).as_bytes())?;
        for v in table.vector(id) {
            write!(out, " {v}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}
