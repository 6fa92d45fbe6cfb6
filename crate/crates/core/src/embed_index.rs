//! Exact cosine search over an [`EmbeddingMatrix`].
//!
//! Rows are expected to be unit-normalized so cosine similarity is a plain
//! dot product. The scan walks fixed-size row blocks in parallel and merges
//! per-block results under the total order (similarity desc, id asc), which
//! makes the output independent of block size and worker count.
//!
//! Every similarity is accumulated the same way: `acc = acc + a[d] * b[d]`
//! for `d = 0..dim`, in `f32`, starting from zero. Several probes are
//! evaluated side by side to keep the inner loop vectorizable, but each
//! probe keeps that exact accumulation order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::corpus_io::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::par;

/// Rows per scan block.
pub const DEFAULT_BLOCK_ROWS: usize = 65_536;

const TILE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub id: String,
    #[serde(skip)]
    pub row: usize,
    pub similarity: f32,
    pub rank: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    /// Upper bound on rows per scan block. Blocks shrink (down to 1,024
    /// rows) so every worker gets several; results do not depend on it.
    pub block_rows: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            block_rows: DEFAULT_BLOCK_ROWS,
        }
    }
}

/// Unit-normalize every row. Norms are computed in `f64`.
pub fn normalize_rows(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(matrix.data().len());
    for (id, row) in matrix.rows() {
        let unit = normalize(row).ok_or_else(|| Error::ZeroRow { id: id.to_string() })?;
        data.extend_from_slice(&unit);
    }
    Ok(matrix.with_data(data))
}

/// Unit-normalized copy of `v`, or `None` for a zero vector.
pub fn normalize(v: &[f32]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

/// Scan candidate ordered so that a *greater* value is a *worse* neighbor;
/// the top of a max-heap is then the current worst kept entry.
#[derive(Debug, Clone, Copy)]
struct Cand {
    sim: f32,
    id_rank: u32,
    row: u32,
}

impl PartialEq for Cand {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then(self.id_rank.cmp(&other.id_rank))
    }
}

struct Bounded {
    k: usize,
    heap: BinaryHeap<Cand>,
}

impl Bounded {
    fn new(k: usize) -> Self {
        Bounded {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
        }
    }

    #[inline]
    fn offer(&mut self, c: Cand) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if c < *worst {
                *worst = c;
            }
        }
    }

    fn merge(self, other: Bounded) -> Bounded {
        let (mut big, small) = if self.heap.len() >= other.heap.len() {
            (self, other)
        } else {
            (other, self)
        };
        for c in small.heap {
            big.offer(c);
        }
        big
    }
}

/// Exact search over a borrowed matrix.
pub struct CosineIndex<'a> {
    matrix: &'a EmbeddingMatrix,
    id_rank: Vec<u32>,
    config: SearchConfig,
}

impl<'a> CosineIndex<'a> {
    pub fn new(matrix: &'a EmbeddingMatrix) -> Self {
        Self::with_config(matrix, SearchConfig::default())
    }

    pub fn with_config(matrix: &'a EmbeddingMatrix, config: SearchConfig) -> Self {
        let ids = matrix.ids();
        let mut order: Vec<u32> = (0..ids.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| ids[a as usize].cmp(&ids[b as usize]));
        let mut id_rank = vec![0u32; ids.len()];
        for (rank, &row) in order.iter().enumerate() {
            id_rank[row as usize] = rank as u32;
        }
        CosineIndex {
            matrix,
            id_rank,
            config,
        }
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        self.matrix
    }

    pub fn top_k(&self, probe: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        Ok(self.top_k_batch(&[probe], k)?.pop().unwrap())
    }

    /// Top-k neighbors for several probes in one pass over the matrix.
    pub fn top_k_batch(&self, probes: &[&[f32]], k: usize) -> Result<Vec<Vec<Neighbor>>> {
        if k == 0 {
            return Err(Error::invalid("embed-index", "k must be at least 1"));
        }
        self.check_dims(probes)?;
        let tiles = transpose_tiles(probes, self.matrix.dim());
        let n = probes.len();
        let heaps = self.scan(
            || (0..n).map(|_| Bounded::new(k)).collect::<Vec<_>>(),
            |acc: &mut Vec<Bounded>, p, cand| acc[p].offer(cand),
            &tiles,
            n,
            |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
        );
        Ok(heaps
            .into_iter()
            .map(|h| self.finish(h.heap.into_sorted_vec()))
            .collect())
    }

    /// All rows with similarity strictly greater than `theta`.
    pub fn above_threshold(&self, probe: &[f32], theta: f32) -> Result<Vec<Neighbor>> {
        Ok(self.above_threshold_batch(&[probe], theta)?.pop().unwrap())
    }

    pub fn above_threshold_batch(&self, probes: &[&[f32]], theta: f32) -> Result<Vec<Vec<Neighbor>>> {
        self.check_dims(probes)?;
        let tiles = transpose_tiles(probes, self.matrix.dim());
        let n = probes.len();
        let hits = self.scan(
            || vec![Vec::new(); n],
            |acc: &mut Vec<Vec<Cand>>, p, cand| {
                if cand.sim > theta {
                    acc[p].push(cand)
                }
            },
            &tiles,
            n,
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.extend(y);
                }
                a
            },
        );
        Ok(hits
            .into_iter()
            .map(|mut v| {
                v.sort_unstable();
                self.finish(v)
            })
            .collect())
    }

    fn check_dims(&self, probes: &[&[f32]]) -> Result<()> {
        let dim = self.matrix.dim();
        match probes.iter().find(|p| p.len() != dim) {
            Some(p) => Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            }),
            None => Ok(()),
        }
    }

    fn finish(&self, sorted: Vec<Cand>) -> Vec<Neighbor> {
        sorted
            .into_iter()
            .enumerate()
            .map(|(i, c)| Neighbor {
                id: self.matrix.ids()[c.row as usize].clone(),
                row: c.row as usize,
                similarity: c.sim,
                rank: i as u32 + 1,
            })
            .collect()
    }

    fn scan<A, I, V, M>(&self, identity: I, visit: V, tiles: &[Vec<f32>], n_probes: usize, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        V: Fn(&mut A, usize, Cand) + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        let dim = self.matrix.dim();
        let spread = self.matrix.count().div_ceil(4 * par::current_threads()).max(1024);
        let block_rows = self.config.block_rows.clamp(1, spread);
        par::chunk_reduce(
            self.matrix.data(),
            block_rows * dim,
            &identity,
            |block_idx, block| {
                let mut acc = identity();
                let row0 = block_idx * block_rows;
                for (t, tile) in tiles.iter().enumerate() {
                    let base = t * TILE;
                    let live = (n_probes - base).min(TILE);
                    for (r, row) in block.chunks_exact(dim).enumerate() {
                        let sims = dot_tile(row, tile);
                        let row = row0 + r;
                        for (p, &sim) in sims.iter().take(live).enumerate() {
                            visit(
                                &mut acc,
                                base + p,
                                Cand {
                                    // fold -0.0 into +0.0 so ties compare equal
                                    sim: sim + 0.0,
                                    id_rank: self.id_rank[row],
                                    row: row as u32,
                                },
                            );
                        }
                    }
                }
                acc
            },
            &merge,
        )
    }
}

/// Probes regrouped into tiles of `TILE`, each stored dimension-major
/// (`tile[d * TILE + p]`), zero-padded.
fn transpose_tiles(probes: &[&[f32]], dim: usize) -> Vec<Vec<f32>> {
    probes
        .chunks(TILE)
        .map(|group| {
            let mut tile = vec![0.0f32; dim * TILE];
            for (p, probe) in group.iter().enumerate() {
                for (d, &v) in probe.iter().enumerate() {
                    tile[d * TILE + p] = v;
                }
            }
            tile
        })
        .collect()
}

#[inline]
fn dot_tile(row: &[f32], tile: &[f32]) -> [f32; TILE] {
    let mut acc = [0.0f32; TILE];
    for (&x, lane) in row.iter().zip(tile.chunks_exact(TILE)) {
        for p in 0..TILE {
            acc[p] += x * lane[p];
        }
    }
    acc
}

pub fn top_k(matrix: &EmbeddingMatrix, probe: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    CosineIndex::new(matrix).top_k(probe, k)
}

pub fn above_threshold(matrix: &EmbeddingMatrix, probe: &[f32], theta: f32) -> Result<Vec<Neighbor>> {
    CosineIndex::new(matrix).above_threshold(probe, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(ids: &[&str], rows: &[&[f32]]) -> EmbeddingMatrix {
        let dim = rows[0].len();
        EmbeddingMatrix::new(
            dim,
            ids.iter().map(|s| s.to_string()).collect(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    fn random_unit(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> EmbeddingMatrix {
        let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let ids = (0..n).map(|i| format!("r{i:05}")).collect();
        normalize_rows(&EmbeddingMatrix::new(dim, ids, data).unwrap()).unwrap()
    }

    fn naive_dot(a: &[f32], b: &[f32]) -> f32 {
        let mut s = 0.0f32;
        for (x, y) in a.iter().zip(b) {
            s += x * y;
        }
        s
    }

    #[test]
    fn normalizes_3_4_5() {
        let m = normalize_rows(&matrix(&["a"], &[&[3.0, 4.0]])).unwrap();
        assert!((m.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((m.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_is_idempotent_on_unit_rows() {
        let m = matrix(&["a", "b"], &[&[1.0, 0.0], &[0.6, 0.8]]);
        let n = normalize_rows(&m).unwrap();
        for (a, b) in m.data().iter().zip(n.data()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn random_rows_have_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_unit(&mut rng, 100, 8);
        for (_, row) in m.rows() {
            let norm = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_row_is_named() {
        let m = matrix(&["ok", "zero"], &[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(normalize_rows(&m), Err(Error::ZeroRow { id }) if id == "zero"));
    }

    #[test]
    fn self_match_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_unit(&mut rng, 50, 16);
        let probe = m.row(5).to_vec();
        let hits = top_k(&m, &probe, 3).unwrap();
        assert_eq!(hits[0].id, "r00005");
        assert!((hits[0].similarity - 1.0).abs() < 1e-6);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn hand_computed_order() {
        let m = matrix(&["v1", "v2", "v3"], &[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.8]]);
        let hits = top_k(&m, &[1.0, 0.0], 3).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["v1", "v3", "v2"]);
        assert_eq!(hits[0].similarity, 1.0);
        assert!((hits[1].similarity - 0.6).abs() < 1e-6);
        assert_eq!(hits[2].similarity, 0.0);
    }

    #[test]
    fn ties_break_by_id() {
        let m = matrix(&["zeta", "alpha", "mid"], &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let hits = top_k(&m, &[1.0, 0.0], 2).unwrap();
        assert_eq!(hits[0].id, "alpha");
        assert_eq!(hits[1].id, "zeta");
        let one = top_k(&m, &[1.0, 0.0], 1).unwrap();
        assert_eq!(one[0].id, "alpha");
    }

    #[test]
    fn k_larger_than_count_returns_all() {
        let m = matrix(&["a", "b"], &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(top_k(&m, &[1.0, 0.0], 10).unwrap().len(), 2);
        assert!(top_k(&m, &[1.0, 0.0], 0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let m = matrix(&["a"], &[&[1.0, 0.0]]);
        assert!(matches!(
            top_k(&m, &[1.0, 0.0, 0.0], 1),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(above_threshold(&m, &[1.0], 0.0).is_err());
    }

    #[test]
    fn threshold_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_unit(&mut rng, 40, 8);
        let mut probe = vec![0.0f32; 8];
        probe[0] = 1.0;
        assert!(above_threshold(&m, &probe, 1.0).unwrap().is_empty());
        assert_eq!(above_threshold(&m, &probe, -1.0).unwrap().len(), 40);
    }

    #[test]
    fn threshold_matches_brute_force_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_unit(&mut rng, 1000, 4);
        let probe = m.row(0).to_vec();
        let mut expected: Vec<(f32, &str)> = m
            .rows()
            .map(|(id, r)| (naive_dot(&probe, r), id))
            .filter(|(s, _)| *s > 0.9)
            .collect();
        expected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
        let idx = CosineIndex::with_config(&m, SearchConfig { block_rows: 37 });
        let got = idx.above_threshold(&probe, 0.9).unwrap();
        assert!(!got.is_empty());
        assert_eq!(
            got.iter().map(|n| (n.similarity, n.id.as_str())).collect::<Vec<_>>(),
            expected
        );
    }

    #[test]
    fn batch_equals_single_probe_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_unit(&mut rng, 300, 12);
        let probes: Vec<Vec<f32>> = (0..11).map(|i| m.row(i * 7).to_vec()).collect();
        let refs: Vec<&[f32]> = probes.iter().map(Vec::as_slice).collect();
        let idx = CosineIndex::with_config(&m, SearchConfig { block_rows: 64 });
        let batch = idx.top_k_batch(&refs, 9).unwrap();
        for (p, got) in refs.iter().zip(&batch) {
            assert_eq!(&idx.top_k(p, 9).unwrap(), got);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prefix_monotone_and_block_invariant(seed in 0u64..1000, k in 1usize..30, block in 1usize..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_unit(&mut rng, 120, 6);
            let probe = m.row(3).to_vec();
            let whole = CosineIndex::new(&m);
            let blocked = CosineIndex::with_config(&m, SearchConfig { block_rows: block });
            let a = whole.top_k(&probe, k).unwrap();
            let b = blocked.top_k(&probe, k + 1).unwrap();
            prop_assert_eq!(&a[..], &b[..a.len()]);
            prop_assert_eq!(a, blocked.top_k(&probe, k).unwrap());
        }
    }
}
