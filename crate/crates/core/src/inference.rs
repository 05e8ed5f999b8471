//! Quantized intensity inference.
//!
//! For every target category `c` the precompute `P_c[c', s] = β_{c,c'}·κ_{c,c'}(s·g)`
//! holds the β-scaled kernel levels by age cell. With per-category count
//! matrices `N_{c'}` over the `S` cells ending at the evaluation tick, the
//! intensity matrix is
//!
//! ```text
//! Λ[u, c] = μ⁰_c + Σ_{c'} Σ_s P_c[c', S−1−s] · N_{c'}[u, s]
//! ```
//!
//! i.e. the last output of the convolution of each kernel row with each count
//! row. The sum is evaluated as sparse-count × dense-precompute products:
//! every non-zero count adds a scaled, age-indexed slice of the precompute to
//! the user's output row.

use std::io::{BufRead, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{BaseIntensities, LatentNetwork};
use crate::events::{count_matrices_window, BehavioralLog, CategoryIndex, CountMatrix};
use crate::kernels::{quantize_kernel, KernelBank};

pub const DEFAULT_GRAIN_DAYS: f64 = 1.0;
pub const DEFAULT_HORIZON_DAYS: f64 = 180.0;

/// Time-reversed dot product `Σ_s κ[S−1−s]·N[s]`: the convolution of the
/// kernel levels with the counts, read at the final tick.
pub fn quantized_excitation(levels: &[f64], counts: &[f64]) -> Result<f64> {
    if levels.len() != counts.len() {
        return Err(Error::Dimension(format!(
            "{} kernel levels vs {} count cells",
            levels.len(),
            counts.len()
        )));
    }
    Ok(levels.iter().rev().zip(counts).map(|(k, n)| k * n).sum())
}

/// β-scaled quantized kernel levels for every ordered category pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputeBank {
    categories: CategoryIndex,
    grain: f64,
    cells: usize,
    /// `kernel[c][c'·S + s] = κ_{c,c'}(s·g)`
    kernel: Vec<Vec<f64>>,
    /// `scaled[c][c'·S + s] = β_{c,c'}·κ_{c,c'}(s·g)`
    scaled: Vec<Vec<f64>>,
    /// `by_source[c'][s·|C| + c] = scaled[c][c'·S + s]`, contiguous over targets.
    by_source: Vec<Vec<f64>>,
}

impl PrecomputeBank {
    /// Builds from explicit kernel levels, `levels(c, c')` of length `cells`.
    pub fn from_levels<F>(network: &LatentNetwork, grain: f64, cells: usize, mut levels: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<Vec<f64>>,
    {
        if !(grain > 0.0) || cells == 0 {
            return Err(Error::invalid("precompute needs a positive grain and at least one cell"));
        }
        let n = network.num_categories();
        let mut kernel = vec![vec![0.0; n * cells]; n];
        let mut scaled = vec![vec![0.0; n * cells]; n];
        let mut by_source = vec![vec![0.0; n * cells]; n];
        for c in 0..n {
            for src in 0..n {
                let row = levels(c, src)?;
                if row.len() != cells {
                    return Err(Error::Dimension(format!("kernel row of {} cells, expected {cells}", row.len())));
                }
                let beta = network.weight(c, src);
                for (s, &k) in row.iter().enumerate() {
                    if !(k >= 0.0 && k.is_finite()) {
                        return Err(Error::NonFinite(format!("kernel level {k}")));
                    }
                    kernel[c][src * cells + s] = k;
                    scaled[c][src * cells + s] = beta * k;
                    by_source[src][s * n + c] = beta * k;
                }
            }
        }
        Ok(Self {
            categories: network.categories.clone(),
            grain,
            cells,
            kernel,
            scaled,
            by_source,
        })
    }

    pub fn grain(&self) -> f64 {
        self.grain
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn categories(&self) -> &CategoryIndex {
        &self.categories
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    /// Row `c'` of `K_c`.
    pub fn kernel_levels(&self, target: usize, source: usize) -> &[f64] {
        &self.kernel[target][source * self.cells..(source + 1) * self.cells]
    }

    /// Row `c'` of `P_c`.
    pub fn precompute(&self, target: usize, source: usize) -> &[f64] {
        &self.scaled[target][source * self.cells..(source + 1) * self.cells]
    }
}

/// `P_c = (B_c 1ᵀ) ⊙ K_c` for every target `c`, with `K_c` rows quantized
/// from the kernel bank.
pub fn build_precompute(network: &LatentNetwork, bank: &KernelBank, grain: f64, cells: usize) -> Result<PrecomputeBank> {
    let n = network.num_categories();
    if bank.num_categories() != n {
        return Err(Error::Dimension(format!(
            "network has {n} categories, kernel bank {}",
            bank.num_categories()
        )));
    }
    PrecomputeBank::from_levels(network, grain, cells, |c, src| {
        Ok(quantize_kernel(bank.get(c, src)?, grain, cells)?.levels)
    })
}

/// Intensities of every user for every category at one evaluation tick.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMatrix {
    pub user_ids: Vec<String>,
    pub categories: CategoryIndex,
    /// Row-major `|U|×|C|`.
    pub values: Vec<f64>,
    pub grain: f64,
    pub cells: usize,
    /// Evaluation tick in days.
    pub at: f64,
}

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    format: String,
    users: usize,
    categories: CategoryIndex,
    user_ids: Vec<String>,
    grain: f64,
    cells: usize,
    at: f64,
}

const BINARY_FORMAT: &str = "f64le-row-major-users-by-categories";

impl IntensityMatrix {
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn get(&self, user: usize, category: usize) -> f64 {
        self.values[user * self.num_categories() + category]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        let n = self.num_categories();
        &self.values[user * n..(user + 1) * n]
    }

    pub fn column(&self, category: usize) -> Vec<f64> {
        (0..self.num_users()).map(|u| self.get(u, category)).collect()
    }

    /// Wraps raw scores (e.g. from a baseline) as an intensity matrix.
    pub fn from_scores(user_ids: Vec<String>, categories: CategoryIndex, values: Vec<f64>, at: f64) -> Result<Self> {
        if values.len() != user_ids.len() * categories.len() {
            return Err(Error::Dimension("score matrix does not match users × categories".into()));
        }
        Ok(Self {
            user_ids,
            categories,
            values,
            grain: 0.0,
            cells: 0,
            at,
        })
    }

    /// Long CSV: `user_id,category_id,intensity`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["user_id", "category_id", "intensity"])?;
        for (u, id) in self.user_ids.iter().enumerate() {
            for c in 0..self.num_categories() {
                w.write_record([id.as_str(), self.categories.id(c), &self.get(u, c).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the long CSV form. Users and categories are ordered by id;
    /// missing cells are zero.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |m: &str| Error::MalformedRow {
                line,
                message: m.to_string(),
            };
            let user = rec.get(0).ok_or_else(|| bad("missing user_id"))?.to_string();
            let cat = rec.get(1).ok_or_else(|| bad("missing category_id"))?.to_string();
            let v: f64 = rec
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("intensity is not a number"))?;
            rows.push((user, cat, v));
        }
        let categories = CategoryIndex::sorted(rows.iter().map(|r| r.1.as_str()));
        let mut user_ids: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
        user_ids.sort_by(|a, b| crate::events::compare_ids(a, b));
        user_ids.dedup();
        let lookup: std::collections::HashMap<&str, usize> =
            user_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let n = categories.len();
        let mut values = vec![0.0; user_ids.len() * n];
        for (u, c, v) in &rows {
            values[lookup[u.as_str()] * n + categories.index_of(c).unwrap()] = *v;
        }
        let (user_ids, values) = (user_ids.clone(), values);
        Self::from_scores(user_ids, categories, values, f64::NAN)
    }

    /// Compact binary form: one JSON header line, then `|U|·|C|`
    /// little-endian f64 values in row-major order.
    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        let header = BinaryHeader {
            format: BINARY_FORMAT.into(),
            users: self.num_users(),
            categories: self.categories.clone(),
            user_ids: self.user_ids.clone(),
            grain: self.grain,
            cells: self.cells,
            at: self.at,
        };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        for v in &self.values {
            writer.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let header: BinaryHeader = serde_json::from_str(line.trim_end())?;
        if header.format != BINARY_FORMAT {
            return Err(Error::invalid(format!("unsupported binary format `{}`", header.format)));
        }
        let count = header.users * header.categories.len();
        let mut bytes = vec![0u8; count * 8];
        reader.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self {
            user_ids: header.user_ids,
            categories: header.categories,
            values,
            grain: header.grain,
            cells: header.cells,
            at: header.at,
        })
    }
}

fn check_inputs(mu: &BaseIntensities, pre: &PrecomputeBank, counts: &[CountMatrix]) -> Result<usize> {
    let n = pre.num_categories();
    if mu.rates.len() != n {
        return Err(Error::Dimension(format!("{} base rates for {n} categories", mu.rates.len())));
    }
    if counts.len() != n {
        return Err(Error::Dimension(format!("{} count matrices for {n} categories", counts.len())));
    }
    let users = counts.first().map_or(0, CountMatrix::num_users);
    for (c, m) in counts.iter().enumerate() {
        if m.category() != c {
            return Err(Error::Dimension(format!("count matrix {c} holds category {}", m.category())));
        }
        if m.num_users() != users || m.cells() != pre.cells() {
            return Err(Error::Dimension("count matrices disagree on users or cells".into()));
        }
        if (m.grain() - pre.grain()).abs() > 1e-12 * pre.grain() {
            return Err(Error::Dimension(format!("count grain {} vs precompute grain {}", m.grain(), pre.grain())));
        }
    }
    Ok(users)
}

fn user_ids_for(users: usize) -> Vec<String> {
    (0..users).map(|u| u.to_string()).collect()
}

/// `Λ = μ⁰ + Σ_c N_c P_cᵀ` over all users, parallel over user slices.
/// User ids default to dense indices; see [`infer_for_log`].
pub fn infer_intensities(mu: &BaseIntensities, pre: &PrecomputeBank, counts: &[CountMatrix]) -> Result<IntensityMatrix> {
    let users = check_inputs(mu, pre, counts)?;
    let n = pre.num_categories();
    let cells = pre.cells();
    let mut values = vec![0.0; users * n];
    if n > 0 {
        values
            .par_chunks_mut(n)
            .with_min_len(256)
            .enumerate()
            .for_each(|(u, out)| {
                out.copy_from_slice(&mu.rates);
                for (src, m) in counts.iter().enumerate() {
                    let table = &pre.by_source[src];
                    for (s, count) in m.row(u) {
                        let age = cells - 1 - s;
                        let slice = &table[age * n..(age + 1) * n];
                        let w = count as f64;
                        for (o, p) in out.iter_mut().zip(slice) {
                            *o += w * p;
                        }
                    }
                }
            });
    }
    let at = counts.first().map_or(0.0, CountMatrix::end);
    Ok(IntensityMatrix {
        user_ids: user_ids_for(users),
        categories: pre.categories().clone(),
        values,
        grain: pre.grain(),
        cells,
        at,
    })
}

/// Per-user, per-pair scalar evaluation of the same quantity as
/// [`infer_intensities`], one [`quantized_excitation`] per `(c, c')`.
pub fn infer_intensities_scalar(
    mu: &BaseIntensities,
    pre: &PrecomputeBank,
    counts: &[CountMatrix],
) -> Result<IntensityMatrix> {
    let users = check_inputs(mu, pre, counts)?;
    let n = pre.num_categories();
    let mut values = vec![0.0; users * n];
    for u in 0..users {
        let dense: Vec<Vec<f64>> = counts.iter().map(|m| m.dense_row(u)).collect();
        for c in 0..n {
            let mut v = mu.rates[c];
            for (src, row) in dense.iter().enumerate() {
                v += quantized_excitation(pre.precompute(c, src), row)?;
            }
            values[u * n + c] = v;
        }
    }
    Ok(IntensityMatrix {
        user_ids: user_ids_for(users),
        categories: pre.categories().clone(),
        values,
        grain: pre.grain(),
        cells: pre.cells(),
        at: counts.first().map_or(0.0, CountMatrix::end),
    })
}

/// Counts the log on the `pre.cells()` grid ending at `at` and infers Λ
/// with the log's user ids attached.
pub fn infer_for_log(log: &BehavioralLog, mu: &BaseIntensities, pre: &PrecomputeBank, at: f64) -> Result<IntensityMatrix> {
    let counts = count_matrices_window(log, pre.grain(), pre.cells(), at)?;
    let mut lambda = infer_intensities(mu, pre, &counts)?;
    lambda.user_ids = log.user_ids();
    Ok(lambda)
}

/// Event-sum reference intensity without quantization:
/// `μ⁰_c + Σ_{c'} β_{c,c'} Σ_{τ < t} κ_{c,c'}(t − τ)`.
pub fn cif_continuous(
    log: &BehavioralLog,
    user: usize,
    category: usize,
    mu: &BaseIntensities,
    network: &LatentNetwork,
    bank: &KernelBank,
    t: f64,
) -> Result<f64> {
    let mut v = mu.rates[category];
    for e in &log.user(user).events {
        if e.timestamp >= t {
            break;
        }
        let beta = network.weight(category, e.category);
        if beta > 0.0 {
            v += beta * bank.get(category, e.category)?.eval(t - e.timestamp)?;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AudienceMember {
    pub rank: usize,
    pub user: usize,
    pub user_id: String,
    pub score: f64,
}

/// Top users for one category by descending intensity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audience {
    pub category: String,
    pub reach: usize,
    pub members: Vec<AudienceMember>,
}

impl Audience {
    pub fn contains(&self, user: usize) -> bool {
        self.members.iter().any(|m| m.user == user)
    }

    /// `rank,user_id,score` with 1-based ranks.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rank", "user_id", "score"])?;
        for m in &self.members {
            w.write_record([&m.rank.to_string(), m.user_id.as_str(), &m.score.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Indices of the `reach` highest scores, descending, ties by ascending index.
pub fn top_indices(scores: &[f64], reach: usize) -> Vec<usize> {
    let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let reach = reach.min(idx.len());
    if reach == 0 {
        return Vec::new();
    }
    if reach < idx.len() {
        idx.select_nth_unstable_by(reach - 1, order);
        idx.truncate(reach);
    }
    idx.sort_unstable_by(order);
    idx
}

/// Top-`reach` users for `category`. A reach above the user count returns
/// the full ranking.
pub fn rank_audience(lambda: &IntensityMatrix, category: usize, reach: usize) -> Result<Audience> {
    if reach == 0 {
        return Err(Error::invalid("reach must be at least 1"));
    }
    if category >= lambda.num_categories() {
        return Err(Error::invalid(format!("category index {category} out of range")));
    }
    if reach > lambda.num_users() {
        log::warn!(
            "reach {reach} exceeds {} users; returning the full ranking",
            lambda.num_users()
        );
    }
    let scores = lambda.column(category);
    let members = top_indices(&scores, reach)
        .into_iter()
        .enumerate()
        .map(|(r, u)| AudienceMember {
            rank: r + 1,
            user: u,
            user_id: lambda.user_ids[u].clone(),
            score: scores[u],
        })
        .collect();
    Ok(Audience {
        category: lambda.categories.id(category).to_string(),
        reach: reach.min(lambda.num_users()),
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::PurchaseEvent;
    use crate::kernels::{KernelParams, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(levels: &[f64], counts: &[f64]) -> f64 {
        let s_total = counts.len();
        let mut acc = 0.0;
        for (s, &n) in counts.iter().enumerate() {
            for (j, &k) in levels.iter().enumerate() {
                if j == s_total - 1 - s {
                    acc += k * n;
                }
            }
        }
        acc
    }

    #[test]
    fn excitation_basics() {
        assert_eq!(quantized_excitation(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap(), 0.0);
        assert_eq!(quantized_excitation(&[1.5, 2.0, 3.0], &[0.0, 0.0, 1.0]).unwrap(), 1.5);
        assert!(quantized_excitation(&[1.0], &[1.0, 2.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        let n: Vec<f64> = (0..64).map(|_| rng.random_range(0..4) as f64).collect();
        let a = quantized_excitation(&k, &n).unwrap();
        assert!((a - naive(&k, &n)).abs() <= 1e-12 * a.abs().max(1.0));
    }

    fn network(n: usize, f: impl Fn(usize, usize) -> f64) -> LatentNetwork {
        let cats = CategoryIndex::new((0..n).map(|i| format!("c{i}")));
        LatentNetwork::from_matrix(cats, (0..n).map(|c| (0..n).map(|s| f(c, s)).collect()).collect()).unwrap()
    }

    fn random_bank(n: usize, rng: &mut ChaCha8Rng) -> KernelBank {
        let cats = CategoryIndex::new((0..n).map(|i| format!("c{i}")));
        let mut bank = KernelBank::new(cats);
        for c in 0..n {
            for s in 0..n {
                let p = if c == s {
                    KernelParams::mow(&[
                        (rng.random_range(10.0..40.0), rng.random_range(1.0..6.0), 0.6),
                        (rng.random_range(40.0..80.0), rng.random_range(1.0..6.0), 0.4),
                    ])
                } else {
                    KernelParams::weibull(rng.random_range(1.0..10.0), rng.random_range(0.8..3.0))
                };
                bank.set(c, s, p, Provenance::Given, 0);
            }
        }
        bank
    }

    #[test]
    fn zero_network_gives_zero_precompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bank = random_bank(3, &mut rng);
        let pre = build_precompute(&network(3, |_, _| 0.0), &bank, 1.0, 20).unwrap();
        for c in 0..3 {
            for s in 0..3 {
                assert!(pre.precompute(c, s).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn single_category_precompute() {
        let cats = CategoryIndex::new(["a"]);
        let bank = KernelBank::uniform(cats.clone(), KernelParams::weibull(5.0, 2.0));
        let net = LatentNetwork::from_matrix(cats, vec![vec![0.7]]).unwrap();
        let pre = build_precompute(&net, &bank, 1.0, 10).unwrap();
        let q = quantize_kernel(&KernelParams::weibull(5.0, 2.0), 1.0, 10).unwrap();
        let expected: Vec<f64> = q.levels.iter().map(|k| 0.7 * k).collect();
        assert_eq!(pre.precompute(0, 0), expected.as_slice());
    }

    #[test]
    fn precompute_entries_match_kernel_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bank = random_bank(5, &mut rng);
        let betas: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let net = network(5, |c, s| betas[c][s]);
        let pre = build_precompute(&net, &bank, 0.5, 100).unwrap();
        for _ in 0..200 {
            let (c, s, cell) = (rng.random_range(0..5), rng.random_range(0..5), rng.random_range(0..100));
            let k = bank.get(c, s).unwrap().eval_clamped(cell as f64 * 0.5, 0.5e-3).unwrap();
            let expected = betas[c][s] * k;
            let got = pre.precompute(c, s)[cell];
            assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
            assert_eq!(pre.kernel_levels(c, s)[cell], k);
        }
    }

    #[test]
    fn missing_kernel_is_named() {
        let cats = CategoryIndex::new(["a", "b"]);
        let mut bank = KernelBank::new(cats.clone());
        bank.set(0, 0, KernelParams::weibull(1.0, 1.0), Provenance::Given, 0);
        let net = LatentNetwork::from_matrix(cats, vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        match build_precompute(&net, &bank, 1.0, 5) {
            Err(Error::MissingKernel { target, source_category }) => {
                assert_eq!((target.as_str(), source_category.as_str()), ("a", "b"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn mu(n: usize, f: impl Fn(usize) -> f64) -> BaseIntensities {
        BaseIntensities {
            categories: CategoryIndex::new((0..n).map(|i| format!("c{i}"))),
            rates: (0..n).map(f).collect(),
            span: 100.0,
        }
    }

    fn random_counts(users: usize, n: usize, cells: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<CountMatrix> {
        (0..n)
            .map(|c| {
                let rows = (0..users)
                    .map(|_| {
                        let mut row = Vec::new();
                        for s in 0..cells {
                            if rng.random::<f64>() < density {
                                row.push((s, rng.random_range(1..4u32)));
                            }
                        }
                        row
                    })
                    .collect();
                CountMatrix::from_rows(c, 1.0, cells, 0.0, rows).unwrap()
            })
            .collect()
    }

    #[test]
    fn empty_counts_give_base_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bank = random_bank(3, &mut rng);
        let pre = build_precompute(&network(3, |_, _| 0.5), &bank, 1.0, 30).unwrap();
        let counts = random_counts(4, 3, 30, 0.0, &mut rng);
        let base = mu(3, |c| 0.1 * (c + 1) as f64);
        let l = infer_intensities(&base, &pre, &counts).unwrap();
        for u in 0..4 {
            assert_eq!(l.row(u), base.rates.as_slice());
        }
    }

    #[test]
    fn one_purchase_scalar_oracle() {
        // purchase in c1 at t = 37.4 evaluated at t = 50 on a one-day grid:
        // age 12.6 → cell age index 12
        let cats = CategoryIndex::new(["c0", "c1"]);
        let kernel = KernelParams::weibull(8.0, 1.7);
        let bank = KernelBank::uniform(cats.clone(), kernel.clone());
        let net = LatentNetwork::from_matrix(cats, vec![vec![0.0, 0.9], vec![0.0, 0.0]]).unwrap();
        let pre = build_precompute(&net, &bank, 1.0, 40).unwrap();
        let log = BehavioralLog::from_events(
            vec![PurchaseEvent {
                user_id: "u".into(),
                item_id: None,
                category_id: "c1".into(),
                timestamp_days: 37.4,
                price: None,
                promo_flag: false,
            }],
            Some(pre.categories().clone()),
            Some(60.0),
        )
        .unwrap();
        let base = mu(2, |_| 0.05);
        let l = infer_for_log(&log, &base, &pre, 50.0).unwrap();
        let expected = 0.05 + 0.9 * kernel.eval((12.6f64 / 1.0).floor() * 1.0).unwrap();
        assert!((l.get(0, 0) - expected).abs() < 1e-15);
        assert_eq!(l.get(0, 1), 0.05);
        assert_eq!(l.user_ids, vec!["u"]);
    }

    #[test]
    fn matmul_matches_scalar_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 10;
        let bank = random_bank(n, &mut rng);
        let betas: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let pre = build_precompute(&network(n, |c, s| betas[c][s]), &bank, 1.0, 60).unwrap();
        let counts = random_counts(1000, n, 60, 0.02, &mut rng);
        let base = mu(n, |c| 0.01 * c as f64);
        let a = infer_intensities(&base, &pre, &counts).unwrap();
        let b = infer_intensities_scalar(&base, &pre, &counts).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300));
        }
    }

    #[test]
    fn dimension_mismatches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bank = random_bank(2, &mut rng);
        let pre = build_precompute(&network(2, |_, _| 1.0), &bank, 1.0, 10).unwrap();
        let counts = random_counts(3, 2, 12, 0.1, &mut rng);
        assert!(infer_intensities(&mu(2, |_| 0.0), &pre, &counts).is_err());
        let counts = random_counts(3, 2, 10, 0.1, &mut rng);
        assert!(infer_intensities(&mu(3, |_| 0.0), &pre, &counts).is_err());
        assert!(infer_intensities(&mu(2, |_| 0.0), &pre, &counts[..1]).is_err());
    }

    #[test]
    fn continuous_cif_closed_form() {
        let cats = CategoryIndex::new(["a"]);
        let bank = KernelBank::uniform(cats.clone(), KernelParams::Exponential { omega: 3.0 });
        let net = LatentNetwork::from_matrix(cats, vec![vec![0.4]]).unwrap();
        let base = BaseIntensities {
            categories: net.categories.clone(),
            rates: vec![0.2],
            span: 20.0,
        };
        let empty = BehavioralLog::from_events(
            vec![PurchaseEvent {
                user_id: "u".into(),
                item_id: None,
                category_id: "a".into(),
                timestamp_days: 2.0,
                price: None,
                promo_flag: false,
            }],
            None,
            Some(20.0),
        )
        .unwrap();
        assert_eq!(cif_continuous(&empty, 0, 0, &base, &net, &bank, 1.0).unwrap(), 0.2);
        let v = cif_continuous(&empty, 0, 0, &base, &net, &bank, 7.0).unwrap();
        assert!((v - (0.2 + 0.4 * (-5.0f64 / 3.0).exp())).abs() < 1e-15);
    }

    fn matrix(scores: Vec<f64>) -> IntensityMatrix {
        let users = scores.len();
        IntensityMatrix::from_scores(
            (0..users).map(|u| u.to_string()).collect(),
            CategoryIndex::new(["a"]),
            scores,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn ranking_rules() {
        let one = matrix(vec![0.3]);
        assert_eq!(rank_audience(&one, 0, 5).unwrap().members.len(), 1);
        let tie = matrix(vec![1.0, 2.0, 2.0]);
        let a = rank_audience(&tie, 0, 2).unwrap();
        assert_eq!(a.members.iter().map(|m| m.user).collect::<Vec<_>>(), vec![1, 2]);
        assert!(rank_audience(&tie, 0, 0).is_err());
    }

    #[test]
    fn ranking_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let scores: Vec<f64> = (0..500).map(|_| (rng.random_range(0..50)) as f64).collect();
        let m = matrix(scores.clone());
        let a = rank_audience(&m, 0, 10).unwrap();
        let mut all: Vec<usize> = (0..500).collect();
        all.sort_by(|&x, &y| scores[y].partial_cmp(&scores[x]).unwrap().then(x.cmp(&y)));
        assert_eq!(a.members.iter().map(|m| m.user).collect::<Vec<_>>(), all[..10].to_vec());
        assert!(a.members.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn csv_and_binary_roundtrip() {
        let m = IntensityMatrix {
            user_ids: vec!["2".into(), "10".into()],
            categories: CategoryIndex::new(["a", "b"]),
            values: vec![0.1, 0.25, 3.0, 1e-12],
            grain: 1.0,
            cells: 180,
            at: 200.0,
        };
        let mut bin = Vec::new();
        m.write_binary(&mut bin).unwrap();
        assert_eq!(IntensityMatrix::read_binary(bin.as_slice()).unwrap(), m);
        let mut csv_buf = Vec::new();
        m.write_csv(&mut csv_buf).unwrap();
        let back = IntensityMatrix::read_csv(csv_buf.as_slice()).unwrap();
        assert_eq!(back.values, m.values);
        assert_eq!(back.user_ids, m.user_ids);
    }
}
