//! Exact sampling of MAG realizations and of marginal degree draws.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::sample_binomial;
use crate::error::{MagError, Result};
use crate::model::ModelParams;
use crate::rng::{child_seed, stream, StreamTag};

/// Default cap on `n (n - 1) / 2` for [`sample_graph`].
pub const DEFAULT_PAIR_BUDGET: u128 = 1_000_000_000;

/// A row of `len` attribute bits packed 64 per word, least significant bit first.
/// Bits past `len` in the last word are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitRow {
    words: Vec<u64>,
    len: usize,
}

impl BitRow {
    pub fn zeros(len: usize) -> Self {
        BitRow { words: vec![0; words_for(len)], len }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut row = BitRow::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                row.words[i / 64] |= 1 << (i % 64);
            }
        }
        row
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(MagError::param(format!("{} words cannot hold exactly {len} bits", words.len())));
        }
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last() {
                if last >> (len % 64) != 0 {
                    return Err(MagError::param("bits set past the row length"));
                }
            }
        }
        Ok(BitRow { words, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

/// `ln q11, ln q10, ln q00`, precomputed once per parameter set.
#[derive(Debug, Clone, Copy)]
pub struct LinkLogs {
    ln_q11: f64,
    ln_q10: f64,
    ln_q00: f64,
}

impl LinkLogs {
    pub fn new(params: &ModelParams) -> Self {
        LinkLogs { ln_q11: params.q11().ln(), ln_q10: params.q10().ln(), ln_q00: params.q00().ln() }
    }

    /// `ln Q_L(a, b)` for equal-length packed rows of `len` bits.
    #[inline]
    pub fn ln_link(&self, a: &[u64], b: &[u64], len: usize) -> f64 {
        let mut c11 = 0u32;
        let mut c10 = 0u32;
        for (x, y) in a.iter().zip(b) {
            c11 += (x & y).count_ones();
            c10 += (x ^ y).count_ones();
        }
        let c00 = len as u32 - c11 - c10;
        c11 as f64 * self.ln_q11 + c10 as f64 * self.ln_q10 + c00 as f64 * self.ln_q00
    }
}

/// `Q_L(a, b) = prod_l q(a_l, b_l)`, evaluated from two popcounts.
pub fn link_probability(row_u: &BitRow, row_v: &BitRow, params: &ModelParams) -> Result<f64> {
    if row_u.len != row_v.len {
        return Err(MagError::LengthMismatch { left: row_u.len, right: row_v.len });
    }
    let (mut c11, mut c10) = (0i32, 0i32);
    for (x, y) in row_u.words.iter().zip(&row_v.words) {
        c11 += (x & y).count_ones() as i32;
        c10 += (x ^ y).count_ones() as i32;
    }
    let c00 = row_u.len as i32 - c11 - c10;
    Ok(params.q11().powi(c11) * params.q10().powi(c10) * params.q00().powi(c00))
}

/// One realization of the MAG on `n` nodes with `l` attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagGraph {
    n: usize,
    l: usize,
    words_per_row: usize,
    attributes: Vec<u64>,
    /// Sorted, `u < v`.
    edges: Vec<(u32, u32)>,
}

impl MagGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn row_words(&self, u: usize) -> &[u64] {
        &self.attributes[u * self.words_per_row..(u + 1) * self.words_per_row]
    }

    pub fn row(&self, u: usize) -> BitRow {
        BitRow { words: self.row_words(u).to_vec(), len: self.l }
    }

    pub fn attribute(&self, u: usize, k: usize) -> bool {
        self.row_words(u)[k / 64] >> (k % 64) & 1 == 1
    }

    /// `S_L(u)`: number of attributes of `u` equal to 1.
    pub fn ones(&self, u: usize) -> u32 {
        self.row_words(u).iter().map(|w| w.count_ones()).sum()
    }

    pub fn degrees(&self) -> Vec<u64> {
        let mut deg = vec![0u64; self.n];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    pub fn degree(&self, u: usize) -> u64 {
        let u = u as u32;
        self.edges.iter().filter(|&&(a, b)| a == u || b == u).count() as u64
    }

    /// `u<TAB>v` per edge after `#`-prefixed header lines.
    pub fn write_edge_list<W: Write>(&self, mut w: W, header: &[String]) -> io::Result<()> {
        for h in header {
            writeln!(w, "# {h}")?;
        }
        for &(u, v) in &self.edges {
            writeln!(w, "{u}\t{v}")?;
        }
        Ok(())
    }

    /// One line of `l` characters `0`/`1` per node.
    pub fn write_attributes<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut line = String::with_capacity(self.l + 1);
        for u in 0..self.n {
            line.clear();
            for k in 0..self.l {
                line.push(if self.attribute(u, k) { '1' } else { '0' });
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

fn validate_shape(n: u64, l: u64) -> Result<()> {
    if n < 2 {
        return Err(MagError::range(format!("n must be at least 2, got {n}")));
    }
    if l < 1 {
        return Err(MagError::range(format!("l must be at least 1, got {l}")));
    }
    Ok(())
}

fn sample_attribute_row(seed: u64, u: u64, l: usize, mu1: f64, out: &mut [u64]) {
    let mut rng = stream(seed, StreamTag::Attributes, u);
    for k in 0..l {
        if rng.random::<f64>() < mu1 {
            out[k / 64] |= 1 << (k % 64);
        }
    }
}

/// Sample a full realization. Uses [`DEFAULT_PAIR_BUDGET`].
pub fn sample_graph(params: &ModelParams, n: u64, l: u64, seed: u64) -> Result<MagGraph> {
    sample_graph_with_budget(params, n, l, seed, DEFAULT_PAIR_BUDGET)
}

/// Attributes are i.i.d. Bernoulli(mu1) with one stream per node; the pair
/// uniforms `U(u, v)`, `v > u`, come from one stream per row `u`. The result
/// does not depend on the rayon pool size.
pub fn sample_graph_with_budget(
    params: &ModelParams,
    n: u64,
    l: u64,
    seed: u64,
    pair_budget: u128,
) -> Result<MagGraph> {
    validate_shape(n, l)?;
    let pairs = n as u128 * (n as u128 - 1) / 2;
    if pairs > pair_budget {
        return Err(MagError::BudgetExceeded { pairs, budget: pair_budget });
    }
    if n > u32::MAX as u64 {
        return Err(MagError::range("n exceeds 32-bit node ids"));
    }
    let (nn, ll) = (n as usize, l as usize);
    let wpr = words_for(ll);
    let mut attributes = vec![0u64; nn * wpr];
    attributes
        .par_chunks_mut(wpr)
        .enumerate()
        .for_each(|(u, row)| sample_attribute_row(seed, u as u64, ll, params.mu1(), row));

    let logs = LinkLogs::new(params);
    let rows: Vec<Vec<(u32, u32)>> = (0..nn)
        .into_par_iter()
        .map(|u| {
            let mut rng = stream(seed, StreamTag::PairUniforms, u as u64);
            let ru = &attributes[u * wpr..(u + 1) * wpr];
            let mut out = Vec::new();
            for v in u + 1..nn {
                let rv = &attributes[v * wpr..(v + 1) * wpr];
                let p = logs.ln_link(ru, rv, ll).exp();
                if rng.random::<f64>() < p {
                    out.push((u as u32, v as u32));
                }
            }
            out
        })
        .collect();
    let edges = rows.into_iter().flatten().collect();
    Ok(MagGraph { n: nn, l: ll, words_per_row: wpr, attributes, edges })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMethod {
    FullGraph,
    DirectCompound,
}

/// i.i.d. marginal degree draws plus everything needed to regenerate them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeSampleSet {
    pub params: ModelParams,
    pub n: u64,
    pub l: u32,
    pub seed: u64,
    pub method: SampleMethod,
    pub degrees: Vec<u64>,
    /// `S_L` of the sampled node for each draw.
    pub ones: Vec<u32>,
}

impl DegreeSampleSet {
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn zero_count(&self) -> usize {
        self.degrees.iter().filter(|&&d| d == 0).count()
    }

    /// `E[D | S_L] = (n - 1) gamma1^S gamma0^(L - S)` for draw `i`.
    pub fn conditional_mean(&self, i: usize) -> f64 {
        let c = self.params.derive();
        let s = self.ones[i] as f64;
        (self.n - 1) as f64 * (s * c.ln_gamma1 + (self.l as f64 - s) * c.ln_gamma0).exp()
    }

    /// `draw,degree,ones` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "draw,degree,ones")?;
        for (i, (d, s)) in self.degrees.iter().zip(&self.ones).enumerate() {
            writeln!(w, "{i},{d},{s}")?;
        }
        Ok(())
    }
}

/// Draw `S ~ Bin(l, mu1)`, then `D ~ Bin(n - 1, gamma1^S gamma0^(l - S))`.
/// Draw `i` uses its own stream, so any prefix of a larger run is identical.
pub fn sample_degrees_direct(params: &ModelParams, n: u64, l: u32, count: usize, seed: u64) -> Result<DegreeSampleSet> {
    validate_shape(n, l as u64)?;
    if count == 0 {
        return Err(MagError::range("count must be at least 1"));
    }
    let c = params.derive();
    let mu1 = params.mu1();
    let pairs: Vec<(u64, u32)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, StreamTag::CompoundDraw, i);
            let s = sample_binomial(&mut rng, l as u64, mu1) as u32;
            let p = (s as f64 * c.ln_gamma1 + (l - s) as f64 * c.ln_gamma0).exp();
            (sample_binomial(&mut rng, n - 1, p), s)
        })
        .collect();
    let (degrees, ones) = pairs.into_iter().unzip();
    Ok(DegreeSampleSet { params: *params, n, l, seed, method: SampleMethod::DirectCompound, degrees, ones })
}

/// Node-0 degree of `count` independently sampled full graphs.
pub fn sample_degrees_full(params: &ModelParams, n: u64, l: u32, count: usize, seed: u64) -> Result<DegreeSampleSet> {
    validate_shape(n, l as u64)?;
    if count == 0 {
        return Err(MagError::range("count must be at least 1"));
    }
    let pairs = n as u128 * (n as u128 - 1) / 2;
    if pairs * count as u128 > DEFAULT_PAIR_BUDGET * 10 {
        return Err(MagError::BudgetExceeded { pairs: pairs * count as u128, budget: DEFAULT_PAIR_BUDGET * 10 });
    }
    let draws: Result<Vec<(u64, u32)>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let g = sample_graph(params, n, l as u64, child_seed(seed, StreamTag::Replicate, i))?;
            Ok((g.edges.iter().take_while(|e| e.0 == 0).count() as u64, g.ones(0)))
        })
        .collect();
    let (degrees, ones) = draws?.into_iter().unzip();
    Ok(DegreeSampleSet { params: *params, n, l, seed, method: SampleMethod::FullGraph, degrees, ones })
}

/// Run `f` on a dedicated pool of `threads` workers (`0` = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::HashSet;

    fn naive_link(a: &BitRow, b: &BitRow, p: &ModelParams) -> f64 {
        (0..a.len()).map(|i| p.q(a.get(i), b.get(i))).product()
    }

    fn random_row(rng: &mut impl Rng, len: usize) -> BitRow {
        let bits: Vec<bool> = (0..len).map(|_| rng.random::<bool>()).collect();
        BitRow::from_bits(&bits)
    }

    #[test]
    fn link_probability_read_off() {
        let p = ModelParams::reference();
        let one = BitRow::from_bits(&[true]);
        assert!((link_probability(&one, &one, &p).unwrap() - 0.7).abs() < 1e-15);
        let a = BitRow::from_bits(&[true, true, false]);
        let b = BitRow::from_bits(&[true, false, false]);
        let want = 0.7 * 0.2 * 0.5;
        assert!((link_probability(&a, &b, &p).unwrap() - want).abs() < 1e-15);
        let c = BitRow::from_bits(&[true, true]);
        assert_eq!(link_probability(&a, &c, &p), Err(MagError::LengthMismatch { left: 3, right: 2 }));
    }

    #[test]
    fn popcount_path_matches_naive_product() {
        let p = ModelParams::new(0.83, 0.41, 0.67, 0.3).unwrap();
        let mut rng = stream(3, StreamTag::SelfTest, 0);
        for i in 0..10_000 {
            let len = [1, 3, 63, 64, 65, 130][i % 6];
            let a = random_row(&mut rng, len);
            let b = random_row(&mut rng, len);
            let fast = link_probability(&a, &b, &p).unwrap();
            let slow = naive_link(&a, &b, &p);
            assert!((fast / slow - 1.0).abs() < 1e-14, "len={len}");
            assert_eq!(fast, link_probability(&b, &a, &p).unwrap());
        }
    }

    #[test]
    fn bitrow_rejects_tail_bits() {
        assert!(BitRow::from_words(vec![0b1000], 3).is_err());
        assert!(BitRow::from_words(vec![0b100], 3).is_ok());
        assert!(BitRow::from_words(vec![0, 0], 64).is_err());
    }

    #[test]
    fn graph_is_simple_and_sorted() {
        let p = ModelParams::reference();
        for seed in 0..20 {
            let g = sample_graph(&p, 40, 5, seed).unwrap();
            let mut seen = HashSet::new();
            for &(u, v) in g.edges() {
                assert!(u < v);
                assert!((v as usize) < g.n());
                assert!(seen.insert((u, v)));
            }
            assert!(g.edges().windows(2).all(|w| w[0] < w[1]));
            let deg = g.degrees();
            assert_eq!(deg.iter().sum::<u64>(), 2 * g.edges().len() as u64);
            assert_eq!(deg[7], g.degree(7));
        }
    }

    #[test]
    fn graph_deterministic_across_thread_counts() {
        let p = ModelParams::reference();
        let a = with_threads(1, || sample_graph(&p, 200, 70, 99).unwrap());
        let b = with_threads(4, || sample_graph(&p, 200, 70, 99).unwrap());
        assert_eq!(a, b);
        let c = sample_graph(&p, 200, 70, 100).unwrap();
        assert_ne!(a, c);
        let d1 = with_threads(1, || sample_degrees_direct(&p, 1000, 7, 5000, 4).unwrap());
        let d3 = with_threads(3, || sample_degrees_direct(&p, 1000, 7, 5000, 4).unwrap());
        assert_eq!(d1, d3);
    }

    #[test]
    fn flat_matrix_is_erdos_renyi() {
        let q = 0.6f64;
        let l = 3u64;
        let p = ModelParams::new(q, q, q, 0.35).unwrap();
        // 450 nodes give ~1e5 pairs
        let g = sample_graph(&p, 450, l, 5).unwrap();
        let pairs = 450.0 * 449.0 / 2.0;
        let dens = g.edges().len() as f64 / pairs;
        let target = q.powi(l as i32);
        let se = (target * (1.0 - target) / pairs).sqrt();
        assert!((dens - target).abs() < 3.0 * se, "{dens} vs {target}");
    }

    #[test]
    fn near_all_ones_rows_link_at_q11_power() {
        let p = ModelParams::new(0.7, 0.2, 0.5, 0.999_999).unwrap();
        let g = sample_graph(&p, 300, 4, 8).unwrap();
        let pairs = 300.0 * 299.0 / 2.0;
        let target = 0.7f64.powi(4);
        let dens = g.edges().len() as f64 / pairs;
        assert!((dens - target).abs() < 4.0 * (target * (1.0 - target) / pairs).sqrt());
    }

    #[test]
    fn budget_guard() {
        let p = ModelParams::reference();
        let err = sample_graph_with_budget(&p, 1000, 3, 0, 1000).unwrap_err();
        assert!(matches!(err, MagError::BudgetExceeded { pairs: 499_500, budget: 1000 }));
        assert!(sample_graph(&p, 1, 3, 0).is_err());
        assert!(sample_graph(&p, 10, 0, 0).is_err());
    }

    #[test]
    fn edge_list_and_attribute_formats() {
        let p = ModelParams::reference();
        let g = sample_graph(&p, 12, 3, 1).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf, &["seed=1".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# seed=1"));
        let parsed: Vec<(u32, u32)> = lines
            .map(|l| {
                let (a, b) = l.split_once('\t').unwrap();
                (a.parse().unwrap(), b.parse().unwrap())
            })
            .collect();
        assert_eq!(parsed, g.edges());

        let mut buf = Vec::new();
        g.write_attributes(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 12);
        for (u, line) in text.lines().enumerate() {
            assert_eq!(line.len(), 3);
            assert_eq!(line.chars().filter(|&c| c == '1').count() as u32, g.ones(u));
        }
    }

    #[test]
    fn full_graph_degree_set_matches_graph() {
        let p = ModelParams::reference();
        let set = sample_degrees_full(&p, 25, 3, 10, 77).unwrap();
        for i in 0..10 {
            let g = sample_graph(&p, 25, 3, child_seed(77, StreamTag::Replicate, i as u64)).unwrap();
            assert_eq!(set.degrees[i], g.degree(0));
            assert_eq!(set.ones[i], g.ones(0));
        }
    }

    #[test]
    fn direct_degrees_in_range_and_prefix_stable() {
        let p = ModelParams::reference();
        let a = sample_degrees_direct(&p, 30, 3, 2000, 1).unwrap();
        assert!(a.degrees.iter().all(|&d| d <= 29));
        assert!(a.ones.iter().all(|&s| s <= 3));
        let b = sample_degrees_direct(&p, 30, 3, 500, 1).unwrap();
        assert_eq!(&a.degrees[..500], &b.degrees[..]);
        assert!(sample_degrees_direct(&p, 30, 3, 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn link_probability_symmetric(
            a in proptest::collection::vec(any::<bool>(), 1..200),
            seed in any::<u64>(),
        ) {
            let mut rng = stream(seed, StreamTag::SelfTest, 0);
            let b: Vec<bool> = (0..a.len()).map(|_| rng.random()).collect();
            let (ra, rb) = (BitRow::from_bits(&a), BitRow::from_bits(&b));
            let p = ModelParams::reference();
            let x = link_probability(&ra, &rb, &p).unwrap();
            prop_assert_eq!(x, link_probability(&rb, &ra, &p).unwrap());
            prop_assert!(x > 0.0 && x < 1.0);
        }
    }
}
