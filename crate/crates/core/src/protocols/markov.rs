//! Layer-transition weights, the sequence ranking built on them, and the
//! pattern banks derived from a ranking.

use itertools::Itertools;
use rand::Rng;

use super::{layer_name, BankKind, Pattern, PatternBank};
use crate::error::{Error, Result, Violation};
use crate::model::Layer;
use crate::seed::stream_rng;

/// Square matrix of connection weights, rows presynaptic, columns
/// postsynaptic. Rows need not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    pr: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::domain("transition matrix is empty"));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain("transition matrix must be square"));
        }
        let pr: Vec<f64> = rows.into_iter().flatten().collect();
        if pr.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::domain("transition weights must lie in [0, 1]"));
        }
        Ok(TransitionMatrix { n, pr })
    }

    /// Inter-layer connection weights of the four-layer cortical column,
    /// ordered L2/3, L4, L5, L6.
    pub fn cortical_column() -> Self {
        TransitionMatrix::new(vec![
            vec![0.0, 0.2, 0.27, 0.055],
            vec![0.25, 0.0, 0.325, 0.095],
            vec![0.175, 0.15, 0.0, 0.325],
            vec![0.055, 0.2, 0.225, 0.0],
        ])
        .expect("built-in matrix is valid")
    }

    /// Comma-separated rows, blank lines and `#` comments ignored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Format(format!("bad matrix entry '{}'", x.trim())))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        TransitionMatrix::new(rows)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.pr[from * self.n + to]
    }

    pub fn total(&self) -> f64 {
        self.pr.iter().sum()
    }

    /// Every entry multiplied by `k`, clamped to [0, 1].
    pub fn scaled(&self, k: f64) -> Self {
        TransitionMatrix {
            n: self.n,
            pr: self.pr.iter().map(|x| (x * k).clamp(0.0, 1.0)).collect(),
        }
    }
}

/// Share of total connection mass each layer takes part in.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDistribution {
    /// Mass of connections leaving the layer.
    pub post: Vec<f64>,
    /// Mass of connections arriving at the layer.
    pub pre: Vec<f64>,
    /// Mean of the two roles.
    pub combined: Vec<f64>,
}

pub fn connection_distribution(m: &TransitionMatrix) -> Result<LayerDistribution> {
    let total = m.total();
    if total <= 0.0 {
        return Err(Error::domain("transition matrix has no mass"));
    }
    let n = m.size();
    let post: Vec<f64> = (0..n)
        .map(|y| (0..n).map(|k| m.get(y, k)).sum::<f64>() / total)
        .collect();
    let pre: Vec<f64> = (0..n)
        .map(|y| (0..n).map(|k| m.get(k, y)).sum::<f64>() / total)
        .collect();
    let combined = post.iter().zip(&pre).map(|(a, b)| (a + b) / 2.0).collect();
    Ok(LayerDistribution { post, pre, combined })
}

/// A visiting order over all layers with its path weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSequence {
    pub order: Vec<usize>,
    pub chain_score: f64,
}

impl LayerSequence {
    pub fn layers(&self) -> Vec<Layer> {
        self.order.iter().filter_map(|&i| Layer::from_index(i)).collect()
    }

    /// `L5->L6->L4->L2/3`.
    pub fn label(&self) -> String {
        self.order.iter().map(|&i| layer_name(i)).join("->")
    }
}

/// Product of consecutive transition weights along `order`.
pub fn chain_score(m: &TransitionMatrix, order: &[usize]) -> f64 {
    order.windows(2).map(|w| m.get(w[0], w[1])).product()
}

/// All orderings of the layers, best path weight first. Equal weights keep
/// lexicographic layer order.
pub fn rank_layer_sequences(m: &TransitionMatrix) -> Vec<LayerSequence> {
    let mut seqs: Vec<LayerSequence> = (0..m.size())
        .permutations(m.size())
        .map(|order| {
            let chain_score = chain_score(m, &order);
            LayerSequence { order, chain_score }
        })
        .collect();
    seqs.sort_by(|a, b| {
        b.chain_score
            .total_cmp(&a.chain_score)
            .then_with(|| a.order.cmp(&b.order))
    });
    seqs
}

/// `rank,sequence,chain_score`, ranks starting at 1.
pub fn rank_table_csv(ranked: &[LayerSequence]) -> String {
    let mut out = String::from("rank,sequence,chain_score\n");
    for (i, s) in ranked.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, s.label(), s.chain_score));
    }
    out
}

/// Map the top `n_freq` sequences to frequencies. A device in the layer at
/// position `p` of sequence `k` discharges `p` slots after frequency `k`.
pub fn build_markov_bank(
    ranked: &[LayerSequence],
    n_freq: usize,
    layer_map: &[Layer],
    window: usize,
) -> Result<PatternBank> {
    let layers = ranked.first().map_or(0, |s| s.order.len());
    let mut v = Vec::new();
    if n_freq == 0 {
        v.push(Violation::config("sim.frequency_count", "must be >= 1"));
    }
    if n_freq > ranked.len() {
        v.push(Violation::config(
            "sim.frequency_count",
            format!(
                "{n_freq} frequencies requested but only {} layer sequences exist",
                ranked.len()
            ),
        ));
    }
    if window < layers {
        v.push(Violation::config(
            "sim.window_width",
            format!("Markov patterns need a window of at least {layers} slots"),
        ));
    }
    if layer_map.iter().any(|l| l.index() >= layers) {
        v.push(Violation::config(
            "sim.device_layers",
            "device assigned to a layer outside the transition matrix",
        ));
    }
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    let top = &ranked[..n_freq];
    let patterns = top
        .iter()
        .map(|seq| {
            let mut pos = vec![0; layers];
            for (p, &l) in seq.order.iter().enumerate() {
                pos[l] = p;
            }
            Pattern::new(layer_map.iter().map(|l| pos[l.index()]).collect(), window)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatternBank::new(BankKind::Markov, window, patterns)?
        .with_layer_orders(top.iter().map(|s| s.order.clone()).collect()))
}

/// Independent uniform delays in `[0, window)` for every (pattern, device).
pub fn random_pattern_bank(n_freq: usize, window: usize, devices: usize, seed: u64) -> Result<PatternBank> {
    if window == 0 {
        return Err(Error::InvalidConfig(vec![Violation::config(
            "sim.window_width",
            "must be >= 1",
        )]));
    }
    let mut rng = stream_rng(seed, 0);
    let patterns = (0..n_freq)
        .map(|_| Pattern::new((0..devices).map(|_| rng.random_range(0..window)).collect(), window))
        .collect::<Result<Vec<_>>>()?;
    PatternBank::new(BankKind::Random, window, patterns)
}
