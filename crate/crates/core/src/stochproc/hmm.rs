use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConditionalTable, TableRow};
use crate::error::{invalid, QseqError, Result};
use crate::{index_to_bits, rng};

/// Transition `from --symbol|prob--> to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub symbol: u8,
    pub to: usize,
    pub prob: f64,
}

/// Edge-labelled hidden Markov model over the binary alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenMarkovModel {
    num_states: usize,
    edges: Vec<Edge>,
}

impl HiddenMarkovModel {
    pub fn new(num_states: usize, edges: Vec<Edge>) -> Result<Self> {
        if num_states == 0 {
            return invalid("an HMM needs at least one state");
        }
        let mut out_mass = vec![0.0; num_states];
        for e in &edges {
            if e.from >= num_states || e.to >= num_states {
                return invalid(format!("edge {e:?} references a missing state"));
            }
            if e.symbol > 1 {
                return invalid(format!("edge {e:?} emits a non-binary symbol"));
            }
            if !(e.prob > 0.0 && e.prob <= 1.0) {
                return invalid(format!("edge {e:?} has probability outside (0, 1]"));
            }
            out_mass[e.from] += e.prob;
        }
        for (s, mass) in out_mass.iter().enumerate() {
            if (mass - 1.0).abs() > 1e-12 {
                return invalid(format!("outgoing probabilities of state {s} sum to {mass}"));
            }
        }
        Ok(Self { num_states, edges })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `T_x[(i, j)] = P(emit x, go to j | i)` for `x = 0, 1`.
    pub fn symbol_matrices(&self) -> [DMatrix<f64>; 2] {
        let mut t = [DMatrix::zeros(self.num_states, self.num_states), DMatrix::zeros(self.num_states, self.num_states)];
        for e in &self.edges {
            t[e.symbol as usize][(e.from, e.to)] += e.prob;
        }
        t
    }

    /// State-transition matrix with symbols marginalized.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let [t0, t1] = self.symbol_matrices();
        t0 + t1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(text)?;
        Self::new(raw.num_states, raw.edges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Renewal process whose gaps between ticks are uniform on `{0, …, N−1}`.
///
/// State `S_j` counts the zeros since the last tick; it ticks with
/// probability `1/(N−j)` and returns to `S_0`, otherwise it emits `0` and
/// moves to `S_{j+1}`.
pub fn uniform_renewal(order: usize) -> Result<HiddenMarkovModel> {
    if order == 0 {
        return invalid("renewal order must be at least 1");
    }
    let mut edges = Vec::with_capacity(2 * order);
    for j in 0..order {
        let tick = 1.0 / (order - j) as f64;
        edges.push(Edge { from: j, symbol: 1, to: 0, prob: tick });
        if j + 1 < order {
            edges.push(Edge { from: j, symbol: 0, to: j + 1, prob: 1.0 - tick });
        }
    }
    HiddenMarkovModel::new(order, edges)
}

/// Stationary state distribution `π = πT`.
pub fn stationary_distribution(hmm: &HiddenMarkovModel) -> Result<Vec<f64>> {
    let n = hmm.num_states();
    let t = hmm.transition_matrix();
    let mut a = t.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut pi = lu.solve(&b).ok_or_else(|| {
        QseqError::Numerical(format!("stationary system is singular: the {n}-state chain is reducible"))
    })?;
    // one round of iterative refinement
    if let Some(correction) = lu.solve(&(&b - &a * &pi)) {
        pi += correction;
    }
    let residual = (pi.transpose() * &t - pi.transpose()).abs().sum();
    let min = pi.min();
    if !residual.is_finite() || residual > 1e-12 || min < -1e-12 {
        return Err(QseqError::Numerical(format!(
            "stationary solve did not converge (‖π − πT‖₁ = {residual:.3e}, min π = {min:.3e})"
        )));
    }
    Ok(pi.iter().map(|p| p.max(0.0)).collect())
}

/// Sequence of binary symbols emitted by a process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    symbols: Vec<u8>,
}

impl Trajectory {
    pub fn new(symbols: Vec<u8>) -> Result<Self> {
        if symbols.is_empty() {
            return invalid("a trajectory must be non-empty");
        }
        if symbols.iter().any(|&s| s > 1) {
            return invalid("trajectory symbols must be 0 or 1");
        }
        Ok(Self { symbols })
    }

    /// Parses a line of `'0'`/`'1'` characters; surrounding whitespace is ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let symbols = text
            .trim()
            .bytes()
            .map(|b| match b {
                b'0' => Ok(0),
                b'1' => Ok(1),
                other => invalid(format!("unexpected character {:?} in trajectory", other as char)),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(symbols)
    }

    pub fn to_text(&self) -> String {
        self.symbols.iter().map(|&s| if s == 1 { '1' } else { '0' }).collect()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn draw<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let mut u: f64 = rng.gen();
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if u < w {
            return i;
        }
        u -= w;
        last = i;
    }
    last
}

/// Samples `length` symbols with the initial state drawn from `init`.
pub fn sample_trajectory_with<R: Rng + ?Sized>(
    hmm: &HiddenMarkovModel,
    length: usize,
    init: &[f64],
    rng: &mut R,
) -> Result<Trajectory> {
    if length == 0 {
        return invalid("trajectory length must be at least 1");
    }
    if init.len() != hmm.num_states() {
        return invalid(format!("initial distribution has {} entries for {} states", init.len(), hmm.num_states()));
    }
    let mut outgoing: Vec<Vec<Edge>> = vec![Vec::new(); hmm.num_states()];
    for e in hmm.edges() {
        outgoing[e.from].push(*e);
    }
    let mut state = draw(init.iter().copied(), rng);
    let mut symbols = Vec::with_capacity(length);
    for _ in 0..length {
        let edges = &outgoing[state];
        let e = edges[draw(edges.iter().map(|e| e.prob), rng)];
        symbols.push(e.symbol);
        state = e.to;
    }
    Trajectory::new(symbols)
}

/// Samples a stationary trajectory, deterministic in `seed`.
pub fn sample_trajectory(hmm: &HiddenMarkovModel, length: usize, seed: u64) -> Result<Trajectory> {
    let pi = stationary_distribution(hmm)?;
    sample_trajectory_with(hmm, length, &pi, &mut rng::seeded(seed))
}

/// Exact conditional table under the stationary process, by forward
/// filtering: the unnormalized belief after a past `x_1…x_M` is
/// `π T_{x_1} … T_{x_M}`; its mass is the weight of the past. Pasts of zero
/// probability are omitted.
pub fn true_conditional(hmm: &HiddenMarkovModel, past_len: usize, future_len: usize) -> Result<ConditionalTable> {
    if future_len == 0 {
        return invalid("future length must be at least one");
    }
    if past_len + future_len > 30 {
        return invalid("horizon too long for exhaustive enumeration");
    }
    let pi = DVector::from_vec(stationary_distribution(hmm)?).transpose();
    let t = hmm.symbol_matrices();
    let expand = |level: Vec<nalgebra::RowDVector<f64>>| -> Vec<nalgebra::RowDVector<f64>> {
        level.iter().flat_map(|a| [a * &t[0], a * &t[1]]).collect()
    };
    let mut pasts = vec![pi];
    for _ in 0..past_len {
        pasts = expand(pasts);
    }
    let mut rows = BTreeMap::new();
    for (p, belief) in pasts.into_iter().enumerate() {
        let weight = belief.sum();
        if weight <= 0.0 {
            continue;
        }
        let mut futures = vec![belief];
        for _ in 0..future_len {
            futures = expand(futures);
        }
        let dist = futures.iter().map(|a| a.sum() / weight).collect();
        rows.insert(index_to_bits(p, past_len), TableRow { weight, dist, degenerate: false });
    }
    Ok(ConditionalTable::from_rows(past_len, future_len, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renewal_structure() {
        let h = uniform_renewal(1).unwrap();
        assert_eq!(h.edges(), &[Edge { from: 0, symbol: 1, to: 0, prob: 1.0 }]);
        let h = uniform_renewal(3).unwrap();
        let ticks: Vec<f64> = (0..3)
            .map(|j| h.edges().iter().find(|e| e.from == j && e.symbol == 1).unwrap().prob)
            .collect();
        assert_eq!(ticks, vec![1.0 / 3.0, 0.5, 1.0]);
        for n in 1..10 {
            let h = uniform_renewal(n).unwrap();
            let last: Vec<&Edge> = h.edges().iter().filter(|e| e.from == n - 1).collect();
            assert_eq!(last.len(), 1);
            assert_eq!((last[0].symbol, last[0].prob), (1, 1.0));
        }
        assert!(uniform_renewal(0).is_err());
    }

    #[test]
    fn renewal_ticks_match_gap_hazard() {
        // hazard of a uniform gap on {0..N-1}: P(gap = j | gap >= j) = 1/(N-j)
        for n in 1..8usize {
            let h = uniform_renewal(n).unwrap();
            for j in 0..n {
                let p_eq = 1.0 / n as f64;
                let p_ge = (n - j) as f64 / n as f64;
                let tick = h.edges().iter().find(|e| e.from == j && e.symbol == 1).unwrap().prob;
                assert!((tick - p_eq / p_ge).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stationary_renewal() {
        assert_eq!(stationary_distribution(&uniform_renewal(1).unwrap()).unwrap(), vec![1.0]);
        let pi = stationary_distribution(&uniform_renewal(3).unwrap()).unwrap();
        for (a, b) in pi.iter().zip([0.5, 1.0 / 3.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        for n in 1..10usize {
            let pi = stationary_distribution(&uniform_renewal(n).unwrap()).unwrap();
            let tick: f64 = pi.iter().enumerate().map(|(j, p)| p / (n - j) as f64).sum();
            assert!((tick - 2.0 / (n as f64 + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn reducible_chain_is_reported() {
        let edges = vec![Edge { from: 0, symbol: 0, to: 0, prob: 1.0 }, Edge { from: 1, symbol: 1, to: 1, prob: 1.0 }];
        let h = HiddenMarkovModel::new(2, edges).unwrap();
        assert!(matches!(stationary_distribution(&h), Err(QseqError::Numerical(_))));
    }

    #[test]
    fn invalid_hmms() {
        let e = |from, symbol, to, prob| Edge { from, symbol, to, prob };
        assert!(HiddenMarkovModel::new(1, vec![e(0, 0, 0, 0.5)]).is_err());
        assert!(HiddenMarkovModel::new(1, vec![e(0, 2, 0, 1.0)]).is_err());
        assert!(HiddenMarkovModel::new(1, vec![e(0, 0, 1, 1.0)]).is_err());
        assert!(HiddenMarkovModel::new(1, vec![e(0, 0, 0, 1.0), e(0, 1, 0, 0.0)]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let h = uniform_renewal(1).unwrap();
        assert_eq!(sample_trajectory(&h, 5, 3).unwrap().to_text(), "11111");
        let h = uniform_renewal(4).unwrap();
        assert_eq!(sample_trajectory(&h, 1000, 9).unwrap(), sample_trajectory(&h, 1000, 9).unwrap());
        assert_ne!(sample_trajectory(&h, 1000, 9).unwrap(), sample_trajectory(&h, 1000, 10).unwrap());
    }

    #[test]
    fn filtering_by_hand() {
        let t = true_conditional(&uniform_renewal(3).unwrap(), 1, 1).unwrap();
        assert!((t.get("1").unwrap().dist[1] - 1.0 / 3.0).abs() < 1e-14);
        let t = true_conditional(&uniform_renewal(3).unwrap(), 2, 1).unwrap();
        assert!((t.get("10").unwrap().dist[1] - 0.5).abs() < 1e-14);
        let t = true_conditional(&uniform_renewal(3).unwrap(), 0, 2).unwrap();
        assert_eq!(t.len(), 1);
        let row = t.get("").unwrap();
        assert!((row.weight - 1.0).abs() < 1e-14);
        assert!((row.dist.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn impossible_pasts_are_omitted() {
        // N=2: two consecutive zeros never happen
        let t = true_conditional(&uniform_renewal(2).unwrap(), 2, 1).unwrap();
        assert!(t.get("00").is_none());
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn hmm_json_round_trip() {
        let h = uniform_renewal(4).unwrap();
        let back = HiddenMarkovModel::from_json(&h.to_json().unwrap()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn trajectory_text() {
        assert_eq!(Trajectory::from_text("0110\n").unwrap().symbols(), &[0, 1, 1, 0]);
        assert!(Trajectory::from_text("").is_err());
        assert!(Trajectory::from_text("01a").is_err());
    }
}
