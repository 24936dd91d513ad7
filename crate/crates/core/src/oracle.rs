//! Sequential, cost-counted evaluation of a single Brownian path.
//!
//! Point values are refined with exact Brownian-bridge laws. Besides point
//! values the oracle can hand out, for a span between adjacent knots,
//! `∫ (W − chord) dt`, the time integral of the bridge part of the path.
//! Those integrals are jointly consistent with every later refinement: when
//! a new knot splits a span whose integral is known, the new point and the
//! two sub-span integrals are drawn conditionally on it.
//!
//! Only [`PathState::evaluate`] is charged. Integrals are a device for
//! reference and auxiliary schemes and never count towards `ν`.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{argument, Result};
use crate::rng::{StreamKey, StreamPurpose};

/// Anything schemes can read Brownian values from.
pub trait BrownianSource {
    fn value(&mut self, t: f64) -> Result<f64>;
}

/// Conditional law actually used for a refinement draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeDraw {
    pub span: (f64, f64),
    pub time: f64,
    pub mean: f64,
    pub variance: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct PathState {
    key: StreamKey,
    // keyed by `f64::to_bits`, which is order preserving for t >= 0
    knots: BTreeMap<u64, f64>,
    integrals: HashMap<u64, f64>,
    cost: usize,
    rng: ChaCha8Rng,
    aux: ChaCha8Rng,
    last_draw: Option<BridgeDraw>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        argument(format!("evaluation time must be finite and nonnegative, got {t}"))
    }
}

impl PathState {
    pub fn new(key: StreamKey) -> Self {
        let mut knots = BTreeMap::new();
        knots.insert(0f64.to_bits(), 0.0);
        Self {
            key,
            knots,
            integrals: HashMap::new(),
            cost: 0,
            rng: key.rng(StreamPurpose::Path),
            aux: key.rng(StreamPurpose::Auxiliary),
            last_draw: None,
        }
    }

    pub fn from_seed(seed: u64, replication: u64) -> Self {
        Self::new(StreamKey::new(seed, replication))
    }

    /// Rebuild a path from recorded knots, e.g. a dump read with
    /// [`read_dump`]. Further refinements continue on the key's streams.
    pub fn from_knots(key: StreamKey, knots: &[(f64, f64)]) -> Result<Self> {
        let mut state = Self::new(key);
        for &(t, w) in knots {
            check_time(t)?;
            if t == 0.0 && w != 0.0 {
                return argument("a path must vanish at time 0");
            }
            state.knots.insert(t.to_bits(), w);
        }
        Ok(state)
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Number of `evaluate` calls so far.
    pub fn cost(&self) -> usize {
        self.cost
    }

    /// Law of the most recent fresh draw, if the last `evaluate` made one.
    pub fn last_draw(&self) -> Option<BridgeDraw> {
        self.last_draw
    }

    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.knots.iter().map(|(&b, &w)| (f64::from_bits(b), w))
    }

    /// Stored value at an existing knot; never draws and is not charged.
    pub fn peek(&self, t: f64) -> Option<f64> {
        self.knots.get(&t.to_bits()).copied()
    }

    /// `W(t)`, refining the path if needed. Every call costs one evaluation.
    pub fn evaluate(&mut self, t: f64) -> Result<f64> {
        check_time(t)?;
        let t = t + 0.0; // fold -0.0 onto the key of 0.0
        self.cost += 1;
        self.last_draw = None;
        let bits = t.to_bits();
        if let Some(&w) = self.knots.get(&bits) {
            return Ok(w);
        }
        let (&lb, &wl) = self.knots.range(..bits).next_back().expect("0 is a knot");
        let tl = f64::from_bits(lb);
        let right = self.knots.range(bits..).next().map(|(&b, &w)| (b, w));
        let draw = match right {
            None => {
                let var = t - tl;
                let value = wl + var.sqrt() * normal(&mut self.rng);
                BridgeDraw {
                    span: (tl, f64::INFINITY),
                    time: t,
                    mean: wl,
                    variance: var,
                    value,
                }
            }
            Some((rb, wr)) => {
                let tr = f64::from_bits(rb);
                let h = tr - tl;
                let u = t - tl;
                let chord = wl + u / h * (wr - wl);
                match self.integrals.remove(&lb) {
                    None => {
                        let var = u * (tr - t) / h;
                        let value = chord + var.sqrt() * normal(&mut self.rng);
                        BridgeDraw {
                            span: (tl, tr),
                            time: t,
                            mean: chord,
                            variance: var,
                            value,
                        }
                    }
                    Some(j) => {
                        let v = tr - t;
                        let h3 = h * h * h;
                        let mean = chord + 6.0 * u * v / h3 * j;
                        let var = (u * v / h - 3.0 * u * u * v * v / h3).max(0.0);
                        let y = mean - chord + var.sqrt() * normal(&mut self.rng);
                        let s = j - h * y / 2.0;
                        let vl = u * u * u / 12.0;
                        let vr = v * v * v / 12.0;
                        let jl = s * vl / (vl + vr)
                            + (vl * vr / (vl + vr)).sqrt() * normal(&mut self.aux);
                        self.integrals.insert(lb, jl);
                        self.integrals.insert(bits, s - jl);
                        BridgeDraw {
                            span: (tl, tr),
                            time: t,
                            mean,
                            variance: var,
                            value: chord + y,
                        }
                    }
                }
            }
        };
        self.knots.insert(bits, draw.value);
        self.last_draw = Some(draw);
        Ok(draw.value)
    }

    /// Realization of `∫_{s1}^{s2} (W(t) − chord(t)) dt` for adjacent knots
    /// `s1 < s2`. Cached; not charged.
    pub fn span_time_integral(&mut self, s1: f64, s2: f64) -> Result<f64> {
        let (b1, b2) = (s1.to_bits(), s2.to_bits());
        if !(s1 < s2) || !self.knots.contains_key(&b1) || !self.knots.contains_key(&b2) {
            return argument(format!("({s1}, {s2}) is not a pair of knots"));
        }
        if self.knots.range(b1..b2).nth(1).is_some() {
            return argument(format!("knots {s1} and {s2} are not adjacent"));
        }
        if let Some(&j) = self.integrals.get(&b1) {
            return Ok(j);
        }
        let h = s2 - s1;
        let j = (h * h * h / 12.0).sqrt() * normal(&mut self.aux);
        self.integrals.insert(b1, j);
        Ok(j)
    }

    /// `∫_{s1}^{s2} (W(t) − W(s1)) dt` for adjacent knots.
    pub fn increment_integral(&mut self, s1: f64, s2: f64) -> Result<f64> {
        let j = self.span_time_integral(s1, s2)?;
        let w1 = self.knots[&s1.to_bits()];
        let w2 = self.knots[&s2.to_bits()];
        Ok(j + (s2 - s1) * (w2 - w1) / 2.0)
    }

    /// `∫_{s1}^{s2} (W(t) − W(s1)) dt` for any knots `s1 < s2`, summed over
    /// the knots in between.
    pub fn area(&mut self, s1: f64, s2: f64) -> Result<f64> {
        let (b1, b2) = (s1.to_bits(), s2.to_bits());
        if !(s1 < s2) || !self.knots.contains_key(&b1) || !self.knots.contains_key(&b2) {
            return argument(format!("({s1}, {s2}) is not a pair of knots"));
        }
        let inner: Vec<(f64, f64)> = self.knots.range(b1..=b2).map(|(&b, &w)| (f64::from_bits(b), w)).collect();
        let w0 = inner[0].1;
        let mut total = 0.0;
        for pair in inner.windows(2) {
            let ((u, wu), (v, _)) = (pair[0], pair[1]);
            total += self.increment_integral(u, v)? + (v - u) * (wu - w0);
        }
        Ok(total)
    }

    /// Copy with the same knots, no cached integrals and a fresh auxiliary
    /// stream: used to resample bridge integrals with the point values held
    /// fixed.
    pub fn fork_aux(&self, fork: u64) -> Self {
        let mut copy = self.clone();
        copy.integrals.clear();
        copy.aux = self.key.fork_rng(fork);
        copy
    }

    /// Write all knots as little-endian `(t, W(t))` pairs of `f64`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (t, w) in self.knots() {
            out.write_all(&t.to_le_bytes())?;
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }
}

impl BrownianSource for PathState {
    fn value(&mut self, t: f64) -> Result<f64> {
        self.evaluate(t)
    }
}

/// Read a dump written by [`PathState::write_dump`].
pub fn read_dump<R: Read>(mut input: R) -> io::Result<Vec<(f64, f64)>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 16 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "path dump length is not a multiple of 16 bytes",
        ));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let t = f64::from_le_bytes(c[..8].try_into().unwrap());
            let w = f64::from_le_bytes(c[8..].try_into().unwrap());
            (t, w)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, mean_se};

    #[test]
    fn starts_at_zero_and_counts() {
        let mut p = PathState::from_seed(1, 0);
        assert_eq!(p.cost(), 0);
        assert_eq!(p.evaluate(0.0).unwrap(), 0.0);
        assert_eq!(p.evaluate(-0.0).unwrap(), 0.0);
        let a = p.evaluate(0.5).unwrap();
        assert_eq!(p.evaluate(0.5).unwrap().to_bits(), a.to_bits());
        p.evaluate(0.25).unwrap();
        assert_eq!(p.cost(), 5);
        assert_eq!(p.knot_count(), 3);
        assert!(p.evaluate(-1.0).is_err());
        assert!(p.evaluate(f64::NAN).is_err());
        assert_eq!(p.cost(), 5);
    }

    #[test]
    fn bridge_law_is_reported() {
        let mut p = PathState::from_knots(StreamKey::new(3, 0), &[(1.0, 2.0)]).unwrap();
        p.evaluate(0.25).unwrap();
        let d = p.last_draw().unwrap();
        assert_eq!(d.mean, 0.5);
        assert!((d.variance - 0.25 * 0.75).abs() < 1e-15);
        p.evaluate(3.0).unwrap();
        let d = p.last_draw().unwrap();
        assert_eq!((d.mean, d.variance), (2.0, 2.0));
    }

    #[test]
    fn integrals_are_cached_free_and_validated() {
        let mut p = PathState::from_seed(2, 0);
        p.evaluate(0.5).unwrap();
        p.evaluate(1.0).unwrap();
        let j = p.span_time_integral(0.5, 1.0).unwrap();
        assert_eq!(p.span_time_integral(0.5, 1.0).unwrap(), j);
        assert_eq!(p.cost(), 2);
        assert!(p.span_time_integral(0.0, 1.0).is_err());
        assert!(p.span_time_integral(0.5, 0.7).is_err());
        assert!(p.span_time_integral(1.0, 0.5).is_err());
    }

    #[test]
    fn deterministic_per_key_and_query_order() {
        let run = |rep| {
            let mut p = PathState::from_seed(11, rep);
            let mut out = Vec::new();
            for t in [1.0, 0.5, 0.125, 2.0, 0.7] {
                out.push(p.evaluate(t).unwrap().to_bits());
            }
            p.span_time_integral(0.5, 0.7).unwrap();
            out.push(p.evaluate(0.6).unwrap().to_bits());
            out
        };
        assert_eq!(run(0), run(0));
        assert_ne!(run(0), run(1));
    }

    #[test]
    fn dump_round_trip() {
        let mut p = PathState::from_seed(5, 1);
        for k in 1..=8 {
            p.evaluate(k as f64 / 8.0).unwrap();
        }
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 9 * 16);
        let knots = read_dump(&buf[..]).unwrap();
        let q = PathState::from_knots(p.key(), &knots).unwrap();
        assert!(p.knots().zip(q.knots()).all(|(a, b)| a == b));
        assert!(read_dump(&buf[..15]).is_err());
    }

    #[test]
    fn midpoint_variance_matches_bridge_law() {
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|r| {
                let mut p = PathState::from_knots(StreamKey::new(21, r), &[(1.0, 0.0)]).unwrap();
                p.evaluate(0.5).unwrap()
            })
            .collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (m, se) = mean_se(&sq);
        assert!((m - 0.25).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn span_integral_variance() {
        let h: f64 = 1.0 / 64.0;
        let n = 100_000;
        let sq: Vec<f64> = (0..n)
            .map(|r| {
                let mut p = PathState::from_seed(22, r);
                p.evaluate(h).unwrap();
                p.span_time_integral(0.0, h).unwrap().powi(2)
            })
            .collect();
        let (m, se) = mean_se(&sq);
        assert!((m - h.powi(3) / 12.0).abs() < 3.0 * se);
    }

    #[test]
    fn split_integrals_match_direct_law() {
        let n = 100_000;
        let mut bridge_split = Vec::with_capacity(n as usize);
        let split: Vec<f64> = (0..n)
            .map(|r| {
                let mut p = PathState::from_seed(23, r);
                let w1 = p.evaluate(1.0).unwrap();
                p.span_time_integral(0.0, 1.0).unwrap();
                let wm = p.evaluate(0.5).unwrap();
                bridge_split.push(wm - 0.5 * w1);
                p.increment_integral(0.0, 0.5).unwrap() + p.increment_integral(0.5, 1.0).unwrap() + 0.5 * wm
            })
            .collect();
        let mut bridge_direct = Vec::with_capacity(n as usize);
        let direct: Vec<f64> = (0..n)
            .map(|r| {
                let mut p = PathState::from_seed(24, r);
                let w1 = p.evaluate(1.0).unwrap();
                let total = p.increment_integral(0.0, 1.0).unwrap();
                bridge_direct.push(p.evaluate(0.5).unwrap() - 0.5 * w1);
                total
            })
            .collect();
        let ks = ks_two_sample(&split, &direct);
        assert!(ks.p_value > 0.01, "D = {}, p = {}", ks.statistic, ks.p_value);
        let ks = ks_two_sample(&bridge_split, &bridge_direct);
        assert!(ks.p_value > 0.01, "D = {}, p = {}", ks.statistic, ks.p_value);
    }

    #[test]
    fn split_preserves_cached_total() {
        let mut p = PathState::from_seed(25, 0);
        p.evaluate(1.0).unwrap();
        let total = p.increment_integral(0.0, 1.0).unwrap();
        p.evaluate(0.3).unwrap();
        let parts = p.increment_integral(0.0, 0.3).unwrap()
            + p.increment_integral(0.3, 1.0).unwrap()
            + 0.7 * (p.peek(0.3).unwrap() - 0.0);
        assert!((parts - total).abs() < 1e-12, "{parts} vs {total}");
    }

    #[test]
    fn area_spans_intermediate_knots() {
        let mut p = PathState::from_seed(27, 0);
        p.evaluate(1.0).unwrap();
        let whole = p.area(0.0, 1.0).unwrap();
        assert_eq!(whole, p.increment_integral(0.0, 1.0).unwrap());
        for t in [0.5, 0.25, 0.8] {
            p.evaluate(t).unwrap();
        }
        assert!((p.area(0.0, 1.0).unwrap() - whole).abs() < 1e-12);
        let w = p.peek(0.25).unwrap();
        let inner = p.area(0.25, 0.8).unwrap();
        let expected = p.increment_integral(0.25, 0.5).unwrap() + p.increment_integral(0.5, 0.8).unwrap() + 0.3 * (p.peek(0.5).unwrap() - w);
        assert!((inner - expected).abs() < 1e-15);
        assert!(p.area(0.0, 0.3).is_err());
        assert!(p.area(0.5, 0.5).is_err());
    }

    #[test]
    fn adaptive_query_order_has_brownian_covariance() {
        let times = [0.25, 0.5, 0.75, 1.0];
        let n = 100_000u64;
        let samples: Vec<[f64; 4]> = (0..n)
            .map(|r| {
                let mut p = PathState::from_seed(26, r);
                let w1 = p.evaluate(1.0).unwrap();
                // the next site depends on the observed value
                let order: [f64; 3] = if w1 > 0.0 { [0.5, 0.25, 0.75] } else { [0.75, 0.25, 0.5] };
                for t in order {
                    p.evaluate(t).unwrap();
                }
                let mut out = [0.0; 4];
                for (o, &t) in out.iter_mut().zip(&times) {
                    *o = p.peek(t).unwrap();
                }
                out
            })
            .collect();
        for i in 0..4 {
            for j in i..4 {
                let prod: Vec<f64> = samples.iter().map(|s| s[i] * s[j]).collect();
                let (m, se) = mean_se(&prod);
                let target = times[i].min(times[j]);
                assert!((m - target).abs() < 3.0 * se, "cov({i},{j}) = {m} ± {se}");
            }
        }
    }
}
