use serde::{Deserialize, Serialize};

use crate::channel::NoiseSpec;
use crate::error::{invalid, Error, Result};
use crate::infotheory::{self, OmegaMoments};
use crate::stbc::{difference, Codebook};

pub const DEFAULT_REL_THRESHOLD: f64 = 0.15;

/// Pairwise separation measures. Larger always means better separated;
/// the outage-bound measures therefore return the negated probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// ‖Δ‖²_F
    Frobenius,
    /// det(ΔΔᴴ)
    Determinant,
    /// product of the smallest min(Nt, Nr) singular values of Δ
    SingularProduct,
    UbpopSbc,
    UbpopStbc,
    UbpopTvsbc,
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "frobenius" | "fn" => Measure::Frobenius,
            "determinant" | "det" => Measure::Determinant,
            "singular-product" | "sv" => Measure::SingularProduct,
            "ubpop-sbc" => Measure::UbpopSbc,
            "ubpop-stbc" => Measure::UbpopStbc,
            "ubpop-tvsbc" => Measure::UbpopTvsbc,
            other => return invalid(format!("unknown measure {other:?}")),
        })
    }
}

/// Operating point needed by the channel-dependent measures.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureContext {
    pub noise: Option<NoiseSpec>,
    /// Pairwise outage threshold, usually `q_from_rate(R_tot)`.
    pub q: Option<f64>,
    pub nr: usize,
    pub omega: Option<OmegaMoments>,
}

impl MeasureContext {
    pub fn antennas(nr: usize) -> Self {
        Self {
            nr,
            ..Self::default()
        }
    }

    fn outage_point(&self, m: Measure) -> Result<(NoiseSpec, f64)> {
        match (self.noise, self.q) {
            (Some(n), Some(q)) if self.nr > 0 => Ok((n, q)),
            _ => Err(Error::MissingContext(format!("{m:?}"))),
        }
    }
}

pub fn pair_distance(
    cb: &Codebook,
    i: usize,
    j: usize,
    measure: Measure,
    ctx: &MeasureContext,
) -> Result<f64> {
    let d = difference(cb, i, j);
    match measure {
        Measure::Frobenius => Ok(d.0.frobenius_sq()),
        Measure::Determinant => Ok(d.0.gram().det()?.re.max(0.0)),
        Measure::SingularProduct => {
            if ctx.nr == 0 {
                return Err(Error::MissingContext("SingularProduct".into()));
            }
            let sv = d.0.squared_singular_values();
            let rank_slots = d.0.rows().min(d.0.cols());
            // the min(L, Nt) largest eigenvalues of ΔᴴΔ are the singular values
            let singular = &sv[sv.len() - rank_slots..];
            let k = ctx.nr.min(cb.nt()).min(singular.len());
            Ok(singular[..k].iter().map(|v| v.sqrt()).product())
        }
        Measure::UbpopSbc => {
            let (n, q) = ctx.outage_point(measure)?;
            Ok(-infotheory::ubpop_sbc(&d, n, q, ctx.nr)?)
        }
        Measure::UbpopStbc => {
            let (n, q) = ctx.outage_point(measure)?;
            Ok(-infotheory::ubpop_stbc(&d, n, q, ctx.nr)?)
        }
        Measure::UbpopTvsbc => {
            let (n, q) = ctx.outage_point(measure)?;
            let omega = ctx
                .omega
                .as_ref()
                .ok_or_else(|| Error::MissingContext("UbpopTvsbc needs omega moments".into()))?;
            Ok(-infotheory::ubpop_tvsbc(&d, n, q, omega)?)
        }
    }
}

/// Dense symmetric matrix of pair distances (diagonal zero).
pub fn distance_matrix(cb: &Codebook, measure: Measure, ctx: &MeasureContext) -> Result<Vec<Vec<f64>>> {
    let n = cb.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = pair_distance(cb, i, j, measure, ctx)?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// Collapses near-equal distances: sorted ascending, each value joins its
/// predecessor's cluster when their relative gap is below `rel_threshold`,
/// and every cluster member takes the cluster's first value. A zero
/// threshold leaves the matrix untouched.
pub fn quantize_distances(d: &mut [Vec<f64>], rel_threshold: f64) {
    if rel_threshold <= 0.0 {
        return;
    }
    let n = d.len();
    let mut vals: Vec<f64> = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for (i, row) in d.iter().enumerate() {
        vals.extend_from_slice(&row[i + 1..]);
    }
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    // representative for each distinct value
    let mut reps = Vec::with_capacity(vals.len());
    let mut rep = f64::NAN;
    let mut prev = f64::NAN;
    for &v in &vals {
        let joins = !prev.is_nan() && {
            let scale = v.abs().max(prev.abs());
            scale == 0.0 || (v - prev).abs() / scale < rel_threshold
        };
        if !joins {
            rep = v;
        }
        reps.push(rep);
        prev = v;
    }
    for i in 0..n {
        for j in i + 1..n {
            let k = vals.binary_search_by(|x| x.total_cmp(&d[i][j])).expect("value present");
            d[i][j] = reps[k];
            d[j][i] = reps[k];
        }
    }
}

/// Bijection from B-bit labels to codebook indices. Level 1 is the most
/// significant label bit and is decoded first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetPartitionMap {
    pub perm: Vec<usize>,
    pub b: usize,
    pub measure: Measure,
    pub rel_threshold: f64,
}

impl SetPartitionMap {
    pub fn identity(b: usize) -> Self {
        Self {
            perm: (0..1 << b).collect(),
            b,
            measure: Measure::Frobenius,
            rel_threshold: 0.0,
        }
    }

    pub fn from_perm(perm: Vec<usize>, measure: Measure, rel_threshold: f64) -> Result<Self> {
        let n = perm.len();
        if !n.is_power_of_two() {
            return invalid(format!("label map of length {n} is not a power of two"));
        }
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return invalid("label map is not a bijection");
            }
        }
        Ok(Self {
            b: n.trailing_zeros() as usize,
            perm,
            measure,
            rel_threshold,
        })
    }

    /// Codebook index carrying `label`.
    #[inline]
    pub fn index(&self, label: usize) -> usize {
        self.perm[label]
    }

    /// Bit of `label` consumed by level `level` (1-based).
    #[inline]
    pub fn level_bit(&self, label: usize, level: usize) -> u8 {
        ((label >> (self.b - level)) & 1) as u8
    }

    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (label, &idx) in self.perm.iter().enumerate() {
            inv[idx] = label;
        }
        inv
    }
}

/// Bottom-up set merging. Stage `k` (0-based) pairs the current sets and
/// writes label bit `k`, which is consumed by level `B − k`; the first
/// merge therefore separates the best-protected bit.
pub fn set_merge_labeling(
    cb: &Codebook,
    measure: Measure,
    ctx: &MeasureContext,
    rel_threshold: f64,
) -> Result<SetPartitionMap> {
    if !(rel_threshold >= 0.0) {
        return invalid(format!("threshold must be non-negative, got {rel_threshold}"));
    }
    let mut d = distance_matrix(cb, measure, ctx)?;
    quantize_distances(&mut d, rel_threshold);
    let perm = merge_from_distances(d)?;
    SetPartitionMap::from_perm(perm, measure, rel_threshold)
}

fn merge_from_distances(mut dist: Vec<Vec<f64>>) -> Result<Vec<usize>> {
    let n = dist.len();
    if n == 0 || !n.is_power_of_two() {
        return invalid(format!("codebook size {n} is not a power of two"));
    }
    let b = n.trailing_zeros() as usize;
    let mut sets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut labels = vec![0usize; n];
    for stage in 0..b {
        let s = sets.len();
        let tau = (0..s)
            .map(|a| {
                (0..s)
                    .filter(|&c| c != a)
                    .map(|c| dist[a][c])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        let mut partner = vec![usize::MAX; s];
        let mut order = Vec::with_capacity(s / 2);
        for a in 0..s {
            if partner[a] != usize::MAX {
                continue;
            }
            let free = || (0..s).filter(|&c| c != a && partner[c] == usize::MAX);
            let nearest_above = free()
                .filter(|&c| dist[a][c] >= tau)
                .min_by(|&x, &y| dist[a][x].total_cmp(&dist[a][y]).then(x.cmp(&y)));
            let c = match nearest_above {
                Some(c) => c,
                // nothing left at distance τ: take the farthest free set
                None => free()
                    .max_by(|&x, &y| dist[a][x].total_cmp(&dist[a][y]).then(y.cmp(&x)))
                    .expect("even number of sets"),
            };
            partner[a] = c;
            partner[c] = a;
            order.push((a, c));
        }
        for &(_, second) in &order {
            for &m in &sets[second] {
                labels[m] |= 1 << stage;
            }
        }
        let next: Vec<Vec<f64>> = order
            .iter()
            .map(|&(a1, a2)| {
                order
                    .iter()
                    .map(|&(c1, c2)| {
                        if (a1, a2) == (c1, c2) {
                            0.0
                        } else {
                            dist[a1][c1].min(dist[a1][c2]).min(dist[a2][c1]).min(dist[a2][c2])
                        }
                    })
                    .collect()
            })
            .collect();
        sets = order
            .iter()
            .map(|&(a, c)| {
                let mut m = sets[a].clone();
                m.extend_from_slice(&sets[c]);
                m
            })
            .collect();
        dist = next;
    }
    let mut perm = vec![0; n];
    for (idx, &label) in labels.iter().enumerate() {
        perm[label] = idx;
    }
    Ok(perm)
}

/// For each level b, the smallest distance between two symbols that agree
/// on levels 1..b−1 and differ on level b.
pub fn level_protection(spm: &SetPartitionMap, dist: &[Vec<f64>]) -> Vec<f64> {
    let n = spm.perm.len();
    (1..=spm.b)
        .map(|level| {
            let shift = spm.b - level;
            let mut best = f64::INFINITY;
            for x in 0..n {
                for y in x + 1..n {
                    let same_prefix = (x >> (shift + 1)) == (y >> (shift + 1));
                    let differ = ((x >> shift) & 1) != ((y >> shift) & 1);
                    if same_prefix && differ {
                        best = best.min(dist[spm.index(x)][spm.index(y)]);
                    }
                }
            }
            best
        })
        .collect()
}
