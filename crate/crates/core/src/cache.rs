//! Cache placement, user requests, cache incidence and interference sets.
//!
//! Users are addressed by flat index `j * K + l`. The incidence coefficient
//! `c(j, l, j', l')` is `true` ("1") when the content delivered to user
//! `(j, l)` is *not* held by user `(j', l')`.

use itertools::Itertools;
use num_integer::binomial;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::system_model::{PopularityProfile, UserId};

/// Per-cell, per-file caching probabilities `q_c[j][f]`.
pub type PlacementProbs = Vec<Vec<f64>>;

/// Which files every user holds under uncoded placement.
#[derive(Debug, Clone, PartialEq)]
pub struct UncodedCache {
    cells: usize,
    users: usize,
    files: usize,
    held: Vec<bool>,
}

impl UncodedCache {
    pub fn empty(cells: usize, users: usize, files: usize) -> Self {
        UncodedCache { cells, users, files, held: vec![false; cells * users * files] }
    }

    #[inline]
    pub fn holds(&self, j: usize, l: usize, file: usize) -> bool {
        self.held[(j * self.users + l) * self.files + file]
    }

    pub fn set(&mut self, j: usize, l: usize, file: usize, value: bool) {
        self.held[(j * self.users + l) * self.files + file] = value;
    }

    pub fn cached_count(&self, j: usize, l: usize) -> usize {
        let start = (j * self.users + l) * self.files;
        self.held[start..start + self.files].iter().filter(|&&h| h).count()
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn files(&self) -> usize {
        self.files
    }
}

/// Coded placement: each file is split into `C(K, t)` subfiles indexed by
/// the `t`-subsets of `{0, .., K-1}`; user `l` of every cell caches subfile
/// `T` iff `l ∈ T`. Subsets are represented as sorted index vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedPlacement {
    users: usize,
    t: usize,
}

impl CodedPlacement {
    pub fn new(users: usize, t: usize) -> Result<Self> {
        if t == 0 || t >= users {
            return Err(Error::config(format!("coded caching needs 1 <= t < K, got t = {t}, K = {users}")));
        }
        Ok(CodedPlacement { users, t })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn subfiles_per_file(&self) -> u128 {
        binomial(self.users as u128, self.t as u128)
    }

    pub fn cached_per_user(&self) -> u128 {
        binomial(self.users as u128 - 1, self.t as u128 - 1)
    }

    /// Fraction of each file that still has to be delivered, `1 - t/K`.
    pub fn delivered_fraction(&self) -> f64 {
        1.0 - self.t as f64 / self.users as f64
    }

    /// All subfile index sets in lexicographic order.
    pub fn subsets(&self) -> impl Iterator<Item = Vec<usize>> {
        (0..self.users).combinations(self.t)
    }

    pub fn holds(&self, user: usize, subset: &[usize]) -> bool {
        subset.binary_search(&user).is_ok()
    }

    /// Subfiles user `l` still needs, in lexicographic order.
    pub fn needed_subfiles(&self, user: usize) -> impl Iterator<Item = Vec<usize>> {
        self.subsets().filter(move |s| s.binary_search(&user).is_err())
    }

    /// Draw one needed subfile of `user` uniformly at random. Equivalent to
    /// the subfile delivered in a uniformly random slot of a uniformly
    /// random delivery permutation.
    pub fn random_needed_subfile<R: Rng + ?Sized>(&self, user: usize, rng: &mut R) -> Vec<usize> {
        let mut subset: Vec<usize> =
            index::sample(rng, self.users - 1, self.t).into_iter().map(|i| if i >= user { i + 1 } else { i }).collect();
        subset.sort_unstable();
        subset
    }
}

/// Cache contents of all users.
#[derive(Debug, Clone, PartialEq)]
pub enum CacheContents {
    /// No caching at all.
    Empty {
        cells: usize,
        users: usize,
    },
    Uncoded(UncodedCache),
    Coded(CodedPlacement),
}

/// One request per user plus, in coded mode, the subfile delivered in the
/// current slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestState {
    cells: usize,
    users: usize,
    files: Vec<usize>,
    subfiles: Vec<Vec<usize>>,
}

impl RequestState {
    pub fn from_files(cells: usize, users: usize, files: Vec<usize>) -> Result<Self> {
        if files.len() != cells * users {
            return Err(Error::domain("request vector has the wrong length"));
        }
        Ok(RequestState { cells, users, files, subfiles: Vec::new() })
    }

    #[inline]
    pub fn file(&self, j: usize, l: usize) -> usize {
        self.files[j * self.users + l]
    }

    pub fn files(&self) -> &[usize] {
        &self.files
    }

    /// Subfile delivered to `(j, l)` in the current slot (coded mode only).
    pub fn subfile(&self, j: usize, l: usize) -> Option<&[usize]> {
        self.subfiles.get(j * self.users + l).map(Vec::as_slice)
    }

    /// Pick, for every user, the subfile delivered in the current slot.
    pub fn select_subfiles<R: Rng + ?Sized>(&mut self, placement: &CodedPlacement, rng: &mut R) {
        self.subfiles =
            (0..self.cells * self.users).map(|u| placement.random_needed_subfile(u % self.users, rng)).collect();
    }

    pub fn set_subfiles(&mut self, subfiles: Vec<Vec<usize>>) -> Result<()> {
        if subfiles.len() != self.cells * self.users {
            return Err(Error::domain("subfile vector has the wrong length"));
        }
        self.subfiles = subfiles;
        Ok(())
    }

    /// Length (MBytes) of the content that must be delivered to `(j, l)`.
    pub fn delivered_length(&self, contents: &CacheContents, j: usize, l: usize, file_size: f64) -> f64 {
        match contents {
            CacheContents::Empty { .. } => file_size,
            CacheContents::Uncoded(cache) => {
                if cache.holds(j, l, self.file(j, l)) {
                    0.0
                } else {
                    file_size
                }
            }
            CacheContents::Coded(p) => p.delivered_fraction() * file_size,
        }
    }
}

/// Each user of cell `j` caches file `f` independently with probability
/// `q_c[j][f]`.
pub fn place_uncoded<R: Rng + ?Sized>(
    config: &SystemConfig,
    popularity: &PopularityProfile,
    placement: &PlacementProbs,
    rng: &mut R,
) -> Result<UncodedCache> {
    check_placement(config, popularity, placement)?;
    let (b, k, files) = (config.cells, config.users, popularity.files());
    let mut cache = UncodedCache::empty(b, k, files);
    for j in 0..b {
        for l in 0..k {
            for (f, &q) in placement[j].iter().enumerate() {
                if q >= 1.0 || (q > 0.0 && rng.random::<f64>() < q) {
                    cache.set(j, l, f, true);
                }
            }
        }
    }
    Ok(cache)
}

fn check_placement(config: &SystemConfig, popularity: &PopularityProfile, placement: &PlacementProbs) -> Result<()> {
    if placement.len() != config.cells || popularity.cells() != config.cells {
        return Err(Error::config("placement and popularity must have one row per cell"));
    }
    for (j, row) in placement.iter().enumerate() {
        if row.len() != popularity.files() {
            return Err(Error::config(format!("placement row {j} has {} entries", row.len())));
        }
        if row.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
            return Err(Error::config(format!("placement row {j} has entries outside [0, 1]")));
        }
        let expected: f64 = row.iter().sum();
        if expected > config.cache_size as f64 + 1e-9 {
            return Err(Error::config(format!(
                "cell {j} caches {expected:.4} files on average but L_u = {}",
                config.cache_size
            )));
        }
    }
    Ok(())
}

/// Cache the `cache_size` most popular files of each cell.
pub fn deterministic_placement(popularity: &PopularityProfile, cache_size: usize) -> PlacementProbs {
    popularity
        .rows()
        .iter()
        .map(|row| {
            let order: Vec<usize> =
                (0..row.len()).sorted_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b))).collect();
            let mut q = vec![0.0; row.len()];
            for &f in order.iter().take(cache_size) {
                q[f] = 1.0;
            }
            q
        })
        .collect()
}

/// Every file cached with probability `L_u / L_s`.
pub fn uniform_placement(config: &SystemConfig) -> PlacementProbs {
    let q = config.cache_size as f64 / config.library_size as f64;
    vec![vec![q; config.library_size]; config.cells]
}

/// Coded placement for the configured `K`, `L_u`, `L_s`.
pub fn place_coded(config: &SystemConfig) -> Result<CodedPlacement> {
    let num = config.cache_size * config.users;
    if !num.is_multiple_of(config.library_size) {
        return Err(Error::config(format!(
            "t = L_u*K/L_s = {}*{}/{} is not an integer",
            config.cache_size, config.users, config.library_size
        )));
    }
    CodedPlacement::new(config.users, num / config.library_size)
}

/// Draw one file request per user from its cell's popularity row.
pub fn draw_requests<R: Rng + ?Sized>(popularity: &PopularityProfile, users: usize, rng: &mut R) -> RequestState {
    let cells = popularity.cells();
    let cdfs: Vec<Vec<f64>> = popularity
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .scan(0.0, |acc, &q| {
                    *acc += q;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut files = Vec::with_capacity(cells * users);
    for cdf in &cdfs {
        let last = cdf.len() - 1;
        for _ in 0..users {
            let u: f64 = rng.random::<f64>() * cdf[last];
            let f = cdf.partition_point(|&c| c <= u).min(last);
            files.push(f);
        }
    }
    RequestState { cells, users, files, subfiles: Vec::new() }
}

/// Binary incidence tensor `c(j, l, j', l')`.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheIncidence {
    cells: usize,
    users: usize,
    c: Vec<bool>,
    active: Vec<usize>,
}

impl CacheIncidence {
    pub fn from_fn(cells: usize, users: usize, mut f: impl FnMut(usize, usize, usize, usize) -> bool) -> Self {
        let n = cells * users;
        let mut c = Vec::with_capacity(n * n);
        for j in 0..cells {
            for l in 0..users {
                for j2 in 0..cells {
                    for l2 in 0..users {
                        c.push(f(j, l, j2, l2));
                    }
                }
            }
        }
        let mut inc = CacheIncidence { cells, users, c, active: Vec::new() };
        inc.active = (0..cells).map(|j| (0..users).filter(|&l| inc.is_active(j, l)).count()).collect();
        inc
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn c(&self, j: usize, l: usize, j2: usize, l2: usize) -> bool {
        let n = self.cells * self.users;
        self.c[(j * self.users + l) * n + j2 * self.users + l2]
    }

    #[inline]
    pub fn is_active(&self, j: usize, l: usize) -> bool {
        self.c(j, l, j, l)
    }

    /// Number of active users `K̄_j` in cell `j`.
    pub fn active_count(&self, j: usize) -> usize {
        self.active[j]
    }

    pub fn total_active(&self) -> usize {
        self.active.iter().sum()
    }
}

/// Incidence of the current requests against the cache contents.
pub fn incidence(contents: &CacheContents, requests: &RequestState) -> Result<CacheIncidence> {
    let (b, k) = (requests.cells, requests.users);
    match contents {
        CacheContents::Empty { cells, users } => {
            check_shape(*cells, *users, b, k)?;
            Ok(CacheIncidence::from_fn(b, k, |_, _, _, _| true))
        }
        CacheContents::Uncoded(cache) => {
            check_shape(cache.cells, cache.users, b, k)?;
            Ok(CacheIncidence::from_fn(b, k, |j, l, j2, l2| !cache.holds(j2, l2, requests.file(j, l))))
        }
        CacheContents::Coded(placement) => {
            check_shape(b, placement.users, b, k)?;
            if requests.subfiles.len() != b * k {
                return Err(Error::logic("coded incidence needs the delivered subfiles of the current slot"));
            }
            Ok(CacheIncidence::from_fn(b, k, |j, l, _, l2| !placement.holds(l2, &requests.subfiles[j * k + l])))
        }
    }
}

fn check_shape(cells: usize, users: usize, b: usize, k: usize) -> Result<()> {
    if cells != b || users != k {
        Err(Error::domain("cache contents and requests disagree on B or K"))
    } else {
        Ok(())
    }
}

/// Interferer sets of a target user. All members are active and listed in
/// (cell, user) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterferenceSets {
    /// Active users whose content the target does not hold.
    pub u: Vec<UserId>,
    /// `u` split by serving cell.
    pub u_per_cell: Vec<Vec<UserId>>,
    /// Active users whose interference the target cancels.
    pub i: Vec<UserId>,
    /// `u` plus the target itself.
    pub v: Vec<UserId>,
    /// Active same-cell users lacking the target's content (ZF constraints).
    pub n: Vec<UserId>,
    /// Inter-cell interferers with a different pilot.
    pub d1: Vec<UserId>,
    /// Inter-cell interferers sharing the target's pilot.
    pub d2: Vec<UserId>,
    /// Members of `d1` that do not null towards the target's pilot.
    pub d3: Vec<UserId>,
    /// Members of `d1` that do.
    pub d4: Vec<UserId>,
}

impl InterferenceSets {
    pub fn n_n(&self) -> usize {
        self.n.len()
    }
}

/// `N_{b,k}`: active users of cell `b` other than `k` lacking `(b, k)`'s content.
pub fn zf_constraint_set(c: &CacheIncidence, b: usize, k: usize) -> Vec<UserId> {
    (0..c.users).filter(|&l| l != k && c.is_active(b, l) && c.c(b, k, b, l)).map(|l| UserId::new(b, l)).collect()
}

/// Whether `(j, k) ∈ N_{j, l}`.
#[inline]
fn in_constraint_set(c: &CacheIncidence, j: usize, l: usize, k: usize) -> bool {
    k != l && c.is_active(j, k) && c.c(j, l, j, k)
}

pub fn interference_sets(c: &CacheIncidence, target: UserId) -> InterferenceSets {
    let (b, k) = (target.cell, target.user);
    let mut sets = InterferenceSets { u_per_cell: vec![Vec::new(); c.cells], ..Default::default() };
    if !c.is_active(b, k) {
        return sets;
    }
    for j in 0..c.cells {
        for l in 0..c.users {
            if !c.is_active(j, l) {
                continue;
            }
            let id = UserId::new(j, l);
            if (j, l) == (b, k) {
                sets.v.push(id);
                continue;
            }
            if !c.c(j, l, b, k) {
                sets.i.push(id);
                continue;
            }
            sets.u.push(id);
            sets.v.push(id);
            sets.u_per_cell[j].push(id);
            if j != b {
                if l == k {
                    sets.d2.push(id);
                } else {
                    sets.d1.push(id);
                    if in_constraint_set(c, j, l, k) {
                        sets.d4.push(id);
                    } else {
                        sets.d3.push(id);
                    }
                }
            }
        }
    }
    sets.n = zf_constraint_set(c, b, k);
    sets
}

/// Activity and interference probabilities of random uncoded caching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachingProbabilities {
    /// `q_a[j]`: probability that a user of cell `j` is active.
    pub q_a: Vec<f64>,
    /// `q_i[b][j]`: probability that a user of cell `j` is active and
    /// interferes an active user of cell `b`.
    pub q_i: Vec<Vec<f64>>,
    /// `q_n[j]`: probability that a user of cell `j` is an active ZF
    /// constraint of an active same-cell user.
    pub q_n: Vec<f64>,
}

impl CachingProbabilities {
    /// The no-caching values (every probability equal to one).
    pub fn no_cache(cells: usize) -> Self {
        CachingProbabilities { q_a: vec![1.0; cells], q_i: vec![vec![1.0; cells]; cells], q_n: vec![1.0; cells] }
    }

    pub fn cells(&self) -> usize {
        self.q_a.len()
    }
}

pub fn uncoded_probabilities(
    popularity: &PopularityProfile,
    placement: &PlacementProbs,
) -> Result<CachingProbabilities> {
    let cells = popularity.cells();
    if placement.len() != cells || placement.iter().any(|r| r.len() != popularity.files()) {
        return Err(Error::domain("placement table does not match the popularity profile"));
    }
    // miss[j][f] = q_r (1 - q_c): request f and not hold it.
    let miss: Vec<Vec<f64>> =
        (0..cells).map(|j| popularity.row(j).iter().zip(&placement[j]).map(|(r, c)| r * (1.0 - c)).collect()).collect();
    let q_a: Vec<f64> = miss.iter().map(|m| m.iter().sum()).collect();

    let q_i = (0..cells)
        .map(|b| {
            (0..cells)
                .map(|j| {
                    (0..popularity.files())
                        .map(|f| {
                            let keep = 1.0 - placement[b][f];
                            let other = q_a[b] - miss[b][f];
                            miss[j][f] * (other * keep + miss[b][f])
                        })
                        .sum()
                })
                .collect()
        })
        .collect();

    let q_n = (0..cells)
        .map(|j| {
            (0..popularity.files())
                .map(|f| {
                    let keep = 1.0 - placement[j][f];
                    let other = q_a[j] - miss[j][f];
                    popularity.row(j)[f] * keep * keep * (other + popularity.row(j)[f])
                })
                .sum()
        })
        .collect();

    Ok(CachingProbabilities { q_a, q_i, q_n })
}

/// Interference probabilities of coded caching: `1` for users sharing the
/// target's index, `(K - t - 1) / (K - 1)` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodedProbabilities {
    pub users: usize,
    pub t: usize,
}

impl CodedProbabilities {
    pub fn p_other(&self) -> f64 {
        (self.users - self.t - 1) as f64 / (self.users - 1) as f64
    }

    pub fn p_i(&self, k: usize, l: usize) -> f64 {
        if k == l {
            1.0
        } else {
            self.p_other()
        }
    }

    pub fn p_n(&self, k: usize, l: usize) -> f64 {
        self.p_i(k, l)
    }
}

pub fn coded_probabilities(users: usize, t: usize) -> Result<CodedProbabilities> {
    if t == 0 || t >= users {
        return Err(Error::domain(format!("coded probabilities need 1 <= t <= K-1, got t = {t}, K = {users}")));
    }
    Ok(CodedProbabilities { users, t })
}
