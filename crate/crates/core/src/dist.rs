//! Return distributions.
//!
//! Two representations live here. [`CategoricalMeasure`] stores masses on a
//! fixed uniform [`SupportGrid`] and is what the solver keeps between
//! backups. [`AtomicMeasure`] stores arbitrary `(location, mass)` atoms and
//! is closed under affine maps and mixtures, so it is used for exact
//! arithmetic before a projection back onto the grid.
//!
//! Measures may be subnormalized. `mean` is always the unnormalized first
//! moment `Σ mass · location`, which keeps sums over observation branches
//! linear.

use crate::model::Belief;
use thiserror::Error;

/// Tolerance for "total mass is one".
pub const NORMALIZED_TOL: f64 = 1e-9;

/// Atoms closer than this are merged by [`AtomicMeasure::canonicalize`].
pub const MERGE_TOL: f64 = 1e-12;

/// Quantile segments thinner than this are ignored by the W∞ distance;
/// they come from rounding in the cumulative sums, not from real mass.
const SLIVER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("invalid support grid: {0}")]
    InvalidGrid(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measure is not normalized (total mass {0})")]
    UnnormalizedInput(f64),
    #[error("belief maps do not share the same key set")]
    KeyMismatch,
}

/// Uniformly spaced atom locations `z_i = z_min + i·Δz`, `i = 0..M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportGrid {
    z_min: f64,
    z_max: f64,
    num_atoms: usize,
    spacing: f64,
}

impl SupportGrid {
    pub fn new(z_min: f64, z_max: f64, num_atoms: usize) -> Result<Self, DistError> {
        if !z_min.is_finite() || !z_max.is_finite() || z_min >= z_max {
            return Err(DistError::InvalidGrid(format!(
                "need finite z_min < z_max, got [{z_min}, {z_max}]"
            )));
        }
        if num_atoms < 2 {
            return Err(DistError::InvalidGrid(format!(
                "need at least two atoms, got {num_atoms}"
            )));
        }
        Ok(Self {
            z_min,
            z_max,
            num_atoms,
            spacing: (z_max - z_min) / (num_atoms - 1) as f64,
        })
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn num_atoms(&self) -> usize {
        self.num_atoms
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[inline]
    pub fn atom(&self, i: usize) -> f64 {
        if i + 1 == self.num_atoms {
            self.z_max
        } else {
            self.z_min + i as f64 * self.spacing
        }
    }

    pub fn atoms(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.num_atoms).map(|i| self.atom(i))
    }

    pub fn contains(&self, z: f64) -> bool {
        (self.z_min..=self.z_max).contains(&z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub loc: f64,
    pub mass: f64,
}

impl Atom {
    pub fn new(loc: f64, mass: f64) -> Self {
        Self { loc, mass }
    }
}

/// Anything that can be read as a finite list of atoms.
pub trait Measure {
    fn atoms(&self) -> impl Iterator<Item = Atom> + '_;

    fn total_mass(&self) -> f64 {
        self.atoms().map(|a| a.mass).sum()
    }

    /// Unnormalized first moment.
    fn mean(&self) -> f64 {
        self.atoms().map(|a| a.mass * a.loc).sum()
    }

    fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= NORMALIZED_TOL
    }

    fn to_atomic(&self) -> AtomicMeasure {
        AtomicMeasure {
            atoms: self.atoms().collect(),
        }
    }
}

/// Masses on a [`SupportGrid`], with the total and mean cached.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalMeasure {
    grid: SupportGrid,
    masses: Vec<f64>,
    total_mass: f64,
    mean: f64,
}

impl CategoricalMeasure {
    pub fn new(grid: SupportGrid, masses: Vec<f64>) -> Result<Self, DistError> {
        if masses.len() != grid.num_atoms() {
            return Err(DistError::InvalidMeasure(format!(
                "{} masses for a {}-atom grid",
                masses.len(),
                grid.num_atoms()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(DistError::InvalidMeasure(format!("mass {m}")));
        }
        let total: f64 = masses.iter().sum();
        if total > 1.0 + NORMALIZED_TOL {
            return Err(DistError::InvalidMeasure(format!("total mass {total}")));
        }
        Ok(Self::from_parts(grid, masses))
    }

    fn from_parts(grid: SupportGrid, masses: Vec<f64>) -> Self {
        let total_mass = masses.iter().sum();
        let mean = masses
            .iter()
            .enumerate()
            .map(|(i, m)| m * grid.atom(i))
            .sum();
        Self {
            grid,
            masses,
            total_mass,
            mean,
        }
    }

    /// The zero measure.
    pub fn zero(grid: SupportGrid) -> Self {
        Self::from_parts(grid, vec![0.0; grid.num_atoms()])
    }

    /// Unit mass at `loc`, projected onto the grid.
    pub fn dirac(grid: SupportGrid, loc: f64) -> Self {
        let mut p = Projector::new(grid);
        p.add(loc, 1.0);
        p.finish()
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Atom-wise sum of two measures on the same grid.
    pub fn sum(&self, other: &CategoricalMeasure) -> CategoricalMeasure {
        assert_eq!(self.grid, other.grid, "measures live on different grids");
        let masses = self
            .masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| a + b)
            .collect();
        Self::from_parts(self.grid, masses)
    }

    /// Weighted mixture of measures sharing one grid; stays on the grid.
    pub fn mixture<'a>(
        grid: SupportGrid,
        components: impl IntoIterator<Item = (f64, &'a CategoricalMeasure)>,
    ) -> CategoricalMeasure {
        let mut masses = vec![0.0; grid.num_atoms()];
        for (w, mu) in components {
            assert_eq!(mu.grid, grid, "measures live on different grids");
            if w == 0.0 {
                continue;
            }
            for (acc, m) in masses.iter_mut().zip(&mu.masses) {
                *acc += w * m;
            }
        }
        Self::from_parts(grid, masses)
    }
}

impl Measure for CategoricalMeasure {
    fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, &m)| Atom::new(self.grid.atom(i), m))
    }

    fn total_mass(&self) -> f64 {
        self.total_mass
    }

    fn mean(&self) -> f64 {
        self.mean
    }
}

/// Atoms at arbitrary locations. Duplicate locations are allowed until
/// [`canonicalize`](Self::canonicalize) is called.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, DistError> {
        if let Some(a) = atoms
            .iter()
            .find(|a| !a.loc.is_finite() || !a.mass.is_finite() || a.mass < 0.0)
        {
            return Err(DistError::InvalidMeasure(format!(
                "atom {} @ {}",
                a.mass, a.loc
            )));
        }
        Ok(Self { atoms })
    }

    pub fn dirac(loc: f64) -> Self {
        Self {
            atoms: vec![Atom::new(loc, 1.0)],
        }
    }

    pub fn as_slice(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Sorted by location, zero masses dropped, atoms within [`MERGE_TOL`]
    /// of the first atom of their run merged into it.
    pub fn canonicalize(&self) -> AtomicMeasure {
        let mut sorted: Vec<Atom> = self
            .atoms
            .iter()
            .copied()
            .filter(|a| a.mass > 0.0)
            .collect();
        sorted.sort_by(|a, b| a.loc.total_cmp(&b.loc));
        let mut out: Vec<Atom> = Vec::with_capacity(sorted.len());
        for a in sorted {
            match out.last_mut() {
                Some(last) if a.loc - last.loc <= MERGE_TOL => last.mass += a.mass,
                _ => out.push(a),
            }
        }
        AtomicMeasure { atoms: out }
    }

    /// Compares canonical forms atom by atom.
    pub fn approx_eq(&self, other: &AtomicMeasure, tol: f64) -> bool {
        let a = self.canonicalize();
        let b = other.canonicalize();
        a.atoms.len() == b.atoms.len()
            && a.atoms
                .iter()
                .zip(&b.atoms)
                .all(|(x, y)| (x.loc - y.loc).abs() <= tol && (x.mass - y.mass).abs() <= tol)
    }
}

impl Measure for AtomicMeasure {
    fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.atoms.iter().copied()
    }
}

/// Pushforward of `μ` under `z ↦ scale·z + shift`.
pub fn affine<M: Measure>(mu: &M, scale: f64, shift: f64) -> AtomicMeasure {
    assert!(scale >= 0.0, "affine scale must be nonnegative");
    AtomicMeasure {
        atoms: mu
            .atoms()
            .map(|a| Atom::new(scale * a.loc + shift, a.mass))
            .collect(),
    }
}

/// Weighted union of atoms; total mass is `Σ wᵢ · mass(μᵢ)`.
pub fn mix<'a, M: Measure + 'a>(
    components: impl IntoIterator<Item = (f64, &'a M)>,
) -> AtomicMeasure {
    let mut atoms = Vec::new();
    for (w, mu) in components {
        assert!(w >= 0.0, "mixture weights must be nonnegative");
        if w == 0.0 {
            continue;
        }
        atoms.extend(mu.atoms().map(|a| Atom::new(a.loc, w * a.mass)));
    }
    AtomicMeasure { atoms }
}

/// Accumulates atoms into a grid by splitting each atom's mass between its
/// two neighbouring grid points, proportionally to proximity. Atoms outside
/// the grid go entirely to the nearest end.
#[derive(Debug, Clone)]
pub struct Projector {
    grid: SupportGrid,
    masses: Vec<f64>,
}

impl Projector {
    pub fn new(grid: SupportGrid) -> Self {
        Self {
            grid,
            masses: vec![0.0; grid.num_atoms()],
        }
    }

    #[inline]
    pub fn add(&mut self, loc: f64, mass: f64) {
        let g = &self.grid;
        let last = g.num_atoms - 1;
        if loc <= g.z_min {
            self.masses[0] += mass;
        } else if loc >= g.z_max {
            self.masses[last] += mass;
        } else {
            let pos = (loc - g.z_min) / g.spacing;
            let i = (pos.floor() as usize).min(last - 1);
            let upper = pos - i as f64;
            self.masses[i] += mass * (1.0 - upper);
            self.masses[i + 1] += mass * upper;
        }
    }

    pub fn finish(self) -> CategoricalMeasure {
        CategoricalMeasure::from_parts(self.grid, self.masses)
    }
}

/// The categorical projection Π_c onto `grid`.
pub fn project_categorical<M: Measure>(mu: &M, grid: SupportGrid) -> CategoricalMeasure {
    let mut p = Projector::new(grid);
    for a in mu.atoms() {
        p.add(a.loc, a.mass);
    }
    p.finish()
}

/// Order of a Wasserstein distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WassersteinOrder {
    Finite(f64),
    Infinity,
}

/// `W_p(μ, ν)` computed exactly through the quantile coupling: the two
/// cumulative-mass breakpoint sequences are merged and every segment pays
/// `|F_μ⁻¹(u) − F_ν⁻¹(u)|^p` over its length.
pub fn wasserstein<M: Measure, N: Measure>(
    mu: &M,
    nu: &N,
    order: WassersteinOrder,
) -> Result<f64, DistError> {
    if let WassersteinOrder::Finite(p) = order {
        assert!(p >= 1.0, "Wasserstein order must be at least 1");
    }
    for total in [mu.total_mass(), nu.total_mass()] {
        if (total - 1.0).abs() > NORMALIZED_TOL {
            return Err(DistError::UnnormalizedInput(total));
        }
    }
    let a = mu.to_atomic().canonicalize().atoms;
    let b = nu.to_atomic().canonicalize().atoms;

    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].mass, b[0].mass);
    let mut acc = 0.0_f64;
    loop {
        let step = ra.min(rb);
        let gap = (a[i].loc - b[j].loc).abs();
        match order {
            WassersteinOrder::Finite(1.0) => acc += step * gap,
            WassersteinOrder::Finite(p) => acc += step * gap.powf(p),
            WassersteinOrder::Infinity => {
                if step > SLIVER {
                    acc = acc.max(gap)
                }
            }
        }
        ra -= step;
        rb -= step;
        if ra <= 0.0 {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].mass;
        }
        if rb <= 0.0 {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].mass;
        }
    }
    Ok(match order {
        WassersteinOrder::Finite(1.0) => acc,
        WassersteinOrder::Finite(p) => acc.powf(1.0 / p),
        WassersteinOrder::Infinity => acc,
    })
}

/// A finite map from beliefs to measures. Keys are compared exactly.
#[derive(Debug, Clone)]
pub struct BeliefMap<M> {
    entries: Vec<(Belief, M)>,
}

impl<M> Default for BeliefMap<M> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
        }
    }
}

impl<M> BeliefMap<M> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces; returns the previous value for the key.
    pub fn insert(&mut self, key: Belief, value: M) -> Option<M> {
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => Some(std::mem::replace(v, value)),
            None => {
                self.entries.push((key, value));
                None
            }
        }
    }

    pub fn get(&self, key: &Belief) -> Option<&M> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn contains_key(&self, key: &Belief) -> bool {
        self.get(key).is_some()
    }

    pub fn keys(&self) -> impl Iterator<Item = &Belief> {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Belief, &M)> {
        self.entries.iter().map(|(k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<M> FromIterator<(Belief, M)> for BeliefMap<M> {
    fn from_iter<I: IntoIterator<Item = (Belief, M)>>(iter: I) -> Self {
        let mut map = Self::new();
        for (k, v) in iter {
            map.insert(k, v);
        }
        map
    }
}

/// `sup_b W_p(η(b), η'(b))` over a shared key set.
pub fn sup_wasserstein<M: Measure, N: Measure>(
    eta: &BeliefMap<M>,
    eta_prime: &BeliefMap<N>,
    order: WassersteinOrder,
) -> Result<f64, DistError> {
    if eta.len() != eta_prime.len() {
        return Err(DistError::KeyMismatch);
    }
    let mut sup = 0.0_f64;
    for (b, mu) in eta.iter() {
        let nu = eta_prime.get(b).ok_or(DistError::KeyMismatch)?;
        sup = sup.max(wasserstein(mu, nu, order)?);
    }
    Ok(sup)
}
