//! Marked point configurations, cubic observation windows and grid partitions.
//!
//! Positions live in `R^d`, marks in a finite set indexed `0..mark_count`.
//! All cubes are half-open boxes `[lower, lower + side)^d` so that grid cells
//! tile a window without double counting.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("configuration is not simple: points {first} and {second} share a position")]
    NotSimple { first: usize, second: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// A point with a position in `R^d` and a mark from a finite mark set.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPoint {
    pub position: Vec<f64>,
    pub mark: usize,
}

impl MarkedPoint {
    pub fn new(position: Vec<f64>, mark: usize) -> Self {
        MarkedPoint { position, mark }
    }

    pub fn unmarked(position: Vec<f64>) -> Self {
        MarkedPoint { position, mark: 0 }
    }
}

/// A finite simple configuration of marked points, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    coords: Vec<f64>,
    marks: Vec<usize>,
}

impl Configuration {
    pub fn empty(dim: usize) -> Self {
        Configuration {
            dim,
            coords: Vec::new(),
            marks: Vec::new(),
        }
    }

    /// Builds a configuration, rejecting duplicate positions (simplicity).
    pub fn from_points(dim: usize, points: &[MarkedPoint]) -> Result<Self, GeometryError> {
        let mut config = Configuration::empty(dim);
        for p in points {
            if p.position.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    got: p.position.len(),
                });
            }
            config.coords.extend_from_slice(&p.position);
            config.marks.push(p.mark);
        }
        config.check_simple()?;
        Ok(config)
    }

    fn check_simple(&self) -> Result<(), GeometryError> {
        // exact position equality only; n is small enough for the quadratic scan
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                if self.position(i) == self.position(j) {
                    return Err(GeometryError::NotSimple { first: i, second: j });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mark(&self, i: usize) -> usize {
        self.marks[i]
    }

    pub fn push(&mut self, position: &[f64], mark: usize) {
        debug_assert_eq!(position.len(), self.dim);
        self.coords.extend_from_slice(position);
        self.marks.push(mark);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        (0..self.len()).map(move |i| (self.position(i), self.mark(i)))
    }

    pub fn to_points(&self) -> Vec<MarkedPoint> {
        (0..self.len())
            .map(|i| MarkedPoint::new(self.position(i).to_vec(), self.mark(i)))
            .collect()
    }

    /// Projection of the configuration onto a region (half-open membership).
    pub fn restrict(&self, region: &Cube) -> Configuration {
        let mut out = Configuration::empty(self.dim);
        for (pos, mark) in self.iter() {
            if region.contains(pos) {
                out.push(pos, mark);
            }
        }
        out
    }

    /// The configuration with point `i` removed.
    pub fn without(&self, i: usize) -> Configuration {
        let mut out = Configuration::empty(self.dim);
        for j in 0..self.len() {
            if j != i {
                out.push(self.position(j), self.mark(j));
            }
        }
        out
    }

    /// Indices of the points lying in `region`.
    pub fn indices_in(&self, region: &Cube) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| region.contains(self.position(i)))
            .collect()
    }
}

/// Euclidean distance from `x` to the nearest point of `config` (marks
/// ignored); `+inf` when the configuration is empty.
pub fn nearest_distance(x: &[f64], config: &Configuration) -> f64 {
    let mut best = f64::INFINITY;
    for (pos, _) in config.iter() {
        let d2 = squared_distance(x, pos);
        if d2 < best {
            best = d2;
        }
    }
    best.sqrt()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Axis-aligned half-open cube `[lower, lower + side)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub lower: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn new(lower: Vec<f64>, side: f64) -> Self {
        Cube { lower, side }
    }

    pub fn centered(center: &[f64], side: f64) -> Self {
        let lower = center.iter().map(|c| c - side / 2.0).collect();
        Cube { lower, side }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.lower
            .iter()
            .zip(x.iter())
            .all(|(lo, xi)| *xi >= *lo && *xi < lo + self.side)
    }

    /// Whether `self` expanded by `margin` on every side stays inside `other`.
    pub fn expanded_within(&self, margin: f64, other: &Cube) -> bool {
        let eps = 1e-12 * self.side.max(other.side).max(1.0);
        self.lower
            .iter()
            .zip(other.lower.iter())
            .all(|(lo, olo)| lo - margin >= olo - eps && lo + self.side + margin <= olo + other.side + eps)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().map(|lo| lo + self.side / 2.0).collect()
    }
}

/// A cubic analysis window plus the guard margin on which data are observed
/// but only condition the computation.
#[derive(Debug, Clone)]
pub struct ObservationDomain {
    pub center: Vec<f64>,
    pub side: f64,
    pub guard: f64,
}

impl ObservationDomain {
    pub fn new(center: Vec<f64>, side: f64, guard: f64) -> Self {
        assert!(side > 0.0, "window side must be positive");
        assert!(guard >= 0.0, "guard must be nonnegative");
        ObservationDomain { center, side, guard }
    }

    /// Origin-centered window, the common case.
    pub fn centered(dim: usize, side: f64, guard: f64) -> Self {
        ObservationDomain::new(vec![0.0; dim], side, guard)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// The interior analysis window Λ.
    pub fn window(&self) -> Cube {
        Cube::centered(&self.center, self.side)
    }

    /// The extended window Λ ⊕ guard on which data are observed.
    pub fn extended(&self) -> Cube {
        Cube::centered(&self.center, self.side + 2.0 * self.guard)
    }
}

/// A partition of a window into congruent half-open cubes of side `δ_n`,
/// optionally organised into `|J|` congruent cubic subdomains.
#[derive(Debug, Clone)]
pub struct CellGrid {
    dim: usize,
    origin: Vec<f64>,
    cell_side: f64,
    cells_per_axis: usize,
    cells_per_sub_axis: usize,
    subs_per_axis: usize,
}

impl CellGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Realized cell side δ_n.
    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn subdomain_count(&self) -> usize {
        self.subs_per_axis.pow(self.dim as u32)
    }

    pub fn subdomains_per_axis(&self) -> usize {
        self.subs_per_axis
    }

    pub fn cells_per_subdomain_axis(&self) -> usize {
        self.cells_per_sub_axis
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Lattice coordinates of cell `k` (row-major flat index).
    pub fn lattice(&self, k: usize) -> Vec<usize> {
        let mut rem = k;
        let mut out = vec![0usize; self.dim];
        for slot in out.iter_mut().rev() {
            *slot = rem % self.cells_per_axis;
            rem /= self.cells_per_axis;
        }
        out
    }

    pub fn flat(&self, lattice: &[usize]) -> usize {
        lattice
            .iter()
            .fold(0usize, |k, &lat| k * self.cells_per_axis + lat)
    }

    pub fn cell_cube(&self, k: usize) -> Cube {
        let lat = self.lattice(k);
        let lower = self
            .origin
            .iter()
            .zip(lat.iter())
            .map(|(o, &l)| o + l as f64 * self.cell_side)
            .collect();
        Cube::new(lower, self.cell_side)
    }

    /// Subdomain label of cell `k`.
    pub fn subdomain_of(&self, k: usize) -> usize {
        self.lattice(k)
            .iter()
            .fold(0usize, |j, &lat| {
                j * self.subs_per_axis + lat / self.cells_per_sub_axis
            })
    }

    pub fn subdomain_cube(&self, j: usize) -> Cube {
        let sub_side = self.cell_side * self.cells_per_sub_axis as f64;
        let mut rem = j;
        let mut lower = vec![0.0; self.dim];
        for ax in (0..self.dim).rev() {
            let b = rem % self.subs_per_axis;
            rem /= self.subs_per_axis;
            lower[ax] = self.origin[ax] + b as f64 * sub_side;
        }
        Cube::new(lower, sub_side)
    }

    /// Flat cell index containing `x`, or `None` when outside the window.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut lat = vec![0usize; self.dim];
        for ax in 0..self.dim {
            let t = (x[ax] - self.origin[ax]) / self.cell_side;
            if t < 0.0 {
                return None;
            }
            let i = t.floor() as usize;
            if i >= self.cells_per_axis {
                return None;
            }
            lat[ax] = i;
        }
        Some(self.flat(&lat))
    }
}

/// Partitions the window of `domain` into `subdomains` congruent sub-cubes,
/// each gridded into cells of side `δ_n = L_sub / ⌊L_sub/δ⌋`, which satisfies
/// `δ ≤ δ_n ≤ 2δ` whenever `L_sub ≥ δ`.
pub fn partition_window(
    domain: &ObservationDomain,
    delta: f64,
    subdomains: usize,
) -> Result<CellGrid, GeometryError> {
    let dim = domain.dim();
    if delta <= 0.0 {
        return Err(GeometryError::InvalidGrid(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if subdomains == 0 {
        return Err(GeometryError::InvalidGrid("subdomains must be >= 1".into()));
    }
    let subs_per_axis = integer_dth_root(subdomains, dim).ok_or_else(|| {
        GeometryError::InvalidGrid(format!(
            "subdomain count {subdomains} is not a {dim}-th power"
        ))
    })?;
    let sub_side = domain.side / subs_per_axis as f64;
    if delta > sub_side * (1.0 + 1e-12) {
        return Err(GeometryError::InvalidGrid(format!(
            "delta {delta} exceeds the (sub)window side {sub_side}"
        )));
    }
    let k = (sub_side / delta).floor() as usize;
    let k = k.max(1);
    let cell_side = sub_side / k as f64;
    let window = domain.window();
    Ok(CellGrid {
        dim,
        origin: window.lower,
        cell_side,
        cells_per_axis: subs_per_axis * k,
        cells_per_sub_axis: k,
        subs_per_axis,
    })
}

fn integer_dth_root(n: usize, d: usize) -> Option<usize> {
    if n == 1 {
        return Some(1);
    }
    let guess = (n as f64).powf(1.0 / d as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&cand| cand > 0 && cand.pow(d as u32) == n)
}

/// Uniform-hash cell index for neighbor queries against a fixed configuration.
///
/// Supports `for_each_within` (all points with distance ≤ radius also yields
/// a few beyond) and `nearest_within`. Dimensions above 4 fall back to linear
/// scans.
pub struct NeighborIndex<'a> {
    config: &'a Configuration,
    cell: f64,
    buckets: std::collections::HashMap<[i32; 4], Vec<u32>>,
    brute: bool,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(config: &'a Configuration, cell: f64) -> Self {
        let brute = config.dim() > 4 || cell <= 0.0 || !cell.is_finite();
        let mut buckets: std::collections::HashMap<[i32; 4], Vec<u32>> =
            std::collections::HashMap::new();
        if !brute {
            for i in 0..config.len() {
                buckets
                    .entry(Self::key_of(config.position(i), cell))
                    .or_default()
                    .push(i as u32);
            }
        }
        NeighborIndex {
            config,
            cell,
            buckets,
            brute,
        }
    }

    fn key_of(pos: &[f64], cell: f64) -> [i32; 4] {
        let mut key = [0i32; 4];
        for (ax, x) in pos.iter().enumerate() {
            key[ax] = (x / cell).floor() as i32;
        }
        key
    }

    pub fn config(&self) -> &Configuration {
        self.config
    }

    /// Calls `f(index, position, mark)` for every point within `radius` of
    /// `x` (candidates beyond radius may also be yielded; callers re-check).
    pub fn for_each_candidate<F: FnMut(usize, &[f64], usize)>(
        &self,
        x: &[f64],
        radius: f64,
        mut f: F,
    ) {
        if self.brute {
            for i in 0..self.config.len() {
                f(i, self.config.position(i), self.config.mark(i));
            }
            return;
        }
        let reach = (radius / self.cell).ceil() as i64;
        let center = Self::key_of(x, self.cell);
        let dim = self.config.dim();
        let mut offsets = vec![-(reach as i32); dim];
        loop {
            let mut key = [0i32; 4];
            for ax in 0..dim {
                key[ax] = center[ax] + offsets[ax];
            }
            if let Some(bucket) = self.buckets.get(&key) {
                for &i in bucket {
                    let i = i as usize;
                    f(i, self.config.position(i), self.config.mark(i));
                }
            }
            // odometer over the (2·reach+1)^d neighborhood
            let mut ax = 0;
            loop {
                if ax == dim {
                    return;
                }
                offsets[ax] += 1;
                if offsets[ax] > reach as i32 {
                    offsets[ax] = -(reach as i32);
                    ax += 1;
                } else {
                    break;
                }
            }
        }
    }

    /// Exact nearest-neighbor distance within `radius`, skipping `exclude`;
    /// `None` when no point lies within `radius`.
    pub fn nearest_within(&self, x: &[f64], radius: f64, exclude: Option<usize>) -> Option<f64> {
        let mut best = f64::INFINITY;
        self.for_each_candidate(x, radius, |i, pos, _| {
            if Some(i) == exclude {
                return;
            }
            let d2 = squared_distance(x, pos);
            if d2 < best {
                best = d2;
            }
        });
        let d = best.sqrt();
        (d <= radius).then_some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> ObservationDomain {
        ObservationDomain::new(vec![0.5, 0.5], 1.0, 0.0)
    }

    #[test]
    fn restrict_empty_configuration() {
        let config = Configuration::empty(2);
        let region = Cube::new(vec![0.0, 0.0], 1.0);
        assert_eq!(config.restrict(&region).len(), 0);
    }

    #[test]
    fn restrict_identity_when_all_inside() {
        let config = Configuration::from_points(
            2,
            &[
                MarkedPoint::unmarked(vec![0.2, 0.2]),
                MarkedPoint::unmarked(vec![0.8, 0.3]),
            ],
        )
        .unwrap();
        let region = Cube::new(vec![0.0, 0.0], 1.0);
        assert_eq!(config.restrict(&region), config);
    }

    #[test]
    fn restrict_direct_membership() {
        let config = Configuration::from_points(
            2,
            &[
                MarkedPoint::unmarked(vec![0.25, 0.25]),
                MarkedPoint::unmarked(vec![0.75, 0.75]),
            ],
        )
        .unwrap();
        let region = Cube::new(vec![0.0, 0.0], 0.5);
        let inside = config.restrict(&region);
        assert_eq!(inside.len(), 1);
        assert_eq!(inside.position(0), &[0.25, 0.25]);
    }

    #[test]
    fn restrict_is_idempotent() {
        let config = Configuration::from_points(
            2,
            &[
                MarkedPoint::unmarked(vec![0.25, 0.25]),
                MarkedPoint::unmarked(vec![0.75, 0.75]),
            ],
        )
        .unwrap();
        let region = Cube::new(vec![0.1, 0.1], 0.5);
        let once = config.restrict(&region);
        assert_eq!(once.restrict(&region), once);
    }

    #[test]
    fn simplicity_rejected() {
        let err = Configuration::from_points(
            2,
            &[
                MarkedPoint::unmarked(vec![0.25, 0.25]),
                MarkedPoint::new(vec![0.25, 0.25], 1),
            ],
        );
        assert!(matches!(err, Err(GeometryError::NotSimple { .. })));
    }

    #[test]
    fn nearest_distance_empty_is_infinite() {
        let config = Configuration::empty(2);
        assert_eq!(nearest_distance(&[0.3, 0.4], &config), f64::INFINITY);
    }

    #[test]
    fn nearest_distance_pythagorean() {
        let config =
            Configuration::from_points(2, &[MarkedPoint::unmarked(vec![3.0, 4.0])]).unwrap();
        assert_eq!(nearest_distance(&[0.0, 0.0], &config), 5.0);
    }

    #[test]
    fn nearest_distance_takes_minimum() {
        let config = Configuration::from_points(
            2,
            &[
                MarkedPoint::unmarked(vec![1.0, 0.0]),
                MarkedPoint::unmarked(vec![0.0, 2.0]),
            ],
        )
        .unwrap();
        assert_eq!(nearest_distance(&[0.0, 0.0], &config), 1.0);
    }

    #[test]
    fn partition_exact_division() {
        let grid = partition_window(&unit_square(), 0.5, 1).unwrap();
        assert_eq!(grid.cell_count(), 4);
        assert!((grid.cell_side() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_rounds_delta_up() {
        // δ_n = 1/⌊1/0.3⌋ = 1/3 by the floor rule
        let grid = partition_window(&unit_square(), 0.3, 1).unwrap();
        assert_eq!(grid.cell_count(), 9);
        assert!((grid.cell_side() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn partition_single_cell() {
        let grid = partition_window(&unit_square(), 1.0, 1).unwrap();
        assert_eq!(grid.cell_count(), 1);
        assert!((grid.cell_side() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partition_rejects_bad_inputs() {
        assert!(partition_window(&unit_square(), 0.0, 1).is_err());
        assert!(partition_window(&unit_square(), 1.5, 1).is_err());
        assert!(partition_window(&unit_square(), 0.1, 3).is_err()); // not a square in d=2
    }

    #[test]
    fn partition_with_subdomains() {
        let domain = ObservationDomain::centered(2, 2.0, 0.1);
        let grid = partition_window(&domain, 0.1, 4).unwrap();
        assert_eq!(grid.subdomain_count(), 4);
        assert_eq!(grid.cell_count(), 400);
        assert!((grid.cell_side() - 0.1).abs() < 1e-12);
        // subdomain labels partition the cells evenly
        let mut counts = [0usize; 4];
        for k in 0..grid.cell_count() {
            counts[grid.subdomain_of(k)] += 1;
        }
        assert_eq!(counts, [100; 4]);
        // subdomain cubes contain exactly their cells
        for k in 0..grid.cell_count() {
            let j = grid.subdomain_of(k);
            let sub = grid.subdomain_cube(j);
            assert!(sub.contains(&grid.cell_cube(k).center()));
        }
    }

    #[test]
    fn cell_volumes_sum_to_window_volume() {
        for (delta, subs) in [(0.3, 1), (0.17, 4), (0.5, 9)] {
            let domain = ObservationDomain::centered(2, 2.0, 0.0);
            let grid = partition_window(&domain, delta, subs).unwrap();
            let total: f64 = (0..grid.cell_count())
                .map(|k| grid.cell_cube(k).volume())
                .sum();
            assert!(
                (total - domain.window().volume()).abs() / domain.window().volume() < 1e-12,
                "delta={delta} subs={subs} total={total}"
            );
        }
    }

    #[test]
    fn delta_n_bracketed() {
        // δ ≤ δ_n ≤ 2δ whenever the (sub)window side ≥ δ
        for delta in [0.07, 0.13, 0.29, 0.51, 0.99] {
            let grid = partition_window(&unit_square(), delta, 1).unwrap();
            assert!(grid.cell_side() >= delta - 1e-12);
            assert!(grid.cell_side() <= 2.0 * delta + 1e-12);
        }
    }

    #[test]
    fn neighbor_index_matches_brute_force() {
        let pts: Vec<MarkedPoint> = (0..60)
            .map(|i| {
                let t = i as f64;
                MarkedPoint::new(vec![(t * 0.37).fract(), (t * 0.71).fract()], i % 2)
            })
            .collect();
        let config = Configuration::from_points(2, &pts).unwrap();
        let index = NeighborIndex::new(&config, 0.1);
        for probe in [[0.5, 0.5], [0.05, 0.9], [0.99, 0.01]] {
            for radius in [0.05, 0.1, 0.25] {
                let mut got: Vec<usize> = Vec::new();
                index.for_each_candidate(&probe, radius, |i, pos, _| {
                    if squared_distance(&probe, pos) <= radius * radius {
                        got.push(i);
                    }
                });
                got.sort_unstable();
                let want: Vec<usize> = (0..config.len())
                    .filter(|&i| squared_distance(&probe, config.position(i)) <= radius * radius)
                    .collect();
                assert_eq!(got, want);
                let nd = nearest_distance(&probe, &config);
                let within = index.nearest_within(&probe, radius, None);
                if nd <= radius {
                    assert!((within.unwrap() - nd).abs() < 1e-12);
                } else {
                    assert!(within.is_none());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn grid_cells_tile_without_double_counting(
            xs in proptest::collection::vec((0.0f64..2.0, 0.0f64..2.0), 0..40),
            delta in 0.11f64..1.9,
        ) {
            let pts: Vec<MarkedPoint> = xs
                .iter()
                .map(|(x, y)| MarkedPoint::unmarked(vec![*x, *y]))
                .collect();
            let config = match Configuration::from_points(2, &pts) {
                Ok(c) => c,
                Err(_) => return Ok(()), // duplicate draw, not interesting
            };
            let domain = ObservationDomain::new(vec![1.0, 1.0], 2.0, 0.0);
            let grid = partition_window(&domain, delta, 1).unwrap();
            let total: usize = (0..grid.cell_count())
                .map(|k| config.restrict(&grid.cell_cube(k)).len())
                .sum();
            prop_assert_eq!(total, config.restrict(&domain.window()).len());
            // cell_of agrees with cube membership
            for (pos, _) in config.iter() {
                if let Some(k) = grid.cell_of(pos) {
                    prop_assert!(grid.cell_cube(k).contains(pos));
                }
            }
        }
    }
}
