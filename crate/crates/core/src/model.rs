//! Velocity sets, local occupancy states, conserved quantities and the
//! momentum-conserving collision structure.
//!
//! Velocity components are exact rationals so that the collision condition
//! `v + w = v' + w'` never depends on a floating-point tolerance.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported velocity set; a local state is stored in one `u64`.
pub const MAX_VELOCITIES: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Velocity {
    components: Vec<Rational64>,
}

impl Velocity {
    pub fn new(components: Vec<Rational64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::MalformedVelocitySet(
                "velocity must have at least one component".into(),
            ));
        }
        Ok(Self { components })
    }

    /// Build from `(numerator, denominator)` pairs.
    pub fn from_ratios(parts: &[(i64, i64)]) -> Result<Self> {
        let mut comps = Vec::with_capacity(parts.len());
        for &(n, d) in parts {
            if d == 0 {
                return Err(Error::MalformedVelocitySet(format!(
                    "zero denominator in {n}/{d}"
                )));
            }
            comps.push(Rational64::new(n, d));
        }
        Self::new(comps)
    }

    /// Parse a whitespace- or comma-separated list of rationals, e.g. `1/4 0`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut comps = Vec::new();
        for tok in text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            let r: Rational64 = tok.parse().map_err(|_| {
                Error::MalformedVelocitySet(format!("cannot parse `{tok}` as a rational"))
            })?;
            comps.push(r);
        }
        Self::new(comps)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Rational64] {
        &self.components
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.components.iter().map(rational_to_f64).collect()
    }

    fn reflected(&self, axis: usize) -> Self {
        let mut c = self.components.clone();
        c[axis] = -c[axis];
        Self { components: c }
    }

    fn swapped(&self, i: usize, j: usize) -> Self {
        let mut c = self.components.clone();
        c.swap(i, j);
        Self { components: c }
    }
}

impl fmt::Display for Velocity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn rational_to_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Ordered quadruple `(v, w, v_out, w_out)` of velocity indices with
/// `v + w = v_out + w_out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CollisionQuadruple {
    pub v: usize,
    pub w: usize,
    pub v_out: usize,
    pub w_out: usize,
}

impl CollisionQuadruple {
    pub fn reversed(&self) -> Self {
        Self {
            v: self.v_out,
            w: self.w_out,
            v_out: self.v,
            w_out: self.w,
        }
    }

    fn incoming_mask(&self) -> u64 {
        (1u64 << self.v) | (1u64 << self.w)
    }

    fn outgoing_mask(&self) -> u64 {
        (1u64 << self.v_out) | (1u64 << self.w_out)
    }
}

/// A reason a velocity set is not admissible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// A signed permutation of a member is absent from the set.
    MissingImage { source: Velocity, missing: Velocity },
    /// `|v_j| >= 1/d`, which would make the default jump law non-positive.
    ComponentTooLarge { velocity: Velocity, axis: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingImage { source, missing } => {
                write!(f, "missing {missing} (image of {source})")
            }
            Violation::ComponentTooLarge { velocity, axis } => {
                write!(f, "component {} of {velocity} has |v_j| >= 1/d", axis + 1)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct VelocitySet {
    dim: usize,
    velocities: Vec<Velocity>,
    floats: Vec<Vec<f64>>,
    quadruples: Vec<CollisionQuadruple>,
}

impl VelocitySet {
    pub fn new(velocities: Vec<Velocity>) -> Result<Self> {
        let first = velocities
            .first()
            .ok_or_else(|| Error::MalformedVelocitySet("empty velocity set".into()))?;
        let dim = first.dim();
        if let Some(bad) = velocities.iter().find(|v| v.dim() != dim) {
            return Err(Error::MalformedVelocitySet(format!(
                "velocity {bad} has dimension {} but the set has dimension {dim}",
                bad.dim()
            )));
        }
        if velocities.len() > MAX_VELOCITIES {
            return Err(Error::MalformedVelocitySet(format!(
                "{} velocities exceed the limit of {MAX_VELOCITIES}",
                velocities.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for v in &velocities {
            if !seen.insert(v.clone()) {
                return Err(Error::MalformedVelocitySet(format!("duplicate velocity {v}")));
            }
        }
        let floats = velocities.iter().map(Velocity::to_f64).collect();
        let quadruples = enumerate_quadruples(&velocities);
        Ok(Self {
            dim,
            velocities,
            floats,
            quadruples,
        })
    }

    /// The shipped default sets: `{±1/2}`, `{±(1/4,0), ±(0,1/4)}`, `{±e_j/6}`.
    pub fn default_for_dim(dim: usize) -> Result<Self> {
        let denom = match dim {
            1 => 2,
            2 => 4,
            3 => 6,
            _ => {
                return Err(Error::MalformedVelocitySet(format!(
                    "no default velocity set for d = {dim}"
                )))
            }
        };
        let mut vs = Vec::new();
        for axis in 0..dim {
            for sign in [1i64, -1] {
                let mut c = vec![Rational64::zero(); dim];
                c[axis] = Rational64::new(sign, denom);
                vs.push(Velocity::new(c)?);
            }
        }
        Self::new(vs)
    }

    /// Parse the text format: one velocity per line, components separated by
    /// whitespace or commas, `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut vs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v = Velocity::parse(line).map_err(|e| {
                Error::MalformedVelocitySet(format!("line {}: {e}", lineno + 1))
            })?;
            vs.push(v);
        }
        Self::new(vs)
    }

    /// Load a velocity file and reject it if validation reports violations.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let vs = Self::from_text(&text)?;
        let violations = validate_velocity_set(&vs);
        if violations.is_empty() {
            Ok(vs)
        } else {
            Err(Error::InvalidVelocitySet(violations))
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.velocities {
            let parts: Vec<String> = v.components.iter().map(|c| c.to_string()).collect();
            out.push_str(&parts.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities(&self) -> &[Velocity] {
        &self.velocities
    }

    pub fn velocity(&self, idx: usize) -> &Velocity {
        &self.velocities[idx]
    }

    /// Float components of velocity `idx`.
    pub fn components(&self, idx: usize) -> &[f64] {
        &self.floats[idx]
    }

    /// Component `k` of the extended vector `(1, v_1, ..., v_d)`.
    #[inline]
    pub fn extended(&self, idx: usize, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.floats[idx][k - 1]
        }
    }

    pub fn index_of(&self, v: &Velocity) -> Option<usize> {
        self.velocities.iter().position(|u| u == v)
    }

    pub fn quadruples(&self) -> &[CollisionQuadruple] {
        &self.quadruples
    }

    /// Common denominator of all components together with the integer
    /// numerators of the extended vectors `(1, v)` scaled by it (mass is
    /// scaled too, so every entry is an integer).
    pub fn integer_extended(&self) -> (i64, Vec<Vec<i64>>) {
        let mut den = 1i64;
        for v in &self.velocities {
            for c in &v.components {
                den = num_integer_lcm(den, *c.denom());
            }
        }
        let rows = self
            .velocities
            .iter()
            .map(|v| {
                let mut row = Vec::with_capacity(self.dim + 1);
                row.push(den);
                for c in &v.components {
                    row.push(c.numer() * (den / c.denom()));
                }
                row
            })
            .collect();
        (den, rows)
    }

    /// Dimension of the space of collision invariants, i.e. of functions
    /// `phi` on the velocity set with `phi(v)+phi(w) = phi(v')+phi(w')` for
    /// every quadruple. Mass and momentum always contribute `d + 1` when the
    /// extended velocities are linearly independent; a larger value signals
    /// spurious conserved quantities.
    pub fn collision_invariant_dimension(&self) -> usize {
        let n = self.len();
        let mut rows: Vec<Vec<Rational64>> = self
            .quadruples
            .iter()
            .map(|q| {
                let mut r = vec![Rational64::zero(); n];
                r[q.v] += 1;
                r[q.w] += 1;
                r[q.v_out] -= 1;
                r[q.w_out] -= 1;
                r
            })
            .collect();
        n - rational_rank(&mut rows, n)
    }
}

fn num_integer_lcm(a: i64, b: i64) -> i64 {
    fn gcd(mut a: i64, mut b: i64) -> i64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a.abs()
    }
    a / gcd(a, b) * b
}

fn rational_rank(rows: &mut [Vec<Rational64>], cols: usize) -> usize {
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        let p = rows[rank][col];
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let f = rows[r][col] / p;
                for c in col..cols {
                    let delta = rows[rank][c] * f;
                    rows[r][c] -= delta;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn enumerate_quadruples(vs: &[Velocity]) -> Vec<CollisionQuadruple> {
    let n = vs.len();
    let sum = |a: usize, b: usize| -> Vec<Rational64> {
        vs[a]
            .components
            .iter()
            .zip(&vs[b].components)
            .map(|(x, y)| x + y)
            .collect()
    };
    let mut out = Vec::new();
    for v in 0..n {
        for w in 0..n {
            if v == w {
                continue;
            }
            let s = sum(v, w);
            for v_out in 0..n {
                for w_out in 0..n {
                    if v_out == w_out || v_out == v || v_out == w || w_out == v || w_out == w {
                        continue;
                    }
                    if sum(v_out, w_out) == s {
                        out.push(CollisionQuadruple { v, w, v_out, w_out });
                    }
                }
            }
        }
    }
    out
}

/// Report every missing signed-permutation image and every component with
/// `|v_j| >= 1/d`. An empty result means the set is admissible.
pub fn validate_velocity_set(vs: &VelocitySet) -> Vec<Violation> {
    let mut violations = Vec::new();
    let present: BTreeSet<&Velocity> = vs.velocities.iter().collect();
    let mut reported = BTreeSet::new();
    for v in &vs.velocities {
        for image in orbit(v) {
            if !present.contains(&image) && reported.insert(image.clone()) {
                violations.push(Violation::MissingImage {
                    source: v.clone(),
                    missing: image,
                });
            }
        }
    }
    let bound = Rational64::new(1, vs.dim as i64);
    for v in &vs.velocities {
        for (axis, c) in v.components.iter().enumerate() {
            if c.abs() >= bound {
                violations.push(Violation::ComponentTooLarge {
                    velocity: v.clone(),
                    axis,
                });
            }
        }
    }
    violations
}

/// Closure of `{v}` under coordinate reflections and permutations.
fn orbit(v: &Velocity) -> BTreeSet<Velocity> {
    let d = v.dim();
    let mut seen = BTreeSet::new();
    let mut stack = vec![v.clone()];
    while let Some(u) = stack.pop() {
        if !seen.insert(u.clone()) {
            continue;
        }
        for axis in 0..d {
            stack.push(u.reflected(axis));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                stack.push(u.swapped(i, j));
            }
        }
    }
    seen
}

/// Occupancy `xi(v)` of every velocity at one site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalState {
    bits: u64,
    len: u8,
}

impl LocalState {
    pub fn empty(len: usize) -> Self {
        assert!(len <= MAX_VELOCITIES);
        Self { bits: 0, len: len as u8 }
    }

    pub fn full(len: usize) -> Self {
        Self::from_bits(low_mask(len), len)
    }

    pub fn from_bits(bits: u64, len: usize) -> Self {
        assert!(len <= MAX_VELOCITIES);
        Self {
            bits: bits & low_mask(len),
            len: len as u8,
        }
    }

    pub fn from_occupied(occupied: &[usize], len: usize) -> Self {
        let mut s = Self::empty(len);
        for &v in occupied {
            s.set(v, true);
        }
        s
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, v: usize) -> bool {
        self.bits >> v & 1 == 1
    }

    pub fn set(&mut self, v: usize, occupied: bool) {
        assert!(v < self.len as usize);
        if occupied {
            self.bits |= 1 << v;
        } else {
            self.bits &= !(1 << v);
        }
    }

    pub fn count(&self) -> u32 {
        self.bits.count_ones()
    }
}

pub(crate) fn low_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

fn check_size(xi: &LocalState, vs: &VelocitySet) -> Result<()> {
    if xi.len() != vs.len() {
        return Err(Error::SizeMismatch {
            expected: vs.len(),
            got: xi.len(),
        });
    }
    Ok(())
}

/// `(I_0, I_1, ..., I_d)`: mass and momentum of a local state.
pub fn conserved_vector(xi: &LocalState, vs: &VelocitySet) -> Result<Vec<f64>> {
    check_size(xi, vs)?;
    Ok(conserved_vector_bits(xi.bits, vs))
}

#[inline]
pub(crate) fn conserved_vector_bits(bits: u64, vs: &VelocitySet) -> Vec<f64> {
    let mut out = vec![0.0; vs.dim + 1];
    let mut b = bits;
    while b != 0 {
        let v = b.trailing_zeros() as usize;
        b &= b - 1;
        out[0] += 1.0;
        for (k, c) in vs.floats[v].iter().enumerate() {
            out[k + 1] += c;
        }
    }
    out
}

/// Exact rational version of [`conserved_vector`].
pub fn conserved_vector_exact(xi: &LocalState, vs: &VelocitySet) -> Result<Vec<Rational64>> {
    check_size(xi, vs)?;
    let mut out = vec![Rational64::zero(); vs.dim + 1];
    for v in 0..vs.len() {
        if xi.get(v) {
            out[0] += 1;
            for (k, c) in vs.velocities[v].components.iter().enumerate() {
                out[k + 1] += c;
            }
        }
    }
    Ok(out)
}

/// All non-trivial momentum-conserving quadruples, ordered lexicographically
/// by velocity index.
pub fn collision_quadruples(vs: &VelocitySet) -> Vec<CollisionQuadruple> {
    vs.quadruples.clone()
}

/// `xi(v) xi(w) (1 - xi(v')) (1 - xi(w'))`.
#[inline]
pub fn collision_rate(xi: &LocalState, q: &CollisionQuadruple) -> u8 {
    collision_allowed(xi.bits, q) as u8
}

#[inline]
pub(crate) fn collision_allowed(bits: u64, q: &CollisionQuadruple) -> bool {
    bits & q.incoming_mask() == q.incoming_mask() && bits & q.outgoing_mask() == 0
}

#[inline]
pub(crate) fn collide_bits(bits: u64, q: &CollisionQuadruple) -> u64 {
    (bits & !q.incoming_mask()) | q.outgoing_mask()
}

/// Move the pair `(v, w)` to `(v', w')`. Fails unless the collision is allowed.
pub fn apply_collision(xi: &LocalState, q: &CollisionQuadruple) -> Result<LocalState> {
    let n = xi.len();
    if [q.v, q.w, q.v_out, q.w_out].iter().any(|&i| i >= n) {
        return Err(Error::Contract(format!(
            "quadruple {q:?} indexes outside a {n}-velocity state"
        )));
    }
    if !collision_allowed(xi.bits, q) {
        return Err(Error::Contract(format!(
            "collision {q:?} has rate zero in state {:#b}",
            xi.bits
        )));
    }
    Ok(LocalState::from_bits(collide_bits(xi.bits, q), n))
}
